//! The `pcsampling` command-line tool.
//!
//! Data (records, samples) goes to files named with `--out`, reports go to
//! standard output, and a run manifest with input checksums and phase
//! timings goes to standard error.

use std::fmt::Write as _;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::coverage::{coverage_grouped, fault_covered, CoverageOptions, FaultSpec};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::extract::{extract_tree, write_records, LinePcRecord};
use crate::formats::{
    implicit_model, read_conditions, read_dimacs, read_faults, read_sample_csv, write_sample_csv,
};
use crate::logic::{FeatureModel, Origin, SampleMode};
use crate::sampler::{random_sample, sample_grouped, SamplerOptions, DEFAULT_INTERACTION_CAP};
use crate::transform::{
    filter_unknown, preprocess_capped, Grouping, PcUniverse, RawCondition, UniverseMode,
    DEFAULT_CLAUSE_CAP,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_CAP: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "pcsampling",
    version,
    about = "Presence-condition extraction, t-wise sampling and coverage"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the presence condition of every line of every C file below ROOT.
    Extract {
        root: PathBuf,
        /// Glob over root-relative paths to skip (repeatable).
        #[arg(long)]
        exclude: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a t-wise presence-condition sample and write it as CSV.
    Sample {
        #[command(flatten)]
        universe: UniverseArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Shuffle the universe order with the seed before sampling.
        #[arg(long)]
        shuffle: bool,
        #[arg(long, default_value_t = DEFAULT_INTERACTION_CAP)]
        max_interactions: u128,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report t-wise coverage of a sample over a universe.
    Coverage {
        #[command(flatten)]
        universe: UniverseArgs,
        #[arg(long)]
        sample: PathBuf,
        /// Number of uncovered interactions to list.
        #[arg(long, default_value_t = 100)]
        max_uncovered: usize,
        #[arg(long)]
        json: bool,
    },
    /// Check which fault conditions a sample covers.
    Faults {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        sample: PathBuf,
        /// Lines of `<id>\t<formula>`.
        #[arg(long)]
        faults: PathBuf,
    },
    /// Write N random valid configurations as CSV.
    Random {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct UniverseArgs {
    /// DIMACS feature model. Without it, every name in the conditions is an
    /// unconstrained feature.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Presence-condition list (extraction output or bare formulas).
    #[arg(long, conflicts_with = "src")]
    pcs: Option<PathBuf>,
    /// Source tree to extract conditions from in the same run.
    #[arg(long)]
    src: Option<PathBuf>,
    /// Exclusion globs for --src.
    #[arg(long)]
    exclude: Vec<String>,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    t: u32,
    #[arg(long, value_enum, default_value_t = ModeArg::Pc)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = GroupArg::None)]
    group: GroupArg,
    /// Per-query satisfiability timeout in seconds.
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Pc,
    Fm,
    Concrete,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GroupArg {
    None,
    File,
    Folder,
}

impl From<ModeArg> for UniverseMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Pc => UniverseMode::Pc,
            ModeArg::Fm => UniverseMode::Fm,
            ModeArg::Concrete => UniverseMode::Concrete,
        }
    }
}

impl From<GroupArg> for Grouping {
    fn from(g: GroupArg) -> Self {
        match g {
            GroupArg::None => Grouping::None,
            GroupArg::File => Grouping::File,
            GroupArg::Folder => Grouping::Folder,
        }
    }
}

impl GroupArg {
    fn as_str(self) -> &'static str {
        match self {
            GroupArg::None => "none",
            GroupArg::File => "file",
            GroupArg::Folder => "folder",
        }
    }
}

/// Provenance of one run, printed to standard error.
#[derive(Debug, Default)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<(String, PathBuf, String)>,
    pub settings: Vec<(String, String)>,
    pub phases: Vec<(String, Duration)>,
    pub results: Vec<(String, String)>,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            ..Default::default()
        }
    }

    fn setting(&mut self, key: &str, value: impl ToString) {
        self.settings.push((key.to_string(), value.to_string()));
    }

    fn result(&mut self, key: &str, value: impl ToString) {
        self.results.push((key.to_string(), value.to_string()));
    }

    fn timed<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let value = f();
        self.phases.push((phase.to_string(), start.elapsed()));
        value
    }

    /// Reads a whole input file and records its checksum.
    fn input(&mut self, role: &str, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let digest = hex::encode(Sha256::digest(&bytes));
        self.inputs
            .push((role.to_string(), path.to_path_buf(), digest));
        Ok(bytes)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command {}", self.command);
        for (role, path, digest) in &self.inputs {
            let _ = writeln!(out, "input {role} {} sha256 {digest}", path.display());
        }
        for (k, v) in &self.settings {
            let _ = writeln!(out, "{k} {v}");
        }
        for (phase, elapsed) in &self.phases {
            let _ = writeln!(out, "phase {phase} {:.6}s", elapsed.as_secs_f64());
        }
        for (k, v) in &self.results {
            let _ = writeln!(out, "{k} {v}");
        }
        out
    }
}

/// Maps an error to the documented exit status.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::InteractionCap { .. } | Error::BlowUp { .. } => EXIT_CAP,
        _ => EXIT_INPUT,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses arguments and runs the command; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let mut stdout = std::io::stdout().lock();
    let mut stderr = std::io::stderr().lock();
    run(cli.command, &mut stdout, &mut stderr)
}

/// Runs one command with explicit output streams.
pub fn run(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let name = match &command {
        Command::Extract { .. } => "extract",
        Command::Sample { .. } => "sample",
        Command::Coverage { .. } => "coverage",
        Command::Faults { .. } => "faults",
        Command::Random { .. } => "random",
    };
    let mut manifest = RunManifest::new(name);
    let outcome = match command {
        Command::Extract { root, exclude, out } => {
            cmd_extract(&root, &exclude, &out, &mut manifest, stderr)
        }
        Command::Sample {
            universe,
            seed,
            shuffle,
            max_interactions,
            out,
        } => cmd_sample(
            &universe,
            seed,
            shuffle,
            max_interactions,
            &out,
            &mut manifest,
            stderr,
        ),
        Command::Coverage {
            universe,
            sample,
            max_uncovered,
            json,
        } => cmd_coverage(
            &universe,
            &sample,
            max_uncovered,
            json,
            &mut manifest,
            stdout,
            stderr,
        ),
        Command::Faults {
            model,
            sample,
            faults,
        } => cmd_faults(&model, &sample, &faults, &mut manifest, stdout, stderr),
        Command::Random {
            model,
            n,
            seed,
            out,
        } => cmd_random(&model, n, seed, &out, &mut manifest),
    };
    let code = match outcome {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    };
    let _ = stderr.write_all(manifest.render().as_bytes());
    let _ = stdout.flush();
    code
}

fn cmd_extract(
    root: &Path,
    exclude: &[String],
    out: &Path,
    manifest: &mut RunManifest,
    stderr: &mut dyn Write,
) -> Result<i32> {
    let tree = manifest.timed("extract", || extract_tree(root, exclude))?;
    let mut buf = Vec::new();
    write_records(&tree.records, &mut buf).map_err(|e| Error::io(out, e))?;
    write_file(out, &buf)?;
    for w in &tree.warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    for e in &tree.errors {
        let _ = writeln!(stderr, "error: {e}");
    }
    manifest.setting("root", root.display());
    manifest.result("files", tree.files);
    manifest.result("records", tree.records.len());
    manifest.result("warnings", tree.warnings.len());
    manifest.result("errors", tree.errors.len());
    Ok(if tree.errors.is_empty() {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    })
}

fn records_to_raw(records: Vec<LinePcRecord>) -> Vec<RawCondition> {
    let mut out: Vec<RawCondition> = Vec::new();
    for r in records {
        if let Some(prev) = out.last_mut() {
            let origin = prev
                .origin
                .as_mut()
                .expect("extracted records have origins");
            if prev.formula == r.formula && origin.path == r.path && origin.last_line + 1 == r.line
            {
                origin.last_line = r.line;
                continue;
            }
        }
        out.push(RawCondition {
            origin: Some(Origin {
                path: r.path,
                first_line: r.line,
                last_line: r.line,
            }),
            formula: r.formula,
        });
    }
    out
}

/// Everything needed to enumerate interactions.
struct Loaded {
    model: FeatureModel,
    universe: PcUniverse,
}

fn load_universe(
    args: &UniverseArgs,
    manifest: &mut RunManifest,
    stderr: &mut dyn Write,
) -> Result<Loaded> {
    let mode: UniverseMode = args.mode.into();
    let raws = if let Some(src) = &args.src {
        let tree = manifest.timed("extract", || extract_tree(src, &args.exclude))?;
        for w in &tree.warnings {
            let _ = writeln!(stderr, "warning: {w}");
        }
        if let Some(e) = tree.errors.into_iter().next() {
            return Err(e);
        }
        manifest.setting("src", src.display());
        records_to_raw(tree.records)
    } else if let Some(pcs) = &args.pcs {
        let bytes = manifest.input("pcs", pcs)?;
        read_conditions(&mut bytes.as_slice(), &pcs.display().to_string())?
    } else if mode == UniverseMode::Fm {
        Vec::new()
    } else {
        return Err(Error::parse(
            "arguments",
            "--pcs or --src is required unless --mode fm",
        ));
    };

    let model = match &args.model {
        Some(path) => {
            let bytes = manifest.input("model", path)?;
            read_dimacs(
                &mut BufReader::new(bytes.as_slice()),
                &path.display().to_string(),
            )?
        }
        None => implicit_model(raws.iter().map(|r| &r.formula))?,
    };

    // names missing from the model: warn and treat their conjuncts as true
    let mut unknown: Vec<String> = Vec::new();
    let raws: Vec<RawCondition> = raws
        .into_iter()
        .map(|r| {
            let (formula, missing) = filter_unknown(&r.formula, &model);
            for m in missing {
                if !unknown.contains(&m) {
                    unknown.push(m);
                }
            }
            RawCondition {
                formula,
                origin: r.origin,
            }
        })
        .collect();
    if !unknown.is_empty() {
        let _ = writeln!(
            stderr,
            "warning: {} names not in the feature model were filtered: {}",
            unknown.len(),
            unknown.join(", ")
        );
    }

    let grouping: Grouping = args.group.into();
    let universe = manifest.timed("preprocess", || {
        preprocess_capped(&raws, &model, mode, grouping, DEFAULT_CLAUSE_CAP)
    })?;
    manifest.setting("t", args.t);
    manifest.setting("mode", mode.as_str());
    manifest.setting("group", args.group.as_str());
    manifest.result("features", model.len());
    manifest.result("raw_conditions", raws.len());
    manifest.result("universe", universe.len());
    Ok(Loaded { model, universe })
}

fn timeout(args: &UniverseArgs) -> Result<Duration> {
    Duration::try_from_secs_f64(args.timeout)
        .map_err(|_| Error::parse("--timeout", "expected a non-negative number of seconds"))
}

fn sample_mode(mode: ModeArg) -> SampleMode {
    match mode {
        ModeArg::Pc => SampleMode::Pc,
        ModeArg::Fm => SampleMode::Fm,
        ModeArg::Concrete => SampleMode::Concrete,
    }
}

fn cmd_sample(
    args: &UniverseArgs,
    seed: u64,
    shuffle: bool,
    max_interactions: u128,
    out: &Path,
    manifest: &mut RunManifest,
    stderr: &mut dyn Write,
) -> Result<i32> {
    let loaded = load_universe(args, manifest, stderr)?;
    manifest.setting("seed", seed);
    let options = SamplerOptions {
        seed,
        shuffle_universe: shuffle,
        interaction_cap: max_interactions,
        clause_cap: DEFAULT_CLAUSE_CAP,
        timeout: timeout(args)?,
    };
    let t = args.t as usize;
    let sample = manifest.timed("sample", || {
        sample_grouped(&loaded.universe, &loaded.model, t, &options)
    })?;
    let mut buf = Vec::new();
    write_sample_csv(&sample, &loaded.model, &mut buf)?;
    write_file(out, &buf)?;
    manifest.result("size", sample.len());
    manifest.result("model_sha256", &sample.model_hash);
    Ok(EXIT_OK)
}

fn cmd_coverage(
    args: &UniverseArgs,
    sample_path: &Path,
    max_uncovered: usize,
    json: bool,
    manifest: &mut RunManifest,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32> {
    let loaded = load_universe(args, manifest, stderr)?;
    let bytes = manifest.input("sample", sample_path)?;
    let t = args.t as usize;
    let sample = read_sample_csv(
        &mut bytes.as_slice(),
        &loaded.model,
        t,
        sample_mode(args.mode),
        &sample_path.display().to_string(),
    )?;
    let options = CoverageOptions {
        uncovered_cap: max_uncovered,
        clause_cap: DEFAULT_CLAUSE_CAP,
        timeout: timeout(args)?,
    };
    let report = manifest.timed("coverage", || {
        coverage_grouped(&sample, &loaded.universe, &loaded.model, t, &options)
    })?;
    let text = if json {
        report.to_json(&loaded.model) + "\n"
    } else {
        report.to_text(&loaded.model)
    };
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))?;
    Ok(EXIT_OK)
}

fn load_model(path: &Path, manifest: &mut RunManifest) -> Result<FeatureModel> {
    let bytes = manifest.input("model", path)?;
    read_dimacs(&mut bytes.as_slice(), &path.display().to_string())
}

fn cmd_faults(
    model_path: &Path,
    sample_path: &Path,
    faults_path: &Path,
    manifest: &mut RunManifest,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32> {
    let model = load_model(model_path, manifest)?;
    let bytes = manifest.input("sample", sample_path)?;
    let sample = read_sample_csv(
        &mut bytes.as_slice(),
        &model,
        1,
        SampleMode::Concrete,
        &sample_path.display().to_string(),
    )?;
    let bytes = manifest.input("faults", faults_path)?;
    let faults = read_faults(&mut bytes.as_slice(), &faults_path.display().to_string())?;

    let (mut covered, mut uncovered, mut skipped) = (0usize, 0usize, 0usize);
    let mut report = String::new();
    for (id, formula) in faults {
        match resolve_fault(&id, &formula, &model) {
            Ok(fault) => {
                let hit = fault_covered(&sample, &fault);
                if hit {
                    covered += 1;
                } else {
                    uncovered += 1;
                }
                let verdict = if hit { "Yes" } else { "No" };
                let _ = writeln!(
                    report,
                    "fault {id} degree {} covered {verdict}",
                    fault.degree
                );
            }
            Err(e) => {
                skipped += 1;
                let _ = writeln!(stderr, "warning: skipping fault {id}: {e}");
            }
        }
    }
    let _ = writeln!(report, "Yes {covered}");
    let _ = writeln!(report, "No {uncovered}");
    let _ = writeln!(report, "skipped {skipped}");
    stdout
        .write_all(report.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))?;
    Ok(EXIT_OK)
}

/// A fault whose every name is a model feature. Faults mentioning unknown
/// names are rejected rather than weakened, since dropping a conjunct would
/// make the fault easier to cover than it really is.
fn resolve_fault(id: &str, formula: &Expr, model: &FeatureModel) -> Result<FaultSpec> {
    let unknown: Vec<String> = formula
        .atoms()
        .into_iter()
        .filter(|a| model.feature(a).is_none())
        .map(str::to_string)
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownFeatures(unknown));
    }
    let condition = crate::transform::to_pc(formula, model, DEFAULT_CLAUSE_CAP)?;
    FaultSpec::new(id, condition)
}

fn cmd_random(
    model_path: &Path,
    n: usize,
    seed: u64,
    out: &Path,
    manifest: &mut RunManifest,
) -> Result<i32> {
    let model = load_model(model_path, manifest)?;
    manifest.setting("seed", seed);
    manifest.setting("n", n);
    let sample = manifest.timed("sample", || random_sample(&model, n, seed))?;
    let mut buf = Vec::new();
    write_sample_csv(&sample, &model, &mut buf)?;
    write_file(out, &buf)?;
    manifest.result("size", sample.len());
    Ok(EXIT_OK)
}
