//! Python bindings: feature models, presence conditions, universes,
//! sampling, coverage, fault checks and extraction.

use std::path::PathBuf;

use pcsampling::coverage::{self, CoverageOptions, FaultSpec};
use pcsampling::expr::Expr;
use pcsampling::formats;
use pcsampling::sampler::{self, SamplerOptions};
use pcsampling::transform::{self, Grouping, RawCondition, UniverseMode, DEFAULT_CLAUSE_CAP};
use pcsampling::{Clause, Configuration, Literal, SampleMode};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(err: pcsampling::Error) -> PyErr {
    match err {
        pcsampling::Error::Io { .. } => PyOSError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn literal(value: i32) -> PyResult<Literal> {
    if value == 0 {
        return Err(PyValueError::new_err("literal 0 is not allowed"));
    }
    Ok(Literal::from_dimacs(value))
}

fn parse_mode(mode: &str) -> PyResult<UniverseMode> {
    match mode {
        "pc" => Ok(UniverseMode::Pc),
        "fm" => Ok(UniverseMode::Fm),
        "concrete" => Ok(UniverseMode::Concrete),
        other => Err(PyValueError::new_err(format!(
            "mode must be pc, fm or concrete, not {other:?}"
        ))),
    }
}

fn parse_grouping(group: &str) -> PyResult<Grouping> {
    match group {
        "none" => Ok(Grouping::None),
        "file" => Ok(Grouping::File),
        "folder" => Ok(Grouping::Folder),
        other => Err(PyValueError::new_err(format!(
            "group must be none, file or folder, not {other:?}"
        ))),
    }
}

/// A CNF feature model with named features.
#[pyclass(name = "FeatureModel", frozen)]
struct PyFeatureModel {
    inner: pcsampling::FeatureModel,
}

#[pymethods]
impl PyFeatureModel {
    /// `clauses` are lists of DIMACS literals (1-based feature indices,
    /// negative for negation).
    #[new]
    #[pyo3(signature = (names, clauses = Vec::new()))]
    fn new(names: Vec<String>, clauses: Vec<Vec<i32>>) -> PyResult<Self> {
        let clauses = clauses
            .into_iter()
            .map(|c| c.into_iter().map(literal).collect::<PyResult<Clause>>())
            .collect::<PyResult<Vec<_>>>()?;
        let inner = pcsampling::FeatureModel::new(names, clauses).map_err(to_py)?;
        Ok(PyFeatureModel { inner })
    }

    #[staticmethod]
    fn from_dimacs(text: &str) -> PyResult<Self> {
        let inner = formats::read_dimacs(&mut text.as_bytes(), "<dimacs>").map_err(to_py)?;
        Ok(PyFeatureModel { inner })
    }

    fn to_dimacs(&self) -> String {
        let mut buf = Vec::new();
        formats::write_dimacs(&self.inner, &mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("DIMACS output is UTF-8")
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    #[getter]
    fn clauses(&self) -> Vec<Vec<i32>> {
        self.inner
            .dependencies()
            .iter()
            .map(|c| c.literals().iter().map(|l| l.to_dimacs()).collect())
            .collect()
    }

    fn checksum(&self) -> String {
        self.inner.checksum()
    }

    /// True when the configuration (DIMACS literals) extends to a valid one.
    fn valid(&self, literals: Vec<i32>) -> PyResult<bool> {
        let config = configuration(literals)?;
        pcsampling::sat::valid(&config, &self.inner).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "FeatureModel({} features, {} clauses)",
            self.inner.len(),
            self.inner.dependencies().len()
        )
    }
}

fn configuration(literals: Vec<i32>) -> PyResult<Configuration> {
    let lits = literals
        .into_iter()
        .map(literal)
        .collect::<PyResult<Vec<_>>>()?;
    Configuration::from_literals(lits).map_err(to_py)
}

/// A presence condition in disjunctive normal form.
#[pyclass(name = "PresenceCondition", frozen)]
struct PyPresenceCondition {
    inner: pcsampling::PresenceCondition,
    names: Vec<String>,
}

impl PyPresenceCondition {
    fn wrap(inner: pcsampling::PresenceCondition, model: &pcsampling::FeatureModel) -> Self {
        PyPresenceCondition {
            inner,
            names: model.names().to_vec(),
        }
    }

    fn model(&self) -> pcsampling::FeatureModel {
        pcsampling::FeatureModel::unconstrained(self.names.clone()).expect("names were valid")
    }
}

#[pymethods]
impl PyPresenceCondition {
    /// Parses `!`/`&&`/`||` formula text over the model's feature names.
    #[staticmethod]
    fn parse(model: PyRef<'_, PyFeatureModel>, text: &str) -> PyResult<Self> {
        let expr = Expr::parse(text).map_err(to_py)?;
        let pc = transform::to_pc(&expr, &model.inner, DEFAULT_CLAUSE_CAP).map_err(to_py)?;
        Ok(Self::wrap(pc, &model.inner))
    }

    /// Clauses as lists of DIMACS literals.
    #[getter]
    fn clauses(&self) -> Vec<Vec<i32>> {
        self.inner
            .clauses()
            .iter()
            .map(|c| c.literals().iter().map(|l| l.to_dimacs()).collect())
            .collect()
    }

    fn is_tautology(&self) -> bool {
        self.inner.is_tautology()
    }

    fn is_contradiction(&self) -> bool {
        self.inner.is_contradiction()
    }

    fn negate(&self) -> PyResult<Self> {
        let inner = transform::negate(&self.inner).map_err(to_py)?;
        Ok(PyPresenceCondition {
            inner,
            names: self.names.clone(),
        })
    }

    fn conjoin(&self, other: PyRef<'_, PyPresenceCondition>) -> PyResult<Self> {
        let inner =
            transform::conjoin(&[self.inner.clone(), other.inner.clone()]).map_err(to_py)?;
        Ok(PyPresenceCondition {
            inner,
            names: self.names.clone(),
        })
    }

    fn equivalent(&self, other: PyRef<'_, PyPresenceCondition>) -> PyResult<bool> {
        transform::equivalent(&self.inner, &other.inner).map_err(to_py)
    }

    /// True when some clause is contained in the configuration.
    fn active(&self, literals: Vec<i32>) -> PyResult<bool> {
        Ok(pcsampling::active(&self.inner, &configuration(literals)?))
    }

    fn __eq__(&self, other: PyRef<'_, PyPresenceCondition>) -> bool {
        self.inner == other.inner
    }

    fn __str__(&self) -> String {
        self.inner.display(&self.model()).to_string()
    }

    fn __repr__(&self) -> String {
        format!("PresenceCondition({:?})", self.__str__())
    }
}

/// The deduplicated list of conditions that sampling iterates over.
#[pyclass(name = "Universe", frozen)]
struct PyUniverse {
    inner: pcsampling::PcUniverse,
    names: Vec<String>,
}

#[pymethods]
impl PyUniverse {
    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode().as_str()
    }

    #[getter]
    fn entries(&self) -> Vec<PyPresenceCondition> {
        self.inner
            .entries()
            .iter()
            .map(|e| PyPresenceCondition {
                inner: e.clone(),
                names: self.names.clone(),
            })
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Builds a universe from formula strings. `origins` optionally gives a
/// source path per formula, used for grouping.
#[pyfunction]
#[pyo3(signature = (model, formulas, mode = "pc", group = "none", origins = None))]
fn preprocess(
    model: PyRef<'_, PyFeatureModel>,
    formulas: Vec<String>,
    mode: &str,
    group: &str,
    origins: Option<Vec<String>>,
) -> PyResult<PyUniverse> {
    if let Some(o) = &origins {
        if o.len() != formulas.len() {
            return Err(PyValueError::new_err(
                "origins must match formulas in length",
            ));
        }
    }
    let mut raws = Vec::with_capacity(formulas.len());
    for (i, text) in formulas.iter().enumerate() {
        let formula = Expr::parse(text).map_err(to_py)?;
        let origin = origins.as_ref().map(|o| pcsampling::Origin {
            path: PathBuf::from(&o[i]),
            first_line: i + 1,
            last_line: i + 1,
        });
        raws.push(RawCondition { formula, origin });
    }
    let inner = transform::preprocess(
        &raws,
        &model.inner,
        parse_mode(mode)?,
        parse_grouping(group)?,
    )
    .map_err(to_py)?;
    Ok(PyUniverse {
        inner,
        names: model.inner.names().to_vec(),
    })
}

/// An ordered list of complete configurations.
#[pyclass(name = "Sample", frozen)]
struct PySample {
    inner: pcsampling::Sample,
}

#[pymethods]
impl PySample {
    /// Reads the `+`/`-` CSV format against a model.
    #[staticmethod]
    #[pyo3(signature = (model, text, t = 2))]
    fn from_csv(model: PyRef<'_, PyFeatureModel>, text: &str, t: usize) -> PyResult<Self> {
        let inner = formats::read_sample_csv(
            &mut text.as_bytes(),
            &model.inner,
            t,
            SampleMode::Pc,
            "<csv>",
        )
        .map_err(to_py)?;
        Ok(PySample { inner })
    }

    fn to_csv(&self, model: PyRef<'_, PyFeatureModel>) -> PyResult<String> {
        let mut buf = Vec::new();
        formats::write_sample_csv(&self.inner, &model.inner, &mut buf).map_err(to_py)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }

    /// Configurations as lists of DIMACS literals.
    #[getter]
    fn configurations(&self) -> Vec<Vec<i32>> {
        self.inner
            .configurations
            .iter()
            .map(|c| c.literals().map(|l| l.to_dimacs()).collect())
            .collect()
    }

    #[getter]
    fn t(&self) -> usize {
        self.inner.t
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode.as_str()
    }

    #[getter]
    fn model_hash(&self) -> String {
        self.inner.model_hash.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Greedy t-wise sample covering every satisfiable interaction of the
/// universe; grouped universes are sampled group by group.
#[pyfunction]
#[pyo3(signature = (universe, model, t = 2, seed = 0, shuffle = false))]
fn sample(
    py: Python<'_>,
    universe: PyRef<'_, PyUniverse>,
    model: PyRef<'_, PyFeatureModel>,
    t: usize,
    seed: u64,
    shuffle: bool,
) -> PyResult<PySample> {
    if t == 0 {
        return Err(PyValueError::new_err("t must be positive"));
    }
    let options = SamplerOptions {
        seed,
        shuffle_universe: shuffle,
        ..SamplerOptions::default()
    };
    let (u, m) = (&universe.inner, &model.inner);
    let inner = py
        .detach(|| sampler::sample_grouped(u, m, t, &options))
        .map_err(to_py)?;
    Ok(PySample { inner })
}

/// `n` random valid configurations.
#[pyfunction]
#[pyo3(signature = (model, n, seed = 0))]
fn random_sample(model: PyRef<'_, PyFeatureModel>, n: usize, seed: u64) -> PyResult<PySample> {
    let inner = sampler::random_sample(&model.inner, n, seed).map_err(to_py)?;
    Ok(PySample { inner })
}

#[pyclass(name = "CoverageReport", frozen)]
struct PyCoverageReport {
    inner: coverage::CoverageReport,
    model: pcsampling::FeatureModel,
}

#[pymethods]
impl PyCoverageReport {
    #[getter]
    fn t(&self) -> usize {
        self.inner.t
    }

    #[getter]
    fn total_valid_interactions(&self) -> u64 {
        self.inner.total_valid_interactions
    }

    #[getter]
    fn covered_interactions(&self) -> u64 {
        self.inner.covered_interactions
    }

    #[getter]
    fn ratio(&self) -> f64 {
        self.inner.ratio()
    }

    /// Combined conditions of the listed uncovered interactions.
    #[getter]
    fn uncovered(&self) -> Vec<String> {
        self.inner
            .uncovered
            .iter()
            .map(|u| u.combined.display(&self.model).to_string())
            .collect()
    }

    fn to_text(&self) -> String {
        self.inner.to_text(&self.model)
    }

    fn to_json(&self) -> String {
        self.inner.to_json(&self.model)
    }

    fn __repr__(&self) -> String {
        format!(
            "CoverageReport(t={}, covered={}, total={}, ratio={:.6})",
            self.inner.t,
            self.inner.covered_interactions,
            self.inner.total_valid_interactions,
            self.inner.ratio()
        )
    }
}

#[pyfunction(name = "coverage")]
#[pyo3(signature = (sample, universe, model, t = 2, max_uncovered = 100))]
fn py_coverage(
    py: Python<'_>,
    sample: PyRef<'_, PySample>,
    universe: PyRef<'_, PyUniverse>,
    model: PyRef<'_, PyFeatureModel>,
    t: usize,
    max_uncovered: usize,
) -> PyResult<PyCoverageReport> {
    if t == 0 {
        return Err(PyValueError::new_err("t must be positive"));
    }
    let options = CoverageOptions {
        uncovered_cap: max_uncovered,
        ..CoverageOptions::default()
    };
    let (s, u, m) = (&sample.inner, &universe.inner, &model.inner);
    let inner = py
        .detach(|| coverage::coverage_grouped(s, u, m, t, &options))
        .map_err(to_py)?;
    Ok(PyCoverageReport {
        inner,
        model: model.inner.clone(),
    })
}

/// The enumeration oracle for [`py_coverage`]; small models only.
#[pyfunction]
#[pyo3(signature = (sample, universe, model, t = 2))]
fn brute_force_coverage(
    sample: PyRef<'_, PySample>,
    universe: PyRef<'_, PyUniverse>,
    model: PyRef<'_, PyFeatureModel>,
    t: usize,
) -> PyResult<PyCoverageReport> {
    let inner = coverage::brute_force_coverage(&sample.inner, &universe.inner, &model.inner, t)
        .map_err(to_py)?;
    Ok(PyCoverageReport {
        inner,
        model: model.inner.clone(),
    })
}

/// Whether some configuration of the sample activates the fault formula.
#[pyfunction]
fn fault_covered(
    sample: PyRef<'_, PySample>,
    model: PyRef<'_, PyFeatureModel>,
    formula: &str,
) -> PyResult<bool> {
    let expr = Expr::parse(formula).map_err(to_py)?;
    let pc = transform::to_pc(&expr, &model.inner, DEFAULT_CLAUSE_CAP).map_err(to_py)?;
    let fault = FaultSpec::new("fault", pc).map_err(to_py)?;
    Ok(coverage::fault_covered(&sample.inner, &fault))
}

/// Line records `(path, line, formula)` of every C file below `root`.
#[pyfunction]
#[pyo3(signature = (root, exclude = Vec::new()))]
fn extract(
    py: Python<'_>,
    root: PathBuf,
    exclude: Vec<String>,
) -> PyResult<Vec<(String, usize, String)>> {
    let tree = py
        .detach(|| pcsampling::extract_tree(&root, &exclude))
        .map_err(to_py)?;
    if let Some(err) = tree.errors.into_iter().next() {
        return Err(to_py(err));
    }
    Ok(tree
        .records
        .into_iter()
        .map(|r| {
            (
                r.path.to_string_lossy().into_owned(),
                r.line,
                r.formula.to_string(),
            )
        })
        .collect())
}

#[pymodule]
#[pyo3(name = "pcsampling")]
fn pcsampling_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFeatureModel>()?;
    m.add_class::<PyPresenceCondition>()?;
    m.add_class::<PyUniverse>()?;
    m.add_class::<PySample>()?;
    m.add_class::<PyCoverageReport>()?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(random_sample, m)?)?;
    m.add_function(wrap_pyfunction!(py_coverage, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_coverage, m)?)?;
    m.add_function(wrap_pyfunction!(fault_covered, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    Ok(())
}
