//! Line-level presence conditions from C-preprocessor conditionals.
//!
//! Every physical line gets the conjunction of the branch conditions of the
//! `#if` blocks that enclose it. Macros are not expanded and includes are not
//! followed. Conditions that are not Boolean combinations of macro names
//! (comparisons, arithmetic, function-like macros) are assumed to be true and
//! reported as warnings.

use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use globset::{Glob, GlobSet, GlobSetBuilder};
use rayon::prelude::*;
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::expr::Expr;

/// File extensions considered C sources or headers.
pub const SOURCE_EXTENSIONS: [&str; 4] = ["c", "h", "cxx", "hxx"];

/// The presence condition of one physical source line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinePcRecord {
    pub path: PathBuf,
    /// 1-based.
    pub line: usize,
    pub formula: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtractWarning {
    pub path: PathBuf,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ExtractWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.path.display(), self.line, self.message)
    }
}

/// Result of extracting a whole tree: per-file failures do not stop the run.
#[derive(Debug, Default)]
pub struct TreeExtraction {
    pub records: Vec<LinePcRecord>,
    pub warnings: Vec<ExtractWarning>,
    pub errors: Vec<Error>,
    pub files: usize,
}

/// A parsed `#if` argument. `exact` is false when some part of the text was
/// not understood and replaced by true; such a condition cannot be negated
/// meaningfully.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Condition {
    pub expr: Expr,
    pub exact: bool,
}

/// Parses the argument of `#if`/`#elif`. When the whole text is not
/// understood, its top-level `&&` operands are tried one by one and only the
/// unparseable ones become true.
pub fn parse_condition(text: &str) -> Condition {
    if let Some(expr) = Expr::parse_cpp(text) {
        return Condition { expr, exact: true };
    }
    let parts = split_top_level_and(text);
    let expr = if parts.len() > 1 {
        Expr::and(
            parts
                .iter()
                .map(|p| Expr::parse_cpp(p).unwrap_or(Expr::Const(true))),
        )
    } else {
        Expr::Const(true)
    };
    Condition { expr, exact: false }
}

fn split_top_level_and(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut depth = 0i32;
    let mut parts = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => depth += 1,
            b')' => depth -= 1,
            b'&' if depth == 0 && bytes.get(i + 1) == Some(&b'&') => {
                parts.push(&text[start..i]);
                start = i + 2;
                i += 1;
            }
            _ => {}
        }
        i += 1;
    }
    if depth != 0 {
        return vec![text];
    }
    parts.push(&text[start..]);
    parts
}

/// One `#if` ... `#endif` chain.
struct Frame {
    /// Conditions of the branches seen so far; `None` marks one that could
    /// not be parsed exactly.
    prior: Vec<Option<Expr>>,
    current: Expr,
    seen_else: bool,
}

impl Frame {
    fn negated_prior(&self) -> Vec<Expr> {
        self.prior
            .iter()
            .flatten()
            .map(|e| Expr::not(e.clone()))
            .collect()
    }
}

/// Removes comments, keeping string and character literals intact. Block
/// comment state carries over between lines.
fn strip_comments(line: &str, in_block: &mut bool) -> String {
    let chars: Vec<char> = line.chars().collect();
    let mut out = String::with_capacity(line.len());
    let mut i = 0;
    while i < chars.len() {
        if *in_block {
            if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                *in_block = false;
                out.push(' ');
                i += 2;
            } else {
                i += 1;
            }
            continue;
        }
        match (chars[i], chars.get(i + 1)) {
            ('/', Some('/')) => break,
            ('/', Some('*')) => {
                *in_block = true;
                i += 2;
            }
            (quote @ ('"' | '\''), _) => {
                out.push(quote);
                i += 1;
                while i < chars.len() {
                    let c = chars[i];
                    out.push(c);
                    i += 1;
                    if c == '\\' {
                        if let Some(&escaped) = chars.get(i) {
                            out.push(escaped);
                            i += 1;
                        }
                    } else if c == quote {
                        break;
                    }
                }
            }
            (c, _) => {
                out.push(c);
                i += 1;
            }
        }
    }
    out
}

/// Splits a directive body into its keyword and argument.
fn directive(code: &str) -> Option<(&str, &str)> {
    let rest = code.trim_start().strip_prefix('#')?.trim_start();
    let end = rest
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .unwrap_or(rest.len());
    Some((&rest[..end], rest[end..].trim()))
}

fn identifier(text: &str) -> Option<&str> {
    let name = text.split_whitespace().next()?;
    let valid = name
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    valid.then_some(name)
}

/// Extracts records from source text; `path` is only used for labelling.
pub fn extract_source(
    path: &Path,
    source: &str,
) -> Result<(Vec<LinePcRecord>, Vec<ExtractWarning>)> {
    let lines: Vec<&str> = source.lines().collect();
    let mut records = Vec::with_capacity(lines.len());
    let mut warnings = Vec::new();
    let mut frames: Vec<Frame> = Vec::new();
    let mut in_block = false;
    let context = |frames: &[Frame]| Expr::and(frames.iter().map(|f| f.current.clone()));

    let mut i = 0;
    while i < lines.len() {
        let start = i;
        let starts_in_comment = in_block;
        let mut code = strip_comments(lines[i], &mut in_block);
        let is_directive = !starts_in_comment && code.trim_start().starts_with('#');
        if is_directive {
            // join backslash continuations
            while code.trim_end().ends_with('\\') && i + 1 < lines.len() {
                let trimmed = code.trim_end();
                code = trimmed[..trimmed.len() - 1].to_string();
                i += 1;
                code.push(' ');
                code.push_str(&strip_comments(lines[i], &mut in_block));
            }
        }
        // directive lines belong to the context around their own chain
        let parsed = if is_directive { directive(&code) } else { None };
        let closes_chain = parsed
            .is_some_and(|(k, _)| matches!(k, "elif" | "elifdef" | "elifndef" | "else" | "endif"));
        let pc = if closes_chain && !frames.is_empty() {
            context(&frames[..frames.len() - 1])
        } else {
            context(&frames)
        };
        for line in start..=i {
            records.push(LinePcRecord {
                path: path.to_path_buf(),
                line: line + 1,
                formula: pc.clone(),
            });
        }
        i += 1;
        let Some((keyword, argument)) = parsed else {
            continue;
        };
        let line_no = start + 1;
        let mut warn = |message: String| {
            warnings.push(ExtractWarning {
                path: path.to_path_buf(),
                line: line_no,
                message,
            })
        };
        let condition = match keyword {
            "if" | "elif" => {
                let c = parse_condition(argument);
                if !c.exact {
                    warn(format!(
                        "condition `{argument}` is not a Boolean combination of macro names; assumed true"
                    ));
                }
                Some(c)
            }
            "ifdef" | "ifndef" | "elifdef" | "elifndef" => Some(match identifier(argument) {
                Some(name) => {
                    let var = Expr::var(name);
                    let expr = if keyword.ends_with("ndef") {
                        Expr::not(var)
                    } else {
                        var
                    };
                    Condition { expr, exact: true }
                }
                None => {
                    warn(format!("#{keyword} without a macro name; assumed true"));
                    Condition {
                        expr: Expr::Const(true),
                        exact: false,
                    }
                }
            }),
            _ => None,
        };
        let unbalanced = || Error::Unbalanced {
            path: path.to_path_buf(),
            line: line_no,
            directive: keyword.to_string(),
        };
        match keyword {
            "if" | "ifdef" | "ifndef" => {
                let c = condition.expect("opening directives carry a condition");
                frames.push(Frame {
                    prior: vec![c.exact.then(|| c.expr.clone())],
                    current: c.expr,
                    seen_else: false,
                });
            }
            "elif" | "elifdef" | "elifndef" => {
                let c = condition.expect("elif directives carry a condition");
                let frame = frames.last_mut().ok_or_else(unbalanced)?;
                if frame.seen_else {
                    return Err(unbalanced());
                }
                let mut parts = frame.negated_prior();
                parts.push(c.expr.clone());
                frame.current = Expr::and(parts);
                frame.prior.push(c.exact.then_some(c.expr));
            }
            "else" => {
                let frame = frames.last_mut().ok_or_else(unbalanced)?;
                if frame.seen_else {
                    return Err(unbalanced());
                }
                frame.current = Expr::and(frame.negated_prior());
                frame.seen_else = true;
            }
            "endif" => {
                frames.pop().ok_or_else(unbalanced)?;
            }
            _ => {}
        }
    }
    if !frames.is_empty() {
        return Err(Error::Unbalanced {
            path: path.to_path_buf(),
            line: lines.len(),
            directive: "if without #endif".to_string(),
        });
    }
    Ok((records, warnings))
}

/// Reads and extracts one file. Bytes that are not valid UTF-8 are replaced,
/// which cannot affect directive parsing.
pub fn extract_file(path: &Path) -> Result<(Vec<LinePcRecord>, Vec<ExtractWarning>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    extract_source(path, &String::from_utf8_lossy(&bytes))
}

fn build_globs(patterns: &[String]) -> Result<GlobSet> {
    let mut builder = GlobSetBuilder::new();
    for p in patterns {
        let glob = Glob::new(p.trim_end_matches('/'))
            .map_err(|e| Error::parse(format!("exclude pattern {p:?}"), e.to_string()))?;
        builder.add(glob);
    }
    builder
        .build()
        .map_err(|e| Error::parse("exclude patterns", e.to_string()))
}

fn is_source(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| SOURCE_EXTENSIONS.contains(&e))
}

/// Extracts every C source below `root` whose path relative to `root` does
/// not match an exclusion glob. Excluded directories are not descended
/// into. Records carry root-relative paths and come in lexicographic path
/// order.
pub fn extract_tree(root: &Path, excludes: &[String]) -> Result<TreeExtraction> {
    let globs = build_globs(excludes)?;
    let meta = std::fs::metadata(root).map_err(|e| Error::io(root, e))?;
    let mut result = TreeExtraction::default();
    if meta.is_file() {
        let (records, warnings) = extract_file(root)?;
        result.records = records;
        result.warnings = warnings;
        result.files = 1;
        return Ok(result);
    }

    let mut files = Vec::new();
    let walker = WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|entry| {
            let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
            rel.as_os_str().is_empty() || !globs.is_match(rel)
        });
    for entry in walker {
        match entry {
            Ok(entry) => {
                if !entry.file_type().is_dir() && is_source(entry.path()) {
                    files.push(entry.into_path());
                }
            }
            Err(err) => {
                let path = err.path().unwrap_or(root).to_path_buf();
                result
                    .errors
                    .push(Error::io(path, io::Error::other(err.to_string())));
            }
        }
    }

    let outcomes: Vec<_> = files
        .par_iter()
        .map(|path| {
            let rel = path.strip_prefix(root).unwrap_or(path);
            std::fs::read(path)
                .map_err(|e| Error::io(rel, e))
                .and_then(|bytes| extract_source(rel, &String::from_utf8_lossy(&bytes)))
        })
        .collect();
    result.files = files.len();
    for outcome in outcomes {
        match outcome {
            Ok((records, warnings)) => {
                result.records.extend(records);
                result.warnings.extend(warnings);
            }
            Err(e) => result.errors.push(e),
        }
    }
    Ok(result)
}

/// Writes records as `<path>\t<line>\t<formula>` lines, paths with `/`.
pub fn write_records(records: &[LinePcRecord], out: &mut dyn Write) -> io::Result<()> {
    for r in records {
        let path = r.path.to_string_lossy().replace('\\', "/");
        writeln!(out, "{}\t{}\t{}", path, r.line, r.formula)?;
    }
    Ok(())
}
