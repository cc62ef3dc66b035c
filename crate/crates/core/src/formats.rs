//! Text formats read and written by the command-line tool: DIMACS feature
//! models, sample CSV files, presence-condition lists and fault lists.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::logic::{Clause, Configuration, FeatureModel, Literal, Origin, Sample, SampleMode};
use crate::transform::RawCondition;

/// Reads a DIMACS CNF. Names come from `c <index> <name>` comments (a
/// trailing `$`, which some tools append to generated variables, is
/// dropped); variables without a name are called `var_<index>`.
pub fn read_dimacs(input: &mut dyn BufRead, label: &str) -> Result<FeatureModel> {
    let mut names: HashMap<u32, String> = HashMap::new();
    let mut declared: Option<(u32, usize)> = None;
    let mut clauses: Vec<Clause> = Vec::new();
    let mut pending: Vec<Literal> = Vec::new();
    let mut max_var = 0u32;
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(label, e))?;
        let loc = || format!("{label}:{}", n + 1);
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed == "%" {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('c') {
            if !(comment.is_empty() || comment.starts_with(char::is_whitespace)) {
                return Err(Error::parse(loc(), "unexpected token"));
            }
            let mut parts = comment.split_whitespace();
            if let (Some(idx), Some(name)) = (parts.next(), parts.next()) {
                if let Ok(idx) = idx.parse::<u32>() {
                    if idx > 0 {
                        names.insert(idx, name.trim_end_matches('$').to_string());
                    }
                }
            }
            continue;
        }
        if let Some(header) = trimmed.strip_prefix('p') {
            let parts: Vec<&str> = header.split_whitespace().collect();
            match parts.as_slice() {
                ["cnf", v, c] => {
                    let v = v
                        .parse()
                        .map_err(|_| Error::parse(loc(), "bad variable count"))?;
                    let c = c
                        .parse()
                        .map_err(|_| Error::parse(loc(), "bad clause count"))?;
                    declared = Some((v, c));
                }
                _ => return Err(Error::parse(loc(), "expected `p cnf <vars> <clauses>`")),
            }
            continue;
        }
        if declared.is_none() {
            return Err(Error::parse(loc(), "clause before the `p cnf` header"));
        }
        for token in trimmed.split_whitespace() {
            let value: i32 = token
                .parse()
                .map_err(|_| Error::parse(loc(), format!("bad literal {token:?}")))?;
            if value == 0 {
                clauses.push(Clause::new(pending.drain(..)));
            } else {
                max_var = max_var.max(value.unsigned_abs());
                pending.push(Literal::from_dimacs(value));
            }
        }
    }
    if !pending.is_empty() {
        clauses.push(Clause::new(pending));
    }
    let (vars, _) = declared.ok_or_else(|| Error::parse(label, "missing `p cnf` header"))?;
    if max_var > vars {
        return Err(Error::parse(
            label,
            format!("literal {max_var} exceeds the declared {vars} variables"),
        ));
    }
    let names = (1..=vars).map(|i| names.remove(&i).unwrap_or_else(|| format!("var_{i}")));
    FeatureModel::new(names, clauses)
}

pub fn write_dimacs(model: &FeatureModel, out: &mut dyn Write) -> std::io::Result<()> {
    for (i, name) in model.names().iter().enumerate() {
        writeln!(out, "c {} {}", i + 1, name)?;
    }
    writeln!(out, "p cnf {} {}", model.len(), model.dependencies().len())?;
    for clause in model.dependencies() {
        for l in clause.literals() {
            write!(out, "{} ", l.to_dimacs())?;
        }
        writeln!(out, "0")?;
    }
    Ok(())
}

fn csv_error(label: &str, e: csv::Error) -> Error {
    let location = match e.position() {
        Some(p) => format!("{label}:{}", p.line()),
        None => label.to_string(),
    };
    Error::parse(location, e.to_string())
}

/// Writes the sample as CSV: a header of feature names in model order and
/// one `+`/`-` row per configuration.
pub fn write_sample_csv(sample: &Sample, model: &FeatureModel, out: &mut dyn Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer
        .write_record(model.names())
        .map_err(|e| csv_error("sample", e))?;
    for config in &sample.configurations {
        let row = model
            .features()
            .map(|f| match config.value(f) {
                Some(true) => Ok("+"),
                Some(false) => Ok("-"),
                None => Err(Error::InvalidConfiguration),
            })
            .collect::<Result<Vec<_>>>()?;
        writer
            .write_record(row)
            .map_err(|e| csv_error("sample", e))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(PathBuf::from("sample"), e))?;
    Ok(())
}

/// Reads a sample CSV. Columns are matched to features by name, so their
/// order may differ from the model's, but the sets must agree exactly.
pub fn read_sample_csv(
    input: &mut dyn std::io::Read,
    model: &FeatureModel,
    t: usize,
    mode: SampleMode,
    label: &str,
) -> Result<Sample> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader.headers().map_err(|e| csv_error(label, e))?.clone();
    let mut columns = Vec::with_capacity(header.len());
    let mut offenders = Vec::new();
    for name in header.iter() {
        match model.feature(name) {
            Some(f) => columns.push(f),
            None => offenders.push(name.to_string()),
        }
    }
    for name in model.names() {
        if !header.iter().any(|h| h == name) {
            offenders.push(name.clone());
        }
    }
    if !offenders.is_empty() {
        return Err(Error::UnknownFeatures(offenders));
    }
    let mut configurations = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(label, e))?;
        let mut literals = Vec::with_capacity(columns.len());
        for (cell, &feature) in record.iter().zip(&columns) {
            let positive = match cell {
                "+" => true,
                "-" => false,
                other => {
                    return Err(Error::parse(
                        format!("{label}:{}", row + 2),
                        format!("expected + or -, found {other:?}"),
                    ))
                }
            };
            literals.push(Literal::new(feature, positive));
        }
        configurations.push(Configuration::from_literals(literals)?);
    }
    Ok(Sample::new(model, t, mode, configurations))
}

/// Reads a presence-condition list. Each non-blank line is either
/// `<path>\t<line>\t<formula>` as written by extraction, or a bare formula.
/// Consecutive lines of one file with the same formula become one condition
/// spanning the line range.
pub fn read_conditions(input: &mut dyn BufRead, label: &str) -> Result<Vec<RawCondition>> {
    let mut out: Vec<RawCondition> = Vec::new();
    let mut last_text: Option<String> = None;
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(label, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(3, '\t').collect();
        let (origin, text) = match fields.as_slice() {
            [path, number, formula] => {
                let number: usize = number
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(format!("{label}:{}", n + 1), "bad line number"))?;
                let origin = Origin {
                    path: PathBuf::from(path),
                    first_line: number,
                    last_line: number,
                };
                (Some(origin), *formula)
            }
            [formula] => (None, *formula),
            _ => {
                return Err(Error::parse(
                    format!("{label}:{}", n + 1),
                    "expected `<path>\\t<line>\\t<formula>` or a bare formula",
                ))
            }
        };
        if let (Some(prev), Some(origin), Some(prev_text)) =
            (out.last_mut(), origin.as_ref(), last_text.as_deref())
        {
            if let Some(prev_origin) = prev.origin.as_mut() {
                if prev_text == text
                    && prev_origin.path == origin.path
                    && prev_origin.last_line + 1 == origin.first_line
                {
                    prev_origin.last_line = origin.last_line;
                    continue;
                }
            }
        }
        let formula = Expr::parse(text.trim())
            .map_err(|e| Error::parse(format!("{label}:{}", n + 1), e.to_string()))?;
        out.push(RawCondition { formula, origin });
        last_text = Some(text.to_string());
    }
    Ok(out)
}

/// Reads `<id>\t<formula>` fault lines; blank lines are skipped.
pub fn read_faults(input: &mut dyn BufRead, label: &str) -> Result<Vec<(String, Expr)>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(label, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let loc = || format!("{label}:{}", n + 1);
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(loc(), "expected `<id>\\t<formula>`"))?;
        let formula = Expr::parse(text.trim()).map_err(|e| Error::parse(loc(), e.to_string()))?;
        out.push((id.trim().to_string(), formula));
    }
    Ok(out)
}

/// An unconstrained model over the atoms of `conditions`, in order of first
/// appearance. Used when no feature model is given.
pub fn implicit_model<'a>(conditions: impl IntoIterator<Item = &'a Expr>) -> Result<FeatureModel> {
    let mut model = FeatureModel::default();
    for formula in conditions {
        for atom in formula.atoms() {
            if model.feature(atom).is_none() {
                model.add_feature(atom.to_string())?;
            }
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimacs_round_trip() {
        let text = "c 1 A\nc 2 B$\nc a comment\np cnf 3 2\n1 -2 0\n-3\n2 0\n";
        let m = read_dimacs(&mut text.as_bytes(), "m").unwrap();
        assert_eq!(m.names(), ["A", "B", "var_3"]);
        assert_eq!(m.dependencies().len(), 2);
        let mut buf = Vec::new();
        write_dimacs(&m, &mut buf).unwrap();
        let again = read_dimacs(&mut buf.as_slice(), "m").unwrap();
        assert_eq!(again.names(), m.names());
        assert_eq!(again.dependencies(), m.dependencies());
        assert_eq!(again.checksum(), m.checksum());
    }

    #[test]
    fn dimacs_errors() {
        assert!(read_dimacs(&mut "1 0\n".as_bytes(), "m").is_err());
        assert!(read_dimacs(&mut "p cnf 1 1\n2 0\n".as_bytes(), "m").is_err());
        assert!(read_dimacs(&mut "p cnf 1 1\nx 0\n".as_bytes(), "m").is_err());
    }

    #[test]
    fn sample_csv_round_trip_and_errors() {
        let m = FeatureModel::unconstrained(["A", "B"]).unwrap();
        let configs = vec![Configuration::from_literals([
            Literal::from_dimacs(1),
            Literal::from_dimacs(-2),
        ])
        .unwrap()];
        let s = Sample::new(&m, 2, SampleMode::Pc, configs);
        let mut buf = Vec::new();
        write_sample_csv(&s, &m, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "A,B\n+,-\n");
        assert_eq!(
            read_sample_csv(&mut buf.as_slice(), &m, 2, SampleMode::Pc, "s").unwrap(),
            s
        );

        let reordered =
            read_sample_csv(&mut "B,A\n-,+\n".as_bytes(), &m, 2, SampleMode::Pc, "s").unwrap();
        assert_eq!(reordered, s);

        match read_sample_csv(&mut "A,C\n+,+\n".as_bytes(), &m, 2, SampleMode::Pc, "s") {
            Err(Error::UnknownFeatures(names)) => assert_eq!(names, ["C", "B"]),
            other => panic!("{other:?}"),
        }
        assert!(read_sample_csv(&mut "A,B\n+\n".as_bytes(), &m, 2, SampleMode::Pc, "s").is_err());
        assert!(read_sample_csv(&mut "A,B\n+,x\n".as_bytes(), &m, 2, SampleMode::Pc, "s").is_err());
    }

    #[test]
    fn condition_lists() {
        let text = "a.c\t1\t1\na.c\t2\tX\na.c\t3\tX\nb.c\t4\tX\nY || !X\n\n";
        let raws = read_conditions(&mut text.as_bytes(), "pcs").unwrap();
        assert_eq!(raws.len(), 4);
        let o = raws[1].origin.as_ref().unwrap();
        assert_eq!((o.first_line, o.last_line), (2, 3));
        assert!(raws[3].origin.is_none());
        assert!(read_conditions(&mut "a.c\tx\tA\n".as_bytes(), "pcs").is_err());
        assert!(read_conditions(&mut "A &&\n".as_bytes(), "pcs").is_err());

        let m = implicit_model(raws.iter().map(|r| &r.formula)).unwrap();
        assert_eq!(m.names(), ["X", "Y"]);
    }

    #[test]
    fn fault_lists() {
        let faults = read_faults(&mut "f1\t!B && D\n\nf2\tA\n".as_bytes(), "f").unwrap();
        assert_eq!(faults.len(), 2);
        assert_eq!(faults[0].0, "f1");
        assert!(read_faults(&mut "nofield\n".as_bytes(), "f").is_err());
        assert!(read_faults(&mut "".as_bytes(), "f").unwrap().is_empty());
    }
}
