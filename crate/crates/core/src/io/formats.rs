//! CSV readers and writers for rankings, draws, matrices and predictive tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{EplError, Result};
use crate::model::{Dataset, LambdaVector};
use crate::permutation::Permutation;
use crate::predictive::RankMatrix;
use crate::sampler::{Draw, DrawsMeta, PosteriorDraws};

/// 17 significant digits, enough to reproduce every `f64` exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| EplError::io(path, e))
}

pub(crate) fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| EplError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| EplError::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> EplError {
    EplError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

type NumberedRecord = (usize, Vec<String>);

/// Splits a CSV text into its `#` comment lines and data records, with 1-based line numbers.
fn records(path: &Path, text: &str) -> Result<(Vec<String>, Vec<NumberedRecord>)> {
    let mut comments = Vec::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if let Some(c) = trimmed.strip_prefix('#') {
            comments.push(c.trim().to_string());
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(trimmed.as_bytes());
        let rec = rdr
            .records()
            .next()
            .expect("nonempty line")
            .map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        out.push((i + 1, rec.iter().map(str::to_string).collect()));
    }
    Ok((comments, out))
}

fn csv_line(fields: impl IntoIterator<Item = impl AsRef<str>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(vec![]);
    w.write_record(fields.into_iter().map(|f| f.as_ref().to_string()))
        .expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Reads one ranking per row (entity at each position), with an optional header of entity names.
pub fn load_rankings(path: &Path) -> Result<Dataset> {
    let text = read(path)?;
    let (_, rows) = records(path, &text)?;
    let mut rows = rows.into_iter().peekable();
    let mut names = None;
    if let Some((line, first)) = rows.peek() {
        if first.iter().any(|f| f.parse::<usize>().is_err()) {
            if first.iter().all(|f| f.parse::<usize>().is_err()) {
                names = Some(first.clone());
                rows.next();
            } else {
                return Err(parse_err(path, *line, "header mixes names and numbers"));
            }
        }
    }
    let mut k = names.as_ref().map(Vec::len);
    let mut rankings = Vec::new();
    for (line, fields) in rows {
        let kk = *k.get_or_insert(fields.len());
        if fields.len() != kk {
            return Err(parse_err(
                path,
                line,
                format!("expected {kk} entries, found {}", fields.len()),
            ));
        }
        let values = fields
            .iter()
            .map(|f| {
                f.parse::<usize>()
                    .map_err(|_| parse_err(path, line, format!("'{f}' is not an entity number")))
            })
            .collect::<Result<Vec<_>>>()?;
        let perm = Permutation::new(values).map_err(|e| parse_err(path, line, e.to_string()))?;
        rankings.push(perm);
    }
    let k = k.ok_or_else(|| parse_err(path, 0, "no rankings found"))?;
    let data = Dataset::new(k, rankings)?;
    match names {
        Some(n) => data.with_names(n),
        None => Ok(data),
    }
}

pub fn write_rankings(path: &Path, data: &Dataset) -> Result<()> {
    let mut out = String::new();
    if let Some(names) = data.entity_names() {
        out.push_str(&csv_line(names));
    }
    for x in data.rankings() {
        out.push_str(&csv_line(x.iter().map(|v| v.to_string())));
    }
    write(path, &out)
}

pub fn draws_to_string(draws: &PosteriorDraws) -> String {
    let k = draws.k();
    let meta = draws.meta();
    let mut out = String::new();
    let _ = writeln!(out, "# burn_in={}", meta.burn_in);
    let _ = writeln!(out, "# thin={}", meta.thin);
    let _ = writeln!(out, "# seed={}", meta.seed);
    let _ = writeln!(out, "# config_hash={}", meta.config_hash);
    if let Some(names) = &meta.entity_names {
        let _ = write!(out, "# entities={}", csv_line(names));
    }
    let header = ["iteration".to_string(), "loglik".to_string()]
        .into_iter()
        .chain((1..=k).map(|j| format!("sigma_{j}")))
        .chain((1..=k).map(|e| format!("lambda_{e}")));
    out.push_str(&csv_line(header));
    for d in draws.draws() {
        let _ = write!(out, "{},{}", d.iteration, fmt_f64(d.loglik));
        for s in d.sigma.iter() {
            let _ = write!(out, ",{s}");
        }
        for l in d.lambda.as_slice() {
            let _ = write!(out, ",{}", fmt_f64(*l));
        }
        out.push('\n');
    }
    out
}

pub fn write_draws(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    write(path, &draws_to_string(draws))
}

pub fn read_draws(path: &Path) -> Result<PosteriorDraws> {
    let text = read(path)?;
    let (comments, rows) = records(path, &text)?;
    let mut meta = DrawsMeta::default();
    for c in comments {
        let Some((key, value)) = c.split_once('=') else {
            continue;
        };
        let num = |v: &str| {
            v.parse::<u64>()
                .map_err(|_| parse_err(path, 0, format!("bad {key} value '{v}'")))
        };
        match key.trim() {
            "burn_in" => meta.burn_in = num(value)?,
            "thin" => meta.thin = num(value)?,
            "seed" => meta.seed = num(value)?,
            "config_hash" => meta.config_hash = value.to_string(),
            "entities" => {
                let (_, r) = records(path, value)?;
                meta.entity_names = r.into_iter().next().map(|(_, names)| names);
            }
            _ => {}
        }
    }
    let mut rows = rows.into_iter();
    let (hline, header) = rows.next().ok_or_else(|| parse_err(path, 0, "missing header"))?;
    if header.len() < 4 || header.len() % 2 != 0 || header[0] != "iteration" || header[1] != "loglik" {
        return Err(parse_err(
            path,
            hline,
            "expected header iteration,loglik,sigma_1..,lambda_1..",
        ));
    }
    let k = (header.len() - 2) / 2;
    let mut draws = Vec::new();
    for (line, f) in rows {
        if f.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), f.len()),
            ));
        }
        let bad = |what: &str, v: &str| parse_err(path, line, format!("bad {what} '{v}'"));
        let iteration = f[0].parse().map_err(|_| bad("iteration", &f[0]))?;
        let loglik = f[1].parse().map_err(|_| bad("loglik", &f[1]))?;
        let sigma = f[2..2 + k]
            .iter()
            .map(|v| v.parse::<usize>().map_err(|_| bad("sigma entry", v)))
            .collect::<Result<Vec<_>>>()?;
        let lambda = f[2 + k..]
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| bad("lambda entry", v)))
            .collect::<Result<Vec<_>>>()?;
        draws.push(Draw {
            iteration,
            loglik,
            sigma: Permutation::new(sigma).map_err(|e| parse_err(path, line, e.to_string()))?,
            lambda: LambdaVector::new(lambda).map_err(|e| parse_err(path, line, e.to_string()))?,
        });
    }
    PosteriorDraws::new(k, draws, meta)
}

/// A matrix file: first header cell names the row index, the rest label the columns.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledMatrix {
    pub index_name: String,
    pub labels: Vec<String>,
    pub matrix: RankMatrix,
}

pub fn write_matrix(path: &Path, index_name: &str, labels: &[String], m: &RankMatrix) -> Result<()> {
    if labels.len() != m.k() {
        return Err(EplError::DimensionMismatch {
            expected: m.k(),
            found: labels.len(),
        });
    }
    let mut out = csv_line(std::iter::once(index_name.to_string()).chain(labels.iter().cloned()));
    for (j, row) in m.rows().enumerate() {
        let _ = write!(out, "{}", j + 1);
        for v in row {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        out.push('\n');
    }
    write(path, &out)
}

pub fn read_matrix(path: &Path) -> Result<LabeledMatrix> {
    let text = read(path)?;
    let (_, rows) = records(path, &text)?;
    let mut rows = rows.into_iter();
    let (_, header) = rows.next().ok_or_else(|| parse_err(path, 0, "missing header"))?;
    let k = header.len().saturating_sub(1);
    let mut values = Vec::new();
    for (i, (line, f)) in rows.enumerate() {
        if f.len() != k + 1 {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", k + 1, f.len()),
            ));
        }
        if f[0] != (i + 1).to_string() {
            return Err(parse_err(
                path,
                line,
                format!("expected row index {}, found '{}'", i + 1, f[0]),
            ));
        }
        let row = f[1..]
            .iter()
            .map(|v| match v.parse::<f64>() {
                Ok(x) if x.is_finite() && (0.0..=1.0).contains(&x) => Ok(x),
                _ => Err(parse_err(path, line, format!("'{v}' is not a value in [0, 1]"))),
            })
            .collect::<Result<Vec<_>>>()?;
        values.push(row);
    }
    if values.len() != k {
        return Err(parse_err(path, 0, format!("{} rows for {k} columns", values.len())));
    }
    Ok(LabeledMatrix {
        index_name: header[0].clone(),
        labels: header[1..].to_vec(),
        matrix: RankMatrix::new(values)?,
    })
}

pub fn write_predictive(path: &Path, entries: &[(Permutation, f64)]) -> Result<()> {
    let mut out = String::from("ranking,probability\n");
    for (x, p) in entries {
        let _ = writeln!(out, "{},{}", x.to_dashed(), fmt_f64(*p));
    }
    write(path, &out)
}

pub fn read_predictive(path: &Path) -> Result<Vec<(Permutation, f64)>> {
    let text = read(path)?;
    let (_, rows) = records(path, &text)?;
    let mut rows = rows.into_iter();
    match rows.next() {
        Some((_, h)) if h == ["ranking", "probability"] => {}
        Some((line, _)) => return Err(parse_err(path, line, "expected header ranking,probability")),
        None => return Err(parse_err(path, 0, "missing header")),
    }
    rows.map(|(line, f)| {
        if f.len() != 2 {
            return Err(parse_err(path, line, "expected ranking,probability"));
        }
        let x: Permutation = f[0]
            .parse()
            .map_err(|e: EplError| parse_err(path, line, e.to_string()))?;
        let p: f64 = f[1]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad probability '{}'", f[1])))?;
        Ok((x, p))
    })
    .collect()
}

/// Generating parameters of a simulated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    pub lambda: LambdaVector,
    pub sigma: Permutation,
    pub seed: u64,
}

pub fn write_truth(path: &Path, truth: &Truth) -> Result<()> {
    let mut out = format!("# seed={}\nindex,lambda,sigma\n", truth.seed);
    for (i, (l, s)) in truth.lambda.as_slice().iter().zip(truth.sigma.iter()).enumerate() {
        let _ = writeln!(out, "{},{},{}", i + 1, fmt_f64(*l), s);
    }
    write(path, &out)
}

pub fn read_truth(path: &Path) -> Result<Truth> {
    let text = read(path)?;
    let (comments, rows) = records(path, &text)?;
    let seed = comments
        .iter()
        .find_map(|c| c.strip_prefix("seed="))
        .map(|v| v.trim().parse::<u64>())
        .transpose()
        .map_err(|_| parse_err(path, 1, "bad seed"))?
        .unwrap_or(0);
    let mut rows = rows.into_iter();
    match rows.next() {
        Some((_, h)) if h == ["index", "lambda", "sigma"] => {}
        _ => return Err(parse_err(path, 0, "expected header index,lambda,sigma")),
    }
    let (mut lambda, mut sigma) = (Vec::new(), Vec::new());
    for (line, f) in rows {
        let bad = || parse_err(path, line, "expected index,lambda,sigma");
        if f.len() != 3 {
            return Err(bad());
        }
        lambda.push(f[1].parse::<f64>().map_err(|_| bad())?);
        sigma.push(f[2].parse::<usize>().map_err(|_| bad())?);
    }
    Ok(Truth {
        lambda: LambdaVector::new(lambda).map_err(|e| parse_err(path, 0, e.to_string()))?,
        sigma: Permutation::new(sigma).map_err(|e| parse_err(path, 0, e.to_string()))?,
        seed,
    })
}
