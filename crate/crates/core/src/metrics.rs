//! Action/privacy trade-off scoring.
//!
//! `f_λ = (1 − λ)·a + λ·(1 − p)` where `a` and `p` are the action and
//! privacy top-1 accuracies divided by 100. Higher is better.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RESULTS_HEADER: [&str; 4] = ["method", "dataset", "action_acc", "privacy_acc"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub method: String,
    pub dataset: String,
    /// Percent, `[0, 100]`.
    pub action_acc: f64,
    /// Percent, `[0, 100]`.
    pub privacy_acc: f64,
}

impl MetricRecord {
    pub fn new(method: &str, dataset: &str, action_acc: f64, privacy_acc: f64) -> Result<Self> {
        check_accuracy("action_acc", action_acc)?;
        check_accuracy("privacy_acc", privacy_acc)?;
        Ok(MetricRecord {
            method: method.to_string(),
            dataset: dataset.to_string(),
            action_acc,
            privacy_acc,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateRecord {
    pub template: String,
    pub action_acc: f64,
    pub privacy_acc: f64,
}

fn check_accuracy(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && (0.0..=100.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{field} = {v} is outside [0, 100]")))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "lambda = {lambda} is outside [0, 1]"
        )))
    }
}

/// Trade-off score of one record.
pub fn f_lambda(record: &MetricRecord, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let a = record.action_acc / 100.0;
    let p = record.privacy_acc / 100.0;
    Ok((1.0 - lambda) * a + lambda * (1.0 - p))
}

/// Rounds half away from zero to `decimals` places. Values are first snapped
/// to 1e-9 so that decimal ties such as 0.555 are not lost to binary
/// representation error.
pub fn round_half_away(x: f64, decimals: i32) -> f64 {
    let snapped = (x * 1e9).round() / 1e9;
    let scale = 10f64.powi(decimals);
    (snapped * scale).round() / scale
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: String,
    pub dataset: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub lambdas: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Long-form CSV: `method,dataset,lambda,f`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,dataset,lambda,f\n");
        for row in &self.rows {
            for (l, f) in self.lambdas.iter().zip(&row.values) {
                let _ = writeln!(
                    out,
                    "{},{},{},{:.6}",
                    csv_field(&row.method),
                    csv_field(&row.dataset),
                    l,
                    f
                );
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `f_λ` of every record at every λ.
pub fn sweep(records: &[MetricRecord], lambdas: &[f64]) -> Result<SweepTable> {
    for &l in lambdas {
        check_lambda(l)?;
    }
    if lambdas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("sweep lambdas must be sorted ascending"));
    }
    let rows = records
        .iter()
        .map(|r| {
            Ok(SweepRow {
                method: r.method.clone(),
                dataset: r.dataset.clone(),
                values: lambdas
                    .iter()
                    .map(|&l| f_lambda(r, l))
                    .collect::<Result<_>>()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable {
        lambdas: lambdas.to_vec(),
        rows,
    })
}

/// Parses `start:end:step` into an inclusive grid of λ values.
pub fn parse_sweep(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, end, step] = parts.as_slice() else {
        return Err(Error::invalid(format!(
            "sweep {spec:?} must look like start:end:step"
        )));
    };
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::invalid(format!("sweep {spec:?}: {s:?} is not a number")))
    };
    let (start, end, step) = (parse(start)?, parse(end)?, parse(step)?);
    if step.is_nan() || step <= 0.0 || end < start {
        return Err(Error::invalid(format!(
            "sweep {spec:?} needs step > 0 and end ≥ start"
        )));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    let grid: Vec<f64> = (0..=n)
        .map(|i| round_half_away(start + i as f64 * step, 9))
        .collect();
    for &l in &grid {
        check_lambda(l)?;
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    pub record: MetricRecord,
    pub score: f64,
}

/// Orders records by descending `f_λ`; ties go to lower privacy accuracy,
/// then to the lexicographically smaller method name.
pub fn rank(records: &[MetricRecord], lambda: f64) -> Result<Vec<Ranked>> {
    let mut ranked = records
        .iter()
        .map(|r| {
            Ok(Ranked {
                record: r.clone(),
                score: f_lambda(r, lambda)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.record.privacy_acc.total_cmp(&b.record.privacy_acc))
            .then_with(|| a.record.method.cmp(&b.record.method))
    });
    Ok(ranked)
}

/// The `k` templates that most reduce privacy accuracy; ties go to higher
/// action accuracy, then to name.
pub fn select_templates(records: &[TemplateRecord], k: usize) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::invalid("select at least one template (k = 0)"));
    }
    if k > records.len() {
        return Err(Error::invalid(format!(
            "cannot select {k} templates from {} records",
            records.len()
        )));
    }
    let mut sorted: Vec<&TemplateRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.privacy_acc
            .total_cmp(&b.privacy_acc)
            .then_with(|| b.action_acc.total_cmp(&a.action_acc))
            .then_with(|| a.template.cmp(&b.template))
    });
    Ok(sorted
        .into_iter()
        .take(k)
        .map(|r| r.template.clone())
        .collect())
}

fn canonical_template(name: &str) -> String {
    let n = name.trim().trim_end_matches('.').to_ascii_lowercase();
    n.strip_suffix('s').map(str::to_string).unwrap_or(n)
}

/// Abbreviations (`foreh.`) and plurals (`eyes`) name the same template.
pub fn same_template(a: &str, b: &str) -> bool {
    let (a, b) = (canonical_template(a), canonical_template(b));
    !a.is_empty() && !b.is_empty() && (a.starts_with(&b) || b.starts_with(&a))
}

/// Describes how a reference selection departs from the privacy-sorted one,
/// or `None` when they name the same set.
pub fn selection_divergence(selected: &[String], reference: &[String]) -> Option<String> {
    let missing: Vec<&String> = reference
        .iter()
        .filter(|r| !selected.iter().any(|s| same_template(s, r)))
        .collect();
    let extra: Vec<&String> = selected
        .iter()
        .filter(|s| !reference.iter().any(|r| same_template(s, r)))
        .collect();
    if missing.is_empty() && extra.is_empty() {
        return None;
    }
    let list = |v: &[&String]| v.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ");
    Some(format!(
        "reference selection is not purely privacy-sorted: it includes {{{}}} in place of {{{}}}",
        list(&missing),
        list(&extra)
    ))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingested<T> {
    pub records: Vec<T>,
    pub warnings: Vec<String>,
}

/// Data rows with their line numbers, the header, and warnings.
type Rows = (Vec<(u64, csv::StringRecord)>, Vec<String>, Vec<String>);

fn read_rows(path: &Path, expected: &[&str]) -> Result<Rows> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut warnings = Vec::new();
    if text.trim().is_empty() {
        warnings.push(format!("{}: empty results file", path.display()));
        return Ok((Vec::new(), Vec::new(), warnings));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    for col in expected {
        if !header.iter().any(|h| h == col) {
            return Err(Error::format(
                path,
                format!(
                    "header must contain {}, found {}",
                    expected.join(","),
                    header.join(",")
                ),
            ));
        }
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::format(path, format!("line {line}: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::format(
                path,
                format!(
                    "line {line}: expected {} fields, found {}",
                    header.len(),
                    rec.len()
                ),
            ));
        }
        rows.push((line, rec));
    }
    if rows.is_empty() {
        warnings.push(format!("{}: no result rows", path.display()));
    }
    Ok((rows, header, warnings))
}

fn field<'a>(
    path: &Path,
    header: &[String],
    rec: &'a csv::StringRecord,
    line: u64,
    name: &str,
) -> Result<&'a str> {
    let i = header
        .iter()
        .position(|h| h == name)
        .expect("header checked");
    let v = rec.get(i).unwrap_or("");
    if v.is_empty() {
        return Err(Error::format(path, format!("line {line}: {name} is empty")));
    }
    Ok(v)
}

fn number(
    path: &Path,
    header: &[String],
    rec: &csv::StringRecord,
    line: u64,
    name: &str,
) -> Result<f64> {
    let raw = field(path, header, rec, line, name)?;
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::format(path, format!("line {line}: {name} {raw:?} is not a number")))?;
    check_accuracy(name, v).map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
    Ok(v)
}

/// Reads `method,dataset,action_acc,privacy_acc` rows (accuracies in percent).
pub fn ingest_results(path: impl AsRef<Path>) -> Result<Ingested<MetricRecord>> {
    let path = path.as_ref();
    let (rows, header, warnings) = read_rows(path, &RESULTS_HEADER)?;
    let records = rows
        .iter()
        .map(|(line, rec)| {
            Ok(MetricRecord {
                method: field(path, &header, rec, *line, "method")?.to_string(),
                dataset: field(path, &header, rec, *line, "dataset")?.to_string(),
                action_acc: number(path, &header, rec, *line, "action_acc")?,
                privacy_acc: number(path, &header, rec, *line, "privacy_acc")?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Ingested { records, warnings })
}

/// Reads `template,action_acc,privacy_acc` rows, with an optional `dataset`
/// column; when `dataset` is given only matching rows are kept.
pub fn ingest_template_results(
    path: impl AsRef<Path>,
    dataset: Option<&str>,
) -> Result<Ingested<TemplateRecord>> {
    let path = path.as_ref();
    let (rows, header, mut warnings) = read_rows(path, &["template", "action_acc", "privacy_acc"])?;
    let has_dataset = header.iter().any(|h| h == "dataset");
    let mut records = Vec::new();
    for (line, rec) in &rows {
        if let (Some(want), true) = (dataset, has_dataset) {
            if field(path, &header, rec, *line, "dataset")? != want {
                continue;
            }
        }
        records.push(TemplateRecord {
            template: field(path, &header, rec, *line, "template")?.to_string(),
            action_acc: number(path, &header, rec, *line, "action_acc")?,
            privacy_acc: number(path, &header, rec, *line, "privacy_acc")?,
        });
    }
    if dataset.is_some() && !has_dataset {
        warnings.push(format!(
            "{}: no dataset column; using every row",
            path.display()
        ));
    }
    Ok(Ingested { records, warnings })
}

/// Plain-text ranking table with scores rounded to two decimals.
pub fn format_ranking(ranked: &[Ranked], lambda: f64) -> String {
    let width = ranked
        .iter()
        .map(|r| r.record.method.len())
        .max()
        .unwrap_or(6)
        .max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>4}  {:<width$}  {:>7}  {:>7}  {:>6}",
        "rank",
        "method",
        "action",
        "privacy",
        format!("f_{lambda}")
    );
    for (i, r) in ranked.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:>4}  {:<width$}  {:>7.2}  {:>7.2}  {:>6.2}",
            i + 1,
            r.record.method,
            r.record.action_acc,
            r.record.privacy_acc,
            round_half_away(r.score, 2)
        );
    }
    out
}
