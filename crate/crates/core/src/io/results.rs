//! Comma-separated results tables, one row per trained model.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::MetricRecord;
use crate::stats::RunRecord;
use crate::variant::ModelVariant;

pub const RESULTS_HEADER: [&str; 8] = [
    "environment",
    "model",
    "dataset",
    "seed",
    "performance",
    "cov_trace",
    "l2_norm",
    "cosine_sim",
];

/// Formats `x` rounded to 9 significant digits, using the shortest
/// decimal that reads back as the rounded value.
pub fn format_sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("scientific notation parses");
    if rounded == 0.0 || (1e-6..1e15).contains(&rounded.abs()) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

pub fn results_to_string(rows: &[RunRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let io = |e: csv::Error| Error::Write(std::io::Error::other(e));
    w.write_record(RESULTS_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.environment.clone(),
            r.model_variant.as_str().to_string(),
            r.dataset.clone(),
            r.seed.to_string(),
            format_sig9(r.performance_hns),
            format_sig9(r.metrics.cov_trace),
            format_sig9(r.metrics.l2_norm_mean),
            format_sig9(r.metrics.cosine_sim_mean),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Write(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn write_results(rows: &[RunRecord], path: &Path) -> Result<()> {
    fs::write(path, results_to_string(rows)?).map_err(Error::Write)
}

pub fn read_results(path: &Path) -> Result<Vec<RunRecord>> {
    parse_results(&fs::read_to_string(path)?)
}

/// Parses a results table. Row numbers in errors are 1-based data rows.
/// The repetition count is not stored in the table and reads back as 1.
pub fn parse_results(text: &str) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = rdr.records();
    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(Error::MalformedHeader(e.to_string())),
        None => return Err(Error::MalformedHeader("empty file".into())),
    };
    if header.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(Error::MalformedHeader(format!(
            "expected '{}', found '{}'",
            RESULTS_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 1;
        let perr = |message: String| Error::Parse { row, message };
        let rec = rec.map_err(|e| perr(e.to_string()))?;
        if rec.len() != RESULTS_HEADER.len() {
            return Err(perr(format!("expected {} columns, found {}", RESULTS_HEADER.len(), rec.len())));
        }
        let num = |k: usize| -> Result<f64> {
            let v: f64 = rec[k]
                .parse()
                .map_err(|_| perr(format!("{}: cannot parse '{}'", RESULTS_HEADER[k], &rec[k])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(perr(format!("{} is not finite", RESULTS_HEADER[k])))
            }
        };
        let model_variant: ModelVariant = rec[1].parse().map_err(|e: Error| perr(e.to_string()))?;
        let seed = rec[3].parse().map_err(|_| perr(format!("seed: cannot parse '{}'", &rec[3])))?;
        out.push(RunRecord {
            environment: rec[0].to_string(),
            model_variant,
            dataset: rec[2].to_string(),
            seed,
            performance_hns: num(4)?,
            metrics: MetricRecord {
                cov_trace: num(5)?,
                l2_norm_mean: num(6)?,
                cosine_sim_mean: num(7)?,
                repetitions_averaged: 1,
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(620.76), "620.76");
        assert_eq!(format_sig9(0.0288), "0.0288");
        assert_eq!(format_sig9(-0.907), "-0.907");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(9.9999999999), "10");
        assert_eq!(format_sig9(123456789012.0), "123456789000");
        assert_eq!(format_sig9(1.5e-9), "1.5e-9");
        assert_eq!(format_sig9(0.0), "0");
    }

    #[test]
    fn header_only_round_trips_to_empty() {
        let s = results_to_string(&[]).unwrap();
        assert!(parse_results(&s).unwrap().is_empty());
    }

    #[test]
    fn bad_header_and_missing_column() {
        assert!(matches!(parse_results("env,model\n"), Err(Error::MalformedHeader(_))));
        let text = format!("{}\nAnt,baseline,medium,0,88.84,620.76,24.92\n", RESULTS_HEADER.join(","));
        assert!(matches!(parse_results(&text), Err(Error::Parse { row: 1, .. })));
    }
}
