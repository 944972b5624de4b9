//! File emission: CSV tables (LF line endings, 17-significant-digit floats)
//! and the JSON verdict document.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::{json, Map, Value};

use dthawkes::simulate::{PathResult, SeolPath};
use dthawkes::stats::{EnsembleSummary, HistogramBin};

use crate::config::format_f64;

/// One row of the verdict document.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Extra context (p-values, targets); merged into the JSON object.
    pub detail: Map<String, Value>,
}

impl CheckOutcome {
    pub fn new(name: &'static str, statistic: f64, threshold: f64, pass: bool) -> Self {
        Self {
            name,
            statistic,
            threshold,
            pass,
            detail: Map::new(),
        }
    }

    pub fn with_detail(mut self, key: &str, value: Value) -> Self {
        self.detail.insert(key.to_string(), value);
        self
    }
}

/// Stable verdict schema:
/// `{command, config_hash, checks: [{name, statistic, threshold, pass}], pass}`
/// plus a suppressible timestamp.
pub fn verdict_document(
    command: &str,
    config_hash: &str,
    checks: &[CheckOutcome],
    emit_timestamp: bool,
) -> Value {
    let pass = checks.iter().all(|c| c.pass);
    let mut doc = Map::new();
    doc.insert("command".into(), json!(command));
    doc.insert("config_hash".into(), json!(config_hash));
    if emit_timestamp {
        let seconds = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        doc.insert("timestamp".into(), json!(seconds));
    }
    doc.insert(
        "checks".into(),
        Value::Array(
            checks
                .iter()
                .map(|c| {
                    let mut entry = Map::new();
                    entry.insert("name".into(), json!(c.name));
                    entry.insert("statistic".into(), json!(c.statistic));
                    entry.insert("threshold".into(), json!(c.threshold));
                    entry.insert("pass".into(), json!(c.pass));
                    for (k, v) in &c.detail {
                        entry.insert(k.clone(), v.clone());
                    }
                    Value::Object(entry)
                })
                .collect(),
        ),
    );
    doc.insert("pass".into(), json!(pass));
    Value::Object(doc)
}

pub fn write_json(path: &Path, value: &Value) -> io::Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    file.flush()
}

/// `path,N,L,sum_lambda` — one row per path, in path order.
pub fn write_terminal_csv(path: &Path, ensemble: &[PathResult]) -> io::Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(b"path,N,L,sum_lambda\n")?;
    for result in ensemble {
        writeln!(
            file,
            "{},{},{},{}",
            result.path_index,
            result.terminal_count,
            format_f64(result.terminal_mark_sum),
            format_f64(result.lambda_total)
        )?;
    }
    file.flush()
}

/// `t,lambda,Z,X,N_cum,L_cum` for one fully recorded path.
pub fn write_series_csv(path: &Path, result: &PathResult) -> io::Result<()> {
    let series = result
        .series
        .as_ref()
        .ok_or_else(|| io::Error::other("path was not recorded with full series"))?;
    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(b"t,lambda,Z,X,N_cum,L_cum\n")?;
    let mut count_cum = 0u64;
    let mut mark_cum = 0.0;
    for t in 0..series.lambda.len() {
        count_cum += series.counts[t];
        mark_cum += series.mark_sums[t];
        writeln!(
            file,
            "{},{},{},{},{},{}",
            t + 1,
            format_f64(series.lambda[t]),
            series.counts[t],
            format_f64(series.mark_sums[t]),
            count_cum,
            format_f64(mark_cum)
        )?;
    }
    file.flush()
}

/// `bin_left,bin_right,count,normal_density_at_center`.
pub fn write_histogram_csv(path: &Path, bins: &[HistogramBin]) -> io::Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(b"bin_left,bin_right,count,normal_density_at_center\n")?;
    for bin in bins {
        writeln!(
            file,
            "{},{},{},{}",
            format_f64(bin.left),
            format_f64(bin.right),
            bin.count,
            format_f64(bin.normal_density_at_center)
        )?;
    }
    file.flush()
}

/// `metric,value` rows of the scalar ensemble summary.
pub fn write_summary_csv(path: &Path, summary: &EnsembleSummary) -> io::Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(b"metric,value\n")?;
    writeln!(file, "n_paths,{}", summary.n_paths)?;
    writeln!(file, "horizon,{}", summary.horizon)?;
    for (name, value) in [
        ("mean_count_rate", summary.mean_count_rate),
        ("var_count_rate", summary.var_count_rate),
        ("mean_mark_rate", summary.mean_mark_rate),
        ("var_mark_rate", summary.var_mark_rate),
        ("martingale_mean", summary.martingale_mean),
    ] {
        writeln!(file, "{name},{}", format_f64(value))?;
    }
    if let Some(ratio) = summary.martingale_var_ratio {
        writeln!(file, "martingale_var_ratio,{}", format_f64(ratio))?;
    }
    file.flush()
}

/// `path,S` for the 0-1 baseline.
pub fn write_seol_csv(path: &Path, ensemble: &[SeolPath]) -> io::Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(b"path,S\n")?;
    for result in ensemble {
        writeln!(file, "{},{}", result.path_index, result.terminal_sum)?;
    }
    file.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn float_format_round_trips(value in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
            let text = format_f64(value);
            let back: f64 = text.parse().unwrap();
            prop_assert_eq!(back.to_bits(), value.to_bits());
        }
    }

    #[test]
    fn verdict_schema_has_the_stable_keys() {
        let checks = vec![CheckOutcome::new("demo", 1.0, 2.0, true)
            .with_detail("p_value", json!(0.5))];
        let doc = verdict_document("verify", "abc", &checks, false);
        assert_eq!(doc["command"], "verify");
        assert_eq!(doc["config_hash"], "abc");
        assert!(doc.get("timestamp").is_none());
        assert_eq!(doc["pass"], true);
        let entry = &doc["checks"][0];
        assert_eq!(entry["name"], "demo");
        assert_eq!(entry["statistic"], 1.0);
        assert_eq!(entry["threshold"], 2.0);
        assert_eq!(entry["pass"], true);
        assert_eq!(entry["p_value"], 0.5);
    }
}
