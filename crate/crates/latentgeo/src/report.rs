//! Metric report tables.
//!
//! The CSV column order is frozen:
//! `model,space,n_points,k_used,c_hat,mean_margin,curvature_deg,f_euclid,f_riem,mean_dist_euclid,mean_dist_riem`.
//! The JSON sidecar carries the same rows plus warnings and the full config.

use std::path::{Path, PathBuf};

use latentgeo_core::analysis::MetricReport;
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{csv_writer, finish_csv, fmt_f64, write_bytes};

pub const METRIC_COLUMNS: [&str; 11] = [
    "model",
    "space",
    "n_points",
    "k_used",
    "c_hat",
    "mean_margin",
    "curvature_deg",
    "f_euclid",
    "f_riem",
    "mean_dist_euclid",
    "mean_dist_riem",
];

pub fn metric_row(r: &MetricReport) -> Vec<String> {
    vec![
        r.model.clone(),
        r.space.clone(),
        r.n_points.to_string(),
        r.k_used.to_string(),
        fmt_f64(r.c_hat),
        fmt_f64(r.mean_margin),
        fmt_f64(r.curvature_deg),
        fmt_f64(r.f_euclid),
        fmt_f64(r.f_riem),
        fmt_f64(r.mean_dist_euclid),
        fmt_f64(r.mean_dist_riem),
    ]
}

/// Path of the JSON sidecar next to a CSV file.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn config_json(cfg: &RunConfig) -> Value {
    Value::Object(cfg.pairs().map(|(k, v)| (k.to_string(), Value::String(v.into()))).collect::<Map<_, _>>())
}

/// Writes a generic table and its sidecar; `extra` entries are merged into the
/// sidecar's top level.
pub fn write_table(
    path: &Path,
    columns: &[&str],
    rows: &[Vec<String>],
    cfg: &RunConfig,
    extra: Map<String, Value>,
) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(columns).map_err(|e| CliError::format(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::format(path, e))?;
    }
    finish_csv(path, w)?;

    let json_rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            Value::Object(
                columns
                    .iter()
                    .zip(r)
                    .map(|(c, v)| (c.to_string(), cell_json(v)))
                    .collect(),
            )
        })
        .collect();
    let mut top = Map::new();
    top.insert("columns".into(), json!(columns));
    top.insert("rows".into(), Value::Array(json_rows));
    top.insert("config".into(), config_json(cfg));
    top.extend(extra);
    let side = sidecar_path(path);
    let mut text = serde_json::to_string_pretty(&Value::Object(top)).map_err(|e| CliError::format(&side, e))?;
    text.push('\n');
    write_bytes(&side, text.as_bytes())
}

// numbers stay numbers in the sidecar
fn cell_json(v: &str) -> Value {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => json!(x),
        _ => Value::String(v.to_string()),
    }
}

pub fn write_metric_reports(path: &Path, reports: &[MetricReport], cfg: &RunConfig) -> CliResult<()> {
    let rows: Vec<Vec<String>> = reports.iter().map(metric_row).collect();
    let mut extra = Map::new();
    extra.insert(
        "warnings".into(),
        Value::Object(
            reports
                .iter()
                .map(|r| (format!("{}/{}", r.model, r.space), json!(r.warnings)))
                .collect(),
        ),
    );
    write_table(path, &METRIC_COLUMNS, &rows, cfg, extra)
}

/// Reads back the numeric columns of a metric CSV, keyed by `(model, space)`.
pub fn read_metric_csv(path: &Path) -> CliResult<Vec<(String, String, Vec<f64>)>> {
    let bytes = crate::io::read_bytes(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| CliError::format(path, e))?
        .iter()
        .map(String::from)
        .collect();
    if header != METRIC_COLUMNS {
        return Err(CliError::format(path, format!("unexpected columns {header:?}")));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::format(path, e))?;
        let nums = (2..rec.len())
            .map(|j| rec[j].parse::<f64>().map_err(|e| CliError::format(path, e)))
            .collect::<CliResult<_>>()?;
        out.push((rec[0].to_string(), rec[1].to_string(), nums));
    }
    Ok(out)
}
