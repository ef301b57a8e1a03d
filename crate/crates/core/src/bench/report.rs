use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BenchError, CellResult, Method, TrialReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    Plotdata,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "plotdata" => Ok(ReportFormat::Plotdata),
            other => Err(format!("unknown report format {other:?} (json, csv, plotdata)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub psr: f64,
    pub epsilon: f64,
    pub mi: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub r2_mean: f64,
    pub r2_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub method: Method,
    pub points: Vec<PlotPoint>,
}

/// Per-method curves over psr plus a flat non-private reference line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub dataset: String,
    pub series: Vec<PlotSeries>,
    pub reference: PlotPoint,
}

fn point(c: &CellResult) -> PlotPoint {
    PlotPoint {
        psr: c.psr,
        epsilon: c.epsilon,
        mi: c.mi,
        rmse_mean: c.rmse_mean,
        rmse_std: c.rmse_std,
        r2_mean: c.r2_mean,
        r2_std: c.r2_std,
    }
}

impl PlotData {
    pub fn from_report(report: &TrialReport) -> Self {
        let mut series: Vec<PlotSeries> = Vec::new();
        for c in report.results.iter().filter(|c| c.method != Method::NonPrivate) {
            match series.iter_mut().find(|s| s.method == c.method) {
                Some(s) => s.points.push(point(c)),
                None => series.push(PlotSeries {
                    method: c.method,
                    points: vec![point(c)],
                }),
            }
        }
        for s in &mut series {
            s.points.sort_by(|a, b| a.psr.total_cmp(&b.psr));
        }
        Self {
            dataset: report.dataset.clone(),
            series,
            reference: point(&report.reference),
        }
    }
}

fn csv_bytes(report: &TrialReport, methods: Option<Method>) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "dataset", "method", "psr", "epsilon", "mi", "metric", "mean", "std", "n_trials", "config_json",
    ])?;
    for c in report.results.iter().filter(|c| methods.is_none_or(|m| m == c.method)) {
        let config = c.config.to_string();
        for (metric, mean, std) in [("rmse", c.rmse_mean, c.rmse_std), ("r2", c.r2_mean, c.r2_std)] {
            w.write_record([
                report.dataset.as_str(),
                c.method.as_str(),
                &c.psr.to_string(),
                &c.epsilon.to_string(),
                &c.mi.to_string(),
                metric,
                &mean.to_string(),
                &std.to_string(),
                &c.n_trials.to_string(),
                &config,
            ])?;
        }
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

fn render(report: &TrialReport, format: ReportFormat, method: Option<Method>) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let body = match method {
                Some(m) => {
                    let mut r = report.clone();
                    r.results.retain(|c| c.method == m);
                    r.grid.retain(|c| c.method == m);
                    serde_json::to_vec_pretty(&r)
                }
                None => serde_json::to_vec_pretty(report),
            };
            body.expect("report serializes")
        }
        ReportFormat::Csv => csv_bytes(report, method).expect("csv into memory"),
        ReportFormat::Plotdata => {
            serde_json::to_vec_pretty(&PlotData::from_report(report)).expect("plot data serializes")
        }
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), BenchError> {
    fs::write(path, bytes).map_err(|e| BenchError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes `report` to `path` in the given format.
pub fn emit_report(report: &TrialReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<(), BenchError> {
    write(path.as_ref(), &render(report, format, None))
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// Writes `<dataset>_<method>.{json,csv}` for each method, plus the full
/// report, its CSV and the plot data. Returns the paths written.
pub fn write_results_dir(report: &TrialReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, BenchError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| BenchError::Write {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })?;
    let stem = slug(&report.dataset);
    let mut written = Vec::new();
    for &m in &report.metadata.methods {
        for (ext, format) in [("json", ReportFormat::Json), ("csv", ReportFormat::Csv)] {
            let path = dir.join(format!("{stem}_{}.{ext}", m.as_str()));
            write(&path, &render(report, format, Some(m)))?;
            written.push(path);
        }
    }
    for (name, format) in [
        ("report.json", ReportFormat::Json),
        ("results.csv", ReportFormat::Csv),
        ("plotdata.json", ReportFormat::Plotdata),
    ] {
        let path = dir.join(format!("{stem}_{name}"));
        write(&path, &render(report, format, None))?;
        written.push(path);
    }
    Ok(written)
}
