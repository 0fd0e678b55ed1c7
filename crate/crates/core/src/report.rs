//! Training-curve and vote-sweep reports as self-contained SVG.
//!
//! Text output keeps the toolchain honest: charts diff cleanly in tests
//! and need no rasterizer. Each metrics column becomes one line chart;
//! the vote sweep becomes a single chart with P, R, and F0.5 series.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::grpo::TrainingMetrics;
use crate::voting::VotePoint;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: header is missing column(s): {}", missing.join(", "))]
    MissingColumns { path: String, missing: Vec<String> },
    #[error("{path}: unknown column {column}")]
    UnknownColumn { path: String, column: String },
    #[error("{path}:{line}: {message}")]
    BadRow {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: no data rows")]
    Empty { path: String },
}

/// Parse a CSV with the given required columns (any order, no extras).
/// Returns rows of f64 values arranged in `required` order.
fn read_csv(
    path: impl AsRef<Path>,
    required: &[&str],
) -> Result<Vec<Vec<f64>>, ReportError> {
    let path_str = path.as_ref().display().to_string();
    let text = fs::read_to_string(path.as_ref()).map_err(|source| ReportError::Read {
        path: path_str.clone(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, h)| h)
        .unwrap_or("")
        .trim_end_matches('\r');
    let names: Vec<&str> = if header.is_empty() {
        Vec::new()
    } else {
        header.split(',').map(str::trim).collect()
    };
    for name in &names {
        if !required.contains(name) {
            return Err(ReportError::UnknownColumn {
                path: path_str,
                column: name.to_string(),
            });
        }
    }
    let missing: Vec<String> = required
        .iter()
        .filter(|r| !names.contains(r))
        .map(|r| r.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(ReportError::MissingColumns {
            path: path_str,
            missing,
        });
    }
    // Column index in file order → position in `required` order.
    let positions: Vec<usize> = names
        .iter()
        .map(|n| required.iter().position(|r| r == n).unwrap())
        .collect();

    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != required.len() {
            return Err(ReportError::BadRow {
                path: path_str,
                line: i + 1,
                message: format!(
                    "expected {} fields, found {}",
                    required.len(),
                    fields.len()
                ),
            });
        }
        let mut row = vec![0.0; required.len()];
        for (j, field) in fields.iter().enumerate() {
            row[positions[j]] = field.trim().parse::<f64>().map_err(|_| ReportError::BadRow {
                path: path_str.clone(),
                line: i + 1,
                message: format!("not a number: {field:?}"),
            })?;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ReportError::Empty { path: path_str });
    }
    Ok(rows)
}

/// Read a training metrics CSV (`step,mean_reward,mean_resp_len,mean_entropy`).
pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<TrainingMetrics>, ReportError> {
    let rows = read_csv(&path, &["step", "mean_reward", "mean_resp_len", "mean_entropy"])?;
    Ok(rows
        .into_iter()
        .map(|r| TrainingMetrics {
            step: r[0] as u64,
            mean_reward: r[1],
            mean_resp_len: r[2],
            mean_entropy: r[3],
        })
        .collect())
}

/// Read a vote sweep CSV (`n,p,r,f05`).
pub fn read_vote_csv(path: impl AsRef<Path>) -> Result<Vec<VotePoint>, ReportError> {
    let rows = read_csv(&path, &["n", "p", "r", "f05"])?;
    Ok(rows
        .into_iter()
        .map(|r| VotePoint {
            n: r[0] as usize,
            precision: r[1],
            recall: r[2],
            f05: r[3],
        })
        .collect())
}

pub struct Series<'a> {
    pub name: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 620.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 360.0;

/// Render one line chart. Y-range is padded so a constant series still
/// draws as a visible flat line across the full plot width; coordinates
/// are fixed to two decimals so output is byte-stable.
pub fn line_chart(title: &str, x_label: &str, series: &[Series]) -> String {
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let ys: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
    let (x_min, x_max) = bounds(&xs);
    let (mut y_min, mut y_max) = bounds(&ys);
    if y_max - y_min < 1e-12 {
        let pad = y_min.abs().max(1.0) * 0.1;
        y_min -= pad;
        y_max += pad;
    }
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let to_x = |x: f64| LEFT + (x - x_min) / x_span * (RIGHT - LEFT);
    let to_y = |y: f64| BOTTOM - (y - y_min) / (y_max - y_min) * (BOTTOM - TOP);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = write!(
        svg,
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    );
    let _ = write!(
        svg,
        "  <text x=\"{:.2}\" y=\"22\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        title
    );
    // Axes and a mid-height guide line.
    let _ = write!(
        svg,
        "  <line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{BOTTOM}\" stroke=\"#444\"/>\n\
         \x20 <line x1=\"{LEFT}\" y1=\"{BOTTOM}\" x2=\"{RIGHT}\" y2=\"{BOTTOM}\" stroke=\"#444\"/>\n\
         \x20 <line x1=\"{LEFT}\" y1=\"{:.2}\" x2=\"{RIGHT}\" y2=\"{:.2}\" stroke=\"#ddd\"/>\n",
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0
    );
    // Tick labels: y min/max, x min/max.
    let _ = write!(
        svg,
        "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
        LEFT - 6.0,
        BOTTOM + 4.0,
        trim_float(y_min)
    );
    let _ = write!(
        svg,
        "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
        LEFT - 6.0,
        TOP + 4.0,
        trim_float(y_max)
    );
    let _ = write!(
        svg,
        "  <text x=\"{LEFT}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
        BOTTOM + 20.0,
        trim_float(x_min)
    );
    let _ = write!(
        svg,
        "  <text x=\"{RIGHT}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
        BOTTOM + 20.0,
        trim_float(x_max)
    );
    let _ = write!(
        svg,
        "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
        (LEFT + RIGHT) / 2.0,
        BOTTOM + 34.0,
        x_label
    );

    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", to_x(x), to_y(y)))
            .collect();
        let _ = write!(
            svg,
            "  <polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            s.color,
            pts.join(" ")
        );
        if series.len() > 1 {
            let y = TOP + 14.0 * i as f64;
            let _ = write!(
                svg,
                "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"10\" height=\"3\" fill=\"{}\"/>\n\
                 \x20 <text x=\"{:.2}\" y=\"{:.2}\">{}</text>\n",
                RIGHT - 70.0,
                y - 2.0,
                s.color,
                RIGHT - 56.0,
                y + 3.0,
                s.name
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if !min.is_finite() || !max.is_finite() {
        (0.0, 1.0)
    } else {
        (min, max)
    }
}

fn trim_float(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesSummary {
    pub first: f64,
    pub last: f64,
    pub min: f64,
    pub max: f64,
}

fn summarize(values: impl Iterator<Item = f64>) -> SeriesSummary {
    let values: Vec<f64> = values.collect();
    let (min, max) = bounds(&values);
    SeriesSummary {
        first: values[0],
        last: *values.last().unwrap(),
        min,
        max,
    }
}

/// Files produced by [`write_report`], in write order.
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub files: Vec<PathBuf>,
}

/// Emit the training curves (one SVG per metrics column, titled exactly
/// `reward`, `response length`, `entropy`), an optional vote chart, and
/// `summary.json` with first/last/min/max per series.
pub fn write_report(
    metrics: &[TrainingMetrics],
    vote: Option<&[VotePoint]>,
    out_dir: impl AsRef<Path>,
) -> Result<ReportFiles, ReportError> {
    assert!(!metrics.is_empty(), "write_report needs at least one row");
    let out_dir = out_dir.as_ref();
    let mut files = Vec::new();
    let save = |name: &str, content: String, files: &mut Vec<PathBuf>| {
        let path = out_dir.join(name);
        fs::write(&path, content).map_err(|source| ReportError::Write {
            path: path.display().to_string(),
            source,
        })?;
        files.push(path);
        Ok::<(), ReportError>(())
    };

    let steps: Vec<f64> = metrics.iter().map(|m| m.step as f64).collect();
    let panels: [(&str, &str, Box<dyn Fn(&TrainingMetrics) -> f64>); 3] = [
        ("reward", "reward.svg", Box::new(|m| m.mean_reward)),
        ("response length", "response_length.svg", Box::new(|m| m.mean_resp_len)),
        ("entropy", "entropy.svg", Box::new(|m| m.mean_entropy)),
    ];
    let mut summary: BTreeMap<String, SeriesSummary> = BTreeMap::new();
    for (title, file, get) in &panels {
        let series = Series {
            name: title,
            color: "#1f77b4",
            points: steps.iter().copied().zip(metrics.iter().map(get)).collect(),
        };
        save(file, line_chart(title, "step", &[series]), &mut files)?;
        summary.insert(
            file.trim_end_matches(".svg").to_string(),
            summarize(metrics.iter().map(get)),
        );
    }

    if let Some(points) = vote {
        assert!(!points.is_empty(), "vote sweep needs at least one row");
        let ns: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
        let with_ns =
            |values: Vec<f64>| -> Vec<(f64, f64)> { ns.iter().copied().zip(values).collect() };
        let chart_series = vec![
            Series {
                name: "p",
                color: "#1f77b4",
                points: with_ns(points.iter().map(|p| p.precision).collect()),
            },
            Series {
                name: "r",
                color: "#d62728",
                points: with_ns(points.iter().map(|p| p.recall).collect()),
            },
            Series {
                name: "f05",
                color: "#2ca02c",
                points: with_ns(points.iter().map(|p| p.f05).collect()),
            },
        ];
        save(
            "vote.svg",
            line_chart("vote count and score", "n", &chart_series),
            &mut files,
        )?;
        summary.insert("vote_p".into(), summarize(points.iter().map(|p| p.precision)));
        summary.insert("vote_r".into(), summarize(points.iter().map(|p| p.recall)));
        summary.insert("vote_f05".into(), summarize(points.iter().map(|p| p.f05)));
    }

    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    save("summary.json", json + "\n", &mut files)?;
    Ok(ReportFiles { files })
}
