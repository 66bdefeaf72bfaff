//! Trajectory CSV writing and reading.
//!
//! Values are rendered with Rust's shortest round-trip formatting, so a CSV
//! written and re-read recovers the exact binary64 values. Skipped ratio
//! cells (samples at equilibrium) are empty.

use std::fmt::Write as _;
use std::path::Path;

use discourse_sheaf::error::{Result, SheafError};
use discourse_sheaf::graph::VertexId;
use discourse_sheaf::joint::{conservation_matrix, JointProblem, JointRun};
use discourse_sheaf::timescale::estimate_gaps;

fn push_value(out: &mut String, v: f64) {
    let _ = write!(out, "{v}");
}

fn push_opt(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        push_value(out, v);
    }
}

/// Renders a joint trajectory with the monitored scalars, per-vertex opinion
/// norms, flattened conservation blocks for the audited vertices, and the
/// per-sample dissipation ratios used by `analyze`.
pub fn render_joint_trajectory(
    problem: &JointProblem<f64>,
    run: &JointRun<f64>,
    audited: &[VertexId],
    stride: usize,
) -> Result<String> {
    let sheaf = problem.sheaf();
    let graph = sheaf.graph();
    let gaps = estimate_gaps(problem, run)?;
    let stride = stride.max(1);

    let mut out = String::new();
    out.push_str("t,psi,delta_fro,delta_disp,x_disp,ratio_lambda,ratio_mu");
    for v in graph.vertices() {
        let _ = write!(out, ",x_{}", graph.vertex_label(v));
    }
    for &v in audited {
        let d = sheaf.vertex_dim(v);
        for i in 0..d {
            for j in 0..d {
                let _ = write!(out, ",q_{}_{}_{}", graph.vertex_label(v), i, j);
            }
        }
    }
    out.push('\n');

    let x0 = problem.ambient_opinions(&run.free_states[0]);
    let maps0 = &run.map_states[0];
    let keep = |i: usize| i.is_multiple_of(stride) || i + 1 == run.len();
    for i in 0..run.len() {
        if !keep(i) {
            continue;
        }
        push_value(&mut out, run.times[i]);
        out.push(',');
        push_value(&mut out, run.psi[i]);
        out.push(',');
        push_value(&mut out, run.map_fro[i]);
        out.push(',');
        push_value(&mut out, (&run.map_states[i] - maps0).norm());
        out.push(',');
        let x = problem.ambient_opinions(&run.free_states[i]);
        push_value(&mut out, (&x - &x0).norm());
        out.push(',');
        push_opt(&mut out, gaps.ratios_lambda[i]);
        out.push(',');
        push_opt(&mut out, gaps.ratios_mu[i]);
        for v in graph.vertices() {
            let range = sheaf.vertex_blocks().range(v.0);
            out.push(',');
            push_value(&mut out, x.rows(range.start, range.len()).norm());
        }
        for &v in audited {
            let q = conservation_matrix(problem, &run.free_states[i], &run.map_states[i], v);
            for r in 0..q.nrows() {
                for c in 0..q.ncols() {
                    out.push(',');
                    push_value(&mut out, q[(r, c)]);
                }
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Simple time/value-columns trajectory (diffusion, Poisson, learning runs).
pub fn render_scalar_trajectory(
    header: &[&str],
    times: &[f64],
    columns: &[Vec<f64>],
    stride: usize,
) -> String {
    let stride = stride.max(1);
    let mut out = String::new();
    out.push('t');
    for name in header {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    let n = times.len();
    for i in 0..n {
        if i % stride != 0 && i + 1 != n {
            continue;
        }
        push_value(&mut out, times[i]);
        for column in columns {
            out.push(',');
            push_value(&mut out, column[i]);
        }
        out.push('\n');
    }
    out
}

/// A parsed trajectory CSV: header names and per-row optional values.
#[derive(Debug, Clone)]
pub struct TrajectoryTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl TrajectoryTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// All values in a column; `None` entries are skipped samples.
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let idx = self.column_index(name)?;
        Some(
            self.rows
                .iter()
                .map(|r| r.get(idx).copied().flatten())
                .collect(),
        )
    }

    /// Dense column; errors if any entry is missing.
    pub fn dense_column(&self, name: &str) -> Result<Vec<f64>> {
        let column = self.column(name).ok_or_else(|| SheafError::Format {
            line: 1,
            reason: format!("trajectory CSV has no column {name:?}"),
        })?;
        column
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| SheafError::Format {
                    line: i + 2,
                    reason: format!("column {name:?} has an empty cell"),
                })
            })
            .collect()
    }
}

pub fn parse_trajectory(text: &str) -> Result<TrajectoryTable> {
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines.next().ok_or(SheafError::Format {
        line: 1,
        reason: "empty trajectory CSV".into(),
    })?;
    let header: Vec<String> = header_line.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(header.len());
        for cell in line.split(',') {
            if cell.is_empty() {
                row.push(None);
            } else {
                let value: f64 = cell.parse().map_err(|_| SheafError::Format {
                    line: idx + 1,
                    reason: format!("not a number: {cell:?}"),
                })?;
                row.push(Some(value));
            }
        }
        if row.len() != header.len() {
            return Err(SheafError::Format {
                line: idx + 1,
                reason: format!("row has {} cells, header has {}", row.len(), header.len()),
            });
        }
        rows.push(row);
    }
    Ok(TrajectoryTable { header, rows })
}

pub fn load_trajectory(path: &Path) -> Result<TrajectoryTable> {
    parse_trajectory(&std::fs::read_to_string(path)?)
}
