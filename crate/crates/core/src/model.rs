//! Plain-text model format for sheaves, opinions, clamps, adaptation sets and
//! per-edge policies.
//!
//! The format is line-oriented with bracketed section headers:
//!
//! ```text
//! sheaf-model v1
//! [vertices]
//! v1 1
//! v2 2
//! [edges]
//! e12 v1 v2 1
//! [restriction v1 e12]
//! 1 1
//! -2
//! [cochain0]
//! v1 2
//! v2 1 -2
//! [stubborn v2]
//! 2 1
//! 1
//! 0
//! values 1
//! [adapting]
//! v1 e12
//! [policy]
//! e12 universal-adaptation
//! ```
//!
//! Matrices are row-major with explicit `rows cols` headers; nothing is
//! inferred from context. Values are binary64 and rendered with Rust's
//! shortest round-trip formatting, so save-then-load is value-exact and
//! saving a canonical document is byte-identical. Lines starting with `#`
//! and blank lines are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SheafError};
use crate::graph::Graph;
use crate::joint::{Scenario, ScenarioPolicy};
use crate::learning::AdaptationSpec;
use crate::sheaf::{Cochain0, Sheaf};
use crate::stubborn::StubbornSpec;

/// Everything a model file can carry. The sheaf is mandatory; the rest is
/// optional.
#[derive(Debug, Clone)]
pub struct ModelDocument {
    pub sheaf: Sheaf<f64>,
    pub cochain0: Option<Cochain0<f64>>,
    pub stubborn: Option<StubbornSpec<f64>>,
    pub adapting: Option<AdaptationSpec>,
    pub policy: Option<ScenarioPolicy>,
}

const HEADER: &str = "sheaf-model v1";

struct Section {
    name: String,
    args: Vec<String>,
    header_line: usize,
    rows: Vec<(usize, Vec<String>)>,
}

fn tokenize(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != HEADER {
                return Err(SheafError::Format {
                    line: line_no,
                    reason: format!("expected header {HEADER:?}, found {line:?}"),
                });
            }
            saw_header = true;
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let inner = inner.strip_suffix(']').ok_or_else(|| SheafError::Format {
                line: line_no,
                reason: "unterminated section header".into(),
            })?;
            let mut parts = inner.split_whitespace();
            let name = parts.next().ok_or_else(|| SheafError::Format {
                line: line_no,
                reason: "empty section header".into(),
            })?;
            sections.push(Section {
                name: name.to_string(),
                args: parts.map(str::to_string).collect(),
                header_line: line_no,
                rows: Vec::new(),
            });
            continue;
        }
        let section = sections.last_mut().ok_or_else(|| SheafError::Format {
            line: line_no,
            reason: "data before the first section header".into(),
        })?;
        section.rows.push((
            line_no,
            line.split_whitespace().map(str::to_string).collect(),
        ));
    }
    if !saw_header {
        return Err(SheafError::Format {
            line: 1,
            reason: format!("missing header {HEADER:?}"),
        });
    }
    Ok(sections)
}

fn parse_usize(token: &str, line: usize, what: &str) -> Result<usize> {
    token.parse().map_err(|_| SheafError::Format {
        line,
        reason: format!("{what}: expected a nonnegative integer, found {token:?}"),
    })
}

fn parse_f64(token: &str, line: usize, what: &str) -> Result<f64> {
    let value: f64 = token.parse().map_err(|_| SheafError::Format {
        line,
        reason: format!("{what}: expected a number, found {token:?}"),
    })?;
    if !value.is_finite() {
        return Err(SheafError::Format {
            line,
            reason: format!("{what}: value must be finite"),
        });
    }
    Ok(value)
}

fn parse_matrix(
    rows: &[(usize, Vec<String>)],
    at: &mut usize,
    header_line: usize,
    what: &str,
) -> Result<DMatrix<f64>> {
    let (shape_line, shape) = rows.get(*at).ok_or_else(|| SheafError::Format {
        line: header_line,
        reason: format!("{what}: missing `rows cols` line"),
    })?;
    if shape.len() != 2 {
        return Err(SheafError::Format {
            line: *shape_line,
            reason: format!("{what}: expected `rows cols`, found {} tokens", shape.len()),
        });
    }
    let nrows = parse_usize(&shape[0], *shape_line, what)?;
    let ncols = parse_usize(&shape[1], *shape_line, what)?;
    *at += 1;
    let mut m = DMatrix::zeros(nrows, ncols);
    // Zero-width rows carry no tokens and are not serialized.
    if ncols == 0 {
        return Ok(m);
    }
    for i in 0..nrows {
        let (line, tokens) = rows.get(*at).ok_or_else(|| SheafError::Format {
            line: *shape_line,
            reason: format!("{what}: matrix truncated at row {i}"),
        })?;
        if tokens.len() != ncols {
            return Err(SheafError::Format {
                line: *line,
                reason: format!(
                    "{what}: row {i} has {} entries, expected {ncols}",
                    tokens.len()
                ),
            });
        }
        for (j, tok) in tokens.iter().enumerate() {
            m[(i, j)] = parse_f64(tok, *line, what)?;
        }
        *at += 1;
    }
    Ok(m)
}

/// Parses a model document from text.
pub fn parse_model(text: &str) -> Result<ModelDocument> {
    let sections = tokenize(text)?;

    let find_unique = |name: &str| -> Result<Option<&Section>> {
        let hits: Vec<&Section> = sections.iter().filter(|s| s.name == name).collect();
        match hits.len() {
            0 => Ok(None),
            1 => Ok(Some(hits[0])),
            _ => Err(SheafError::Format {
                line: hits[1].header_line,
                reason: format!("duplicate [{name}] section"),
            }),
        }
    };

    // Graph.
    let vsec = find_unique("vertices")?.ok_or(SheafError::Format {
        line: 1,
        reason: "missing [vertices] section".into(),
    })?;
    let mut vertices = Vec::new();
    let mut vertex_dims = Vec::new();
    for (line, tokens) in &vsec.rows {
        if tokens.len() != 2 {
            return Err(SheafError::Format {
                line: *line,
                reason: format!(
                    "vertex row: expected `id dim`, found {} tokens",
                    tokens.len()
                ),
            });
        }
        vertices.push(tokens[0].clone());
        vertex_dims.push(parse_usize(&tokens[1], *line, "vertex dim")?);
    }
    let esec = find_unique("edges")?.ok_or(SheafError::Format {
        line: 1,
        reason: "missing [edges] section".into(),
    })?;
    let mut edges = Vec::new();
    let mut edge_dims = Vec::new();
    for (line, tokens) in &esec.rows {
        if tokens.len() != 4 {
            return Err(SheafError::Format {
                line: *line,
                reason: format!(
                    "edge row: expected `id tail head dim`, found {} tokens",
                    tokens.len()
                ),
            });
        }
        edges.push((tokens[0].clone(), tokens[1].clone(), tokens[2].clone()));
        edge_dims.push(parse_usize(&tokens[3], *line, "edge dim")?);
    }
    let graph = Graph::new(vertices, edges)?;

    // Restriction maps.
    let mut restrictions = BTreeMap::new();
    for section in sections.iter().filter(|s| s.name == "restriction") {
        if section.args.len() != 2 {
            return Err(SheafError::Format {
                line: section.header_line,
                reason: "restriction header: expected [restriction <vertex> <edge>]".into(),
            });
        }
        let v = graph
            .vertex_by_label(&section.args[0])
            .ok_or_else(|| SheafError::Format {
                line: section.header_line,
                reason: format!("unknown vertex {:?}", section.args[0]),
            })?;
        let e = graph
            .edge_by_label(&section.args[1])
            .ok_or_else(|| SheafError::Format {
                line: section.header_line,
                reason: format!("unknown edge {:?}", section.args[1]),
            })?;
        let mut at = 0;
        let m = parse_matrix(&section.rows, &mut at, section.header_line, "restriction")?;
        if at != section.rows.len() {
            return Err(SheafError::Format {
                line: section.rows[at].0,
                reason: "trailing rows after restriction matrix".into(),
            });
        }
        if restrictions.insert((v, e), m).is_some() {
            return Err(SheafError::Format {
                line: section.header_line,
                reason: format!(
                    "duplicate restriction for ({}, {})",
                    section.args[0], section.args[1]
                ),
            });
        }
    }
    let sheaf = Sheaf::new(graph, vertex_dims, edge_dims, restrictions)?;
    let graph = sheaf.graph();

    // Opinions.
    let cochain0 = match find_unique("cochain0")? {
        None => None,
        Some(section) => {
            let mut blocks: Vec<Option<DVector<f64>>> = vec![None; graph.vertex_count()];
            for (line, tokens) in &section.rows {
                let v = graph
                    .vertex_by_label(&tokens[0])
                    .ok_or_else(|| SheafError::Format {
                        line: *line,
                        reason: format!("unknown vertex {:?}", tokens[0]),
                    })?;
                let dim = sheaf.vertex_dim(v);
                if tokens.len() != dim + 1 {
                    return Err(SheafError::Format {
                        line: *line,
                        reason: format!(
                            "cochain0 block at {}: expected {dim} values, found {}",
                            tokens[0],
                            tokens.len() - 1
                        ),
                    });
                }
                let mut block = DVector::zeros(dim);
                for (j, tok) in tokens[1..].iter().enumerate() {
                    block[j] = parse_f64(tok, *line, "cochain0 value")?;
                }
                if blocks[v.0].replace(block).is_some() {
                    return Err(SheafError::Format {
                        line: *line,
                        reason: format!("duplicate cochain0 block for {}", tokens[0]),
                    });
                }
            }
            let blocks: Vec<DVector<f64>> = blocks
                .into_iter()
                .enumerate()
                .map(|(i, b)| b.unwrap_or_else(|| DVector::zeros(sheaf.vertex_dims()[i])))
                .collect();
            Some(Cochain0::from_blocks(blocks))
        }
    };

    // Clamped directions.
    let stubborn_sections: Vec<&Section> =
        sections.iter().filter(|s| s.name == "stubborn").collect();
    let stubborn = if stubborn_sections.is_empty() {
        None
    } else {
        let mut entries = BTreeMap::new();
        for section in stubborn_sections {
            if section.args.len() != 1 {
                return Err(SheafError::Format {
                    line: section.header_line,
                    reason: "stubborn header: expected [stubborn <vertex>]".into(),
                });
            }
            let v = graph
                .vertex_by_label(&section.args[0])
                .ok_or_else(|| SheafError::Format {
                    line: section.header_line,
                    reason: format!("unknown vertex {:?}", section.args[0]),
                })?;
            let mut at = 0;
            let basis = parse_matrix(
                &section.rows,
                &mut at,
                section.header_line,
                "stubborn basis",
            )?;
            let (line, tokens) = section.rows.get(at).ok_or_else(|| SheafError::Format {
                line: section.header_line,
                reason: "stubborn section missing `values ...` line".into(),
            })?;
            if tokens.first().map(String::as_str) != Some("values") {
                return Err(SheafError::Format {
                    line: *line,
                    reason: "expected `values ...` after the basis matrix".into(),
                });
            }
            if tokens.len() != basis.ncols() + 1 {
                return Err(SheafError::Format {
                    line: *line,
                    reason: format!(
                        "expected {} clamped values, found {}",
                        basis.ncols(),
                        tokens.len() - 1
                    ),
                });
            }
            let mut values = DVector::zeros(basis.ncols());
            for (j, tok) in tokens[1..].iter().enumerate() {
                values[j] = parse_f64(tok, *line, "clamped value")?;
            }
            if entries.insert(v, (basis, values)).is_some() {
                return Err(SheafError::Format {
                    line: section.header_line,
                    reason: format!("duplicate [stubborn {}] section", section.args[0]),
                });
            }
        }
        Some(StubbornSpec::new(&sheaf, entries)?)
    };

    // Adapting incidences. An empty section means an explicit empty set.
    let adapting = match find_unique("adapting")? {
        None => None,
        Some(section) => {
            let mut pairs = Vec::new();
            for (line, tokens) in &section.rows {
                if tokens.len() != 2 {
                    return Err(SheafError::Format {
                        line: *line,
                        reason: "adapting row: expected `<vertex> <edge>`".into(),
                    });
                }
                let v = graph
                    .vertex_by_label(&tokens[0])
                    .ok_or_else(|| SheafError::Format {
                        line: *line,
                        reason: format!("unknown vertex {:?}", tokens[0]),
                    })?;
                let e = graph
                    .edge_by_label(&tokens[1])
                    .ok_or_else(|| SheafError::Format {
                        line: *line,
                        reason: format!("unknown edge {:?}", tokens[1]),
                    })?;
                pairs.push((v, e));
            }
            Some(AdaptationSpec::new(graph, pairs)?)
        }
    };

    // Per-edge scenarios.
    let policy = match find_unique("policy")? {
        None => None,
        Some(section) => {
            let mut per_edge = BTreeMap::new();
            for (line, tokens) in &section.rows {
                if tokens.len() != 2 {
                    return Err(SheafError::Format {
                        line: *line,
                        reason: "policy row: expected `<edge> <scenario>`".into(),
                    });
                }
                let e = graph
                    .edge_by_label(&tokens[0])
                    .ok_or_else(|| SheafError::Format {
                        line: *line,
                        reason: format!("unknown edge {:?}", tokens[0]),
                    })?;
                let scenario = Scenario::parse(&tokens[1]).ok_or_else(|| SheafError::Format {
                    line: *line,
                    reason: format!("unknown scenario {:?}", tokens[1]),
                })?;
                if per_edge.insert(e, scenario).is_some() {
                    return Err(SheafError::Format {
                        line: *line,
                        reason: format!("duplicate policy row for {}", tokens[0]),
                    });
                }
            }
            Some(ScenarioPolicy::new(per_edge))
        }
    };

    Ok(ModelDocument {
        sheaf,
        cochain0,
        stubborn,
        adapting,
        policy,
    })
}

fn write_f64(out: &mut String, v: f64) {
    // Shortest decimal that parses back to the same binary64.
    let _ = write!(out, "{v}");
}

/// Renders a document in canonical form: fixed section order, declaration
/// order within sections, shortest round-trip float formatting.
pub fn render_model(doc: &ModelDocument) -> String {
    let sheaf = &doc.sheaf;
    let graph = sheaf.graph();
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');

    out.push_str("[vertices]\n");
    for v in graph.vertices() {
        let _ = writeln!(out, "{} {}", graph.vertex_label(v), sheaf.vertex_dim(v));
    }
    out.push_str("[edges]\n");
    for e in graph.edges() {
        let edge = graph.edge(e);
        let _ = writeln!(
            out,
            "{} {} {} {}",
            edge.label,
            graph.vertex_label(edge.tail),
            graph.vertex_label(edge.head),
            sheaf.edge_dim(e)
        );
    }
    for (&(v, e), m) in sheaf.restrictions() {
        let _ = writeln!(
            out,
            "[restriction {} {}]",
            graph.vertex_label(v),
            graph.edge_label(e)
        );
        let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
        if m.ncols() > 0 {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    if j > 0 {
                        out.push(' ');
                    }
                    write_f64(&mut out, m[(i, j)]);
                }
                out.push('\n');
            }
        }
    }
    if let Some(x) = &doc.cochain0 {
        out.push_str("[cochain0]\n");
        for v in graph.vertices() {
            let block = x.block(v);
            out.push_str(graph.vertex_label(v));
            for i in 0..block.len() {
                out.push(' ');
                write_f64(&mut out, block[i]);
            }
            out.push('\n');
        }
    }
    if let Some(spec) = &doc.stubborn {
        for v in graph.vertices() {
            if spec.stubborn_dim(v) == 0 {
                continue;
            }
            let basis = spec.basis(v);
            let _ = writeln!(out, "[stubborn {}]", graph.vertex_label(v));
            let _ = writeln!(out, "{} {}", basis.nrows(), basis.ncols());
            for i in 0..basis.nrows() {
                for j in 0..basis.ncols() {
                    if j > 0 {
                        out.push(' ');
                    }
                    write_f64(&mut out, basis[(i, j)]);
                }
                out.push('\n');
            }
            out.push_str("values");
            let values = spec.values(v);
            for i in 0..values.len() {
                out.push(' ');
                write_f64(&mut out, values[i]);
            }
            out.push('\n');
        }
    }
    if let Some(adapt) = &doc.adapting {
        out.push_str("[adapting]\n");
        for (v, e) in adapt.incidences() {
            let _ = writeln!(out, "{} {}", graph.vertex_label(v), graph.edge_label(e));
        }
    }
    if let Some(policy) = &doc.policy {
        out.push_str("[policy]\n");
        for (&e, &s) in policy.per_edge() {
            let _ = writeln!(out, "{} {}", graph.edge_label(e), s.name());
        }
    }
    out
}

pub fn load_model(path: &Path) -> Result<ModelDocument> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}

pub fn save_model(path: &Path, doc: &ModelDocument) -> Result<()> {
    std::fs::write(path, render_model(doc))?;
    Ok(())
}
