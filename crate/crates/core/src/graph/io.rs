//! CSV graph format.
//!
//! * `nodes.csv`: header `node_id,domain,category,<feature columns...>`;
//!   `domain` is `S` or `T` (`-` when no split has been applied yet),
//!   `category` an integer or `-1` when unknown, features decimal floats.
//! * `edges.csv`: header `src,dst`, one undirected edge per row.
//! * `novel.csv`: header `node_id,is_novel` with `is_novel` in `{0,1}`;
//!   evaluation-only and loaded separately by [`read_novel_mask`].

use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{AttributedGraph, Domain};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const NODES_FILE: &str = "nodes.csv";
pub const EDGES_FILE: &str = "edges.csv";
pub const NOVEL_FILE: &str = "novel.csv";

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn {
            path: path.display().to_string(),
            column: name.to_string(),
        })
}

fn parse_err(path: &Path, record: &csv::StringRecord, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line: record.position().map_or(0, |p| p.line() as usize),
        msg: msg.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?)
}

/// Writes `nodes.csv`, `edges.csv` and, when a novel mask is present, `novel.csv`.
pub fn write_graph<T: Scalar>(graph: &AttributedGraph<T>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut nodes = std::io::BufWriter::new(File::create(dir.join(NODES_FILE))?);
    write!(nodes, "node_id,domain,category")?;
    for k in 0..graph.feature_dim() {
        write!(nodes, ",f{k}")?;
    }
    writeln!(nodes)?;
    let domains = graph.domains().ok();
    for v in 0..graph.num_nodes() {
        let d = domains.map_or("-", |d| d[v].code());
        let c = graph.categories()[v].map_or(-1, i64::from);
        write!(nodes, "{v},{d},{c}")?;
        for x in graph.features().row(v) {
            write!(nodes, ",{x}")?;
        }
        writeln!(nodes)?;
    }
    nodes.flush()?;

    let mut edges = std::io::BufWriter::new(File::create(dir.join(EDGES_FILE))?);
    writeln!(edges, "src,dst")?;
    for &(i, j) in graph.edges() {
        writeln!(edges, "{i},{j}")?;
    }
    edges.flush()?;

    if let Some(mask) = graph.novel_mask() {
        let mut novel = std::io::BufWriter::new(File::create(dir.join(NOVEL_FILE))?);
        writeln!(novel, "node_id,is_novel")?;
        for (v, &m) in mask.iter().enumerate() {
            writeln!(novel, "{v},{}", u8::from(m))?;
        }
        novel.flush()?;
    }
    Ok(())
}

/// Reads `nodes.csv` and `edges.csv` from `dir`. The novel mask is never loaded here.
pub fn read_graph<T: Scalar>(dir: &Path) -> Result<AttributedGraph<T>> {
    let nodes_path = dir.join(NODES_FILE);
    let mut rdr = reader(&nodes_path)?;
    let headers = rdr.headers()?.clone();
    let id_col = column(&headers, "node_id", &nodes_path)?;
    let dom_col = column(&headers, "domain", &nodes_path)?;
    let cat_col = column(&headers, "category", &nodes_path)?;
    let feat_cols: Vec<usize> = (0..headers.len())
        .filter(|c| ![id_col, dom_col, cat_col].contains(c))
        .collect();
    if feat_cols.is_empty() {
        return Err(Error::MissingColumn {
            path: nodes_path.display().to_string(),
            column: "features".into(),
        });
    }

    let mut rows: Vec<(usize, Option<Domain>, Option<u32>, Vec<T>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id: usize = rec[id_col]
            .parse()
            .map_err(|_| parse_err(&nodes_path, &rec, format!("bad node_id `{}`", &rec[id_col])))?;
        let dom = match &rec[dom_col] {
            "S" => Some(Domain::Source),
            "T" => Some(Domain::Target),
            "-" => None,
            other => return Err(parse_err(&nodes_path, &rec, format!("bad domain `{other}`"))),
        };
        let cat: i64 = rec[cat_col]
            .parse()
            .map_err(|_| parse_err(&nodes_path, &rec, format!("bad category `{}`", &rec[cat_col])))?;
        let cat = match cat {
            -1 => None,
            c if c >= 0 && c <= i64::from(u32::MAX) => Some(c as u32),
            c => return Err(parse_err(&nodes_path, &rec, format!("bad category `{c}`"))),
        };
        let mut feats = Vec::with_capacity(feat_cols.len());
        for &c in &feat_cols {
            let x: T = rec[c]
                .parse()
                .map_err(|_| parse_err(&nodes_path, &rec, format!("bad feature `{}`", &rec[c])))?;
            if !x.is_finite() {
                return Err(parse_err(&nodes_path, &rec, "non-finite feature"));
            }
            feats.push(x);
        }
        rows.push((id, dom, cat, feats));
    }

    let n = rows.len();
    let mut slots: Vec<Option<(Option<Domain>, Option<u32>, Vec<T>)>> = vec![None; n];
    for (id, dom, cat, feats) in rows {
        if id >= n {
            return Err(Error::InvalidGraph(format!(
                "{}: node_id {id} outside 0..{n}",
                nodes_path.display()
            )));
        }
        if slots[id].replace((dom, cat, feats)).is_some() {
            return Err(Error::InvalidGraph(format!(
                "{}: duplicate node_id {id}",
                nodes_path.display()
            )));
        }
    }
    let mut data = Vec::with_capacity(n * feat_cols.len());
    let mut domains = Vec::with_capacity(n);
    let mut categories = Vec::with_capacity(n);
    for slot in slots {
        let (dom, cat, feats) = slot.expect("ids form a permutation of 0..n");
        domains.push(dom);
        categories.push(cat);
        data.extend(feats);
    }
    let domains = if domains.iter().all(Option::is_some) {
        Some(domains.into_iter().flatten().collect())
    } else if domains.iter().all(Option::is_none) {
        None
    } else {
        return Err(Error::InvalidGraph(format!(
            "{}: domain must be assigned for every node or for none",
            nodes_path.display()
        )));
    };

    let edges_path = dir.join(EDGES_FILE);
    let mut rdr = reader(&edges_path)?;
    let headers = rdr.headers()?.clone();
    let src_col = column(&headers, "src", &edges_path)?;
    let dst_col = column(&headers, "dst", &edges_path)?;
    let mut edges = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |c: usize| -> Result<usize> {
            rec[c]
                .parse()
                .map_err(|_| parse_err(&edges_path, &rec, format!("bad node index `{}`", &rec[c])))
        };
        let (i, j) = (parse(src_col)?, parse(dst_col)?);
        if i == j {
            return Err(parse_err(&edges_path, &rec, format!("self-loop on node {i}")));
        }
        edges.push((i, j));
    }

    let features = Matrix::from_vec(n, feat_cols.len(), data)?;
    AttributedGraph::new(features, edges, domains, categories, None)
}

/// Reads `novel.csv` for a graph of `num_nodes` nodes.
pub fn read_novel_mask(path: &Path, num_nodes: usize) -> Result<Vec<bool>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let id_col = column(&headers, "node_id", path)?;
    let flag_col = column(&headers, "is_novel", path)?;
    let mut mask = vec![None; num_nodes];
    for rec in rdr.records() {
        let rec = rec?;
        let id: usize = rec[id_col]
            .parse()
            .ok()
            .filter(|&id| id < num_nodes)
            .ok_or_else(|| parse_err(path, &rec, format!("bad node_id `{}`", &rec[id_col])))?;
        let flag = match &rec[flag_col] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(path, &rec, format!("bad is_novel `{other}`"))),
        };
        mask[id] = Some(flag);
    }
    mask.into_iter()
        .enumerate()
        .map(|(v, m)| {
            m.ok_or_else(|| Error::InvalidGraph(format!("{}: node {v} missing", path.display())))
        })
        .collect()
}

/// Loads the graph together with its novel mask when `novel.csv` exists.
pub fn read_graph_with_novel<T: Scalar>(dir: &Path) -> Result<AttributedGraph<T>> {
    let graph = read_graph::<T>(dir)?;
    let novel_path = dir.join(NOVEL_FILE);
    if !novel_path.exists() {
        return Ok(graph);
    }
    let mask = read_novel_mask(&novel_path, graph.num_nodes())?;
    let domains = graph.domains().ok().map(<[Domain]>::to_vec);
    graph.with_labels(domains, Some(mask))
}
