//! Plain-text embedding export.
//!
//! ```text
//! # dim 32
//! # node_type user 0 200
//! # node_type item 200 100
//! 0 user fused 0.0132 -0.25 ...
//! ```
//!
//! Header lines give the dimension and each node type's global offset and
//! count. Each row is `local_id node_type tag v1 .. vd`; values use the
//! shortest text that parses back to the same `f64`.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::hetgraph::HeteroGraph;
use crate::numerics::DenseMatrix;
use crate::{Error, Result};

/// Which table to write.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportTable {
    /// `Ẽ = E^t + Ê*`.
    #[default]
    Fused,
    /// `E^t`.
    Target,
    /// `E_s*`.
    Auxiliary,
    /// `Ê*`.
    Denoised,
    /// Shared initial table `E0`.
    Initial,
}

impl ExportTable {
    pub fn tag(self) -> &'static str {
        match self {
            ExportTable::Fused => "fused",
            ExportTable::Target => "target",
            ExportTable::Auxiliary => "auxiliary",
            ExportTable::Denoised => "denoised",
            ExportTable::Initial => "initial",
        }
    }
}

impl FromStr for ExportTable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            ExportTable::Fused,
            ExportTable::Target,
            ExportTable::Auxiliary,
            ExportTable::Denoised,
            ExportTable::Initial,
        ]
        .into_iter()
        .find(|t| t.tag() == s)
        .ok_or_else(|| Error::Config(format!("unknown export table `{s}`")))
    }
}

/// Contents of an export file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportedTable {
    pub dim: usize,
    /// `(name, global offset, count)` per node type.
    pub node_types: Vec<(String, usize, usize)>,
    pub tag: String,
    /// Rows in global node order.
    pub values: DenseMatrix,
}

pub fn format_embeddings(g: &HeteroGraph, tag: &str, table: &DenseMatrix) -> Result<String> {
    if table.rows() != g.total_nodes() {
        return Err(Error::shape(
            "export",
            format!("{} rows", g.total_nodes()),
            table.rows(),
        ));
    }
    if tag.is_empty() || tag.contains(char::is_whitespace) {
        return Err(Error::invalid(format!(
            "export tag `{tag}` must be one nonempty word"
        )));
    }
    let mut out = String::new();
    writeln!(out, "# dim {}", table.cols()).unwrap();
    for (t, nt) in g.node_types().iter().enumerate() {
        writeln!(out, "# node_type {} {} {}", nt.name, g.offset(t), nt.count).unwrap();
    }
    for (t, nt) in g.node_types().iter().enumerate() {
        for local in 0..nt.count {
            write!(out, "{local} {} {tag}", nt.name).unwrap();
            for v in table.row(g.offset(t) + local) {
                write!(out, " {v:?}").unwrap();
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn write_embeddings(
    path: impl AsRef<Path>,
    g: &HeteroGraph,
    tag: &str,
    table: &DenseMatrix,
) -> Result<()> {
    let path = path.as_ref();
    let text = format_embeddings(g, tag, table)?;
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn parse_embeddings(text: &str, path: &Path) -> Result<ExportedTable> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut dim = None;
    let mut node_types: Vec<(String, usize, usize)> = Vec::new();
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut tag: Option<String> = None;
    for (k, line) in text.lines().enumerate() {
        let lineno = k + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields[0] == "#" {
            match fields.get(1) {
                Some(&"dim") if fields.len() == 3 => {
                    dim = Some(
                        fields[2]
                            .parse()
                            .map_err(|_| err(lineno, "bad dimension".into()))?,
                    );
                }
                Some(&"node_type") if fields.len() == 5 => {
                    let num = |s: &str| {
                        s.parse::<usize>()
                            .map_err(|_| err(lineno, format!("bad count `{s}`")))
                    };
                    node_types.push((fields[2].to_string(), num(fields[3])?, num(fields[4])?));
                }
                _ => {}
            }
            continue;
        }
        let d = dim.ok_or_else(|| err(lineno, "row before `# dim` header".into()))?;
        if fields.len() != 3 + d {
            return Err(err(
                lineno,
                format!("expected {} fields, found {}", 3 + d, fields.len()),
            ));
        }
        let local: usize = fields[0]
            .parse()
            .map_err(|_| err(lineno, format!("bad node id `{}`", fields[0])))?;
        let &(_, offset, count) = node_types
            .iter()
            .find(|(name, ..)| name == fields[1])
            .ok_or_else(|| err(lineno, format!("undeclared node type `{}`", fields[1])))?;
        if local >= count {
            return Err(err(
                lineno,
                format!("node id {local} out of range ({count} nodes)"),
            ));
        }
        match &tag {
            Some(t) if t != fields[2] => return Err(err(lineno, "mixed tags in one file".into())),
            Some(_) => {}
            None => tag = Some(fields[2].to_string()),
        }
        let values = fields[3..]
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| err(lineno, format!("bad value `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((offset + local, values));
    }
    let dim = dim.ok_or_else(|| err(0, "missing `# dim` header".into()))?;
    let total: usize = node_types.iter().map(|t| t.2).sum();
    let mut values = DenseMatrix::zeros(total, dim);
    let mut seen = vec![false; total];
    for (global, row) in rows {
        if global >= total || std::mem::replace(&mut seen[global], true) {
            return Err(err(
                0,
                format!("row for global node {global} repeated or outside the header"),
            ));
        }
        values.row_mut(global).copy_from_slice(&row);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(err(0, format!("no row for global node {missing}")));
    }
    Ok(ExportedTable {
        dim,
        node_types,
        tag: tag.unwrap_or_default(),
        values,
    })
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<ExportedTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_embeddings(&text, path)
}
