//! Text formats for graphs and labels.
//!
//! Edge list: one edge per line, `src_id dst_id relation [timestamp]`,
//! whitespace separated, `#` starts a comment line. Ids are local to the
//! endpoint node types declared for the relation in the schema.
//!
//! Schema (TOML):
//!
//! ```toml
//! target = "purchase"
//!
//! [[node_types]]
//! name = "user"
//! count = 31882      # optional, inferred as max id + 1
//!
//! [[relations]]
//! name = "purchase"
//! src = "user"
//! dst = "item"
//! ```
//!
//! Labels: `node_id class_id` per line, ids local to the labelled type.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HeteroGraph, LabelSet, NodeType, Relation};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub target: String,
    pub node_types: Vec<NodeTypeDecl>,
    pub relations: Vec<RelationDecl>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTypeDecl {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationDecl {
    pub name: String,
    pub src: String,
    pub dst: String,
}

impl Schema {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("schema: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading schema {}", path.display()), e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serialises")
    }

    /// Schema describing an existing graph, with explicit counts.
    pub fn of(g: &HeteroGraph) -> Self {
        Self {
            target: g.target_name().to_string(),
            node_types: g
                .node_types()
                .iter()
                .map(|t| NodeTypeDecl {
                    name: t.name.clone(),
                    count: Some(t.count),
                })
                .collect(),
            relations: g
                .relations()
                .iter()
                .map(|r| RelationDecl {
                    name: r.name.clone(),
                    src: g.node_types()[r.src_type].name.clone(),
                    dst: g.node_types()[r.dst_type].name.clone(),
                })
                .collect(),
        }
    }

    fn type_index(&self, name: &str) -> Result<usize> {
        self.node_types
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::UnknownNodeType(name.to_string()))
    }
}

struct PendingRelation {
    src: usize,
    dst: usize,
    edges: Vec<(usize, usize)>,
    timestamps: Vec<Option<i64>>,
}

pub fn load_edge_list(path: impl AsRef<Path>, schema: &Schema) -> Result<HeteroGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading edge list {}", path.display()), e))?;
    parse_edge_list(&text, schema, path)
}

pub fn parse_edge_list(text: &str, schema: &Schema, path: &Path) -> Result<HeteroGraph> {
    let mut pending: Vec<PendingRelation> = Vec::with_capacity(schema.relations.len());
    let mut by_name = BTreeMap::new();
    for (i, decl) in schema.relations.iter().enumerate() {
        pending.push(PendingRelation {
            src: schema.type_index(&decl.src)?,
            dst: schema.type_index(&decl.dst)?,
            edges: Vec::new(),
            timestamps: Vec::new(),
        });
        by_name.insert(decl.name.as_str(), i);
    }
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut max_id = vec![None::<usize>; schema.node_types.len()];
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(parse_err(
                lineno,
                format!(
                    "expected `src dst relation [timestamp]`, got {} fields",
                    fields.len()
                ),
            ));
        }
        let src: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad source id `{}`", fields[0])))?;
        let dst: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad destination id `{}`", fields[1])))?;
        let &rel = by_name
            .get(fields[2])
            .ok_or_else(|| parse_err(lineno, format!("relation `{}` not in schema", fields[2])))?;
        let ts = match fields.get(3) {
            Some(t) => Some(
                t.parse::<i64>()
                    .map_err(|_| parse_err(lineno, format!("bad timestamp `{t}`")))?,
            ),
            None => None,
        };
        let p = &mut pending[rel];
        for (ty, id) in [(p.src, src), (p.dst, dst)] {
            if let Some(count) = schema.node_types[ty].count {
                if id >= count {
                    return Err(parse_err(
                        lineno,
                        format!(
                            "id {id} out of range for node type `{}` ({count} nodes)",
                            schema.node_types[ty].name
                        ),
                    ));
                }
            }
            max_id[ty] = Some(max_id[ty].map_or(id, |m: usize| m.max(id)));
        }
        p.edges.push((src, dst));
        p.timestamps.push(ts);
    }

    let node_types = schema
        .node_types
        .iter()
        .enumerate()
        .map(|(i, t)| NodeType {
            name: t.name.clone(),
            count: t.count.unwrap_or_else(|| max_id[i].map_or(0, |m| m + 1)),
        })
        .collect();
    let mut relations = Vec::with_capacity(pending.len());
    for (decl, p) in schema.relations.iter().zip(pending) {
        let timestamps = match p.timestamps.iter().filter(|t| t.is_some()).count() {
            0 => None,
            n if n == p.timestamps.len() => Some(p.timestamps.into_iter().flatten().collect()),
            _ => {
                return Err(Error::Data(format!(
                    "relation `{}` mixes timestamped and untimestamped edges",
                    decl.name
                )))
            }
        };
        relations.push(Relation::new(
            decl.name.clone(),
            p.src,
            p.dst,
            p.edges,
            timestamps,
        )?);
    }
    HeteroGraph::new(node_types, relations, &schema.target)
}

/// Renders all relations in the edge-list format, relation by relation.
pub fn format_edge_list(g: &HeteroGraph) -> String {
    let mut out = String::new();
    for rel in g.relations() {
        let ts = rel.timestamps();
        for (k, &(s, d)) in rel.edges().iter().enumerate() {
            match ts {
                Some(ts) => writeln!(out, "{s} {d} {} {}", rel.name, ts[k]),
                None => writeln!(out, "{s} {d} {}", rel.name),
            }
            .unwrap();
        }
    }
    out
}

pub fn load_labels(
    path: impl AsRef<Path>,
    node_type: usize,
    node_count: usize,
    class_count: Option<usize>,
) -> Result<LabelSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading labels {}", path.display()), e))?;
    let mut labels = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(err("expected `node_id class_id`".into()));
        }
        let node: usize = fields[0]
            .parse()
            .map_err(|_| err(format!("bad node id `{}`", fields[0])))?;
        let class: usize = fields[1]
            .parse()
            .map_err(|_| err(format!("bad class id `{}`", fields[1])))?;
        if node >= node_count {
            return Err(err(format!(
                "node id {node} out of range ({node_count} nodes)"
            )));
        }
        labels.insert(node, class);
    }
    let classes = class_count.unwrap_or_else(|| labels.values().max().map_or(0, |m| m + 1));
    LabelSet::new(node_type, labels.into_iter().collect(), classes)
}

pub fn format_labels(labels: &LabelSet) -> String {
    let mut out = String::new();
    for &(n, c) in labels.entries() {
        writeln!(out, "{n} {c}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const RETAIL: &str = r#"
target = "purchase"

[[node_types]]
name = "user"

[[node_types]]
name = "item"

[[relations]]
name = "view"
src = "user"
dst = "item"

[[relations]]
name = "favorite"
src = "user"
dst = "item"

[[relations]]
name = "cart"
src = "user"
dst = "item"

[[relations]]
name = "purchase"
src = "user"
dst = "item"
"#;

    fn parse(text: &str, schema: &Schema) -> Result<HeteroGraph> {
        parse_edge_list(text, schema, Path::new("edges.txt"))
    }

    #[test]
    fn duplicate_lines_collapse() {
        let schema = Schema::from_toml(RETAIL).unwrap();
        let g = parse("0 1 purchase\n0 1 purchase\n", &schema).unwrap();
        assert_eq!(g.relation("purchase").unwrap().len(), 1);
    }

    #[test]
    fn empty_file_keeps_declared_counts() {
        let mut schema = Schema::from_toml(RETAIL).unwrap();
        schema.node_types[0].count = Some(5);
        schema.node_types[1].count = Some(7);
        let g = parse("# nothing here\n", &schema).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.node_count(0), 5);
        assert_eq!(g.node_count(1), 7);
    }

    #[test]
    fn four_behaviour_schema_targets_purchase() {
        let schema = Schema::from_toml(RETAIL).unwrap();
        let g = parse(
            "0 0 view\n0 0 favorite\n0 0 cart\n0 0 purchase\n2 3 view\n",
            &schema,
        )
        .unwrap();
        assert_eq!(g.target_name(), "purchase");
        assert_eq!(g.relations().len(), 4);
        assert_eq!(g.node_count(0), 3);
        assert_eq!(g.node_count(1), 4);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let schema = Schema::from_toml(RETAIL).unwrap();
        match parse("0 1 purchase\n0 x purchase\n", &schema) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse("0 1\n", &schema) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse("0 1 buy\n", &schema),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn out_of_range_rejected() {
        let mut schema = Schema::from_toml(RETAIL).unwrap();
        schema.node_types[1].count = Some(2);
        assert!(matches!(
            parse("0 2 view\n", &schema),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn timestamps_roundtrip_through_text() {
        let schema = Schema::from_toml(RETAIL).unwrap();
        let g = parse("0 1 purchase 10\n1 1 purchase 5\n", &schema).unwrap();
        assert_eq!(
            g.relation("purchase").unwrap().timestamps(),
            Some(&[10, 5][..])
        );
        let again = parse(&format_edge_list(&g), &Schema::of(&g)).unwrap();
        assert_eq!(again, g);
        assert!(parse("0 1 purchase 10\n1 1 purchase\n", &schema).is_err());
    }

    #[test]
    fn labels_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.txt");
        fs::write(&p, "0 1\n2 0\n# c\n").unwrap();
        let l = load_labels(&p, 0, 3, None).unwrap();
        assert_eq!(l.class_count(), 2);
        assert_eq!(l.entries(), &[(0, 1), (2, 0)]);
        assert!(load_labels(&p, 0, 3, Some(1)).is_err());
        assert!(load_labels(&p, 0, 2, None).is_err());
    }
}
