use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::export::read_embeddings;
use crate::diffusion::DiffusionConfig;
use crate::encoder::{EncoderConfig, InitMode};
use crate::hetgraph::io::format_labels;
use crate::hetgraph::{
    generate_synthetic, load_edge_list, load_labels, Buckets, HeteroGraph, LabelSet, Schema,
    SyntheticSpec,
};
use crate::numerics::DenseMatrix;
use crate::tasks::{JointLossConfig, Task};
use crate::{Error, Result};

/// Model variant: the full model or one of its ablations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[default]
    #[serde(rename = "full")]
    Full,
    /// No diffusion: raw auxiliary embeddings are fused, `λ = 0`.
    #[serde(rename = "-D")]
    NoDiffusion,
    /// No user-side diffusion.
    #[serde(rename = "-U")]
    NoUserDiffusion,
    /// No item-side diffusion.
    #[serde(rename = "-I")]
    NoItemDiffusion,
    /// No auxiliary relations at all.
    #[serde(rename = "-H")]
    NoAuxiliary,
    /// Single-level denoising autoencoder instead of diffusion.
    #[serde(rename = "DAE")]
    Dae,
}

impl Variant {
    pub const ABLATIONS: [Variant; 5] = [
        Variant::NoDiffusion,
        Variant::NoUserDiffusion,
        Variant::NoItemDiffusion,
        Variant::NoAuxiliary,
        Variant::Dae,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoDiffusion => "-D",
            Variant::NoUserDiffusion => "-U",
            Variant::NoItemDiffusion => "-I",
            Variant::NoAuxiliary => "-H",
            Variant::Dae => "DAE",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().trim_start_matches('-').to_ascii_lowercase();
        Ok(match key.as_str() {
            "full" => Variant::Full,
            "d" => Variant::NoDiffusion,
            "u" => Variant::NoUserDiffusion,
            "i" => Variant::NoItemDiffusion,
            "h" => Variant::NoAuxiliary,
            "dae" => Variant::Dae,
            _ => {
                return Err(Error::Config(format!(
                    "unknown variant `{s}` (full, -D, -U, -I, -H, DAE)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Files {
        schema: PathBuf,
        edges: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<PathBuf>,
        /// Node type the labels refer to; defaults to the target relation's source type.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label_type: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classes: Option<usize>,
        /// Embedding export file used as fixed initial embeddings.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        features: Option<PathBuf>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec::default())
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub variant: Variant,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Evaluate every this many epochs; 0 evaluates only after training.
    pub eval_every: usize,
    /// Stop after this many evaluations without improvement.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    pub top_k: usize,
    pub buckets: Vec<usize>,
    /// Standard deviation of the learnable initial embeddings.
    pub init_std: f64,
    /// Block main-task gradients from reaching the denoised embeddings.
    pub stop_gradient_denoised: bool,
    /// Labeled training nodes per class for the node task.
    pub train_per_class: usize,
    pub data: DataSource,
    pub encoder: EncoderConfig,
    pub diffusion: DiffusionConfig,
    pub loss: JointLossConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            variant: Variant::Full,
            lr: 1e-3,
            batch_size: 1024,
            epochs: 30,
            eval_every: 0,
            patience: None,
            top_k: 20,
            buckets: Buckets::default().boundaries().to_vec(),
            init_std: 0.1,
            stop_gradient_denoised: false,
            train_per_class: 20,
            data: DataSource::default(),
            encoder: EncoderConfig::default(),
            diffusion: DiffusionConfig::default(),
            loss: JointLossConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn task(&self) -> Task {
        self.loss.task
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.diffusion.validate()?;
        self.loss.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::Config("init_std must be finite and >= 0".into()));
        }
        if self.task() == Task::Node && self.train_per_class == 0 {
            return Err(Error::Config("train_per_class must be at least 1".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        self.bucket_spec()?;
        Ok(())
    }

    pub fn bucket_spec(&self) -> Result<Buckets> {
        Buckets::new(self.buckets.clone()).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let root: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(toml::Value::Table(root), "")
    }

    /// Deserializes `root`, rejecting keys that no field consumes.
    fn from_value(root: toml::Value, context: &str) -> Result<Self> {
        let cfg: Self = root
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{context}{e}")))?;
        let canonical = toml::Value::try_from(&cfg).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(key) = first_unknown_key(&root, &canonical, "") {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Sets a dotted field such as `diffusion.steps` from its text form.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let mut root = toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let mut slot = &mut root;
        let mut created = false;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = slot.as_table_mut().ok_or_else(|| {
                Error::Config(format!("`{}` is not a table", parts[..i].join(".")))
            })?;
            // Absent optional fields may be created, but only at the leaf.
            if !table.contains_key(*part) && i + 1 < parts.len() {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
            created = !table.contains_key(*part);
            slot = table
                .entry(part.to_string())
                .or_insert(toml::Value::String(String::new()));
        }
        *slot = if created {
            infer(raw)
        } else {
            coerce(slot, raw)?
        };
        *self = Self::from_value(root, &format!("{key}: "))?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn first_unknown_key(given: &toml::Value, canonical: &toml::Value, prefix: &str) -> Option<String> {
    let (toml::Value::Table(g), toml::Value::Table(c)) = (given, canonical) else {
        return None;
    };
    g.iter().find_map(|(k, v)| {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match c.get(k) {
            None => Some(path),
            Some(cv) => first_unknown_key(v, cv, &path),
        }
    })
}

/// Value for a key absent from the current config, typed by its text.
fn infer(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn coerce(existing: &toml::Value, raw: &str) -> Result<toml::Value> {
    let parsed = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"));
    Ok(match (existing, parsed) {
        (toml::Value::String(_), Some(toml::Value::String(s))) => toml::Value::String(s),
        (toml::Value::String(_), _) => toml::Value::String(raw.to_string()),
        (toml::Value::Float(_), Some(toml::Value::Integer(i))) => toml::Value::Float(i as f64),
        (_, Some(v)) => v,
        (_, None) => toml::Value::String(raw.to_string()),
    })
}

/// Graph, optional labels and optional fixed features.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: HeteroGraph,
    pub labels: Option<LabelSet>,
    pub features: Option<DenseMatrix>,
}

impl Dataset {
    /// Hash of the graph and labels.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.graph.fingerprint().as_bytes());
        if let Some(l) = &self.labels {
            h.update(format!("labels {} {}\n", l.node_type(), l.class_count()).as_bytes());
            h.update(format_labels(l).as_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let mut ds = match &cfg.data {
        DataSource::Synthetic(spec) => {
            let (graph, labels) =
                generate_synthetic(spec).map_err(|e| Error::Config(e.to_string()))?;
            Dataset {
                graph,
                labels: Some(labels),
                features: None,
            }
        }
        DataSource::Files {
            schema,
            edges,
            labels,
            label_type,
            classes,
            features,
        } => {
            let schema = Schema::load(schema)?;
            let graph = load_edge_list(edges, &schema)?;
            let labels = match labels {
                Some(path) => {
                    let ty = match label_type {
                        Some(name) => graph.node_type_index(name)?,
                        None => graph.target_relation().src_type,
                    };
                    Some(load_labels(path, ty, graph.node_count(ty), *classes)?)
                }
                None => None,
            };
            let features = match features {
                Some(path) => {
                    let table = read_embeddings(path)?.values;
                    if table.shape() != (graph.total_nodes(), cfg.encoder.dim) {
                        return Err(Error::Data(format!(
                            "features are {}x{}, expected {}x{}",
                            table.rows(),
                            table.cols(),
                            graph.total_nodes(),
                            cfg.encoder.dim
                        )));
                    }
                    Some(table)
                }
                None => None,
            };
            Dataset {
                graph,
                labels,
                features,
            }
        }
    };
    if cfg.task() == Task::Node && ds.labels.is_none() {
        return Err(Error::Config("node task needs a label file".into()));
    }
    if cfg.encoder.init == InitMode::Provided && ds.features.is_none() {
        return Err(Error::Config(
            "provided initial embeddings need a features file".into(),
        ));
    }
    if cfg.encoder.init == InitMode::Learnable {
        ds.features = None;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        let partial =
            RunConfig::from_toml("epochs = 3\n[diffusion]\nsteps = 7\ninference_steps = 2\n")
                .unwrap();
        assert_eq!(partial.epochs, 3);
        assert_eq!(partial.diffusion.steps, 7);
        assert_eq!(partial.lr, 1e-3);
        assert_eq!(
            (partial.encoder.dim, partial.encoder.layers, partial.top_k),
            (32, 3, 20)
        );
        assert!(RunConfig::from_toml("epochs = \"x\"").is_err());
    }

    #[test]
    fn dotted_overrides() {
        let mut cfg = RunConfig::default();
        cfg.set("diffusion.steps", "50").unwrap();
        cfg.set("lr", "1").unwrap();
        cfg.set("variant", "-H").unwrap();
        cfg.set("data.density", "0.1").unwrap();
        cfg.set("patience", "4").unwrap();
        cfg.set("loss.task", "node").unwrap();
        assert_eq!(cfg.diffusion.steps, 50);
        assert_eq!(cfg.lr, 1.0);
        assert_eq!(cfg.variant, Variant::NoAuxiliary);
        assert_eq!(cfg.patience, Some(4));
        assert_eq!(cfg.task(), Task::Node);
        match &cfg.data {
            DataSource::Synthetic(s) => assert_eq!(s.density, 0.1),
            other => panic!("{other:?}"),
        }
        assert!(cfg.set("nope.deeper", "1").is_err());
        assert!(cfg.set("nope", "1").is_err());
        assert!(cfg.set("encoder.dims", "1").is_err());
        assert!(RunConfig::from_toml("[encoder]\ndims = 4").is_err());
        assert!(cfg.set("epochs", "many").is_err());
    }

    #[test]
    fn variant_labels() {
        for v in [Variant::Full].into_iter().chain(Variant::ABLATIONS) {
            assert_eq!(v.label().parse::<Variant>().unwrap(), v);
        }
        assert!("-X".parse::<Variant>().is_err());
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        for bad in [
            RunConfig {
                lr: 0.0,
                ..RunConfig::default()
            },
            RunConfig {
                batch_size: 0,
                ..RunConfig::default()
            },
            RunConfig {
                buckets: vec![4, 2],
                ..RunConfig::default()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig {
            seed: 1,
            ..RunConfig::default()
        };
        assert_eq!(a.fingerprint(), RunConfig::default().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
