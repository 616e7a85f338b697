use std::fmt::Write as _;
use std::path::Path;
use std::thread;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::config::{load_dataset, Dataset, RunConfig, Variant};
use super::export::{write_embeddings, ExportTable};
use super::model::{Model, ModelParams};
use super::report::{json_pretty, EvalReport};
use super::train::{prepare, run, Prepared, STREAM_EVAL};
use crate::hetgraph::{inject_edge_noise, NoiseSpec};
use crate::numerics::{DenseMatrix, Rng};
use crate::tasks::Task;
use crate::{Error, Result};

/// Runs every configuration on its own thread; results keep input order.
fn run_all(configs: &[RunConfig], data: &[&Dataset]) -> Result<Vec<EvalReport>> {
    thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .zip(data)
            .map(|(cfg, ds)| s.spawn(move || run(cfg, ds).map(|(_, report)| report)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("experiment thread panicked"))
            .collect()
    })
}

/// The base run followed by every ablation, all on the same data and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub reports: Vec<EvalReport>,
}

impl AblationResult {
    pub fn get(&self, variant: Variant) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.variant == variant)
    }

    pub fn to_json(&self) -> Result<String> {
        json_pretty(self)
    }

    pub fn summary_lines(&self) -> Vec<String> {
        self.reports
            .iter()
            .flat_map(|r| {
                let v = r.variant.label();
                r.metrics
                    .iter()
                    .map(move |(k, x)| format!("{v}.{k}={x:.6}"))
            })
            .collect()
    }
}

pub fn run_ablation(base: &RunConfig) -> Result<AblationResult> {
    base.validate()?;
    let ds = load_dataset(base)?;
    run_ablation_on(base, &ds)
}

pub fn run_ablation_on(base: &RunConfig, ds: &Dataset) -> Result<AblationResult> {
    let configs: Vec<RunConfig> = std::iter::once(Variant::Full)
        .chain(Variant::ABLATIONS)
        .map(|variant| RunConfig {
            variant,
            ..base.clone()
        })
        .collect();
    let reports = run_all(&configs, &vec![ds; configs.len()])?;
    Ok(AblationResult { reports })
}

/// Metric retention under auxiliary-edge noise, in percent of the clean run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionTable {
    pub variant: Variant,
    /// The two reported metrics, e.g. `recall@20` and `ndcg@20`.
    pub metrics: [String; 2],
    pub ratios: Vec<f64>,
    pub clean: [f64; 2],
    pub rows: Vec<RetentionRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionRow {
    pub relation: String,
    /// One pair per ratio; `None` when the clean metric is zero.
    pub retention: Vec<[Option<f64>; 2]>,
    pub raw: Vec<[f64; 2]>,
}

impl RetentionTable {
    /// Mean retention over relations of metric `m` (0 or 1) at `ratio`.
    pub fn metric_retention(&self, ratio: f64, m: usize) -> Option<f64> {
        let k = self.ratios.iter().position(|&r| r == ratio)?;
        let vals = self
            .rows
            .iter()
            .map(|row| row.retention[k][m])
            .collect::<Option<Vec<f64>>>()?;
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Mean over every cell of the `ratio` column pair.
    pub fn mean_retention(&self, ratio: f64) -> Option<f64> {
        Some((self.metric_retention(ratio, 0)? + self.metric_retention(ratio, 1)?) / 2.0)
    }

    pub fn to_json(&self) -> Result<String> {
        json_pretty(self)
    }

    /// Relations as rows, one Recall/NDCG column pair per ratio.
    pub fn render(&self) -> String {
        let short = |m: &str| m.split('@').next().unwrap_or(m).to_string();
        let mut out = String::new();
        write!(out, "{:<12}", "relation").unwrap();
        for r in &self.ratios {
            let head = format!("{:.0}%", r * 100.0);
            write!(out, " | {head:^21}").unwrap();
        }
        out.push('\n');
        write!(out, "{:<12}", "").unwrap();
        for _ in &self.ratios {
            write!(
                out,
                " | {:>10} {:>10}",
                short(&self.metrics[0]),
                short(&self.metrics[1])
            )
            .unwrap();
        }
        out.push('\n');
        for row in &self.rows {
            write!(out, "{:<12}", row.relation).unwrap();
            for pair in &row.retention {
                let cell =
                    |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.2}%"));
                write!(out, " | {:>10} {:>10}", cell(pair[0]), cell(pair[1])).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

fn metric_pair(cfg: &RunConfig) -> [String; 2] {
    match cfg.task() {
        Task::Link => [
            format!("recall@{}", cfg.top_k),
            format!("ndcg@{}", cfg.top_k),
        ],
        Task::Node => ["micro_f1".into(), "macro_f1".into()],
    }
}

fn noise_seed(seed: u64, relation: usize, ratio: usize) -> u64 {
    Rng::new(seed)
        .derive(1000 + (relation as u64) * 1000 + ratio as u64)
        .next_u64()
}

pub fn run_noise_robustness(cfg: &RunConfig, ratios: &[f64]) -> Result<RetentionTable> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    run_noise_robustness_on(cfg, &ds, ratios)
}

/// Retrains once per auxiliary relation and nonzero ratio with that
/// relation's edges partly replaced; ratio 0 reuses the clean run.
pub fn run_noise_robustness_on(
    cfg: &RunConfig,
    ds: &Dataset,
    ratios: &[f64],
) -> Result<RetentionTable> {
    if let Some(r) = ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::Config(format!("noise ratio {r} outside [0, 1]")));
    }
    let g = &ds.graph;
    let aux: Vec<(usize, String)> = g
        .relations()
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != g.target_index())
        .map(|(k, r)| (k, r.name.clone()))
        .collect();
    if aux.is_empty() {
        return Err(Error::Data(
            "noise robustness needs at least one auxiliary relation".into(),
        ));
    }

    let mut noisy = Vec::new();
    let mut jobs = Vec::new();
    for (k, name) in &aux {
        for (j, &ratio) in ratios.iter().enumerate() {
            if ratio > 0.0 {
                let spec = NoiseSpec {
                    relation: name.clone(),
                    ratio,
                    seed: noise_seed(cfg.seed, *k, j),
                };
                noisy.push(Dataset {
                    graph: inject_edge_noise(g, &spec)?,
                    ..ds.clone()
                });
                jobs.push((*k, j));
            }
        }
    }
    let mut data: Vec<&Dataset> = vec![ds];
    data.extend(noisy.iter());
    let reports = run_all(&vec![cfg.clone(); data.len()], &data)?;

    let metrics = metric_pair(cfg);
    let pick = |r: &EvalReport| -> Result<[f64; 2]> {
        let get = |m: &String| {
            r.metric(m)
                .ok_or_else(|| Error::Data(format!("report lacks metric `{m}`")))
        };
        Ok([get(&metrics[0])?, get(&metrics[1])?])
    };
    let clean = pick(&reports[0])?;
    let retain = |v: [f64; 2]| [0, 1].map(|m| (clean[m] > 0.0).then(|| v[m] / clean[m] * 100.0));
    let mut rows: Vec<RetentionRow> = aux
        .iter()
        .map(|(_, name)| RetentionRow {
            relation: name.clone(),
            retention: vec![retain(clean); ratios.len()],
            raw: vec![clean; ratios.len()],
        })
        .collect();
    for ((k, j), report) in jobs.iter().zip(&reports[1..]) {
        let row = aux
            .iter()
            .position(|(a, _)| a == k)
            .expect("job relation is auxiliary");
        let v = pick(report)?;
        rows[row].raw[*j] = v;
        rows[row].retention[*j] = retain(v);
    }
    Ok(RetentionTable {
        variant: cfg.variant,
        metrics,
        ratios: ratios.to_vec(),
        clean,
        rows,
    })
}

/// Cartesian product of `key=value1,value2,...` axes applied to `base`.
pub fn expand_grid(base: &RunConfig, axes: &[(String, Vec<String>)]) -> Result<Vec<RunConfig>> {
    let mut out = vec![base.clone()];
    for (key, values) in axes {
        if values.is_empty() {
            return Err(Error::Config(format!("grid axis `{key}` has no values")));
        }
        let mut next = Vec::with_capacity(out.len() * values.len());
        for cfg in &out {
            for v in values {
                let mut c = cfg.clone();
                c.set(key, v)?;
                next.push(c);
            }
        }
        out = next;
    }
    for c in &out {
        c.validate()?;
    }
    Ok(out)
}

/// Parses `key=v1,v2` into a grid axis.
pub fn parse_axis(text: &str) -> Result<(String, Vec<String>)> {
    let (key, values) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("grid axis `{text}` lacks `=`")))?;
    Ok((
        key.trim().to_string(),
        values.split(',').map(|v| v.trim().to_string()).collect(),
    ))
}

pub fn run_grid(base: &RunConfig, axes: &[(String, Vec<String>)]) -> Result<Vec<EvalReport>> {
    let configs = expand_grid(base, axes)?;
    let ds = load_dataset(base)?;
    // Axes may touch the data source, so reload only when it differs.
    let mut owned = Vec::new();
    let mut refs: Vec<Option<usize>> = Vec::new();
    for c in &configs {
        if c.data == base.data {
            refs.push(None);
        } else {
            owned.push(load_dataset(c)?);
            refs.push(Some(owned.len() - 1));
        }
    }
    let data: Vec<&Dataset> = refs.iter().map(|r| r.map_or(&ds, |k| &owned[k])).collect();
    run_all(&configs, &data)
}

/// Computes one of the exportable tables on the training graph.
pub fn embedding_table(
    cfg: &RunConfig,
    prep: &Prepared,
    params: &ModelParams,
    which: ExportTable,
) -> Result<DenseMatrix> {
    params.check_shapes(&prep.graph, cfg)?;
    if which == ExportTable::Initial {
        return Ok(params.embeddings.tables()[0].clone());
    }
    let model = Model::new(&prep.graph, cfg, &params.side_types)?;
    let pass = model.forward(params, &mut Rng::new(cfg.seed).derive(STREAM_EVAL))?;
    Ok(match which {
        ExportTable::Fused => pass.fused,
        ExportTable::Target => pass.target().clone(),
        ExportTable::Denoised => pass.denoised,
        ExportTable::Auxiliary => pass.auxiliary().cloned().ok_or_else(|| {
            Error::invalid(format!("variant {} encodes no auxiliary view", cfg.variant))
        })?,
        ExportTable::Initial => unreachable!(),
    })
}

pub fn export_embeddings(
    cfg: &RunConfig,
    ds: &Dataset,
    params: &ModelParams,
    which: ExportTable,
    path: impl AsRef<Path>,
) -> Result<()> {
    let prep = prepare(cfg, ds)?;
    let table = embedding_table(cfg, &prep, params, which)?;
    write_embeddings(path, &prep.graph, which.tag(), &table)
}
