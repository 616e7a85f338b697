use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use diffgraph_core::diffusion::DiffusionConfig;
use diffgraph_core::harness::{
    evaluate_checkpoint, export_embeddings, load_dataset, parse_axis, reports_to_json, run,
    run_ablation_on, run_grid, run_noise_robustness_on, Checkpoint, DataSource, ExportTable,
    RunConfig,
};
use diffgraph_core::hetgraph::io::{format_edge_list, format_labels};
use diffgraph_core::hetgraph::{generate_synthetic, Schema, SyntheticSpec};
use diffgraph_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "diffgraph",
    version,
    about = "Heterogeneous graph diffusion: training, evaluation and experiments"
)]
struct Cli {
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and evaluate it.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Write the trained parameters here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Grid axis `key=v1,v2,..`; repeat for a cartesian product.
        #[arg(long = "grid", value_name = "KEY=VALUES")]
        grid: Vec<String>,
    },
    /// Re-evaluate a checkpoint on the data it was trained on.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "report.json")]
        report: PathBuf,
    },
    /// Run the full model and every ablation variant.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Retention of metrics when auxiliary edges are replaced by noise.
    NoiseExp {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.3,0.5")]
        ratios: Vec<f64>,
    },
    /// Write a synthetic dataset in the file formats the loaders accept.
    Synth {
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 100)]
        items: usize,
        #[arg(long, default_value_t = 2)]
        aux_relations: usize,
        #[arg(long, default_value_t = 0.05)]
        density: f64,
        #[arg(long, default_value_t = 0.9)]
        fidelity: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write one embedding table of a checkpoint as text.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "fused")]
        table: String,
        #[arg(long)]
        output: PathBuf,
    },
}

/// Run configuration: `--config` first, then flags, then `--set`.
#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any field by dotted key, e.g. `diffusion.steps=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, default_value = "report.json")]
    report: PathBuf,

    #[arg(long)]
    seed: Option<u64>,
    /// full, -D, -U, -I, -H or DAE.
    #[arg(long, allow_hyphen_values = true)]
    variant: Option<String>,
    /// link or node.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    /// Diffusion steps T.
    #[arg(long)]
    steps: Option<usize>,
    /// Inference steps T'.
    #[arg(long)]
    inference_steps: Option<usize>,
    /// Scalar noise scale S; sets both schedule endpoints.
    #[arg(long)]
    noise_scale: Option<f64>,

    /// Edge list; with `--schema` replaces the synthetic data source.
    #[arg(long, requires = "schema")]
    edges: Option<PathBuf>,
    #[arg(long, requires = "edges")]
    schema: Option<PathBuf>,
    #[arg(long, requires = "edges")]
    labels: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let flags: [(&str, Option<String>); 15] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("variant", self.variant.clone()),
            ("loss.task", self.task.clone()),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("lr", self.lr.map(|v| v.to_string())),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("eval_every", self.eval_every.map(|v| v.to_string())),
            ("patience", self.patience.map(|v| v.to_string())),
            ("top_k", self.top_k.map(|v| v.to_string())),
            ("loss.lambda", self.lambda.map(|v| v.to_string())),
            ("loss.l2", self.l2.map(|v| v.to_string())),
            ("encoder.dim", self.dim.map(|v| v.to_string())),
            ("encoder.layers", self.layers.map(|v| v.to_string())),
            ("diffusion.steps", self.steps.map(|v| v.to_string())),
            (
                "diffusion.inference_steps",
                self.inference_steps.map(|v| v.to_string()),
            ),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        if let Some(s) = self.noise_scale {
            let d = &cfg.diffusion;
            cfg.diffusion = DiffusionConfig {
                per_row_t: d.per_row_t,
                ..DiffusionConfig::from_noise_scale(s, d.steps, d.inference_steps)
            };
        }
        if let (Some(edges), Some(schema)) = (&self.edges, &self.schema) {
            cfg.data = DataSource::Files {
                schema: schema.clone(),
                edges: edges.clone(),
                labels: self.labels.clone(),
                label_type: None,
                classes: None,
                features: None,
            };
        }
        for item in &self.set {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("`--set {item}` lacks `=`")))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Writes lines to stdout, stopping quietly if the reader has gone away.
fn print_lines(lines: impl IntoIterator<Item = String>) {
    let mut out = std::io::stdout().lock();
    for line in lines {
        if writeln!(out, "{line}").is_err() {
            return;
        }
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train {
            run: args,
            checkpoint,
            grid,
        } => {
            let cfg = args.resolve()?;
            if !grid.is_empty() {
                let axes = grid
                    .iter()
                    .map(|a| parse_axis(a))
                    .collect::<Result<Vec<_>>>()?;
                let reports = run_grid(&cfg, &axes)?;
                for (k, r) in reports.iter().enumerate() {
                    print_lines(
                        r.summary_lines()
                            .into_iter()
                            .map(|l| format!("run[{k}].{l}")),
                    );
                }
                return write(&args.report, &reports_to_json(&reports)?);
            }
            let ds = load_dataset(&cfg)?;
            let (params, report) = run(&cfg, &ds)?;
            print_lines(report.summary_lines());
            report.save(&args.report)?;
            if let Some(path) = checkpoint {
                let ckpt = Checkpoint {
                    config: cfg,
                    dataset_fingerprint: ds.fingerprint(),
                    params,
                };
                ckpt.save(&path)?;
                info!("checkpoint written to {}", path.display());
            }
            Ok(())
        }
        Command::Eval { checkpoint, report } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let ds = load_dataset(&ckpt.config)?;
            let out = evaluate_checkpoint(&ckpt, &ds)?;
            print_lines(out.summary_lines());
            out.save(&report)
        }
        Command::Ablate { run: args } => {
            let cfg = args.resolve()?;
            let ds = load_dataset(&cfg)?;
            let result = run_ablation_on(&cfg, &ds)?;
            print_lines(result.summary_lines());
            write(&args.report, &result.to_json()?)
        }
        Command::NoiseExp { run: args, ratios } => {
            let cfg = args.resolve()?;
            let ds = load_dataset(&cfg)?;
            let table = run_noise_robustness_on(&cfg, &ds, &ratios)?;
            let mut lines: Vec<String> = table.render().lines().map(str::to_string).collect();
            for row in &table.rows {
                for (ratio, pair) in table.ratios.iter().zip(&row.retention) {
                    for (metric, value) in table.metrics.iter().zip(pair) {
                        let v = value.map_or("undefined".to_string(), |x| format!("{x:.4}"));
                        lines.push(format!("retention[{}][{ratio}].{metric}={v}", row.relation));
                    }
                }
            }
            print_lines(lines);
            write(&args.report, &table.to_json()?)
        }
        Command::Synth {
            users,
            items,
            aux_relations,
            density,
            fidelity,
            seed,
            out_dir,
        } => {
            let spec = SyntheticSpec {
                n_users: users,
                n_items: items,
                n_aux_relations: aux_relations,
                density,
                fidelity,
                seed,
            };
            let (g, labels) =
                generate_synthetic(&spec).map_err(|e| Error::Config(e.to_string()))?;
            fs::create_dir_all(&out_dir)
                .map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
            let paths =
                ["schema.toml", "edges.txt", "labels.txt", "config.toml"].map(|f| out_dir.join(f));
            write(&paths[0], &Schema::of(&g).to_toml())?;
            write(&paths[1], &format_edge_list(&g))?;
            write(&paths[2], &format_labels(&labels))?;
            let cfg = RunConfig {
                seed,
                data: DataSource::Files {
                    schema: paths[0].clone(),
                    edges: paths[1].clone(),
                    labels: Some(paths[2].clone()),
                    label_type: None,
                    classes: Some(labels.class_count()),
                    features: None,
                },
                ..RunConfig::default()
            };
            write(&paths[3], &cfg.to_toml()?)?;
            let mut lines = vec![format!("nodes={}", g.total_nodes())];
            lines.extend(
                g.relations()
                    .iter()
                    .map(|rel| format!("edges[{}]={}", rel.name, rel.len())),
            );
            lines.push(format!("config={}", paths[3].display()));
            print_lines(lines);
            Ok(())
        }
        Command::Export {
            checkpoint,
            table,
            output,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let which: ExportTable = table.parse()?;
            let ds = load_dataset(&ckpt.config)?;
            if ds.fingerprint() != ckpt.dataset_fingerprint {
                return Err(Error::Data(
                    "dataset differs from the one the checkpoint was trained on".into(),
                ));
            }
            export_embeddings(&ckpt.config, &ds, &ckpt.params, which, &output)?;
            print_lines([
                format!("table={}", which.tag()),
                format!("output={}", output.display()),
            ]);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
