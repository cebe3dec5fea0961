use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hyperforge::coarsening::CoarseningParams;
use hyperforge::data::{Dataset, DatasetSpec, GraphKind, SplitSizes};
use hyperforge::pipeline::{self, ExportFormat, SampleOptions, SampleRequest, TrainConfig};
use hyperforge::{Error, Hypergraph64};
use serde_json::json;

#[derive(Parser)]
#[command(name = "hyperforge", version, about = "Hierarchical hypergraph generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with train/val/test splits.
    GenData {
        #[arg(long)]
        kind: GraphKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = SplitSizes::default().train)]
        train: usize,
        #[arg(long, default_value_t = SplitSizes::default().val)]
        val: usize,
        #[arg(long, default_value_t = SplitSizes::default().test)]
        test: usize,
        /// Node count of tree graphs.
        #[arg(long)]
        tree_nodes: Option<usize>,
    },
    /// Train a denoiser from a key = value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sample hypergraphs from a checkpoint into DIR/samples.jsonl.
    Sample {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        n_nodes: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        flow_steps: Option<usize>,
        #[arg(long)]
        rho_min: Option<f64>,
        #[arg(long)]
        rho_max: Option<f64>,
    },
    /// Compare generated graphs against a reference set.
    Eval {
        #[arg(long)]
        gen: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Dataset family for the validity check; omit for meshes.
        #[arg(long)]
        kind: Option<GraphKind>,
    },
    /// Convert the graphs of a directory to another format.
    Export {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        format: ExportFormat,
        /// Defaults to IN/export.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coarsen the first hypergraph of a file and write every level.
    CoarsenDemo {
        #[arg(long = "in")]
        input: PathBuf,
        /// Defaults to a `<stem>_levels` directory next to the input.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", json!({ "error": "usage", "message": first }));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.code(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<serde_json::Value, Error> {
    match command {
        Command::GenData { kind, out, seed, train, val, test, tree_nodes } => {
            let spec = DatasetSpec { kind, splits: SplitSizes { train, val, test }, seed, tree_nodes };
            let data: Dataset<f64> = Dataset::generate(&spec);
            data.save(&out)?;
            Ok(json!({ "out": out, "train": train, "val": val, "test": test }))
        }
        Command::Train { config } => {
            let mut cfg = TrainConfig::from_file(&config)?;
            if cfg.checkpoint.is_none() {
                cfg.checkpoint = Some(config.parent().unwrap_or(Path::new(".")).join("model.ckpt"));
            }
            let (_, report) = pipeline::train(&cfg)?;
            let running = pipeline::smoothed_losses(&report.losses, pipeline::LOSS_SMOOTHING);
            Ok(json!({
                "checkpoint": cfg.checkpoint,
                "steps": report.losses.len(),
                "initial_running_loss": running.first(),
                "final_running_loss": running.last(),
                "best_validation": report.best_validation,
            }))
        }
        Command::Sample { ckpt, n_nodes, count, out, seed, flow_steps, rho_min, rho_max } => {
            let mut options = SampleOptions::default();
            if let Some(s) = flow_steps {
                options.flow_steps = s;
            }
            options.rho_min = rho_min.unwrap_or(options.rho_min);
            options.rho_max = rho_max.unwrap_or(options.rho_max);
            options.validate()?;
            let graphs = pipeline::sample(&SampleRequest { n_nodes, count, seed, checkpoint: ckpt, options })?;
            let written = pipeline::export(&graphs, ExportFormat::Jsonl, &out)?;
            let target = out.join("samples.jsonl");
            std::fs::rename(&written[0], &target)?;
            Ok(json!({ "out": target, "count": graphs.len() }))
        }
        Command::Eval { gen, reference, kind } => Ok(serde_json::to_value(pipeline::evaluate(&gen, &reference, kind)?)?),
        Command::Export { input, format, out } => {
            let graphs: Vec<Hypergraph64> = hyperforge::data::load_graph_dir(&input)?;
            let out = out.unwrap_or_else(|| input.join("export"));
            let written = pipeline::export(&graphs, format, &out)?;
            Ok(json!({ "count": graphs.len(), "files": written }))
        }
        Command::CoarsenDemo { input, out, seed } => {
            let graphs: Vec<Hypergraph64> = pipeline::load_graph_file(&input)?;
            let h = graphs.first().ok_or(Error::Empty("input file"))?;
            let out = out.unwrap_or_else(|| {
                let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("graph");
                input.with_file_name(format!("{stem}_levels"))
            });
            let levels = pipeline::coarsen_demo(h, &CoarseningParams::default(), seed, &out)?;
            Ok(json!({ "out": out, "levels": levels }))
        }
    }
}
