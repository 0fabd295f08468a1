use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sigpost_cli::config::{CriterionChoice, RunConfig, Scenario, WeightChoice};
use sigpost_cli::data::load_edge_list;
use sigpost_cli::diagnose::run_diagnostics;
use sigpost_cli::fit::run_fit;
use sigpost_cli::harness::run_scenario;
use sigpost_cli::network::{run_network_pipeline, NetworkSettings};

#[derive(Parser)]
#[command(name = "sigpost", version, about = "Generalized posterior inference for low-rank signal-plus-noise matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replicated simulation on the latent-curve scenarios.
    Simulate(RunArgs),
    /// Fit every estimator to an edge-list file.
    Fit {
        #[command(flatten)]
        run: RunArgs,
        /// Vertex count; defaults to the largest index in the file.
        #[arg(long)]
        vertices: Option<usize>,
    },
    /// Noisy-network vertex classification on a labeled edge list.
    Classify {
        #[command(flatten)]
        run: RunArgs,
        /// Contamination levels to sweep.
        #[arg(long, value_delimiter = ',', default_values_t = [0.005, 0.010, 0.015, 0.020])]
        v_values: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        copies: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0.75)]
        train_frac: f64,
        #[arg(long, default_value_t = 100)]
        knn_repeats: usize,
        #[arg(long)]
        vertices: Option<usize>,
    },
    /// Multi-chain PSRF and trace export on one simulated replicate.
    Diagnose {
        #[command(flatten)]
        run: RunArgs,
        /// Rows whose chains are written to the trace files.
        #[arg(long, value_delimiter = ',', default_values_t = [0usize])]
        trace_rows: Vec<usize>,
    },
}

/// Flags mirroring the configuration file; flags override the file.
#[derive(Args)]
struct RunArgs {
    /// Master seed.
    #[arg(long)]
    seed: u64,
    /// JSON configuration to start from.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    v: Option<f64>,
    #[arg(long, value_enum)]
    weight: Option<WeightChoice>,
    #[arg(long, value_enum)]
    criterion: Option<CriterionChoice>,
    #[arg(long)]
    theta_radius: Option<f64>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    proposal_scale: Option<f64>,
    #[arg(long)]
    chains: Option<usize>,
    /// Disable burn-in adaptation of the proposal scale.
    #[arg(long)]
    no_adapt: bool,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    index_base: Option<usize>,
    /// Write the resolved configuration here before running.
    #[arg(long)]
    save_config: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self, base: RunConfig) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => base,
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        set!(scenario, n, d, p, sigma, v, weight, criterion, theta_radius, burnin, samples, proposal_scale, chains, replicates, output_dir, index_base);
        if self.input.is_some() {
            cfg.input = self.input.clone();
        }
        if self.no_adapt {
            cfg.adapt = false;
        }
        cfg.seed = self.seed;
        if let Some(path) = &self.save_config {
            cfg.save(path)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn file_defaults() -> RunConfig {
    RunConfig {
        scenario: Scenario::File,
        weight: WeightChoice::NoisyRdpg,
        ..RunConfig::scenario_one(0)
    }
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.resolve(RunConfig::scenario_one(200))?;
            let summary = run_scenario(&cfg)?;
            Ok(serde_json::to_value(&summary)?)
        }
        Command::Fit { run, vertices } => {
            let cfg = run.resolve(file_defaults())?;
            let fit = run_fit(&cfg, vertices)?;
            Ok(json!({
                "n": fit.embedding.nrows(),
                "d": fit.embedding.ncols(),
                "z_row_failures": fit.z_failures(),
                "posterior_row_failures": fit.criteria.iter().map(|c| (c.kind.label(), c.failures())).collect::<std::collections::BTreeMap<_, _>>(),
                "output_dir": cfg.output_dir,
            }))
        }
        Command::Classify {
            run,
            v_values,
            copies,
            k,
            train_frac,
            knn_repeats,
            vertices,
        } => {
            let cfg = run.resolve(file_defaults())?;
            let input = cfg.input.as_ref().context("classify needs --input")?;
            let graph = load_edge_list(input, vertices, cfg.index_base)?;
            let settings = NetworkSettings {
                v_values,
                copies,
                k,
                train_frac,
                knn_repeats,
            };
            let (_, summary) = run_network_pipeline(&cfg, &graph, &settings)?;
            Ok(serde_json::to_value(&summary)?)
        }
        Command::Diagnose { run, trace_rows } => {
            let base = RunConfig {
                chains: 4,
                ..RunConfig::scenario_one(200)
            };
            let cfg = run.resolve(base)?;
            let out = run_diagnostics(&cfg, &trace_rows)?;
            Ok(serde_json::to_value(&out.stats)?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(value) => {
            println!("{}", serde_json::to_string_pretty(&value).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = json!({
                "status": "error",
                "message": format!("{e:#}"),
                "causes": e.chain().map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
