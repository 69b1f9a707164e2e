use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use graphtricks::data::{gen_planted_partition, import_linqs, save_bundle, LinqsSplit};
use graphtricks::gradcheck_suite::{run_gradcheck_suite, GRADCHECK_TOLERANCE};
use graphtricks::train::{
    run_ablation, run_lpa, train, write_ablation, write_lpa, write_run, Trainer,
};
use graphtricks::{Error, LpaConfig, Result, RunConfig};

/// Node classification with label tricks and margin losses.
#[derive(Parser)]
#[command(name = "graphtricks", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration file (`key = value` lines).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set loss.kind=loge`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        cfg.apply_overrides(&self.overrides)?;
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train over every configured seed and write metrics.json, table.md,
    /// log.txt and params.json.
    Train(ConfigArgs),
    /// Score saved parameters on every split.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Parameter file written by `train`.
        #[arg(long)]
        params: PathBuf,
    },
    /// Train every cell of the grid spanned by the `ablate.*` settings.
    Ablate(ConfigArgs),
    /// Label propagation baseline.
    Lpa {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = LpaConfig::default().lambda)]
        lambda: f64,
        #[arg(long, default_value_t = LpaConfig::default().max_iters)]
        max_iters: usize,
        #[arg(long, default_value_t = LpaConfig::default().tol)]
        tol: f64,
        /// Propagate over the self-looped adjacency.
        #[arg(long)]
        renormalize: bool,
    },
    /// Write a planted-partition dataset; tune it with `--set data.*`.
    GenData {
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Convert LINQS `.content`/`.cites` files into a dataset directory.
    ImportLinqs {
        #[arg(long)]
        content: PathBuf,
        #[arg(long)]
        cites: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long, default_value_t = 500)]
        valid: usize,
        #[arg(long, default_value_t = 1000)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Finite-difference check of every backward pass.
    Gradcheck,
}

fn print_file(dir: &Path, name: &str) -> Result<()> {
    print!("{}", std::fs::read_to_string(dir.join(name))?);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.load()?;
            let bundle = cfg.load_data()?;
            let outcome = train(&cfg, &bundle, None)?;
            write_run(&cfg.output_dir, &cfg, &bundle, &outcome)?;
            print_file(&cfg.output_dir, "table.md")?;
        }
        Command::Eval { config, params } => {
            let cfg = config.load()?;
            let bundle = cfg.load_data()?;
            let trainer = Trainer::new(&cfg, &bundle)?;
            let text = std::fs::read_to_string(&params).map_err(|e| Error::Load {
                path: params.clone(),
                reason: e.to_string(),
            })?;
            let m = trainer.evaluate(&trainer.load_params(&text)?)?;
            println!("{}", serde_json::to_string(&m).expect("metrics serialize"));
        }
        Command::Ablate(args) => {
            let cfg = args.load()?;
            let report = run_ablation(&cfg)?;
            write_ablation(&cfg.output_dir, &report)?;
            print_file(&cfg.output_dir, "table.md")?;
        }
        Command::Lpa {
            config,
            lambda,
            max_iters,
            tol,
            renormalize,
        } => {
            let cfg = config.load()?;
            let bundle = cfg.load_data()?;
            let lpa = LpaConfig {
                lambda,
                max_iters,
                tol,
                renormalize,
            };
            let outcome = run_lpa(&bundle, &lpa)?;
            write_lpa(&cfg.output_dir, &lpa, &bundle, &outcome)?;
            print_file(&cfg.output_dir, "table.md")?;
        }
        Command::GenData { overrides, out } => {
            let mut cfg = RunConfig::default();
            cfg.set("data.generator", "planted_partition")?;
            cfg.apply_overrides(&overrides)?;
            let bundle = gen_planted_partition(&cfg.data.planted, cfg.data.seed)?;
            save_bundle(&bundle, &out)?;
            println!(
                "wrote {} nodes, {} edges to {}",
                bundle.num_nodes(),
                bundle.edges.len(),
                out.display()
            );
        }
        Command::ImportLinqs {
            content,
            cites,
            name,
            out,
            per_class,
            valid,
            test,
            seed,
        } => {
            let split = LinqsSplit {
                per_class,
                valid,
                test,
                seed,
            };
            let bundle = import_linqs(&content, &cites, &name, &split)?;
            save_bundle(&bundle, &out)?;
            println!(
                "wrote {} nodes, {} arcs to {}",
                bundle.num_nodes(),
                bundle.graph.num_edges(),
                out.display()
            );
        }
        Command::Gradcheck => {
            let report = run_gradcheck_suite()?;
            for c in &report.cases {
                let verdict = if c.max_rel_error < GRADCHECK_TOLERANCE {
                    "ok"
                } else {
                    "FAIL"
                };
                println!(
                    "{verdict:4} {:.3e} {:6} {}",
                    c.max_rel_error, c.checked, c.name
                );
            }
            println!(
                "worst relative error {:.3e} (tolerance {GRADCHECK_TOLERANCE:e})",
                report.worst()
            );
            if !report.passed() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
