use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ir_marl::data::BehaviorPolicy;
use ir_marl::experiment::pipeline::{self, load_artifact};
use ir_marl::experiment::{study, verify, ExperimentConfig, ExperimentError, QuadraticConfig};
use ir_marl::game::{DecoupledGame, MixturePolicy};
use ir_marl::learn::LearnedModel;

#[derive(Parser)]
#[command(name = "irmarl", version, about = "Offline equilibrium learning for games with low interaction-rank rewards")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the configured seed list with this one seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Dataset file (JSONL).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw an offline dataset from the configured game and behavior policy.
    GenerateData,
    /// Fit rewards and transitions to a dataset.
    Fit,
    /// Run the actor-critic on a fitted model.
    Train {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        behavior: Option<PathBuf>,
    },
    /// Equilibrium gap of a policy in the true game.
    Evaluate {
        #[arg(long)]
        game: Option<PathBuf>,
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Every stage for every configured seed.
    Pipeline,
    /// Critic comparison on the continuous quadratic game.
    Quadratic,
    /// Invariant suites: standardize, alignment, shift, mirror, regret, drift, tv, perf, oracle, rates, mc, or all.
    Verify { suite: String },
}

enum Failure {
    Experiment(ExperimentError),
    Verification,
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure::Experiment(e)
    }
}

fn experiment_config(cli: &Cli) -> Result<ExperimentConfig, ExperimentError> {
    let path = cli.config.as_deref().ok_or_else(|| ExperimentError::Config("--config is required".into()))?;
    ExperimentConfig::load(path)
}

fn out_dir(cli: &Cli, cfg_out: Option<&Path>) -> PathBuf {
    cli.out.clone().or_else(|| cfg_out.map(Path::to_path_buf)).unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.cmd {
        Cmd::GenerateData => {
            let cfg = experiment_config(cli)?;
            let out = out_dir(cli, cfg.out.as_deref());
            let seed = cli.seed.unwrap_or(cfg.seeds[0]);
            let (_, _, ds) = pipeline::generate_data(&cfg, seed, &out)?;
            println!("wrote {} records per step to {}", ds.header.records_per_step, out.join("dataset.jsonl").display());
        }
        Cmd::Fit => {
            let cfg = experiment_config(cli)?;
            let out = out_dir(cli, cfg.out.as_deref());
            let ds_path = cli.dataset.clone().unwrap_or_else(|| out.join("dataset.jsonl"));
            let ds = pipeline::load_dataset(&ds_path)?;
            let game_path = out.join("game.json");
            let game: DecoupledGame = if game_path.is_file() { load_artifact(&game_path)? } else { cfg.build_game()? };
            let model = pipeline::fit(&cfg, &game, &ds, &out)?;
            let worst = model.diagnostics.reward_mse.iter().flatten().copied().fold(0.0, f64::max);
            println!("fitted model written to {} (largest reward train MSE {worst:.3e})", out.join("model.json").display());
        }
        Cmd::Train { model, behavior } => {
            let cfg = experiment_config(cli)?;
            let out = out_dir(cli, cfg.out.as_deref());
            let model: LearnedModel = load_artifact(&model.clone().unwrap_or_else(|| out.join("model.json")))?;
            let b_path = behavior.clone().unwrap_or_else(|| out.join("behavior.json"));
            let behavior: BehaviorPolicy = if b_path.is_file() { load_artifact(&b_path)? } else { cfg.build_behavior(&cfg.build_game()?)? };
            let game = cfg.build_game()?;
            let params = cfg.drac_params(&game, cli.seed.unwrap_or(cfg.seeds[0]))?;
            let res = pipeline::train(&model, &behavior, &params, &cfg.hash(), &out)?;
            let chi2 = res.trace.iter().map(|r| r.max_chi2).fold(0.0, f64::max);
            println!(
                "trained {} iterations (lambda {}, eta {}, largest chi2 {chi2:.4}); policy in {}",
                params.iterations,
                params.lambda,
                params.eta,
                out.join("policy.json").display()
            );
        }
        Cmd::Evaluate { game, policy } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let game: DecoupledGame = load_artifact(&game.clone().unwrap_or_else(|| out.join("game.json")))?;
            game.validate().map_err(|e| ExperimentError::Config(format!("game: {e}")))?;
            let policy: MixturePolicy = load_artifact(&policy.clone().unwrap_or_else(|| out.join("policy.json")))?;
            let hash = match &cli.config {
                Some(p) => ExperimentConfig::load(p)?.hash(),
                None => String::new(),
            };
            let rep = pipeline::evaluate(&game, &policy, &hash, &out)?;
            for (i, a) in rep.agents.iter().enumerate() {
                println!("agent {i}: value {:.6}, best response {:.6}, gap {:.6}", a.policy_value, a.best_response_value, a.gap);
            }
            println!("max gap {:.6}", rep.max_gap);
        }
        Cmd::Pipeline => {
            let mut cfg = experiment_config(cli)?;
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            let out = out_dir(cli, cfg.out.as_deref());
            for r in pipeline::run_pipeline(&cfg, &out)? {
                println!("seed {}: max gap {:.6} after {} iterations ({})", r.seed, r.gap.max_gap, r.params.iterations, r.dir.display());
            }
        }
        Cmd::Quadratic => {
            let mut cfg = match &cli.config {
                Some(p) => QuadraticConfig::load(p)?,
                None => toml::from_str::<QuadraticConfig>("n_agents = [8, 16]").expect("default study config"),
            };
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            let out = out_dir(cli, cfg.out.as_deref());
            let rep = study::run_study(&cfg, Some(&out))?;
            for s in &rep.summary {
                println!(
                    "N={:<3} arm={:<6} M={:<5} sigma={:.3} mean final gap {:.4} (min {:.4}, max {:.4})",
                    s.n_agents,
                    s.arm.name(),
                    s.samples,
                    s.noise,
                    s.mean_final_gap,
                    s.min_final_gap,
                    s.max_final_gap
                );
            }
        }
        Cmd::Verify { suite } => {
            let suites = verify::parse_suites(suite)?;
            let reports = verify::run(&suites, cli.seed.unwrap_or(0))?;
            for r in &reports {
                println!("{r}");
            }
            if let Some(out) = &cli.out {
                ir_marl::experiment::ensure_dir(out)?;
                ir_marl::experiment::save_json(&out.join("verify.json"), None, &serde_json::json!({ "reports": reports }))?;
            }
            if reports.iter().any(|r| !r.passed()) {
                return Err(Failure::Verification);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set thread count: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Experiment(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(Failure::Verification) => {
            eprintln!("verification failed");
            ExitCode::from(4)
        }
    }
}
