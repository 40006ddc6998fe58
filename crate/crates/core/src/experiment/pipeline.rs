//! The tabular pipeline: generate data, fit a model, run the actor-critic,
//! measure the equilibrium gap in the true game.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate_dataset, BehaviorPolicy, OfflineDataset};
use crate::drac::{run_drac, DracOutput, DracParams};
use crate::game::{DecoupledGame, MixturePolicy};
use crate::gap::{gap, GapReport};
use crate::learn::{fit_model, LearnedModel};
use crate::seeding::{self, streams};

use super::{ensure_dir, load_json, save_json, stage, write_csv, ExperimentConfig, ExperimentError};

pub const TRACE_HEADER: [&str; 7] = ["t", "i", "h", "max_chi2", "mean_Q", "cell_count", "config_hash"];
pub const GAP_HEADER: [&str; 6] = ["config_hash", "n_agents", "max_gap", "mean_gap", "worst_agent", "components"];
pub const SUMMARY_HEADER: [&str; 8] = ["seed", "max_gap", "iterations", "lambda", "eta", "final_max_chi2", "train_mse", "config_hash"];

pub fn dataset_seed(seed: u64) -> u64 {
    seeding::derive(seed, &[streams::DATASET])
}

/// Draws the dataset for one seed and writes `game.json`, `behavior.json`, `dataset.jsonl`.
pub fn generate_data(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<(DecoupledGame, BehaviorPolicy, OfflineDataset), ExperimentError> {
    let hash = cfg.hash();
    let game = cfg.build_game()?;
    let behavior = cfg.build_behavior(&game)?;
    let mut ds = generate_dataset(&game, &behavior, cfg.samples, dataset_seed(seed)).map_err(stage("generate-data"))?;
    ds.header.config_hash = Some(hash.clone());
    ensure_dir(out)?;
    save_json(&out.join("game.json"), Some(&hash), &game)?;
    save_json(&out.join("behavior.json"), Some(&hash), &behavior)?;
    ds.save(&out.join("dataset.jsonl")).map_err(stage("generate-data"))?;
    Ok((game, behavior, ds))
}

pub fn load_dataset(path: &Path) -> Result<OfflineDataset, ExperimentError> {
    if !path.is_file() {
        return Err(ExperimentError::Config(format!("dataset {} not found", path.display())));
    }
    OfflineDataset::load(path).map_err(stage("load-dataset"))
}

/// Fits the model on a dataset and writes `model.json`.
pub fn fit(cfg: &ExperimentConfig, game: &DecoupledGame, ds: &OfflineDataset, out: &Path) -> Result<LearnedModel, ExperimentError> {
    ds.check_against(&game.dynamics).map_err(stage("fit"))?;
    let model = fit_model(ds, &cfg.reward_class, cfg.smoothing, game.reward_range).map_err(stage("fit"))?;
    ensure_dir(out)?;
    save_json(&out.join("model.json"), Some(&cfg.hash()), &model)?;
    Ok(model)
}

pub fn trace_rows(out: &DracOutput, hash: &str) -> Vec<Vec<String>> {
    out.trace
        .iter()
        .map(|r| {
            vec![
                r.t.to_string(),
                r.i.to_string(),
                r.h.to_string(),
                r.max_chi2.to_string(),
                r.mean_q.to_string(),
                r.cell_count.to_string(),
                hash.to_string(),
            ]
        })
        .collect()
}

/// Runs the actor-critic and writes `policy.json` and `trace.csv`.
pub fn train(model: &LearnedModel, behavior: &BehaviorPolicy, params: &DracParams, hash: &str, out: &Path) -> Result<DracOutput, ExperimentError> {
    let res = run_drac(model, behavior, params).map_err(stage("train"))?;
    ensure_dir(out)?;
    save_json(&out.join("policy.json"), Some(hash), &res.policy)?;
    write_csv(&out.join("trace.csv"), &TRACE_HEADER, &trace_rows(&res, hash))?;
    Ok(res)
}

/// Scores a mixture in the true game and writes `gap.json` and `gap.csv`.
pub fn evaluate(game: &DecoupledGame, policy: &MixturePolicy, hash: &str, out: &Path) -> Result<GapReport, ExperimentError> {
    let rep = gap(game, policy).map_err(stage("evaluate"))?;
    ensure_dir(out)?;
    save_json(&out.join("gap.json"), Some(hash), &rep)?;
    let worst = rep.agents.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, a)| if a.gap > acc.1 { (i, a.gap) } else { acc });
    let mean = rep.agents.iter().map(|a| a.gap).sum::<f64>() / rep.agents.len() as f64;
    let row = vec![
        hash.to_string(),
        rep.agents.len().to_string(),
        rep.max_gap.to_string(),
        mean.to_string(),
        worst.0.to_string(),
        policy.len().to_string(),
    ];
    write_csv(&out.join("gap.csv"), &GAP_HEADER, &[row])?;
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub dir: PathBuf,
    pub params: DracParams,
    pub gap: GapReport,
    pub final_max_chi2: f64,
    pub train_mse: f64,
}

/// All stages for every configured seed; `out/seed-<s>/` holds each seed's
/// artifacts and `out/summary.csv` one line per seed.
pub fn run_pipeline(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SeedResult>, ExperimentError> {
    let hash = cfg.hash();
    ensure_dir(out)?;
    save_json(&out.join("config.json"), Some(&hash), cfg)?;
    let results = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let dir = out.join(format!("seed-{seed}"));
            let (game, behavior, ds) = generate_data(cfg, seed, &dir)?;
            let model = fit(cfg, &game, &ds, &dir)?;
            let params = cfg.drac_params(&game, seed)?;
            let res = train(&model, &behavior, &params, &hash, &dir)?;
            let rep = evaluate(&game, &res.policy, &hash, &dir)?;
            let t_last = res.trace.last().map(|r| r.t).unwrap_or(0);
            let final_max_chi2 = res.trace.iter().filter(|r| r.t == t_last).map(|r| r.max_chi2).fold(0.0, f64::max);
            let mse = model.diagnostics.reward_mse.iter().flatten().copied().fold(0.0, f64::max);
            Ok(SeedResult { seed, dir, params, gap: rep, final_max_chi2, train_mse: mse })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                r.gap.max_gap.to_string(),
                r.params.iterations.to_string(),
                r.params.lambda.to_string(),
                r.params.eta.to_string(),
                r.final_max_chi2.to_string(),
                r.train_mse.to_string(),
                hash.clone(),
            ]
        })
        .collect();
    write_csv(&out.join("summary.csv"), &SUMMARY_HEADER, &rows)?;
    Ok(results)
}

/// Loads a JSON artifact written by an earlier stage.
pub fn load_artifact<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ExperimentError> {
    if !path.is_file() {
        return Err(ExperimentError::Config(format!("{} not found", path.display())));
    }
    load_json(path)
}
