//! The quadratic-game critic comparison: for every `N` and seed one dataset
//! is drawn and shared by all critic arms, and the actor's gap is tracked per step.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::quadratic::{fit_critic, run_actor, CriticArm, QuadraticDataset};
use crate::seeding::{self, streams};

use super::svg::{line_plot, Series};
use super::{ensure_dir, save_json, stage, write_csv, write_text, ExperimentError, QuadraticConfig};

pub const GAPS_HEADER: [&str; 6] = ["n_agents", "seed", "arm", "step", "gap", "config_hash"];
pub const SUMMARY_HEADER: [&str; 9] =
    ["n_agents", "arm", "samples", "noise", "seeds", "mean_final_gap", "min_final_gap", "max_final_gap", "config_hash"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmRun {
    pub n_agents: usize,
    pub seed: u64,
    pub arm: CriticArm,
    pub gaps: Vec<f64>,
    pub actions: Vec<f64>,
}

impl ArmRun {
    pub fn final_gap(&self) -> f64 {
        *self.gaps.last().expect("gap trace holds the initial point")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub n_agents: usize,
    pub arm: CriticArm,
    pub samples: usize,
    pub noise: f64,
    pub mean_final_gap: f64,
    pub min_final_gap: f64,
    pub max_final_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub runs: Vec<ArmRun>,
    pub summary: Vec<ArmSummary>,
}

impl StudyReport {
    pub fn mean_final_gap(&self, n_agents: usize, arm: CriticArm) -> Option<f64> {
        self.summary.iter().find(|s| s.n_agents == n_agents && s.arm == arm).map(|s| s.mean_final_gap)
    }
}

pub fn dataset_seed(seed: u64, n_agents: usize) -> u64 {
    seeding::derive(seed, &[streams::QUADRATIC, n_agents as u64])
}

/// Runs every `(N, seed, arm)` job. With `out`, each seed's dataset is written
/// once and every arm reads it back from that file; the per-step gaps, the
/// summary and one SVG per `N` are written next to it.
pub fn run_study(cfg: &QuadraticConfig, out: Option<&Path>) -> Result<StudyReport, ExperimentError> {
    cfg.validate()?;
    let hash = crate::data::content_hash(cfg);
    if let Some(dir) = out {
        ensure_dir(dir)?;
        save_json(&dir.join("config.json"), Some(&hash), cfg)?;
    }
    let cells: Vec<(usize, u64)> = cfg.n_agents.iter().flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s))).collect();
    let per_cell = cells
        .par_iter()
        .map(|&(n, seed)| {
            let (m, sigma) = cfg.budget(n);
            let data = QuadraticDataset::generate(n, sigma, m, dataset_seed(seed, n)).map_err(stage("quadratic-data"))?;
            let data = match out {
                Some(dir) => {
                    let sub: PathBuf = dir.join(format!("n{n}"));
                    ensure_dir(&sub)?;
                    let path = sub.join(format!("seed-{seed}.jsonl"));
                    data.save(&path).map_err(stage("quadratic-data"))?;
                    QuadraticDataset::load(&path).map_err(stage("quadratic-data"))?
                }
                None => data,
            };
            cfg.arms
                .iter()
                .map(|&arm| {
                    let critic = fit_critic(&data, arm, cfg.ridge).map_err(stage("quadratic-fit"))?;
                    let run = run_actor(&critic, &cfg.actor).map_err(stage("quadratic-actor"))?;
                    Ok(ArmRun { n_agents: n, seed, arm, gaps: run.gaps, actions: run.actions })
                })
                .collect::<Result<Vec<_>, ExperimentError>>()
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let runs: Vec<ArmRun> = per_cell.into_iter().flatten().collect();

    let mut summary = Vec::new();
    for &n in &cfg.n_agents {
        let (m, sigma) = cfg.budget(n);
        for &arm in &cfg.arms {
            let finals: Vec<f64> = runs.iter().filter(|r| r.n_agents == n && r.arm == arm).map(ArmRun::final_gap).collect();
            summary.push(ArmSummary {
                n_agents: n,
                arm,
                samples: m,
                noise: sigma,
                mean_final_gap: finals.iter().sum::<f64>() / finals.len() as f64,
                min_final_gap: finals.iter().copied().fold(f64::INFINITY, f64::min),
                max_final_gap: finals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    let report = StudyReport { runs, summary };
    if let Some(dir) = out {
        write_outputs(cfg, &report, &hash, dir)?;
    }
    Ok(report)
}

fn write_outputs(cfg: &QuadraticConfig, report: &StudyReport, hash: &str, dir: &Path) -> Result<(), ExperimentError> {
    let mut rows = Vec::new();
    for r in &report.runs {
        for (step, g) in r.gaps.iter().enumerate() {
            rows.push(vec![r.n_agents.to_string(), r.seed.to_string(), r.arm.name().into(), step.to_string(), g.to_string(), hash.into()]);
        }
    }
    write_csv(&dir.join("gaps.csv"), &GAPS_HEADER, &rows)?;
    let rows: Vec<Vec<String>> = report
        .summary
        .iter()
        .map(|s| {
            vec![
                s.n_agents.to_string(),
                s.arm.name().into(),
                s.samples.to_string(),
                s.noise.to_string(),
                cfg.seeds.len().to_string(),
                s.mean_final_gap.to_string(),
                s.min_final_gap.to_string(),
                s.max_final_gap.to_string(),
                hash.into(),
            ]
        })
        .collect();
    write_csv(&dir.join("summary.csv"), &SUMMARY_HEADER, &rows)?;
    for &n in &cfg.n_agents {
        let series: Vec<Series> = cfg
            .arms
            .iter()
            .map(|&arm| {
                let runs: Vec<&ArmRun> = report.runs.iter().filter(|r| r.n_agents == n && r.arm == arm).collect();
                let steps = runs[0].gaps.len();
                let points = (0..steps)
                    .map(|k| (k as f64, runs.iter().map(|r| r.gaps[k]).sum::<f64>() / runs.len() as f64))
                    .collect();
                Series { name: arm.name().into(), points }
            })
            .collect();
        let svg = line_plot(&format!("Quadratic game, N = {n}"), "actor step", "mean gap over seeds", &series);
        write_text(&dir.join(format!("gap_n{n}.svg")), &svg)?;
    }
    Ok(())
}
