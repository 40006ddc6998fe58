//! Offline datasets: generation under a behavior policy and JSONL persistence.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::game::{DecoupledGame, Dynamics, GameError, ProductPolicy};
use crate::seeding::{self, streams};
use crate::table::{sample_index, CondTable};

pub const FORMAT: &str = "ir-marl-dataset/1";
const SHARD: usize = 2048;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("noise: {0}")]
    Noise(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// How reward observations scatter around their mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    #[default]
    None,
    /// `mean + U(-half_width, half_width)`.
    AdditiveUniform { half_width: f64 },
    /// A `{0, 1}` draw with the given mean.
    Bernoulli,
}

impl NoiseSpec {
    pub fn sample<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> Result<f64, DataError> {
        match *self {
            NoiseSpec::None => Ok(mean),
            NoiseSpec::AdditiveUniform { half_width } => {
                if half_width == 0.0 {
                    Ok(mean)
                } else {
                    Ok(mean + rng.random_range(-half_width..half_width))
                }
            }
            NoiseSpec::Bernoulli => {
                if !(0.0..=1.0).contains(&mean) {
                    return Err(DataError::Noise(format!("bernoulli mean {mean} outside [0, 1]")));
                }
                Ok(if rng.random::<f64>() < mean { 1.0 } else { 0.0 })
            }
        }
    }

    pub fn check_range(&self, range: (f64, f64)) -> Result<(), DataError> {
        match *self {
            NoiseSpec::Bernoulli if range.0 < 0.0 || range.1 > 1.0 => {
                Err(DataError::Noise(format!("bernoulli noise needs a range inside [0, 1], got {range:?}")))
            }
            NoiseSpec::AdditiveUniform { half_width } if !(half_width >= 0.0 && half_width.is_finite()) => {
                Err(DataError::Noise(format!("half width {half_width} must be finite and >= 0")))
            }
            _ => Ok(()),
        }
    }

    /// Largest possible distance between an observation and its mean.
    pub fn spread(&self) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::AdditiveUniform { half_width } => half_width,
            NoiseSpec::Bernoulli => 1.0,
        }
    }
}

/// Behavior policy `ν` plus the state-sampling laws `σ_{i,h}(s | c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorPolicy {
    pub policy: ProductPolicy,
    /// `[agent][step]`, rows are contexts. `None` means the visitation of `ν`.
    pub state_dists: Option<Vec<Vec<CondTable>>>,
}

impl BehaviorPolicy {
    pub fn new(policy: ProductPolicy) -> Self {
        BehaviorPolicy { policy, state_dists: None }
    }

    pub fn uniform(dynamics: &Dynamics) -> Self {
        BehaviorPolicy::new(ProductPolicy::uniform(dynamics))
    }

    /// State-sampling tables, using the behavior visitation where none were given.
    pub fn resolved_state_dists(&self, dynamics: &Dynamics) -> Result<Vec<Vec<CondTable>>, GameError> {
        dynamics.check_policy(&self.policy)?;
        if let Some(sd) = &self.state_dists {
            for (i, per_h) in sd.iter().enumerate() {
                let ok = per_h.len() == dynamics.horizon
                    && per_h.iter().all(|t| t.rows() == dynamics.n_contexts && t.cols() == dynamics.agents[i].n_states);
                if !ok {
                    return Err(GameError::Shape(format!("state distribution of agent {i} has wrong shape")));
                }
            }
            if sd.len() != dynamics.n_agents() {
                return Err(GameError::Shape("one state distribution list per agent required".into()));
            }
            return Ok(sd.clone());
        }
        Ok((0..dynamics.n_agents())
            .map(|i| {
                let ag = &dynamics.agents[i];
                let per_c: Vec<Vec<Vec<f64>>> =
                    (0..dynamics.n_contexts).map(|c| dynamics.local_visitation(i, self.policy.agent(i), c)).collect();
                (0..dynamics.horizon)
                    .map(|h| {
                        let mut data = Vec::with_capacity(dynamics.n_contexts * ag.n_states);
                        for vis in &per_c {
                            for s in 0..ag.n_states {
                                data.push(vis[h][s * ag.n_actions..(s + 1) * ag.n_actions].iter().sum());
                            }
                        }
                        CondTable::from_weights(dynamics.n_contexts, ag.n_states, data).expect("visitation rows")
                    })
                    .collect()
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub n_contexts: usize,
    pub horizon: usize,
    pub state_sizes: Vec<usize>,
    pub action_sizes: Vec<usize>,
    pub initial_states: Vec<usize>,
    pub records_per_step: usize,
    pub seed: u64,
    pub game_hash: String,
    pub behavior_hash: String,
    /// Hash of the experiment configuration that produced the file, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub c: usize,
    pub s: Vec<usize>,
    pub a: Vec<usize>,
    pub sp: Vec<usize>,
    pub r: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    h: usize,
    #[serde(flatten)]
    record: Record,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: DatasetHeader,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OfflineDataset {
    pub header: DatasetHeader,
    /// `steps[h]` holds the records of step `h`.
    pub steps: Vec<Vec<Record>>,
}

/// Hex SHA-256 of a value's JSON encoding.
pub fn content_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable");
    hex::encode(Sha256::digest(&bytes))
}

impl OfflineDataset {
    pub fn n_agents(&self) -> usize {
        self.header.state_sizes.len()
    }

    pub fn records(&self, h: usize) -> &[Record] {
        &self.steps[h]
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let hd = &self.header;
        let n = hd.state_sizes.len();
        if hd.action_sizes.len() != n || hd.initial_states.len() != n || n == 0 {
            return Err(DataError::Invalid("state and action size lists must be nonempty and equal length".into()));
        }
        if self.steps.len() != hd.horizon {
            return Err(DataError::Invalid(format!("{} steps for horizon {}", self.steps.len(), hd.horizon)));
        }
        for (h, recs) in self.steps.iter().enumerate() {
            if recs.len() != hd.records_per_step {
                return Err(DataError::Invalid(format!("step {h} has {} records, expected {}", recs.len(), hd.records_per_step)));
            }
            for (k, r) in recs.iter().enumerate() {
                check_record(hd, r).map_err(|m| DataError::Invalid(format!("step {h} record {k}: {m}")))?;
            }
        }
        Ok(())
    }

    pub fn check_against(&self, dynamics: &Dynamics) -> Result<(), DataError> {
        let hd = &self.header;
        let ok = hd.n_contexts == dynamics.n_contexts
            && hd.horizon == dynamics.horizon
            && hd.state_sizes.iter().eq(dynamics.agents.iter().map(|a| &a.n_states))
            && hd.action_sizes.iter().eq(dynamics.agents.iter().map(|a| &a.n_actions))
            && hd.initial_states.iter().eq(dynamics.agents.iter().map(|a| &a.init_state));
        if ok {
            Ok(())
        } else {
            Err(DataError::Invalid("dataset shape does not match the game".into()))
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        if self.header.records_per_step == 0 {
            return Err(DataError::Invalid("refusing to save an empty dataset".into()));
        }
        self.validate()?;
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, &HeaderLine { header: self.header.clone() }).map_err(std::io::Error::other)?;
        writeln!(w)?;
        for (h, recs) in self.steps.iter().enumerate() {
            for r in recs {
                serde_json::to_writer(&mut w, &RecordLine { h, record: r.clone() }).map_err(std::io::Error::other)?;
                writeln!(w)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines().enumerate();
        let header: DatasetHeader = match lines.next() {
            Some((_, line)) => serde_json::from_str::<HeaderLine>(&line?)
                .map_err(|e| DataError::Parse { line: 1, msg: format!("bad header: {e}") })?
                .header,
            None => return Err(DataError::Parse { line: 1, msg: "missing header".into() }),
        };
        if header.format != FORMAT {
            return Err(DataError::Parse { line: 1, msg: format!("unknown format {:?}", header.format) });
        }
        let mut steps: Vec<Vec<Record>> = vec![Vec::with_capacity(header.records_per_step); header.horizon];
        let mut last_line = 1;
        for (idx, line) in lines {
            let line_no = idx + 1;
            last_line = line_no;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rl: RecordLine =
                serde_json::from_str(&line).map_err(|e| DataError::Parse { line: line_no, msg: e.to_string() })?;
            if rl.h >= header.horizon {
                return Err(DataError::Parse { line: line_no, msg: format!("step {} >= horizon {}", rl.h, header.horizon) });
            }
            check_record(&header, &rl.record).map_err(|msg| DataError::Parse { line: line_no, msg })?;
            steps[rl.h].push(rl.record);
        }
        if let Some((h, recs)) = steps.iter().enumerate().find(|(_, r)| r.len() != header.records_per_step) {
            return Err(DataError::Parse {
                line: last_line + 1,
                msg: format!("step {h} has {} records, header promises {}", recs.len(), header.records_per_step),
            });
        }
        Ok(OfflineDataset { header, steps })
    }
}

fn check_record(hd: &DatasetHeader, r: &Record) -> Result<(), String> {
    let n = hd.state_sizes.len();
    if r.s.len() != n || r.a.len() != n || r.sp.len() != n || r.r.len() != n {
        return Err(format!("expected {n} agents per field"));
    }
    if r.c >= hd.n_contexts {
        return Err(format!("context {} out of range", r.c));
    }
    for i in 0..n {
        if r.s[i] >= hd.state_sizes[i] || r.sp[i] >= hd.state_sizes[i] || r.a[i] >= hd.action_sizes[i] {
            return Err(format!("agent {i} index out of range"));
        }
    }
    if r.r.iter().any(|v| !v.is_finite()) {
        return Err("non-finite reward".into());
    }
    Ok(())
}

/// Draws `m` records per step. Records are generated in fixed-size shards, each
/// with its own stream `(seed, DATASET, h, shard)`, so the output depends only
/// on the seed and not on the thread count.
pub fn generate_dataset(game: &DecoupledGame, behavior: &BehaviorPolicy, m: usize, seed: u64) -> Result<OfflineDataset, DataError> {
    let d = &game.dynamics;
    let sigma = behavior.resolved_state_dists(d)?;
    game.noise.check_range(game.reward_range)?;
    let n = d.n_agents();
    let mut steps = Vec::with_capacity(d.horizon);
    for h in 0..d.horizon {
        let shards: Vec<Result<Vec<Record>, DataError>> = (0..m.div_ceil(SHARD))
            .into_par_iter()
            .map(|k| {
                let mut rng = seeding::rng(seed, &[streams::DATASET, h as u64, k as u64]);
                let len = SHARD.min(m - k * SHARD);
                let mut out = Vec::with_capacity(len);
                for _ in 0..len {
                    let c = sample_index(&d.rho, &mut rng);
                    let mut s = vec![0; n];
                    let mut a = vec![0; n];
                    let mut sp = vec![0; n];
                    for i in 0..n {
                        let ag = &d.agents[i];
                        s[i] = sample_index(sigma[i][h].row(c), &mut rng);
                        a[i] = sample_index(behavior.policy.tables[i][h].row(c * ag.n_states + s[i]), &mut rng);
                        sp[i] = sample_index(ag.kernels[h].row(ag.x_index(c, s[i], a[i])), &mut rng);
                    }
                    let r = game
                        .mean_rewards(h, c, &s, &a)
                        .into_iter()
                        .map(|mean| game.noise.sample(mean, &mut rng))
                        .collect::<Result<Vec<_>, _>>()?;
                    out.push(Record { c, s, a, sp, r });
                }
                Ok(out)
            })
            .collect();
        let mut recs = Vec::with_capacity(m);
        for shard in shards {
            recs.extend(shard?);
        }
        steps.push(recs);
    }
    let header = DatasetHeader {
        format: FORMAT.into(),
        n_contexts: d.n_contexts,
        horizon: d.horizon,
        state_sizes: d.agents.iter().map(|a| a.n_states).collect(),
        action_sizes: d.agents.iter().map(|a| a.n_actions).collect(),
        initial_states: d.agents.iter().map(|a| a.init_state).collect(),
        records_per_step: m,
        seed,
        game_hash: content_hash(game),
        behavior_hash: content_hash(behavior),
        config_hash: None,
    };
    Ok(OfflineDataset { header, steps })
}
