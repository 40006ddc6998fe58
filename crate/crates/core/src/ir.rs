//! Functions of bounded interaction rank.
//!
//! An [`IrFunction`] of rank `K` over a distinguished input `x` and `W` other
//! slots `y_1..y_W` is stored as a sum of dense sub-function tables
//! `g_S(x, y_S)`, one per subset `S` of slots with `|S| < K`. Slots are
//! 0-based. A table for `S = (j_1 < .. < j_k)` is row-major over
//! `(x, y_{j_1}, .., y_{j_k})` with `x` outermost.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{CondTable, TableError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IrError {
    #[error("subset {0:?} is not strictly increasing")]
    NotIncreasing(Vec<usize>),
    #[error("subset {subset:?} references a slot >= width {width}")]
    SlotOutOfRange { subset: Vec<usize>, width: usize },
    #[error("subset {subset:?} has {} slots, rank {rank} allows at most {}", subset.len(), rank - 1)]
    RankExceeded { subset: Vec<usize>, rank: usize },
    #[error("table for subset {subset:?} has {got} values, expected {expected}")]
    TableLength { subset: Vec<usize>, expected: usize, got: usize },
    #[error("non-finite value in table for subset {0:?}")]
    NonFinite(Vec<usize>),
    #[error("index {index} outside domain of size {size} ({slot})")]
    OutOfDomain { slot: String, index: usize, size: usize },
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("base distribution has zero probability at slot {slot}, x={x}, y={y}")]
    ZeroProbability { slot: usize, x: usize, y: usize },
    #[error("target puts mass where train has none ({0})")]
    InfiniteRatio(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// A strictly increasing list of 0-based slot indices.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SubsetKey(Vec<usize>);

impl SubsetKey {
    pub fn new(indices: Vec<usize>) -> Result<Self, IrError> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(IrError::NotIncreasing(indices));
        }
        Ok(SubsetKey(indices))
    }

    pub fn empty() -> Self {
        SubsetKey(Vec::new())
    }

    pub fn single(j: usize) -> Self {
        SubsetKey(vec![j])
    }

    pub fn pair(a: usize, b: usize) -> Self {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        assert!(lo != hi, "pair of identical slots");
        SubsetKey(vec![lo, hi])
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The key obtained by dropping the positions flagged in `mask`.
    fn without_positions(&self, mask: usize) -> SubsetKey {
        SubsetKey(
            self.0
                .iter()
                .enumerate()
                .filter(|(p, _)| mask >> p & 1 == 0)
                .map(|(_, &j)| j)
                .collect(),
        )
    }
}

impl TryFrom<Vec<usize>> for SubsetKey {
    type Error = IrError;
    fn try_from(v: Vec<usize>) -> Result<Self, IrError> {
        SubsetKey::new(v)
    }
}

impl From<SubsetKey> for Vec<usize> {
    fn from(k: SubsetKey) -> Self {
        k.0
    }
}

/// All subsets of `0..width` with fewer than `rank` elements, in lexicographic order.
pub fn subsets_below_rank(width: usize, rank: usize) -> Vec<SubsetKey> {
    fn rec(start: usize, width: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<SubsetKey>) {
        out.push(SubsetKey(cur.clone()));
        if left == 0 {
            return;
        }
        for j in start..width {
            cur.push(j);
            rec(j + 1, width, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, width, rank.saturating_sub(1), &mut Vec::new(), &mut out);
    out.sort();
    out
}

pub(crate) fn decode(mut idx: usize, dims: &[usize], out: &mut [usize]) {
    for d in (0..dims.len()).rev() {
        out[d] = idx % dims[d];
        idx /= dims[d];
    }
}

pub(crate) fn encode(coords: impl Iterator<Item = usize>, dims: &[usize]) -> usize {
    coords.zip(dims).fold(0, |acc, (c, d)| acc * d + c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IrFunctionJson", into = "IrFunctionJson")]
pub struct IrFunction {
    x_size: usize,
    y_sizes: Vec<usize>,
    rank: usize,
    tables: BTreeMap<SubsetKey, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct IrFunctionJson {
    rank: usize,
    x_size: usize,
    y_sizes: Vec<usize>,
    tables: Vec<TableJson>,
}

#[derive(Serialize, Deserialize)]
struct TableJson {
    subset: Vec<usize>,
    values: Vec<f64>,
}

impl TryFrom<IrFunctionJson> for IrFunction {
    type Error = IrError;
    fn try_from(doc: IrFunctionJson) -> Result<Self, IrError> {
        let mut f = IrFunction::new(doc.x_size, doc.y_sizes, doc.rank)?;
        for t in doc.tables {
            f.set_table(SubsetKey::new(t.subset)?, t.values)?;
        }
        Ok(f)
    }
}

impl From<IrFunction> for IrFunctionJson {
    fn from(f: IrFunction) -> Self {
        IrFunctionJson {
            rank: f.rank,
            x_size: f.x_size,
            y_sizes: f.y_sizes,
            tables: f
                .tables
                .into_iter()
                .map(|(k, values)| TableJson { subset: k.0, values })
                .collect(),
        }
    }
}

impl IrFunction {
    /// The zero function; it always carries an (all-zero) table for the empty subset.
    pub fn new(x_size: usize, y_sizes: Vec<usize>, rank: usize) -> Result<Self, IrError> {
        if x_size == 0 || y_sizes.contains(&0) {
            return Err(IrError::Shape("slot domains must be nonempty".into()));
        }
        if rank == 0 {
            return Err(IrError::Shape("rank must be at least 1".into()));
        }
        let mut tables = BTreeMap::new();
        tables.insert(SubsetKey::empty(), vec![0.0; x_size]);
        Ok(IrFunction { x_size, y_sizes, rank, tables })
    }

    pub fn x_size(&self) -> usize {
        self.x_size
    }

    pub fn y_sizes(&self) -> &[usize] {
        &self.y_sizes
    }

    pub fn width(&self) -> usize {
        self.y_sizes.len()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dims(&self, key: &SubsetKey) -> Vec<usize> {
        std::iter::once(self.x_size)
            .chain(key.0.iter().map(|&j| self.y_sizes[j]))
            .collect()
    }

    pub fn table_len(&self, key: &SubsetKey) -> usize {
        self.dims(key).iter().product()
    }

    fn check_key(&self, key: &SubsetKey) -> Result<(), IrError> {
        if key.len() >= self.rank {
            return Err(IrError::RankExceeded { subset: key.0.clone(), rank: self.rank });
        }
        if key.0.iter().any(|&j| j >= self.width()) {
            return Err(IrError::SlotOutOfRange { subset: key.0.clone(), width: self.width() });
        }
        Ok(())
    }

    pub fn set_table(&mut self, key: SubsetKey, values: Vec<f64>) -> Result<(), IrError> {
        self.check_key(&key)?;
        let expected = self.table_len(&key);
        if values.len() != expected {
            return Err(IrError::TableLength { subset: key.0, expected, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IrError::NonFinite(key.0));
        }
        self.tables.insert(key, values);
        Ok(())
    }

    pub fn with_table(mut self, subset: &[usize], values: Vec<f64>) -> Result<Self, IrError> {
        self.set_table(SubsetKey::new(subset.to_vec())?, values)?;
        Ok(self)
    }

    pub fn table(&self, key: &SubsetKey) -> Option<&[f64]> {
        self.tables.get(key).map(Vec::as_slice)
    }

    pub fn tables(&self) -> impl Iterator<Item = (&SubsetKey, &[f64])> {
        self.tables.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub(crate) fn table_mut_or_zero(&mut self, key: &SubsetKey) -> &mut Vec<f64> {
        let len = self.table_len(key);
        self.tables.entry(key.clone()).or_insert_with(|| vec![0.0; len])
    }

    pub fn evaluate(&self, x: usize, y: &[usize]) -> Result<f64, IrError> {
        if x >= self.x_size {
            return Err(IrError::OutOfDomain { slot: "x".into(), index: x, size: self.x_size });
        }
        if y.len() != self.width() {
            return Err(IrError::Shape(format!("expected {} y-indices, got {}", self.width(), y.len())));
        }
        for (j, (&v, &size)) in y.iter().zip(&self.y_sizes).enumerate() {
            if v >= size {
                return Err(IrError::OutOfDomain { slot: format!("y{j}"), index: v, size });
            }
        }
        Ok(self.evaluate_unchecked(x, y))
    }

    pub fn evaluate_unchecked(&self, x: usize, y: &[usize]) -> f64 {
        self.tables
            .iter()
            .map(|(key, values)| {
                let idx = key.0.iter().fold(x, |acc, &j| acc * self.y_sizes[j] + y[j]);
                values[idx]
            })
            .sum()
    }

    /// `E[f(x, y)]` with each slot drawn independently from `slot_dists[j]`.
    pub fn expect_slots(&self, x: usize, slot_dists: &[&[f64]]) -> f64 {
        self.tables
            .iter()
            .map(|(key, values)| {
                let block = values.len() / self.x_size;
                let dists: Vec<&[f64]> = key.0.iter().map(|&j| slot_dists[j]).collect();
                contract(&values[x * block..(x + 1) * block], &dists)
            })
            .sum()
    }

    /// Lower and upper bounds on the function obtained by summing table extremes.
    pub fn range_bounds(&self) -> (f64, f64) {
        self.tables.values().fold((0.0, 0.0), |(lo, hi), v| {
            let mn = v.iter().copied().fold(f64::INFINITY, f64::min);
            let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo + mn, hi + mx)
        })
    }

    fn same_domain(&self, other: &IrFunction) -> Result<(), IrError> {
        if self.x_size != other.x_size || self.y_sizes != other.y_sizes {
            return Err(IrError::DomainMismatch(format!(
                "x {} vs {}, y {:?} vs {:?}",
                self.x_size, other.x_size, self.y_sizes, other.y_sizes
            )));
        }
        Ok(())
    }

    /// `self + scale * other`; the rank of the result is the larger of the two.
    pub fn add_scaled(&self, other: &IrFunction, scale: f64) -> Result<IrFunction, IrError> {
        self.same_domain(other)?;
        let mut out = self.clone();
        out.rank = self.rank.max(other.rank);
        for (key, values) in &other.tables {
            let t = out.table_mut_or_zero(key);
            t.iter_mut().zip(values).for_each(|(a, b)| *a += scale * b);
        }
        Ok(out)
    }

    pub fn scaled(&self, factor: f64) -> IrFunction {
        let mut out = self.clone();
        out.tables.values_mut().for_each(|v| v.iter_mut().for_each(|a| *a *= factor));
        out
    }

    /// Relabels slots: old slot `j` becomes slot `perm[j]`.
    pub fn permute_slots(&self, perm: &[usize]) -> Result<IrFunction, IrError> {
        let w = self.width();
        let mut seen = vec![false; w];
        if perm.len() != w || perm.iter().any(|&p| p >= w || std::mem::replace(&mut seen[p], true)) {
            return Err(IrError::Shape(format!("{perm:?} is not a permutation of {w} slots")));
        }
        let mut y_sizes = vec![0; w];
        for (j, &p) in perm.iter().enumerate() {
            y_sizes[p] = self.y_sizes[j];
        }
        let mut out = IrFunction::new(self.x_size, y_sizes, self.rank)?;
        for (key, values) in &self.tables {
            let mut mapped: Vec<(usize, usize)> =
                key.0.iter().enumerate().map(|(pos, &j)| (perm[j], pos)).collect();
            mapped.sort();
            let new_key = SubsetKey(mapped.iter().map(|m| m.0).collect());
            let old_dims = self.dims(key);
            let new_dims = out.dims(&new_key);
            let mut coords = vec![0; old_dims.len()];
            let mut new_values = vec![0.0; values.len()];
            for (idx, &v) in values.iter().enumerate() {
                decode(idx, &old_dims, &mut coords);
                let it = std::iter::once(coords[0]).chain(mapped.iter().map(|m| coords[1 + m.1]));
                new_values[encode(it, &new_dims)] = v;
            }
            out.tables.insert(new_key, new_values);
        }
        Ok(out)
    }

    pub fn max_abs_table_diff(&self, other: &IrFunction) -> f64 {
        let keys: std::collections::BTreeSet<&SubsetKey> =
            self.tables.keys().chain(other.tables.keys()).collect();
        keys.into_iter()
            .map(|k| {
                let len = self.table_len(k);
                let a = self.tables.get(k);
                let b = other.tables.get(k);
                (0..len)
                    .map(|i| {
                        let va = a.map_or(0.0, |t| t[i]);
                        let vb = b.map_or(0.0, |t| t[i]);
                        (va - vb).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Contracts a row-major block over the trailing axes with one weight vector per axis.
fn contract(block: &[f64], dists: &[&[f64]]) -> f64 {
    let mut cur: Vec<f64> = block.to_vec();
    for d in dists.iter().rev() {
        let n = d.len();
        cur = cur.chunks(n).map(|c| c.iter().zip(*d).map(|(v, w)| v * w).sum()).collect();
    }
    cur[0]
}

/// A distribution over `(x, y_1..y_W)` under which the slots are conditionally
/// independent given `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseDistribution {
    x_dist: Vec<f64>,
    y_dists: Vec<CondTable>,
}

impl BaseDistribution {
    pub fn new(x_dist: Vec<f64>, y_dists: Vec<CondTable>) -> Result<Self, IrError> {
        if x_dist.is_empty() || x_dist.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(IrError::Distribution("x distribution must be nonnegative and nonempty".into()));
        }
        let s: f64 = x_dist.iter().sum();
        if (s - 1.0).abs() > 1e-12 * x_dist.len() as f64 {
            return Err(IrError::Distribution(format!("x distribution sums to {s}")));
        }
        for (j, t) in y_dists.iter().enumerate() {
            t.validate()?;
            if t.rows() != x_dist.len() {
                return Err(IrError::Distribution(format!(
                    "slot {j} conditional has {} rows, expected {}",
                    t.rows(),
                    x_dist.len()
                )));
            }
        }
        Ok(BaseDistribution { x_dist, y_dists })
    }

    pub fn uniform(x_size: usize, y_sizes: &[usize]) -> Self {
        BaseDistribution {
            x_dist: vec![1.0 / x_size as f64; x_size],
            y_dists: y_sizes.iter().map(|&n| CondTable::uniform(x_size, n)).collect(),
        }
    }

    /// Slots drawn independently of `x` from fixed marginals.
    pub fn independent(x_dist: Vec<f64>, marginals: &[Vec<f64>]) -> Result<Self, IrError> {
        let rows = x_dist.len();
        let y = marginals
            .iter()
            .map(|m| CondTable::new(rows, m.len(), m.repeat(rows)))
            .collect::<Result<Vec<_>, _>>()?;
        BaseDistribution::new(x_dist, y)
    }

    pub fn x_dist(&self) -> &[f64] {
        &self.x_dist
    }

    pub fn y_dist(&self, j: usize) -> &CondTable {
        &self.y_dists[j]
    }

    pub fn width(&self) -> usize {
        self.y_dists.len()
    }

    fn matches(&self, f: &IrFunction) -> Result<(), IrError> {
        let ok = self.x_dist.len() == f.x_size
            && self.y_dists.len() == f.width()
            && self.y_dists.iter().zip(&f.y_sizes).all(|(t, &n)| t.cols() == n);
        if ok {
            Ok(())
        } else {
            Err(IrError::DomainMismatch("base distribution does not match function domains".into()))
        }
    }

    fn slot_prob(&self, j: usize, x: usize, y: usize) -> f64 {
        self.y_dists[j].get(x, y)
    }
}

/// Rewrites `f` so that every sub-function over a nonempty subset has zero
/// conditional mean in each of its slots given `x` and the remaining slots.
///
/// Tables are processed from the largest subsets down: each table is replaced
/// by its alternating-sign centering, and the removed conditional means are
/// added to the tables of the smaller subsets they depend on.
pub fn standardize(f: &IrFunction, base: &BaseDistribution) -> Result<IrFunction, IrError> {
    base.matches(f)?;
    for j in 0..base.width() {
        let t = base.y_dist(j);
        for x in 0..t.rows() {
            if let Some(y) = t.row(x).iter().position(|&p| p <= 0.0) {
                return Err(IrError::ZeroProbability { slot: j, x, y });
            }
        }
    }
    let mut out = f.clone();
    let max_k = out.tables.keys().map(SubsetKey::len).max().unwrap_or(0);
    for k in (1..=max_k).rev() {
        let keys: Vec<SubsetKey> = out.tables.keys().filter(|s| s.len() == k).cloned().collect();
        for key in keys {
            let g = out.tables[&key].clone();
            let dims = out.dims(&key);
            let mut centered = g.clone();
            let mut coords = vec![0; dims.len()];
            for mask in 1usize..(1 << k) {
                let sign = if mask.count_ones() % 2 == 1 { -1.0 } else { 1.0 };
                let sub = key.without_positions(mask);
                let sub_dims = out.dims(&sub);
                let m = marginalize(&g, &dims, &key, mask, base, &sub_dims);
                for (idx, c) in centered.iter_mut().enumerate() {
                    decode(idx, &dims, &mut coords);
                    *c += sign * m[kept_index(&coords, mask, &sub_dims)];
                }
                let t = out.table_mut_or_zero(&sub);
                t.iter_mut().zip(&m).for_each(|(a, b)| *a -= sign * b);
            }
            out.tables.insert(key, centered);
        }
    }
    Ok(out)
}

fn kept_index(coords: &[usize], mask: usize, sub_dims: &[usize]) -> usize {
    let kept = std::iter::once(coords[0]).chain(
        coords[1..]
            .iter()
            .enumerate()
            .filter(|(p, _)| mask >> p & 1 == 0)
            .map(|(_, &c)| c),
    );
    encode(kept, sub_dims)
}

/// Conditional expectation of a table over the slot positions in `mask`.
fn marginalize(
    g: &[f64],
    dims: &[usize],
    key: &SubsetKey,
    mask: usize,
    base: &BaseDistribution,
    sub_dims: &[usize],
) -> Vec<f64> {
    let mut out = vec![0.0; sub_dims.iter().product()];
    let mut coords = vec![0; dims.len()];
    for (idx, &v) in g.iter().enumerate() {
        decode(idx, dims, &mut coords);
        let x = coords[0];
        let w: f64 = key
            .0
            .iter()
            .enumerate()
            .filter(|(p, _)| mask >> p & 1 == 1)
            .map(|(p, &j)| base.slot_prob(j, x, coords[1 + p]))
            .product();
        out[kept_index(&coords, mask, sub_dims)] += w * v;
    }
    out
}

/// Largest absolute per-slot conditional mean over all nonempty-subset tables.
/// Zero (up to rounding) exactly when `f` is standardized against `base`.
pub fn max_conditional_mean(f: &IrFunction, base: &BaseDistribution) -> Result<f64, IrError> {
    base.matches(f)?;
    let mut worst: f64 = 0.0;
    for (key, g) in &f.tables {
        let dims = f.dims(key);
        for p in 0..key.len() {
            let sub = key.without_positions(1 << p);
            let m = marginalize(g, &dims, key, 1 << p, base, &f.dims(&sub));
            worst = m.iter().fold(worst, |acc, v| acc.max(v.abs()));
        }
    }
    Ok(worst)
}

/// Per-subset `E_base[(g*_S - ĝ_S)^2]` between the standardized forms of the two functions.
pub fn subfunction_errors(
    f_star: &IrFunction,
    f_hat: &IrFunction,
    base: &BaseDistribution,
) -> Result<BTreeMap<SubsetKey, f64>, IrError> {
    f_star.same_domain(f_hat)?;
    let diff = standardize(f_star, base)?.add_scaled(&standardize(f_hat, base)?, -1.0)?;
    let mut out = BTreeMap::new();
    for (key, d) in &diff.tables {
        let dims = diff.dims(key);
        let mut coords = vec![0; dims.len()];
        let mut acc = 0.0;
        for (idx, &v) in d.iter().enumerate() {
            decode(idx, &dims, &mut coords);
            let x = coords[0];
            let w: f64 = base.x_dist[x]
                * key
                    .0
                    .iter()
                    .enumerate()
                    .map(|(p, &j)| base.slot_prob(j, x, coords[1 + p]))
                    .product::<f64>();
            acc += w * v * v;
        }
        out.insert(key.clone(), acc);
    }
    Ok(out)
}

/// `E[f(x, y)^2]` under `base`, computed exactly from pairwise table products.
pub fn second_moment(f: &IrFunction, base: &BaseDistribution) -> Result<f64, IrError> {
    base.matches(f)?;
    let entries: Vec<(&SubsetKey, &Vec<f64>)> = f.tables.iter().collect();
    let mut total = 0.0;
    for (a, (ka, ga)) in entries.iter().enumerate() {
        for (kb, gb) in &entries[a..] {
            let factor = if std::ptr::eq(*ka, *kb) { 1.0 } else { 2.0 };
            total += factor * cross_moment(f, base, ka, ga, kb, gb);
        }
    }
    Ok(total)
}

fn cross_moment(
    f: &IrFunction,
    base: &BaseDistribution,
    ka: &SubsetKey,
    ga: &[f64],
    kb: &SubsetKey,
    gb: &[f64],
) -> f64 {
    let mut union: Vec<usize> = ka.0.iter().chain(&kb.0).copied().collect();
    union.sort_unstable();
    union.dedup();
    let pos = |k: &SubsetKey| -> Vec<usize> {
        k.0.iter().map(|j| union.iter().position(|u| u == j).unwrap()).collect()
    };
    let (pa, pb) = (pos(ka), pos(kb));
    let udims: Vec<usize> = std::iter::once(f.x_size).chain(union.iter().map(|&j| f.y_sizes[j])).collect();
    let (da, db) = (f.dims(ka), f.dims(kb));
    let mut coords = vec![0; udims.len()];
    let mut acc = 0.0;
    for idx in 0..udims.iter().product() {
        decode(idx, &udims, &mut coords);
        let x = coords[0];
        let mut w = base.x_dist[x];
        for (u, &j) in union.iter().enumerate() {
            w *= base.slot_prob(j, x, coords[1 + u]);
        }
        if w == 0.0 {
            continue;
        }
        let ia = encode(std::iter::once(x).chain(pa.iter().map(|&p| coords[1 + p])), &da);
        let ib = encode(std::iter::once(x).chain(pb.iter().map(|&p| coords[1 + p])), &db);
        acc += w * ga[ia] * gb[ib];
    }
    acc
}

/// Constant `c` in the distribution-shift bound `c (2W)^{2(K-1)} C^K ε`. It is the
/// largest ratio observed on the frozen `shift` verification instances, rounded
/// up and frozen; the ratio reaches 1 exactly for functions of `x` alone.
pub const SHIFT_CONSTANT: f64 = 1.0;

/// Right-hand side of the distribution-shift bound for width `W`, rank `K`,
/// density ratio `C` and training error `ε`.
pub fn shift_bound(width: usize, rank: usize, ratio: f64, eps: f64) -> f64 {
    let k = rank as i32;
    SHIFT_CONSTANT * (2.0 * width as f64).powi(2 * (k - 1)) * ratio.powi(k) * eps
}

/// Exact `E_target[(f* - f̂)^2]`.
pub fn shifted_mse(f_star: &IrFunction, f_hat: &IrFunction, target: &BaseDistribution) -> Result<f64, IrError> {
    let diff = f_star.add_scaled(f_hat, -1.0)?;
    Ok(second_moment(&diff, target)?.max(0.0))
}

/// The largest density ratio of `target` over `train`, taken over the
/// `x`-marginal and every slot conditional.
pub fn density_ratio_bound(train: &BaseDistribution, target: &BaseDistribution) -> Result<f64, IrError> {
    if train.x_dist.len() != target.x_dist.len()
        || train.width() != target.width()
        || train.y_dists.iter().zip(&target.y_dists).any(|(a, b)| a.cols() != b.cols())
    {
        return Err(IrError::DomainMismatch("train and target have different domains".into()));
    }
    let ratio = |p: f64, q: f64, what: &dyn Fn() -> String| -> Result<f64, IrError> {
        if q <= 0.0 {
            return Ok(0.0);
        }
        if p <= 0.0 {
            return Err(IrError::InfiniteRatio(what()));
        }
        Ok(q / p)
    };
    let mut worst: f64 = 0.0;
    for (x, (&p, &q)) in train.x_dist.iter().zip(&target.x_dist).enumerate() {
        worst = worst.max(ratio(p, q, &|| format!("x={x}"))?);
    }
    for j in 0..train.width() {
        let (a, b) = (train.y_dist(j), target.y_dist(j));
        for x in 0..a.rows() {
            for y in 0..a.cols() {
                worst = worst.max(ratio(a.get(x, y), b.get(x, y), &|| format!("slot {j}, x={x}, y={y}"))?);
            }
        }
    }
    Ok(worst)
}
