//! Posterior summaries of mixture runs and generative diagnostics.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crm::{CrmSpec, ItemId, ItemRegistry};
use crate::error::{invalid, Error, Result};
use crate::pl::{sample_top_m, PartialRanking};
use crate::simulate::generative_measure;
use crate::rng::StreamFactory;

/// Normalised weights of one cluster at one iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterWeights {
    pub weights: Vec<f64>,
    pub residual: f64,
}

impl ClusterWeights {
    /// Normalises raw masses.
    pub fn from_masses(weights: &[f64], residual: f64) -> Self {
        let t = weights.iter().sum::<f64>() + residual;
        Self { weights: weights.iter().map(|w| w / t).collect(), residual: residual / t }
    }
}

/// One retained iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iter: u64,
    #[serde(rename = "c")]
    pub assignments: Vec<u32>,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(rename = "J")]
    pub num_clusters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<ClusterWeights>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct McmcTrace {
    pub seed: u64,
    pub config_sha: String,
    snapshots: Vec<Snapshot>,
}

impl McmcTrace {
    pub fn new(seed: u64, config_sha: impl Into<String>) -> Self {
        Self { seed, config_sha: config_sha.into(), snapshots: Vec::new() }
    }

    /// Appends a snapshot; iterations must increase and every snapshot must
    /// cover the same rankings.
    pub fn push(&mut self, s: Snapshot) -> Result<()> {
        if let Some(last) = self.snapshots.last() {
            if s.iter <= last.iter {
                return invalid(format!("iteration {} does not follow {}", s.iter, last.iter));
            }
            if s.assignments.len() != last.assignments.len() {
                return Err(Error::StateMismatch("snapshots disagree on the number of rankings".into()));
            }
        }
        self.snapshots.push(s);
        Ok(())
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn num_lists(&self) -> usize {
        self.snapshots.first().map_or(0, |s| s.assignments.len())
    }

    /// Drops the first `n` snapshots.
    pub fn discard(&mut self, n: usize) {
        self.snapshots.drain(..n.min(self.snapshots.len()));
    }
}

/// Cluster labels of the rankings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

impl Partition {
    /// Relabels by decreasing cluster size; equal sizes keep the order of
    /// first appearance.
    pub fn canonical<T: Copy + Into<u64>>(labels: &[T]) -> Self {
        let mut first: HashMap<u64, (usize, usize)> = HashMap::new();
        for (i, &l) in labels.iter().enumerate() {
            first.entry(l.into()).or_insert((i, 0)).1 += 1;
        }
        let mut order: Vec<(u64, usize, usize)> = first.into_iter().map(|(l, (f, n))| (l, f, n)).collect();
        order.sort_by(|a, b| b.2.cmp(&a.2).then(a.1.cmp(&b.1)));
        let map: HashMap<u64, usize> = order.iter().enumerate().map(|(j, o)| (o.0, j)).collect();
        Self {
            labels: labels.iter().map(|&l| map[&l.into()]).collect(),
            sizes: order.iter().map(|o| o.2).collect(),
        }
    }

    /// Keeps the given labels, which must be dense `0..J`.
    pub fn from_dense(labels: Vec<usize>) -> Result<Self> {
        let j = labels.iter().max().map_or(0, |&m| m + 1);
        let mut sizes = vec![0; j];
        labels.iter().for_each(|&l| sizes[l] += 1);
        if sizes.contains(&0) {
            return invalid("cluster labels are not dense");
        }
        Ok(Self { labels, sizes })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn members(&self, j: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&l| self.labels[l] == j).collect()
    }
}

/// Co-assignment counts over the strict upper triangle, so that
/// `zeta = count / n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoClustering {
    size: usize,
    samples: u64,
    counts: Vec<u32>,
}

#[inline]
fn tri(size: usize, k: usize, l: usize) -> usize {
    // row-major strict upper triangle, k < l
    k * (2 * size - k - 1) / 2 + (l - k - 1)
}

fn groups(c: &[u32]) -> Vec<Vec<usize>> {
    let mut idx: HashMap<u32, usize> = HashMap::new();
    let mut g: Vec<Vec<usize>> = Vec::new();
    for (l, &a) in c.iter().enumerate() {
        let j = *idx.entry(a).or_insert_with(|| {
            g.push(Vec::new());
            g.len() - 1
        });
        g[j].push(l);
    }
    g
}

impl CoClustering {
    pub fn from_trace(trace: &McmcTrace) -> Result<Self> {
        if trace.is_empty() {
            return Err(Error::EmptyTrace);
        }
        let size = trace.num_lists();
        let mut counts = vec![0u32; size * size.saturating_sub(1) / 2];
        for s in trace.snapshots() {
            for g in groups(&s.assignments) {
                for (a, &k) in g.iter().enumerate() {
                    for &l in &g[a + 1..] {
                        counts[tri(size, k, l)] += 1;
                    }
                }
            }
        }
        Ok(Self { size, samples: trace.len() as u64, counts })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn count(&self, k: usize, l: usize) -> u32 {
        match k.cmp(&l) {
            std::cmp::Ordering::Equal => self.samples as u32,
            std::cmp::Ordering::Less => self.counts[tri(self.size, k, l)],
            std::cmp::Ordering::Greater => self.counts[tri(self.size, l, k)],
        }
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.count(k, l) as f64 / self.samples as f64
    }

    /// Rows `rows` of the matrix, each of full width.
    pub fn block(&self, rows: std::ops::Range<usize>) -> Vec<Vec<f64>> {
        rows.map(|k| (0..self.size).map(|l| self.get(k, l)).collect()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DahlEstimate {
    /// Position of the chosen snapshot in the trace.
    pub index: usize,
    pub iter: u64,
    pub partition: Partition,
    /// `sum_k sum_l (delta_kl - zeta_kl)^2`.
    pub score: f64,
}

/// `n^2/2` times the score, over unordered pairs, in exact arithmetic:
/// sum over pairs of C^2 plus sum over pairs joined in `c` of n^2 - 2nC.
fn pick_best(trace: &McmcTrace, sum_c2: u128, joined: &[u128]) -> DahlEstimate {
    let n = trace.len() as u128;
    let mut best = 0;
    let mut best_score = u128::MAX;
    for (i, s) in trace.snapshots().iter().enumerate() {
        let pairs: u128 = groups(&s.assignments).iter().map(|g| (g.len() * (g.len() - 1) / 2) as u128).sum();
        let score = sum_c2 + pairs * n * n - 2 * n * joined[i];
        if score < best_score {
            best_score = score;
            best = i;
        }
    }
    let s = &trace.snapshots()[best];
    DahlEstimate {
        index: best,
        iter: s.iter,
        partition: Partition::canonical(&s.assignments),
        score: 2.0 * best_score as f64 / (n * n) as f64,
    }
}

/// Dahl's least-squares estimate using a materialised co-clustering matrix.
/// Ties go to the earliest snapshot.
pub fn dahl_point_estimate(trace: &McmcTrace, zeta: &CoClustering) -> Result<DahlEstimate> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if zeta.size() != trace.num_lists() || zeta.samples() != trace.len() as u64 {
        return Err(Error::StateMismatch("co-clustering matrix was built from a different trace".into()));
    }
    let sum_c2: u128 = zeta.counts.iter().map(|&c| (c as u128) * (c as u128)).sum();
    let joined: Vec<u128> = trace
        .snapshots()
        .par_iter()
        .map(|s| {
            let mut acc = 0u128;
            for g in groups(&s.assignments) {
                for (a, &k) in g.iter().enumerate() {
                    for &l in &g[a + 1..] {
                        acc += zeta.count(k, l) as u128;
                    }
                }
            }
            acc
        })
        .collect();
    Ok(pick_best(trace, sum_c2, &joined))
}

/// Same estimate computed `block_rows` rows at a time; memory is
/// `block_rows * L` counts.
pub fn dahl_streaming(trace: &McmcTrace, block_rows: usize) -> Result<DahlEstimate> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let size = trace.num_lists();
    let block_rows = block_rows.max(1);
    let mut sum_c2 = 0u128;
    let mut joined = vec![0u128; trace.len()];
    let mut start = 0;
    while start < size {
        let end = (start + block_rows).min(size);
        let rows: Vec<Vec<u32>> = (start..end)
            .into_par_iter()
            .map(|k| {
                let mut row = vec![0u32; size];
                for s in trace.snapshots() {
                    let a = s.assignments[k];
                    for (l, &b) in s.assignments.iter().enumerate().skip(k + 1) {
                        if a == b {
                            row[l] += 1;
                        }
                    }
                }
                row
            })
            .collect();
        sum_c2 += rows.iter().flatten().map(|&c| (c as u128) * (c as u128)).sum::<u128>();
        let part: Vec<u128> = trace
            .snapshots()
            .par_iter()
            .map(|s| {
                let mut acc = 0u128;
                for (r, k) in (start..end).enumerate() {
                    let a = s.assignments[k];
                    for l in k + 1..size {
                        if s.assignments[l] == a {
                            acc += rows[r][l] as u128;
                        }
                    }
                }
                acc
            })
            .collect();
        for (j, p) in joined.iter_mut().zip(part) {
            *j += p;
        }
        start = end;
    }
    Ok(pick_best(trace, sum_c2, &joined))
}

/// Dense when `L <= dense_limit`, streaming otherwise.
pub fn dahl_auto(trace: &McmcTrace, dense_limit: usize) -> Result<DahlEstimate> {
    if trace.num_lists() <= dense_limit {
        let zeta = CoClustering::from_trace(trace)?;
        dahl_point_estimate(trace, &zeta)
    } else {
        dahl_streaming(trace, 256)
    }
}

fn choose2(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

fn contingency(a: &[usize], b: &[usize]) -> Result<(Vec<u64>, Vec<u64>, Vec<u64>)> {
    if a.len() != b.len() {
        return invalid("partitions have different lengths");
    }
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut ra: HashMap<usize, u64> = HashMap::new();
    let mut rb: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    Ok((cells.into_values().collect(), ra.into_values().collect(), rb.into_values().collect()))
}

/// Hubert and Arabie's adjusted Rand index.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    let (cells, ra, rb) = contingency(a, b)?;
    let n = a.len() as u64;
    let index: f64 = cells.iter().map(|&c| choose2(c)).sum();
    let sa: f64 = ra.iter().map(|&c| choose2(c)).sum();
    let sb: f64 = rb.iter().map(|&c| choose2(c)).sum();
    let expected = sa * sb / choose2(n).max(1.0);
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    let (cells, ra, rb) = contingency(a, b)?;
    let n = a.len() as u64;
    if n < 2 {
        return Ok(1.0);
    }
    let index: f64 = cells.iter().map(|&c| choose2(c)).sum();
    let sa: f64 = ra.iter().map(|&c| choose2(c)).sum();
    let sb: f64 = rb.iter().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    Ok((total + 2.0 * index - sa - sb) / total)
}

/// Entropy of `(weights, residual)` divided by `ln(K + 1)`.
pub fn normalized_entropy(weights: &[f64], residual: f64) -> Result<f64> {
    if weights.iter().chain(std::iter::once(&residual)).any(|&w| !(w >= 0.0)) {
        return invalid("weights must be nonnegative");
    }
    let sum: f64 = weights.iter().sum::<f64>() + residual;
    if (sum - 1.0).abs() > 1e-9 {
        return invalid(format!("weights sum to {sum}, not 1"));
    }
    if weights.is_empty() {
        return Ok(0.0);
    }
    let h: f64 = weights
        .iter()
        .chain(std::iter::once(&residual))
        .filter(|&&w| w > 0.0)
        .map(|&w| -w * w.ln())
        .sum();
    Ok((h / ((weights.len() + 1) as f64).ln()).clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterWeightTable {
    pub cluster: usize,
    pub size: usize,
    /// Items by decreasing posterior mean weight.
    pub entries: Vec<(ItemId, f64)>,
    pub residual: f64,
    pub entropy: f64,
}

/// Averages the normalised cluster weights of a run whose assignments were
/// held at `partition`.
pub fn posterior_mean_weights(trace: &McmcTrace, partition: &Partition) -> Result<Vec<ClusterWeightTable>> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let j_max = partition.num_clusters();
    let mut sums: Vec<Option<(Vec<f64>, f64, usize)>> = vec![None; j_max];
    for s in trace.snapshots() {
        let Some(ws) = &s.weights else { continue };
        for (j, cw) in ws.iter().enumerate().take(j_max) {
            let e = sums[j].get_or_insert_with(|| (vec![0.0; cw.weights.len()], 0.0, 0));
            if e.0.len() != cw.weights.len() {
                return Err(Error::StateMismatch("weight vectors change length".into()));
            }
            e.0.iter_mut().zip(&cw.weights).for_each(|(a, b)| *a += b);
            e.1 += cw.residual;
            e.2 += 1;
        }
    }
    sums.into_iter()
        .enumerate()
        .map(|(j, e)| {
            let (w, r, n) = e.ok_or_else(|| Error::InvalidParameter(format!("cluster {j} has no retained weights")))?;
            let w: Vec<f64> = w.iter().map(|x| x / n as f64).collect();
            let r = r / n as f64;
            let t = w.iter().sum::<f64>() + r;
            let mut entries: Vec<(ItemId, f64)> = w.iter().enumerate().map(|(k, &x)| (ItemId(k as u32), x / t)).collect();
            entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let ws: Vec<f64> = w.iter().map(|x| x / t).collect();
            Ok(ClusterWeightTable {
                cluster: j,
                size: partition.sizes()[j],
                entropy: normalized_entropy(&ws, r / t)?,
                entries,
                residual: r / t,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub lists: usize,
    pub mean: f64,
    pub se: f64,
}

/// Monte Carlo estimate of the expected number of distinct items among `L`
/// top-m rankings drawn from one realisation of the CRM, for `L = 1..=l_max`.
pub fn mean_items_curve<R: Rng + ?Sized>(
    spec: &CrmSpec,
    m: usize,
    l_max: usize,
    replicates: usize,
    rng: &mut R,
) -> Result<Vec<CurvePoint>> {
    if m == 0 || l_max == 0 || replicates == 0 {
        return invalid("m, l_max and replicates must be positive");
    }
    let streams = StreamFactory::new(rng.random());
    let runs: Vec<Vec<usize>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = streams.stream(&[r]);
            let (mut g, split) = generative_measure(spec, 10 * m * l_max, &mut rng)?;
            let mut seen = std::collections::HashSet::new();
            let mut counts = Vec::with_capacity(l_max);
            for _ in 0..l_max {
                let r = sample_top_m(&mut g, m, &split, &mut rng)?;
                seen.extend(r.items().iter().copied());
                counts.push(seen.len());
            }
            Ok(counts)
        })
        .collect::<Result<_>>()?;
    let n = replicates as f64;
    Ok((0..l_max)
        .map(|l| {
            let mean = runs.iter().map(|r| r[l] as f64).sum::<f64>() / n;
            let var = if replicates > 1 {
                runs.iter().map(|r| (r[l] as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            CurvePoint { lists: l + 1, mean, se: (var / n).sqrt() }
        })
        .collect())
}

/// Rank positions of each list with columns in order of first appearance.
#[derive(Clone, Debug, PartialEq)]
pub struct RankingHeatmap {
    pub columns: Vec<ItemId>,
    pub labels: Vec<String>,
    /// `cells[list][column]` is the 1-based rank, if the item was ranked.
    pub cells: Vec<Vec<Option<u32>>>,
}

pub fn ranking_heatmap(lists: &[PartialRanking], registry: &ItemRegistry) -> RankingHeatmap {
    let mut col: HashMap<ItemId, usize> = HashMap::new();
    let mut columns = Vec::new();
    for r in lists {
        for &it in r.items() {
            col.entry(it).or_insert_with(|| {
                columns.push(it);
                columns.len() - 1
            });
        }
    }
    let cells = lists
        .iter()
        .map(|r| {
            let mut row = vec![None; columns.len()];
            for (p, it) in r.items().iter().enumerate() {
                row[col[it]] = Some(p as u32 + 1);
            }
            row
        })
        .collect();
    let labels = columns
        .iter()
        .map(|&c| registry.label(c).map_or_else(|| c.to_string(), str::to_owned))
        .collect();
    RankingHeatmap { columns, labels, cells }
}

/// Standard error of the mean by non-overlapping batch means.
pub fn batch_means_se(values: &[f64], batches: usize) -> f64 {
    let b = batches.max(2).min(values.len().max(2));
    let size = values.len() / b;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..b).map(|i| values[i * size..(i + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let mu = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

/// Effective sample size from Geyer's initial positive sequence.
pub fn effective_sample_size(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 4 {
        return n as f64;
    }
    let mu = values.iter().sum::<f64>() / n as f64;
    let c0 = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return n as f64;
    }
    let acf = |lag: usize| values[..n - lag].iter().zip(&values[lag..]).map(|(a, b)| (a - mu) * (b - mu)).sum::<f64>() / (n as f64 * c0);
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = acf(lag) + acf(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    n as f64 / tau.max(1.0 / n as f64)
}
