//! Synthetic ranking data.

use std::collections::HashMap;

use rand::Rng;

use crate::crm::{simulate_crm, AtomicMeasure, CrmFamily, CrmSpec, ItemId, ItemRegistry, TruncationRule};
use crate::dist::sample_gamma;
use crate::error::{invalid, Result};
use crate::pl::{sample_top_m, PartialRanking, RankingDataset, ResidualSplit};

/// A measure to race over and the rule that turns a selected residual into a
/// new atom. Gamma processes start from a bare total and are broken lazily,
/// which is exact; generalised gamma processes keep roughly `budget` jumps
/// and draw the rest from the truncated tail.
pub fn generative_measure<R: Rng + ?Sized>(spec: &CrmSpec, budget: usize, rng: &mut R) -> Result<(AtomicMeasure, ResidualSplit)> {
    match spec.family() {
        CrmFamily::Gamma => {
            let total = sample_gamma(spec.alpha(), spec.tau(), rng).max(f64::MIN_POSITIVE);
            Ok((AtomicMeasure::new([], total)?, ResidualSplit::Stick { alpha: spec.alpha() }))
        }
        CrmFamily::GeneralizedGamma => {
            let cutoff = spec.inverse_tail_mass(budget.max(1000) as f64);
            let g = simulate_crm(spec, TruncationRule::Threshold(cutoff), rng)?;
            Ok((g, ResidualSplit::TruncatedTail { spec: *spec, cutoff }))
        }
    }
}

/// `lists` rankings drawn from one realisation of the CRM. Items are
/// labelled `0, 1, ...` in order of first appearance (size-biased order).
pub fn simulate_rankings<R: Rng + ?Sized>(spec: &CrmSpec, lists: usize, m: usize, rng: &mut R) -> Result<RankingDataset> {
    if lists == 0 {
        return invalid("at least one list is required");
    }
    let (mut g, split) = generative_measure(spec, 10 * m * lists, rng)?;
    let raw = (0..lists).map(|_| sample_top_m(&mut g, m, &split, rng)).collect::<Result<Vec<_>>>()?;
    relabel(&raw)
}

fn relabel(raw: &[PartialRanking]) -> Result<RankingDataset> {
    let mut map: HashMap<ItemId, ItemId> = HashMap::new();
    let mut registry = ItemRegistry::new();
    let rankings = raw
        .iter()
        .map(|r| {
            let ids = r
                .items()
                .iter()
                .map(|old| {
                    *map.entry(*old).or_insert_with(|| {
                        let label = registry.len().to_string();
                        registry.intern(&label)
                    })
                })
                .collect();
            PartialRanking::new(ids)
        })
        .collect::<Result<Vec<_>>>()?;
    RankingDataset::new(rankings, registry)
}

/// Preference clusters over a finite item pool. Cluster `j` owns
/// `items_per_cluster` dominant items of weight `dominance`; every other item
/// has weight 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantedClusters {
    pub clusters: usize,
    pub lists: usize,
    pub m: usize,
    pub items_per_cluster: usize,
    /// Items not owned by any cluster.
    pub background: usize,
    pub dominance: f64,
}

impl PlantedClusters {
    pub fn pool(&self) -> usize {
        self.clusters * self.items_per_cluster + self.background
    }

    /// Item weights of cluster `j`.
    pub fn weights(&self, j: usize) -> Vec<f64> {
        let mut w = vec![1.0; self.pool()];
        for k in j * self.items_per_cluster..(j + 1) * self.items_per_cluster {
            w[k] = self.dominance;
        }
        w
    }

    /// Rankings with their true cluster labels; lists pick clusters
    /// uniformly at random.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(RankingDataset, Vec<usize>)> {
        if self.clusters == 0 || self.lists == 0 || self.m == 0 || self.m > self.pool() || !(self.dominance > 0.0) {
            return invalid("planted clusters need positive sizes, m <= pool and positive dominance");
        }
        let weights: Vec<Vec<f64>> = (0..self.clusters).map(|j| self.weights(j)).collect();
        let mut truth = Vec::with_capacity(self.lists);
        let mut raw = Vec::with_capacity(self.lists);
        for _ in 0..self.lists {
            let j = rng.random_range(0..self.clusters);
            truth.push(j);
            raw.push(race_dense(&weights[j], self.m, rng)?);
        }
        // registry in pool order; items never ranked are dropped
        let mut used: Vec<bool> = vec![false; self.pool()];
        raw.iter().flat_map(|r| r.items()).for_each(|it| used[it.index()] = true);
        let mut registry = ItemRegistry::new();
        let mut map = vec![None; self.pool()];
        for (k, &u) in used.iter().enumerate() {
            if u {
                map[k] = Some(registry.intern(&format!("item{k}")));
            }
        }
        let rankings = raw
            .iter()
            .map(|r| PartialRanking::new(r.items().iter().map(|it| map[it.index()].expect("used")).collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok((RankingDataset::new(rankings, registry)?, truth))
    }
}

fn race_dense<R: Rng + ?Sized>(weights: &[f64], m: usize, rng: &mut R) -> Result<PartialRanking> {
    let mut avail: Vec<usize> = (0..weights.len()).collect();
    let mut total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let mut t = rng.random::<f64>() * total;
        let mut pick = avail.len() - 1;
        for (i, &k) in avail.iter().enumerate() {
            if t < weights[k] {
                pick = i;
                break;
            }
            t -= weights[k];
        }
        let k = avail.swap_remove(pick);
        total -= weights[k];
        out.push(ItemId(k as u32));
    }
    PartialRanking::new(out)
}
