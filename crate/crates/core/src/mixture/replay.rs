//! Regeneration of rankings from the current mixture state, for
//! successive-conditional (Geweke) testing.
//!
//! The unobserved parts of the root and cluster measures are materialised
//! only as far as the new rankings require: the residual counts are seated
//! by a Chinese restaurant process over root atoms, and each cluster's
//! fresh part is broken by Beta(1, alpha) sticks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::crm::{ItemId, ItemRegistry};
use crate::dist::{sample_beta, sample_dirichlet};
use crate::error::Result;
use crate::pl::{LatentZ, PartialRanking, RankingDataset};
use crate::rng::{tag, StreamFactory};

use super::{draw_mixture_z, sample_u_exact, Cluster, CountKind, MixtureConfig, MixtureState, MIN_MASS};

struct Item {
    root: f64,
    counts: Vec<u64>,
    weights: Vec<f64>,
}

enum Source {
    Item(usize),
    Table(usize),
    Fresh,
}

/// New rankings with the given lengths, assignments kept; returns the data
/// and the matching state with latent variables drawn given the new data.
pub fn replay_mixture(
    state: &MixtureState,
    lengths: &[usize],
    config: &MixtureConfig,
    streams: &StreamFactory,
) -> Result<(RankingDataset, MixtureState)> {
    assert_eq!(lengths.len(), state.assignments.len());
    let it = state.iteration;
    let mut rng = streams.stream(&[it, tag::REPLAY, 1]);
    let (tau, phi, alpha) = (config.tau, state.phi, state.alpha);
    let nj = state.clusters.len();

    let mut clusters = state.clusters.clone();
    for c in &mut clusters {
        for k in 0..c.weights.len() {
            c.counts[k] = sample_u_exact(CountKind::Atom, state.root_weights[k], c.weights[k], tau, phi, &mut rng);
        }
        c.residual_count = sample_u_exact(CountKind::Residual { alpha }, state.root_residual, c.residual, tau, phi, &mut rng);
    }

    // seat the residual counts at unobserved root atoms
    let mut units: Vec<usize> = clusters
        .iter()
        .enumerate()
        .flat_map(|(j, c)| std::iter::repeat(j).take(c.residual_count as usize))
        .collect();
    units.shuffle(&mut rng);
    let mut table_sizes: Vec<u64> = Vec::new();
    let mut table_counts: Vec<Vec<u64>> = Vec::new();
    for (n, &j) in units.iter().enumerate() {
        let target = rng.random::<f64>() * (n as f64 + alpha);
        let mut acc = 0.0;
        let mut pick = table_sizes.len();
        for (t, &s) in table_sizes.iter().enumerate() {
            acc += s as f64;
            if target < acc {
                pick = t;
                break;
            }
        }
        if pick == table_sizes.len() {
            table_sizes.push(0);
            table_counts.push(vec![0; nj]);
        }
        table_sizes[pick] += 1;
        table_counts[pick][j] += 1;
    }
    let nt = table_sizes.len();
    let mut dir: Vec<f64> = table_sizes.iter().map(|&s| s as f64).collect();
    dir.push(alpha);
    let root_split: Vec<f64> = sample_dirichlet(&dir, &mut rng).into_iter().map(|x| x * state.root_residual).collect();
    let mut table_weights = vec![vec![0.0; nt]; nj];
    let mut fresh = vec![0.0; nj];
    for (j, c) in clusters.iter().enumerate() {
        let mut d: Vec<f64> = (0..nt).map(|t| table_counts[t][j] as f64).collect();
        d.push(alpha);
        let split = sample_dirichlet(&d, &mut rng);
        for t in 0..nt {
            table_weights[j][t] = split[t] * c.residual;
        }
        fresh[j] = split[nt] * c.residual;
    }

    let mut items: Vec<Item> = (0..state.root_weights.len())
        .map(|k| Item {
            root: state.root_weights[k],
            counts: clusters.iter().map(|c| c.counts[k]).collect(),
            weights: clusters.iter().map(|c| c.weights[k]).collect(),
        })
        .collect();
    let mut table_item: Vec<Option<usize>> = vec![None; nt];

    let mut raw: Vec<Vec<usize>> = Vec::with_capacity(lengths.len());
    for (l, &m) in lengths.iter().enumerate() {
        let j = state.assignments[l];
        let mut chosen: Vec<usize> = Vec::with_capacity(m);
        for _ in 0..m {
            let mut cands: Vec<(Source, f64)> = Vec::new();
            for (i, it) in items.iter().enumerate() {
                if it.weights[j] > 0.0 && !chosen.contains(&i) {
                    cands.push((Source::Item(i), it.weights[j]));
                }
            }
            for t in 0..nt {
                if table_item[t].is_none() && table_weights[j][t] > 0.0 {
                    cands.push((Source::Table(t), table_weights[j][t]));
                }
            }
            if fresh[j] > 0.0 {
                cands.push((Source::Fresh, fresh[j]));
            }
            let total: f64 = cands.iter().map(|c| c.1).sum();
            let mut target = rng.random::<f64>() * total;
            let mut pick = cands.len() - 1;
            for (i, c) in cands.iter().enumerate() {
                if target < c.1 {
                    pick = i;
                    break;
                }
                target -= c.1;
            }
            let idx = match cands.swap_remove(pick).0 {
                Source::Item(i) => i,
                Source::Table(t) => {
                    items.push(Item {
                        root: root_split[t],
                        counts: table_counts[t].clone(),
                        weights: (0..nj).map(|jj| table_weights[jj][t]).collect(),
                    });
                    table_item[t] = Some(items.len() - 1);
                    items.len() - 1
                }
                Source::Fresh => {
                    let mass = fresh[j] * sample_beta(1.0, alpha, &mut rng);
                    fresh[j] -= mass;
                    let mut weights = vec![0.0; nj];
                    weights[j] = mass;
                    items.push(Item { root: 0.0, counts: vec![0; nj], weights });
                    items.len() - 1
                }
            };
            chosen.push(idx);
        }
        raw.push(chosen);
    }

    let mut new_id = vec![usize::MAX; items.len()];
    let mut order = Vec::new();
    for r in &raw {
        for &i in r {
            if new_id[i] == usize::MAX {
                new_id[i] = order.len();
                order.push(i);
            }
        }
    }
    let mut root_residual = root_split[nt];
    let mut res_w = fresh.clone();
    let mut res_u = vec![0u64; nj];
    for t in 0..nt {
        if table_item[t].is_none() {
            root_residual += root_split[t];
            for j in 0..nj {
                res_w[j] += table_weights[j][t];
                res_u[j] += table_counts[t][j];
            }
        }
    }
    for (i, it) in items.iter().enumerate() {
        if new_id[i] == usize::MAX {
            root_residual += it.root;
            for j in 0..nj {
                res_w[j] += it.weights[j];
                res_u[j] += it.counts[j];
            }
        }
    }
    let mut registry = ItemRegistry::new();
    for &i in &order {
        registry.intern(&i.to_string());
    }
    let rankings = raw
        .iter()
        .map(|r| PartialRanking::new(r.iter().map(|&i| ItemId(new_id[i] as u32)).collect()))
        .collect::<Result<Vec<_>>>()?;
    let data = RankingDataset::new(rankings, registry)?;
    let new_clusters = (0..nj)
        .map(|j| Cluster {
            weights: order.iter().map(|&i| items[i].weights[j]).collect(),
            counts: order.iter().map(|&i| items[i].counts[j]).collect(),
            residual: res_w[j].max(MIN_MASS),
            residual_count: res_u[j],
        })
        .collect();
    let mut next = MixtureState {
        clusters: new_clusters,
        root_weights: order.iter().map(|&i| items[i].root).collect(),
        root_residual: root_residual.max(MIN_MASS),
        z: LatentZ::filled(&data.lengths(), 0.0),
        slice: vec![0.0; lengths.len()],
        ..state.clone()
    };
    draw_mixture_z(&mut next, &data, streams, [it, tag::REPLAY])?;
    Ok((data, next))
}
