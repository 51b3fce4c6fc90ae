//! Dirichlet-process mixture of Plackett-Luce components whose gamma-process
//! measures are coupled through a shared root measure by Poisson latent
//! counts, with its partially collapsed Gibbs sampler.
//!
//! Item status: an item with `w_0k > 0` is *shared* (an atom of the root);
//! an item with `w_0k = 0` but positive weight in one cluster is *fresh* to
//! that cluster.

pub mod conditionals;
pub mod replay;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use conditionals::*;

use crate::dist::{sample_beta, sample_gamma, sample_log_categorical, sample_poisson, sample_std_normal, sample_zero_truncated_poisson};
use crate::error::{Error, Result};
use crate::pl::{pl_log_probability, position_rates, DenseMeasure, LatentZ, RankingDataset};
use crate::rng::{tag, StreamFactory};
use crate::single::GammaPrior;

/// Per-cluster weights and latent counts over the registered items.
#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    pub weights: Vec<f64>,
    pub counts: Vec<u64>,
    pub residual: f64,
    pub residual_count: u64,
}

impl Cluster {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum::<f64>() + self.residual
    }

    /// Weights divided by the total, with the residual share last.
    pub fn normalized(&self) -> Vec<f64> {
        let t = self.total();
        self.weights.iter().chain(std::iter::once(&self.residual)).map(|w| w / t).collect()
    }

    pub fn measure(&self) -> DenseMeasure<'_> {
        DenseMeasure::new(&self.weights, self.residual)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureState {
    pub assignments: Vec<usize>,
    pub clusters: Vec<Cluster>,
    pub root_weights: Vec<f64>,
    pub root_residual: f64,
    pub z: LatentZ,
    /// Stick weights of the instantiated clusters at the last slice step.
    pub sticks: Vec<f64>,
    pub stick_remainder: f64,
    pub slice: Vec<f64>,
    pub alpha: f64,
    pub phi: f64,
    pub gamma: f64,
    pub phi_log_step: f64,
    pub phi_accepted: u64,
    pub phi_proposed: u64,
    pub flips_accepted: u64,
    pub flips_proposed: u64,
    pub iteration: u64,
}

/// How cluster and root total masses are refreshed at the start of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TotalRefresh {
    /// Fresh totals from the prior hierarchy, atoms rescaled.
    Prior,
    /// Totals from their conditionals given the latent counts, atoms
    /// rescaled, then the latent variables redrawn.
    Conditional,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountUpdate {
    Metropolis,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixturePriors {
    pub alpha: GammaPrior,
    pub gamma: GammaPrior,
    pub phi: GammaPrior,
    /// Initial scale of the log-normal proposal for `phi`.
    pub phi_step: f64,
}

impl Default for MixturePriors {
    fn default() -> Self {
        Self { alpha: GammaPrior::flat(), gamma: GammaPrior::flat(), phi: GammaPrior::flat(), phi_step: 0.2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub tau: f64,
    pub strict_tau: bool,
    pub priors: MixturePriors,
    pub total_refresh: TotalRefresh,
    pub count_update: CountUpdate,
    pub joint_refresh: bool,
    /// Reversible moves between fresh and shared status.
    pub flip_moves: bool,
    /// Redraw the latent variables after reassignment.
    pub refresh_z_after_assignment: bool,
    /// Skip the assignment and concentration steps.
    pub fix_assignments: bool,
    pub update_alpha: bool,
    pub update_phi: bool,
    pub update_gamma: bool,
    /// Proposal scale adaptation for `phi` stops at this iteration.
    pub adapt_until: u64,
    pub phi_target_accept: f64,
    pub max_new_clusters: usize,
}

impl MixtureConfig {
    /// The schedule with every step exactly as listed for the sampler:
    /// prior total refresh, Metropolis count updates, no status moves and
    /// no latent refresh after reassignment.
    pub fn literal(tau: f64) -> Self {
        Self {
            tau,
            strict_tau: true,
            priors: MixturePriors::default(),
            total_refresh: TotalRefresh::Prior,
            count_update: CountUpdate::Metropolis,
            joint_refresh: true,
            flip_moves: false,
            refresh_z_after_assignment: false,
            fix_assignments: false,
            update_alpha: true,
            update_phi: true,
            update_gamma: true,
            adapt_until: 0,
            phi_target_accept: 0.234,
            max_new_clusters: 10_000,
        }
    }

    /// The same steps with exact count draws, conditional total refresh,
    /// status moves and a latent refresh after reassignment.
    pub fn exact(tau: f64) -> Self {
        Self {
            total_refresh: TotalRefresh::Conditional,
            count_update: CountUpdate::Exact,
            flip_moves: true,
            refresh_z_after_assignment: true,
            ..Self::literal(tau)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.strict_tau && self.tau != 1.0 {
            return Err(Error::Config(format!(
                "the mixture sampler needs tau = 1 in strict mode, got {}",
                self.tau
            )));
        }
        if !(self.priors.phi_step >= 0.0) {
            return Err(Error::Config("phi proposal scale must be nonnegative".into()));
        }
        Ok(())
    }
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self::exact(1.0)
    }
}

/// Sufficient statistics restricted to each cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterStats {
    pub sizes: Vec<usize>,
    /// `n_jk`
    pub counts: Vec<Vec<u32>>,
    /// `sum_{l in j} sum_i Z_li`
    pub z_sums: Vec<f64>,
    /// `s_jk = sum_{l in j} sum_i delta_lik Z_li`
    pub exposures: Vec<Vec<f64>>,
}

impl ClusterStats {
    pub fn compute(data: &RankingDataset, z: &LatentZ, assignments: &[usize], num_clusters: usize) -> Self {
        let k = data.num_items();
        let mut sizes = vec![0; num_clusters];
        let mut counts = vec![vec![0u32; k]; num_clusters];
        let mut z_sums = vec![0.0; num_clusters];
        let mut removed = vec![vec![0.0; k]; num_clusters];
        for (l, &j) in assignments.iter().enumerate() {
            sizes[j] += 1;
            let zl = z.list(l);
            let items = data.ranking(l).items();
            let mut suffix = 0.0;
            for p in (0..items.len()).rev() {
                counts[j][items[p].index()] += 1;
                removed[j][items[p].index()] += suffix;
                suffix += zl[p];
            }
            z_sums[j] += suffix;
        }
        let exposures = removed
            .into_iter()
            .zip(&z_sums)
            .map(|(r, &t)| r.into_iter().map(|x| (t - x).max(0.0)).collect())
            .collect();
        Self { sizes, counts, z_sums, exposures }
    }
}

/// Starting values of the hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureInit {
    pub alpha: f64,
    pub phi: f64,
    pub gamma: f64,
    /// Concentration of the random starting partition. Starting from many
    /// small clusters avoids getting stuck with everything in one cluster.
    pub seed_concentration: f64,
}

impl Default for MixtureInit {
    fn default() -> Self {
        Self { alpha: 1.0, phi: 1.0, gamma: 1.0, seed_concentration: 20.0 }
    }
}

impl MixtureState {
    /// Chinese-restaurant seeding of the assignments with concentration
    /// `init.seed_concentration`, followed by one pass of the root, latent and
    /// cluster-weight updates.
    pub fn init(data: &RankingDataset, config: &MixtureConfig, init: MixtureInit, streams: &StreamFactory) -> Result<Self> {
        let mut rng = streams.stream(&[u64::MAX, tag::INIT, 0]);
        let mut assignments = Vec::with_capacity(data.num_lists());
        let mut sizes: Vec<usize> = Vec::new();
        for l in 0..data.num_lists() {
            let target = rng.random::<f64>() * (l as f64 + init.seed_concentration);
            let mut acc = 0.0;
            let mut pick = sizes.len();
            for (j, &s) in sizes.iter().enumerate() {
                acc += s as f64;
                if target < acc {
                    pick = j;
                    break;
                }
            }
            if pick == sizes.len() {
                sizes.push(0);
            }
            sizes[pick] += 1;
            assignments.push(pick);
        }
        Self::from_assignments(data, config, init, assignments, streams)
    }

    /// Starts from given cluster labels, which must be dense `0..J`.
    pub fn from_assignments(
        data: &RankingDataset,
        config: &MixtureConfig,
        init: MixtureInit,
        assignments: Vec<usize>,
        streams: &StreamFactory,
    ) -> Result<Self> {
        config.validate()?;
        if assignments.len() != data.num_lists() {
            return Err(Error::StateMismatch("one assignment per ranking required".into()));
        }
        let j = assignments.iter().max().map_or(0, |&m| m + 1);
        let mut sizes = vec![0usize; j];
        for &a in &assignments {
            sizes[a] += 1;
        }
        if sizes.contains(&0) {
            return Err(Error::StateMismatch("cluster labels must be dense".into()));
        }
        let mut rng = streams.stream(&[u64::MAX, tag::INIT, 1]);
        let k = data.num_items();
        let tau = config.tau;
        let zero = LatentZ::filled(&data.lengths(), 0.0);
        let stats = ClusterStats::compute(data, &zero, &assignments, sizes.len());
        let clusters = stats
            .counts
            .iter()
            .map(|n| {
                let counts: Vec<u64> = n.iter().map(|&c| u64::from(c > 0)).collect();
                let weights = (0..k)
                    .map(|i| cond_cluster_weight_params(n[i], counts[i], tau, init.phi, 0.0).sample(&mut rng))
                    .collect();
                let residual = sample_gamma(init.alpha, tau + init.phi, &mut rng).max(MIN_MASS);
                Cluster { weights, counts, residual, residual_count: 0 }
            })
            .collect();
        let mut state = Self {
            assignments,
            clusters,
            root_weights: vec![0.0; k],
            root_residual: 0.0,
            z: zero,
            sticks: sizes.iter().map(|&s| s as f64 / data.num_lists() as f64).collect(),
            stick_remainder: 0.0,
            slice: vec![0.0; data.num_lists()],
            alpha: init.alpha,
            phi: init.phi,
            gamma: init.gamma,
            phi_log_step: config.priors.phi_step.max(MIN_MASS).ln(),
            phi_accepted: 0,
            phi_proposed: 0,
            flips_accepted: 0,
            flips_proposed: 0,
            iteration: 0,
        };
        update_root(&mut state, config, streams, u64::MAX);
        draw_mixture_z(&mut state, data, streams, [u64::MAX, tag::INIT])?;
        let stats = state.stats(data);
        update_cluster_weights(&mut state, &stats, config, streams, u64::MAX);
        Ok(state)
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn stats(&self, data: &RankingDataset) -> ClusterStats {
        ClusterStats::compute(data, &self.z, &self.assignments, self.clusters.len())
    }

    pub fn root_total(&self) -> f64 {
        self.root_weights.iter().sum::<f64>() + self.root_residual
    }

    pub fn phi_acceptance(&self) -> f64 {
        if self.phi_proposed == 0 {
            0.0
        } else {
            self.phi_accepted as f64 / self.phi_proposed as f64
        }
    }

    /// Checks the structural invariants against the dataset.
    pub fn check(&self, data: &RankingDataset) -> Result<()> {
        let bad = |m: &str| Err(Error::StateMismatch(m.into()));
        if self.assignments.len() != data.num_lists() || self.z.num_lists() != data.num_lists() {
            return bad("number of rankings differs");
        }
        if self.root_weights.len() != data.num_items() {
            return bad("number of items differs");
        }
        let j = self.clusters.len();
        if self.assignments.iter().any(|&c| c >= j) {
            return bad("assignment refers to a missing cluster");
        }
        for c in &self.clusters {
            if c.weights.len() != data.num_items() || c.counts.len() != data.num_items() {
                return bad("cluster vectors have the wrong length");
            }
        }
        Ok(())
    }
}

fn draw_mixture_z(state: &mut MixtureState, data: &RankingDataset, streams: &StreamFactory, coords: [u64; 2]) -> Result<()> {
    let sums: Vec<f64> = state.clusters.iter().map(|c| c.weights.iter().sum()).collect();
    let clusters = &state.clusters;
    let assignments = &state.assignments;
    state.z.lists_mut().into_par_iter().enumerate().try_for_each(|(l, zl)| {
        let c = &clusters[assignments[l]];
        let items = data.ranking(l).items();
        let ranked: f64 = items.iter().map(|it| c.weights[it.index()]).sum();
        let rest = c.residual + (sums[assignments[l]] - ranked).max(0.0);
        position_rates(&c.weights, rest, items, zl);
        let mut rng = streams.stream(&[coords[0], coords[1], l as u64]);
        for (p, v) in zl.iter_mut().enumerate() {
            let rate = *v;
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Error::NonPositiveRate { ranking: l, position: p + 1, rate });
            }
            *v = crate::dist::sample_exp(rate, &mut rng);
        }
        Ok(())
    })
}

fn refresh_totals_prior(state: &mut MixtureState, config: &MixtureConfig, streams: &StreamFactory) {
    let it = state.iteration;
    let mut rng = streams.stream(&[it, tag::TOTALS]);
    let tau = config.tau;
    let t0 = sample_gamma(state.alpha, tau, &mut rng);
    rescale_root(state, t0);
    for c in &mut state.clusters {
        let m = sample_poisson(state.phi * t0, &mut rng);
        let t = sample_gamma(state.alpha + m as f64, tau + state.phi, &mut rng);
        rescale_cluster(c, t);
    }
}

fn refresh_totals_conditional(state: &mut MixtureState, config: &MixtureConfig, streams: &StreamFactory) {
    let it = state.iteration;
    let mut rng = streams.stream(&[it, tag::TOTALS]);
    let tau = config.tau;
    let phi = state.phi;
    let counts: Vec<u64> = state
        .clusters
        .iter()
        .map(|c| c.counts.iter().sum::<u64>() + c.residual_count)
        .collect();
    let j = state.clusters.len() as f64;
    let t0 = sample_gamma(state.alpha + counts.iter().sum::<u64>() as f64, tau + j * phi, &mut rng);
    rescale_root(state, t0);
    for (c, &u) in state.clusters.iter_mut().zip(&counts) {
        let t = sample_gamma(state.alpha + u as f64, tau + phi, &mut rng);
        rescale_cluster(c, t);
    }
}

/// Residual masses are kept strictly positive; gamma draws with a tiny
/// shape underflow to zero otherwise.
pub(super) const MIN_MASS: f64 = f64::MIN_POSITIVE;

fn rescale_root(state: &mut MixtureState, total: f64) {
    let f = total / state.root_total();
    if f.is_finite() && f > 0.0 {
        state.root_weights.iter_mut().for_each(|w| *w *= f);
        state.root_residual = (state.root_residual * f).max(MIN_MASS);
    }
}

fn rescale_cluster(c: &mut Cluster, total: f64) {
    let f = total / c.total();
    if f.is_finite() && f > 0.0 {
        c.weights.iter_mut().for_each(|w| *w *= f);
        c.residual = (c.residual * f).max(MIN_MASS);
    }
}

fn update_counts(state: &mut MixtureState, config: &MixtureConfig, streams: &StreamFactory) {
    let it = state.iteration;
    let (tau, phi, alpha) = (config.tau, state.phi, state.alpha);
    let root = &state.root_weights;
    let root_res = state.root_residual;
    let mode = config.count_update;
    state.clusters.par_iter_mut().enumerate().for_each(|(j, c)| {
        let mut rng = streams.stream(&[it, tag::U, j as u64]);
        for k in 0..c.weights.len() {
            c.counts[k] = match mode {
                CountUpdate::Metropolis => cond_u_given_w(CountKind::Atom, c.counts[k], root[k], c.weights[k], tau, phi, &mut rng),
                CountUpdate::Exact => sample_u_exact(CountKind::Atom, root[k], c.weights[k], tau, phi, &mut rng),
            };
        }
        let kind = CountKind::Residual { alpha };
        c.residual_count = match mode {
            CountUpdate::Metropolis => cond_u_given_w(kind, c.residual_count, root_res, c.residual, tau, phi, &mut rng),
            CountUpdate::Exact => sample_u_exact(kind, root_res, c.residual, tau, phi, &mut rng),
        };
    });
}

fn joint_refresh(state: &mut MixtureState, stats: &ClusterStats, config: &MixtureConfig, streams: &StreamFactory) {
    let it = state.iteration;
    let (tau, phi) = (config.tau, state.phi);
    let root = &state.root_weights;
    state.clusters.par_iter_mut().enumerate().for_each(|(j, c)| {
        let mut rng = streams.stream(&[it, tag::JOINT_UW, j as u64]);
        for k in 0..c.weights.len() {
            if stats.counts[j][k] == 0 {
                let (u, w) = joint_uw_refresh(0, (c.counts[k], c.weights[k]), root[k], tau, phi, stats.z_sums[j], &mut rng)
                    .expect("item not ranked in cluster");
                c.counts[k] = u;
                c.weights[k] = w;
            }
        }
    });
}

/// Reversible moves between fresh and shared status for items ranked in a
/// single cluster. The fresh-to-shared proposal draws the cluster count
/// from a zero-truncated Poisson(phi w_jk), the root weight from
/// Gamma(u, tau + phi) and the other clusters from the dependent prior.
fn flip_moves(state: &mut MixtureState, stats: &ClusterStats, config: &MixtureConfig, streams: &StreamFactory) {
    let it = state.iteration;
    let (tau, phi) = (config.tau, state.phi);
    let num_items = state.root_weights.len();
    for k in 0..num_items {
        let mut owners = (0..state.clusters.len()).filter(|&j| stats.counts[j][k] > 0);
        let (Some(j), None) = (owners.next(), owners.next()) else { continue };
        let w = state.clusters[j].weights[k];
        if !(w > 0.0) {
            continue;
        }
        let mut rng = streams.stream(&[it, tag::FLIP, k as u64]);
        let log_gain = (phi * w).exp_m1().ln();
        state.flips_proposed += 1;
        if state.root_weights[k] == 0.0 {
            let u = sample_zero_truncated_poisson(phi * w, &mut rng);
            let w0 = sample_gamma(u as f64, tau + phi, &mut rng);
            let mut others = Vec::with_capacity(state.clusters.len());
            let mut log_a = log_gain;
            for (jj, _) in state.clusters.iter().enumerate() {
                if jj == j {
                    continue;
                }
                let uu = sample_poisson(phi * w0, &mut rng);
                let ww = sample_gamma(uu as f64, tau + phi, &mut rng);
                log_a -= ww * stats.z_sums[jj];
                others.push((jj, uu, ww));
            }
            if w0 > 0.0 && (log_a >= 0.0 || rng.random::<f64>().ln() < log_a) {
                state.root_weights[k] = w0;
                state.clusters[j].counts[k] = u;
                for (jj, uu, ww) in others {
                    state.clusters[jj].counts[k] = uu;
                    state.clusters[jj].weights[k] = ww;
                }
                state.flips_accepted += 1;
            }
        } else {
            let mut log_a = -log_gain;
            for (jj, c) in state.clusters.iter().enumerate() {
                if jj != j {
                    log_a += c.weights[k] * stats.z_sums[jj];
                }
            }
            if log_a >= 0.0 || rng.random::<f64>().ln() < log_a {
                state.root_weights[k] = 0.0;
                for c in &mut state.clusters {
                    c.counts[k] = 0;
                }
                for (jj, c) in state.clusters.iter_mut().enumerate() {
                    if jj != j {
                        c.weights[k] = 0.0;
                    }
                }
                state.flips_accepted += 1;
            }
        }
    }
}

fn update_residual_block(
    state: &mut MixtureState,
    stats: &ClusterStats,
    num_items: usize,
    config: &MixtureConfig,
    streams: &StreamFactory,
) -> Result<()> {
    let it = state.iteration;
    let (tau, phi) = (config.tau, state.phi);
    if config.update_alpha {
        let p = cond_alpha_mixture_params(config.priors.alpha, num_items, &stats.z_sums, tau, phi, config.strict_tau)?;
        state.alpha = p.sample(&mut streams.stream(&[it, tag::ALPHA]));
    }
    let tilt = residual_tilt(&stats.z_sums, tau, phi);
    state.root_residual = sample_gamma(state.alpha, tau + tilt.x0, &mut streams.stream(&[it, tag::RESIDUAL])).max(MIN_MASS);
    let (alpha, w0) = (state.alpha, state.root_residual);
    for (j, c) in state.clusters.iter_mut().enumerate() {
        let mut rng = streams.stream(&[it, tag::RESIDUAL_BLOCK, j as u64]);
        let zj = stats.z_sums[j];
        c.residual_count = sample_poisson(cond_residual_count_mean(w0, zj, tau, phi), &mut rng);
        c.residual = cond_cluster_residual_params(alpha, c.residual_count, tau, phi, zj).sample(&mut rng).max(MIN_MASS);
    }
    Ok(())
}

fn update_root(state: &mut MixtureState, config: &MixtureConfig, streams: &StreamFactory, it: u64) {
    let (tau, phi) = (config.tau, state.phi);
    let j = state.clusters.len();
    let clusters = &state.clusters;
    state.root_weights.par_iter_mut().enumerate().for_each(|(k, w)| {
        let u: u64 = clusters.iter().map(|c| c.counts[k]).sum();
        *w = cond_root_weight_params(u, j, phi, tau).sample(&mut streams.stream(&[it, tag::ROOT, k as u64]));
    });
    let u_res: u64 = clusters.iter().map(|c| c.residual_count).sum();
    state.root_residual = cond_root_residual_params(state.alpha, u_res, j, phi, tau)
        .sample(&mut streams.stream(&[it, tag::ROOT, u64::MAX]))
        .max(MIN_MASS);
}

fn update_cluster_weights(state: &mut MixtureState, stats: &ClusterStats, config: &MixtureConfig, streams: &StreamFactory, it: u64) {
    let (tau, phi, alpha) = (config.tau, state.phi, state.alpha);
    state.clusters.par_iter_mut().enumerate().for_each(|(j, c)| {
        let mut rng = streams.stream(&[it, tag::CLUSTER_WEIGHTS, j as u64]);
        for k in 0..c.weights.len() {
            c.weights[k] =
                cond_cluster_weight_params(stats.counts[j][k], c.counts[k], tau, phi, stats.exposures[j][k]).sample(&mut rng);
        }
        c.residual = cond_cluster_residual_params(alpha, c.residual_count, tau, phi, stats.z_sums[j])
            .sample(&mut rng)
            .max(MIN_MASS);
    });
}

/// Draw a new cluster from the dependent prior given the root.
fn new_cluster<R: Rng + ?Sized>(state: &MixtureState, tau: f64, rng: &mut R) -> Cluster {
    let phi = state.phi;
    let counts: Vec<u64> = state.root_weights.iter().map(|&w0| sample_poisson(phi * w0, rng)).collect();
    let weights = counts.iter().map(|&u| sample_gamma(u as f64, tau + phi, rng)).collect();
    let residual_count = sample_poisson(phi * state.root_residual, rng);
    let residual = sample_gamma(state.alpha + residual_count as f64, tau + phi, rng).max(MIN_MASS);
    Cluster { weights, counts, residual, residual_count }
}

/// Slice-sampled reassignment: stick weights given the cluster sizes,
/// uniform slice variables, new clusters from the dependent prior until the
/// remaining stick is below every slice, then assignments, then removal of
/// empty clusters.
pub fn slice_assignments_update(
    state: &mut MixtureState,
    data: &RankingDataset,
    config: &MixtureConfig,
    streams: &StreamFactory,
) -> Result<()> {
    let it = state.iteration;
    let mut rng = streams.stream(&[it, tag::STICKS]);
    let mut sizes = vec![0usize; state.clusters.len()];
    for &c in &state.assignments {
        sizes[c] += 1;
    }
    let mut g: Vec<f64> = sizes.iter().map(|&s| sample_gamma(s as f64, 1.0, &mut rng)).collect();
    let g_rest = sample_gamma(state.gamma, 1.0, &mut rng);
    let total = g.iter().sum::<f64>() + g_rest;
    g.iter_mut().for_each(|x| *x /= total);
    let mut rem = g_rest / total;
    let mut srng = streams.stream(&[it, tag::SLICE]);
    let slice: Vec<f64> = state.assignments.iter().map(|&c| srng.random::<f64>() * g[c]).collect();
    let min_slice = slice.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut created = 0;
    while rem >= min_slice && rem > 0.0 && created < config.max_new_clusters {
        let v = sample_beta(1.0, state.gamma, &mut rng);
        let pi = rem * v;
        rem -= pi;
        let mut crng = streams.stream(&[it, tag::NEW_CLUSTER, created as u64]);
        let c = new_cluster(state, config.tau, &mut crng);
        state.clusters.push(c);
        g.push(pi);
        created += 1;
    }
    let clusters = &state.clusters;
    let sticks = &g;
    let new_assign: Vec<usize> = (0..data.num_lists())
        .into_par_iter()
        .map(|l| {
            let mut rng = streams.stream(&[it, tag::ASSIGN, l as u64]);
            let r = data.ranking(l);
            let lw: Vec<f64> = clusters
                .iter()
                .zip(sticks)
                .map(|(c, &pi)| {
                    if pi > slice[l] {
                        pl_log_probability(&c.measure(), r).unwrap_or(f64::NEG_INFINITY)
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            sample_log_categorical(&lw, &mut rng).unwrap_or(state.assignments[l])
        })
        .collect();
    state.assignments = new_assign;
    let mut used = vec![false; state.clusters.len()];
    for &c in &state.assignments {
        used[c] = true;
    }
    let mut remap = vec![usize::MAX; used.len()];
    let mut kept = Vec::new();
    let mut kept_sticks = Vec::new();
    for (j, c) in std::mem::take(&mut state.clusters).into_iter().enumerate() {
        if used[j] {
            remap[j] = kept.len();
            kept.push(c);
            kept_sticks.push(g[j]);
        } else {
            rem += g[j];
        }
    }
    state.clusters = kept;
    state.assignments.iter_mut().for_each(|c| *c = remap[*c]);
    state.sticks = kept_sticks;
    state.stick_remainder = rem;
    state.slice = slice;
    Ok(())
}

/// Log target for `phi` with the counts integrated out.
pub fn phi_log_target(state: &MixtureState, phi: f64, tau: f64, prior: GammaPrior) -> f64 {
    if !(phi > 0.0) {
        return f64::NEG_INFINITY;
    }
    let alpha = state.alpha;
    let per_cluster: f64 = state
        .clusters
        .par_iter()
        .map(|c| {
            let mut lp = 0.0;
            for (k, &w) in c.weights.iter().enumerate() {
                let w0 = state.root_weights[k];
                lp += if w0 == 0.0 {
                    // fresh items contribute through the intensity of the fresh part
                    -phi * w
                } else {
                    transition_log_density_w(w, w0, tau, phi, CountKind::Atom).map_or(f64::NEG_INFINITY, |d| d.value())
                };
            }
            lp + transition_log_density_w(c.residual, state.root_residual, tau, phi, CountKind::Residual { alpha })
                .map_or(f64::NEG_INFINITY, |d| d.value())
        })
        .sum();
    prior.ln_density(phi) + per_cluster
}

/// Log-normal random-walk Metropolis update of `phi`.
pub fn update_phi_mh(state: &mut MixtureState, config: &MixtureConfig, streams: &StreamFactory) {
    let it = state.iteration;
    let mut rng = streams.stream(&[it, tag::PHI]);
    let step = state.phi_log_step.exp();
    let eps = sample_std_normal(&mut rng);
    let proposal = state.phi * (step * eps).exp();
    let prior = config.priors.phi;
    let cur = phi_log_target(state, state.phi, config.tau, prior);
    let new = phi_log_target(state, proposal, config.tau, prior);
    let log_ratio = new - cur + (proposal / state.phi).ln();
    let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
    state.phi_proposed += 1;
    if accept && step > 0.0 {
        state.phi = proposal;
        state.phi_accepted += 1;
    }
    if it < config.adapt_until && step > 0.0 {
        let a = if accept { 1.0 } else { 0.0 };
        state.phi_log_step += (a - config.phi_target_accept) / ((it + 1) as f64).powf(0.6);
    }
}

/// One full sweep of the mixture sampler.
pub fn mixture_sweep(state: &mut MixtureState, data: &RankingDataset, config: &MixtureConfig, streams: &StreamFactory) -> Result<()> {
    config.validate()?;
    state.check(data)?;
    let it = state.iteration;
    if config.total_refresh == TotalRefresh::Prior {
        refresh_totals_prior(state, config, streams);
    }
    let mut stats = state.stats(data);
    update_counts(state, config, streams);
    if config.joint_refresh {
        joint_refresh(state, &stats, config, streams);
    }
    if config.flip_moves {
        flip_moves(state, &stats, config, streams);
    }
    if config.total_refresh == TotalRefresh::Conditional {
        refresh_totals_conditional(state, config, streams);
        draw_mixture_z(state, data, streams, [it, tag::Z_REFRESH])?;
        stats = state.stats(data);
    }
    update_residual_block(state, &stats, data.num_items(), config, streams)?;
    update_root(state, config, streams, it);
    draw_mixture_z(state, data, streams, [it, tag::Z])?;
    let stats = state.stats(data);
    update_cluster_weights(state, &stats, config, streams, it);
    if !config.fix_assignments {
        slice_assignments_update(state, data, config, streams)?;
        if config.refresh_z_after_assignment {
            draw_mixture_z(state, data, streams, [it, tag::Z_REFRESH + 100])?;
        }
        if config.update_gamma {
            let mut rng = streams.stream(&[it, tag::GAMMA]);
            state.gamma = update_gamma_dp(state.gamma, state.clusters.len(), data.num_lists(), config.priors.gamma, &mut rng);
        }
    }
    if config.update_phi {
        update_phi_mh(state, config, streams);
    }
    state.iteration += 1;
    Ok(())
}
