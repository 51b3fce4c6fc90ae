//! Samplers for the single-measure model: Gibbs for the gamma process, a
//! finite-dimensional gamma baseline, and Metropolis-within-Gibbs for the
//! generalised gamma process.

use rand::Rng;
use rayon::prelude::*;

use crate::crm::{AtomicMeasure, CrmSpec, ItemId, ItemRegistry};
use crate::dist::{sample_exp, sample_gamma, sample_std_normal, GammaParams};
use crate::error::{invalid, Error, Result};
use crate::pl::{exposures, position_rates, sample_top_m, LatentZ, PartialRanking, RankingDataset, ResidualSplit};
use crate::rng::{tag, StreamFactory};

/// Gamma(a, b) prior with rate `b`; `a = b = 0` is the improper `1/x` prior.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GammaPrior {
    pub a: f64,
    pub b: f64,
}

impl GammaPrior {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
            return invalid(format!("gamma prior needs a, b >= 0, got ({a}, {b})"));
        }
        Ok(Self { a, b })
    }

    pub fn flat() -> Self {
        Self { a: 0.0, b: 0.0 }
    }

    pub fn is_proper(&self) -> bool {
        self.a > 0.0 && self.b > 0.0
    }

    /// Log density up to a constant.
    pub fn ln_density(&self, x: f64) -> f64 {
        (self.a - 1.0) * x.ln() - self.b * x
    }
}

/// `alpha | Z ~ Gamma(a + K, b + ln(1 + sum Z / tau))`.
pub fn cond_alpha_params(prior: GammaPrior, num_items: usize, sum_z: f64, tau: f64) -> Result<GammaParams> {
    if !(sum_z >= 0.0) || !(tau > 0.0) {
        return invalid(format!("alpha conditional needs sum_z >= 0 and tau > 0, got ({sum_z}, {tau})"));
    }
    let shape = prior.a + num_items as f64;
    let rate = prior.b + (sum_z / tau).ln_1p();
    if !(shape > 0.0 && rate > 0.0) {
        return invalid(format!("alpha conditional Gamma({shape}, {rate}) is improper"));
    }
    Ok(GammaParams::new(shape, rate))
}

/// `w_k | Z ~ Gamma(n_k - sigma, tau + s_k)`.
pub fn cond_weight_params(n_k: u32, s_k: f64, spec: &CrmSpec) -> Result<GammaParams> {
    if n_k == 0 {
        return invalid("weight conditional needs at least one appearance");
    }
    if !(s_k >= 0.0) {
        return invalid(format!("exposure must be nonnegative, got {s_k}"));
    }
    let rate = spec.tau() + s_k;
    if rate <= 0.0 {
        return invalid("weight conditional has zero rate");
    }
    Ok(GammaParams::new(n_k as f64 - spec.sigma(), rate))
}

/// Unobserved mass of a gamma process: `Gamma(alpha, tau + sum Z)`.
pub fn cond_residual_params(alpha: f64, tau: f64, sum_z: f64) -> GammaParams {
    GammaParams::new(alpha, tau + sum_z)
}

/// Finite-dimensional baseline: `w_k | Z ~ Gamma(alpha / M + n_k, tau + s_k)`.
pub fn finite_weight_params(n_k: u32, s_k: f64, alpha: f64, m: usize, tau: f64) -> GammaParams {
    GammaParams::new(alpha / m as f64 + n_k as f64, tau + s_k)
}

/// Draw every latent variable from its exponential conditional.
pub(crate) fn draw_latent_z(
    z: &mut LatentZ,
    data: &RankingDataset,
    weights: &[f64],
    residual: f64,
    streams: &StreamFactory,
    coords: [u64; 2],
) -> Result<()> {
    let observed: f64 = weights.iter().sum();
    z.lists_mut()
        .into_par_iter()
        .enumerate()
        .try_for_each(|(l, zl)| {
            let items = data.ranking(l).items();
            let ranked: f64 = items.iter().map(|it| weights[it.index()]).sum();
            let rest = residual + (observed - ranked).max(0.0);
            position_rates(weights, rest, items, zl);
            let mut rng = streams.stream(&[coords[0], coords[1], l as u64]);
            for (p, v) in zl.iter_mut().enumerate() {
                let rate = *v;
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(Error::NonPositiveRate { ranking: l, position: p + 1, rate });
                }
                *v = sample_exp(rate, &mut rng);
            }
            Ok(())
        })
}

/// State of the gamma-process sampler.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleModelState {
    /// Weights of the ranked items, indexed by item id.
    pub weights: Vec<f64>,
    /// Total mass of all other items.
    pub residual: f64,
    pub z: LatentZ,
    pub alpha: f64,
    pub iteration: u64,
}

/// Gamma-process model settings. `alpha_prior = None` holds `alpha` fixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingleModelConfig {
    pub tau: f64,
    pub alpha_prior: Option<GammaPrior>,
}

impl SingleModelState {
    pub fn init(data: &RankingDataset, alpha: f64, tau: f64, streams: &StreamFactory) -> Result<Self> {
        if !(alpha > 0.0 && tau > 0.0) {
            return invalid(format!("alpha and tau must be positive, got ({alpha}, {tau})"));
        }
        let weights = vec![1.0; data.num_items()];
        let residual = alpha / tau;
        let mut z = LatentZ::filled(&data.lengths(), 0.0);
        draw_latent_z(&mut z, data, &weights, residual, streams, [u64::MAX, tag::INIT])?;
        Ok(Self { weights, residual, z, alpha, iteration: 0 })
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum::<f64>() + self.residual
    }

    pub fn measure(&self) -> AtomicMeasure {
        let atoms = self.weights.iter().enumerate().map(|(k, &w)| (ItemId(k as u32), w));
        AtomicMeasure::new(atoms, self.residual).expect("valid state")
    }

    /// `E[w_k | Z, Y] = (n_k - sigma) / (tau + s_k)`.
    pub fn rao_blackwell_weights(&self, data: &RankingDataset, spec: &CrmSpec) -> Vec<f64> {
        let (_, s) = exposures(data, &self.z, |_| true);
        data.counts()
            .iter()
            .zip(&s)
            .map(|(&n, &sk)| (n as f64 - spec.sigma()) / (spec.tau() + sk))
            .collect()
    }
}

fn draw_weights(
    weights: &mut [f64],
    params: impl Fn(usize) -> GammaParams + Sync,
    streams: &StreamFactory,
    iteration: u64,
) {
    weights.par_iter_mut().enumerate().for_each(|(k, w)| {
        let mut rng = streams.stream(&[iteration, tag::WEIGHTS, k as u64]);
        *w = params(k).sample(&mut rng);
    });
}

/// One Gibbs sweep: latent variables, observed weights, `alpha` (if it has a
/// prior) and then the unobserved mass.
pub fn gibbs_sweep_single(
    state: &mut SingleModelState,
    data: &RankingDataset,
    config: &SingleModelConfig,
    streams: &StreamFactory,
) -> Result<()> {
    if state.weights.len() != data.num_items() {
        return Err(Error::StateMismatch("weight vector does not match the registry".into()));
    }
    let it = state.iteration;
    let tau = config.tau;
    draw_latent_z(&mut state.z, data, &state.weights, state.residual, streams, [it, tag::Z])?;
    let (sum_z, s) = exposures(data, &state.z, |_| true);
    let counts = data.counts();
    draw_weights(&mut state.weights, |k| GammaParams::new(counts[k] as f64, tau + s[k]), streams, it);
    if let Some(prior) = config.alpha_prior {
        let p = cond_alpha_params(prior, data.num_items(), sum_z, tau)?;
        state.alpha = p.sample(&mut streams.stream(&[it, tag::ALPHA]));
    }
    state.residual = cond_residual_params(state.alpha, tau, sum_z).sample(&mut streams.stream(&[it, tag::RESIDUAL]));
    state.iteration += 1;
    Ok(())
}

/// State of the `M`-item finite baseline. Unranked items are kept as one
/// aggregate, which is exact because their conditionals share a rate.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteModelState {
    pub weights: Vec<f64>,
    pub unobserved: f64,
    pub z: LatentZ,
    pub alpha: f64,
    pub m: usize,
    pub iteration: u64,
}

impl FiniteModelState {
    pub fn init(data: &RankingDataset, m: usize, alpha: f64, tau: f64, streams: &StreamFactory) -> Result<Self> {
        if m < data.num_items() {
            return invalid(format!("M = {m} is smaller than the {} ranked items", data.num_items()));
        }
        let weights = vec![1.0; data.num_items()];
        let unobserved = (m - data.num_items()) as f64 * alpha / (m as f64 * tau);
        let mut z = LatentZ::filled(&data.lengths(), 0.0);
        draw_latent_z(&mut z, data, &weights, unobserved, streams, [u64::MAX, tag::INIT])?;
        Ok(Self { weights, unobserved, z, alpha, m, iteration: 0 })
    }

    pub fn rao_blackwell_weights(&self, data: &RankingDataset, tau: f64) -> Vec<f64> {
        let (_, s) = exposures(data, &self.z, |_| true);
        data.counts()
            .iter()
            .zip(&s)
            .map(|(&n, &sk)| finite_weight_params(n, sk, self.alpha, self.m, tau).mean())
            .collect()
    }
}

/// One sweep of the finite baseline, drawing from the same streams as
/// [`gibbs_sweep_single`] so that runs can be coupled.
pub fn finite_gibbs_sweep(
    state: &mut FiniteModelState,
    data: &RankingDataset,
    tau: f64,
    streams: &StreamFactory,
) -> Result<()> {
    let it = state.iteration;
    draw_latent_z(&mut state.z, data, &state.weights, state.unobserved, streams, [it, tag::Z])?;
    let (sum_z, s) = exposures(data, &state.z, |_| true);
    let counts = data.counts();
    let (alpha, m) = (state.alpha, state.m);
    draw_weights(&mut state.weights, |k| finite_weight_params(counts[k], s[k], alpha, m, tau), streams, it);
    let shape = (m - data.num_items()) as f64 * alpha / m as f64;
    state.unobserved = sample_gamma(shape, tau + sum_z, &mut streams.stream(&[it, tag::RESIDUAL]));
    state.iteration += 1;
    Ok(())
}

/// State of the generalised-gamma sampler. The unobserved mass is integrated
/// out; latent variables move by random-walk Metropolis on the log scale.
#[derive(Clone, Debug, PartialEq)]
pub struct GenCrmState {
    pub weights: Vec<f64>,
    pub z: LatentZ,
    pub log_step: f64,
    pub accepted: u64,
    pub proposed: u64,
    pub iteration: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenCrmConfig {
    pub spec: CrmSpec,
    /// Step-size adaptation stops at this iteration.
    pub adapt_until: u64,
    pub target_accept: f64,
}

impl GenCrmConfig {
    pub fn new(spec: CrmSpec, adapt_until: u64) -> Self {
        Self { spec, adapt_until, target_accept: 0.44 }
    }
}

impl GenCrmState {
    pub fn init(data: &RankingDataset, spec: &CrmSpec, streams: &StreamFactory) -> Result<Self> {
        let weights = vec![1.0; data.num_items()];
        let mut z = LatentZ::filled(&data.lengths(), 0.0);
        let guess = spec.alpha() / spec.tau().max(1.0);
        draw_latent_z(&mut z, data, &weights, guess, streams, [u64::MAX, tag::INIT])?;
        Ok(Self { weights, z, log_step: 0.5f64.ln(), accepted: 0, proposed: 0, iteration: 0 })
    }

    pub fn step_size(&self) -> f64 {
        self.log_step.exp()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// One sweep: a log-scale random-walk update of every latent variable, then
/// the observed weights from their gamma conditionals.
pub fn gen_crm_sweep(
    state: &mut GenCrmState,
    data: &RankingDataset,
    config: &GenCrmConfig,
    streams: &StreamFactory,
) -> Result<()> {
    let spec = &config.spec;
    let it = state.iteration;
    let step = state.step_size();
    let observed: f64 = state.weights.iter().sum();
    let mut sum_z = state.z.sum();
    let mut psi = spec.laplace_exponent(sum_z)?;
    let mut rates = Vec::new();
    let (mut acc, mut prop) = (0u64, 0u64);
    for l in 0..data.num_lists() {
        let items = data.ranking(l).items();
        let ranked: f64 = items.iter().map(|it| state.weights[it.index()]).sum();
        rates.resize(items.len(), 0.0);
        position_rates(&state.weights, (observed - ranked).max(0.0), items, &mut rates);
        let mut rng = streams.stream(&[it, tag::LOG_Z_MH, l as u64]);
        let zl = state.z.list_mut(l);
        for (p, zv) in zl.iter_mut().enumerate() {
            let cur = *zv;
            let new = cur * (step * sample_std_normal(&mut rng)).exp();
            let new_sum = (sum_z - cur + new).max(0.0);
            let new_psi = spec.laplace_exponent(new_sum)?;
            let log_ratio = -(new_psi - psi) - (new - cur) * rates[p] + (new / cur).ln();
            prop += 1;
            if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
                *zv = new;
                sum_z = new_sum;
                psi = new_psi;
                acc += 1;
            }
        }
    }
    state.accepted += acc;
    state.proposed += prop;
    if it < config.adapt_until && prop > 0 {
        let rate = acc as f64 / prop as f64;
        state.log_step += (rate - config.target_accept) / ((it + 1) as f64).powf(0.6);
    }
    let (_, s) = exposures(data, &state.z, |_| true);
    let counts = data.counts();
    let sigma = spec.sigma();
    let tau = spec.tau();
    draw_weights(&mut state.weights, |k| GammaParams::new(counts[k] as f64 - sigma, tau + s[k]), streams, it);
    state.iteration += 1;
    Ok(())
}

/// Regenerate rankings of the given lengths from the current measure for
/// successive-conditional (Geweke) testing. Unranked items are folded into
/// the residual and the survivors relabelled in order of appearance; latent
/// variables are then drawn given the new rankings.
pub fn replay_single(
    state: &SingleModelState,
    lengths: &[usize],
    streams: &StreamFactory,
) -> Result<(RankingDataset, SingleModelState)> {
    let it = state.iteration;
    let mut g = state.measure();
    let split = ResidualSplit::Stick { alpha: state.alpha };
    let mut rng = streams.stream(&[it, tag::REPLAY]);
    let mut raw = Vec::with_capacity(lengths.len());
    for &m in lengths {
        raw.push(sample_top_m(&mut g, m, &split, &mut rng)?);
    }
    let mut map = std::collections::HashMap::new();
    let mut registry = ItemRegistry::new();
    let mut weights = Vec::new();
    let mut rankings = Vec::with_capacity(raw.len());
    for r in &raw {
        let ids = r
            .items()
            .iter()
            .map(|old| {
                *map.entry(*old).or_insert_with(|| {
                    weights.push(g.atom(*old).unwrap());
                    registry.intern(&old.0.to_string())
                })
            })
            .collect();
        rankings.push(PartialRanking::new(ids)?);
    }
    let residual = g.residual() + g.iter().filter(|(id, _)| !map.contains_key(id)).map(|x| x.1).sum::<f64>();
    let data = RankingDataset::new(rankings, registry)?;
    let mut z = LatentZ::filled(&data.lengths(), 0.0);
    draw_latent_z(&mut z, &data, &weights, residual, streams, [it, tag::REPLAY])?;
    let next = SingleModelState { weights, residual, z, alpha: state.alpha, iteration: state.iteration };
    Ok((data, next))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_conditional_worked_example() {
        // tau = 1, prior (1, 1), K = 2, sum Z = 1: Gamma(3, 1 + ln 2)
        let p = cond_alpha_params(GammaPrior::new(1.0, 1.0).unwrap(), 2, 1.0, 1.0).unwrap();
        assert_eq!(p.shape, 3.0);
        assert!((p.rate - (1.0 + 2f64.ln())).abs() < 1e-15);
        assert!(cond_alpha_params(GammaPrior::flat(), 1, 0.0, 1.0).is_err());
    }

    #[test]
    fn weight_conditionals() {
        let g = CrmSpec::gamma(1.0, 1.0).unwrap();
        assert_eq!(cond_weight_params(2, 2.0, &g).unwrap(), GammaParams::new(2.0, 3.0));
        let gg = CrmSpec::generalized_gamma(1.0, 1.0, 0.5).unwrap();
        assert_eq!(cond_weight_params(1, 1.0, &gg).unwrap(), GammaParams::new(0.5, 2.0));
        assert!(cond_weight_params(0, 1.0, &g).is_err());
        assert_eq!(cond_residual_params(2.0, 1.0, 1.0), GammaParams::new(2.0, 2.0));
    }

    #[test]
    fn fixed_alpha_is_untouched() {
        let data = RankingDataset::from_labels(&[vec!["a", "b"], vec!["b", "c"]]).unwrap();
        let streams = StreamFactory::new(4);
        let mut st = SingleModelState::init(&data, 1.7, 1.0, &streams).unwrap();
        let cfg = SingleModelConfig { tau: 1.0, alpha_prior: None };
        for _ in 0..5 {
            gibbs_sweep_single(&mut st, &data, &cfg, &streams).unwrap();
        }
        assert_eq!(st.alpha, 1.7);
        assert_eq!(st.iteration, 5);
    }

    #[test]
    fn finite_needs_enough_items() {
        let data = RankingDataset::from_labels(&[vec!["a", "b"]]).unwrap();
        assert!(FiniteModelState::init(&data, 1, 1.0, 1.0, &StreamFactory::new(1)).is_err());
    }
}
