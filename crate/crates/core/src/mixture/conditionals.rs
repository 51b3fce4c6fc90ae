//! Conditional distributions of the mixture sampler.

use rand::Rng;

use crate::dist::{
    ln_gamma_pdf, sample_beta, sample_gamma, sample_poisson, sample_zero_truncated_poisson, GammaParams,
};
use crate::error::{invalid, Error, Result};
use crate::single::GammaPrior;
use crate::special::{ln_bessel_i, ln_gamma};

/// A gamma conditional that may collapse to the point mass at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightLaw {
    Zero,
    Gamma(GammaParams),
}

impl WeightLaw {
    fn from_shape(shape: f64, rate: f64) -> Self {
        if shape == 0.0 {
            WeightLaw::Zero
        } else {
            WeightLaw::Gamma(GammaParams::new(shape, rate))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            WeightLaw::Zero => 0.0,
            WeightLaw::Gamma(p) => p.sample(rng),
        }
    }
}

/// `w_jk | ... ~ Gamma(n_jk + u_jk, tau + phi + s_jk)`, exactly zero when
/// `n_jk + u_jk = 0`.
pub fn cond_cluster_weight_params(n_jk: u32, u_jk: u64, tau: f64, phi: f64, s_jk: f64) -> WeightLaw {
    WeightLaw::from_shape(n_jk as f64 + u_jk as f64, tau + phi + s_jk)
}

/// `w_j* | ... ~ Gamma(alpha + u_j*, tau + phi + z_j)`.
pub fn cond_cluster_residual_params(alpha: f64, u_res: u64, tau: f64, phi: f64, z_j: f64) -> GammaParams {
    GammaParams::new(alpha + u_res as f64, tau + phi + z_j)
}

/// `w_0k | u ~ Gamma(sum_j u_jk, J phi + tau)`, exactly zero when no cluster
/// carries a count.
pub fn cond_root_weight_params(sum_u: u64, num_clusters: usize, phi: f64, tau: f64) -> WeightLaw {
    WeightLaw::from_shape(sum_u as f64, num_clusters as f64 * phi + tau)
}

/// `w_0* | u ~ Gamma(alpha + sum_j u_j*, J phi + tau)`.
pub fn cond_root_residual_params(alpha: f64, sum_u_res: u64, num_clusters: usize, phi: f64, tau: f64) -> GammaParams {
    GammaParams::new(alpha + sum_u_res as f64, num_clusters as f64 * phi + tau)
}

/// Summaries of the per-cluster latent sums used by the residual block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualTilt {
    /// `sum_j phi z_j / (tau + phi + z_j)`
    pub x0: f64,
    /// `sum_j ln((tau + phi + z_j) / (tau + phi))`
    pub y0: f64,
}

pub fn residual_tilt(z_sums: &[f64], tau: f64, phi: f64) -> ResidualTilt {
    let base = tau + phi;
    let mut t = ResidualTilt { x0: 0.0, y0: 0.0 };
    for &z in z_sums {
        t.x0 += phi * z / (base + z);
        t.y0 += (z / base).ln_1p();
    }
    t
}

/// `alpha | Z, c, phi ~ Gamma(a + K, b + y0 + ln(1 + x0 / tau))`. In strict
/// mode only `tau = 1` is accepted.
pub fn cond_alpha_mixture_params(
    prior: GammaPrior,
    num_items: usize,
    z_sums: &[f64],
    tau: f64,
    phi: f64,
    strict_tau: bool,
) -> Result<GammaParams> {
    if strict_tau && tau != 1.0 {
        return Err(Error::Config(format!("strict mode requires tau = 1, got {tau}")));
    }
    let t = residual_tilt(z_sums, tau, phi);
    let shape = prior.a + num_items as f64;
    let rate = prior.b + t.y0 + (t.x0 / tau).ln_1p();
    if !(shape > 0.0 && rate > 0.0) {
        return invalid(format!("alpha conditional Gamma({shape}, {rate}) is improper"));
    }
    Ok(GammaParams::new(shape, rate))
}

/// `u_j* | w_0*, Z ~ Poisson((tau + phi) / (tau + phi + z_j) phi w_0*)`.
pub fn cond_residual_count_mean(w0_res: f64, z_j: f64, tau: f64, phi: f64) -> f64 {
    (tau + phi) / (tau + phi + z_j) * phi * w0_res
}

/// Which latent count is being updated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CountKind {
    /// Count attached to an item atom: `w_j | u ~ Gamma(u, tau + phi)`.
    Atom,
    /// Count attached to the residual: `w_j* | u ~ Gamma(alpha + u, tau + phi)`.
    Residual { alpha: f64 },
}

impl CountKind {
    fn shape_offset(&self) -> f64 {
        match *self {
            CountKind::Atom => 0.0,
            CountKind::Residual { alpha } => alpha,
        }
    }
}

/// Metropolis-Hastings update of a latent count. Atoms with positive
/// child weight propose from the zero-truncated Poisson prior; atoms with
/// zero child weight draw from the two-point law; residual counts propose
/// from the Poisson prior.
pub fn cond_u_given_w<R: Rng + ?Sized>(
    kind: CountKind,
    current: u64,
    w0: f64,
    wj: f64,
    tau: f64,
    phi: f64,
    rng: &mut R,
) -> u64 {
    let mean = phi * w0;
    if mean == 0.0 {
        return 0;
    }
    let rate = tau + phi;
    let off = kind.shape_offset();
    match kind {
        CountKind::Atom if wj == 0.0 => {
            let odds = mean * rate;
            u64::from(rng.random::<f64>() < odds / (1.0 + odds))
        }
        _ => {
            let proposal = match kind {
                CountKind::Atom => sample_zero_truncated_poisson(mean, rng),
                CountKind::Residual { .. } => sample_poisson(mean, rng),
            };
            let ln_cur = ln_gamma_pdf(wj, off + current as f64, rate);
            let ln_new = ln_gamma_pdf(wj, off + proposal as f64, rate);
            let log_ratio = ln_new - ln_cur;
            if ln_cur == f64::NEG_INFINITY || log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
                proposal
            } else {
                current
            }
        }
    }
}

/// Exact draw from `p(u | w_0, w_j)`. For atoms, zero child weight forces
/// `u = 0`; otherwise `p(u) ∝ y^u / (u! Gamma(u + a))` with
/// `y = phi w_0 (tau + phi) w_j`, `a = 0` (atoms, `u >= 1`) or `a = alpha`.
pub fn sample_u_exact<R: Rng + ?Sized>(kind: CountKind, w0: f64, wj: f64, tau: f64, phi: f64, rng: &mut R) -> u64 {
    let y = phi * w0 * (tau + phi) * wj;
    match kind {
        CountKind::Atom if wj == 0.0 || w0 == 0.0 => 0,
        CountKind::Residual { .. } if y == 0.0 => 0,
        _ => sample_bessel_count(y, kind.shape_offset(), rng),
    }
}

/// Draw `u >= min` with `p(u) ∝ y^u / (u! Gamma(u + a))`, where `min = 1`
/// when `a = 0`.
pub fn sample_bessel_count<R: Rng + ?Sized>(y: f64, a: f64, rng: &mut R) -> u64 {
    let min = if a == 0.0 { 1.0 } else { 0.0 };
    let ln_y = y.ln();
    let ln_f = |u: f64| u * ln_y - ln_gamma(u + 1.0) - ln_gamma(u + a);
    let disc = ((a - 1.0) * (a - 1.0) + 4.0 * y).sqrt();
    let mode = ((disc - a - 1.0) * 0.5).ceil().max(min);
    let ln_peak = ln_f(mode);
    let mut below = Vec::new();
    let mut u = mode - 1.0;
    while u >= min {
        let w = (ln_f(u) - ln_peak).exp();
        if w < 1e-18 {
            break;
        }
        below.push(w);
        u -= 1.0;
    }
    let mut above = Vec::new();
    let mut u = mode + 1.0;
    loop {
        let w = (ln_f(u) - ln_peak).exp();
        if w < 1e-18 {
            break;
        }
        above.push(w);
        u += 1.0;
    }
    let total: f64 = 1.0 + below.iter().sum::<f64>() + above.iter().sum::<f64>();
    let mut target = rng.random::<f64>() * total;
    let start = mode - below.len() as f64;
    for (i, w) in below.iter().rev().chain(std::iter::once(&1.0)).chain(above.iter()).enumerate() {
        if target < *w {
            return (start + i as f64) as u64;
        }
        target -= w;
    }
    mode as u64
}

/// Joint update of `(u_jk, w_jk)` for an item not ranked in cluster `j`:
/// propose from the prior given `w_0k` and accept with
/// `exp(-(w' - w) z_j)`. Returns the new pair.
#[allow(clippy::too_many_arguments)]
pub fn joint_uw_refresh<R: Rng + ?Sized>(
    n_jk: u32,
    current: (u64, f64),
    w0: f64,
    tau: f64,
    phi: f64,
    z_j: f64,
    rng: &mut R,
) -> Result<(u64, f64)> {
    if n_jk > 0 {
        return invalid("joint refresh applies only to items not ranked in the cluster");
    }
    let u = sample_poisson(phi * w0, rng);
    let w = sample_gamma(u as f64, tau + phi, rng);
    let log_ratio = -(w - current.1) * z_j;
    if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
        Ok((u, w))
    } else {
        Ok(current)
    }
}

/// Log density of a child weight given its parent with the count integrated
/// out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TransitionDensity {
    /// Log probability of the atom at zero.
    PointMass(f64),
    /// Log density on `(0, inf)`.
    Continuous(f64),
}

impl TransitionDensity {
    pub fn value(&self) -> f64 {
        match *self {
            TransitionDensity::PointMass(v) | TransitionDensity::Continuous(v) => v,
        }
    }
}

pub fn transition_log_density_w(wj: f64, w0: f64, tau: f64, phi: f64, kind: CountKind) -> Result<TransitionDensity> {
    if !(wj >= 0.0) || !(w0 >= 0.0) {
        return invalid(format!("weights must be nonnegative, got w_j = {wj}, w_0 = {w0}"));
    }
    let rate = tau + phi;
    match kind {
        CountKind::Atom => {
            if wj == 0.0 {
                return Ok(TransitionDensity::PointMass(-phi * w0));
            }
            if w0 == 0.0 || phi == 0.0 {
                return Ok(TransitionDensity::Continuous(f64::NEG_INFINITY));
            }
            let y = phi * w0 * rate * wj;
            let v = ln_bessel_i(1.0, 2.0 * y.sqrt()) + 0.5 * (phi * rate * w0 / wj).ln() - phi * (wj + w0) - tau * wj;
            Ok(TransitionDensity::Continuous(v))
        }
        CountKind::Residual { alpha } => {
            if wj == 0.0 {
                return invalid("residual child weight must be positive");
            }
            if w0 == 0.0 || phi == 0.0 {
                return Ok(TransitionDensity::Continuous(ln_gamma_pdf(wj, alpha, rate) - phi * w0));
            }
            let y = phi * w0 * rate * wj;
            let v = ln_bessel_i(alpha - 1.0, 2.0 * y.sqrt())
                + 0.5 * (alpha + 1.0) * rate.ln()
                + 0.5 * (alpha - 1.0) * (wj / (phi * w0)).ln()
                - phi * (wj + w0)
                - tau * wj;
            Ok(TransitionDensity::Continuous(v))
        }
    }
}

/// Auxiliary-variable update of the DP concentration given `J` clusters
/// among `L` rankings.
pub fn update_gamma_dp<R: Rng + ?Sized>(
    gamma: f64,
    num_clusters: usize,
    num_lists: usize,
    prior: GammaPrior,
    rng: &mut R,
) -> f64 {
    let eta = sample_beta(gamma + 1.0, num_lists as f64, rng);
    let (p_hi, hi, lo) = gamma_dp_mixture(eta, num_clusters, num_lists, prior);
    let pick = if rng.random::<f64>() < p_hi { hi } else { lo };
    // the lower component is degenerate only under the improper prior with J = 1
    let pick = if pick.shape > 0.0 { pick } else { hi };
    pick.sample(rng)
}

/// Mixture form of `gamma | eta, J`: `(weight of the first component,
/// Gamma(a + J, b - ln eta), Gamma(a + J - 1, b - ln eta))`.
pub fn gamma_dp_mixture(eta: f64, num_clusters: usize, num_lists: usize, prior: GammaPrior) -> (f64, GammaParams, GammaParams) {
    let rate = prior.b - eta.ln();
    let j = num_clusters as f64;
    let odds = (prior.a + j - 1.0) / (num_lists as f64 * rate);
    (
        odds / (1.0 + odds),
        GammaParams::new(prior.a + j, rate),
        GammaParams::new(prior.a + j - 1.0, rate),
    )
}
