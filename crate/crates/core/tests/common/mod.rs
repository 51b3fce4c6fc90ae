//! Oracles and statistical helpers shared by the integration tests.
#![allow(dead_code)]

use bnpl::mixture::{mixture_sweep, replay::replay_mixture, MixtureConfig, MixtureInit, MixturePriors, MixtureState};
use bnpl::single::{gibbs_sweep_single, replay_single, GammaPrior, SingleModelConfig, SingleModelState};
use bnpl::{RankingDataset, StreamFactory};

/// Mean and batch-means standard error.
pub fn batch_mean_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let b = n / batches;
    let bm: Vec<f64> = (0..batches).map(|i| xs[i * b..(i + 1) * b].iter().sum::<f64>() / b as f64).collect();
    let var = bm.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

/// Double-exponential (tanh-sinh) quadrature on a finite interval. Abscissae
/// are measured from the nearer endpoint so endpoint singularities keep
/// full relative precision.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let h = 1.0 / 64.0;
    let d = 0.5 * (b - a);
    let mut sum = 0.0;
    let half_pi = std::f64::consts::FRAC_PI_2;
    for i in -400i32..=400 {
        let t = i as f64 * h;
        let u = half_pi * t.sinh();
        let w = half_pi * t.cosh() / u.cosh().powi(2);
        if w < 1e-300 {
            continue;
        }
        // distance to the nearer endpoint, 1 - |tanh u|, without cancellation
        let gap = (-u.abs()).exp() / u.cosh();
        let x = if u < 0.0 { a + d * gap } else { b - d * gap };
        if x <= a || x >= b {
            continue;
        }
        let v = f(x);
        if v.is_finite() {
            sum += w * v;
        }
    }
    sum * d * h
}

/// Tanh-sinh on `[a, inf)` via `x = a + t / (1 - t)`.
pub fn tanh_sinh_inf<F: Fn(f64) -> f64>(f: F, a: f64) -> f64 {
    tanh_sinh(
        |t| {
            let s = 1.0 - t;
            if s <= 0.0 {
                0.0
            } else {
                f(a + t / s) / (s * s)
            }
        },
        0.0,
        1.0,
    )
}

/// Unsigned Stirling numbers of the first kind `|s(n, k)|` for `k = 0..=n`.
pub fn stirling_first(n: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    for m in 0..n {
        let mut next = vec![0.0; row.len() + 1];
        for (k, &v) in row.iter().enumerate() {
            next[k] += m as f64 * v;
            next[k + 1] += v;
        }
        row = next;
    }
    row
}

/// `P(J = j | gamma)` for a CRP with `n` customers.
pub fn crp_cluster_pmf(n: usize, gamma: f64) -> Vec<f64> {
    let s = stirling_first(n);
    let rising: f64 = (0..n).map(|i| gamma + i as f64).product();
    s.iter().enumerate().map(|(j, &v)| v * gamma.powi(j as i32) / rising).collect()
}

fn gamma_pdf(x: f64, a: f64, b: f64) -> f64 {
    (a * b.ln() + (a - 1.0) * x.ln() - b * x - statrs::function::gamma::ln_gamma(a)).exp()
}

/// `E[J]` and `E[J^2]` with `gamma ~ Gamma(a, b)`.
pub fn crp_moments_under_prior(n: usize, a: f64, b: f64) -> (f64, f64) {
    let m1 = tanh_sinh_inf(|g| gamma_pdf(g, a, b) * crp_cluster_pmf(n, g).iter().enumerate().map(|(j, p)| j as f64 * p).sum::<f64>(), 0.0);
    let m2 = tanh_sinh_inf(|g| gamma_pdf(g, a, b) * crp_cluster_pmf(n, g).iter().enumerate().map(|(j, p)| (j * j) as f64 * p).sum::<f64>(), 0.0);
    (m1, m2)
}

/// One moment comparison of a Geweke run.
#[derive(Debug, Clone)]
pub struct MomentCheck {
    pub name: String,
    pub mean: f64,
    pub se: f64,
    pub expected: f64,
}

impl MomentCheck {
    pub fn z(&self) -> f64 {
        (self.mean - self.expected) / self.se
    }
    pub fn ok(&self, k: f64) -> bool {
        self.z().abs() <= k
    }
}

fn check(name: &str, xs: &[f64], expected: f64) -> MomentCheck {
    let (mean, se) = batch_mean_se(xs, 50);
    MomentCheck { name: name.into(), mean, se, expected }
}

fn seed_data(lengths: &[usize]) -> RankingDataset {
    let lists: Vec<Vec<String>> = lengths
        .iter()
        .enumerate()
        .map(|(l, &m)| (0..m).map(|i| format!("{}", (l + i) % (lengths.len() + 1))).collect())
        .collect();
    RankingDataset::from_labels(&lists).unwrap()
}

/// Successive-conditional run of the gamma-process sampler with a proper
/// Gamma(a, b) prior on alpha.
pub fn geweke_single(sweeps: usize, burn: usize, lengths: &[usize], prior: (f64, f64), tau: f64, seed: u64) -> Vec<MomentCheck> {
    let streams = StreamFactory::new(seed);
    let mut data = seed_data(lengths);
    let cfg = SingleModelConfig { tau, alpha_prior: Some(GammaPrior::new(prior.0, prior.1).unwrap()) };
    let mut st = SingleModelState::init(&data, prior.0 / prior.1, tau, &streams).unwrap();
    let (mut a1, mut a2, mut t1, mut t2) = (vec![], vec![], vec![], vec![]);
    for s in 0..burn + sweeps {
        gibbs_sweep_single(&mut st, &data, &cfg, &streams).unwrap();
        let (d, next) = replay_single(&st, lengths, &streams).unwrap();
        data = d;
        st = next;
        if s >= burn {
            let t = st.total();
            a1.push(st.alpha);
            a2.push(st.alpha * st.alpha);
            t1.push(t);
            t2.push(t * t);
        }
    }
    let (a, b) = prior;
    let ea = a / b;
    let va = a / (b * b);
    let et = ea / tau;
    let et2 = (va + ea * ea + ea) / (tau * tau);
    vec![
        check("E[alpha]", &a1, ea),
        check("E[alpha^2]", &a2, va + ea * ea),
        check("E[T]", &t1, et),
        check("E[T^2]", &t2, et2),
    ]
}

/// Proper priors used by the mixture Geweke runs.
pub fn geweke_mixture_priors() -> MixturePriors {
    MixturePriors {
        alpha: GammaPrior::new(3.0, 2.0).unwrap(),
        gamma: GammaPrior::new(2.0, 2.0).unwrap(),
        phi: GammaPrior::new(3.0, 2.0).unwrap(),
        phi_step: 0.5,
    }
}

/// Successive-conditional run of the mixture sampler.
pub fn geweke_mixture(mut cfg: MixtureConfig, sweeps: usize, burn: usize, lengths: &[usize], seed: u64) -> Vec<MomentCheck> {
    let streams = StreamFactory::new(seed);
    cfg.priors = geweke_mixture_priors();
    let pr = cfg.priors;
    let mut data = seed_data(lengths);
    let init = MixtureInit { alpha: pr.alpha.a / pr.alpha.b, phi: pr.phi.a / pr.phi.b, gamma: pr.gamma.a / pr.gamma.b, ..MixtureInit::default() };
    let mut st = MixtureState::init(&data, &cfg, init, &streams).unwrap();
    let mut rec: Vec<Vec<f64>> = vec![Vec::new(); 12];
    for s in 0..burn + sweeps {
        mixture_sweep(&mut st, &data, &cfg, &streams).unwrap_or_else(|e| panic!("sweep {s}: {e}"));
        let (d, next) = replay_mixture(&st, lengths, &cfg, &streams).unwrap();
        data = d;
        st = next;
        if s >= burn {
            let j = st.num_clusters() as f64;
            let t0 = st.root_total();
            let t1 = st.clusters[st.assignments[0]].total();
            for (i, v) in [st.alpha, st.gamma, st.phi, j, t0, t1].into_iter().enumerate() {
                rec[2 * i].push(v);
                rec[2 * i + 1].push(v * v);
            }
        }
    }
    let tau = cfg.tau;
    let m = |p: GammaPrior| (p.a / p.b, p.a / (p.b * p.b));
    let (ea, va) = m(pr.alpha);
    let (eg, vg) = m(pr.gamma);
    let (ep, vp) = m(pr.phi);
    let (ej, ej2) = crp_moments_under_prior(lengths.len(), pr.gamma.a, pr.gamma.b);
    let et = ea / tau;
    let et2 = (va + ea * ea + ea) / (tau * tau);
    let names = ["alpha", "gamma", "phi", "J", "T0", "T1"];
    let expect = [(ea, va + ea * ea), (eg, vg + eg * eg), (ep, vp + ep * ep), (ej, ej2), (et, et2), (et, et2)];
    let mut out = Vec::new();
    for (i, n) in names.iter().enumerate() {
        out.push(check(&format!("E[{n}]"), &rec[2 * i], expect[i].0));
        out.push(check(&format!("E[{n}^2]"), &rec[2 * i + 1], expect[i].1));
    }
    out
}

/// `psi(z)` by quadrature of `int (1 - e^{-zw}) lambda(w) dw` for the
/// generalised gamma intensity `alpha / Gamma(1 - sigma) w^{-1-sigma} e^{-tau w}`.
/// The substitution `w = s / (tau + z)` keeps the integrand on unit scale.
pub fn psi_quadrature(alpha: f64, tau: f64, sigma: f64, z: f64) -> f64 {
    let c = tau + z;
    let norm = alpha / statrs::function::gamma::gamma(1.0 - sigma);
    let f = |s: f64| {
        let w = s / c;
        -(-z * w).exp_m1() * w.powf(-1.0 - sigma) * (-tau * w).exp() / c
    };
    norm * (tanh_sinh(f, 0.0, 1.0) + tanh_sinh_inf(f, 1.0))
}

/// `kappa(n, z)` by quadrature of `int w^n e^{-zw} lambda(w) dw`.
pub fn kappa_quadrature(alpha: f64, tau: f64, sigma: f64, n: u32, z: f64) -> f64 {
    let c = tau + z;
    let norm = alpha / statrs::function::gamma::gamma(1.0 - sigma);
    let f = |s: f64| {
        let w = s / c;
        w.powf(n as f64 - 1.0 - sigma) * (-c * w).exp() / c
    };
    norm * (tanh_sinh(f, 0.0, 1.0) + tanh_sinh_inf(f, 1.0))
}

/// Largest gap between the empirical CDF of `xs` and `cdf`.
pub fn ks_statistic(xs: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_01(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}
