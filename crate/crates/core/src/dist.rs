//! Thin wrappers over `rand_distr` with rate parameterisations and the
//! degenerate cases the samplers need (zero shape, zero mean).

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp, Gamma, Poisson};
use statrs::function::gamma::ln_gamma;

/// Gamma(shape, rate) parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Self {
        Self { shape, rate }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_gamma(self.shape, self.rate, rng)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        ln_gamma_pdf(x, self.shape, self.rate)
    }
}

/// Gamma(shape, rate); shape 0 is the point mass at 0.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    debug_assert!(shape >= 0.0 && rate > 0.0, "gamma({shape}, {rate})");
    if shape == 0.0 {
        return 0.0;
    }
    let g = Gamma::new(shape, 1.0).expect("valid gamma shape");
    g.sample(rng) / rate
}

pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    debug_assert!(mean >= 0.0 && mean.is_finite(), "poisson({mean})");
    if mean <= 0.0 {
        return 0;
    }
    let p = Poisson::new(mean).expect("valid poisson mean");
    p.sample(rng) as u64
}

/// Poisson conditioned on being at least one. `mean` must be positive.
pub fn sample_zero_truncated_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    debug_assert!(mean > 0.0);
    if mean > 3.0 {
        loop {
            let u = sample_poisson(mean, rng);
            if u > 0 {
                return u;
            }
        }
    }
    // inversion: P(1) = mean / expm1(mean)
    let mut p = mean / mean.exp_m1();
    let mut cdf = p;
    let target: f64 = rng.random();
    let mut k = 1u64;
    while target > cdf && p > 0.0 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    Beta::new(a, b).expect("valid beta").sample(rng)
}

pub fn sample_exp<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    Exp::new(rate).expect("valid exponential rate").sample(rng)
}

pub fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}

/// Dirichlet draw through normalised unit-rate gammas. Zero parameters give
/// zero components.
pub fn sample_dirichlet<R: Rng + ?Sized>(params: &[f64], rng: &mut R) -> Vec<f64> {
    let mut g: Vec<f64> = params.iter().map(|&a| sample_gamma(a, 1.0, rng)).collect();
    let s: f64 = g.iter().sum();
    if s > 0.0 {
        g.iter_mut().for_each(|x| *x /= s);
    }
    g
}

/// Index drawn proportionally to `exp(log_weights)`. Entries at `-inf` are
/// never chosen. Returns `None` if all weights are `-inf`.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Option<usize> {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let total: f64 = log_weights.iter().map(|&l| (l - max).exp()).sum();
    let mut target = rng.random::<f64>() * total;
    let mut last = None;
    for (i, &l) in log_weights.iter().enumerate() {
        if l == f64::NEG_INFINITY {
            continue;
        }
        let w = (l - max).exp();
        if target < w {
            return Some(i);
        }
        target -= w;
        last = Some(i);
    }
    last
}

pub fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    if x == 0.0 {
        return match shape {
            s if s < 1.0 => f64::INFINITY,
            s if s == 1.0 => rate.ln(),
            _ => f64::NEG_INFINITY,
        };
    }
    shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)
}

pub fn ln_poisson_pmf(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mean.ln() - mean - ln_gamma(k as f64 + 1.0)
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_truncated_poisson_never_zero_and_has_right_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &mean in &[0.01, 0.5, 2.0, 8.0] {
            let n = 40_000;
            let draws: Vec<u64> = (0..n)
                .map(|_| sample_zero_truncated_poisson(mean, &mut rng))
                .collect();
            assert!(draws.iter().all(|&u| u >= 1));
            let m = draws.iter().sum::<u64>() as f64 / n as f64;
            let expect = mean / (1.0 - (-mean as f64).exp());
            let var = (mean + mean * mean) / (1.0 - (-mean).exp()) - expect * expect;
            assert!((m - expect).abs() < 4.0 * (var / n as f64).sqrt() + 1e-9, "{mean}: {m} vs {expect}");
        }
    }

    #[test]
    fn gamma_zero_shape_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(sample_gamma(0.0, 3.0, &mut rng), 0.0);
        assert_eq!(sample_poisson(0.0, &mut rng), 0);
    }

    #[test]
    fn log_categorical_skips_impossible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lw = [f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY];
        for _ in 0..100 {
            assert_eq!(sample_log_categorical(&lw, &mut rng), Some(1));
        }
        assert_eq!(sample_log_categorical(&[f64::NEG_INFINITY], &mut rng), None);
    }

    #[test]
    fn densities() {
        assert!((ln_gamma_pdf(1.0, 1.0, 2.0) - (2.0f64.ln() - 2.0)).abs() < 1e-14);
        assert!((ln_poisson_pmf(2, 1.5) - (1.5f64.powi(2) / 2.0 * (-1.5f64).exp()).ln()).abs() < 1e-13);
        assert_eq!(ln_poisson_pmf(0, 0.0), 0.0);
    }
}
