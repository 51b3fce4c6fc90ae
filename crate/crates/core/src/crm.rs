//! Completely random measures: Lévy intensities, Laplace exponents, tilted
//! moments, truncated simulation and the Pitt-Walker dependent construction.

use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{sample_beta, sample_exp, sample_gamma, sample_poisson};
use crate::error::{invalid, Result};
use crate::special::{integrate, ln_gamma};

/// Dense item identifier, assigned by [`ItemRegistry`] or by the simulators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemId(pub u32);

impl ItemId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrmFamily {
    Gamma,
    GeneralizedGamma,
}

/// A homogeneous CRM with intensity `alpha / Gamma(1 - sigma) w^{-1-sigma} e^{-tau w}`.
/// `sigma = 0` is the gamma process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrmSpec {
    family: CrmFamily,
    alpha: f64,
    tau: f64,
    sigma: f64,
}

impl CrmSpec {
    pub fn gamma(alpha: f64, tau: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return invalid(format!("alpha must be positive, got {alpha}"));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return invalid(format!("tau must be positive, got {tau}"));
        }
        Ok(Self { family: CrmFamily::Gamma, alpha, tau, sigma: 0.0 })
    }

    /// Generalised gamma process; `tau = 0` is the stable process.
    pub fn generalized_gamma(alpha: f64, tau: f64, sigma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return invalid(format!("alpha must be positive, got {alpha}"));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return invalid(format!("tau must be nonnegative, got {tau}"));
        }
        if !(0.0..1.0).contains(&sigma) {
            return invalid(format!("sigma must lie in [0, 1), got {sigma}"));
        }
        if sigma == 0.0 && tau == 0.0 {
            return invalid("sigma = 0 requires tau > 0");
        }
        Ok(Self { family: CrmFamily::GeneralizedGamma, alpha, tau, sigma })
    }

    pub fn family(&self) -> CrmFamily {
        self.family
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        match self.family {
            CrmFamily::Gamma => Self::gamma(alpha, self.tau),
            CrmFamily::GeneralizedGamma => Self::generalized_gamma(alpha, self.tau, self.sigma),
        }
    }

    fn ln_norm(&self) -> f64 {
        self.alpha.ln() - ln_gamma(1.0 - self.sigma)
    }

    /// Lévy intensity at `w > 0`.
    pub fn levy_intensity(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        (self.ln_norm() - (1.0 + self.sigma) * w.ln() - self.tau * w).exp()
    }

    /// `psi(z) = -ln E[exp(-z G(X))]`.
    pub fn laplace_exponent(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) {
            return invalid(format!("Laplace exponent needs z >= 0, got {z}"));
        }
        let (a, t, s) = (self.alpha, self.tau, self.sigma);
        if s == 0.0 {
            return Ok(a * (z / t).ln_1p());
        }
        if t == 0.0 {
            return Ok(a / s * z.powf(s));
        }
        Ok(a * t.powf(s) * (s * (z / t).ln_1p()).exp_m1() / s)
    }

    /// `ln kappa(n, z)` where `kappa(n, z) = int w^n e^{-z w} rho(w) dw`.
    pub fn ln_tilted_moment(&self, n: u32, z: f64) -> Result<f64> {
        if n == 0 {
            return invalid("tilted moment needs n >= 1");
        }
        if !(z >= 0.0) || z + self.tau <= 0.0 {
            return invalid(format!("tilted moment needs z + tau > 0, got z = {z}"));
        }
        let n = n as f64;
        let s = self.sigma;
        Ok(self.ln_norm() + ln_gamma(n - s) - (n - s) * (z + self.tau).ln())
    }

    pub fn tilted_moment(&self, n: u32, z: f64) -> Result<f64> {
        self.ln_tilted_moment(n, z).map(f64::exp)
    }

    /// Expected number of jumps larger than `x`.
    pub fn tail_mass(&self, x: f64) -> f64 {
        assert!(x > 0.0);
        let (s, t) = (self.sigma, self.tau);
        if t == 0.0 {
            return (self.ln_norm() - s * x.ln()).exp() / s;
        }
        let scaled = t * x;
        if scaled > 745.0 {
            return 0.0;
        }
        // w = x e^u
        let upper = (745.0 / scaled).ln().max(1.0) + 1.0;
        let ln_c = self.ln_norm() - s * x.ln();
        integrate(|u| (ln_c - s * u - scaled * u.exp()).exp(), 0.0, upper, 1e-11)
    }

    /// Expected total mass of the jumps smaller than `c`.
    pub fn small_jump_mean(&self, c: f64) -> f64 {
        if c <= 0.0 {
            return 0.0;
        }
        let s = 1.0 - self.sigma;
        let t = self.tau;
        if t == 0.0 {
            return (self.ln_norm() + s * c.ln()).exp() / s;
        }
        // alpha / Gamma(s) * tau^{-s} * lower incomplete gamma(s, tau c)
        let p = statrs::function::gamma::gamma_lr(s, t * c);
        (self.ln_norm() - s * t.ln() + ln_gamma(s)).exp() * p
    }

    /// Smallest `x` with `tail_mass(x) <= level`.
    pub fn inverse_tail_mass(&self, level: f64) -> f64 {
        assert!(level > 0.0);
        if self.tau == 0.0 {
            let s = self.sigma;
            return ((self.ln_norm() - (s * level).ln()) / s).exp();
        }
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        let mut x = 1.0f64;
        if self.tail_mass(x) > level {
            while self.tail_mass(x) > level {
                lo = x.ln();
                x *= 4.0;
            }
            hi = x.ln();
        } else {
            while self.tail_mass(x) <= level {
                hi = x.ln();
                x /= 4.0;
                if x < 1e-300 {
                    return 0.0;
                }
            }
            lo = x.ln();
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.tail_mass(mid.exp()) > level {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        (0.5 * (lo + hi)).exp()
    }
}

/// A purely atomic measure: finitely many identified atoms plus an
/// unassigned residual mass.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicMeasure {
    atoms: BTreeMap<ItemId, f64>,
    residual: f64,
    next_id: u32,
}

impl AtomicMeasure {
    pub fn new(atoms: impl IntoIterator<Item = (ItemId, f64)>, residual: f64) -> Result<Self> {
        if !(residual >= 0.0 && residual.is_finite()) {
            return invalid(format!("residual must be finite and nonnegative, got {residual}"));
        }
        let mut map = BTreeMap::new();
        for (id, w) in atoms {
            if !(w > 0.0 && w.is_finite()) {
                return invalid(format!("atom {id} has nonpositive mass {w}"));
            }
            if map.insert(id, w).is_some() {
                return invalid(format!("duplicate atom {id}"));
            }
        }
        let next_id = map.keys().next_back().map_or(0, |k: &ItemId| k.0 + 1);
        Ok(Self { atoms: map, residual, next_id })
    }

    pub fn atom(&self, id: ItemId) -> Option<f64> {
        self.atoms.get(&id).copied()
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn total(&self) -> f64 {
        self.atoms.values().sum::<f64>() + self.residual
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, f64)> + '_ {
        self.atoms.iter().map(|(&k, &v)| (k, v))
    }

    /// Identifier the next fresh atom will receive.
    pub fn next_id(&self) -> ItemId {
        ItemId(self.next_id)
    }

    /// Reserve identifiers below `id` so fresh atoms never collide with them.
    pub fn reserve_ids(&mut self, id: ItemId) {
        self.next_id = self.next_id.max(id.0);
    }

    /// Move `mass` from the residual into a new atom.
    pub fn split_residual(&mut self, mass: f64) -> Result<ItemId> {
        if !(mass > 0.0) || mass > self.residual {
            return invalid(format!("cannot split {mass} from residual {}", self.residual));
        }
        let id = ItemId(self.next_id);
        self.next_id += 1;
        self.residual = (self.residual - mass).max(0.0);
        self.atoms.insert(id, mass);
        Ok(id)
    }

    /// Multiply every mass by `c > 0`.
    pub fn scale(&mut self, c: f64) {
        self.atoms.values_mut().for_each(|w| *w *= c);
        self.residual *= c;
    }
}

/// Labels to dense ids, in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ItemRegistry {
    labels: Vec<String>,
    index: HashMap<String, ItemId>,
}

impl ItemRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry with labels `"0"`, `"1"`, ..
    pub fn numbered(n: usize) -> Self {
        let mut r = Self::new();
        for i in 0..n {
            r.intern(&i.to_string());
        }
        r
    }

    pub fn intern(&mut self, label: &str) -> ItemId {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = ItemId(self.labels.len() as u32);
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), id);
        id
    }

    pub fn id(&self, label: &str) -> Option<ItemId> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: ItemId) -> Option<&str> {
        self.labels.get(id.index()).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TruncationRule {
    /// Keep the `k` largest jumps.
    TopK(usize),
    /// Keep every jump larger than the threshold.
    Threshold(f64),
}

/// How the gamma-family simulator treats the small jumps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResidualMode {
    /// Draw the total exactly; the residual is whatever is not retained.
    Exact,
    /// Residual set to the expected mass of the discarded jumps.
    Expected,
}

/// Simulate a truncated CRM. Gamma processes default to an exact residual;
/// generalised gamma processes use the expected small-jump mass.
pub fn simulate_crm<R: Rng + ?Sized>(
    spec: &CrmSpec,
    rule: TruncationRule,
    rng: &mut R,
) -> Result<AtomicMeasure> {
    let mode = if spec.sigma == 0.0 { ResidualMode::Exact } else { ResidualMode::Expected };
    simulate_crm_with(spec, rule, mode, rng)
}

pub fn simulate_crm_with<R: Rng + ?Sized>(
    spec: &CrmSpec,
    rule: TruncationRule,
    mode: ResidualMode,
    rng: &mut R,
) -> Result<AtomicMeasure> {
    match rule {
        TruncationRule::TopK(0) => return invalid("top-k truncation needs k >= 1"),
        TruncationRule::TopK(_) => {}
        TruncationRule::Threshold(eps) if eps > 0.0 => {}
        TruncationRule::Threshold(eps) => return invalid(format!("threshold must be positive, got {eps}")),
    }
    match mode {
        ResidualMode::Exact if spec.sigma == 0.0 => Ok(simulate_gamma_exact(spec, rule, rng)),
        ResidualMode::Exact => invalid("exact residuals are only available for the gamma process"),
        ResidualMode::Expected => Ok(simulate_inverse_levy(spec, rule, rng)),
    }
}

/// Total mass drawn exactly, then broken by GEM(alpha) sticks until no
/// further piece can qualify for retention.
fn simulate_gamma_exact<R: Rng + ?Sized>(spec: &CrmSpec, rule: TruncationRule, rng: &mut R) -> AtomicMeasure {
    let total = sample_gamma(spec.alpha, spec.tau, rng);
    let mut rem = total;
    let mut dropped = 0.0;
    let mut kept: Vec<f64> = Vec::new();
    match rule {
        TruncationRule::Threshold(eps) => {
            while rem > eps {
                let piece = rem * sample_beta(1.0, spec.alpha, rng);
                rem -= piece;
                if piece > eps {
                    kept.push(piece);
                } else {
                    dropped += piece;
                }
            }
        }
        TruncationRule::TopK(k) => {
            let mut heap: BinaryHeap<Reverse<OrdF64>> = BinaryHeap::new();
            while k > 0 && rem > 0.0 {
                if heap.len() == k && heap.peek().unwrap().0 .0 >= rem {
                    break;
                }
                let piece = rem * sample_beta(1.0, spec.alpha, rng);
                rem -= piece;
                if piece <= 0.0 {
                    break;
                }
                heap.push(Reverse(OrdF64(piece)));
                if heap.len() > k {
                    dropped += heap.pop().unwrap().0 .0;
                }
            }
            kept = heap.into_iter().map(|r| r.0 .0).collect();
        }
    }
    kept.sort_by(|a, b| b.total_cmp(a));
    let atoms = kept.into_iter().enumerate().map(|(i, w)| (ItemId(i as u32), w));
    AtomicMeasure::new(atoms, (rem + dropped).max(0.0)).expect("positive pieces")
}

/// Decreasing jumps by inverting the tail mass at the arrival times of a
/// unit-rate Poisson process.
fn simulate_inverse_levy<R: Rng + ?Sized>(spec: &CrmSpec, rule: TruncationRule, rng: &mut R) -> AtomicMeasure {
    let mut kept = Vec::new();
    let mut arrival = 0.0;
    let cutoff = match rule {
        TruncationRule::TopK(k) => {
            for _ in 0..k {
                arrival += sample_exp(1.0, rng);
                let j = spec.inverse_tail_mass(arrival);
                if j <= 0.0 {
                    break;
                }
                kept.push(j);
            }
            kept.last().copied().unwrap_or(f64::INFINITY)
        }
        TruncationRule::Threshold(eps) => {
            let limit = spec.tail_mass(eps);
            loop {
                arrival += sample_exp(1.0, rng);
                if arrival >= limit {
                    break;
                }
                kept.push(spec.inverse_tail_mass(arrival).max(eps));
            }
            eps
        }
    };
    let residual = if cutoff.is_finite() {
        spec.small_jump_mean(cutoff)
    } else {
        spec.alpha / spec.tau.max(f64::MIN_POSITIVE)
    };
    let atoms = kept.into_iter().enumerate().map(|(i, w)| (ItemId(i as u32), w));
    AtomicMeasure::new(atoms, residual).expect("positive jumps")
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct OrdF64(f64);
impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// A dependent measure drawn given a parent by the Poisson-gamma construction.
#[derive(Clone, Debug, PartialEq)]
pub struct PittWalkerDraw {
    /// Latent counts `u_k` of the parent atoms (zeros included).
    pub counts: BTreeMap<ItemId, u64>,
    /// Latent count of the parent residual.
    pub residual_count: u64,
    /// The child measure. Atoms with zero count are absent.
    pub measure: AtomicMeasure,
}

/// Draw `G_j | G_0`: `u_k ~ Poisson(phi w_0k)`, `w_jk ~ Gamma(u_k, tau + phi)`,
/// and a residual `Gamma(alpha + u_*, tau + phi)` with `u_* ~ Poisson(phi w_0*)`.
pub fn pitt_walker_forward<R: Rng + ?Sized>(
    parent: &AtomicMeasure,
    phi: f64,
    spec: &CrmSpec,
    rng: &mut R,
) -> Result<PittWalkerDraw> {
    if spec.sigma != 0.0 {
        return invalid("the Poisson-gamma construction needs a gamma process");
    }
    if !(phi >= 0.0 && phi.is_finite()) {
        return invalid(format!("phi must be nonnegative, got {phi}"));
    }
    let rate = spec.tau + phi;
    let mut counts = BTreeMap::new();
    let mut atoms = Vec::new();
    for (id, w0) in parent.iter() {
        let u = sample_poisson(phi * w0, rng);
        counts.insert(id, u);
        if u > 0 {
            atoms.push((id, sample_gamma(u as f64, rate, rng)));
        }
    }
    let residual_count = sample_poisson(phi * parent.residual(), rng);
    let residual = sample_gamma(spec.alpha + residual_count as f64, rate, rng);
    let mut measure = AtomicMeasure::new(atoms, residual)?;
    measure.reserve_ids(parent.next_id());
    Ok(PittWalkerDraw { counts, residual_count, measure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gamma_laplace_exponent_closed_form() {
        let g = CrmSpec::gamma(1.5, 2.0).unwrap();
        // 1.5 ln 2
        assert!((g.laplace_exponent(2.0).unwrap() - 1.039_720_770_839_917_9).abs() < 1e-12);
        assert_eq!(g.laplace_exponent(0.0).unwrap(), 0.0);
        assert!((g.tilted_moment(1, 4.0).unwrap() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn generalized_gamma_moment() {
        let g = CrmSpec::generalized_gamma(1.0, 1.0, 0.5).unwrap();
        assert!((g.tilted_moment(1, 1.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn sigma_to_zero_recovers_gamma() {
        let g = CrmSpec::gamma(2.0, 1.5).unwrap();
        let gg = CrmSpec::generalized_gamma(2.0, 1.5, 1e-9).unwrap();
        for &z in &[0.1, 1.0, 10.0] {
            assert!((g.laplace_exponent(z).unwrap() - gg.laplace_exponent(z).unwrap()).abs() < 1e-7);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(CrmSpec::gamma(0.0, 1.0).is_err());
        assert!(CrmSpec::gamma(1.0, -1.0).is_err());
        assert!(CrmSpec::generalized_gamma(1.0, 1.0, 1.0).is_err());
        let g = CrmSpec::gamma(1.0, 1.0).unwrap();
        assert!(g.laplace_exponent(-1.0).is_err());
        assert!(g.tilted_moment(0, 1.0).is_err());
    }

    #[test]
    fn tail_mass_inverts() {
        for spec in [
            CrmSpec::gamma(2.0, 1.0).unwrap(),
            CrmSpec::generalized_gamma(1.0, 1.0, 0.4).unwrap(),
            CrmSpec::generalized_gamma(1.0, 0.0, 0.4).unwrap(),
        ] {
            for &level in &[0.01, 0.5, 3.0, 40.0] {
                let x = spec.inverse_tail_mass(level);
                assert!((spec.tail_mass(x) / level - 1.0).abs() < 1e-8, "{spec:?} {level}");
            }
        }
    }

    #[test]
    fn gamma_tail_mass_is_exponential_integral() {
        // alpha E1(1) with E1(1) = 0.219383934395520
        let g = CrmSpec::gamma(2.0, 1.0).unwrap();
        assert!((g.tail_mass(1.0) - 2.0 * 0.219_383_934_395_520_3).abs() < 1e-10);
    }

    #[test]
    fn exact_gamma_total_is_exact_and_jumps_decrease() {
        let spec = CrmSpec::gamma(3.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = simulate_crm(&spec, TruncationRule::TopK(10), &mut rng).unwrap();
        assert!(m.len() <= 10);
        let w: Vec<f64> = m.iter().map(|x| x.1).collect();
        assert!(w.windows(2).all(|p| p[0] >= p[1]));
        assert!(w.iter().all(|&x| x >= m.residual() || m.len() < 10 || x > 0.0));
    }

    #[test]
    fn pitt_walker_zero_count_atoms_absent() {
        let spec = CrmSpec::gamma(1.0, 1.0).unwrap();
        let parent = AtomicMeasure::new([(ItemId(0), 1e-12), (ItemId(1), 5.0)], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = pitt_walker_forward(&parent, 1.0, &spec, &mut rng).unwrap();
        assert_eq!(d.counts[&ItemId(0)], 0);
        assert!(d.measure.atom(ItemId(0)).is_none());
        assert!(d.measure.next_id() >= ItemId(2));
    }

    #[test]
    fn registry_first_appearance() {
        let mut r = ItemRegistry::new();
        assert_eq!(r.intern("b"), ItemId(0));
        assert_eq!(r.intern("a"), ItemId(1));
        assert_eq!(r.intern("b"), ItemId(0));
        assert_eq!(r.label(ItemId(1)), Some("a"));
    }
}
