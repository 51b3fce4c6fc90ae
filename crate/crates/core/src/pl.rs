//! Plackett-Luce top-m rankings under an atomic measure, the latent
//! exponential augmentation and the resulting joint and marginal densities.

use std::collections::HashSet;

use rand::Rng;

use crate::crm::{AtomicMeasure, CrmSpec, ItemId, ItemRegistry};
use crate::dist::sample_beta;
use crate::error::{invalid, Error, Result};

/// Read access to item masses. `None` means the item is unknown to the
/// measure, which is an error for likelihood evaluation.
pub trait MassView {
    fn mass(&self, item: ItemId) -> Option<f64>;
    fn total(&self) -> f64;
}

impl MassView for AtomicMeasure {
    fn mass(&self, item: ItemId) -> Option<f64> {
        self.atom(item)
    }
    fn total(&self) -> f64 {
        AtomicMeasure::total(self)
    }
}

/// Dense per-item weights plus a residual. Zero weights are allowed.
#[derive(Clone, Copy, Debug)]
pub struct DenseMeasure<'a> {
    weights: &'a [f64],
    total: f64,
}

impl<'a> DenseMeasure<'a> {
    pub fn new(weights: &'a [f64], residual: f64) -> Self {
        Self { weights, total: weights.iter().sum::<f64>() + residual }
    }
}

impl MassView for DenseMeasure<'_> {
    fn mass(&self, item: ItemId) -> Option<f64> {
        self.weights.get(item.index()).copied()
    }
    fn total(&self) -> f64 {
        self.total
    }
}

/// Top-m ranking: distinct items, best first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PartialRanking(Vec<ItemId>);

impl PartialRanking {
    pub fn new(items: Vec<ItemId>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidRanking("ranking is empty".into()));
        }
        let mut seen = HashSet::with_capacity(items.len());
        for &it in &items {
            if !seen.insert(it) {
                return Err(Error::InvalidRanking(format!("item {it} appears twice")));
            }
        }
        Ok(Self(items))
    }

    pub fn items(&self) -> &[ItemId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn position_of(&self, item: ItemId) -> Option<usize> {
        self.0.iter().position(|&x| x == item)
    }
}

/// Rankings over a registry in which every item is ranked at least once.
#[derive(Clone, Debug, PartialEq)]
pub struct RankingDataset {
    rankings: Vec<PartialRanking>,
    registry: ItemRegistry,
    list_labels: Vec<String>,
    counts: Vec<u32>,
}

impl RankingDataset {
    pub fn new(rankings: Vec<PartialRanking>, registry: ItemRegistry) -> Result<Self> {
        let labels = (0..rankings.len()).map(|i| i.to_string()).collect();
        Self::with_list_labels(rankings, registry, labels)
    }

    pub fn with_list_labels(
        rankings: Vec<PartialRanking>,
        registry: ItemRegistry,
        list_labels: Vec<String>,
    ) -> Result<Self> {
        if list_labels.len() != rankings.len() {
            return invalid("one label per ranking is required");
        }
        let k = registry.len();
        let mut counts = vec![0u32; k];
        for r in &rankings {
            for &it in r.items() {
                if it.index() >= k {
                    return Err(Error::UnknownItem(it));
                }
                counts[it.index()] += 1;
            }
        }
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidRanking(format!(
                "item {:?} is registered but never ranked",
                registry.label(ItemId(i as u32)).unwrap_or("?")
            )));
        }
        Ok(Self { rankings, registry, list_labels, counts })
    }

    /// Build from label lists, registering items in first-appearance order.
    pub fn from_labels<S: AsRef<str>>(lists: &[Vec<S>]) -> Result<Self> {
        let mut registry = ItemRegistry::new();
        let mut rankings = Vec::with_capacity(lists.len());
        for l in lists {
            let ids = l.iter().map(|s| registry.intern(s.as_ref())).collect();
            rankings.push(PartialRanking::new(ids)?);
        }
        Self::new(rankings, registry)
    }

    pub fn rankings(&self) -> &[PartialRanking] {
        &self.rankings
    }
    pub fn ranking(&self, l: usize) -> &PartialRanking {
        &self.rankings[l]
    }
    pub fn registry(&self) -> &ItemRegistry {
        &self.registry
    }
    pub fn list_labels(&self) -> &[String] {
        &self.list_labels
    }
    /// Number of times each item is ranked.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }
    pub fn num_items(&self) -> usize {
        self.registry.len()
    }
    pub fn num_lists(&self) -> usize {
        self.rankings.len()
    }
    pub fn lengths(&self) -> Vec<usize> {
        self.rankings.iter().map(PartialRanking::len).collect()
    }
    pub fn num_positions(&self) -> usize {
        self.rankings.iter().map(PartialRanking::len).sum()
    }
}

/// Latent exponential variables, one per ranked position.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentZ {
    values: Vec<f64>,
    offsets: Vec<usize>,
}

impl LatentZ {
    pub fn filled(lengths: &[usize], value: f64) -> Self {
        let mut offsets = Vec::with_capacity(lengths.len() + 1);
        offsets.push(0);
        for &m in lengths {
            offsets.push(offsets.last().unwrap() + m);
        }
        Self { values: vec![value; *offsets.last().unwrap()], offsets }
    }

    pub fn from_lists(lists: &[Vec<f64>]) -> Result<Self> {
        let lengths: Vec<usize> = lists.iter().map(Vec::len).collect();
        let mut z = Self::filled(&lengths, 0.0);
        for (l, v) in lists.iter().enumerate() {
            if v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return invalid("latent variables must be positive and finite");
            }
            z.list_mut(l).copy_from_slice(v);
        }
        Ok(z)
    }

    pub fn num_lists(&self) -> usize {
        self.offsets.len() - 1
    }
    pub fn list(&self, l: usize) -> &[f64] {
        &self.values[self.offsets[l]..self.offsets[l + 1]]
    }
    pub fn list_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.values[self.offsets[l]..self.offsets[l + 1]]
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
    pub fn list_sum(&self, l: usize) -> f64 {
        self.list(l).iter().sum()
    }

    /// Mutable per-list slices, for parallel updates.
    pub fn lists_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.num_lists());
        let mut rest: &mut [f64] = &mut self.values;
        for w in self.offsets.windows(2) {
            let (head, tail) = rest.split_at_mut(w[1] - w[0]);
            out.push(head);
            rest = tail;
        }
        out
    }

    fn matches(&self, data: &RankingDataset) -> Result<()> {
        if self.num_lists() != data.num_lists()
            || (0..self.num_lists()).any(|l| self.list(l).len() != data.ranking(l).len())
        {
            return Err(Error::StateMismatch("latent variables do not match the rankings".into()));
        }
        Ok(())
    }
}

/// 1 if `item` is still available at 1-based `position`, i.e. not ranked
/// strictly before it.
pub fn occurrence_indicator(ranking: &PartialRanking, position: usize, item: ItemId) -> u8 {
    let before = position.saturating_sub(1).min(ranking.len());
    u8::from(!ranking.items()[..before].contains(&item))
}

/// Denominators `G(X) - sum_{j<i} w_{rho_j}` for every position, computed as
/// suffix sums to avoid cancellation.
fn denominators<M: MassView>(measure: &M, ranking: &PartialRanking) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut w = Vec::with_capacity(ranking.len());
    for &it in ranking.items() {
        w.push(measure.mass(it).ok_or(Error::UnknownItem(it))?);
    }
    let rest = (measure.total() - w.iter().sum::<f64>()).max(0.0);
    let mut den = vec![0.0; w.len() + 1];
    den[w.len()] = rest;
    for i in (0..w.len()).rev() {
        den[i] = den[i + 1] + w[i];
    }
    Ok((w, den))
}

/// Log-probability of a top-m ranking.
pub fn pl_log_probability<M: MassView>(measure: &M, ranking: &PartialRanking) -> Result<f64> {
    let (w, den) = denominators(measure, ranking)?;
    let mut lp = 0.0;
    for i in 0..w.len() {
        if den[i] <= 0.0 {
            return Err(Error::ZeroDenominator { position: i + 1 });
        }
        lp += w[i].ln() - den[i].ln();
    }
    Ok(lp)
}

/// Rate of the exponential latent variable at 1-based position `i`;
/// `i = m + 1` gives the rate for a hypothetical extra position.
pub fn latent_z_rate<M: MassView>(measure: &M, ranking: &PartialRanking, i: usize) -> Result<f64> {
    if i == 0 || i > ranking.len() + 1 {
        return invalid(format!("position {i} outside 1..={}", ranking.len() + 1));
    }
    let (_, den) = denominators(measure, ranking)?;
    let r = den[i - 1];
    if r <= 0.0 {
        return Err(Error::ZeroDenominator { position: i });
    }
    Ok(r)
}

/// Rates for every position of a ranking under dense weights.
pub(crate) fn position_rates(weights: &[f64], rest: f64, items: &[ItemId], out: &mut [f64]) {
    let mut acc = rest;
    for i in (0..items.len()).rev() {
        acc += weights[items[i].index()];
        out[i] = acc;
    }
}

/// `sum Z` and, for every item, `s_k = sum_{l,i} delta_{lik} Z_{li}`, over
/// the lists selected by `include`.
pub fn exposures(data: &RankingDataset, z: &LatentZ, include: impl Fn(usize) -> bool) -> (f64, Vec<f64>) {
    let mut total = 0.0;
    let mut removed = vec![0.0; data.num_items()];
    for l in 0..data.num_lists() {
        if !include(l) {
            continue;
        }
        let zl = z.list(l);
        let items = data.ranking(l).items();
        let mut suffix = 0.0;
        for p in (0..items.len()).rev() {
            removed[items[p].index()] += suffix;
            suffix += zl[p];
        }
        total += suffix;
    }
    let s = removed.into_iter().map(|r| (total - r).max(0.0)).collect();
    (total, s)
}

/// Log joint density of the rankings and latent variables given the measure,
/// excluding the base-measure factors.
pub fn joint_log_density<M: MassView>(data: &RankingDataset, z: &LatentZ, measure: &M) -> Result<f64> {
    z.matches(data)?;
    let mut lp = 0.0;
    for (l, r) in data.rankings().iter().enumerate() {
        let (w, den) = denominators(measure, r)?;
        for (i, &zi) in z.list(l).iter().enumerate() {
            lp += w[i].ln() - zi * den[i];
        }
    }
    Ok(lp)
}

/// Log density of rankings and latent variables with the measure integrated
/// out, excluding the base-measure factors.
pub fn marginal_log_likelihood(data: &RankingDataset, z: &LatentZ, spec: &CrmSpec) -> Result<f64> {
    z.matches(data)?;
    let (total, s) = exposures(data, z, |_| true);
    let mut lp = -spec.laplace_exponent(total)?;
    for (k, &n) in data.counts().iter().enumerate() {
        lp += spec.ln_tilted_moment(n, s[k])?;
    }
    Ok(lp)
}

/// How the generative race turns a selected residual into a new atom.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ResidualSplit {
    /// Selecting the residual is an error.
    Forbid,
    /// The residual is a gamma process with this `alpha`; the new atom takes
    /// a Beta(1, alpha) share of it.
    Stick { alpha: f64 },
    /// The residual gathers jumps of `spec` below `cutoff`; the new atom's
    /// mass has density proportional to `w rho(w)` below that cutoff.
    TruncatedTail { spec: CrmSpec, cutoff: f64 },
}

impl ResidualSplit {
    fn draw<R: Rng + ?Sized>(&self, residual: f64, rng: &mut R) -> Result<f64> {
        match *self {
            ResidualSplit::Forbid => Err(Error::ResidualSelected),
            ResidualSplit::Stick { alpha } => Ok(residual * sample_beta(1.0, alpha, rng)),
            ResidualSplit::TruncatedTail { spec, cutoff } => {
                let c = cutoff.min(residual);
                let expo = 1.0 / (1.0 - spec.sigma());
                for _ in 0..1_000_000 {
                    let w = c * rng.random::<f64>().powf(expo);
                    if w > 0.0 && rng.random::<f64>() < (-spec.tau() * w).exp() {
                        return Ok(w);
                    }
                }
                Ok(c * rng.random::<f64>().powf(expo))
            }
        }
    }
}

/// Draw a top-m ranking by sequential size-biased selection without
/// replacement. A selected residual is split into a fresh atom, which is
/// added to `measure`.
pub fn sample_top_m<R: Rng + ?Sized>(
    measure: &mut AtomicMeasure,
    m: usize,
    split: &ResidualSplit,
    rng: &mut R,
) -> Result<PartialRanking> {
    if m == 0 {
        return invalid("ranking length must be positive");
    }
    let mut chosen: Vec<ItemId> = Vec::with_capacity(m);
    let mut chosen_mass = 0.0;
    for _ in 0..m {
        let avail = (measure.total() - chosen_mass).max(0.0);
        if avail <= 0.0 {
            return Err(Error::ZeroDenominator { position: chosen.len() + 1 });
        }
        let mut target = rng.random::<f64>() * avail;
        let mut pick = None;
        for (id, w) in measure.iter() {
            if chosen.contains(&id) {
                continue;
            }
            if target < w {
                pick = Some((id, w));
                break;
            }
            target -= w;
        }
        let (id, w) = match pick {
            Some(p) => p,
            None if measure.residual() > 0.0 => {
                let mass = split.draw(measure.residual(), rng)?;
                (measure.split_residual(mass)?, mass)
            }
            None => {
                // rounding left the target past the last atom
                let last = measure.iter().filter(|(id, _)| !chosen.contains(id)).last();
                last.ok_or(Error::ZeroDenominator { position: chosen.len() + 1 })?
            }
        };
        chosen.push(id);
        chosen_mass += w;
    }
    PartialRanking::new(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(ws: &[f64], residual: f64) -> AtomicMeasure {
        AtomicMeasure::new(ws.iter().enumerate().map(|(i, &w)| (ItemId(i as u32), w)), residual).unwrap()
    }

    fn r(ids: &[u32]) -> PartialRanking {
        PartialRanking::new(ids.iter().map(|&i| ItemId(i)).collect()).unwrap()
    }

    #[test]
    fn two_item_probability() {
        let m = g(&[2.0, 1.0], 1.0);
        let lp = pl_log_probability(&m, &r(&[0, 1])).unwrap();
        assert!((lp.exp() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rates_including_hypothetical_position() {
        let m = g(&[2.0, 1.0], 1.0);
        let rk = r(&[0, 1]);
        assert_eq!(latent_z_rate(&m, &rk, 1).unwrap(), 4.0);
        assert_eq!(latent_z_rate(&m, &rk, 2).unwrap(), 2.0);
        assert_eq!(latent_z_rate(&m, &rk, 3).unwrap(), 1.0);
        assert!(latent_z_rate(&m, &rk, 4).is_err());
    }

    #[test]
    fn indicator() {
        let rk = r(&[1, 2]);
        assert_eq!(occurrence_indicator(&rk, 1, ItemId(1)), 1);
        assert_eq!(occurrence_indicator(&rk, 2, ItemId(1)), 0);
        assert_eq!(occurrence_indicator(&rk, 2, ItemId(2)), 1);
        assert_eq!(occurrence_indicator(&rk, 2, ItemId(0)), 1);
    }

    #[test]
    fn errors() {
        let m = g(&[1.0, 1.0], 0.0);
        assert!(matches!(pl_log_probability(&m, &r(&[5])), Err(Error::UnknownItem(_))));
        let dense = [1.0, 0.0];
        let d = DenseMeasure::new(&dense, 0.0);
        assert!(matches!(pl_log_probability(&d, &r(&[0, 1])), Err(Error::ZeroDenominator { position: 2 })));
        assert!(PartialRanking::new(vec![ItemId(0), ItemId(0)]).is_err());
        assert!(PartialRanking::new(vec![]).is_err());
    }

    #[test]
    fn exposure_counts_prefixes() {
        let data = RankingDataset::from_labels(&[vec!["a", "b"], vec!["b"]]).unwrap();
        let z = LatentZ::from_lists(&[vec![1.0, 2.0], vec![4.0]]).unwrap();
        let (t, s) = exposures(&data, &z, |_| true);
        assert_eq!(t, 7.0);
        // a: available at (0,0) and in list 1; b: everywhere
        assert_eq!(s, vec![5.0, 7.0]);
    }

    #[test]
    fn forbid_split_errors_on_residual() {
        let mut m = g(&[], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sample_top_m(&mut m, 1, &ResidualSplit::Forbid, &mut rng), Err(Error::ResidualSelected)));
        let rk = sample_top_m(&mut m, 2, &ResidualSplit::Stick { alpha: 1.0 }, &mut rng).unwrap();
        assert_eq!(rk.len(), 2);
        assert_eq!(m.len(), 2);
    }
}
