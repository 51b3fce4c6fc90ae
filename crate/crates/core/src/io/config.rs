use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crm::CrmSpec;
use crate::error::{Error, Result};
use crate::mixture::{MixtureConfig, MixtureInit, MixturePriors};
use crate::single::{GammaPrior, GenCrmConfig, SingleModelConfig};

/// A seed from the operating system's entropy source.
pub fn fresh_seed() -> u64 {
    rand::rng().random()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Single,
    Mixture,
    GeneralCrm,
}

/// Update order of the mixture sampler: `exact` is the default; `literal`
/// follows the original step list and is kept for comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Exact,
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    /// Initial value, or the fixed value when `alpha_prior` is absent.
    pub alpha: f64,
    pub alpha_prior: Option<GammaPrior>,
    pub tau: f64,
    pub sigma: f64,
    pub phi: f64,
    pub phi_prior: GammaPrior,
    /// Initial random-walk scale of the log-phi proposal.
    pub phi_step: f64,
    pub gamma: f64,
    pub gamma_prior: GammaPrior,
    /// Concentration of the random starting partition of the mixture.
    pub init_concentration: f64,
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: Option<u64>,
    pub strict_tau: bool,
    pub schedule: Schedule,
    /// Store normalised weights with every retained snapshot.
    pub record_weights: bool,
    /// Hold the mixture assignments at these labels.
    pub fixed_partition: Option<Vec<usize>>,
}

impl RunConfig {
    /// Flat priors, `tau = 1`, 20,000 sweeps with the first half discarded.
    pub fn new(model: ModelKind) -> Self {
        Self {
            model,
            alpha: 1.0,
            alpha_prior: (model != ModelKind::GeneralCrm).then(GammaPrior::flat),
            tau: 1.0,
            sigma: if model == ModelKind::GeneralCrm { 0.5 } else { 0.0 },
            phi: 1.0,
            phi_prior: GammaPrior::flat(),
            phi_step: 0.2,
            gamma: 1.0,
            gamma_prior: GammaPrior::flat(),
            init_concentration: 20.0,
            iterations: 20_000,
            burn_in: 10_000,
            thin: 1,
            seed: None,
            strict_tau: true,
            schedule: Schedule::Exact,
            record_weights: model != ModelKind::Mixture,
            fixed_partition: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.iterations <= self.burn_in {
            return bad(format!("iterations ({}) must exceed burn-in ({})", self.iterations, self.burn_in));
        }
        if self.thin == 0 {
            return bad("thinning must be at least 1".into());
        }
        for (name, v) in [("alpha", self.alpha), ("tau", self.tau), ("phi", self.phi), ("gamma", self.gamma), ("phi_step", self.phi_step), ("init_concentration", self.init_concentration)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        for (name, p) in [("alpha", self.alpha_prior), ("phi", Some(self.phi_prior)), ("gamma", Some(self.gamma_prior))] {
            if let Some(p) = p {
                GammaPrior::new(p.a, p.b).map_err(|e| Error::Config(format!("{name} prior: {e}")))?;
            }
        }
        match self.model {
            ModelKind::GeneralCrm => {
                if self.alpha_prior.is_some() {
                    return bad("alpha is held fixed for the generalised gamma model".into());
                }
                self.crm_spec()?;
            }
            ModelKind::Single if self.sigma != 0.0 => return bad("the single model uses the gamma process; sigma must be 0".into()),
            ModelKind::Mixture => {
                if self.sigma != 0.0 {
                    return bad("the mixture uses gamma processes; sigma must be 0".into());
                }
                self.mixture_config().validate()?;
            }
            _ => {}
        }
        if self.fixed_partition.is_some() && self.model != ModelKind::Mixture {
            return bad("a fixed partition only applies to the mixture".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// The seed, drawing and recording a fresh one if absent.
    pub fn resolve_seed(&mut self) -> u64 {
        *self.seed.get_or_insert_with(fresh_seed)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn crm_spec(&self) -> Result<CrmSpec> {
        let spec = if self.model == ModelKind::GeneralCrm {
            CrmSpec::generalized_gamma(self.alpha, self.tau, self.sigma)
        } else {
            CrmSpec::gamma(self.alpha, self.tau)
        };
        spec.map_err(|e| Error::Config(e.to_string()))
    }

    pub fn single_config(&self) -> SingleModelConfig {
        SingleModelConfig { tau: self.tau, alpha_prior: self.alpha_prior }
    }

    pub fn gen_crm_config(&self) -> Result<GenCrmConfig> {
        Ok(GenCrmConfig::new(self.crm_spec()?, self.burn_in))
    }

    pub fn mixture_config(&self) -> MixtureConfig {
        let mut c = match self.schedule {
            Schedule::Exact => MixtureConfig::exact(self.tau),
            Schedule::Literal => MixtureConfig::literal(self.tau),
        };
        c.strict_tau = self.strict_tau;
        c.priors = MixturePriors {
            alpha: self.alpha_prior.unwrap_or(GammaPrior::flat()),
            gamma: self.gamma_prior,
            phi: self.phi_prior,
            phi_step: self.phi_step,
        };
        c.update_alpha = self.alpha_prior.is_some();
        c.fix_assignments = self.fixed_partition.is_some();
        c.update_gamma = !c.fix_assignments;
        c.adapt_until = self.burn_in;
        c
    }

    pub fn mixture_init(&self) -> MixtureInit {
        MixtureInit { alpha: self.alpha, phi: self.phi, gamma: self.gamma, seed_concentration: self.init_concentration }
    }
}
