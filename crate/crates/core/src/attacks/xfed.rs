//! The non-collusive XFED attack.
//!
//! An attacker sees nothing but its own data and the sequence of global
//! models. From the last `omega` global deltas it takes the coordinate-wise
//! median `med` and MAD `mad`, sets `mu = ||med + lambda * mad||`, and submits
//! `benign + mu * psi (+ jitter)` with `psi` a unit vector opposing its own
//! benign update.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{perturbation, robust_scale, CraftStatus, DeltaHistory, PerturbationKind};
use crate::error::{FedError, Result};
use crate::param::ParamVector;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XfedConfig {
    pub lambda: f64,
    pub perturbation: PerturbationKind,
    /// Jitter scale; each coordinate gets truncated Gaussian noise with
    /// standard deviation `jitter * mu / sqrt(d)`, cut at two deviations.
    pub jitter: f64,
    pub omega: usize,
}

impl Default for XfedConfig {
    fn default() -> Self {
        XfedConfig {
            lambda: 4.0,
            perturbation: PerturbationKind::InverseUnitVector,
            jitter: 0.0,
            omega: 8,
        }
    }
}

impl XfedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(FedError::config("attack.xfed.lambda", "must be a non-negative number"));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(FedError::config("attack.xfed.jitter", "must be a non-negative number"));
        }
        if self.omega == 0 {
            return Err(FedError::config("attack.xfed.omega", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct XfedUpdate {
    pub update: ParamVector,
    /// Perturbation magnitude used this round (0 for a no-op).
    pub mu: f64,
    pub status: CraftStatus,
}

/// Crafts one attacker's malicious update from its own benign update and
/// delta history. An empty history (first round) returns the benign update.
pub fn xfed_craft(
    benign: &ParamVector,
    hist: &DeltaHistory,
    cfg: &XfedConfig,
    rng: &mut RngStream,
) -> Result<XfedUpdate> {
    let Some(scale) = robust_scale(hist, cfg.lambda) else {
        return Ok(XfedUpdate {
            update: benign.clone(),
            mu: 0.0,
            status: CraftStatus::NoOp,
        });
    };
    if scale.med.len() != benign.len() {
        return Err(FedError::Attack("history and update dimensions differ".into()));
    }
    let psi = perturbation(cfg.perturbation, benign)?;
    let mut crafted = benign.add_scaled(scale.mu, &psi);
    if cfg.jitter > 0.0 && scale.mu > 0.0 {
        let sigma = cfg.jitter * scale.mu / (benign.len() as f64).sqrt();
        for v in crafted.iter_mut() {
            *v += sigma * truncated_normal(rng, 2.0);
        }
    }
    Ok(XfedUpdate {
        update: crafted,
        mu: scale.mu,
        status: CraftStatus::Applied,
    })
}

/// Standard normal draw rejected outside `±bound`.
fn truncated_normal(rng: &mut RngStream, bound: f64) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= bound {
            return z;
        }
    }
}
