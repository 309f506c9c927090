//! Model-poisoning attacks.
//!
//! [`xfed`] is the non-collusive attack: each compromised client perturbs its
//! own benign update by a magnitude estimated only from the global models it
//! has received. [`baselines`] holds the collusive and fake-client attacks it
//! is compared against.
//!
//! Vector-valued crafters work on update deltas (`phi - theta`); the
//! simulator converts to and from full models.

pub mod baselines;
mod history;
pub mod xfed;

use serde::{Deserialize, Serialize};

pub use crate::stats::{mad_outlier_test, OutlierTestConfig};
pub use history::{robust_scale, DeltaHistory, RobustScaleResult};
pub use xfed::{xfed_craft, XfedConfig};

use crate::error::{FedError, Result};
use crate::param::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    InverseUnitVector,
    InverseSign,
}

/// Outcome of a crafter that may degrade to submitting the benign update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CraftStatus {
    Applied,
    /// Not enough information this round; the benign update was returned.
    NoOp,
    /// The statistics were degenerate (e.g. zero spread).
    Degenerate,
    /// A search did not reach its goal; the best effort is returned.
    SearchFailed,
}

/// `-v / ||v||`.
pub fn perturbation_uv(benign: &ParamVector) -> Result<ParamVector> {
    let n = benign.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(FedError::Attack("inverse unit vector of a zero update".into()));
    }
    Ok(benign.scale(-1.0 / n))
}

/// `-sign(v) / ||sign(v)||`.
pub fn perturbation_sgn(benign: &ParamVector) -> Result<ParamVector> {
    let signs: ParamVector = benign
        .iter()
        .map(|&x| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    let n = signs.norm();
    if n == 0.0 {
        return Err(FedError::Attack("inverse sign of an all-zero update".into()));
    }
    Ok(signs.scale(-1.0 / n))
}

pub fn perturbation(kind: PerturbationKind, benign: &ParamVector) -> Result<ParamVector> {
    match kind {
        PerturbationKind::InverseUnitVector => perturbation_uv(benign),
        PerturbationKind::InverseSign => perturbation_sgn(benign),
    }
}
