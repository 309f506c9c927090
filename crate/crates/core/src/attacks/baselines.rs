//! Baseline attacks: LIE, Fang (Krum and trimmed-mean variants), Min-Max,
//! Min-Sum, MPAF and PoisonedFL.
//!
//! LIE, Fang, Min-Max and Min-Sum are collusive: they pool the benign updates
//! of every compromised client and fan one result out. MPAF and PoisonedFL
//! drive fake clients that never train.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{perturbation, CraftStatus, DeltaHistory, PerturbationKind};
use crate::aggregation::{multi_krum_select, ClientUpdate};
use crate::error::{FedError, Result};
use crate::param::{mean_of, squared_distance, ParamVector};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineAttackConfig {
    pub lie_z: f64,
    /// Min-Max / Min-Sum direction.
    pub minmax_perturbation: PerturbationKind,
    /// Binary-search tolerance on the Min-Max / Min-Sum scale.
    pub search_tolerance: f64,
    pub mpaf_lambda: f64,
}

impl Default for BaselineAttackConfig {
    fn default() -> Self {
        BaselineAttackConfig {
            lie_z: 1.0,
            minmax_perturbation: PerturbationKind::InverseUnitVector,
            search_tolerance: 1e-3,
            mpaf_lambda: 1e6,
        }
    }
}

impl BaselineAttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lie_z) {
            return Err(FedError::config("attack.baseline.lie_z", "must lie in [0, 1]"));
        }
        if !(self.search_tolerance.is_finite() && self.search_tolerance > 0.0) {
            return Err(FedError::config("attack.baseline.search_tolerance", "must be positive"));
        }
        if !(self.mpaf_lambda > 0.0 && self.mpaf_lambda.is_finite()) {
            return Err(FedError::config("attack.baseline.mpaf_lambda", "must be positive"));
        }
        Ok(())
    }
}

/// Per-coordinate mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordStats {
    pub mean: ParamVector,
    pub std: ParamVector,
}

pub fn coord_stats(updates: &[ParamVector]) -> Result<CoordStats> {
    let first = updates
        .first()
        .ok_or_else(|| FedError::Attack("no updates to summarize".into()))?;
    let d = first.len();
    if updates.iter().any(|u| u.len() != d) {
        return Err(FedError::Attack("updates differ in length".into()));
    }
    let mean = mean_of(updates.iter().map(|u| u.as_slice()), d);
    let n = updates.len() as f64;
    let std = (0..d)
        .map(|j| {
            let var = updates.iter().map(|u| (u[j] - mean[j]).powi(2)).sum::<f64>() / n;
            var.sqrt()
        })
        .collect();
    Ok(CoordStats { mean, std })
}

/// A Little Is Enough: `mean - z * std` per coordinate, shared by all attackers.
pub fn lie_craft(updates: &[ParamVector], z: f64) -> Result<(ParamVector, CraftStatus)> {
    let stats = coord_stats(updates)?;
    if updates.len() < 2 {
        return Ok((updates[0].clone(), CraftStatus::Degenerate));
    }
    Ok((stats.mean.add_scaled(-z, &stats.std), CraftStatus::Applied))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

const FANG_KRUM_START: f64 = 10.0;
const FANG_KRUM_STOP: f64 = 1e-5;
const FANG_KRUM_NOISE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct FangKrumOutcome {
    pub updates: Vec<ParamVector>,
    pub lambda: f64,
    pub status: CraftStatus,
}

/// Places `len(benign)` crafted updates: one at `mean - lambda * s` with `s`
/// the sign of the benign mean, the rest within `1e-4` of it. `lambda` halves
/// from 10 until Krum (run on benign plus crafted with `assumed_c`) picks a
/// crafted update, or drops below `1e-5`.
pub fn fang_krum_craft(benign: &[ParamVector], assumed_c: usize, rng: &mut RngStream) -> Result<FangKrumOutcome> {
    let c = benign.len();
    if c == 0 {
        return Ok(FangKrumOutcome {
            updates: Vec::new(),
            lambda: 0.0,
            status: CraftStatus::NoOp,
        });
    }
    let stats = coord_stats(benign)?;
    let direction: ParamVector = stats.mean.iter().map(|&m| sign(m)).collect();
    let d = direction.len();
    let offsets: Vec<ParamVector> = (1..c)
        .map(|_| (0..d).map(|_| rng.random_range(-FANG_KRUM_NOISE..=FANG_KRUM_NOISE)).collect())
        .collect();
    let build = |lambda: f64| -> Vec<ParamVector> {
        let lead = stats.mean.add_scaled(-lambda, &direction);
        let mut out = vec![lead.clone()];
        out.extend(offsets.iter().map(|o| lead.add(o)));
        out
    };

    let total = 2 * c;
    let oracle_c = assumed_c.min(total.saturating_sub(3));
    let mut lambda = FANG_KRUM_START;
    let mut last = lambda;
    while lambda >= FANG_KRUM_STOP {
        let crafted = build(lambda);
        if total >= 3 {
            let pool: Vec<ClientUpdate> = benign
                .iter()
                .chain(&crafted)
                .enumerate()
                .map(|(i, v)| ClientUpdate::new(i, v.clone()))
                .collect();
            let chosen = multi_krum_select(&pool, oracle_c, 1)?;
            if chosen[0] >= c {
                return Ok(FangKrumOutcome {
                    updates: crafted,
                    lambda,
                    status: CraftStatus::Applied,
                });
            }
        }
        last = lambda;
        lambda /= 2.0;
    }
    Ok(FangKrumOutcome {
        updates: build(last),
        lambda: last,
        status: CraftStatus::SearchFailed,
    })
}

/// Sampling interval for one coordinate. `direction` is the estimated sign of
/// the benign change; the attack samples on the opposite side.
pub fn fang_trmean_interval(mean: f64, std: f64, direction: f64) -> (f64, f64) {
    if direction < 0.0 {
        (mean + 3.0 * std, mean + 4.0 * std)
    } else {
        (mean - 4.0 * std, mean - 3.0 * std)
    }
}

/// Fang trimmed-mean attack: every attacker independently samples each
/// coordinate from the interval opposite the benign mean's sign.
pub fn fang_trmean_craft(benign: &[ParamVector], rng: &mut RngStream) -> Result<Vec<ParamVector>> {
    if benign.len() < 2 {
        return Err(FedError::Attack("Fang trimmed-mean needs at least two compromised updates".into()));
    }
    let stats = coord_stats(benign)?;
    Ok((0..benign.len())
        .map(|_| {
            stats
                .mean
                .iter()
                .zip(stats.std.iter())
                .map(|(&m, &s)| {
                    let (lo, hi) = fang_trmean_interval(m, s, sign(m));
                    if hi > lo {
                        rng.random_range(lo..=hi)
                    } else {
                        lo
                    }
                })
                .collect()
        })
        .collect())
}

/// Result of a Min-Max / Min-Sum search.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledCraft {
    pub update: ParamVector,
    pub gamma: f64,
    pub status: CraftStatus,
}

const GAMMA_MAX: f64 = 50.0;

fn scaled_search(
    benign: &[ParamVector],
    kind: PerturbationKind,
    tol: f64,
    feasible: impl Fn(&ParamVector) -> bool,
) -> Result<ScaledCraft> {
    if benign.len() < 2 {
        return Err(FedError::Attack("need at least two compromised updates".into()));
    }
    let base = coord_stats(benign)?.mean;
    if !feasible(&base) {
        return Ok(ScaledCraft {
            update: base,
            gamma: 0.0,
            status: CraftStatus::NoOp,
        });
    }
    let psi = match perturbation(kind, &base) {
        Ok(p) => p,
        Err(_) => {
            return Ok(ScaledCraft {
                update: base,
                gamma: 0.0,
                status: CraftStatus::Degenerate,
            })
        }
    };
    let (mut lo, mut hi) = (0.0, GAMMA_MAX);
    if feasible(&base.add_scaled(hi, &psi)) {
        lo = hi;
    } else {
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if feasible(&base.add_scaled(mid, &psi)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    Ok(ScaledCraft {
        update: base.add_scaled(lo, &psi),
        gamma: lo,
        status: CraftStatus::Applied,
    })
}

/// Largest `gamma` with `max_j ||mean + gamma psi - b_j|| <= max_{k,l} ||b_k - b_l||`.
pub fn minmax_craft(benign: &[ParamVector], kind: PerturbationKind, tol: f64) -> Result<ScaledCraft> {
    let mut bound = 0.0f64;
    for (i, a) in benign.iter().enumerate() {
        for b in &benign[i + 1..] {
            bound = bound.max(squared_distance(a, b));
        }
    }
    scaled_search(benign, kind, tol, |cand| {
        benign.iter().all(|b| squared_distance(cand, b) <= bound)
    })
}

/// Largest `gamma` with `sum_j ||mean + gamma psi - b_j||^2 <= max_i sum_j ||b_i - b_j||^2`.
pub fn minsum_craft(benign: &[ParamVector], kind: PerturbationKind, tol: f64) -> Result<ScaledCraft> {
    let bound = benign
        .iter()
        .map(|a| benign.iter().map(|b| squared_distance(a, b)).sum::<f64>())
        .fold(0.0f64, f64::max);
    scaled_search(benign, kind, tol, |cand| {
        benign.iter().map(|b| squared_distance(cand, b)).sum::<f64>() <= bound
    })
}

/// MPAF: `theta + lambda * (base - theta)`, identical for every fake client.
pub fn mpaf_craft(theta: &ParamVector, base: &ParamVector, lambda: f64) -> ParamVector {
    theta.add_scaled(lambda, &base.sub(theta))
}

/// Fixed unit direction drawn once per experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct PoisonedFlDirection(ParamVector);

impl PoisonedFlDirection {
    pub fn random(d: usize, rng: &mut RngStream) -> Self {
        let signs: ParamVector = (0..d)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let n = signs.norm();
        PoisonedFlDirection(signs.scale(1.0 / n))
    }

    pub fn unit(&self) -> &ParamVector {
        &self.0
    }
}

/// PoisonedFL: `theta + m * k_hat`, where `m` is the norm of the latest
/// global delta (or `0.01 * ||theta||` before any delta is known).
pub fn poisonedfl_craft(theta: &ParamVector, direction: &PoisonedFlDirection, hist: &DeltaHistory) -> ParamVector {
    let magnitude = match hist.latest() {
        Some(delta) => delta.norm(),
        None => 1e-2 * theta.norm(),
    };
    theta.add_scaled(magnitude, direction.unit())
}
