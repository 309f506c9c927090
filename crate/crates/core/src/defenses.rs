//! Stateful defenses: FLTrust, FLAME, FoolsGold and FreqFed.
//!
//! Each takes the current global model `theta` and the submitted local
//! models, and returns the next global model.

use std::collections::BTreeMap;

use rustdct::DctPlanner;
use serde::{Deserialize, Serialize};

use crate::aggregation::{coord_median, Aggregate, ClientUpdate};
use crate::cluster::{majority, two_means};
use crate::data::Dataset;
use crate::error::{FedError, Result};
use crate::model::{local_update, ModelSpec, TrainingConfig};
use crate::param::{cosine, mean_of, ParamVector};
use crate::rng::RngStream;
use crate::stats::{mad_outlier_flags, OutlierTestConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefenseKind {
    Fltrust,
    Flame,
    Foolsgold,
    Freqfed,
}

/// Server-side root data for FLTrust.
#[derive(Debug, Clone)]
pub struct RootContext {
    pub data: Dataset,
    pub spec: ModelSpec,
    pub training: TrainingConfig,
}

/// Mutable per-experiment defense state. Only the server writes to it.
#[derive(Debug, Clone)]
pub struct DefenseState {
    kind: DefenseKind,
    root: Option<RootContext>,
    outlier: OutlierTestConfig,
    freq_cutoff: f64,
    /// FoolsGold: running sum of each client's deltas.
    history: BTreeMap<usize, ParamVector>,
    /// FoolsGold: weights from the most recent round, by client id.
    last_weights: Vec<(usize, f64)>,
}

impl DefenseState {
    fn empty(kind: DefenseKind) -> Self {
        DefenseState {
            kind,
            root: None,
            outlier: OutlierTestConfig::default(),
            freq_cutoff: 0.25,
            history: BTreeMap::new(),
            last_weights: Vec::new(),
        }
    }

    pub fn fltrust(root: RootContext) -> Result<Self> {
        if root.data.is_empty() {
            return Err(FedError::config("server.root_size", "FLTrust needs a nonempty root dataset"));
        }
        Ok(DefenseState {
            root: Some(root),
            ..Self::empty(DefenseKind::Fltrust)
        })
    }

    pub fn flame(outlier: OutlierTestConfig) -> Self {
        DefenseState {
            outlier,
            ..Self::empty(DefenseKind::Flame)
        }
    }

    pub fn foolsgold() -> Self {
        Self::empty(DefenseKind::Foolsgold)
    }

    /// `cutoff` is the kept fraction of low-frequency coefficients.
    pub fn freqfed(cutoff: f64) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff <= 1.0) {
            return Err(FedError::config("server.freq_cutoff", "must lie in (0, 1]"));
        }
        Ok(DefenseState {
            freq_cutoff: cutoff,
            ..Self::empty(DefenseKind::Freqfed)
        })
    }

    pub fn kind(&self) -> DefenseKind {
        self.kind
    }

    /// FoolsGold weights assigned in the latest round.
    pub fn foolsgold_weights(&self) -> &[(usize, f64)] {
        &self.last_weights
    }

    pub fn aggregate(&mut self, theta: &ParamVector, updates: &[ClientUpdate], rng: &mut RngStream) -> Result<Aggregate> {
        match self.kind {
            DefenseKind::Fltrust => fltrust_aggregate(self, theta, updates, rng),
            DefenseKind::Flame => flame_aggregate(self, theta, updates),
            DefenseKind::Foolsgold => foolsgold_aggregate(self, theta, updates),
            DefenseKind::Freqfed => freqfed_aggregate(self, theta, updates),
        }
    }
}

fn sorted_updates<'a>(theta: &ParamVector, updates: &'a [ClientUpdate]) -> Result<Vec<&'a ClientUpdate>> {
    if updates.is_empty() {
        return Err(FedError::Aggregation("no updates to aggregate".into()));
    }
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client);
    if let Some(bad) = sorted.iter().find(|u| u.model.len() != theta.len()) {
        return Err(FedError::Aggregation(format!(
            "client {} sent {} parameters, expected {}",
            bad.client,
            bad.model.len(),
            theta.len()
        )));
    }
    Ok(sorted)
}

/// FLTrust trust score `max(0, cos(g, g0))`.
pub fn trust_score(delta: &[f64], root_delta: &[f64]) -> f64 {
    cosine(delta, root_delta).max(0.0)
}

/// Trust-weighted mean of client deltas, each rescaled to the root delta's norm.
pub fn fltrust_aggregate(
    state: &DefenseState,
    theta: &ParamVector,
    updates: &[ClientUpdate],
    rng: &mut RngStream,
) -> Result<Aggregate> {
    let sorted = sorted_updates(theta, updates)?;
    let root = state
        .root
        .as_ref()
        .ok_or_else(|| FedError::config("server.kind", "FLTrust state has no root dataset"))?;
    let all: Vec<usize> = (0..root.data.len()).collect();
    let root_delta = local_update(theta, &root.data, &all, &root.training, &root.spec, rng)?.sub(theta);
    let root_norm = root_delta.norm();
    let unchanged = Aggregate {
        model: theta.clone(),
        retained: 0,
    };
    if root_norm == 0.0 {
        return Ok(unchanged);
    }

    let mut acc = ParamVector::zeros(theta.len());
    let mut total = 0.0;
    let mut retained = 0;
    for u in sorted {
        let delta = u.model.sub(theta);
        let ts = trust_score(&delta, &root_delta);
        if ts > 0.0 {
            acc = acc.add_scaled(ts * root_norm / delta.norm(), &delta);
            total += ts;
            retained += 1;
        }
    }
    if total == 0.0 {
        return Ok(unchanged);
    }
    Ok(Aggregate {
        model: theta.add_scaled(1.0 / total, &acc),
        retained,
    })
}

/// Drops updates whose distance to `theta` fails the MAD outlier test and
/// averages the rest; falls back to the coordinate-wise median if nobody survives.
pub fn flame_aggregate(state: &DefenseState, theta: &ParamVector, updates: &[ClientUpdate]) -> Result<Aggregate> {
    let sorted = sorted_updates(theta, updates)?;
    let distances: Vec<f64> = sorted.iter().map(|u| u.model.sub(theta).norm()).collect();
    let flags = mad_outlier_flags(&distances, &state.outlier);
    let survivors: Vec<&[f64]> = sorted
        .iter()
        .zip(&flags)
        .filter(|(_, &f)| !f)
        .map(|(u, _)| u.model.as_slice())
        .collect();
    if survivors.is_empty() {
        return Ok(Aggregate {
            model: coord_median(updates)?,
            retained: 0,
        });
    }
    let retained = survivors.len();
    Ok(Aggregate {
        model: mean_of(survivors, theta.len()),
        retained,
    })
}

/// FoolsGold weights for a set of accumulated histories (same order as given).
///
/// Each client's score is its largest cosine similarity with another client,
/// after "pardoning" (similarity to a more suspicious client is scaled by
/// the ratio of the two scores). Weights are `1 - score`, normalized by the
/// largest weight, capped at 0.99, passed through `ln(w / (1 - w)) + 0.5`
/// and clamped to `[0, 1]`.
pub fn foolsgold_weights(histories: &[&[f64]]) -> Vec<f64> {
    let n = histories.len();
    if n == 1 {
        return vec![1.0];
    }
    let mut cs = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let c = cosine(histories[i], histories[j]);
            cs[i][j] = c;
            cs[j][i] = c;
        }
    }
    let row_max = |cs: &Vec<Vec<f64>>, i: usize| -> f64 {
        (0..n)
            .filter(|&j| j != i)
            .map(|j| cs[i][j])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let max_cs: Vec<f64> = (0..n).map(|i| row_max(&cs, i)).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && max_cs[i] < max_cs[j] && max_cs[j] > 0.0 {
                cs[i][j] *= max_cs[i].max(0.0) / max_cs[j];
            }
        }
    }
    let mut w: Vec<f64> = (0..n).map(|i| (1.0 - row_max(&cs, i)).clamp(0.0, 1.0)).collect();
    let top = w.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return vec![0.0; n];
    }
    for v in w.iter_mut() {
        *v /= top;
        if *v >= 1.0 {
            *v = 0.99;
        }
        *v = if *v <= 0.0 {
            0.0
        } else {
            ((*v / (1.0 - *v)).ln() + 0.5).clamp(0.0, 1.0)
        };
    }
    w
}

/// Accumulates this round's deltas into each client's history, then applies
/// the FoolsGold-weighted mean of the current deltas.
pub fn foolsgold_aggregate(state: &mut DefenseState, theta: &ParamVector, updates: &[ClientUpdate]) -> Result<Aggregate> {
    let sorted = sorted_updates(theta, updates)?;
    let deltas: Vec<ParamVector> = sorted.iter().map(|u| u.model.sub(theta)).collect();
    for (u, delta) in sorted.iter().zip(&deltas) {
        state
            .history
            .entry(u.client)
            .and_modify(|h| *h = h.add(delta))
            .or_insert_with(|| delta.clone());
    }
    let histories: Vec<&[f64]> = sorted.iter().map(|u| state.history[&u.client].as_slice()).collect();
    let weights = foolsgold_weights(&histories);
    state.last_weights = sorted.iter().map(|u| u.client).zip(weights.iter().copied()).collect();

    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Ok(Aggregate {
            model: theta.clone(),
            retained: 0,
        });
    }
    let mut acc = ParamVector::zeros(theta.len());
    for (delta, &w) in deltas.iter().zip(&weights) {
        if w > 0.0 {
            acc = acc.add_scaled(w, delta);
        }
    }
    Ok(Aggregate {
        model: theta.add_scaled(1.0 / total, &acc),
        retained: weights.iter().filter(|&&w| w > 0.0).count(),
    })
}

/// Orthonormal DCT-II.
pub fn dct2_orthonormal(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf = v.to_vec();
    DctPlanner::new().plan_dct2(n).process_dct2(&mut buf);
    let s0 = (1.0 / n as f64).sqrt();
    let sk = (2.0 / n as f64).sqrt();
    buf[0] *= s0;
    buf[1..].iter_mut().for_each(|x| *x *= sk);
    buf
}

/// Clusters clients on the low-frequency DCT coefficients of their deltas and
/// averages the models of the larger cluster.
pub fn freqfed_aggregate(state: &DefenseState, theta: &ParamVector, updates: &[ClientUpdate]) -> Result<Aggregate> {
    let sorted = sorted_updates(theta, updates)?;
    let keep = ((theta.len() as f64 * state.freq_cutoff).ceil() as usize).clamp(1, theta.len().max(1));
    let features: Vec<Vec<f64>> = sorted
        .iter()
        .map(|u| {
            let mut c = dct2_orthonormal(&u.model.sub(theta));
            c.truncate(keep);
            c
        })
        .collect();
    let refs: Vec<&[f64]> = features.iter().map(Vec::as_slice).collect();
    let winners = majority(&two_means(&refs));
    Ok(Aggregate {
        model: mean_of(winners.iter().map(|&i| sorted[i].model.as_slice()), theta.len()),
        retained: winners.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_model;
    use crate::rng;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec())
    }

    fn ups(models: &[ParamVector]) -> Vec<ClientUpdate> {
        models.iter().cloned().enumerate().map(|(i, m)| ClientUpdate::new(i, m)).collect()
    }

    #[test]
    fn dct_of_constant() {
        let c = dct2_orthonormal(&[2.0; 9]);
        assert!((c[0] - 2.0 * 3.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn dct_matches_direct_sum() {
        let v = [0.3, -1.0, 2.5, 0.0, 1.25];
        let n = v.len() as f64;
        let fast = dct2_orthonormal(&v);
        for (k, &got) in fast.iter().enumerate() {
            let s: f64 = v
                .iter()
                .enumerate()
                .map(|(i, x)| x * (std::f64::consts::PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
                .sum();
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            assert!((got - scale * s).abs() < 1e-12);
        }
    }

    #[test]
    fn flame_drops_far_update() {
        let theta = pv(&[0.0]);
        let models: Vec<ParamVector> = [1.0, 2.0, 1.5, 1.0, 50.0].iter().map(|&x| pv(&[x])).collect();
        let out = flame_aggregate(&DefenseState::flame(OutlierTestConfig::default()), &theta, &ups(&models)).unwrap();
        assert_eq!((out.model[0], out.retained), (1.375, 4));
    }

    #[test]
    fn flame_keeps_everyone_at_equal_distance() {
        let theta = pv(&[0.0, 0.0]);
        let models = vec![pv(&[1.0, 0.0]), pv(&[0.0, 1.0]), pv(&[-1.0, 0.0])];
        let out = flame_aggregate(&DefenseState::flame(OutlierTestConfig::default()), &theta, &ups(&models)).unwrap();
        assert_eq!(out.retained, 3);
    }

    #[test]
    fn foolsgold_limits() {
        let orth: Vec<Vec<f64>> = vec![vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 3.0]];
        let refs: Vec<&[f64]> = orth.iter().map(Vec::as_slice).collect();
        assert_eq!(foolsgold_weights(&refs), vec![1.0; 3]);

        let mixed: Vec<Vec<f64>> = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.1], vec![0.0, 1.0, 0.1]];
        let refs: Vec<&[f64]> = mixed.iter().map(Vec::as_slice).collect();
        let w = foolsgold_weights(&refs);
        assert_eq!(w[1], 0.0);
        assert_eq!(w[1], w[2]);
        assert_eq!(w[0], 1.0);
    }

    #[test]
    fn foolsgold_orthogonal_equals_mean() {
        let theta = pv(&[1.0, 1.0]);
        let models = vec![pv(&[3.0, 1.0]), pv(&[1.0, 5.0])];
        let mut state = DefenseState::foolsgold();
        let out = foolsgold_aggregate(&mut state, &theta, &ups(&models)).unwrap();
        assert_eq!(out.model.as_slice(), &[2.0, 3.0]);
    }

    #[test]
    fn freqfed_isolates_flipped_pair() {
        let theta = ParamVector::zeros(8);
        let base: Vec<f64> = (0..8).map(|i| 1.0 + 0.1 * i as f64).collect();
        let mut models: Vec<ParamVector> = (0..8)
            .map(|c| base.iter().enumerate().map(|(i, x)| x + 0.01 * ((c * 7 + i) % 5) as f64).collect())
            .collect();
        models.push(base.iter().map(|x| -x).collect());
        models.push(base.iter().map(|x| -x * 1.01).collect());
        let state = DefenseState::freqfed(0.25).unwrap();
        let out = freqfed_aggregate(&state, &theta, &ups(&models)).unwrap();
        assert_eq!(out.retained, 8);
    }

    #[test]
    fn fltrust_examples() {
        let spec = ModelSpec::logistic_regression(2, 2).unwrap();
        let data = Dataset::new(vec![1.0, 0.0, 0.0, 1.0], 2, vec![0, 1], 2).unwrap();
        let training = TrainingConfig { learning_rate: 0.5, batch_size: 2, local_iterations: 1 };
        let theta = init_model(&spec, 1);
        let state = DefenseState::fltrust(RootContext { data: data.clone(), spec: spec.clone(), training }).unwrap();
        let g0 = local_update(&theta, &data, &[0, 1], &training, &spec, &mut rng::from_seed(0))
            .unwrap()
            .sub(&theta);

        let twice = vec![ClientUpdate::new(0, theta.add_scaled(2.0, &g0))];
        let out = fltrust_aggregate(&state, &theta, &twice, &mut rng::from_seed(0)).unwrap();
        for (a, b) in out.model.iter().zip(theta.add(&g0).iter()) {
            assert!((a - b).abs() < 1e-12);
        }

        let flipped = vec![ClientUpdate::new(0, theta.add_scaled(-1.0, &g0))];
        let out = fltrust_aggregate(&state, &theta, &flipped, &mut rng::from_seed(0)).unwrap();
        assert_eq!(out.model, theta);
        assert_eq!(out.retained, 0);
    }
}
