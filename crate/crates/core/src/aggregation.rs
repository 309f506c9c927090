//! Server-side aggregation rules.
//!
//! Every rule first orders its input by client id, so results do not depend
//! on arrival order. Rules that look at update geometry beyond translation
//! (clipping, sign statistics) expect deltas `phi - theta`; the simulator
//! takes care of that at the boundary.

use serde::{Deserialize, Serialize};

use crate::cluster::{majority, two_means};
use crate::error::{FedError, Result};
use crate::param::{mean_of, norm, squared_distance, ParamVector};
use crate::stats;

/// A client's submitted vector for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client: usize,
    pub model: ParamVector,
}

impl ClientUpdate {
    pub fn new(client: usize, model: ParamVector) -> Self {
        ClientUpdate { client, model }
    }
}

/// Aggregated vector plus how many updates contributed to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub model: ParamVector,
    pub retained: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregatorKind {
    FedAvg,
    Median,
    TrimmedMean,
    MultiKrum,
    ClippedClustering,
    SignGuard,
}

impl AggregatorKind {
    /// True for rules whose output commutes with translating every input.
    pub fn translation_equivariant(self) -> bool {
        matches!(
            self,
            AggregatorKind::FedAvg | AggregatorKind::Median | AggregatorKind::TrimmedMean | AggregatorKind::MultiKrum
        )
    }
}

/// Norm bound for Clipped-Clustering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClipThreshold {
    Fixed(f64),
    /// Median of the current round's update norms.
    #[serde(with = "adaptive_str")]
    Adaptive,
}

mod adaptive_str {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("adaptive")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "adaptive" {
            Ok(())
        } else {
            Err(D::Error::custom(format!("expected \"adaptive\" or a number, got \"{s}\"")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatorConfig {
    pub kind: AggregatorKind,
    /// Assumed number of compromised updates `c`.
    pub compromised: usize,
    /// Multi-Krum selection count `f`; `None` means `k - c - 2`.
    pub krum_select: Option<usize>,
    pub clip: ClipThreshold,
    /// SignGuard drops updates whose norm is outside `[0.1, 3] x median`.
    pub sign_guard_norm_filter: bool,
}

impl AggregatorConfig {
    pub fn new(kind: AggregatorKind) -> Self {
        AggregatorConfig {
            kind,
            compromised: 0,
            krum_select: None,
            clip: ClipThreshold::Adaptive,
            sign_guard_norm_filter: true,
        }
    }

    pub fn aggregate(&self, updates: &[ClientUpdate]) -> Result<Aggregate> {
        let k = updates.len();
        match self.kind {
            AggregatorKind::FedAvg => Ok(Aggregate { model: fed_avg(updates)?, retained: k }),
            AggregatorKind::Median => Ok(Aggregate { model: coord_median(updates)?, retained: k }),
            AggregatorKind::TrimmedMean => Ok(Aggregate {
                model: trimmed_mean(updates, self.compromised)?,
                retained: k - 2 * self.compromised,
            }),
            AggregatorKind::MultiKrum => {
                let f = self.krum_select.unwrap_or_else(|| k.saturating_sub(self.compromised + 2));
                multi_krum(updates, self.compromised, f)
            }
            AggregatorKind::ClippedClustering => clipped_clustering(updates, self.clip),
            AggregatorKind::SignGuard => sign_guard(updates, self.sign_guard_norm_filter),
        }
    }
}

/// Sorts by client id and checks shape.
fn canonical(updates: &[ClientUpdate]) -> Result<(Vec<&ClientUpdate>, usize)> {
    let first = updates
        .first()
        .ok_or_else(|| FedError::Aggregation("no updates to aggregate".into()))?;
    let d = first.model.len();
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client);
    for pair in sorted.windows(2) {
        if pair[0].client == pair[1].client {
            return Err(FedError::Aggregation(format!("duplicate client id {}", pair[0].client)));
        }
    }
    if let Some(bad) = sorted.iter().find(|u| u.model.len() != d) {
        return Err(FedError::Aggregation(format!(
            "client {} sent {} parameters, expected {d}",
            bad.client,
            bad.model.len()
        )));
    }
    Ok((sorted, d))
}

/// Coordinate-wise arithmetic mean.
pub fn fed_avg(updates: &[ClientUpdate]) -> Result<ParamVector> {
    let (sorted, d) = canonical(updates)?;
    Ok(mean_of(sorted.iter().map(|u| u.model.as_slice()), d))
}

/// Applies `reduce` to each coordinate's sorted column.
fn per_coordinate(sorted: &[&ClientUpdate], d: usize, reduce: impl Fn(&[f64]) -> f64) -> ParamVector {
    let mut column = vec![0.0; sorted.len()];
    (0..d)
        .map(|j| {
            for (slot, u) in column.iter_mut().zip(sorted) {
                *slot = u.model[j];
            }
            column.sort_unstable_by(f64::total_cmp);
            reduce(&column)
        })
        .collect()
}

/// Coordinate-wise median; even counts average the two middle values.
pub fn coord_median(updates: &[ClientUpdate]) -> Result<ParamVector> {
    let (sorted, d) = canonical(updates)?;
    Ok(per_coordinate(&sorted, d, stats::median))
}

/// Coordinate-wise mean after dropping the `c` largest and `c` smallest values.
pub fn trimmed_mean(updates: &[ClientUpdate], c: usize) -> Result<ParamVector> {
    let (sorted, d) = canonical(updates)?;
    let k = sorted.len();
    if k <= 2 * c {
        return Err(FedError::config(
            "server.compromised",
            format!("trimmed mean needs more than 2c = {} updates, got {k}", 2 * c),
        ));
    }
    Ok(per_coordinate(&sorted, d, |col| {
        let kept = &col[c..k - c];
        kept.iter().sum::<f64>() / kept.len() as f64
    }))
}

fn check_krum(k: usize, c: usize, f: usize) -> Result<()> {
    if k < c + 3 {
        return Err(FedError::config(
            "server.compromised",
            format!("Multi-Krum needs k >= c + 3 (k = {k}, c = {c})"),
        ));
    }
    if f == 0 || f > k - c - 2 {
        return Err(FedError::config(
            "server.krum_select",
            format!("f must lie in [1, k - c - 2 = {}], got {f}", k - c - 2),
        ));
    }
    Ok(())
}

/// Krum score per update (in client-id order): the sum of squared distances
/// to its `k - c - 2` nearest other updates.
pub fn krum_scores(updates: &[ClientUpdate], c: usize) -> Result<Vec<(usize, f64)>> {
    let (sorted, _) = canonical(updates)?;
    let k = sorted.len();
    if k < c + 3 {
        return Err(FedError::config(
            "server.compromised",
            format!("Multi-Krum needs k >= c + 3 (k = {k}, c = {c})"),
        ));
    }
    let neighbours = k - c - 2;
    let mut dist = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let d = squared_distance(&sorted[i].model, &sorted[j].model);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    Ok((0..k)
        .map(|i| {
            let mut row: Vec<f64> = (0..k).filter(|&j| j != i).map(|j| dist[i][j]).collect();
            row.sort_unstable_by(f64::total_cmp);
            (sorted[i].client, row[..neighbours].iter().sum())
        })
        .collect())
}

/// Client ids of the `f` lowest Krum scores, ties to the lower id.
pub fn multi_krum_select(updates: &[ClientUpdate], c: usize, f: usize) -> Result<Vec<usize>> {
    check_krum(updates.len(), c, f)?;
    let mut scores = krum_scores(updates, c)?;
    scores.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<usize> = scores[..f].iter().map(|s| s.0).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Mean of the `f` updates with the lowest Krum scores.
pub fn multi_krum(updates: &[ClientUpdate], c: usize, f: usize) -> Result<Aggregate> {
    let chosen = multi_krum_select(updates, c, f)?;
    let (sorted, d) = canonical(updates)?;
    let model = mean_of(
        sorted
            .iter()
            .filter(|u| chosen.binary_search(&u.client).is_ok())
            .map(|u| u.model.as_slice()),
        d,
    );
    Ok(Aggregate { model, retained: f })
}

fn clip_to(v: &[f64], tau: f64) -> Vec<f64> {
    let n = norm(v);
    if n > tau {
        v.iter().map(|x| x * tau / n).collect()
    } else {
        v.to_vec()
    }
}

/// Clip every update to norm `tau`, split into two clusters, average the larger.
pub fn clipped_clustering(updates: &[ClientUpdate], clip: ClipThreshold) -> Result<Aggregate> {
    let (sorted, d) = canonical(updates)?;
    let tau = match clip {
        ClipThreshold::Fixed(t) if t > 0.0 && t.is_finite() => t,
        ClipThreshold::Fixed(t) => {
            return Err(FedError::config("server.clip", format!("must be positive, got {t}")))
        }
        ClipThreshold::Adaptive => {
            let norms: Vec<f64> = sorted.iter().map(|u| u.model.norm()).collect();
            stats::median(&norms)
        }
    };
    let clipped: Vec<Vec<f64>> = sorted.iter().map(|u| clip_to(&u.model, tau)).collect();
    let refs: Vec<&[f64]> = clipped.iter().map(Vec::as_slice).collect();
    let keep = majority(&two_means(&refs));
    let model = mean_of(keep.iter().map(|&i| refs[i]), d);
    Ok(Aggregate { model, retained: keep.len() })
}

/// Fractions of strictly positive, strictly negative and zero coordinates.
pub fn sign_features(v: &[f64]) -> [f64; 3] {
    let n = v.len().max(1) as f64;
    let pos = v.iter().filter(|&&x| x > 0.0).count() as f64;
    let neg = v.iter().filter(|&&x| x < 0.0).count() as f64;
    [pos / n, neg / n, (v.len() as f64 - pos - neg) / n]
}

/// Sign-statistics clustering; averages the majority cluster.
pub fn sign_guard(updates: &[ClientUpdate], norm_filter: bool) -> Result<Aggregate> {
    let (sorted, d) = canonical(updates)?;
    let mut candidates: Vec<&ClientUpdate> = sorted.clone();
    if norm_filter {
        let norms: Vec<f64> = sorted.iter().map(|u| u.model.norm()).collect();
        let med = stats::median(&norms);
        let filtered: Vec<&ClientUpdate> = sorted
            .iter()
            .zip(&norms)
            .filter(|(_, &n)| n >= 0.1 * med && n <= 3.0 * med)
            .map(|(u, _)| *u)
            .collect();
        if !filtered.is_empty() {
            candidates = filtered;
        }
    }
    let features: Vec<[f64; 3]> = candidates.iter().map(|u| sign_features(&u.model)).collect();
    let refs: Vec<&[f64]> = features.iter().map(|f| f.as_slice()).collect();
    let keep = majority(&two_means(&refs));
    let model = mean_of(keep.iter().map(|&i| candidates[i].model.as_slice()), d);
    Ok(Aggregate { model, retained: keep.len() })
}
