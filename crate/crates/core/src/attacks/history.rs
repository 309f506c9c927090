use std::collections::VecDeque;

use crate::error::{FedError, Result};
use crate::param::ParamVector;
use crate::stats::median_in_place;

/// The last `window` global deltas seen by one attacker, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaHistory {
    window: usize,
    entries: VecDeque<ParamVector>,
}

impl DeltaHistory {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(FedError::config("attack.xfed.omega", "history window must be positive"));
        }
        Ok(DeltaHistory {
            window,
            entries: VecDeque::with_capacity(window),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &ParamVector> {
        self.entries.iter()
    }

    pub fn latest(&self) -> Option<&ParamVector> {
        self.entries.back()
    }

    /// Appends `curr - prev`, evicting the oldest entry past the window.
    pub fn push_global_delta(&mut self, prev: &ParamVector, curr: &ParamVector) -> Result<()> {
        if prev.len() != curr.len() {
            return Err(FedError::Attack(format!(
                "global models differ in length ({} vs {})",
                prev.len(),
                curr.len()
            )));
        }
        if let Some(first) = self.entries.front() {
            if first.len() != curr.len() {
                return Err(FedError::Attack("delta length differs from history".into()));
            }
        }
        self.entries.push_back(curr.sub(prev));
        while self.entries.len() > self.window {
            self.entries.pop_front();
        }
        Ok(())
    }
}

/// Coordinate-wise robust center and spread of a delta history.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustScaleResult {
    pub med: ParamVector,
    pub mad: ParamVector,
    /// `med + lambda * mad`.
    pub scale: ParamVector,
    /// `||scale||_2`, the perturbation magnitude.
    pub mu: f64,
}

/// Median/MAD over the history, per coordinate. `None` for an empty history.
pub fn robust_scale(hist: &DeltaHistory, lambda: f64) -> Option<RobustScaleResult> {
    let d = hist.latest()?.len();
    let mut column = vec![0.0; hist.len()];
    let mut med = Vec::with_capacity(d);
    let mut mad = Vec::with_capacity(d);
    for j in 0..d {
        for (slot, entry) in column.iter_mut().zip(hist.entries()) {
            *slot = entry[j];
        }
        let m = median_in_place(&mut column);
        for v in column.iter_mut() {
            *v = (*v - m).abs();
        }
        med.push(m);
        mad.push(median_in_place(&mut column));
    }
    let med = ParamVector::new(med);
    let mad = ParamVector::new(mad);
    let scale = med.add_scaled(lambda, &mad);
    let mu = scale.norm();
    Some(RobustScaleResult { med, mad, scale, mu })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec())
    }

    fn history(entries: &[&[f64]]) -> DeltaHistory {
        let mut h = DeltaHistory::new(entries.len().max(1)).unwrap();
        let zero = ParamVector::zeros(entries[0].len());
        for e in entries {
            h.push_global_delta(&zero, &pv(e)).unwrap();
        }
        h
    }

    #[test]
    fn push_and_evict() {
        let mut h = DeltaHistory::new(2).unwrap();
        h.push_global_delta(&pv(&[1.0, 1.0]), &pv(&[3.0, 0.0])).unwrap();
        assert_eq!(h.latest().unwrap().as_slice(), &[2.0, -1.0]);
        h.push_global_delta(&pv(&[0.0, 0.0]), &pv(&[1.0, 1.0])).unwrap();
        h.push_global_delta(&pv(&[0.0, 0.0]), &pv(&[5.0, 5.0])).unwrap();
        let kept: Vec<_> = h.entries().map(|e| e[0]).collect();
        assert_eq!(kept, vec![1.0, 5.0]);
        h.push_global_delta(&pv(&[2.0, 2.0]), &pv(&[2.0, 2.0])).unwrap();
        assert_eq!(h.latest().unwrap().as_slice(), &[0.0, 0.0]);
        assert!(h.push_global_delta(&pv(&[1.0]), &pv(&[1.0, 2.0])).is_err());
        assert!(DeltaHistory::new(0).is_err());
    }

    #[test]
    fn zero_spread_history() {
        let r = robust_scale(&history(&[&[1.0, 1.0][..]; 3]), 4.0).unwrap();
        assert_eq!(r.med.as_slice(), &[1.0, 1.0]);
        assert_eq!(r.mad.as_slice(), &[0.0, 0.0]);
        assert!((r.mu - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn one_dimensional_history() {
        let r = robust_scale(&history(&[&[1.0], &[2.0], &[100.0]]), 4.0).unwrap();
        assert_eq!((r.med[0], r.mad[0], r.scale[0], r.mu), (2.0, 1.0, 6.0, 6.0));
    }

    #[test]
    fn singleton_and_empty() {
        let r = robust_scale(&history(&[&[3.0, -4.0]]), 4.0).unwrap();
        assert_eq!(r.mu, 5.0);
        assert!(robust_scale(&DeltaHistory::new(3).unwrap(), 4.0).is_none());
    }
}
