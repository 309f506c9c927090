//! Deterministic 2-means used by Clipped-Clustering, SignGuard and FreqFed.

use crate::param::squared_distance;

const MAX_ITERATIONS: usize = 50;

/// Splits `points` into two clusters with Lloyd iterations seeded at the
/// farthest pair (lowest indices win ties). Returns a 0/1 label per point;
/// ties in assignment go to cluster 0.
pub fn two_means(points: &[&[f64]]) -> Vec<usize> {
    let n = points.len();
    if n < 2 {
        return vec![0; n];
    }
    let (mut a, mut b, mut best) = (0, 1, f64::NEG_INFINITY);
    for i in 0..n {
        for j in i + 1..n {
            let d = squared_distance(points[i], points[j]);
            if d > best {
                (a, b, best) = (i, j, d);
            }
        }
    }
    if best == 0.0 {
        return vec![0; n];
    }

    let mut centers = [points[a].to_vec(), points[b].to_vec()];
    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let l = usize::from(squared_distance(p, &centers[1]) < squared_distance(p, &centers[0]));
            if labels[i] != l {
                labels[i] = l;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&[f64]> = points
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(p, _)| *p)
                .collect();
            // An empty cluster keeps its previous center.
            if !members.is_empty() {
                *center = crate::param::mean_of(members, center.len()).into_inner();
            }
        }
    }
    labels
}

/// Indices of the majority cluster. On a size tie the cluster containing
/// index 0 wins, so callers order points by client id.
pub fn majority(labels: &[usize]) -> Vec<usize> {
    let ones = labels.iter().filter(|&&l| l == 1).count();
    let zeros = labels.len() - ones;
    let winner = if ones > zeros || (ones == zeros && labels.first() == Some(&1)) {
        1
    } else {
        0
    };
    labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == winner)
        .map(|(i, _)| i)
        .collect()
}
