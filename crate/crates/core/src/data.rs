//! Datasets, the label-skew partitioner and root-dataset sampling.

mod io;

pub use io::{load_csv, load_idx};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{FedError, Result};
use crate::rng::{self, RngStream};

/// Row-major feature matrix with integer labels in `[0, classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if dim == 0 {
            return Err(FedError::Data("feature dimension must be positive".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(FedError::Data(format!(
                "{} feature values do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(FedError::Data(format!("label {bad} outside [0, {classes})")));
        }
        Ok(Dataset {
            features,
            dim,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Copies the given rows into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            dim: self.dim,
            labels,
            classes: self.classes,
        }
    }

    /// Shuffled train/test split; the test part holds `round(n * test_fraction)` rows.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(FedError::config("data.test_fraction", "must lie in [0, 1)"));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng::from_seed(seed));
        let n_test = (self.len() as f64 * test_fraction).round() as usize;
        let (test, train) = order.split_at(n_test);
        Ok((self.subset(train), self.subset(test)))
    }
}

/// Gaussian blobs around `classes` distinct centers on the odd-integer
/// lattice (coordinates are ±1 whenever `2^dim >= classes`, so centers sit at
/// least distance 2 apart). Labels cycle through the classes and the rows are
/// shuffled.
pub fn generate_blobs(n: usize, classes: usize, dim: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        return Err(FedError::config("data.classes", "need at least two classes"));
    }
    if n < classes {
        return Err(FedError::config("data.samples", "need at least one sample per class"));
    }
    if dim < 2 {
        return Err(FedError::config("data.dim", "need at least two features"));
    }
    if !(spread.is_finite() && spread > 0.0) {
        return Err(FedError::config("data.spread", "must be positive"));
    }

    let mut rng = rng::from_seed(seed);
    // Smallest half-width r with (2r)^dim >= classes.
    let mut half = 1i64;
    while ((2 * half) as f64).powi(dim as i32) < classes as f64 {
        half += 1;
    }
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes);
    while centers.len() < classes {
        let c: Vec<f64> = (0..dim)
            .map(|_| (2 * rng.random_range(-half..half) + 1) as f64)
            .collect();
        if !centers.contains(&c) {
            centers.push(c);
        }
    }

    let noise = Normal::new(0.0, spread).map_err(|e| FedError::config("data.spread", e.to_string()))?;
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(&mut rng);
    let mut features = Vec::with_capacity(n * dim);
    for &l in &labels {
        features.extend(centers[l].iter().map(|&c| c + noise.sample(&mut rng)));
    }
    Dataset::new(features, dim, labels, classes)
}

/// Client id -> sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    shards: Vec<Vec<usize>>,
}

impl Partition {
    pub fn from_shards(shards: Vec<Vec<usize>>) -> Self {
        Partition { shards }
    }

    pub fn clients(&self) -> usize {
        self.shards.len()
    }

    pub fn shard(&self, client: usize) -> &[usize] {
        &self.shards[client]
    }

    pub fn shards(&self) -> &[Vec<usize>] {
        &self.shards
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionConfig {
    /// Degree of non-IID `p`: probability that a label-`l` sample goes to group `l`.
    pub p: f64,
    pub groups: usize,
    pub clients: usize,
    pub seed: u64,
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(FedError::config("partition.non_iid", "p must lie in (0, 1]"));
        }
        if self.groups == 0 {
            return Err(FedError::config("partition.groups", "must be positive"));
        }
        if self.clients < self.groups {
            return Err(FedError::config(
                "clients",
                format!(
                    "{} clients cannot form {} nonempty groups",
                    self.clients, self.groups
                ),
            ));
        }
        Ok(())
    }
}

/// Client ids belonging to group `g` when `clients` are split evenly into `groups`.
pub fn group_members(clients: usize, groups: usize, g: usize) -> std::ops::Range<usize> {
    let base = clients / groups;
    let extra = clients % groups;
    let start = g * base + g.min(extra);
    let len = base + usize::from(g < extra);
    start..start + len
}

/// Group index each sample was routed to, before the round-robin deal.
fn route_samples(ds: &Dataset, cfg: &PartitionConfig, rng: &mut RngStream) -> Vec<usize> {
    let groups = cfg.groups;
    ds.labels()
        .iter()
        .map(|&l| {
            if groups == 1 || rng.random::<f64>() < cfg.p {
                l
            } else {
                // Uniform over the other groups.
                let r = rng.random_range(0..groups - 1);
                if r >= l {
                    r + 1
                } else {
                    r
                }
            }
        })
        .collect()
}

/// Label-skew partition: clients form `L` equal groups; a sample with label
/// `l` lands in group `l` with probability `p` and in each other group with
/// probability `(1-p)/(L-1)`. Inside a group samples are dealt round-robin.
pub fn partition_noniid(ds: &Dataset, cfg: &PartitionConfig) -> Result<Partition> {
    cfg.validate()?;
    if cfg.groups != ds.classes() {
        return Err(FedError::config(
            "partition.groups",
            format!("group count {} differs from class count {}", cfg.groups, ds.classes()),
        ));
    }
    let mut rng = rng::from_seed(cfg.seed);
    let routes = route_samples(ds, cfg, &mut rng);
    let mut shards = vec![Vec::new(); cfg.clients];
    let mut next = vec![0usize; cfg.groups];
    for (i, &g) in routes.iter().enumerate() {
        let members = group_members(cfg.clients, cfg.groups, g);
        let client = members.start + next[g] % members.len();
        next[g] += 1;
        shards[client].push(i);
    }
    Ok(Partition { shards })
}

/// Fraction of label-`l` samples routed to group `l`, pooled over labels.
/// Exposed for the partitioner's statistical checks.
pub fn own_group_fraction(ds: &Dataset, partition: &Partition, groups: usize) -> f64 {
    let clients = partition.clients();
    let mut group_of = vec![0usize; clients];
    for g in 0..groups {
        for c in group_members(clients, groups, g) {
            group_of[c] = g;
        }
    }
    let mut hits = 0usize;
    let mut total = 0usize;
    for (c, shard) in partition.shards().iter().enumerate() {
        for &i in shard {
            total += 1;
            if ds.label(i) == group_of[c] {
                hits += 1;
            }
        }
    }
    hits as f64 / total.max(1) as f64
}

/// IID partition: shuffle, then deal round-robin.
pub fn partition_iid(n: usize, clients: usize, seed: u64) -> Result<Partition> {
    if clients == 0 {
        return Err(FedError::config("clients", "must be positive"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::from_seed(seed));
    let mut shards = vec![Vec::new(); clients];
    for (pos, i) in order.into_iter().enumerate() {
        shards[pos % clients].push(i);
    }
    Ok(Partition { shards })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootDatasetConfig {
    pub size: usize,
    /// Fraction of the root set forced to come from class 0.
    pub bias: f64,
    pub seed: u64,
}

impl Default for RootDatasetConfig {
    fn default() -> Self {
        RootDatasetConfig {
            size: 100,
            bias: 0.1,
            seed: 0,
        }
    }
}

/// Server-side root dataset: `ceil(bias * size)` rows from class 0, the rest
/// uniformly from the other classes. With `bias == 0` it is a plain uniform
/// sample of the population.
pub fn sample_root(ds: &Dataset, cfg: &RootDatasetConfig) -> Result<Dataset> {
    if cfg.size == 0 {
        return Err(FedError::config("server.root_size", "must be positive"));
    }
    if !(0.0..1.0).contains(&cfg.bias) {
        return Err(FedError::config("server.root_bias", "must lie in [0, 1)"));
    }
    if cfg.size > ds.len() {
        return Err(FedError::config(
            "server.root_size",
            format!("requested {} rows from a population of {}", cfg.size, ds.len()),
        ));
    }
    let mut rng = rng::from_seed(cfg.seed);
    if cfg.bias == 0.0 {
        let mut picked = index::sample(&mut rng, ds.len(), cfg.size).into_vec();
        picked.sort_unstable();
        return Ok(ds.subset(&picked));
    }

    let forced = (cfg.bias * cfg.size as f64).ceil() as usize;
    let (class0, rest): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| ds.label(i) == 0);
    if forced > class0.len() || cfg.size - forced > rest.len() {
        return Err(FedError::config(
            "server.root_size",
            "population too small for the requested root size and bias",
        ));
    }
    let mut picked: Vec<usize> = index::sample(&mut rng, class0.len(), forced)
        .into_iter()
        .map(|j| class0[j])
        .collect();
    picked.extend(
        index::sample(&mut rng, rest.len(), cfg.size - forced)
            .into_iter()
            .map(|j| rest[j]),
    );
    picked.sort_unstable();
    Ok(ds.subset(&picked))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_deterministic_and_balanced() {
        let a = generate_blobs(1000, 10, 20, 0.5, 3).unwrap();
        assert_eq!(a, generate_blobs(1000, 10, 20, 0.5, 3).unwrap());
        assert_ne!(a, generate_blobs(1000, 10, 20, 0.5, 4).unwrap());
        for c in 0..10 {
            assert_eq!(a.labels().iter().filter(|&&l| l == c).count(), 100);
        }
    }

    #[test]
    fn blobs_collapse_onto_centers() {
        let ds = generate_blobs(4, 4, 2, 1e-12, 8).unwrap();
        let mut seen: Vec<usize> = ds.labels().to_vec();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3]);
        for i in 0..4 {
            for &x in ds.features(i) {
                assert!((x.abs() - 1.0).abs() < 1e-9);
            }
        }
        assert!(generate_blobs(3, 4, 2, 1.0, 0).is_err());
        assert!(generate_blobs(10, 2, 1, 1.0, 0).is_err());
        assert!(generate_blobs(10, 2, 2, 0.0, 0).is_err());
    }

    #[test]
    fn blobs_with_many_classes_in_low_dimension() {
        let ds = generate_blobs(30, 10, 2, 0.1, 1).unwrap();
        assert_eq!(ds.classes(), 10);
    }

    #[test]
    fn p_one_gives_label_pure_clients() {
        let ds = generate_blobs(500, 5, 3, 1.0, 2).unwrap();
        let cfg = PartitionConfig { p: 1.0, groups: 5, clients: 5, seed: 1 };
        let part = partition_noniid(&ds, &cfg).unwrap();
        for (c, shard) in part.shards().iter().enumerate() {
            assert!(shard.iter().all(|&i| ds.label(i) == c));
        }
    }

    #[test]
    fn partition_rejects_too_few_clients() {
        let ds = generate_blobs(100, 10, 3, 1.0, 2).unwrap();
        let cfg = PartitionConfig { p: 0.5, groups: 10, clients: 7, seed: 1 };
        assert!(partition_noniid(&ds, &cfg).is_err());
        let bad_p = PartitionConfig { p: 0.0, groups: 10, clients: 10, seed: 1 };
        assert!(partition_noniid(&ds, &bad_p).is_err());
    }

    #[test]
    fn partition_shards_cover_disjointly() {
        let ds = generate_blobs(997, 10, 3, 1.0, 5).unwrap();
        let cfg = PartitionConfig { p: 0.7, groups: 10, clients: 23, seed: 9 };
        let part = partition_noniid(&ds, &cfg).unwrap();
        let mut all: Vec<usize> = part.shards().iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..997).collect::<Vec<_>>());
    }

    #[test]
    fn group_members_split_evenly() {
        let sizes: Vec<usize> = (0..3).map(|g| group_members(10, 3, g).len()).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        assert_eq!(group_members(10, 3, 2), 7..10);
    }

    #[test]
    fn root_sample_bias_counts() {
        let ds = generate_blobs(2000, 10, 5, 1.0, 1).unwrap();
        for (bias, expected) in [(0.1, 10), (0.9, 90), (0.25, 25)] {
            let root = sample_root(&ds, &RootDatasetConfig { size: 100, bias, seed: 4 }).unwrap();
            assert_eq!(root.len(), 100);
            assert_eq!(root.labels().iter().filter(|&&l| l == 0).count(), expected);
        }
        let plain = sample_root(&ds, &RootDatasetConfig { size: 100, bias: 0.0, seed: 4 }).unwrap();
        assert_eq!(plain.len(), 100);
        assert!(sample_root(&ds, &RootDatasetConfig { size: 5000, bias: 0.1, seed: 4 }).is_err());
    }

    #[test]
    fn split_sizes() {
        let ds = generate_blobs(100, 2, 2, 1.0, 1).unwrap();
        let (train, test) = ds.split(0.2, 3).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
    }
}
