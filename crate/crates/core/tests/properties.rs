use fedsim::aggregation::{
    clipped_clustering, coord_median, fed_avg, multi_krum, sign_guard, trimmed_mean, AggregatorConfig, AggregatorKind,
    ClientUpdate, ClipThreshold,
};
use fedsim::attacks::{perturbation, robust_scale, DeltaHistory, PerturbationKind};
use fedsim::data::{generate_blobs, partition_iid, partition_noniid, sample_root, PartitionConfig, RootDatasetConfig};
use fedsim::defenses::{dct2_orthonormal, foolsgold_weights, DefenseState, RootContext};
use fedsim::model::{flatten, init_model, local_update, unflatten, ModelSpec, TrainingConfig};
use fedsim::rng::{self, Domain};
use fedsim::stats::{mad_outlier_flags, OutlierTestConfig};
use fedsim::ParamVector;
use proptest::prelude::*;

fn matrix(k: std::ops::RangeInclusive<usize>, d: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (k, d).prop_flat_map(|(k, d)| prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), k))
}

fn updates(rows: &[Vec<f64>]) -> Vec<ClientUpdate> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| ClientUpdate::new(i, ParamVector::new(r.clone())))
        .collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

proptest! {
    #[test]
    fn aggregators_ignore_arrival_order(rows in matrix(4..=8, 1..=10), seed in any::<u64>()) {
        let ups = updates(&rows);
        let mut shuffled = ups.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut rng::from_seed(seed));
        let kinds = [
            AggregatorKind::FedAvg,
            AggregatorKind::Median,
            AggregatorKind::TrimmedMean,
            AggregatorKind::MultiKrum,
            AggregatorKind::ClippedClustering,
            AggregatorKind::SignGuard,
        ];
        for kind in kinds {
            let mut cfg = AggregatorConfig::new(kind);
            cfg.compromised = 1;
            prop_assert_eq!(cfg.aggregate(&ups).unwrap(), cfg.aggregate(&shuffled).unwrap(), "{:?}", kind);
        }
    }

    #[test]
    fn translation_equivariant_rules_commute_with_shifts(rows in matrix(4..=8, 1..=10), shift in prop::collection::vec(-5.0f64..5.0, 10)) {
        let d = rows[0].len();
        let shift = &shift[..d];
        let moved: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(shift).map(|(a, b)| a + b).collect()).collect();
        let (a, b) = (updates(&rows), updates(&moved));
        let plus = |v: ParamVector| -> Vec<f64> { v.iter().zip(shift).map(|(x, s)| x + s).collect() };
        prop_assert!(close(&plus(fed_avg(&a).unwrap()), &fed_avg(&b).unwrap(), 1e-12));
        prop_assert!(close(&plus(coord_median(&a).unwrap()), &coord_median(&b).unwrap(), 1e-12));
        prop_assert!(close(&plus(trimmed_mean(&a, 1).unwrap()), &trimmed_mean(&b, 1).unwrap(), 1e-12));
    }

    #[test]
    fn krum_selects_from_the_inputs(rows in matrix(4..=8, 1..=10)) {
        let ups = updates(&rows);
        let agg = multi_krum(&ups, 1, 1).unwrap();
        prop_assert!(rows.iter().any(|r| r.as_slice() == agg.model.as_slice()));
    }

    #[test]
    fn median_and_trimmed_mean_stay_in_range(rows in matrix(3..=8, 1..=10)) {
        let ups = updates(&rows);
        let med = coord_median(&ups).unwrap();
        let tm = trimmed_mean(&ups, (rows.len() - 1) / 2).unwrap();
        for j in 0..rows[0].len() {
            let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= med[j] && med[j] <= hi);
            prop_assert!(lo - 1e-12 <= tm[j] && tm[j] <= hi + 1e-12);
        }
    }

    #[test]
    fn clipped_clustering_respects_the_clip(rows in matrix(2..=8, 1..=10), tau in 0.1f64..5.0) {
        let agg = clipped_clustering(&updates(&rows), ClipThreshold::Fixed(tau)).unwrap();
        prop_assert!(agg.model.norm() <= tau * (1.0 + 1e-12));
        prop_assert!(agg.retained >= 1 && agg.retained <= rows.len());
    }

    #[test]
    fn sign_guard_retains_a_subset(rows in matrix(2..=8, 1..=10)) {
        let agg = sign_guard(&updates(&rows), true).unwrap();
        prop_assert!(agg.retained <= rows.len());
        prop_assert!(agg.model.is_finite());
    }

    #[test]
    fn robust_scale_is_positively_homogeneous(rows in matrix(1..=8, 1..=10), lambda in 0.0f64..10.0, power in -4i32..4) {
        let a = 2f64.powi(power);
        let zero = ParamVector::zeros(rows[0].len());
        let mut h1 = DeltaHistory::new(8).unwrap();
        let mut h2 = DeltaHistory::new(8).unwrap();
        for r in &rows {
            h1.push_global_delta(&zero, &ParamVector::new(r.clone())).unwrap();
            h2.push_global_delta(&zero, &ParamVector::new(r.iter().map(|x| a * x).collect())).unwrap();
        }
        let s1 = robust_scale(&h1, lambda).unwrap();
        let s2 = robust_scale(&h2, lambda).unwrap();
        prop_assert_eq!(s2.med, s1.med.scale(a));
        prop_assert_eq!(s2.mad, s1.mad.scale(a));
        prop_assert!((s2.mu - a * s1.mu).abs() <= 1e-12 * (1.0 + a * s1.mu));
        prop_assert!(s1.mad.iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn history_keeps_the_last_omega_entries(rows in matrix(1..=12, 1..=4), omega in 1usize..6) {
        let zero = ParamVector::zeros(rows[0].len());
        let mut h = DeltaHistory::new(omega).unwrap();
        for r in &rows {
            h.push_global_delta(&zero, &ParamVector::new(r.clone())).unwrap();
        }
        let kept: Vec<Vec<f64>> = h.entries().map(|e| e.to_vec()).collect();
        let start = rows.len().saturating_sub(omega);
        prop_assert_eq!(kept, rows[start..].to_vec());
    }

    #[test]
    fn perturbations_are_unit_and_opposing(v in prop::collection::vec(-10.0f64..10.0, 1..32)) {
        let v = ParamVector::new(v);
        prop_assume!(v.iter().any(|&x| x != 0.0));
        for kind in [PerturbationKind::InverseUnitVector, PerturbationKind::InverseSign] {
            let psi = perturbation(kind, &v).unwrap();
            prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
            prop_assert!(psi.dot(&v) < 0.0);
        }
    }

    #[test]
    fn mad_flags_are_affine_invariant(xs in prop::collection::vec(-10.0f64..10.0, 3..30), a in 0.5f64..4.0, b in -5.0f64..5.0) {
        let cfg = OutlierTestConfig::default();
        let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let fx = mad_outlier_flags(&xs, &cfg);
        let fy = mad_outlier_flags(&ys, &cfg);
        // Points sitting on the threshold can flip under rounding.
        let (med, mad) = fedsim::stats::median_mad(&xs);
        for (i, x) in xs.iter().enumerate() {
            let z = fedsim::stats::modified_z(*x, med, mad, &cfg);
            if (z - cfg.threshold).abs() > 1e-9 {
                prop_assert_eq!(fx[i], fy[i]);
            }
        }
    }

    #[test]
    fn dct_preserves_norms(v in prop::collection::vec(-10.0f64..10.0, 1..64)) {
        let c = dct2_orthonormal(&v);
        let n1 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let n2 = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((n1 - n2).abs() <= 1e-9 * (1.0 + n1));
    }

    #[test]
    fn foolsgold_weights_follow_their_clients(rows in matrix(2..=6, 2..=8), seed in any::<u64>()) {
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let w = foolsgold_weights(&refs);
        prop_assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let mut order: Vec<usize> = (0..rows.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng::from_seed(seed));
        let permuted: Vec<&[f64]> = order.iter().map(|&i| rows[i].as_slice()).collect();
        let wp = foolsgold_weights(&permuted);
        for (pos, &i) in order.iter().enumerate() {
            prop_assert!((wp[pos] - w[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn partitions_are_disjoint_and_cover(n in 20usize..400, groups in 2usize..6, extra in 0usize..10, p in 0.05f64..1.0, seed in any::<u64>()) {
        let ds = generate_blobs(n, groups, 3, 1.0, seed).unwrap();
        let cfg = PartitionConfig { p, groups, clients: groups + extra, seed };
        for part in [partition_noniid(&ds, &cfg).unwrap(), partition_iid(n, groups + extra, seed).unwrap()] {
            let mut all: Vec<usize> = part.shards().iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn root_dataset_bias_is_honoured(size in 10usize..100, bias in 0.0f64..0.9, seed in any::<u64>()) {
        let ds = generate_blobs(500, 5, 3, 1.0, 9).unwrap();
        let root = sample_root(&ds, &RootDatasetConfig { size, bias, seed }).unwrap();
        prop_assert_eq!(root.len(), size);
        if bias > 0.0 {
            let zeros = root.labels().iter().filter(|&&l| l == 0).count();
            prop_assert_eq!(zeros, (bias * size as f64).ceil() as usize);
        }
    }

    #[test]
    fn flatten_round_trip_is_exact(hidden in prop::collection::vec(1usize..8, 0..3), seed in any::<u64>()) {
        let mut layers = vec![4];
        layers.extend(hidden);
        layers.push(3);
        let spec = ModelSpec::mlp(layers).unwrap();
        let theta = init_model(&spec, seed);
        prop_assert_eq!(flatten(&unflatten(&spec, &theta).unwrap()), theta);
    }

    #[test]
    fn zero_learning_rate_is_the_identity(seed in any::<u64>(), batch in 1usize..20, iters in 1usize..4) {
        let ds = generate_blobs(60, 3, 4, 1.0, seed).unwrap();
        let spec = ModelSpec::mlp(vec![4, 5, 3]).unwrap();
        let theta = init_model(&spec, seed);
        let cfg = TrainingConfig { learning_rate: 0.0, batch_size: batch, local_iterations: iters };
        let shard: Vec<usize> = (0..30).collect();
        let phi = local_update(&theta, &ds, &shard, &cfg, &spec, &mut rng::from_seed(seed)).unwrap();
        prop_assert_eq!(phi, theta);
    }

    #[test]
    fn fltrust_ignores_client_update_scale(scales in prop::collection::vec(0.1f64..10.0, 4), seed in 0u64..1000) {
        let ds = generate_blobs(200, 3, 4, 1.0, seed).unwrap();
        let spec = ModelSpec::mlp(vec![4, 5, 3]).unwrap();
        let training = TrainingConfig { learning_rate: 0.1, batch_size: 16, local_iterations: 1 };
        let root = sample_root(&ds, &RootDatasetConfig { size: 40, bias: 0.0, seed }).unwrap();
        let theta = init_model(&spec, seed);
        let deltas: Vec<ParamVector> = (0..4)
            .map(|c| {
                let shard: Vec<usize> = (c * 50..c * 50 + 50).collect();
                let mut s = rng::stream(seed, Domain::ClientTraining, c as u64, 0);
                local_update(&theta, &ds, &shard, &training, &spec, &mut s).unwrap().sub(&theta)
            })
            .collect();
        let plain: Vec<ClientUpdate> = deltas.iter().enumerate().map(|(c, d)| ClientUpdate::new(c, theta.add(d))).collect();
        let scaled: Vec<ClientUpdate> = deltas
            .iter()
            .zip(&scales)
            .enumerate()
            .map(|(c, (d, s))| ClientUpdate::new(c, theta.add(&d.scale(*s))))
            .collect();
        let mut state = DefenseState::fltrust(RootContext { data: root, spec: spec.clone(), training }).unwrap();
        let a = state.aggregate(&theta, &plain, &mut rng::from_seed(1)).unwrap();
        let b = state.aggregate(&theta, &scaled, &mut rng::from_seed(1)).unwrap();
        prop_assert!(close(&a.model, &b.model, 1e-9));
    }
}
