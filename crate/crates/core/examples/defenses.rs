//! The stateful defenses on a toy round: eight similar honest updates and two
//! colluding attackers that submit the same flipped update.
//!
//!     cargo run --example defenses

use fedsim::aggregation::ClientUpdate;
use fedsim::data::{generate_blobs, sample_root, RootDatasetConfig};
use fedsim::defenses::{DefenseState, RootContext};
use fedsim::model::{init_model, local_update, ModelSpec, TrainingConfig};
use fedsim::stats::OutlierTestConfig;
use fedsim::{rng, ParamVector};

fn main() -> fedsim::Result<()> {
    let data = generate_blobs(400, 3, 4, 0.7, 5)?;
    let spec = ModelSpec::logistic_regression(4, 3)?;
    let training = TrainingConfig {
        learning_rate: 0.5,
        batch_size: 16,
        local_iterations: 3,
    };
    let theta = init_model(&spec, 9);

    // Honest clients train on disjoint slices; attackers flip one honest delta.
    let mut updates = Vec::new();
    for c in 0..8 {
        let shard: Vec<usize> = (c * 40..(c + 1) * 40).collect();
        let phi = local_update(&theta, &data, &shard, &training, &spec, &mut rng::from_seed(c as u64))?;
        updates.push(ClientUpdate::new(c, phi));
    }
    let flipped: ParamVector = theta.add_scaled(-3.0, &updates[0].model.sub(&theta));
    updates.push(ClientUpdate::new(8, flipped.clone()));
    updates.push(ClientUpdate::new(9, flipped));

    let root = sample_root(&data, &RootDatasetConfig::default())?;
    let mut servers = [
        ("fltrust", DefenseState::fltrust(RootContext { data: root, spec: spec.clone(), training })?),
        ("flame", DefenseState::flame(OutlierTestConfig::default())),
        ("foolsgold", DefenseState::foolsgold()),
        ("freqfed", DefenseState::freqfed(0.25)?),
    ];
    let honest_mean = fedsim::param::mean_of(updates[..8].iter().map(|u| u.model.as_slice()), theta.len());
    for (name, state) in servers.iter_mut() {
        let out = state.aggregate(&theta, &updates, &mut rng::from_seed(0))?;
        println!(
            "{name:<10} kept {:>2}  distance to honest mean {:.4}",
            out.retained,
            out.model.sub(&honest_mean).norm()
        );
        if *name == "foolsgold" {
            let w: Vec<String> = state.foolsgold_weights().iter().map(|(c, w)| format!("{c}:{w:.2}")).collect();
            println!("           weights {}", w.join(" "));
        }
    }
    Ok(())
}
