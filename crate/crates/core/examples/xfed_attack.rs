//! Step-by-step XFED crafting: history of global deltas, robust scale, and the
//! crafted update for both perturbation directions.
//!
//!     cargo run --example xfed_attack

use fedsim::attacks::{robust_scale, xfed_craft, DeltaHistory, PerturbationKind, XfedConfig};
use fedsim::rng;
use fedsim::ParamVector;

fn main() -> fedsim::Result<()> {
    // Global models seen by one attacker over five rounds.
    let globals: Vec<ParamVector> = [
        [0.00, 0.00, 0.00],
        [0.10, -0.05, 0.02],
        [0.22, -0.08, 0.03],
        [0.30, -0.14, 0.03],
        [0.41, -0.17, 0.05],
    ]
    .iter()
    .map(|g| ParamVector::new(g.to_vec()))
    .collect();

    let mut hist = DeltaHistory::new(8)?;
    for pair in globals.windows(2) {
        hist.push_global_delta(&pair[0], &pair[1])?;
    }
    let scale = robust_scale(&hist, 4.0).expect("history is not empty");
    println!("med = {:?}", scale.med.as_slice());
    println!("mad = {:?}", scale.mad.as_slice());
    println!("mu  = {:.6}", scale.mu);

    // The attacker's own benign update for this round.
    let benign = ParamVector::new(vec![0.12, -0.02, 0.01]);
    for perturbation in [PerturbationKind::InverseUnitVector, PerturbationKind::InverseSign] {
        let cfg = XfedConfig {
            perturbation,
            ..XfedConfig::default()
        };
        let out = xfed_craft(&benign, &hist, &cfg, &mut rng::from_seed(1))?;
        println!(
            "{perturbation:?}: crafted {:?}, distance to benign {:.6}",
            out.update.as_slice(),
            out.update.sub(&benign).norm()
        );
    }

    let jittered = XfedConfig {
        jitter: 0.2,
        ..XfedConfig::default()
    };
    let out = xfed_craft(&benign, &hist, &jittered, &mut rng::from_seed(1))?;
    println!("with jitter: {:?}", out.update.as_slice());
    Ok(())
}
