//! How each aggregation rule reacts to one far-away update among honest ones.
//!
//!     cargo run --example robust_aggregators

use fedsim::aggregation::{krum_scores, AggregatorConfig, AggregatorKind, ClientUpdate};
use fedsim::ParamVector;

fn main() -> fedsim::Result<()> {
    let honest = [[1.0, 0.9], [1.1, 1.0], [0.9, 1.1], [1.0, 1.05], [1.05, 0.95]];
    let mut updates: Vec<ClientUpdate> = honest
        .iter()
        .enumerate()
        .map(|(i, v)| ClientUpdate::new(i, ParamVector::new(v.to_vec())))
        .collect();
    updates.push(ClientUpdate::new(5, ParamVector::new(vec![-20.0, 30.0])));

    for kind in [
        AggregatorKind::FedAvg,
        AggregatorKind::Median,
        AggregatorKind::TrimmedMean,
        AggregatorKind::MultiKrum,
        AggregatorKind::ClippedClustering,
        AggregatorKind::SignGuard,
    ] {
        let mut cfg = AggregatorConfig::new(kind);
        cfg.compromised = 1;
        let out = cfg.aggregate(&updates)?;
        println!(
            "{:<20} -> ({:>8.4}, {:>8.4})  kept {}",
            format!("{kind:?}"),
            out.model[0],
            out.model[1],
            out.retained
        );
    }

    println!("\nKrum scores (c = 1):");
    for (client, score) in krum_scores(&updates, 1)? {
        println!("  client {client}: {score:.4}");
    }
    Ok(())
}
