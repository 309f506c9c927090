//! Attack impact of several attacks against several servers on one task.
//!
//!     cargo run --release --example attack_matrix [config.toml]
//!
//! Every cell is `I = A - A*` in accuracy points, where `A` is the no-attack
//! accuracy under the same server.

use fedsim::config::{AttackKind, ExperimentConfig, ServerKind};
use fedsim::simulator::{compute_attack_impact, run_experiment};

fn main() -> fedsim::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/desk.toml").into());
    let base = ExperimentConfig::load(&path)?;

    let servers = [ServerKind::FedAvg, ServerKind::ClippedClustering, ServerKind::Fltrust];
    let attacks = [AttackKind::Xfed, AttackKind::Lie, AttackKind::MinMax];

    print!("{:<20}{:>8}", "server", "A");
    for a in attacks {
        print!("{:>10}", a.name());
    }
    println!();
    for server in servers {
        let mut cfg = base.clone();
        cfg.server.kind = server;
        let clean = run_experiment(&cfg.without_attack())?;
        print!("{:<20}{:>8.3}", server.name(), clean.accuracy);
        for attack in attacks {
            cfg.attack.kind = attack;
            let attacked = run_experiment(&cfg)?;
            print!("{:>10.2}", 100.0 * compute_attack_impact(&clean, &attacked)?);
        }
        println!();
    }
    Ok(())
}
