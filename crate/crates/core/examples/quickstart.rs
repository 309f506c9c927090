//! Runs one experiment from a config file and prints its learning curve.
//!
//!     cargo run --release --example quickstart [config.toml]

use fedsim::config::ExperimentConfig;
use fedsim::simulator::{window_accuracy, Simulation};

fn main() -> fedsim::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/desk.toml").into());
    let cfg = ExperimentConfig::load(&path)?;
    let mut sim = Simulation::new(&cfg)?;
    println!(
        "{} clients ({} malicious, {} fake), {} parameters, server {}, attack {}",
        cfg.clients,
        sim.malicious().len(),
        sim.fakes().len(),
        sim.spec().dim(),
        cfg.server.kind.name(),
        cfg.attack.label()
    );

    let mut records = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        let r = sim.run_round()?;
        if r.round % 10 == 0 || r.round == 1 {
            let mu = r.mean_mu.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into());
            println!("round {:>4}  acc {:.4}  kept {:>3}  mu {mu}", r.round, r.accuracy, r.retained);
        }
        records.push(r);
    }
    println!("A = {:.4}", window_accuracy(&records));
    Ok(())
}
