//! Runs a sweep spec (paired no-attack / attacked runs) and then builds the
//! impact table from the written run directories.
//!
//!     cargo run --release --example lambda_sweep [sweep.toml] [out-dir]

use std::path::PathBuf;

use fedsim::report::{cmd_report, cmd_sweep};

fn main() -> fedsim::Result<()> {
    let mut args = std::env::args().skip(1);
    let spec = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/sweep-lambda.toml").into());
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/lambda-sweep".into()));

    println!("{:>8}  {:>8}  {:>8}  {:>8}", "value", "A", "A*", "I");
    for row in cmd_sweep(spec.as_ref(), &out)? {
        let f = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        println!("{:>8}  {:>8}  {:>8}  {:>8}", row.value, f(row.no_attack), f(row.attacked), f(row.impact()));
    }
    println!("impact.csv written to {}", out.display());

    // All points share the server, so every lambda lands in the same cell;
    // report the first point only.
    let first = std::fs::read_dir(&out)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .min()
        .expect("sweep wrote at least one point");
    print!("{}", cmd_report(&[first], &out)?.render());
    Ok(())
}
