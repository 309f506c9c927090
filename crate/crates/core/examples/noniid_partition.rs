//! Label-skew partitioning: how the degree of non-IID `p` concentrates each
//! label in its client group.
//!
//!     cargo run --example noniid_partition

use fedsim::data::{generate_blobs, own_group_fraction, partition_noniid, PartitionConfig};

fn main() -> fedsim::Result<()> {
    let data = generate_blobs(10_000, 10, 8, 1.0, 1)?;
    println!("{:>5}  {:>10}  {:>14}", "p", "own group", "shard sizes");
    for p in [0.1, 0.3, 0.5, 0.7, 0.9, 1.0] {
        let cfg = PartitionConfig {
            p,
            groups: 10,
            clients: 100,
            seed: 42,
        };
        let partition = partition_noniid(&data, &cfg)?;
        let sizes: Vec<usize> = partition.shards().iter().map(Vec::len).collect();
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        println!("{p:>5}  {:>10.4}  {:>6}..{:<6}", own_group_fraction(&data, &partition, 10), lo, hi);
    }
    Ok(())
}
