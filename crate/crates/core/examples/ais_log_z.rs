//! Estimates the log normalizer of a planted thread shape with annealed
//! importance sampling at increasing chain lengths, next to the exact value.
//!
//! Usage: `cargo run --release --example ais_log_z [seed]`

use ddtm::corpus::{planted_params, PlantedConfig};
use ddtm::eval::{ais_log_z, exact_log_z, AisConfig};
use ddtm::ThreadShape;

fn main() -> ddtm::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .map_or(1, |s| s.parse().expect("seed"));
    let params = planted_params(&PlantedConfig::default(), seed)?;
    let shape = ThreadShape::new(vec![None, Some(0), Some(0), Some(1)], vec![4, 3, 2, 5])?;
    let exact = exact_log_z(&shape, &params)?;
    println!("exact log Z = {exact:.4}");
    for steps in [10, 100, 1000, 2000] {
        let cfg = AisConfig {
            num_intermediate: steps,
            seed,
            ..AisConfig::default()
        };
        let r = ais_log_z(&shape, &params, &cfg)?;
        println!(
            "{steps:>5} intermediate distributions x {} runs: {:.4} +/- {:.4} (error {:+.4})",
            cfg.num_runs,
            r.log_z,
            r.se,
            r.log_z - exact
        );
    }
    Ok(())
}
