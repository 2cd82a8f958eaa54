//! Fits both mean-field families to small planted threads and compares the
//! resulting bounds with exact values computed by enumeration.
//!
//! Usage: `cargo run --release --example mean_field [threads] [seed]`

use ddtm::corpus::{planted_params, random_shapes, synth_corpus, PlantedConfig, SynthSampler};
use ddtm::eval::{exact_log_likelihood, exact_log_z, exact_marginal_energy};
use ddtm::inference::fit_thread;
use ddtm::MfSchedule;

fn main() -> ddtm::Result<()> {
    let mut args = std::env::args().skip(1);
    let threads: usize = args.next().map_or(8, |s| s.parse().expect("thread count"));
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));
    let cfg = PlantedConfig {
        comment_bits: 2,
        thread_bits: 2,
        ..PlantedConfig::default()
    };
    let truth = planted_params(&cfg, seed)?;
    let shapes = random_shapes(&cfg, threads, seed + 1)?;
    let corpus = synth_corpus(
        &truth,
        &shapes,
        SynthSampler::default(),
        seed + 2,
        0.0,
        "planted",
    )?
    .corpus;
    println!(
        "{:<8} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "thread", "elbo_E", "E", "elbo_Z", "log Z", "approx ll", "log p(x)"
    );
    for thread in &corpus.train {
        let fit = fit_thread(thread, &truth, &MfSchedule::default(), None)?;
        println!(
            "{:<8} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            thread.id,
            fit.posterior.bound,
            exact_marginal_energy(thread, &truth)?,
            fit.joint.bound,
            exact_log_z(&thread.shape(), &truth)?,
            fit.approx_log_likelihood(),
            exact_log_likelihood(thread, &truth)?
        );
    }
    Ok(())
}
