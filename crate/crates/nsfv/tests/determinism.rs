//! Bit-reproducibility of full runs.
//!
//! Every reduction uses a fixed-shape tree whose shape depends only on the
//! input length, so diagnostics are identical bits run to run and, with the
//! `parallel` feature, across thread counts. The same test body compiles in
//! the sequential fallback, where the double-run check still applies.

use nsfv::stepper::{self, InitKind, RunConfig};

fn short_run() -> Vec<(u64, u64, u64)> {
    let config = RunConfig {
        n: 16,
        t_end: 5.0 * 0.1 / 16.0,
        init: InitKind::Smooth,
        ..RunConfig::default()
    };
    let artifacts = stepper::run(&config).unwrap();
    artifacts
        .records
        .iter()
        .map(|r| {
            (
                r.mass.to_bits(),
                r.total_energy.to_bits(),
                r.entropy_residual.to_bits(),
            )
        })
        .collect()
}

#[test]
fn identical_configs_give_identical_bits() {
    let a = short_run();
    let b = short_run();
    assert_eq!(a, b, "two runs of the same config diverged");
}

#[cfg(feature = "parallel")]
#[test]
fn thread_count_does_not_change_results() {
    let default_pool = short_run();
    for threads in [1usize, 3] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let constrained = pool.install(short_run);
        assert_eq!(
            default_pool, constrained,
            "results changed with {threads} worker threads"
        );
    }
}
