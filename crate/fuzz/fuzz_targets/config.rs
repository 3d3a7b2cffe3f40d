#![no_main]

use libfuzzer_sys::fuzz_target;
use mutsel_core::harness::{Config, ExperimentConfig};

fuzz_target!(|data: &str| {
    let Ok(cfg) = Config::parse(data) else {
        return;
    };
    let _ = cfg.f64_list("entropy.q");
    let _ = cfg.ladder("study.identity_ladder");
    let _ = cfg.coeff("coeff.r");
    let _ = cfg.kernel();
    let _ = cfg.usize("grid.n");
    let _ = cfg.bool("output.snapshots");
    let _ = ExperimentConfig::from_config(cfg);
});
