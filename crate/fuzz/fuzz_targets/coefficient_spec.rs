#![no_main]

use libfuzzer_sys::fuzz_target;
use mutsel_core::{CoefficientSpec, Grid1D};

fuzz_target!(|data: &str| {
    if let Ok(spec) = data.parse::<CoefficientSpec>() {
        let grid = Grid1D::new(0.0, 1.0, 8).unwrap();
        let _ = spec.sample(&grid);
        let _ = spec.to_string().parse::<CoefficientSpec>();
    }
});
