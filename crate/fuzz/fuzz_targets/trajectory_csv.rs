#![no_main]

use libfuzzer_sys::fuzz_target;
use mutsel_core::harness::io::read_trajectory_csv;
use mutsel_core::Grid1D;

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else {
        return;
    };
    if let Ok(text) = std::str::from_utf8(rest) {
        let grid = Grid1D::new(0.0, 1.0, usize::from(n % 8) + 2).unwrap();
        let _ = read_trajectory_csv(text, grid);
    }
});
