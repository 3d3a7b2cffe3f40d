#![no_main]

use libfuzzer_sys::fuzz_target;
use mutsel_core::coeff::read_matrix_csv;

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else {
        return;
    };
    if let Ok(text) = std::str::from_utf8(rest) {
        let _ = read_matrix_csv(text, usize::from(n % 16) + 1);
    }
});
