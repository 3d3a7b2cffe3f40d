#![no_main]

use libfuzzer_sys::fuzz_target;
use mutsel_core::{Grid1D, Kernel, Kernel2DSpec, KernelSpec};

fn reads_file(spec: &Kernel2DSpec) -> bool {
    matches!(spec, Kernel2DSpec::Tabulated(_))
}

fuzz_target!(|data: &str| {
    let Ok(spec) = data.parse::<KernelSpec>() else {
        return;
    };
    let file_backed = match &spec {
        KernelSpec::Blind(_) => false,
        KernelSpec::Perturbed { k1, .. } => reads_file(k1),
        KernelSpec::General(k) => reads_file(k),
    };
    if !file_backed {
        let grid = Grid1D::new(0.0, 1.0, 6).unwrap();
        let _ = Kernel::from_spec(&spec, &grid, None);
    }
});
