#![allow(dead_code)]

use clanwalk_core::kernel::{validate_kernel, Kernel, KernelSpec};

pub fn spec_d1() -> KernelSpec {
    KernelSpec {
        dim: 1,
        entries: vec![(vec![1], 0.7), (vec![-1], 0.3)],
    }
}

pub fn spec_d3() -> KernelSpec {
    KernelSpec {
        dim: 3,
        entries: vec![
            (vec![1, 0, 0], 0.3),
            (vec![-1, 0, 0], 0.1),
            (vec![0, 1, 0], 0.15),
            (vec![0, -1, 0], 0.15),
            (vec![0, 0, 1], 0.15),
            (vec![0, 0, -1], 0.15),
        ],
    }
}

pub fn d1() -> Kernel {
    validate_kernel(&spec_d1()).unwrap()
}

pub fn d3() -> Kernel {
    validate_kernel(&spec_d3()).unwrap()
}

pub fn symmetric_d2() -> Kernel {
    validate_kernel(&KernelSpec {
        dim: 2,
        entries: vec![
            (vec![1, 0], 0.25),
            (vec![-1, 0], 0.25),
            (vec![0, 1], 0.25),
            (vec![0, -1], 0.25),
        ],
    })
    .unwrap()
}

/// Mean and standard error of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}
