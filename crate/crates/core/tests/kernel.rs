mod common;

use clanwalk_core::kernel::{beta_d, minimize_phi, validate_kernel, Assumption, KernelSpec};
use clanwalk_core::oracle::Bracket;
use common::*;

#[test]
fn validates_test_kernels_with_their_drift() {
    let k = d1();
    assert!((k.drift()[0] - 0.4).abs() < 1e-15);
    let k3 = d3();
    let dr = k3.drift();
    assert!((dr[0] - 0.2).abs() < 1e-15 && dr[1].abs() < 1e-15 && dr[2].abs() < 1e-15);
    assert_eq!(k3.range(), 1);
}

#[test]
fn reports_each_violated_assumption() {
    let r = validate_kernel(&KernelSpec {
        dim: 1,
        entries: vec![(vec![2], 1.0)],
    })
    .unwrap_err();
    assert!(r.violates(Assumption::Irreducible));
    assert!(r.to_string().contains("index 2"));

    let r = validate_kernel(&KernelSpec {
        dim: 1,
        entries: vec![(vec![1], 0.7), (vec![-1], 0.2)],
    })
    .unwrap_err();
    assert!(r.violates(Assumption::Stochastic));

    let r = validate_kernel(&KernelSpec {
        dim: 1,
        entries: vec![(vec![0], 0.5), (vec![1], 0.25), (vec![-1], 0.25)],
    })
    .unwrap_err();
    assert!(r.violates(Assumption::Stochastic));
    assert!(!r.violates(Assumption::Irreducible));
}

#[test]
fn zero_drift_is_flagged_not_fatal() {
    let k = symmetric_d2();
    assert!(!k.has_drift());
    assert!(k.require_drift().is_err());
    assert!(d1().require_drift().is_ok());
}

#[test]
fn dual_negates_offsets_and_is_an_involution() {
    let k = d1();
    let dk = k.dual();
    assert_eq!(dk.prob(&clanwalk_core::site::site(&[-1])), 0.7);
    assert_eq!(dk.prob(&clanwalk_core::site::site(&[1])), 0.3);
    assert_eq!(dk.dual(), k);
    let s = symmetric_d2();
    assert_eq!(s.dual(), s);
    let k3 = d3();
    assert!((k3.dual().drift()[0] + 0.2).abs() < 1e-15);
}

#[test]
fn phi_fixtures() {
    let k = d1();
    assert_eq!(k.phi(&[0.0]), 1.0);
    let z = 0.5 * (3.0f64 / 7.0).ln();
    assert!((k.phi(&[z]) - 0.916515).abs() < 1e-6);
    let k3 = d3();
    let v = k3.phi(&[-0.5 * 3.0f64.ln(), 0.0, 0.0]);
    assert!((v - (0.6 + 2.0 * 0.03f64.sqrt())).abs() < 1e-12);
    assert!((v - 0.946410).abs() < 1e-6);
}

#[test]
fn phi_overflow_returns_infinity() {
    let k = d1();
    assert_eq!(k.phi(&[1000.0]), f64::INFINITY);
    assert!(k.phi(&[600.0]).is_finite());
    assert!(k.phi(&[710.0]).is_infinite());
    let w = k.phi(&[-501.0]);
    assert!(w.is_finite() && w > 0.0);
}

#[test]
fn tilt_fixtures() {
    let t = minimize_phi(&d1(), 1e-10).unwrap();
    assert!((t.z0[0] + 0.423649).abs() < 1e-6);
    assert!((t.phi_min - 0.916515).abs() < 1e-6);
    assert!((t.beta - 0.083485).abs() < 1e-6);
    assert!((t.beta - (1.0 - 2.0 * 0.21f64.sqrt())).abs() < 1e-12);
    assert!(t.gradient_norm_at_z0 <= 1e-10);

    let t3 = minimize_phi(&d3(), 1e-10).unwrap();
    assert!((t3.z0[0] + 0.549306).abs() < 1e-6);
    assert!(t3.z0[1].abs() < 1e-9 && t3.z0[2].abs() < 1e-9);
    assert!((t3.beta - 0.053590).abs() < 1e-6);
    assert!((t3.phi_min - d3().phi(&t3.z0)).abs() < 1e-10);
}

#[test]
fn symmetric_kernel_has_zero_tilt() {
    let t = minimize_phi(&symmetric_d2(), 1e-10).unwrap();
    assert_eq!(t.z0, vec![0.0, 0.0]);
    assert_eq!(t.phi_min, 1.0);
    assert_eq!(t.beta, 0.0);
}

#[test]
fn beta_d_takes_the_minimum_and_carries_the_bracket() {
    let t = minimize_phi(&d1(), 1e-10).unwrap();
    let b = beta_d(&t, Bracket::exact(0.4)).unwrap();
    assert!((b.value - 0.083485).abs() < 1e-6);
    let mut t2 = t.clone();
    t2.beta = 0.5;
    let b2 = beta_d(&t2, Bracket::new(0.19, 0.21, "test")).unwrap();
    assert!((b2.value - 0.2).abs() < 1e-15);
    assert_eq!((b2.lower, b2.upper), (0.19, 0.21));
    assert!(beta_d(&t, Bracket::exact(0.0)).is_err());
    assert!(beta_d(&t, Bracket::new(0.5, 1.5, "bad")).is_err());
}

mod random_kernels {
    use clanwalk_core::kernel::{minimize_phi, validate_kernel, Kernel, KernelSpec};
    use proptest::prelude::*;

    /// Positive weight on every ±e_k plus up to two longer jumps.
    fn spec() -> impl Strategy<Value = KernelSpec> {
        (1usize..=3).prop_flat_map(|dim| {
            (
                Just(dim),
                prop::collection::vec(0.05f64..1.0, 2 * dim),
                prop::collection::vec((prop::collection::vec(-2i32..=2, dim), 0.0f64..0.5), 0..=2),
            )
                .prop_map(|(dim, nn, extra)| {
                    let mut entries: Vec<(Vec<i32>, f64)> = Vec::new();
                    for k in 0..dim {
                        for (j, sign) in [1, -1].into_iter().enumerate() {
                            let mut e = vec![0; dim];
                            e[k] = sign;
                            entries.push((e, nn[2 * k + j]));
                        }
                    }
                    for (off, w) in extra {
                        if off.iter().any(|&c| c != 0) && !entries.iter().any(|(o, _)| *o == off) {
                            entries.push((off, w));
                        }
                    }
                    let total: f64 = entries.iter().map(|e| e.1).sum();
                    entries.iter_mut().for_each(|e| e.1 /= total);
                    KernelSpec { dim, entries }
                })
        })
    }

    fn kernel(s: &KernelSpec) -> Kernel {
        validate_kernel(s).expect("generated kernels are valid")
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn phi_is_one_at_the_origin(s in spec()) {
            let k = kernel(&s);
            prop_assert!((k.phi(&vec![0.0; s.dim]) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn gradient_matches_finite_differences(s in spec(), z in prop::collection::vec(-1.0f64..1.0, 3)) {
            let k = kernel(&s);
            let z = &z[..s.dim];
            let g = k.phi_gradient(z);
            let h = 1e-6;
            for i in 0..s.dim {
                let (mut a, mut b) = (z.to_vec(), z.to_vec());
                a[i] += h;
                b[i] -= h;
                let fd = (k.phi(&a) - k.phi(&b)) / (2.0 * h);
                prop_assert!((fd - g[i]).abs() < 1e-6 * (1.0 + g[i].abs()), "{} vs {}", fd, g[i]);
            }
        }

        #[test]
        fn hessian_is_positive_semidefinite(
            s in spec(),
            z in prop::collection::vec(-1.0f64..1.0, 3),
            v in prop::collection::vec(-1.0f64..1.0, 3),
        ) {
            let k = kernel(&s);
            let hess = k.phi_hessian(&z[..s.dim]);
            let mut q = 0.0;
            for i in 0..s.dim {
                for j in 0..s.dim {
                    prop_assert!((hess[i][j] - hess[j][i]).abs() < 1e-12);
                    q += v[i] * hess[i][j] * v[j];
                }
            }
            prop_assert!(q >= -1e-12);
        }

        #[test]
        fn minimizer_beats_random_points(s in spec(), z in prop::collection::vec(-2.0f64..2.0, 3)) {
            let k = kernel(&s);
            let t = minimize_phi(&k, 1e-10).unwrap();
            prop_assert!(t.phi_min <= k.phi(&z[..s.dim]) + 1e-12);
            prop_assert!(t.beta >= 0.0 && t.beta < 1.0);
            prop_assert_eq!(t.beta > 1e-9, k.has_drift());
        }

        #[test]
        fn tilt_ignores_entry_order(s in spec()) {
            let mut r = s.clone();
            r.entries.reverse();
            let a = minimize_phi(&kernel(&s), 1e-10).unwrap();
            let b = minimize_phi(&kernel(&r), 1e-10).unwrap();
            prop_assert!((a.beta - b.beta).abs() < 1e-10);
        }

        #[test]
        fn dual_mirrors_phi(s in spec(), z in prop::collection::vec(-1.0f64..1.0, 3)) {
            let k = kernel(&s);
            let d = k.dual();
            let z = &z[..s.dim];
            let mz: Vec<f64> = z.iter().map(|x| -x).collect();
            prop_assert!((k.phi(z) - d.phi(&mz)).abs() < 1e-12 * k.phi(z).max(1.0));
            let a = minimize_phi(&k, 1e-10).unwrap();
            let b = minimize_phi(&d, 1e-10).unwrap();
            prop_assert!((a.beta - b.beta).abs() < 1e-9);
        }
    }
}
