mod common;

use clanwalk_core::estimators::Moments;
use clanwalk_core::kernel::{beta_d, minimize_phi};
use clanwalk_core::oracle::*;
use clanwalk_core::rng;
use clanwalk_core::site::{site, ORIGIN};
use clanwalk_core::walk::{sample_excursion, MartingaleCertifier, DEFAULT_STEP_BUDGET};
use common::{d1, d3};

#[test]
fn one_dimensional_escape_is_gamblers_ruin() {
    let k = d1();
    let f = escape_probability(&k, &[ORIGIN], 60).unwrap();
    let b = f.bracket(&site(&[1]));
    assert!(b.width() < 1e-6, "{b:?}");
    assert!(b.contains(4.0 / 7.0, 1e-9), "{b:?}");
    for x in 1..20 {
        let exact = 1.0 - (3.0f64 / 7.0).powi(x);
        assert!(f.bracket(&site(&[x])).contains(exact, 1e-9));
        // Upstream sites hit the origin surely.
        assert!(f.bracket(&site(&[-x])).contains(0.0, 1e-9));
    }
    let o = f.bracket(&ORIGIN);
    assert!(o.lower == 0.0 && o.upper == 0.0);
    let q = f.after_first_step(&ORIGIN);
    assert!(q.contains(0.4, 1e-9) && q.width() < 1e-6, "{q:?}");
}

#[test]
fn dual_escape_mirrors_primal() {
    let k = d1();
    let f = escape_probability(&k.dual(), &[ORIGIN], 60).unwrap();
    assert!(f.bracket(&site(&[-1])).contains(4.0 / 7.0, 1e-9));
    assert!(f.after_first_step(&ORIGIN).contains(0.4, 1e-9));
}

#[test]
fn brackets_tighten_with_radius() {
    let k = d3();
    let small = escape_probability(&k, &[ORIGIN], 6).unwrap();
    let large = escape_probability(&k, &[ORIGIN], 12).unwrap();
    let x = site(&[1, 0, 0]);
    let (a, b) = (small.bracket(&x), large.bracket(&x));
    assert!(b.width() <= a.width());
    assert!(a.lower <= b.lower + 1e-12 && b.upper <= a.upper + 1e-12);
}

#[test]
fn escape_bracket_sandwiches_monte_carlo() {
    for k in [d1(), d3()] {
        let f = escape_probability_adaptive(&k, &[ORIGIN], &[ORIGIN], 1e-5, 32).unwrap();
        let q = f.after_first_step(&ORIGIN);
        let cert = MartingaleCertifier::new(&k, &[ORIGIN], 1e-5);
        let mut r = rng::stream(31, 0, 0);
        let mut m = Moments::default();
        for _ in 0..50_000 {
            let e = sample_excursion(&k, &cert, &mut r, DEFAULT_STEP_BUDGET).unwrap();
            m.push(if e.is_none() { 1.0 } else { 0.0 });
        }
        assert!(
            m.mean() >= q.lower - 3.0 * m.se() - 1e-5,
            "{q:?} {}",
            m.mean()
        );
        assert!(m.mean() <= q.upper + 3.0 * m.se(), "{q:?} {}", m.mean());
    }
}

#[test]
fn beta_d_uses_escape_bracket() {
    let k = d1();
    let tilt = minimize_phi(&k, 1e-10).unwrap();
    let f = escape_probability(&k, &[ORIGIN], 60).unwrap();
    let b = beta_d(&tilt, f.after_first_step(&ORIGIN)).unwrap();
    assert!((b.value - 0.083485).abs() < 1e-6);
}

#[test]
fn survival_curve_basic_shape() {
    let k = d3();
    let grid = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0];
    let c = survival_curve(&k, &[ORIGIN], &site(&[-2, 1, 0]), &grid, 1e-10).unwrap();
    assert_eq!(c.values[0], 1.0);
    assert!(c.values.windows(2).all(|w| w[1] <= w[0]));
    assert!(c.error_bounds.iter().all(|&e| (0.0..=1e-9).contains(&e)));
    let inside = survival_curve(&k, &[ORIGIN], &ORIGIN, &grid, 1e-10).unwrap();
    assert!(inside.values.iter().all(|&v| v == 0.0));
    assert!(survival_curve(&k, &[ORIGIN], &ORIGIN, &[-1.0], 1e-10).is_err());
}

#[test]
fn survival_matches_gamblers_ruin_limit() {
    // For the d=1 walk started at x > 0 the escape probability 1 − (3/7)^x is
    // the large-time limit; from the dual side the roles of ±x swap.
    let k = d1();
    let grid = [40.0, 80.0, 160.0];
    for (kernel, x) in [(k.clone(), 2), (k.dual(), -2)] {
        let c = survival_curve(&kernel, &[ORIGIN], &site(&[x]), &grid, 1e-10).unwrap();
        let limit = 1.0 - (3.0f64 / 7.0).powi(2);
        let last = *c.values.last().unwrap();
        assert!(
            last >= limit - 1e-9 && last - limit < 1e-6,
            "{last} vs {limit}"
        );
    }
}

#[test]
fn survival_before_first_jump_is_exponential() {
    // From x = 1 the origin is reached either by a first jump to the left or
    // after at least three jumps.
    let k = d1();
    let t = 0.3;
    let c = survival_curve(&k, &[ORIGIN], &site(&[1]), &[t], 1e-12).unwrap();
    let p1 = 1.0 - (-t).exp();
    let poisson = |n: i32| (-t).exp() * t.powi(n) / (1..=n).map(f64::from).product::<f64>();
    let lower_hit = poisson(1) * 0.3;
    let p3 = p1 - poisson(1) - poisson(2);
    let upper_hit = 0.3 * p1 + 0.7 * p3;
    let hit = 1.0 - c.values[0];
    assert!(
        hit >= lower_hit - 1e-10 && hit <= upper_hit + 1e-10,
        "{hit}"
    );
}

#[test]
fn zero_lambda_laws() {
    let k = d3();
    let rho = 0.1;
    let law0 = zero_lambda_product_law(&k, &[ORIGIN], rho, Horizon::Finite(0.0), 1e-10).unwrap();
    assert_eq!(law0.intensity(&ORIGIN).mid(), 0.0);
    assert!((law0.intensity(&site(&[1, 0, 0])).mid() - rho).abs() < 1e-12);
    let law2 = zero_lambda_product_law(&k, &[ORIGIN], rho, Horizon::Finite(2.0), 1e-10).unwrap();
    let lawi = zero_lambda_product_law(&k, &[ORIGIN], rho, Horizon::Infinite, 1e-6).unwrap();
    for x in [
        site(&[1, 0, 0]),
        site(&[-1, 0, 0]),
        site(&[0, 2, 1]),
        site(&[3, 0, 0]),
    ] {
        let (a, b) = (law2.intensity(&x), lawi.intensity(&x));
        assert!(b.lower <= a.upper + 1e-12, "{x:?}");
        assert!(a.upper <= rho + 1e-12);
    }
    let tau = zero_lambda_tau_survival(&k, &[ORIGIN], rho, &[0.0, 1.0, 5.0], 1e-10).unwrap();
    assert!((tau[0].mid() - (-rho).exp()).abs() < 1e-12);
    assert!(tau.windows(2).all(|w| w[1].upper <= w[0].lower + 1e-12));
    let tiny = zero_lambda_tau_survival(&k, &[ORIGIN], 1e-9, &[5.0], 1e-10).unwrap();
    assert!(tiny[0].lower > 1.0 - 1e-7);
}

#[test]
fn tau_survival_at_zero_matches_direct_simulation() {
    // P(no particle on Λ at time 0) under ν_ρ, by brute force.
    let rho = 0.3;
    let lambda = [ORIGIN, site(&[1, 0, 0])];
    let tau = zero_lambda_tau_survival(&d3(), &lambda, rho, &[0.0], 1e-10).unwrap();
    let mut r = rng::stream(2, 0, 0);
    let mut m = Moments::default();
    for _ in 0..50_000 {
        let empty = lambda.iter().all(|_| rng::poisson(&mut r, rho) == 0);
        m.push(f64::from(u8::from(empty)));
    }
    assert!((m.mean() - tau[0].mid()).abs() < 3.0 * m.se());
    assert!((tau[0].mid() - (-2.0 * rho).exp()).abs() < 1e-12);
}

#[test]
fn tau_log_survival_is_asymptotically_linear() {
    let k = d3();
    let grid: Vec<f64> = (0..=20).map(|i| i as f64).collect();
    let tau = zero_lambda_tau_survival(&k, &[ORIGIN], 0.1, &grid, 1e-10).unwrap();
    let logs: Vec<f64> = tau.iter().map(|b| b.mid().ln()).collect();
    let slopes: Vec<f64> = logs.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(slopes.iter().all(|&s| s < 0.0));
    let (a, b) = (slopes[slopes.len() - 2], slopes[slopes.len() - 1]);
    assert!((a - b).abs() < 0.01 * b.abs(), "{a} {b}");
}

#[test]
fn hit_mass_is_bracketed() {
    let m = hit_mass(&d3(), &[ORIGIN], &[0.0, 1.0, 10.0], 1e-10).unwrap();
    assert_eq!(m[0].mid(), 1.0);
    assert!(m[1].lower > 1.0 && m[2].lower > m[1].upper);
    assert!(m.iter().all(|b| b.width() < 1e-8));
}

/// d=1 reference: with q = 0.4 and u = (1−z)² − 0.84, the Laplace transform
/// of σ is G(z) = q/√u, hence E[e^{zσ}(1+σ+σ²)] = G + G′ + G″.
fn d1_rho_c(z: f64) -> f64 {
    let q = 0.4;
    let u = (1.0 - z).powi(2) - 0.84;
    let g = q / u.sqrt();
    let g1 = q * (1.0 - z) * u.powf(-1.5);
    let g2 = q * (-u.powf(-1.5) + 3.0 * (1.0 - z).powi(2) * u.powf(-2.5));
    1.0 / (g + g1 + g2)
}

#[test]
fn rho_c_reference_values() {
    // E[σ] = 1 + 1.5·3.5 = 6.25 from the renewal structure.
    assert!((d1_rho_c(0.0) - 0.008_461_131_676).abs() < 1e-11);
    assert!((d1_rho_c(0.04) - 0.001_717_784_955).abs() < 1e-11);
}

#[test]
fn rho_c_matches_closed_form_and_is_stable() {
    let k = d1();
    let tilt = minimize_phi(&k, 1e-10).unwrap();
    let f = escape_probability(&k, &[ORIGIN], 60).unwrap();
    let bd = beta_d(&tilt, f.after_first_step(&ORIGIN)).unwrap();
    let cert = MartingaleCertifier::new(&k, &[ORIGIN], 1e-6);
    let a = rho_c_estimate(&k, 0.04, &bd, 100_000, &cert, 1).unwrap();
    let b = rho_c_estimate(&k, 0.04, &bd, 200_000, &cert, 2).unwrap();
    let exact_mean = 1.0 / d1_rho_c(0.04);
    assert!(
        (a.mean - exact_mean).abs() < 3.0 * a.se,
        "{} ± {} vs {exact_mean}",
        a.mean,
        a.se
    );
    assert!((a.mean - b.mean).abs() < 2.0 * (a.se.powi(2) + b.se.powi(2)).sqrt());
    assert!(a.ci_lower <= a.point && a.point <= a.ci_upper);
    let zero = rho_c_estimate(&k, 0.0, &bd, 10_000, &cert, 3).unwrap();
    assert!(zero.point <= 1.0);
    assert!(rho_c_estimate(&k, 0.09, &bd, 10_000, &cert, 3).is_err());
}
