mod common;

use std::sync::Arc;

use clanwalk_core::lossnet::*;
use clanwalk_core::oracle::{calibrate, zero_lambda_product_law, Horizon};
use clanwalk_core::rng;
use clanwalk_core::site::{site, LatticeBox, Site, ORIGIN};
use proptest::prelude::*;

fn box_sites(dim: usize, r: i32) -> Vec<Site> {
    LatticeBox::new(dim, r).sites().collect()
}

fn d1_window(rho: f64, r: i32, horizon: f64, marks: bool) -> Arc<WindowSpec> {
    Arc::new(WindowSpec {
        rho,
        sites: box_sites(1, r),
        target: vec![ORIGIN],
        horizon,
        marks,
    })
}

/// Reference per-site Poisson check: mean within 3 s.e. of ρ.
fn assert_poisson_mean(counts: &[f64], rho: f64) {
    let (m, se) = common::mean_se(counts);
    let se = se.max((rho / counts.len() as f64).sqrt());
    assert!((m - rho).abs() < 3.0 * se, "mean {m} vs {rho} (se {se})");
}

#[test]
fn alive_slice_is_poisson_at_both_window_ends() {
    let k = Arc::new(common::d1());
    let spec = d1_window(0.7, 20, 3.0, false);
    let (mut now, mut start) = (Vec::new(), Vec::new());
    for rep in 0..3000 {
        let w = sample_free_window(&k, &spec, 1, rep).unwrap();
        let alive: Vec<&Rect> = w.rects().iter().filter(|r| r.alive_at(0.0)).collect();
        now.push(
            alive
                .iter()
                .filter(|r| r.site_now == Some(site(&[0])))
                .count() as f64,
        );
        start.push(
            alive
                .iter()
                .filter(|r| r.site_start == Some(site(&[0])))
                .count() as f64,
        );
    }
    assert_poisson_mean(&now, 0.7);
    // Positions at -3 of particles alive at 0 and anchored in |i| ≤ 20 miss
    // only walks that travel more than 20 sites in 3 time units.
    assert_poisson_mean(&start, 0.7);
}

#[test]
fn rectangles_alive_at_an_earlier_time_are_stationary() {
    let k = Arc::new(common::d1());
    let spec = d1_window(0.4, 3, 1.0, false);
    let mut counts = Vec::new();
    for rep in 0..4000 {
        let mut w = sample_free_window(&k, &spec, 2, rep).unwrap();
        w.ensure_alive_after(-1.5).unwrap();
        counts.push(
            w.rects()
                .iter()
                .filter(|r| r.alive_at(-1.5) && r.site_now == Some(ORIGIN))
                .count() as f64,
        );
    }
    assert_poisson_mean(&counts, 0.4);
}

#[test]
fn vanishing_density_gives_almost_no_rectangles() {
    let k = Arc::new(common::d1());
    let spec = d1_window(1e-9, 500, 0.0, false);
    let total: usize = (0..1000)
        .map(|rep| sample_free_window(&k, &spec, 3, rep).unwrap().rects().len())
        .sum();
    // 1e6 site-replicas at ρ = 1e-9: the Poisson mean is 1e-3.
    assert!(total <= 1);
}

#[test]
fn window_rejects_empty_inputs() {
    let k = Arc::new(common::d1());
    let mut spec = WindowSpec {
        rho: 0.5,
        sites: vec![],
        target: vec![ORIGIN],
        horizon: 1.0,
        marks: false,
    };
    assert!(sample_free_window(&k, &Arc::new(spec.clone()), 0, 0).is_err());
    spec.sites = vec![ORIGIN];
    spec.target.clear();
    assert!(sample_free_window(&k, &Arc::new(spec), 0, 0).is_err());
}

#[test]
fn trimming_trivial_cases() {
    let k = Arc::new(common::d1());
    let empty = Arc::new(WindowSpec {
        rho: 0.0,
        ..(*d1_window(0.0, 5, 2.0, false)).clone()
    });
    let mut w = sample_free_window(&k, &empty, 4, 0).unwrap();
    let out = trim_i(&mut w, -2.0, &PatternSpec::threshold(1), 1000).unwrap();
    assert!(out.kept.is_empty() && out.deleted.is_empty());

    let spec = d1_window(0.8, 6, 2.0, false);
    for rep in 0..50 {
        let mut w = sample_free_window(&k, &spec, 4, rep).unwrap();
        let n = w.rects().len() as u32;
        let out = trim_i(&mut w, -2.0, &PatternSpec::threshold(n + 10), 100_000).unwrap();
        assert!(out.deleted.is_empty());
        assert_eq!(out.kept.len(), w.slice_roots().len());
    }
}

#[test]
fn threshold_zero_equals_zero_pattern_trimming() {
    let k = Arc::new(common::d1());
    let spec = d1_window(0.8, 6, 2.0, false);
    for rep in 0..100 {
        let mut w = sample_free_window(&k, &spec, 5, rep).unwrap();
        let mut t = Trimmer::new(-2.0, 0, 100_000);
        let z = trim_zero_lambda(&w, -2.0).unwrap();
        for idx in w.slice_roots() {
            let kept = t.label(&mut w, idx).unwrap().kept;
            assert_eq!(kept, z.kept.contains(&idx));
        }
    }
}

#[test]
fn zero_trimming_at_a_point_and_nesting() {
    let k = Arc::new(common::d1());
    let spec = Arc::new(WindowSpec {
        target: vec![site(&[0]), site(&[1])],
        ..(*d1_window(0.9, 6, 3.0, false)).clone()
    });
    for rep in 0..100 {
        let w = sample_free_window(&k, &spec, 6, rep).unwrap();
        let point = trim_zero_lambda(&w, 0.0).unwrap();
        for &i in &point.deleted {
            assert!(spec.target.contains(&w.rects()[i].site_now.unwrap()));
        }
        for &i in &point.kept {
            assert!(!spec.target.contains(&w.rects()[i].site_now.unwrap()));
        }
        let short = trim_zero_lambda(&w, -1.0).unwrap();
        let long = trim_zero_lambda(&w, -3.0).unwrap();
        assert!(long.kept.iter().all(|i| short.kept.contains(i)));
    }
}

#[test]
fn zero_slice_means_match_the_product_law() {
    let k = Arc::new(common::d1());
    let rho = 0.6;
    let t = 2.0;
    let spec = d1_window(rho, 8, t, false);
    let law = zero_lambda_product_law(&k, &[ORIGIN], rho, Horizon::Finite(t), 1e-10).unwrap();
    let n = 20_000;
    let mut sums = [0.0f64; 17];
    for rep in 0..n {
        let w = sample_free_window(&k, &spec, 7, rep).unwrap();
        for i in trim_zero_lambda(&w, -t).unwrap().kept {
            let x = w.rects()[i].site_now.unwrap()[0];
            sums[(x + 8) as usize] += 1.0;
        }
    }
    for (j, s) in sums.iter().enumerate() {
        let x = site(&[j as i32 - 8]);
        let target = law.intensity(&x).mid();
        let mean = s / n as f64;
        let se = (target.max(1e-9) / n as f64).sqrt();
        assert!(
            (mean - target).abs() < 4.0 * se,
            "site {x:?}: {mean} vs {target}"
        );
    }
}

fn shuffled(mut v: Vec<usize>, seed: u64) -> Vec<usize> {
    let mut r = rng::stream(seed, 0, 99);
    for i in (1..v.len()).rev() {
        let j = (rng::uniform(&mut r) * (i + 1) as f64) as usize;
        v.swap(i, j);
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn labels_do_not_depend_on_root_order(seed in 0u64..1_000_000, level in 0u32..3) {
        let k = Arc::new(common::d1());
        let spec = d1_window(1.2, 6, 3.0, false);
        let mut w1 = sample_free_window(&k, &spec, seed, 0).unwrap();
        let mut w2 = sample_free_window(&k, &spec, seed, 0).unwrap();
        let roots = w1.slice_roots();
        let mut a = Trimmer::new(-3.0, level, 100_000);
        let mut b = Trimmer::new(-3.0, level, 100_000);
        let la: Vec<bool> = roots.iter().map(|&i| a.label(&mut w1, i).unwrap().kept).collect();
        let order = shuffled(roots.clone(), seed);
        for &i in &order {
            b.label(&mut w2, i).unwrap();
        }
        // Materialization order differs, so compare by rectangle id.
        for (&i, &kept) in roots.iter().zip(&la) {
            let id = w1.rects()[i].id;
            let j = w2.rects().iter().position(|r| r.id == id).unwrap();
            prop_assert_eq!(b.cached(j).unwrap().kept, kept);
        }
    }

    #[test]
    fn kept_sets_never_realize_the_pattern(seed in 0u64..1_000_000, level in 0u32..3) {
        let k = Arc::new(common::d1());
        let spec = d1_window(1.5, 6, 2.5, false);
        let mut w = sample_free_window(&k, &spec, seed, 1).unwrap();
        let out = trim_i(&mut w, -2.5, &PatternSpec::threshold(level), 100_000).unwrap();
        let kept: Vec<&Rect> = out.kept.iter().map(|&i| &w.rects()[i]).collect();
        prop_assert!(kept_set_consistent(&kept, -2.5, level));
        let again = trim_i(&mut w, -2.5, &PatternSpec::threshold(level), 100_000).unwrap();
        prop_assert_eq!(out, again);
    }

    #[test]
    fn coupled_free_window_slices_are_ordered(seed in 0u64..1_000_000) {
        let k = Arc::new(common::d1());
        let spec = d1_window(1.0, 6, 4.0, false);
        let mut w = sample_free_window(&k, &spec, seed, 2).unwrap();
        let hs: Vec<Horizon> = [0.0, 0.5, 1.0, 2.0, 4.0].iter().map(|&t| Horizon::Finite(t)).collect();
        let s = coupled_conditioned_slices(&mut w, 2, &PatternSpec::threshold(1), &hs, None, &SliceOptions::default()).unwrap();
        for j in 0..hs.len() {
            prop_assert!(s.zero[j].excess_over(&s.conditioned[j]).is_empty());
            prop_assert!(s.conditioned[j].excess_over(&s.free).is_empty());
            if j > 0 {
                prop_assert!(s.zero[j].excess_over(&s.zero[j - 1]).is_empty());
            }
        }
    }
}

fn d3_palm(seed: u64) -> (Arc<PalmModel>, clanwalk_core::oracle::Calibration) {
    let k = common::d3();
    let cal = calibrate(&k, None, 20_000, 1e-4, seed).unwrap();
    let rho = cal.rho_c.point / 4.0;
    let spec = PalmSpec::from_bounds(
        rho,
        cal.tilt.beta,
        cal.beta1,
        cal.q_esc.mid(),
        cal.rho_c.g_hat,
        1e-3,
    )
    .unwrap();
    (PalmModel::new(Arc::new(k), spec).unwrap(), cal)
}

#[test]
fn palm_slices_share_labels_exactly_and_stay_ordered() {
    let (model, _) = d3_palm(11);
    let pattern = PatternSpec::threshold(1);
    let hs = [
        Horizon::Finite(0.0),
        Horizon::Finite(2.0),
        Horizon::Finite(8.0),
        Horizon::Infinite,
    ];
    let shared = SliceOptions::default();
    let direct = SliceOptions {
        share: false,
        ..SliceOptions::default()
    };
    let mut reused = 0;
    for rep in 0..3000 {
        let mut a = model.sample(3, rep).unwrap();
        let mut b = model.sample(3, rep).unwrap();
        let sa = coupled_conditioned_slices(&mut a, rep, &pattern, &hs, None, &shared).unwrap();
        let sb = coupled_conditioned_slices(&mut b, rep, &pattern, &hs, None, &direct).unwrap();
        assert_eq!(sa.conditioned, sb.conditioned);
        reused += sa.shared;
        for j in 0..hs.len() {
            assert!(sa.zero[j].excess_over(&sa.conditioned[j]).is_empty());
            assert!(sa.conditioned[j].excess_over(&sa.free).is_empty());
        }
    }
    assert!(reused > 0);
}

#[test]
fn palm_free_slice_has_stationary_means() {
    let (model, cal) = d3_palm(12);
    let rho = model.spec().rho;
    let law =
        zero_lambda_product_law(model.kernel(), &[ORIGIN], rho, Horizon::Infinite, 1e-8).unwrap();
    let sites: Vec<Site> = box_sites(3, 1);
    let n = 40_000;
    let mut sums = vec![0.0; sites.len()];
    for rep in 0..n {
        let mut w = model.sample(5, rep).unwrap();
        let common_part = sample_common_part(&law, &sites, 5, rep);
        let s = coupled_conditioned_slices(
            &mut w,
            rep,
            &PatternSpec::threshold(1),
            &[Horizon::Finite(0.0)],
            Some(&common_part),
            &SliceOptions::default(),
        )
        .unwrap();
        for (k, x) in sites.iter().enumerate() {
            sums[k] += f64::from(s.free.get(x));
        }
    }
    let _ = cal;
    let pooled: f64 = sums.iter().sum::<f64>() / (n as f64 * sites.len() as f64);
    let se = (rho / (n as f64 * sites.len() as f64)).sqrt();
    assert!(
        (pooled - rho).abs() < 3.0 * se,
        "pooled mean {pooled} vs {rho}"
    );
}

#[test]
fn unit_rate_mu_trimming_is_plain_trimming() {
    let k = Arc::new(common::d1());
    let spec = d1_window(0.9, 6, 1.0, true);
    for rep in 0..100 {
        let mut a = sample_free_window(&k, &spec, 8, rep).unwrap();
        let mut b = sample_free_window(&k, &spec, 8, rep).unwrap();
        let plain = trim_i(&mut a, -1.0, &PatternSpec::threshold(1), 100_000).unwrap();
        let mu = trim_i_mu(&mut b, &PatternSpec::threshold(1), &UnitRate, 100_000).unwrap();
        let ids = |w: &FreeWindow, v: &[usize]| {
            let mut x: Vec<u64> = v.iter().map(|&i| w.rects()[i].id).collect();
            x.sort();
            x
        };
        assert_eq!(ids(&a, &plain.kept), ids(&b, &mu.kept));
    }
}

#[test]
fn product_rate_is_trimming_of_the_thinned_set() {
    let k = Arc::new(common::d1());
    let spec = d1_window(0.9, 6, 1.0, true);
    let ratio = |i: &Site| 1.0 - 0.5 * (-(i[0].abs() as f64) / 2.0).exp();
    for rep in 0..100 {
        let mut w = sample_free_window(&k, &spec, 9, rep).unwrap();
        let mu = trim_i_mu(
            &mut w,
            &PatternSpec::threshold(1),
            &ProductRate::new(ratio),
            100_000,
        )
        .unwrap();
        for &i in &mu.kept {
            let r = &w.rects()[i];
            assert!(r.u.unwrap() <= ratio(&r.site_start.unwrap()));
        }
        // Every slice rectangle failing the thinning is deleted.
        for i in w.slice_roots() {
            let r = &w.rects()[i];
            if r.u.unwrap() > ratio(&r.site_start.unwrap()) {
                assert!(mu.deleted.contains(&i));
            }
        }
    }
}

#[test]
fn unreachable_pattern_with_unit_rate_keeps_the_free_slice() {
    let k = Arc::new(common::d1());
    let spec = d1_window(0.9, 6, 1.0, true);
    let mut w = sample_free_window(&k, &spec, 10, 0).unwrap();
    let mu = trim_i_mu(&mut w, &PatternSpec::threshold(1000), &UnitRate, 100_000).unwrap();
    assert!(mu.deleted.is_empty());
    assert_eq!(mu.kept.len(), w.slice_roots().len());
}

struct Broken;

impl BirthRate for Broken {
    fn range(&self) -> u32 {
        1
    }
    fn floor(&self, _i: &Site) -> f64 {
        0.5
    }
    fn rate(&self, i: &Site, eta: &std::collections::BTreeMap<Site, u32>) -> f64 {
        // Reads a site at distance 3.
        let far = site(&[i[0] + 3]);
        if eta.get(&far).copied().unwrap_or(0) > 0 {
            0.6
        } else {
            0.9
        }
    }
}

struct BelowFloor;

impl BirthRate for BelowFloor {
    fn range(&self) -> u32 {
        0
    }
    fn floor(&self, _i: &Site) -> f64 {
        0.5
    }
    fn rate(&self, _i: &Site, _eta: &std::collections::BTreeMap<Site, u32>) -> f64 {
        0.4
    }
}

#[test]
fn rate_validation() {
    let sites = box_sites(1, 3);
    let ok = validate_rate(
        &SoftExclusion {
            floor: 0.3,
            strength: 0.7,
        },
        &sites,
        1,
        50,
        1,
    )
    .unwrap();
    assert!(ok.checks > 0);
    assert!(
        validate_rate(&UnitRate, &sites, 1, 10, 1)
            .unwrap()
            .alpha_deficit
            == 0.0
    );
    assert!(matches!(
        validate_rate(&BelowFloor, &sites, 1, 10, 1),
        Err(clanwalk_core::Error::Invariant(_))
    ));
    assert!(matches!(
        validate_rate(&Broken, &sites, 1, 200, 1),
        Err(clanwalk_core::Error::Invariant(_))
    ));
}

fn pool() -> Arc<SigmaPool> {
    let k = common::d1();
    let cert = clanwalk_core::walk::MartingaleCertifier::new(&k, &[ORIGIN], 1e-4);
    Arc::new(
        SigmaPool::new(clanwalk_core::oracle::sigma_pool(&k, &cert, 20_000, 3).unwrap()).unwrap(),
    )
}

#[test]
fn tiny_density_clans_are_roots_alone() {
    let cfg = ClanConfig {
        rho: 1e-9,
        q_esc: 0.4,
        pool: pool(),
        budget: 1000,
        bad: None,
    };
    for rep in 0..1000 {
        let c = sample_projected_clan(&cfg, ProjectedMark { s: 0.0, sigma: 0.0 }, 0.0, 1.0, 1, rep)
            .unwrap();
        assert_eq!(c.size(), 1);
        assert!(c.complete);
    }
}

#[test]
fn first_generation_mean_matches_the_parent_intensity() {
    let p = pool();
    let rho = 0.01;
    let q = 0.4;
    let sigma0 = 3.0;
    let cfg = ClanConfig {
        rho,
        q_esc: q,
        pool: p.clone(),
        budget: 10_000,
        bad: None,
    };
    let sizes: Vec<f64> = (0..40_000)
        .map(|rep| {
            let c = sample_projected_clan(
                &cfg,
                ProjectedMark {
                    s: 0.0,
                    sigma: sigma0,
                },
                0.0,
                1.0,
                2,
                rep,
            )
            .unwrap();
            assert!(c.size() >= 1);
            c.generation_sizes.get(1).copied().unwrap_or(0) as f64
        })
        .collect();
    let (m, se) = common::mean_se(&sizes);
    let expect = rho * q * (sigma0 + p.mean());
    assert!((m - expect).abs() < 3.0 * se, "{m} vs {expect}");
}

#[test]
fn clan_budget_is_reported() {
    let cfg = ClanConfig {
        rho: 5.0,
        q_esc: 1.0,
        pool: pool(),
        budget: 20,
        bad: None,
    };
    let c = sample_projected_clan(
        &cfg,
        ProjectedMark {
            s: 0.0,
            sigma: 50.0,
        },
        0.0,
        1.0,
        3,
        0,
    )
    .unwrap();
    assert!(!c.complete);
    let stats = clan_statistics(&[c], 3, &[0.0]);
    assert!(stats.is_err());
}

#[test]
fn clan_width_contains_every_member_interval() {
    let cfg = ClanConfig {
        rho: 0.05,
        q_esc: 0.4,
        pool: pool(),
        budget: 10_000,
        bad: Some(BadPointConfig {
            c0: 1.0,
            beta1: 0.04,
        }),
    };
    for rep in 0..300 {
        let c = sample_projected_clan(&cfg, ProjectedMark { s: 1.0, sigma: 2.0 }, 0.0, 1.0, 4, rep)
            .unwrap();
        for n in &c.nodes {
            assert!(c.covers(n.mark.s) && c.covers(n.mark.end()));
            if let Some(p) = n.parent {
                assert_eq!(n.generation, c.nodes[p].generation + 1);
            }
        }
        assert!(c.bad_parent.is_some());
        assert_eq!(c.generation_sizes.iter().sum::<usize>(), c.size());
    }
}
