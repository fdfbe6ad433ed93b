//! Subcommand implementations. Each writes its CSVs and a manifest into
//! the output directory.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context};
use clanwalk_core::estimators::{
    discrepancy_decay, domination_audit, estimate_tau_survival, fit_lambda, mean_se,
    plateau_flatness, plateau_series, site_moments, yaglom_distance, yaglom_distance_samples,
    TauOptions, ViolationKind, YaglomReport,
};
use clanwalk_core::io::{self, OracleRow};
use clanwalk_core::lossnet::{
    clan_statistics, coupled_conditioned_slices, kept_set_consistent, sample_common_part,
    sample_free_window, sample_projected_clan, trim_i_mu, validate_rate, BirthRate, Clan,
    ClanConfig, CoupledSlices, Occupation, PalmModel, PalmSpec, PatternSpec, ProductRate,
    ProjectedMark, Realization, Rect, SigmaPool, SliceOptions, SoftExclusion, UnitRate, WindowSpec,
};
use clanwalk_core::oracle::{
    calibrate, escape_probability_adaptive, sigma_pool, zero_lambda_product_law,
    zero_lambda_tau_survival, Bracket, Calibration, EscapeField, Horizon,
};
use clanwalk_core::rng;
use clanwalk_core::site::{LatticeBox, Site, ORIGIN};
use clanwalk_core::walk::MartingaleCertifier;
use rayon::prelude::*;

use crate::config::{ConfigError, ExperimentConfig, Mode};
use crate::manifest::Manifest;

/// Coupling violations found by the audit; maps to exit code 5.
#[derive(Debug)]
pub struct AuditFailure(pub usize);

impl std::fmt::Display for AuditFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "audit found {} coupling violations", self.0)
    }
}

impl std::error::Error for AuditFailure {}

pub(crate) const ORACLE_TOL: f64 = 1e-8;
const TRIM_BUDGET: usize = 1_000_000;

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn calibration(cfg: &ExperimentConfig, m: &mut Manifest) -> anyhow::Result<Calibration> {
    let cal = calibrate(
        &cfg.kernel,
        cfg.beta1,
        cfg.sigma_samples,
        cfg.epsilon,
        cfg.seed,
    )?;
    m.set("tilt.beta", cal.tilt.beta);
    m.set("tilt.z0", format!("{:?}", cal.tilt.z0));
    m.set("escape.lower", cal.q_esc.lower);
    m.set("escape.upper", cal.q_esc.upper);
    m.set("beta_d.lower", cal.beta_d.lower);
    m.set("beta_d.upper", cal.beta_d.upper);
    m.set("beta1", cal.beta1);
    m.set("rho_c.point", cal.rho_c.point);
    m.set("rho_c.ci_lower", cal.rho_c.ci_lower);
    m.set("rho_c.ci_upper", cal.rho_c.ci_upper);
    m.set("rho_c.g_hat", cal.rho_c.g_hat);
    m.set("rho_c.sigma_samples", cal.rho_c.n_samples);
    Ok(cal)
}

fn guarded_calibration(cfg: &ExperimentConfig, m: &mut Manifest) -> anyhow::Result<Calibration> {
    let cal = calibration(cfg, m)?;
    cal.check_density(cfg.rho)?;
    Ok(cal)
}

pub fn validate(cfg: &ExperimentConfig, m: &mut Manifest) -> anyhow::Result<()> {
    let k = &cfg.kernel;
    m.set("kernel.dim", k.dim());
    m.set("kernel.jumps", k.offsets().len());
    m.set("kernel.range", k.range());
    m.set("kernel.drift", format!("{:?}", k.drift()));
    m.set("kernel.symmetric", k.is_symmetric());
    let cal = calibration(cfg, m)?;
    m.set("rho_below_rho_c", cfg.rho < cal.rho_c.ci_lower);
    Ok(())
}

pub fn oracle(cfg: &ExperimentConfig, out: &Path, m: &mut Manifest) -> anyhow::Result<()> {
    let k = &cfg.kernel;
    let support = cfg.pattern.support();
    let radius = cfg.box_radius.unwrap_or(3);
    let sites: Vec<Site> = LatticeBox::new(k.dim(), radius).sites().collect();
    let mut rows = Vec::new();
    if k.has_drift() {
        let field = escape_probability_adaptive(k, &support, &sites, 1e-6, 256)?;
        m.set("oracle.escape_radius", field.radius());
        for s in &sites {
            rows.push(row(s, "escape", field.bracket(s)));
        }
    }
    for h in cfg.horizons() {
        let law = zero_lambda_product_law(k, &support, cfg.rho, h, ORACLE_TOL)?;
        let name = format!("intensity_t={}", h.label());
        for s in &sites {
            rows.push(row(s, &name, law.intensity(s)));
        }
    }
    io::write_oracle(create(out, "oracle.csv")?, &rows, k.dim())?;
    let tau = zero_lambda_tau_survival(k, &support, cfg.rho, &cfg.grid, ORACLE_TOL)?;
    let mut w = csv_writer(create(out, "oracle_survival.csv")?);
    w.write_record(["t", "lower", "upper"])?;
    for (t, b) in cfg.grid.iter().zip(&tau) {
        w.write_record([t.to_string(), b.lower.to_string(), b.upper.to_string()])?;
    }
    w.flush()?;
    m.set("oracle.rows", rows.len());
    Ok(())
}

fn row(s: &Site, quantity: &str, b: Bracket) -> OracleRow {
    OracleRow {
        site: *s,
        quantity: quantity.to_string(),
        value: b.mid(),
        error_bound: 0.5 * b.width(),
    }
}

fn csv_writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

pub fn tau(cfg: &ExperimentConfig, out: &Path, m: &mut Manifest) -> anyhow::Result<()> {
    let s = estimate_tau_survival(
        &cfg.kernel,
        cfg.rho,
        &cfg.pattern,
        &cfg.grid,
        cfg.replicas,
        cfg.seed,
        &TauOptions {
            epsilon: cfg.epsilon,
        },
    )?;
    io::write_survival(create(out, "survival.csv")?, &s)?;
    m.set("tau.region_sites", s.region_sites);
    m.set("tau.boundary_bias", s.boundary_bias);
    let fit = fit_lambda(&s)?;
    m.set("lambda", fit.lambda);
    m.set("lambda.se", fit.se);
    m.set(
        "lambda.window",
        format!("{} {}", fit.window.0, fit.window.1),
    );
    m.set("lambda.reduced_chi2", fit.reduced_chi2);
    let series = plateau_series(&s, fit.lambda, fit.se);
    io::write_plateau(create(out, "plateau.csv")?, &series)?;
    let (spread, excess) = plateau_flatness(&series);
    m.set("plateau.spread_se", spread);
    m.set("plateau.max_excess_se", excess.max(0.0));
    Ok(())
}

fn observed_sites(cfg: &ExperimentConfig) -> Vec<Site> {
    let r = cfg.box_radius.unwrap_or(4).min(2);
    LatticeBox::new(cfg.dim(), r).sites().collect()
}

/// Coupled slices for every replica: Palm windows when the infinite
/// horizon is requested, free windows on the box otherwise.
fn coupled_batch(
    cfg: &ExperimentConfig,
    m: &mut Manifest,
) -> anyhow::Result<(Vec<CoupledSlices>, Option<Calibration>)> {
    let hs = cfg.horizons();
    let n = cfg.replicas as u64;
    let seed = cfg.seed;
    let pattern = &cfg.pattern;
    if cfg.infinite {
        if pattern.support() != [ORIGIN] {
            bail!(ConfigError(
                "the infinite horizon needs a pattern supported at the origin".into()
            ));
        }
        let cal = guarded_calibration(cfg, m)?;
        let spec = PalmSpec::from_bounds(
            cfg.rho,
            cal.tilt.beta,
            cal.beta1,
            cal.q_esc.mid(),
            cal.rho_c.g_hat,
            cfg.epsilon,
        )?;
        m.set("palm.t_obs", spec.t_obs);
        m.set("palm.margin", spec.margin);
        m.set("palm.t_gen", spec.t_gen);
        let model = PalmModel::new(cfg.kernel.clone().into_arc(), spec)?;
        let law = zero_lambda_product_law(
            &cfg.kernel,
            &[ORIGIN],
            cfg.rho,
            Horizon::Infinite,
            ORACLE_TOL,
        )?;
        let sites = observed_sites(cfg);
        let opts = SliceOptions {
            observe: Some(LatticeBox::new(
                cfg.dim(),
                cfg.box_radius.unwrap_or(4).min(2),
            )),
            ..SliceOptions::default()
        };
        let batch = (0..n)
            .into_par_iter()
            .map(|rep| {
                let mut w = model.sample(seed, rep)?;
                let common = sample_common_part(&law, &sites, seed, rep);
                coupled_conditioned_slices(&mut w, rep, pattern, &hs, Some(&common), &opts)
            })
            .collect::<Result<Vec<_>, _>>()?;
        m.set(
            "slices.shared_labels",
            batch.iter().map(|c| c.shared).sum::<usize>(),
        );
        m.set(
            "slices.window_extensions",
            batch.iter().map(|c| c.extensions).sum::<usize>(),
        );
        Ok((batch, Some(cal)))
    } else {
        let radius = cfg.box_radius.unwrap_or(4);
        let horizon = *cfg.grid.last().expect("validated grid");
        let spec = Arc::new(WindowSpec {
            rho: cfg.rho,
            sites: LatticeBox::new(cfg.dim(), radius).sites().collect(),
            target: pattern.support(),
            horizon,
            marks: false,
        });
        m.set("window.box_radius", radius);
        let k = cfg.kernel.clone().into_arc();
        let batch = (0..n)
            .into_par_iter()
            .map(|rep| {
                let mut w = sample_free_window(&k, &spec, seed, rep)?;
                coupled_conditioned_slices(
                    &mut w,
                    rep,
                    pattern,
                    &hs,
                    None,
                    &SliceOptions::default(),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((batch, None))
    }
}

fn column(batch: &[CoupledSlices], j: usize) -> Vec<Occupation> {
    batch.iter().map(|c| c.conditioned[j].clone()).collect()
}

pub fn yaglom(cfg: &ExperimentConfig, out: &Path, m: &mut Manifest) -> anyhow::Result<()> {
    let zero = cfg.pattern.as_zero();
    if zero.is_none() && !cfg.infinite {
        bail!(ConfigError("threshold patterns are compared with the infinite-horizon slice; set horizons.infinite".into()));
    }
    let (batch, _) = coupled_batch(cfg, m)?;
    io::write_slices(create(out, "slices.csv")?, &batch, cfg.dim())?;
    let sites = observed_sites(cfg);
    let mut trend = csv_writer(create(out, "yaglom_trend.csv")?);
    trend.write_record(["t", "max_abs_z", "l1_means"])?;
    let mut last: Option<YaglomReport> = None;
    for (j, t) in cfg.grid.iter().enumerate() {
        let samples = column(&batch, j);
        let report = match &zero {
            Some(support) => {
                let law = zero_lambda_product_law(
                    &cfg.kernel,
                    support,
                    cfg.rho,
                    Horizon::Finite(*t),
                    ORACLE_TOL,
                )?;
                yaglom_distance(&samples, &sites, &|s: &Site| law.intensity(s))?
            }
            None => yaglom_distance_samples(&samples, &column(&batch, cfg.grid.len()), &sites)?,
        };
        trend.write_record([
            t.to_string(),
            report.max_abs_z.to_string(),
            report.l1_means.to_string(),
        ])?;
        last = Some(report);
    }
    trend.flush()?;
    let last = last.expect("nonempty grid");
    io::write_yaglom(create(out, "yaglom.csv")?, &last, cfg.dim())?;
    m.set(
        "yaglom.reference",
        if zero.is_some() {
            "product law"
        } else {
            "infinite-horizon slices"
        },
    );
    m.set("yaglom.max_abs_z", last.max_abs_z);
    m.set("yaglom.l1_means", last.l1_means);
    Ok(())
}

pub fn audit(
    cfg: &ExperimentConfig,
    out: &Path,
    slices: Option<&Path>,
    m: &mut Manifest,
) -> anyhow::Result<()> {
    let (batch, cal) = match slices {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            m.set("audit.input", p.display());
            (io::read_slices(f, cfg.dim())?, None)
        }
        None => {
            let (b, cal) = coupled_batch(cfg, m)?;
            io::write_slices(create(out, "slices.csv")?, &b, cfg.dim())?;
            (b, cal)
        }
    };
    let report = domination_audit(&batch)?;
    let dim = cfg.dim();
    let mut w = csv_writer(create(out, "audit.csv")?);
    let mut header: Vec<String> = vec!["replica".into(), "horizon".into()];
    header.extend((1..=dim).map(|k| format!("x{k}")));
    header.push("kind".into());
    w.write_record(&header)?;
    for v in &report.violations {
        let mut rec = vec![
            v.replica.to_string(),
            batch_horizon(&batch, v.replica, v.horizon),
        ];
        rec.extend(v.site[..dim].iter().map(|c| c.to_string()));
        rec.push(
            match v.kind {
                ViolationKind::ZeroAboveConditioned => "zero_above_conditioned",
                ViolationKind::ConditionedAboveFree => "conditioned_above_free",
                ViolationKind::NotMonotone => "not_monotone",
            }
            .to_string(),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    m.set("audit.tuples", report.tuples);
    m.set("audit.comparisons", report.comparisons);
    m.set("audit.violations", report.violations.len());

    if batch
        .first()
        .is_some_and(|c| c.horizons.contains(&Horizon::Infinite))
    {
        let escape: EscapeField = match cal {
            Some(c) => c.escape,
            None => escape_probability_adaptive(&cfg.kernel, &[ORIGIN], &[ORIGIN], 1e-6, 256)?,
        };
        let d = discrepancy_decay(&batch, &|s: &Site| escape.hit_bracket(s))?;
        io::write_discrepancy(create(out, "discrepancy.csv")?, &d)?;
        if let Some((r, se)) = d.rate {
            m.set("discrepancy.rate", r);
            m.set("discrepancy.rate_se", se);
        }
    }
    if !report.violations.is_empty() {
        return Err(AuditFailure(report.violations.len()).into());
    }
    Ok(())
}

fn batch_horizon(batch: &[CoupledSlices], replica: u64, j: usize) -> String {
    batch
        .iter()
        .find(|c| c.replica == replica)
        .and_then(|c| c.horizons.get(j))
        .map_or_else(|| j.to_string(), Horizon::label)
}

pub fn clans(cfg: &ExperimentConfig, out: &Path, m: &mut Manifest) -> anyhow::Result<()> {
    let cal = guarded_calibration(cfg, m)?;
    let k = &cfg.kernel;
    let cert = MartingaleCertifier::new(k, &[ORIGIN], cfg.epsilon);
    let pool = Arc::new(SigmaPool::new(sigma_pool(
        k,
        &cert,
        cfg.sigma_samples,
        cfg.seed ^ 0x5155,
    )?)?);
    let conf = ClanConfig {
        rho: cfg.rho,
        q_esc: cal.q_esc.mid(),
        pool: pool.clone(),
        budget: TRIM_BUDGET,
        bad: None,
    };
    let seed = cfg.seed;
    let sample: Vec<Clan> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|rep| {
            let mut r = rng::stream(seed, rep, rng::stream_id(0x524f_4f54, &[]));
            let sigma0 = pool.draw(&mut r);
            let life = rng::exp1(&mut r);
            sample_projected_clan(
                &conf,
                ProjectedMark {
                    s: 0.0,
                    sigma: sigma0,
                },
                0.0,
                life,
                seed,
                rep,
            )
        })
        .collect::<Result<_, _>>()?;
    io::write_clans(create(out, "clan.csv")?, &sample)?;
    let stats = clan_statistics(&sample, cfg.generations, &cfg.width_grid)?;
    m.set("clans.complete", stats.clans);
    m.set("clans.incomplete", stats.incomplete);
    m.set("clans.mean_size", stats.mean_size.0);

    let ratio = cfg.rho / cal.rho_c.point;
    let mut w = csv_writer(create(out, "clan_generations.csv")?);
    w.write_record(["k", "mean", "se", "bound"])?;
    for (g, (mean, se)) in stats.generation_means.iter().enumerate() {
        let bounds: Vec<f64> = sample
            .iter()
            .filter(|c| c.complete)
            .map(|c| {
                let s0 = c.root().mark.sigma;
                ratio.powi(g as i32) * (1.0 + s0 + s0 * s0)
            })
            .collect();
        w.write_record([
            g.to_string(),
            mean.to_string(),
            se.to_string(),
            mean_se(&bounds).0.to_string(),
        ])?;
    }
    w.flush()?;
    let mut w = csv_writer(create(out, "width_tail.csv")?);
    w.write_record([
        "t",
        "psi_after",
        "se_after",
        "psi_before",
        "se_before",
        "bound",
    ])?;
    for (i, t) in stats.grid.iter().enumerate() {
        let bound = (-cal.beta1 * t).exp() / (cal.rho_c.point - cfg.rho);
        let (a, sa) = stats.psi_after[i];
        let (b, sb) = stats.psi_before[i];
        w.write_record([t, &a, &sa, &b, &sb, &bound].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn mu(cfg: &ExperimentConfig, out: &Path, m: &mut Manifest) -> anyhow::Result<()> {
    match &cfg.mode {
        Mode::NuRho => run_mu(cfg, out, m, &UnitRate, true),
        Mode::NuAlpha {
            ratios,
            default_ratio,
        } => {
            let (ratios, d) = (ratios.clone(), *default_ratio);
            run_mu(
                cfg,
                out,
                m,
                &ProductRate::new(move |i: &Site| ratios.get(i).copied().unwrap_or(d)),
                true,
            )
        }
        Mode::SoftExclusion { floor, strength } => run_mu(
            cfg,
            out,
            m,
            &SoftExclusion {
                floor: *floor,
                strength: *strength,
            },
            false,
        ),
    }
}

fn run_mu(
    cfg: &ExperimentConfig,
    out: &Path,
    m: &mut Manifest,
    rate: &dyn BirthRate,
    product: bool,
) -> anyhow::Result<()> {
    let radius = cfg.box_radius.unwrap_or(6);
    let sites: Vec<Site> = LatticeBox::new(cfg.dim(), radius).sites().collect();
    let report = validate_rate(rate, &sites, cfg.dim(), 200, cfg.seed)?;
    m.set("mu.rate_checks", report.checks);
    m.set("mu.alpha_deficit", report.alpha_deficit);
    let t = *cfg.grid.last().expect("validated grid");
    let spec = Arc::new(WindowSpec {
        rho: cfg.rho,
        sites,
        target: cfg.pattern.support(),
        horizon: t,
        marks: true,
    });
    let k = cfg.kernel.clone().into_arc();
    let (seed, pattern) = (cfg.seed, &cfg.pattern);
    let level = match pattern {
        PatternSpec::Threshold { level } => *level,
        PatternSpec::ZeroLambda { .. } => 0,
    };
    let runs: Vec<(Occupation, bool)> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|rep| {
            let mut w = sample_free_window(&k, &spec, seed, rep)?;
            let kept = trim_i_mu(&mut w, pattern, rate, TRIM_BUDGET)?.kept;
            let mut o = Occupation::new(rep, Some(Horizon::Finite(t)));
            for i in kept {
                if let Some(s) = w.rects()[i].site_now {
                    o.add(s, 1);
                }
            }
            let thinned: Vec<&Rect> = w
                .rects()
                .iter()
                .filter(|r| r.alive_at(0.0))
                .filter(|r| match (r.u, r.site_start) {
                    (Some(u), Some(s)) => u <= rate.floor(&s),
                    _ => false,
                })
                .collect();
            Ok((o, kept_set_consistent(&thinned, -t, level)))
        })
        .collect::<clanwalk_core::Result<_>>()?;
    if product {
        let survived = runs.iter().filter(|(_, s)| *s).count() as f64 / runs.len() as f64;
        m.set("mu.survival", survived);
    }
    let samples: Vec<Occupation> = runs.into_iter().map(|(o, _)| o).collect();
    let observed = observed_sites(cfg);
    let moments = site_moments(&samples, &observed);
    let mut w = csv_writer(create(out, "mu.csv")?);
    let mut header: Vec<String> = (1..=cfg.dim()).map(|k| format!("x{k}")).collect();
    header.extend(["mean", "var", "n"].map(String::from));
    w.write_record(&header)?;
    for s in &observed {
        let c = &moments[s];
        let mut rec: Vec<String> = s[..cfg.dim()].iter().map(|x| x.to_string()).collect();
        rec.extend([
            c.mean().to_string(),
            c.var().to_string(),
            samples.len().to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    m.set("mu.horizon", t);
    m.set("mu.box_radius", radius);
    Ok(())
}
