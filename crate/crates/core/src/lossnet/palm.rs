//! Palm realizations for the threshold pattern at the origin: only
//! rectangles that can ever visit the origin are generated, with window
//! lengths chosen from the tail bounds so the truncation bias is at most ε
//! per site.

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::kernel::Kernel;
use crate::rng::{self, StreamRng};
use crate::site::{self, Site, ORIGIN};
use crate::walk::{Certifier, MartingaleCertifier};

use super::trim::Realization;
use crate::oracle::ProductLaw;

use super::types::{Occupation, Rect};

const ALIVE_TAG: u64 = 0x5041_4c56;
const DEAD_TAG: u64 = 0x5044_4544;
const RECT_TAG: u64 = 0x5052_4354;
const ALIVE_BLOCK: u64 = u64::MAX;

/// Window lengths and budgets of a Palm realization for the threshold
/// pattern at the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PalmSpec {
    pub rho: f64,
    /// Slice rectangles must visit the origin during `[-t_obs, 0]`.
    pub t_obs: f64,
    /// Clan widths must stay this far above the generation window start
    /// for infinite-horizon labels to be certified.
    pub margin: f64,
    /// Initial generation window length; at least `t_obs + margin`.
    pub t_gen: f64,
    pub epsilon: f64,
    /// Jump budget per path.
    pub budget: usize,
}

impl PalmSpec {
    /// Window lengths from a per-site bias target ε: `t_obs` solves
    /// ρe^{-βt}/β = ε with the return-time tail rate β, and the margin
    /// solves ρqĜe^{-β₁M}/β₁ = ε with escape probability q and
    /// Ĝ = E[e^{β₁σ}].
    pub fn from_bounds(
        rho: f64,
        beta: f64,
        beta1: f64,
        q_esc: f64,
        g_hat: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !(rho > 0.0) || !(beta > 0.0) || !(beta1 > 0.0) || !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(invalid(
                "rho, beta, beta1 must be positive and epsilon in (0,1)",
            ));
        }
        let t_obs = ((rho / (beta * epsilon)).ln() / beta).max(1.0);
        let margin = ((rho * q_esc * g_hat / (beta1 * epsilon)).ln() / beta1).max(1.0);
        Ok(PalmSpec {
            rho,
            t_obs,
            margin,
            t_gen: t_obs + margin,
            epsilon,
            budget: crate::walk::DEFAULT_STEP_BUDGET,
        })
    }
}

/// Shared, per-experiment part of the Palm construction.
#[derive(Debug)]
pub struct PalmModel {
    kernel: Arc<Kernel>,
    dual: Kernel,
    forward: MartingaleCertifier,
    backward: MartingaleCertifier,
    spec: PalmSpec,
}

impl PalmModel {
    pub fn new(kernel: Arc<Kernel>, spec: PalmSpec) -> Result<Arc<Self>> {
        kernel.require_drift()?;
        if !(spec.t_gen >= spec.t_obs + spec.margin) || !(spec.t_obs >= 0.0) {
            return Err(invalid(
                "generation window must cover the observation window and margin",
            ));
        }
        let dual = kernel.dual();
        let forward = MartingaleCertifier::new(&kernel, &[ORIGIN], spec.epsilon);
        let backward = MartingaleCertifier::new(&dual, &[ORIGIN], spec.epsilon);
        Ok(Arc::new(PalmModel {
            kernel,
            dual,
            forward,
            backward,
            spec,
        }))
    }

    pub fn spec(&self) -> &PalmSpec {
        &self.spec
    }

    pub fn kernel(&self) -> &Arc<Kernel> {
        &self.kernel
    }

    /// The rectangles alive at time 0 of one replica.
    pub fn sample(self: &Arc<Self>, seed: u64, replica: u64) -> Result<PalmWindow> {
        let mut w = PalmWindow {
            model: self.clone(),
            seed,
            replica,
            s_blocks: 0,
            dead_blocks: 0,
            rects: Vec::new(),
            interacting: Vec::new(),
            candidates: 0,
        };
        w.grow_s_blocks(self.spec.t_gen.ceil() as u64)?;
        Ok(w)
    }

    fn budget_error(&self) -> Error {
        Error::BudgetExceeded(format!(
            "path not certified within {} jumps",
            self.spec.budget
        ))
    }

    /// One entry candidate: an entry into the origin at time `s`. Returns
    /// `None` when the entry is not the first one of its path.
    fn candidate(
        &self,
        r: &mut StreamRng,
        id: u64,
        s: f64,
        birth: f64,
        death: f64,
    ) -> Result<Option<Rect>> {
        let mut x = site::neg(self.kernel.offset_for(rng::uniform(r)));
        let mut steps = 0usize;
        loop {
            if x == ORIGIN {
                return Ok(None);
            }
            if self.backward.certified(&x) {
                break;
            }
            steps += 1;
            if steps > self.spec.budget {
                return Err(self.budget_error());
            }
            x = site::add(&x, self.dual.offset_for(rng::uniform(r)));
        }
        let alive = death > 0.0;
        let mut visits: Vec<(f64, f64)> = Vec::new();
        let mut t = s;
        let mut x = ORIGIN;
        let mut steps = 0usize;
        let site_now = loop {
            let next = t + rng::exp1(r);
            if x == ORIGIN {
                visits.push((t, next.min(0.0)));
            }
            if next > 0.0 {
                break Some(x);
            }
            t = next;
            x = site::add(&x, self.kernel.offset_for(rng::uniform(r)));
            if !alive && x != ORIGIN && self.forward.certified(&x) {
                break None;
            }
            steps += 1;
            if steps > self.spec.budget {
                return Err(self.budget_error());
            }
        };
        Ok(Some(Rect {
            id,
            birth,
            death,
            u: None,
            visits,
            site_now: if alive { site_now } else { None },
            site_start: None,
        }))
    }
}

/// Rectangles of the stationary free process whose paths enter the origin,
/// generated from their first entry times.
///
/// First entries of rectangles into the origin are a Poisson process of
/// rate ρq in time: entries happen at rate ρ, each is first with the
/// probability q that the dual walk from the pre-entry site never hits the
/// origin. Candidates at rate ρ per unit entry time and unit death time are
/// thinned by simulating that dual walk to certification. The remaining
/// rectangles, which never visit the origin in the generation window, do
/// not interact and contribute an independent product Poisson slice
/// computed by the oracle.
#[derive(Clone, Debug)]
pub struct PalmWindow {
    model: Arc<PalmModel>,
    seed: u64,
    replica: u64,
    s_blocks: u64,
    dead_blocks: u64,
    rects: Vec<Rect>,
    interacting: Vec<usize>,
    candidates: u64,
}

impl PalmWindow {
    pub fn replica(&self) -> u64 {
        self.replica
    }

    pub fn model(&self) -> &Arc<PalmModel> {
        &self.model
    }

    /// Entry candidates drawn so far, including thinned ones.
    pub fn candidates(&self) -> u64 {
        self.candidates
    }

    fn push(&mut self, rect: Option<Rect>) {
        self.candidates += 1;
        if let Some(r) = rect {
            self.interacting.push(self.rects.len());
            self.rects.push(r);
        }
    }

    fn alive_block(&mut self, k: u64) -> Result<()> {
        let mut c = rng::stream(self.seed, self.replica, rng::stream_id(ALIVE_TAG, &[k]));
        let n = rng::poisson(&mut c, self.model.spec.rho);
        for m in 0..n {
            let id = rng::stream_id(RECT_TAG, &[k, ALIVE_BLOCK, m]);
            let mut r = rng::stream(self.seed, self.replica, id);
            let s = -(k as f64) - rng::uniform(&mut r);
            let birth = -rng::exp1(&mut r);
            let death = rng::exp1(&mut r);
            let rect = self.model.candidate(&mut r, id, s, birth, death)?;
            self.push(rect);
        }
        Ok(())
    }

    fn dead_block(&mut self, k: u64, j: u64) -> Result<()> {
        let mut c = rng::stream(self.seed, self.replica, rng::stream_id(DEAD_TAG, &[k, j]));
        let n = rng::poisson(&mut c, self.model.spec.rho);
        for m in 0..n {
            let id = rng::stream_id(RECT_TAG, &[k, j, m]);
            let mut r = rng::stream(self.seed, self.replica, id);
            let s = -(k as f64) - rng::uniform(&mut r);
            let death = -(j as f64) - rng::uniform(&mut r);
            let birth = death - rng::exp1(&mut r);
            let rect = self.model.candidate(&mut r, id, s, birth, death)?;
            self.push(rect);
        }
        Ok(())
    }

    fn grow_s_blocks(&mut self, k_new: u64) -> Result<()> {
        for k in self.s_blocks..k_new {
            self.alive_block(k)?;
            for j in 0..self.dead_blocks {
                self.dead_block(k, j)?;
            }
        }
        self.s_blocks = self.s_blocks.max(k_new);
        Ok(())
    }
}

impl Realization for PalmWindow {
    fn window_start(&self) -> f64 {
        -(self.s_blocks as f64)
    }

    fn target(&self) -> &[Site] {
        std::slice::from_ref(&ORIGIN)
    }

    fn rects(&self) -> &[Rect] {
        &self.rects
    }

    fn interacting(&self) -> &[usize] {
        &self.interacting
    }

    fn ensure_alive_after(&mut self, b: f64) -> Result<()> {
        if !b.is_finite() {
            return Err(invalid("materialization time must be finite"));
        }
        let need = if b >= 0.0 { 0 } else { (-b).ceil() as u64 };
        while self.dead_blocks < need {
            let j = self.dead_blocks;
            for k in 0..self.s_blocks {
                self.dead_block(k, j)?;
            }
            self.dead_blocks += 1;
        }
        Ok(())
    }

    fn in_slice(&self, idx: usize) -> bool {
        let r = &self.rects[idx];
        r.alive_at(0.0) && r.hull_within(-self.model.spec.t_obs, 0.0).is_some()
    }

    fn max_finite_horizon(&self) -> f64 {
        self.model.spec.t_obs
    }

    fn infinite_horizon(&self) -> Option<(f64, f64)> {
        Some((self.window_start(), self.model.spec.margin))
    }

    fn extend_window(&mut self, t: f64) -> Result<()> {
        if !(t.is_finite() && t > 0.0) {
            return Err(invalid("window length must be finite and positive"));
        }
        self.grow_s_blocks(t.ceil() as u64)
    }
}

const COMMON_TAG: u64 = 0x434f_4d4d;

/// Slice of the rectangles alive at time 0 that never visit the origin:
/// independent Poisson counts with the intensities of `law` (bracket
/// midpoints) on `sites`.
pub fn sample_common_part(law: &ProductLaw, sites: &[Site], seed: u64, replica: u64) -> Occupation {
    let mut r = rng::stream(seed, replica, rng::stream_id(COMMON_TAG, &[]));
    let mut o = Occupation::new(replica, None);
    for s in sites {
        o.add(*s, rng::poisson(&mut r, law.intensity(s).mid()) as u32);
    }
    o
}
