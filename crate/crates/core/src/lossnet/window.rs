//! Free windows: the stationary rectangle process anchored on a finite
//! set of sites, with paths realized backwards from time 0.

use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::kernel::Kernel;
use crate::rng;
use crate::site::Site;
use crate::walk::{visit_intervals, Trajectory};

use super::trim::Realization;
use super::types::Rect;

const ALIVE_TAG: u64 = 0x414c_4956;
const DEAD_TAG: u64 = 0x4445_4144;
const RECT_TAG: u64 = 0x5245_4354;
const ATTR_TAG: u64 = 0x4154_5452;
const ALIVE_BLOCK: u64 = u64::MAX;

/// Parameters of a site-anchored free window.
#[derive(Clone, Debug)]
pub struct WindowSpec {
    pub rho: f64,
    /// Sites carrying the time-0 positions of the rectangles.
    pub sites: Vec<Site>,
    /// Pattern support whose visits are recorded.
    pub target: Vec<Site>,
    /// Paths are realized on `[-horizon, 0]`.
    pub horizon: f64,
    /// Draw a uniform mark per rectangle.
    pub marks: bool,
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(invalid("density must be finite and nonnegative"));
        }
        if self.sites.is_empty() {
            return Err(invalid("empty site box"));
        }
        if self.target.is_empty() {
            return Err(invalid("empty pattern support"));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(invalid("path window must be a finite nonnegative length"));
        }
        Ok(())
    }
}

/// Free rectangle process restricted to rectangles whose time-0 position
/// lies in a finite site box.
///
/// Each site carries a Poisson(ρ) number of rectangles alive at time 0,
/// with Exp(1) age and residual lifetime, and for every unit block of
/// death times `(-j-1, -j]` a further Poisson(ρ) number of rectangles that
/// died then, with Exp(1) lifetimes. Together these are the stationary
/// rectangle process. Blocks of dead rectangles are materialized on demand.
#[derive(Clone, Debug)]
pub struct FreeWindow {
    kernel: Arc<Kernel>,
    spec: Arc<WindowSpec>,
    seed: u64,
    replica: u64,
    dead_blocks: u64,
    rects: Vec<Rect>,
    interacting: Vec<usize>,
}

/// Samples the rectangles alive at time 0 of a free window.
pub fn sample_free_window(
    kernel: &Arc<Kernel>,
    spec: &Arc<WindowSpec>,
    seed: u64,
    replica: u64,
) -> Result<FreeWindow> {
    spec.validate()?;
    let mut w = FreeWindow {
        kernel: kernel.clone(),
        spec: spec.clone(),
        seed,
        replica,
        dead_blocks: 0,
        rects: Vec::new(),
        interacting: Vec::new(),
    };
    let mut counts = rng::stream(seed, replica, rng::stream_id(ALIVE_TAG, &[]));
    for si in 0..spec.sites.len() {
        let n = rng::poisson(&mut counts, spec.rho);
        for m in 0..n {
            let id = rng::stream_id(RECT_TAG, &[si as u64, ALIVE_BLOCK, m]);
            let mut a = rng::stream(seed, replica, rng::stream_id(ATTR_TAG, &[id]));
            let birth = -rng::exp1(&mut a);
            let death = rng::exp1(&mut a);
            w.push(si, id, birth, death, &mut a)?;
        }
    }
    Ok(w)
}

impl FreeWindow {
    pub fn spec(&self) -> &WindowSpec {
        &self.spec
    }

    pub fn replica(&self) -> u64 {
        self.replica
    }

    fn push(
        &mut self,
        si: usize,
        id: u64,
        birth: f64,
        death: f64,
        attr: &mut rng::StreamRng,
    ) -> Result<()> {
        let u = self.spec.marks.then(|| rng::uniform(attr));
        let site = self.spec.sites[si];
        let mut t = Trajectory::new(
            self.kernel.clone(),
            site,
            0.0,
            None,
            self.seed,
            self.replica,
            id,
        );
        let lo = -self.spec.horizon;
        t.extend((lo, 0.0))?;
        let visits = visit_intervals(&t, &self.spec.target, lo, 0.0);
        if !visits.is_empty() {
            self.interacting.push(self.rects.len());
        }
        self.rects.push(Rect {
            id,
            birth,
            death,
            u,
            visits,
            site_now: Some(site),
            site_start: t.position(lo),
        });
        Ok(())
    }

    fn add_dead_block(&mut self, j: u64) -> Result<()> {
        let mut counts = rng::stream(self.seed, self.replica, rng::stream_id(DEAD_TAG, &[j]));
        for si in 0..self.spec.sites.len() {
            let n = rng::poisson(&mut counts, self.spec.rho);
            for m in 0..n {
                let id = rng::stream_id(RECT_TAG, &[si as u64, j, m]);
                let mut a = rng::stream(self.seed, self.replica, rng::stream_id(ATTR_TAG, &[id]));
                let death = -(j as f64) - rng::uniform(&mut a);
                let birth = death - rng::exp1(&mut a);
                self.push(si, id, birth, death, &mut a)?;
            }
        }
        Ok(())
    }
}

impl Realization for FreeWindow {
    fn window_start(&self) -> f64 {
        -self.spec.horizon
    }

    fn target(&self) -> &[Site] {
        &self.spec.target
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
            self.add_dead_block(self.dead_blocks)?;
            self.dead_blocks += 1;
        }
        Ok(())
    }
}
