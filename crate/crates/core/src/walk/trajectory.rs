use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::kernel::Kernel;
use crate::rng::{self, StreamRng};
use crate::site::{self, Site};

/// A two-sided piecewise-constant path with rate-1 exponential holding
/// times, sampled lazily.
///
/// After the anchor time the path follows the kernel; before it, the dual
/// kernel (the time reversal of a stationary walk). Each side owns its own
/// random stream, so extensions on one side never perturb the other and
/// extending in several steps yields the same path as extending once.
#[derive(Clone, Debug)]
pub struct Trajectory {
    kernel: Arc<Kernel>,
    anchor_time: f64,
    anchor_site: Site,
    /// Forward jumps: at `fwd_times[k]` the walk moves to `fwd_sites[k]`.
    fwd_times: Vec<f64>,
    fwd_sites: Vec<Site>,
    fwd_pending: f64,
    fwd_rng: StreamRng,
    /// Backward jumps, decreasing times: at `bwd_times[k]` the walk arrives
    /// from `bwd_sites[k]`.
    bwd_times: Vec<f64>,
    bwd_sites: Vec<Site>,
    bwd_pending: f64,
    bwd_rng: StreamRng,
    window: (f64, f64),
    escape_certified_after: Option<f64>,
}

/// Samples a trajectory through `start_site` at `start_time`, realized on
/// the closed interval `horizon`.
pub fn sample_path(
    kernel: Arc<Kernel>,
    start_site: Site,
    start_time: f64,
    horizon: (f64, f64),
    seed: u64,
    replica: u64,
    id: u64,
) -> Result<Trajectory> {
    if !(horizon.0 <= horizon.1) {
        return Err(invalid("empty horizon"));
    }
    if start_time < horizon.0 || start_time > horizon.1 {
        return Err(invalid("horizon must contain the start time"));
    }
    let mut t = Trajectory::new(kernel, start_site, start_time, None, seed, replica, id);
    t.extend(horizon)?;
    Ok(t)
}

impl Trajectory {
    /// A path sitting at `anchor_site` at `anchor_time`. With `entry_from`
    /// set, the path jumps into `anchor_site` from that site exactly at the
    /// anchor time.
    pub fn new(
        kernel: Arc<Kernel>,
        anchor_site: Site,
        anchor_time: f64,
        entry_from: Option<Site>,
        seed: u64,
        replica: u64,
        id: u64,
    ) -> Trajectory {
        let mut fwd_rng = rng::stream(seed, replica, id.wrapping_mul(2));
        let mut bwd_rng = rng::stream(seed, replica, id.wrapping_mul(2).wrapping_add(1));
        let fwd_pending = anchor_time + rng::exp1(&mut fwd_rng);
        let (bwd_times, bwd_sites) = match entry_from {
            Some(j) => (vec![anchor_time], vec![j]),
            None => (Vec::new(), Vec::new()),
        };
        let bwd_pending = anchor_time - rng::exp1(&mut bwd_rng);
        Trajectory {
            kernel,
            anchor_time,
            anchor_site,
            fwd_times: Vec::new(),
            fwd_sites: Vec::new(),
            fwd_pending,
            fwd_rng,
            bwd_times,
            bwd_sites,
            bwd_pending,
            bwd_rng,
            window: (anchor_time, anchor_time),
            escape_certified_after: None,
        }
    }

    pub fn kernel(&self) -> &Arc<Kernel> {
        &self.kernel
    }

    pub fn anchor_time(&self) -> f64 {
        self.anchor_time
    }

    pub fn anchor_site(&self) -> Site {
        self.anchor_site
    }

    pub fn simulated_window(&self) -> (f64, f64) {
        self.window
    }

    pub fn escape_certified_after(&self) -> Option<f64> {
        self.escape_certified_after
    }

    pub(crate) fn set_escape_certified_after(&mut self, t: f64) {
        self.escape_certified_after = Some(t);
    }

    /// Jump times inside the realized window, increasing.
    pub fn jump_times(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .bwd_times
            .iter()
            .rev()
            .copied()
            .filter(|&t| t >= self.window.0)
            .collect();
        v.extend(
            self.fwd_times
                .iter()
                .copied()
                .filter(|&t| t <= self.window.1),
        );
        v
    }

    /// Sites occupied right after each jump of [`Self::jump_times`].
    pub fn post_jump_sites(&self) -> Vec<Site> {
        let mut v = Vec::new();
        for k in (0..self.bwd_times.len()).rev() {
            if self.bwd_times[k] >= self.window.0 {
                v.push(if k == 0 {
                    self.anchor_site
                } else {
                    self.bwd_sites[k - 1]
                });
            }
        }
        for (t, s) in self.fwd_times.iter().zip(&self.fwd_sites) {
            if *t <= self.window.1 {
                v.push(*s);
            }
        }
        v
    }

    /// Extends the realized window to `new_window`, which must contain the
    /// current one.
    pub fn extend(&mut self, new_window: (f64, f64)) -> Result<()> {
        if !(new_window.0 <= new_window.1) {
            return Err(invalid("empty window"));
        }
        if new_window.0 > self.window.0 || new_window.1 < self.window.1 {
            return Err(invalid("extension would shrink the simulated window"));
        }
        self.extend_forward(new_window.1);
        self.extend_backward(new_window.0);
        self.window = new_window;
        Ok(())
    }

    pub(crate) fn extend_forward(&mut self, hi: f64) {
        while self.fwd_pending <= hi {
            let here = self.fwd_sites.last().copied().unwrap_or(self.anchor_site);
            let u = rng::uniform(&mut self.fwd_rng);
            let next = site::add(&here, self.kernel.offset_for(u));
            self.fwd_times.push(self.fwd_pending);
            self.fwd_sites.push(next);
            self.fwd_pending += rng::exp1(&mut self.fwd_rng);
        }
        if hi > self.window.1 {
            self.window.1 = hi;
        }
    }

    /// Time of the next forward jump beyond the realized window.
    pub(crate) fn next_forward_jump(&self) -> f64 {
        self.fwd_pending
    }

    pub(crate) fn extend_backward(&mut self, lo: f64) {
        while self.bwd_pending >= lo {
            let here = self.bwd_sites.last().copied().unwrap_or(self.anchor_site);
            let u = rng::uniform(&mut self.bwd_rng);
            let prev = site::sub(&here, self.kernel.offset_for(u));
            self.bwd_times.push(self.bwd_pending);
            self.bwd_sites.push(prev);
            self.bwd_pending -= rng::exp1(&mut self.bwd_rng);
        }
        if lo < self.window.0 {
            self.window.0 = lo;
        }
    }

    /// Position at time `u` (right-continuous); `None` outside the window.
    pub fn position(&self, u: f64) -> Option<Site> {
        if u < self.window.0 || u > self.window.1 {
            return None;
        }
        Some(self.position_unchecked(u))
    }

    pub(crate) fn position_unchecked(&self, u: f64) -> Site {
        if u >= self.anchor_time {
            let n = self.fwd_times.partition_point(|&t| t <= u);
            if n == 0 {
                self.anchor_site
            } else {
                self.fwd_sites[n - 1]
            }
        } else {
            let m = self.bwd_times.partition_point(|&t| t > u);
            if m == 0 {
                self.anchor_site
            } else {
                self.bwd_sites[m - 1]
            }
        }
    }

    /// Constant pieces `(start, end, site)` covering `[lo, hi]` in order.
    /// The window must already cover `[lo, hi]`.
    pub fn segments(&self, lo: f64, hi: f64) -> Vec<(f64, f64, Site)> {
        let mut out = Vec::new();
        let mut cur = lo;
        let mut here = self.position_unchecked(lo);
        let bwd = (0..self.bwd_times.len()).rev().map(|k| {
            let s = if k == 0 {
                self.anchor_site
            } else {
                self.bwd_sites[k - 1]
            };
            (self.bwd_times[k], s)
        });
        let fwd = self
            .fwd_times
            .iter()
            .copied()
            .zip(self.fwd_sites.iter().copied());
        for (t, s) in bwd.chain(fwd) {
            if t > hi {
                break;
            }
            if t > cur {
                out.push((cur, t, here));
                cur = t;
                here = s;
            }
        }
        out.push((cur, hi, here));
        out
    }
}
