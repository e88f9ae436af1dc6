use std::f64::consts::PI;

use super::volume::volume_with_total;
use super::VolumeConfig;
use crate::error::{Error, Result};
use crate::geometry::{Region, Shape};
use crate::imagery::ImageGrid;
use crate::optim::NelderMead;

/// Maximizes the volume of an ellipse anchored at `center`.
pub fn optimize_ellipse(img: &ImageGrid, center: (f64, f64), cfg: &VolumeConfig) -> Result<(Region, f64)> {
    optimize_region(img, center, Shape::Ellipse, cfg)
}

struct Objective<'a> {
    img: &'a ImageGrid,
    center: (f64, f64),
    shape: Shape,
    lambda: f64,
    bounds: (f64, f64),
    axis_aligned: bool,
    total: f64,
    buf: Vec<f64>,
}

impl Objective<'_> {
    fn region(&self, x: &[f64]) -> Region {
        let (lo, hi) = self.bounds;
        let theta = if self.axis_aligned { 0.0 } else { x[2] };
        Region::new(self.shape, self.center, x[0].clamp(lo, hi), x[1].clamp(lo, hi), theta)
    }

    fn volume(&mut self, x: &[f64]) -> Option<f64> {
        let region = self.region(x);
        volume_with_total(self.img, &region, self.lambda, self.total, &mut self.buf)
    }

    /// Negated volume for the minimizer; degenerate regions are NaN.
    fn cost(&mut self, x: &[f64]) -> f64 {
        self.volume(x).map_or(f64::NAN, |v| -v)
    }
}

/// Volume maximization over `(a, b, θ)` with the center held fixed:
///
/// 1. evaluate the volume on a `res × res × res` grid over
///    `[a_min, a_max]² × [0, π)`;
/// 2. the `short_runs` best grid points (ties broken by grid index) each seed
///    a simplex run of `short_iterations` steps;
/// 3. the best short-run result is run to convergence (relative volume change
///    below `tolerance`, or `max_iterations` steps).
///
/// The returned region is canonical (`a ≥ b`, `θ ∈ [0, π)`).
pub fn optimize_region(img: &ImageGrid, center: (f64, f64), shape: Shape, cfg: &VolumeConfig) -> Result<(Region, f64)> {
    let bounds = cfg.bounds(img.width(), img.height())?;
    let axis_aligned = cfg.axis_aligned;
    let mut obj = Objective {
        img,
        center,
        shape,
        lambda: cfg.lambda,
        bounds,
        axis_aligned,
        total: img.data().iter().sum(),
        buf: Vec::new(),
    };

    let res = cfg.grid_resolution;
    let (lo, hi) = bounds;
    let step_ab = (hi - lo) / (res - 1) as f64;
    let step_theta = PI / res as f64;
    let n_theta = if axis_aligned { 1 } else { res };

    let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(res * res * n_theta);
    for i in 0..res {
        for j in 0..res {
            for k in 0..n_theta {
                let x = vec![lo + i as f64 * step_ab, lo + j as f64 * step_ab, k as f64 * step_theta];
                if let Some(v) = obj.volume(&x) {
                    scored.push((v, x));
                }
            }
        }
    }
    if scored.is_empty() {
        return Err(Error::Extraction(format!(
            "every grid region at ({:.1}, {:.1}) is degenerate",
            center.0, center.1
        )));
    }
    // stable sort keeps grid order among equal volumes
    scored.sort_by(|p, q| q.0.total_cmp(&p.0));

    let dims = if axis_aligned { 2 } else { 3 };
    let step: Vec<f64> = [step_ab / 2.0, step_ab / 2.0, step_theta / 2.0][..dims].to_vec();
    let short = NelderMead::default()
        .with_max_iterations(cfg.short_iterations)
        .with_tolerances(cfg.tolerance, 1e-3);

    let mut best: Option<(f64, Vec<f64>)> = None;
    for (_, x0) in scored.iter().take(cfg.short_runs) {
        let m = short.minimize(|x| obj.cost(x), &x0[..dims], &step);
        let v = -m.value;
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            best = Some((v, m.x));
        }
    }
    let (_, start) = best.expect("at least one short run");

    let full = NelderMead::default()
        .with_max_iterations(cfg.max_iterations)
        .with_tolerances(cfg.tolerance, 1e-3);
    let m = full.minimize(|x| obj.cost(x), &start, &step);
    let region = obj.region(&m.x);
    let v = obj
        .volume(&m.x)
        .ok_or_else(|| Error::Extraction("optimizer ended on a degenerate region".into()))?;
    Ok((region, v))
}
