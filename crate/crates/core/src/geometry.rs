//! Parametric regions (rotated ellipses and rectangles), pixel membership,
//! and the equal-area outer frame.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Ellipse,
    Rectangle,
}

/// A region centered at `(cu, cv)` with half-extents `a ≥ b > 0` along its
/// own axes and orientation `theta ∈ [0, π)` of the `a`-axis measured from
/// the horizontal (`u`) axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub shape: Shape,
    pub cu: f64,
    pub cv: f64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

/// Reduces an angle to `[0, π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    // rem_euclid can round up to exactly π
    if t >= PI {
        0.0
    } else {
        t
    }
}

impl Region {
    /// Builds a canonical region: if `b > a` the axes are swapped and the
    /// orientation turned by π/2, then `theta` is reduced to `[0, π)`.
    pub fn new(shape: Shape, center: (f64, f64), a: f64, b: f64, theta: f64) -> Self {
        let (a, b, theta) = if b > a { (b, a, theta + PI / 2.0) } else { (a, b, theta) };
        Self {
            shape,
            cu: center.0,
            cv: center.1,
            a,
            b,
            theta: normalize_angle(theta),
        }
    }

    pub fn ellipse(center: (f64, f64), a: f64, b: f64, theta: f64) -> Self {
        Self::new(Shape::Ellipse, center, a, b, theta)
    }

    pub fn rectangle(center: (f64, f64), a: f64, b: f64, theta: f64) -> Self {
        Self::new(Shape::Rectangle, center, a, b, theta)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.cu, self.cv)
    }

    /// Continuous area of the region.
    pub fn area(&self) -> f64 {
        match self.shape {
            Shape::Ellipse => PI * self.a * self.b,
            Shape::Rectangle => 4.0 * self.a * self.b,
        }
    }

    /// Same center, shape and orientation with both half-extents grown by `delta`.
    pub fn grown(&self, delta: f64) -> Self {
        Self {
            a: self.a + delta,
            b: self.b + delta,
            ..*self
        }
    }

    /// Whether the center of pixel `(u, v)` lies inside the region
    /// (boundary inclusive).
    #[inline]
    pub fn contains(&self, u: i64, v: i64) -> bool {
        let (s, c) = self.theta.sin_cos();
        self.contains_rotated(u as f64 - self.cu, v as f64 - self.cv, s, c)
    }

    #[inline]
    fn contains_rotated(&self, du: f64, dv: f64, sin: f64, cos: f64) -> bool {
        if !(self.a > 0.0 && self.b > 0.0) {
            return false;
        }
        let x = du * cos + dv * sin;
        let y = -du * sin + dv * cos;
        match self.shape {
            Shape::Ellipse => {
                let (xa, yb) = (x / self.a, y / self.b);
                xa * xa + yb * yb <= 1.0
            }
            Shape::Rectangle => x.abs() <= self.a && y.abs() <= self.b,
        }
    }

    /// Integer pixel bounding box `(u0, u1, v0, v1)`, inclusive, unclipped.
    pub fn bounding_box(&self) -> (i64, i64, i64, i64) {
        let (s, c) = self.theta.sin_cos();
        let (hu, hv) = match self.shape {
            Shape::Ellipse => (
                ((self.a * c).powi(2) + (self.b * s).powi(2)).sqrt(),
                ((self.a * s).powi(2) + (self.b * c).powi(2)).sqrt(),
            ),
            Shape::Rectangle => (self.a * c.abs() + self.b * s.abs(), self.a * s.abs() + self.b * c.abs()),
        };
        (
            (self.cu - hu).floor() as i64,
            (self.cu + hu).ceil() as i64,
            (self.cv - hv).floor() as i64,
            (self.cv + hv).ceil() as i64,
        )
    }

    /// Calls `f(u, v)` for every in-bounds pixel of a `width × height` image
    /// whose center lies inside the region, in row-major order.
    pub fn for_each_pixel(&self, width: usize, height: usize, mut f: impl FnMut(usize, usize)) {
        if width == 0 || height == 0 {
            return;
        }
        let (u0, u1, v0, v1) = self.bounding_box();
        let (u0, u1) = (u0.max(0), u1.min(width as i64 - 1));
        let (v0, v1) = (v0.max(0), v1.min(height as i64 - 1));
        let (s, c) = self.theta.sin_cos();
        for v in v0..=v1 {
            let dv = v as f64 - self.cv;
            for u in u0..=u1 {
                if self.contains_rotated(u as f64 - self.cu, dv, s, c) {
                    f(u as usize, v as usize);
                }
            }
        }
    }

    /// Number of pixel centers inside the region ignoring image bounds.
    pub fn unclipped_count(&self) -> usize {
        let (u0, u1, v0, v1) = self.bounding_box();
        let (s, c) = self.theta.sin_cos();
        let mut n = 0;
        for v in v0..=v1 {
            for u in u0..=u1 {
                if self.contains_rotated(u as f64 - self.cu, v as f64 - self.cv, s, c) {
                    n += 1;
                }
            }
        }
        n
    }
}

/// In-bounds pixels whose centers fall inside `region`, row-major.
pub fn rasterize(region: &Region, width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    region.for_each_pixel(width, height, |u, v| out.push((u, v)));
    out
}

/// Grow amount that doubles the area `a·b` when added to both half-extents:
/// the positive root of `(a + Δ)(b + Δ) = 2ab`.
pub fn equal_area_delta(a: f64, b: f64) -> f64 {
    // [-(a+b) + √(a²+b²+6ab)]/2, rationalized to 2ab / [(a+b) + √(a²+b²+6ab)]
    // so that it stays accurate when b ≪ a
    let disc = (a * a + b * b + 6.0 * a * b).sqrt();
    2.0 * a * b / (a + b + disc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPair {
    pub inner: Region,
    pub outer: Region,
    pub delta: f64,
}

impl RegionPair {
    /// Calls `f(u, v)` for every in-bounds pixel in `outer \ inner`.
    pub fn for_each_annulus_pixel(&self, width: usize, height: usize, mut f: impl FnMut(usize, usize)) {
        let inner = self.inner;
        self.outer.for_each_pixel(width, height, |u, v| {
            if !inner.contains(u as i64, v as i64) {
                f(u, v);
            }
        });
    }
}

/// Outer region sharing center, shape and orientation with `inner`, with
/// both half-extents grown so that its area is exactly twice the inner area.
pub fn make_outer(inner: &Region) -> RegionPair {
    let delta = equal_area_delta(inner.a, inner.b);
    RegionPair {
        inner: *inner,
        outer: inner.grown(delta),
        delta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn circle_membership() {
        let c = Region::ellipse((10.0, 10.0), 3.0, 3.0, 0.0);
        assert!(c.contains(10, 10));
        assert!(c.contains(10, 13));
        assert!(!c.contains(10, 14));
    }

    #[test]
    fn quarter_turn_swaps_axes() {
        let e = Region::ellipse((10.0, 10.0), 4.0, 1.0, PI / 2.0);
        assert!(e.contains(10, 13));
        assert!(!e.contains(13, 10));
    }

    #[test]
    fn thin_ellipse_excludes_adjacent_row() {
        let e = Region::ellipse((10.0, 10.0), 4.0, 0.4, 0.0);
        assert!(!e.contains(10, 11));
        assert!(e.contains(14, 10));
    }

    #[test]
    fn canonicalization_swaps_axes() {
        let r = Region::ellipse((0.0, 0.0), 1.0, 3.0, 0.1);
        assert_eq!((r.a, r.b), (3.0, 1.0));
        assert!((r.theta - (0.1 + PI / 2.0)).abs() < 1e-15);
        let r = Region::rectangle((0.0, 0.0), 2.0, 1.0, -0.25);
        assert!((r.theta - (PI - 0.25)).abs() < 1e-15);
    }

    #[test]
    fn small_circle_is_a_plus_sign() {
        let r = Region::ellipse((5.0, 5.0), 1.1, 1.1, 0.0);
        let px = rasterize(&r, 11, 11);
        assert_eq!(px, vec![(5, 4), (4, 5), (5, 5), (6, 5), (5, 6)]);
    }

    #[test]
    fn corner_region_is_clipped() {
        let r = Region::ellipse((0.0, 0.0), 2.0, 2.0, 0.0);
        let px = rasterize(&r, 10, 10);
        // quadrant of the radius-2 disk: (0..=2, 0) (0..=1,1) (0,2) + (1,1)
        assert_eq!(px.len(), 6);
        assert!(px.iter().all(|&(u, v)| u <= 2 && v <= 2));
        assert_eq!(r.unclipped_count(), 13);
    }

    #[test]
    fn tiny_region_between_centers_is_empty() {
        let r = Region::ellipse((3.5, 3.5), 0.4, 0.3, 0.2);
        assert!(rasterize(&r, 8, 8).is_empty());
    }

    #[test]
    fn rectangle_membership() {
        let r = Region::rectangle((5.0, 5.0), 2.0, 1.0, 0.0);
        assert_eq!(rasterize(&r, 20, 20).len(), 15);
        let rot = Region::rectangle((5.0, 5.0), 2.0, 1.0, PI / 2.0);
        assert!(rot.contains(5, 7));
        assert!(!rot.contains(7, 5));
    }

    #[test]
    fn outer_circle_delta() {
        let pair = make_outer(&Region::ellipse((0.0, 0.0), 5.0, 5.0, 0.0));
        assert!((pair.delta - 5.0 * (2f64.sqrt() - 1.0)).abs() < 1e-12);
        assert!((pair.outer.area() - 2.0 * pair.inner.area()).abs() < 1e-9);
    }

    #[test]
    fn outer_four_by_two() {
        let pair = make_outer(&Region::ellipse((0.0, 0.0), 4.0, 2.0, 0.0));
        let oracle = (-6.0 + 68f64.sqrt()) / 2.0;
        assert!((pair.delta - oracle).abs() < 1e-12);
        assert!((pair.delta - 1.123_105_625_617_66).abs() < 1e-9);
        assert!(((4.0 + pair.delta) * (2.0 + pair.delta) - 16.0).abs() < 1e-12);
        assert_eq!(pair.outer.theta, pair.inner.theta);
        assert_eq!(pair.outer.center(), pair.inner.center());
    }

    #[test]
    fn pixel_count_approaches_area() {
        for &(a, b, t) in &[(10.0, 10.0, 0.0), (14.0, 10.0, 0.7), (25.0, 12.0, 2.0)] {
            let r = Region::ellipse((40.0, 40.0), a, b, t);
            let n = rasterize(&r, 81, 81).len() as f64;
            assert!((n - r.area()).abs() / r.area() < 0.02, "{a} {b}: {n}");
        }
    }

    proptest! {
        #[test]
        fn delta_doubles_area(a in 1e-6f64..=50.0, b in 1e-6f64..=50.0) {
            let d = equal_area_delta(a, b);
            prop_assert!(d > 0.0);
            let ratio = (a + d) * (b + d) / (a * b);
            prop_assert!((ratio - 2.0).abs() < 1e-12);
        }

        #[test]
        fn half_turn_invariance(
            a in 0.5f64..8.0, b in 0.5f64..8.0, t in 0.0f64..PI,
            u in 0i64..20, v in 0i64..20, rect in any::<bool>(),
        ) {
            let shape = if rect { Shape::Rectangle } else { Shape::Ellipse };
            let r1 = Region { shape, cu: 10.0, cv: 10.0, a, b, theta: t };
            let r2 = Region { theta: t + PI, ..r1 };
            prop_assert_eq!(r1.contains(u, v), r2.contains(u, v));
        }

        #[test]
        fn rasterize_agrees_with_contains(
            cu in 0.0f64..12.0, cv in 0.0f64..12.0, a in 0.3f64..6.0, b in 0.3f64..6.0, t in 0.0f64..PI,
        ) {
            let r = Region::ellipse((cu, cv), a, b, t);
            let fast = rasterize(&r, 12, 12);
            let mut brute = Vec::new();
            for v in 0..12 {
                for u in 0..12 {
                    if r.contains(u, v) {
                        brute.push((u as usize, v as usize));
                    }
                }
            }
            prop_assert_eq!(fast, brute);
        }
    }
}
