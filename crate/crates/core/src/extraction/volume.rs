use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::imagery::ImageGrid;
use crate::stats::{norm_cdf, norm_pdf};

/// Regularized volume of `region`: with `μ̂` the mean intensity outside the
/// region and `Y_c = Y − μ̂`, returns
/// `Σ_in Y_c·1[Y_c > 0] + λ·Σ_in Y_c·1[Y_c ≤ 0]`.
pub fn volume(img: &ImageGrid, region: &Region, lambda: f64) -> Result<f64> {
    let total: f64 = img.data().iter().sum();
    let mut buf = Vec::new();
    volume_with_total(img, region, lambda, total, &mut buf).ok_or_else(|| degenerate(region))
}

/// The same criterion written as `Σ_in Y_c + (λ − 1)·Σ_in Y_c·1[Y_c ≤ 0]`.
pub fn volume_rearranged(img: &ImageGrid, region: &Region, lambda: f64) -> Result<f64> {
    let inside: Vec<(usize, usize)> = crate::geometry::rasterize(region, img.width(), img.height());
    let n = img.len();
    if inside.is_empty() || inside.len() == n {
        return Err(degenerate(region));
    }
    let sum_in: f64 = inside.iter().map(|&(u, v)| img.get(u, v)).sum();
    let total: f64 = img.data().iter().sum();
    let mu = (total - sum_in) / (n - inside.len()) as f64;
    let (mut all, mut neg) = (0.0, 0.0);
    for &(u, v) in &inside {
        let yc = img.get(u, v) - mu;
        all += yc;
        if yc <= 0.0 {
            neg += yc;
        }
    }
    Ok(all + (lambda - 1.0) * neg)
}

fn degenerate(region: &Region) -> Error {
    Error::DegenerateRegion(format!(
        "region at ({:.2}, {:.2}) with a={:.3}, b={:.3} covers no pixel or the whole image",
        region.cu, region.cv, region.a, region.b
    ))
}

/// Volume given the precomputed image total; `None` when the region or its
/// complement is empty. `buf` is scratch space for the inside intensities.
pub(crate) fn volume_with_total(
    img: &ImageGrid,
    region: &Region,
    lambda: f64,
    total: f64,
    buf: &mut Vec<f64>,
) -> Option<f64> {
    buf.clear();
    region.for_each_pixel(img.width(), img.height(), |u, v| buf.push(img.get(u, v)));
    let n = img.len();
    if buf.is_empty() || buf.len() == n {
        return None;
    }
    let sum_in: f64 = buf.iter().sum();
    let mu = (total - sum_in) / (n - buf.len()) as f64;
    let (mut pos, mut neg) = (0.0, 0.0);
    for &y in buf.iter() {
        let yc = y - mu;
        if yc > 0.0 {
            pos += yc;
        } else {
            neg += yc;
        }
    }
    Some(pos + lambda * neg)
}

/// Expected per-pixel volume contribution of true intensity `t` under
/// N(0, σ²) noise: `t + (λ−1)[t·Φ(−t/σ) − σ·φ(−t/σ)]`.
pub fn c_sigma(t: f64, sigma: f64, lambda: f64) -> f64 {
    let z = -t / sigma;
    t + (lambda - 1.0) * (t * norm_cdf(z) - sigma * norm_pdf(z))
}

/// Expected volume of `inner` over a noise-free signal image `tau` with
/// white Gaussian noise of standard deviation `sigma`.
pub fn expected_volume(tau: &ImageGrid, sigma: f64, lambda: f64, inner: &Region) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("noise sigma must be positive, got {sigma}")));
    }
    let mut acc = 0.0;
    inner.for_each_pixel(tau.width(), tau.height(), |u, v| {
        acc += c_sigma(tau.get(u, v), sigma, lambda);
    });
    Ok(acc)
}

/// Largest λ keeping every pixel of contrast `ξσ` a positive expected
/// contribution: `ξ / [φ(−ξ) − ξ·Φ(−ξ)] + 1`.
pub fn lambda_xi(xi: f64) -> Result<f64> {
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(Error::Parameter(format!("xi must be positive, got {xi}")));
    }
    let denom = norm_pdf(-xi) - xi * norm_cdf(-xi);
    if !(denom > 0.0) {
        return Err(Error::Parameter(format!(
            "xi = {xi} is too large: tail term underflows"
        )));
    }
    Ok(xi / denom + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Region;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// h_ξ(λ) = ξ[1 + (λ−1)Φ(−ξ)] − (λ−1)φ(−ξ)
    fn h(xi: f64, lambda: f64) -> f64 {
        xi * (1.0 + (lambda - 1.0) * norm_cdf(-xi)) - (lambda - 1.0) * norm_pdf(-xi)
    }

    fn bisect_root(xi: f64) -> f64 {
        let (mut lo, mut hi) = (1.0, 1e6);
        assert!(h(xi, lo) > 0.0 && h(xi, hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(xi, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lambda_xi_reference_points() {
        assert!((lambda_xi(1.6449).unwrap() - 79.73).abs() < 0.05);
        assert!((lambda_xi(1.9600).unwrap() - 208.49).abs() < 0.2);
    }

    #[test]
    fn lambda_xi_is_root_of_h() {
        for xi in [0.5, 1.0, 2.0, 3.0] {
            let closed = lambda_xi(xi).unwrap();
            let root = bisect_root(xi);
            assert!(
                (closed - root).abs() <= 1e-9 * closed.max(1.0),
                "{xi}: {closed} vs {root}"
            );
            assert!(h(xi, closed).abs() < 1e-9);
        }
        assert!(lambda_xi(0.0).is_err());
        assert!(lambda_xi(-1.0).is_err());
    }

    #[test]
    fn zero_image_has_zero_volume() {
        let img = ImageGrid::zeros(10, 10).unwrap();
        let r = Region::ellipse((4.0, 5.0), 3.0, 2.0, 0.4);
        for lambda in [1.5, 100.0] {
            assert_eq!(volume(&img, &r, lambda).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_hot_pixel() {
        let mut data = vec![0.0; 25];
        data[2 * 5 + 2] = 10.0;
        let img = ImageGrid::new(5, 5, data).unwrap();
        let unit = Region::ellipse((2.0, 2.0), 0.9, 0.9, 0.0);
        assert_eq!(crate::geometry::rasterize(&unit, 5, 5), vec![(2, 2)]);
        assert_eq!(volume(&img, &unit, 100.0).unwrap(), 10.0);
    }

    #[test]
    fn degenerate_regions() {
        let img = ImageGrid::zeros(4, 4).unwrap();
        let empty = Region::ellipse((1.5, 1.5), 0.3, 0.3, 0.0);
        let all = Region::ellipse((1.5, 1.5), 10.0, 10.0, 0.0);
        assert!(matches!(volume(&img, &empty, 100.0), Err(Error::DegenerateRegion(_))));
        assert!(matches!(volume(&img, &all, 100.0), Err(Error::DegenerateRegion(_))));
    }

    #[test]
    fn two_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let img = ImageGrid::from_fn(20, 20, |_, _| StandardNormal.sample(&mut rng)).unwrap();
            let r = Region::ellipse(
                (rng.random_range(3.0..17.0), rng.random_range(3.0..17.0)),
                rng.random_range(1.0..8.0),
                rng.random_range(1.0..8.0),
                rng.random_range(0.0..std::f64::consts::PI),
            );
            let lambda = rng.random_range(1.01..300.0);
            let a = volume(&img, &r, lambda).unwrap();
            let b = volume_rearranged(&img, &r, lambda).unwrap();
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn pure_noise_expected_contribution() {
        let tau = ImageGrid::zeros(20, 20).unwrap();
        let r = Region::ellipse((10.0, 10.0), 3.0, 2.0, 0.0);
        let m = crate::geometry::rasterize(&r, 20, 20).len() as f64;
        let (sigma, lambda) = (1.7, 100.0);
        let expect = -m * (lambda - 1.0) * sigma / (2.0 * std::f64::consts::PI).sqrt();
        let got = expected_volume(&tau, sigma, lambda, &r).unwrap();
        assert!((got - expect).abs() < 1e-9 * expect.abs());
    }

    #[test]
    fn c_sigma_limits_and_monotonicity() {
        let (sigma, lambda) = (2.0, 100.0);
        assert!((c_sigma(40.0 * sigma, sigma, lambda) - 40.0 * sigma).abs() < 1e-9);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=1000 {
            let t = -5.0 * sigma + 10.0 * sigma * i as f64 / 1000.0;
            let c = c_sigma(t, sigma, lambda);
            assert!(c > prev);
            prev = c;
        }
        assert!(expected_volume(
            &ImageGrid::zeros(3, 3).unwrap(),
            0.0,
            2.0,
            &Region::ellipse((1.0, 1.0), 1.0, 1.0, 0.0)
        )
        .is_err());
    }
}
