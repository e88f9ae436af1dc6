//! Noise-interference model (NIM): the observed response of a flawed
//! specimen is `max(signal, noise)` with
//!
//! * `D_signal = β0 + β1·log10(size) + ε_S`, `ε_S ~ N(0, σS²)`
//! * `D_noise ~ N(μN, σN²)`
//!
//! Flawless specimens observe `D_noise` alone. Parameters are fitted by
//! maximum likelihood; POD is `Pr(D_obs > 0)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::NelderMead;
use crate::stats::{ln_norm_cdf, ln_norm_pdf, mean, norm_cdf, quantile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NimParams {
    pub beta0: f64,
    pub beta1: f64,
    pub mu_n: f64,
    pub sigma_s: f64,
    pub sigma_n: f64,
}

/// Peak-amplitude NIM on the `log10` peak scale with detection threshold `z_th`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakAmpParams {
    pub gamma0: f64,
    pub gamma1: f64,
    pub kappa_s: f64,
    pub nu_n: f64,
    pub kappa_n: f64,
    pub z_th: f64,
}

impl PeakAmpParams {
    /// Reinterprets a NIM fitted to `log10` peak responses.
    pub fn from_log_peak_fit(fit: &NimParams, z_th: f64) -> Self {
        Self {
            gamma0: fit.beta0,
            gamma1: fit.beta1,
            kappa_s: fit.sigma_s,
            nu_n: fit.mu_n,
            kappa_n: fit.sigma_n,
            z_th,
        }
    }
}

/// Log-likelihood of flawed observations `(D, size)` and flawless
/// observations `D` under `params`.
pub fn nim_loglik(params: &NimParams, flawed: &[(f64, f64)], noise: &[f64]) -> Result<f64> {
    let NimParams {
        beta0,
        beta1,
        mu_n,
        sigma_s,
        sigma_n,
    } = *params;
    if !(sigma_s > 0.0 && sigma_n > 0.0) {
        return Err(Error::Likelihood(format!(
            "scale parameters must be positive (σS = {sigma_s}, σN = {sigma_n})"
        )));
    }
    let (ln_ss, ln_sn) = (sigma_s.ln(), sigma_n.ln());
    let mut ll = 0.0;
    for &(d, size) in flawed {
        let zs = (d - beta0 - beta1 * size.log10()) / sigma_s;
        let zn = (d - mu_n) / sigma_n;
        // signal is the max and noise below it, or the other way round
        let t1 = ln_norm_pdf(zs) - ln_ss + ln_norm_cdf(zn);
        let t2 = ln_norm_pdf(zn) - ln_sn + ln_norm_cdf(zs);
        let hi = t1.max(t2);
        ll += hi + (1.0 + (t1.min(t2) - hi).exp()).ln();
    }
    for &d in noise {
        ll += ln_norm_pdf((d - mu_n) / sigma_n) - ln_sn;
    }
    if !ll.is_finite() {
        return Err(Error::Likelihood(format!("log-likelihood is {ll}")));
    }
    Ok(ll)
}

/// Outcome of [`fit_nim_detailed`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NimFit {
    pub params: NimParams,
    pub loglik: f64,
    pub initial: NimParams,
    pub initial_loglik: f64,
    pub evaluations: usize,
    /// `D − β0 − β1·log10(size)` for flawed observations.
    pub flawed_residuals: Vec<f64>,
    /// `D − μN` for flawless observations.
    pub noise_residuals: Vec<f64>,
}

pub fn fit_nim(flawed: &[(f64, f64)], noise: &[f64]) -> Result<NimParams> {
    fit_nim_detailed(flawed, noise).map(|f| f.params)
}

/// Maximum-likelihood NIM fit.
///
/// Starting point: `(μN, σN)` from the noise sample moments; `(β0, β1, σS)`
/// from least squares on the flawed points whose `D` exceeds the noise 90th
/// percentile (all flawed points if fewer than two distinct sizes remain).
/// The simplex search runs over `(β0, β1, μN, ln σS, ln σN)` with restarts.
pub fn fit_nim_detailed(flawed: &[(f64, f64)], noise: &[f64]) -> Result<NimFit> {
    if noise.len() < 2 {
        return Err(Error::Fit(format!(
            "need at least 2 noise observations, got {}",
            noise.len()
        )));
    }
    if flawed
        .iter()
        .any(|&(d, s)| !(d.is_finite() && s > 0.0 && s.is_finite()))
        || noise.iter().any(|d| !d.is_finite())
    {
        return Err(Error::Fit("observations must be finite with positive sizes".into()));
    }
    if distinct_sizes(flawed.iter().map(|p| p.1)) < 2 {
        return Err(Error::Fit("need at least 2 distinct flaw sizes".into()));
    }
    let mu_n = mean(noise);
    let sigma_n = (noise.iter().map(|d| (d - mu_n).powi(2)).sum::<f64>() / noise.len() as f64).sqrt();
    if !(sigma_n > 0.0) {
        return Err(Error::Fit("noise observations have zero spread".into()));
    }

    let floor = quantile(noise, 0.9);
    let above: Vec<(f64, f64)> = flawed.iter().copied().filter(|&(d, _)| d > floor).collect();
    let pts = if distinct_sizes(above.iter().map(|p| p.1)) >= 2 {
        above
    } else {
        flawed.to_vec()
    };
    let (beta0, beta1, resid_sd) = least_squares(&pts);
    let initial = NimParams {
        beta0,
        beta1,
        mu_n,
        sigma_s: resid_sd.max(1e-3 * sigma_n).max(1e-12),
        sigma_n,
    };
    let initial_loglik = nim_loglik(&initial, flawed, noise)?;

    let cost = |x: &[f64]| -> f64 {
        let p = unpack(x);
        nim_loglik(&p, flawed, noise).map_or(f64::INFINITY, |ll| -ll)
    };
    let scale_x = {
        let xs: Vec<f64> = flawed.iter().map(|p| p.1.log10()).collect();
        let m = mean(&xs);
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64)
            .sqrt()
            .max(0.05)
    };
    let step = [
        initial.sigma_s.max(0.1 * sigma_n),
        (initial.sigma_s / scale_x).max(0.1 * sigma_n),
        0.5 * sigma_n,
        0.3,
        0.3,
    ];
    let nm = NelderMead::default()
        .with_max_iterations(4000)
        .with_tolerances(1e-12, 1e-9);
    let mut x = pack(&initial);
    let mut best = cost(&x);
    let mut evaluations = 0;
    for _ in 0..6 {
        let m = nm.minimize(cost, &x, &step);
        evaluations += m.evaluations;
        let improved = best - m.value;
        if m.value <= best {
            x = m.x;
            best = m.value;
        }
        if improved.abs() < 1e-10 {
            break;
        }
    }
    let params = unpack(&x);
    let loglik = nim_loglik(&params, flawed, noise)?;
    if loglik < initial_loglik {
        return Err(Error::Fit("optimizer failed to improve on the starting point".into()));
    }
    Ok(NimFit {
        params,
        loglik,
        initial,
        initial_loglik,
        evaluations,
        flawed_residuals: flawed
            .iter()
            .map(|&(d, s)| d - params.beta0 - params.beta1 * s.log10())
            .collect(),
        noise_residuals: noise.iter().map(|d| d - params.mu_n).collect(),
    })
}

fn pack(p: &NimParams) -> Vec<f64> {
    vec![p.beta0, p.beta1, p.mu_n, p.sigma_s.ln(), p.sigma_n.ln()]
}

fn unpack(x: &[f64]) -> NimParams {
    NimParams {
        beta0: x[0],
        beta1: x[1],
        mu_n: x[2],
        sigma_s: x[3].exp(),
        sigma_n: x[4].exp(),
    }
}

fn distinct_sizes(sizes: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = sizes.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Ordinary least squares of `D` on `log10(size)`; returns
/// `(intercept, slope, residual sd)`.
fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.1.log10()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(pts).map(|(x, p)| (x - mx) * (p.0 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let dof = (n - 2.0).max(1.0);
    let rss: f64 = xs
        .iter()
        .zip(pts)
        .map(|(x, p)| (p.0 - intercept - slope * x).powi(2))
        .sum();
    (intercept, slope, (rss / dof).sqrt())
}

/// `1 − Φ(−(β0 + β1·log10 flaw)/σS)·Φ(−μN/σN)`.
pub fn pod(params: &NimParams, flaw: f64) -> f64 {
    let signal_miss = norm_cdf(-(params.beta0 + params.beta1 * flaw.log10()) / params.sigma_s);
    let noise_miss = norm_cdf(-params.mu_n / params.sigma_n);
    (1.0 - signal_miss * noise_miss).clamp(0.0, 1.0)
}

/// `1 − Φ((log10 Z_th − γ0 − γ1·log10 flaw)/κS)·Φ((log10 Z_th − νN)/κN)`.
pub fn pod_peakamp(params: &PeakAmpParams, flaw: f64) -> f64 {
    let lz = params.z_th.log10();
    let signal_miss = norm_cdf((lz - params.gamma0 - params.gamma1 * flaw.log10()) / params.kappa_s);
    let noise_miss = norm_cdf((lz - params.nu_n) / params.kappa_n);
    (1.0 - signal_miss * noise_miss).clamp(0.0, 1.0)
}

/// POD attained for arbitrarily small flaws: `1 − Φ(−μN/σN)`.
pub fn noise_floor_pod(params: &NimParams) -> f64 {
    1.0 - norm_cdf(-params.mu_n / params.sigma_n)
}

pub const DEFAULT_A90_BRACKET: (f64, f64) = (1.0, 1e4);

/// Smallest flaw size whose POD reaches 0.9, by bisection in log size on
/// `bracket`, resolved to a relative size tolerance of 1e-9.
pub fn a90(pod_fn: impl Fn(f64) -> f64, bracket: (f64, f64)) -> Result<f64> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Parameter(format!("invalid a90 bracket ({lo}, {hi})")));
    }
    let (p_lo, p_hi) = (pod_fn(lo), pod_fn(hi));
    if !(p_lo < 0.9 && p_hi >= 0.9) {
        return Err(Error::NoA90 {
            lo,
            hi,
            lo_pod: p_lo,
            hi_pod: p_hi,
        });
    }
    while (hi - lo) > 1e-9 * hi {
        let mid = (lo * hi).sqrt();
        if pod_fn(mid) >= 0.9 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
