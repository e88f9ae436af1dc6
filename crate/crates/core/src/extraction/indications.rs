use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::search::optimize_region;
use super::{extract_features, Indication, VolumeConfig};
use crate::error::Result;
use crate::geometry::make_outer;
use crate::imagery::ImageGrid;

/// Interior pixels that are not smaller than any of their 8 neighbors.
///
/// A plateau of equal-valued qualifying pixels (8-connected) contributes only
/// its lexicographically smallest `(u, v)` pixel. Output is in raster order.
pub fn local_maxima(img: &ImageGrid) -> Vec<(usize, usize)> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Vec::new();
    }
    let mut is_candidate = vec![false; w * h];
    for v in 1..h - 1 {
        for u in 1..w - 1 {
            let c = img.get(u, v);
            let dominated = neighbors(u, v).any(|(nu, nv)| img.get(nu, nv) > c);
            is_candidate[v * w + u] = !dominated;
        }
    }

    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for v in 1..h - 1 {
        for u in 1..w - 1 {
            let idx = v * w + u;
            if !is_candidate[idx] || seen[idx] {
                continue;
            }
            let value = img.get(u, v);
            let mut best = (u, v);
            let mut stack = vec![(u, v)];
            seen[idx] = true;
            while let Some((pu, pv)) = stack.pop() {
                best = best.min((pu, pv));
                for (nu, nv) in neighbors(pu, pv) {
                    let j = nv * w + nu;
                    if is_candidate[j] && !seen[j] && img.get(nu, nv) == value {
                        seen[j] = true;
                        stack.push((nu, nv));
                    }
                }
            }
            out.push(best);
        }
    }
    out.sort_by_key(|&(u, v)| (v, u));
    out
}

fn neighbors(u: usize, v: usize) -> impl Iterator<Item = (usize, usize)> {
    (-1i64..=1)
        .flat_map(|dv| (-1i64..=1).map(move |du| (du, dv)))
        .filter(|&(du, dv)| du != 0 || dv != 0)
        .map(move |(du, dv)| ((u as i64 + du) as usize, (v as i64 + dv) as usize))
}

/// Finds every local-maximum candidate, keeps those whose amplitude relative
/// to the hottest candidate is at least `rho`, and fits a region pair with
/// features to each survivor (shape taken from `cfg.shape`).
///
/// Candidates whose fit fails (degenerate region, undefined SNR) are
/// skipped. Results are sorted by scaled amplitude, descending, with ids
/// assigned in that order.
pub fn detect_indications(img: &ImageGrid, cfg: &VolumeConfig, rho: f64) -> Vec<Indication> {
    let centers = local_maxima(img);
    if centers.is_empty() {
        return Vec::new();
    }
    let amps: Vec<f64> = centers.iter().map(|&(u, v)| img.get(u, v)).collect();
    let max_amp = amps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // amplitudes are ratios to the hottest candidate; for a non-positive
    // hottest candidate they are measured from the image minimum instead
    let floor = if max_amp > 0.0 { 0.0 } else { img.min() };
    let span = max_amp - floor;
    let scaled: Vec<f64> = amps
        .iter()
        .map(|&a| if span > 0.0 { (a - floor) / span } else { 1.0 })
        .collect();

    let mut survivors: Vec<(usize, f64)> = scaled
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= rho)
        .map(|(i, &s)| (i, s))
        .collect();
    // descending amplitude; raster order among ties
    survivors.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let fitted: Vec<Option<Indication>> = survivors
        .par_iter()
        .map(|&(i, s)| {
            let (u, v) = centers[i];
            fit_indication(img, (u as f64, v as f64), cfg).ok().map(|mut ind| {
                ind.scaled_amplitude = s;
                ind
            })
        })
        .collect();
    fitted
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(id, mut ind)| {
            ind.id = id;
            ind
        })
        .collect()
}

fn fit_indication(img: &ImageGrid, center: (f64, f64), cfg: &VolumeConfig) -> Result<Indication> {
    let (region, vol) = optimize_region(img, center, cfg.shape, cfg)?;
    let pair = make_outer(&region);
    let mut ind = extract_features(img, &pair)?;
    ind.volume = Some(vol);
    Ok(ind)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    /// Maximum center distance (pixels) for two indications to be paired.
    pub closeness: f64,
    /// Both indications must have SNR below this to be considered.
    pub snr_threshold: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            closeness: 10.0,
            snr_threshold: 2.5,
        }
    }
}

/// Paired-hotspot extension: for close pairs of weak indications, refits a
/// single region anchored at the midpoint of their centers (with the size
/// bound enlarged to span both) and replaces the pair when the merged SNR
/// beats both originals.
///
/// Pairs are visited by increasing center distance; each indication takes
/// part in at most one merge.
pub fn merge_pairs(
    img: &ImageGrid,
    indications: &[Indication],
    merge: &MergeConfig,
    cfg: &VolumeConfig,
) -> Vec<Indication> {
    let n = indications.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&indications[i], &indications[j]);
            let d = distance(a.center(), b.center());
            if d <= merge.closeness && a.snr < merge.snr_threshold && b.snr < merge.snr_threshold {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0).then((p.1, p.2).cmp(&(q.1, q.2))));

    let mut used = vec![false; n];
    let mut merged = Vec::new();
    let mut next_id = indications.iter().map(|i| i.id + 1).max().unwrap_or(0);
    let limit = img.width().max(img.height()) as f64;
    for (d, i, j) in pairs {
        if used[i] || used[j] {
            continue;
        }
        let (a, b) = (&indications[i], &indications[j]);
        let (ca, cb) = (a.center(), b.center());
        let mid = ((ca.0 + cb.0) / 2.0, (ca.1 + cb.1) / 2.0);
        let Ok((lo, hi)) = cfg.bounds(img.width(), img.height()) else {
            continue;
        };
        let span = d / 2.0 + a.pair.inner.a.max(b.pair.inner.a);
        let wide = VolumeConfig {
            a_min: lo,
            a_max: Some(hi.max(span).min(limit)),
            ..cfg.clone()
        };
        let Ok(mut candidate) = fit_indication(img, mid, &wide) else {
            continue;
        };
        if candidate.snr > a.snr && candidate.snr > b.snr {
            used[i] = true;
            used[j] = true;
            candidate.id = next_id;
            next_id += 1;
            candidate.scaled_amplitude = a.scaled_amplitude.max(b.scaled_amplitude);
            candidate.merged_from = Some((a.id, b.id));
            merged.push(candidate);
        }
    }

    let mut out: Vec<Indication> = indications
        .iter()
        .zip(&used)
        .filter(|(_, &u)| !u)
        .map(|(ind, _)| ind.clone())
        .chain(merged)
        .collect();
    out.sort_by(|a, b| b.scaled_amplitude.total_cmp(&a.scaled_amplitude).then(a.id.cmp(&b.id)));
    out
}

fn distance(p: (f64, f64), q: (f64, f64)) -> f64 {
    ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(u: usize, v: usize, cu: f64, cv: f64, amp: f64, sigma: f64) -> f64 {
        let r2 = (u as f64 - cu).powi(2) + (v as f64 - cv).powi(2);
        amp * (-r2 / (2.0 * sigma * sigma)).exp()
    }

    #[test]
    fn plateau_keeps_smallest_pixel() {
        let img = ImageGrid::from_rows(&[
            vec![0.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 5.0, 5.0, 0.0, 0.0],
            vec![0.0, 5.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 3.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0, 0.0],
        ])
        .unwrap();
        assert_eq!(local_maxima(&img), vec![(1, 1), (3, 3)]);
    }

    #[test]
    fn flat_image_has_one_candidate_and_no_indication() {
        let img = ImageGrid::zeros(10, 10).unwrap();
        assert_eq!(local_maxima(&img), vec![(1, 1)]);
        assert!(detect_indications(&img, &VolumeConfig::default(), 0.9).is_empty());
        assert!(local_maxima(&ImageGrid::zeros(2, 5).unwrap()).is_empty());
    }

    #[test]
    fn single_bump_single_indication() {
        let img = ImageGrid::from_fn(30, 30, |u, v| bump(u, v, 14.0, 16.0, 5.0, 2.0)).unwrap();
        let found = detect_indications(&img, &VolumeConfig::default(), 0.9);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].center(), (14.0, 16.0));
        assert_eq!(found[0].scaled_amplitude, 1.0);
    }

    #[test]
    fn rho_gates_second_bump() {
        let img = ImageGrid::from_fn(40, 30, |u, v| {
            bump(u, v, 10.0, 15.0, 10.0, 1.5) + bump(u, v, 29.0, 15.0, 9.5, 1.5)
        })
        .unwrap();
        let cfg = VolumeConfig::default();
        let two = detect_indications(&img, &cfg, 0.9);
        assert_eq!(two.len(), 2);
        assert_eq!(two[0].center(), (10.0, 15.0));
        assert!((two[1].scaled_amplitude - 0.95).abs() < 1e-9);
        assert_eq!(detect_indications(&img, &cfg, 0.96).len(), 1);
    }

    #[test]
    fn far_pairs_and_singletons_unchanged() {
        let img = ImageGrid::from_fn(40, 30, |u, v| {
            bump(u, v, 8.0, 15.0, 10.0, 1.5) + bump(u, v, 31.0, 15.0, 9.8, 1.5)
        })
        .unwrap();
        let cfg = VolumeConfig::default();
        let found = detect_indications(&img, &cfg, 0.9);
        let merge = MergeConfig {
            snr_threshold: f64::INFINITY,
            ..MergeConfig::default()
        };
        assert_eq!(merge_pairs(&img, &found, &merge, &cfg), found);
        assert_eq!(merge_pairs(&img, &found[..1], &merge, &cfg), found[..1].to_vec());
        assert!(merge_pairs(&img, &[], &merge, &cfg).is_empty());
    }
}
