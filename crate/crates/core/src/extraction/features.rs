use super::Indication;
use crate::error::{Error, Result};
use crate::geometry::RegionPair;
use crate::imagery::ImageGrid;

/// Extracts `(Ŷ, ě, ē)` and the SNR `(Ŷ − ē)/(ě − ē)` for a region pair.
///
/// All three features are corrected by `μ̂`, the mean intensity outside the
/// inner region. `Ŷ` is the inner maximum; `ě` and `ē` are the maximum and
/// mean over the annulus (outer minus inner).
pub fn extract_features(img: &ImageGrid, pair: &RegionPair) -> Result<Indication> {
    let (w, h) = (img.width(), img.height());
    let mut inner_n = 0usize;
    let mut inner_sum = 0.0;
    let mut inner_max = f64::NEG_INFINITY;
    pair.inner.for_each_pixel(w, h, |u, v| {
        let y = img.get(u, v);
        inner_n += 1;
        inner_sum += y;
        inner_max = inner_max.max(y);
    });
    if inner_n == 0 || inner_n == img.len() {
        return Err(Error::DegenerateRegion(
            "inner region covers no pixel or the whole image".into(),
        ));
    }
    let total: f64 = img.data().iter().sum();
    let bias = (total - inner_sum) / (img.len() - inner_n) as f64;

    let mut ann_n = 0usize;
    let mut ann_sum = 0.0;
    let mut ann_max = f64::NEG_INFINITY;
    pair.for_each_annulus_pixel(w, h, |u, v| {
        let y = img.get(u, v) - bias;
        ann_n += 1;
        ann_sum += y;
        ann_max = ann_max.max(y);
    });
    if ann_n == 0 {
        return Err(Error::DegenerateRegion("annulus covers no pixel".into()));
    }
    let peak = inner_max - bias;
    let noise_mean = ann_sum / ann_n as f64;
    let noise_peak = ann_max;
    let spread = noise_peak - noise_mean;
    if !(spread > 0.0) {
        return Err(Error::UndefinedSnr(noise_peak));
    }
    let snr = (peak - noise_mean) / spread;

    let unclipped = pair.inner.unclipped_count().max(inner_n);
    let (cu, cv) = pair.inner.center();
    let amplitude = sample_nearest(img, cu, cv);
    Ok(Indication {
        id: 0,
        pair: *pair,
        peak,
        noise_peak,
        noise_mean,
        bias,
        snr,
        amplitude,
        scaled_amplitude: 1.0,
        volume: None,
        inner_pixels: inner_n,
        annulus_pixels: ann_n,
        clipped_fraction: 1.0 - inner_n as f64 / unclipped as f64,
        merged_from: None,
    })
}

fn sample_nearest(img: &ImageGrid, u: f64, v: f64) -> f64 {
    let u = u.round().clamp(0.0, (img.width() - 1) as f64) as usize;
    let v = v.round().clamp(0.0, (img.height() - 1) as f64) as usize;
    img.get(u, v)
}
