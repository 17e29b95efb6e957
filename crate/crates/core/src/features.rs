//! Interpretable per-series feature vector: the input to clustering.
//!
//! Eighteen scalar descriptors covering moments, autocorrelation,
//! decomposition strengths, spectral flatness, rolling-window change
//! detection and a Gaussian Kullback-Leibler change score. Degenerate inputs
//! (constant, too short for a window) produce defined fallbacks, never NaN,
//! because clustering must accept every series the corpus accepts.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::corpus::TimeSeries;
use crate::error::{Error, Result};
use crate::stats::{mean, median, variance};
use crate::stl;

/// The fixed-order feature descriptor of one series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub mean: f64,
    pub var: f64,
    pub acf1: f64,
    pub trend: f64,
    pub linearity: f64,
    pub curvature: f64,
    pub season: f64,
    pub peak: f64,
    pub trough: f64,
    pub entropy: f64,
    pub lumpiness: f64,
    pub spikiness: f64,
    pub lshift: f64,
    pub vchange: f64,
    pub fspots: f64,
    pub cpoints: f64,
    pub klscore: f64,
    pub change_idx: f64,
}

impl FeatureVector {
    pub const NAMES: [&'static str; 18] = [
        "mean",
        "var",
        "acf1",
        "trend",
        "linearity",
        "curvature",
        "season",
        "peak",
        "trough",
        "entropy",
        "lumpiness",
        "spikiness",
        "lshift",
        "vchange",
        "fspots",
        "cpoints",
        "klscore",
        "change_idx",
    ];

    pub fn to_array(self) -> [f64; 18] {
        [
            self.mean,
            self.var,
            self.acf1,
            self.trend,
            self.linearity,
            self.curvature,
            self.season,
            self.peak,
            self.trough,
            self.entropy,
            self.lumpiness,
            self.spikiness,
            self.lshift,
            self.vchange,
            self.fspots,
            self.cpoints,
            self.klscore,
            self.change_idx,
        ]
    }
}

/// Sample lag-1 autocorrelation, mean-centered with the length-n denominator.
/// Zero-variance input returns 0.
pub fn acf1(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    let denom: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    if denom <= 0.0 {
        return 0.0;
    }
    let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    num / denom
}

/// Decomposition-based strengths and shape coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StlStrengths {
    pub trend: f64,
    pub season: f64,
    pub linearity: f64,
    pub curvature: f64,
    pub spikiness: f64,
    pub peak: f64,
    pub trough: f64,
}

fn strength(var_rem: f64, var_with: f64) -> f64 {
    if var_with < 1e-10 {
        return 0.0;
    }
    (1.0 - var_rem / var_with).clamp(0.0, 1.0)
}

/// First- and second-order coefficients of `y` against orthonormal
/// polynomials in time.
fn orthogonal_poly_coeffs(y: &[f64]) -> (f64, f64) {
    let n = y.len();
    if n < 3 {
        return (0.0, 0.0);
    }
    let nf = n as f64;
    let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
    // Gram-Schmidt on [1, t, t^2]
    let tbar = mean(&t);
    let mut p1: Vec<f64> = t.iter().map(|v| v - tbar).collect();
    let norm1 = p1.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut p1 {
        *v /= norm1;
    }
    let t2: Vec<f64> = t.iter().map(|v| v * v).collect();
    let c0 = mean(&t2);
    let c1: f64 = t2.iter().zip(&p1).map(|(a, b)| a * b).sum();
    let mut p2: Vec<f64> = (0..n).map(|i| t2[i] - c0 - c1 * p1[i]).collect();
    let norm2 = p2.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm2 > 1e-12 * nf {
        for v in &mut p2 {
            *v /= norm2;
        }
    } else {
        p2.iter_mut().for_each(|v| *v = 0.0);
    }
    let lin: f64 = y.iter().zip(&p1).map(|(a, b)| a * b).sum();
    let cur: f64 = y.iter().zip(&p2).map(|(a, b)| a * b).sum();
    (lin, cur)
}

/// Variance of leave-one-out variances of `x`.
fn leave_one_out_variance_spread(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 3 {
        return 0.0;
    }
    let s1: f64 = x.iter().sum();
    let s2: f64 = x.iter().map(|v| v * v).sum();
    let m = (n - 1) as f64;
    let loo: Vec<f64> = x
        .iter()
        .map(|v| {
            let mu = (s1 - v) / m;
            ((s2 - v * v) / m - mu * mu).max(0.0)
        })
        .collect();
    variance(&loo)
}

/// Strength-of-trend/seasonality features built on the shared decomposition
/// code path. Series with fewer than two full periods fall back to a plain
/// trend fit with season, peak and trough reported as 0.
pub fn stl_strengths(series: &TimeSeries) -> Result<StlStrengths> {
    let x = &series.values;
    if x.len() < 2 {
        return Err(Error::data(&series.id, "need at least 2 observations"));
    }
    let seasonal_ok = series.frequency > 1 && x.len() >= 2 * series.frequency;
    let period = if seasonal_ok { series.frequency } else { 1 };
    let d = stl::decompose(x, period)?;

    let deseason = d.deseasonalized();
    let var_rem = variance(&d.remainder);
    let trend = strength(var_rem, variance(&deseason));
    let (linearity, curvature) = orthogonal_poly_coeffs(&d.trend);
    let spikiness = leave_one_out_variance_spread(&d.remainder);

    let (season, peak, trough) = if seasonal_ok {
        let with_season: Vec<f64> = d
            .seasonal
            .iter()
            .zip(&d.remainder)
            .map(|(s, r)| s + r)
            .collect();
        let season = strength(var_rem, variance(&with_season));
        let pattern = d.seasonal_pattern();
        let peak = pattern
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        let trough = pattern
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        (season, peak as f64, trough as f64)
    } else {
        (0.0, 0.0, 0.0)
    };

    Ok(StlStrengths {
        trend,
        season,
        linearity,
        curvature,
        spikiness,
        peak,
        trough,
    })
}

/// Shannon entropy of the normalized periodogram (all nonzero Fourier
/// frequencies), scaled to [0,1]. White noise approaches 1, a pure sinusoid
/// approaches 0; zero-variance or too-short input returns 1.
pub fn spectral_entropy(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return 1.0;
    }
    let m = mean(x);
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - m, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let power: Vec<f64> = (1..n).map(|j| buf[j].norm_sqr()).collect();
    let total: f64 = power.iter().sum();
    if total <= 0.0 {
        return 1.0;
    }
    let h: f64 = power
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let q = p / total;
            -q * q.ln()
        })
        .sum();
    (h / ((n - 1) as f64).ln()).clamp(0.0, 1.0)
}

/// Rolling-window change descriptors: variance of tile variances, the largest
/// level shift between adjacent windows, and the largest variance change
/// between adjacent windows. Too-short input returns zeros.
pub fn rolling_window_features(x: &[f64], width: usize) -> (f64, f64, f64) {
    let n = x.len();
    if width == 0 || n < 2 * width {
        return (0.0, 0.0, 0.0);
    }
    let tile_vars: Vec<f64> = x.chunks_exact(width).map(variance).collect();
    let lumpiness = variance(&tile_vars);

    let mut lshift = 0.0f64;
    let mut vchange = 0.0f64;
    for i in 0..=(n - 2 * width) {
        let a = &x[i..i + width];
        let b = &x[i + width..i + 2 * width];
        lshift = lshift.max((mean(b) - mean(a)).abs());
        vchange = vchange.max((variance(b) - variance(a)).abs());
    }
    (lumpiness, lshift, vchange)
}

/// Discretize into 10 equal-width bins over [min, max] and return the longest
/// run in a single bin. Zero-range input returns the series length.
pub fn flat_spots(x: &[f64]) -> usize {
    if x.is_empty() {
        return 0;
    }
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range <= 0.0 {
        return x.len();
    }
    let bin = |v: f64| (((v - lo) / range * 10.0).floor() as usize).min(9);
    let mut best = 1usize;
    let mut run = 1usize;
    for w in x.windows(2) {
        if bin(w[0]) == bin(w[1]) {
            run += 1;
            best = best.max(run);
        } else {
            run = 1;
        }
    }
    best
}

/// Number of times the series crosses its median.
pub fn crossing_points(x: &[f64]) -> usize {
    if x.len() < 2 {
        return 0;
    }
    let med = median(x);
    let above: Vec<bool> = x.iter().map(|&v| v >= med).collect();
    above.windows(2).filter(|w| w[0] != w[1]).count()
}

const KL_VARIANCE_FLOOR: f64 = 1e-8;

fn gaussian_kl(mu_a: f64, var_a: f64, mu_b: f64, var_b: f64) -> f64 {
    let va = var_a.max(KL_VARIANCE_FLOOR);
    let vb = var_b.max(KL_VARIANCE_FLOOR);
    0.5 * ((vb / va).ln() + (va + (mu_a - mu_b) * (mu_a - mu_b)) / vb - 1.0)
}

/// Slide two adjacent windows of `width`, model each as a Gaussian, and
/// return the maximum KL divergence plus the index (start of the second
/// window) where it occurs. Too-short input returns (0, 0).
pub fn kl_features(x: &[f64], width: usize) -> (f64, usize) {
    let n = x.len();
    if width == 0 || n < 2 * width {
        return (0.0, 0);
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = width;
    for i in 0..=(n - 2 * width) {
        let a = &x[i..i + width];
        let b = &x[i + width..i + 2 * width];
        let kl = gaussian_kl(mean(a), variance(a), mean(b), variance(b));
        if kl > best {
            best = kl;
            best_idx = i + width;
        }
    }
    (best.max(0.0), best_idx)
}

/// Compute the full 18-element descriptor.
pub fn feature_vector(series: &TimeSeries) -> Result<FeatureVector> {
    let x = &series.values;
    if x.len() < 2 {
        return Err(Error::data(&series.id, "need at least 2 observations"));
    }
    let width = series.frequency.max(5);
    let strengths = stl_strengths(series)?;
    let (lumpiness, lshift, vchange) = rolling_window_features(x, width);
    let (klscore, change_idx) = kl_features(x, width);
    Ok(FeatureVector {
        mean: mean(x),
        var: variance(x),
        acf1: acf1(x),
        trend: strengths.trend,
        linearity: strengths.linearity,
        curvature: strengths.curvature,
        season: strengths.season,
        peak: strengths.peak,
        trough: strengths.trough,
        entropy: spectral_entropy(x),
        lumpiness,
        spikiness: strengths.spikiness,
        lshift,
        vchange,
        fspots: flat_spots(x) as f64,
        cpoints: crossing_points(x) as f64,
        klscore,
        change_idx: change_idx as f64,
    })
}
