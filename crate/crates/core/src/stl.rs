//! Additive seasonal-trend decomposition with a deterministic (exactly
//! periodic) seasonal component.
//!
//! The seasonal smoother is the per-position sub-series mean, so every
//! seasonal period is identical; the trend is a degree-1 tricube loess over
//! the deseasonalized series. The two smoothers are alternated until the
//! components stop changing, which recovers noiseless trend+periodic signals
//! to numerical precision.

use crate::error::{Error, Result};

/// Additive split of a series into trend, an exactly periodic seasonal
/// component, and a remainder. `trend + seasonal + remainder` reconstructs
/// the input exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct StlDecomposition {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub remainder: Vec<f64>,
    pub period: usize,
}

impl StlDecomposition {
    /// The one-period seasonal pattern (phase 0 first). Empty input gives an
    /// all-zero pattern.
    pub fn seasonal_pattern(&self) -> Vec<f64> {
        (0..self.period)
            .map(|p| self.seasonal.get(p).copied().unwrap_or(0.0))
            .collect()
    }

    /// Seasonal value at an arbitrary (possibly out-of-sample) index.
    pub fn seasonal_at(&self, index: usize) -> f64 {
        if self.seasonal.is_empty() {
            return 0.0;
        }
        self.seasonal[index % self.period]
    }

    /// Trend plus remainder, the series with the seasonal component removed.
    pub fn deseasonalized(&self) -> Vec<f64> {
        self.trend
            .iter()
            .zip(&self.remainder)
            .map(|(t, r)| t + r)
            .collect()
    }
}

/// Trend loess span: next odd integer at or above 1.5 times the period.
pub fn trend_span(period: usize) -> usize {
    let raw = (1.5 * period as f64).ceil() as usize;
    if raw % 2 == 0 {
        raw + 1
    } else {
        raw
    }
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        return 0.0;
    }
    let t = 1.0 - u * u * u;
    t * t * t
}

/// Degree-1 loess over equally spaced positions 0..n.
///
/// `span` is the neighborhood size in points; when it exceeds the series
/// length the bandwidth is inflated by `span / n` as in Cleveland's
/// formulation, so very large spans approach a global linear fit.
pub fn loess_smooth(y: &[f64], span: usize) -> Vec<f64> {
    let n = y.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![y[0]];
    }
    let span = span.max(2);
    let q = span.min(n);
    let mut out = vec![0.0; n];
    for t in 0..n {
        // q nearest positions form a contiguous block around t
        let mut lo = t.saturating_sub((q - 1) / 2);
        if lo + q > n {
            lo = n - q;
        }
        let hi = lo + q - 1;
        let mut h = (t - lo).max(hi - t) as f64;
        if span > n {
            h *= span as f64 / n as f64;
        }
        if h <= 0.0 {
            h = 1.0;
        }
        let (mut sw, mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in lo..=hi {
            let dx = i as f64 - t as f64;
            let w = tricube(dx.abs() / h);
            if w <= 0.0 {
                continue;
            }
            sw += w;
            swx += w * dx;
            swy += w * y[i];
            swxx += w * dx * dx;
            swxy += w * dx * y[i];
        }
        let denom = sw * swxx - swx * swx;
        out[t] = if denom.abs() > 1e-12 * sw.max(1.0) {
            // local line evaluated at dx = 0
            let beta = (sw * swxy - swx * swy) / denom;
            let alpha = (swy - beta * swx) / sw;
            let _ = beta;
            alpha
        } else if sw > 0.0 {
            swy / sw
        } else {
            y[t]
        };
    }
    out
}

/// Decompose `x` with seasonal period `period`.
///
/// Requires at least two full periods when `period > 1`. With `period == 1`
/// the seasonal component is identically zero and the result is a plain
/// loess trend plus remainder.
pub fn decompose(x: &[f64], period: usize) -> Result<StlDecomposition> {
    if period == 0 {
        return Err(Error::data("stl", "period must be at least 1"));
    }
    let n = x.len();
    if period > 1 && n < 2 * period {
        return Err(Error::data(
            "stl",
            format!("need at least {} points for period {period}, got {n}", 2 * period),
        ));
    }
    if n == 0 {
        return Err(Error::data("stl", "empty series"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("stl", "non-finite value"));
    }

    let span = trend_span(period);
    let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let tol = 1e-11 * scale;

    let mut trend = vec![0.0; n];
    let mut seasonal = vec![0.0; n];
    // Alternate the two smoothers until the components settle. The exact
    // decomposition of a noiseless signal is a fixed point of this loop.
    for _ in 0..200 {
        let mut pattern = vec![0.0; period];
        if period > 1 {
            let mut counts = vec![0usize; period];
            for t in 0..n {
                pattern[t % period] += x[t] - trend[t];
                counts[t % period] += 1;
            }
            for p in 0..period {
                pattern[p] /= counts[p].max(1) as f64;
            }
            let center = pattern.iter().sum::<f64>() / period as f64;
            for v in &mut pattern {
                *v -= center;
            }
        }
        let new_seasonal: Vec<f64> = (0..n).map(|t| pattern[t % period]).collect();
        let deseason: Vec<f64> = (0..n).map(|t| x[t] - new_seasonal[t]).collect();
        let new_trend = loess_smooth(&deseason, span);

        let delta = new_seasonal
            .iter()
            .zip(&seasonal)
            .chain(new_trend.iter().zip(&trend))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        seasonal = new_seasonal;
        trend = new_trend;
        if delta < tol {
            break;
        }
    }

    let remainder: Vec<f64> = (0..n).map(|t| x[t] - trend[t] - seasonal[t]).collect();
    Ok(StlDecomposition {
        trend,
        seasonal,
        remainder,
        period,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(xs: impl IntoIterator<Item = f64>) -> f64 {
        xs.into_iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    #[test]
    fn trend_span_values() {
        assert_eq!(trend_span(12), 19);
        assert_eq!(trend_span(7), 11);
        assert_eq!(trend_span(1), 3);
    }

    #[test]
    fn loess_reproduces_lines_exactly() {
        let y: Vec<f64> = (0..50).map(|t| 3.0 + 0.25 * t as f64).collect();
        let s = loess_smooth(&y, 19);
        let err = max_abs(s.iter().zip(&y).map(|(a, b)| a - b));
        assert!(err < 1e-9, "line not reproduced, err={err}");
    }

    #[test]
    fn recovers_noiseless_trend_plus_seasonal() {
        let pattern: Vec<f64> = (0..12)
            .map(|p| (2.0 * std::f64::consts::PI * p as f64 / 12.0).sin())
            .collect();
        let center: f64 = pattern.iter().sum::<f64>() / 12.0;
        let n = 120;
        let x: Vec<f64> = (0..n)
            .map(|t| t as f64 / 10.0 + pattern[t % 12] - center)
            .collect();
        let d = decompose(&x, 12).unwrap();

        let seasonal_err = max_abs(
            (0..n).map(|t| d.seasonal[t] - (pattern[t % 12] - center)),
        );
        let trend_err = max_abs((0..n).map(|t| d.trend[t] - t as f64 / 10.0));
        let remainder_err = max_abs(d.remainder.iter().copied());
        assert!(seasonal_err < 1e-6, "seasonal err {seasonal_err}");
        assert!(trend_err < 1e-6, "trend err {trend_err}");
        assert!(remainder_err < 1e-6, "remainder err {remainder_err}");
    }

    #[test]
    fn constant_series_decomposes_trivially() {
        let x = vec![4.5; 36];
        let d = decompose(&x, 12).unwrap();
        assert!(max_abs(d.seasonal.iter().copied()) < 1e-12);
        assert!(max_abs(d.trend.iter().map(|t| t - 4.5)) < 1e-12);
        assert!(max_abs(d.remainder.iter().copied()) < 1e-12);
    }

    #[test]
    fn seasonal_is_exactly_periodic_and_centered() {
        let mut x = Vec::new();
        let mut state = 0.7f64;
        for t in 0..96 {
            state = (state * 1103.515).fract();
            x.push((t as f64).sqrt() + 2.0 * (t % 8) as f64 + state);
        }
        let d = decompose(&x, 8).unwrap();
        for t in 0..x.len() - 8 {
            assert_eq!(d.seasonal[t], d.seasonal[t + 8]);
        }
        let period_sum: f64 = d.seasonal[..8].iter().sum();
        assert!(period_sum.abs() < 1e-9);
    }

    #[test]
    fn additive_identity_is_exact() {
        let mut state = 0.3f64;
        let x: Vec<f64> = (0..100)
            .map(|t| {
                state = (state * 997.13).fract();
                10.0 + (t % 12) as f64 + state * 3.0
            })
            .collect();
        let d = decompose(&x, 12).unwrap();
        for t in 0..x.len() {
            let recon = d.trend[t] + d.seasonal[t] + d.remainder[t];
            assert!((recon - x[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn too_short_for_period_errors() {
        assert!(decompose(&[1.0; 23], 12).is_err());
    }

    #[test]
    fn period_one_gives_zero_seasonal() {
        let x: Vec<f64> = (0..40).map(|t| (t as f64 * 0.3).exp()).collect();
        let d = decompose(&x, 1).unwrap();
        assert!(max_abs(d.seasonal.iter().copied()) == 0.0);
    }
}
