//! Error measures and the seasonal naïve benchmark.

use crate::error::{Error, Result};

/// Symmetric mean absolute percentage error in [0, 200]. A term whose
/// forecast and actual are both zero contributes nothing (defined limit).
pub fn smape(forecast: &[f64], actual: &[f64]) -> Result<f64> {
    if forecast.len() != actual.len() || forecast.is_empty() {
        return Err(Error::Dimension(format!(
            "smape needs equal nonzero lengths, got {} and {}",
            forecast.len(),
            actual.len()
        )));
    }
    let sum: f64 = forecast
        .iter()
        .zip(actual)
        .map(|(f, y)| {
            let denom = f.abs() + y.abs();
            if denom == 0.0 {
                0.0
            } else {
                (f - y).abs() / denom
            }
        })
        .sum();
    Ok(200.0 / forecast.len() as f64 * sum)
}

/// Mean absolute scaled error: mean absolute test error over the mean
/// absolute in-sample naïve error at lag `season` (1 for non-seasonal).
/// A zero denominator (constant seasonal training series) yields `None`,
/// to be excluded from aggregates.
pub fn mase(
    forecast: &[f64],
    actual: &[f64],
    train: &[f64],
    season: usize,
) -> Result<Option<f64>> {
    if forecast.len() != actual.len() || forecast.is_empty() {
        return Err(Error::Dimension(format!(
            "mase needs equal nonzero lengths, got {} and {}",
            forecast.len(),
            actual.len()
        )));
    }
    let m = season.max(1);
    if train.len() <= m {
        return Err(Error::data(
            "mase",
            format!("training length {} not above season {m}", train.len()),
        ));
    }
    let naive_sum: f64 = (m..train.len())
        .map(|t| (train[t] - train[t - m]).abs())
        .sum();
    let denom = naive_sum / (train.len() - m) as f64;
    if denom == 0.0 {
        return Ok(None);
    }
    let err: f64 = forecast
        .iter()
        .zip(actual)
        .map(|(f, y)| (f - y).abs())
        .sum::<f64>()
        / forecast.len() as f64;
    Ok(Some(err / denom))
}

/// Seasonal period used for MASE scaling: the series frequency when the
/// training part spans more than two full periods, otherwise 1.
pub fn mase_season(frequency: usize, train_len: usize) -> usize {
    if frequency > 1 && train_len > 2 * frequency {
        frequency
    } else {
        1
    }
}

/// Repeat the final observed period cyclically.
pub fn naive_seasonal(train: &[f64], season: usize, horizon: usize) -> Result<Vec<f64>> {
    let m = season.max(1);
    if train.len() < m {
        return Err(Error::data(
            "naive-seasonal",
            format!("training length {} below season {m}", train.len()),
        ));
    }
    let base = &train[train.len() - m..];
    Ok((0..horizon).map(|t| base[t % m]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smape_zero_for_perfect_forecast() {
        assert_eq!(smape(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
    }

    #[test]
    fn smape_direct_formula() {
        // 200 * (10 / 210) = 9.5238...
        let v = smape(&[110.0], &[100.0]).unwrap();
        assert!((v - 200.0 * 10.0 / 210.0).abs() < 1e-12);
    }

    #[test]
    fn smape_zero_term_convention() {
        assert_eq!(smape(&[0.0], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn smape_is_symmetric() {
        let mut rng = crate::rng::substream(3, "smape-symmetry");
        use rand::Rng;
        for _ in 0..50 {
            let a: Vec<f64> = (0..6).map(|_| rng.random_range(-10.0..10.0)).collect();
            let b: Vec<f64> = (0..6).map(|_| rng.random_range(-10.0..10.0)).collect();
            let x = smape(&a, &b).unwrap();
            let y = smape(&b, &a).unwrap();
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mase_hand_arithmetic() {
        // one-step naive errors on [1,2,3,4] are all 1, forecast misses by 1
        let v = mase(&[4.0], &[5.0], &[1.0, 2.0, 3.0, 4.0], 1).unwrap().unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mase_zero_for_perfect_forecast() {
        let v = mase(&[5.0, 6.0], &[5.0, 6.0], &[1.0, 3.0, 2.0, 4.0], 1)
            .unwrap()
            .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn mase_one_when_forecast_is_seasonal_naive_under_constant_drift() {
        // periodic pattern drifting up 5 per period: every in-sample naive
        // error is 5, and the naive forecast also misses the next period by 5
        let train: Vec<f64> = (0..24)
            .map(|t| [10.0, 20.0, 30.0, 40.0][t % 4] + 5.0 * (t / 4) as f64)
            .collect();
        let forecast = naive_seasonal(&train, 4, 4).unwrap();
        let actual: Vec<f64> = (24..28)
            .map(|t| [10.0, 20.0, 30.0, 40.0][t % 4] + 5.0 * (t / 4) as f64)
            .collect();
        let v = mase(&forecast, &actual, &train, 4).unwrap().unwrap();
        assert!((v - 1.0).abs() < 1e-12, "mase {v}");
    }

    #[test]
    fn mase_undefined_on_constant_seasonal_train() {
        let train: Vec<f64> = (0..12).map(|t| [1.0, 2.0, 3.0][t % 3]).collect();
        assert_eq!(mase(&[1.0], &[2.0], &train, 3).unwrap(), None);
    }

    #[test]
    fn mase_is_scale_invariant() {
        let train = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let f = [5.0, 3.0];
        let y = [4.0, 4.0];
        let base = mase(&f, &y, &train, 1).unwrap().unwrap();
        let scale = 37.5;
        let train2: Vec<f64> = train.iter().map(|v| v * scale).collect();
        let f2: Vec<f64> = f.iter().map(|v| v * scale).collect();
        let y2: Vec<f64> = y.iter().map(|v| v * scale).collect();
        let scaled = mase(&f2, &y2, &train2, 1).unwrap().unwrap();
        assert!((base - scaled).abs() < 1e-12);
    }

    #[test]
    fn naive_seasonal_repeats_last_period() {
        let train = [1.0, 2.0, 10.0, 20.0, 30.0];
        assert_eq!(
            naive_seasonal(&train, 3, 6).unwrap(),
            vec![10.0, 20.0, 30.0, 10.0, 20.0, 30.0]
        );
    }

    #[test]
    fn naive_seasonal_constant_for_period_one() {
        assert_eq!(naive_seasonal(&[1.0, 7.0], 1, 3).unwrap(), vec![7.0, 7.0, 7.0]);
    }

    #[test]
    fn naive_seasonal_exact_on_periodic_series() {
        let series: Vec<f64> = (0..40).map(|t| [5.0, 8.0, 2.0, 9.0][t % 4]).collect();
        let f = naive_seasonal(&series[..36], 4, 4).unwrap();
        assert_eq!(smape(&f, &series[36..]).unwrap(), 0.0);
    }

    #[test]
    fn mase_season_rule() {
        assert_eq!(mase_season(12, 96), 12);
        assert_eq!(mase_season(12, 24), 1);
        assert_eq!(mase_season(1, 500), 1);
    }
}
