//! Per-series preprocessing: log stabilization, deterministic
//! deseasonalization, moving-window patch generation with local trend
//! normalization, and the exact inverse of the whole chain.
//!
//! Every patch records the trend value at its last input position (the
//! level); adding the level back, re-introducing the periodic seasonal
//! component and exponentiating reproduces original-scale values.

use crate::corpus::TimeSeries;
use crate::error::{Error, Result};
use crate::stl::{self, StlDecomposition};

/// Window sizes and transform flags for one series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessPlan {
    pub input_size: usize,
    pub output_size: usize,
    pub epsilon: f64,
    /// Whether the log(y + 1) branch was taken.
    pub used_log_shift: bool,
    /// Whether a seasonal component was extracted (two full periods needed).
    pub deseasonalized: bool,
}

/// One normalized input/output window pair plus what is needed to invert it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPatch {
    pub series_id: String,
    pub window_index: usize,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    /// Trend value at the last input position, subtracted from every element.
    pub level: f64,
}

/// A fully preprocessed series with its transform context retained.
#[derive(Debug, Clone)]
pub struct PreparedSeries {
    pub id: String,
    pub frequency: usize,
    pub horizon: usize,
    pub raw_values: Vec<f64>,
    pub log_values: Vec<f64>,
    pub plan: PreprocessPlan,
    pub decomposition: StlDecomposition,
    pub deseasonalized: Vec<f64>,
    pub training: Vec<TrainingPatch>,
    pub validation: Option<TrainingPatch>,
}

/// Variance-stabilizing log transform. Uses plain `log` when the minimum is
/// above `epsilon`, otherwise shifts by one first. Values at or below -1 are
/// out of domain.
pub fn stabilize(values: &[f64], epsilon: f64) -> Result<(Vec<f64>, bool)> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > epsilon {
        if min <= 0.0 {
            return Err(Error::data(
                "stabilize",
                format!("minimum {min} not positive; pick an epsilon at or above it"),
            ));
        }
        Ok((values.iter().map(|v| v.ln()).collect(), false))
    } else {
        if min <= -1.0 {
            return Err(Error::data(
                "stabilize",
                format!("value {min} at or below -1; log undefined even after shift"),
            ));
        }
        Ok((values.iter().map(|v| (v + 1.0).ln()).collect(), true))
    }
}

/// Invert [`stabilize`].
pub fn unstabilize(values: &[f64], used_log_shift: bool) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let e = v.exp();
            if used_log_shift {
                e - 1.0
            } else {
                e
            }
        })
        .collect()
}

/// Window-size heuristic: input window 1.25 times the larger of the output
/// window and the seasonal period, rounded up. Falls back to the largest
/// input window the series supports when that leaves no training patch.
pub fn window_sizes(output_size: usize, period: usize, ts_length: usize) -> Result<PreprocessPlan> {
    if output_size == 0 {
        return Err(Error::data("plan", "output size must be at least 1"));
    }
    let heuristic = (1.25 * output_size.max(period) as f64).ceil() as usize;
    let input_size = if ts_length >= heuristic + output_size + 1 {
        heuristic
    } else if ts_length >= output_size + 2 {
        // short-series fallback: shrink the input window
        ts_length - output_size - 1
    } else {
        return Err(Error::data(
            "plan",
            format!("length {ts_length} cannot fit any window with output size {output_size}"),
        ));
    };
    Ok(PreprocessPlan {
        input_size,
        output_size,
        epsilon: 0.0,
        used_log_shift: false,
        deseasonalized: false,
    })
}

/// Stride-1 moving windows over a deseasonalized sequence, normalized by the
/// trend value at each window's last input position. When
/// `reserve_validation` is set the final window is withheld and returned
/// separately.
pub fn make_patches(
    deseasonalized: &[f64],
    decomposition: Option<&StlDecomposition>,
    plan: &PreprocessPlan,
    reserve_validation: bool,
    series_id: &str,
) -> Result<(Vec<TrainingPatch>, Option<TrainingPatch>)> {
    let n = deseasonalized.len();
    let (input_size, output_size) = (plan.input_size, plan.output_size);
    if n < input_size + output_size + 1 {
        return Err(Error::data(
            series_id,
            format!(
                "length {n} too short for input {input_size} + output {output_size} windows"
            ),
        ));
    }
    if let Some(d) = decomposition {
        if d.trend.len() != n {
            return Err(Error::Dimension(format!(
                "decomposition length {} does not match series length {n}",
                d.trend.len()
            )));
        }
    }
    let last_start = n - input_size - output_size;
    let mut patches = Vec::with_capacity(last_start + 1);
    for start in 0..=last_start {
        let anchor = start + input_size - 1;
        let level = match decomposition {
            Some(d) => d.trend[anchor],
            None => deseasonalized[anchor],
        };
        let input: Vec<f64> = deseasonalized[start..start + input_size]
            .iter()
            .map(|v| v - level)
            .collect();
        let target: Vec<f64> = deseasonalized
            [start + input_size..start + input_size + output_size]
            .iter()
            .map(|v| v - level)
            .collect();
        patches.push(TrainingPatch {
            series_id: series_id.to_string(),
            window_index: start,
            input,
            target,
            level,
        });
    }
    if reserve_validation {
        let validation = patches.pop();
        if patches.is_empty() {
            return Err(Error::data(
                series_id,
                "no training patches remain after reserving the validation window",
            ));
        }
        Ok((patches, validation))
    } else {
        Ok((patches, None))
    }
}

/// Run the whole preprocessing chain for one series under fixed window sizes.
/// Series shorter than two full periods skip the seasonal extraction; their
/// trend comes from the same loess fit without seasonal removal.
pub fn prepare_series(
    series: &TimeSeries,
    input_size: usize,
    output_size: usize,
    epsilon: f64,
    reserve_validation: bool,
) -> Result<PreparedSeries> {
    let (log_values, used_log_shift) = stabilize(&series.values, epsilon)?;
    let seasonal_ok = series.frequency > 1 && log_values.len() >= 2 * series.frequency;
    let period = if seasonal_ok { series.frequency } else { 1 };
    let decomposition = stl::decompose(&log_values, period)?;
    let deseasonalized = decomposition.deseasonalized();
    let plan = PreprocessPlan {
        input_size,
        output_size,
        epsilon,
        used_log_shift,
        deseasonalized: seasonal_ok,
    };
    let (training, validation) = make_patches(
        &deseasonalized,
        Some(&decomposition),
        &plan,
        reserve_validation,
        &series.id,
    )?;
    Ok(PreparedSeries {
        id: series.id.clone(),
        frequency: series.frequency,
        horizon: series.horizon,
        raw_values: series.values.clone(),
        log_values,
        plan,
        decomposition,
        deseasonalized,
        training,
        validation,
    })
}

/// Preprocessing without patch generation, for inference over a prefix that
/// may be too short to train on. Only requires `input_size` observations.
pub fn prepare_for_forecast(
    series: &TimeSeries,
    input_size: usize,
    output_size: usize,
    epsilon: f64,
) -> Result<PreparedSeries> {
    if series.len() < input_size {
        return Err(Error::data(
            &series.id,
            format!("length {} below input window {input_size}", series.len()),
        ));
    }
    let (log_values, used_log_shift) = stabilize(&series.values, epsilon)?;
    let seasonal_ok = series.frequency > 1 && log_values.len() >= 2 * series.frequency;
    let period = if seasonal_ok { series.frequency } else { 1 };
    let decomposition = stl::decompose(&log_values, period)?;
    let deseasonalized = decomposition.deseasonalized();
    Ok(PreparedSeries {
        id: series.id.clone(),
        frequency: series.frequency,
        horizon: series.horizon,
        raw_values: series.values.clone(),
        log_values,
        plan: PreprocessPlan {
            input_size,
            output_size,
            epsilon,
            used_log_shift,
            deseasonalized: seasonal_ok,
        },
        decomposition,
        deseasonalized,
        training: Vec::new(),
        validation: None,
    })
}

impl PreparedSeries {
    /// All stride-1 normalized input windows through the end of the series,
    /// in window order; the final window's prediction targets the future.
    pub fn warmup_inputs(&self) -> Vec<(usize, Vec<f64>)> {
        let n = self.deseasonalized.len();
        let m = self.plan.input_size;
        (0..=n - m)
            .map(|start| {
                let anchor = start + m - 1;
                let level = self.decomposition.trend[anchor];
                let input = self.deseasonalized[start..start + m]
                    .iter()
                    .map(|v| v - level)
                    .collect();
                (start, input)
            })
            .collect()
    }

    /// Level for a forecast emitted from the final input window.
    pub fn final_level(&self) -> f64 {
        *self.decomposition.trend.last().expect("non-empty trend")
    }

    /// Invert the preprocessing for a normalized window whose first value
    /// sits at absolute position `start_index` (indices past the series end
    /// continue the periodic seasonal pattern).
    pub fn invert_window(&self, normalized: &[f64], level: f64, start_index: usize) -> Vec<f64> {
        let with_season: Vec<f64> = normalized
            .iter()
            .enumerate()
            .map(|(j, v)| v + level + self.seasonal_at(start_index + j))
            .collect();
        unstabilize(&with_season, self.plan.used_log_shift)
    }

    fn seasonal_at(&self, index: usize) -> f64 {
        if self.plan.deseasonalized {
            self.decomposition.seasonal_at(index)
        } else {
            0.0
        }
    }
}
