//! Minimum-message-length Gaussian mixture clustering.
//!
//! Series are grouped by fitting diagonal-covariance Gaussian mixtures to
//! their feature vectors with EM, scoring each candidate model by a two-part
//! message length (model statement cost plus data cost given the model), and
//! sweeping the cluster count. The shortest total message wins, so the number
//! of clusters is chosen autonomously and the procedure is indifferent to
//! affine rescaling of individual features (columns are standardized
//! internally).
//!
//! The statement cost follows the Wallace-Freeman approximation with uniform
//! priors over the standardized column ranges, a log-uniform prior on each
//! standard deviation, and a per-parameter quantization constant of 1/12.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::substream_indexed;

const EM_MAX_ITERATIONS: usize = 500;
const EM_RELATIVE_TOLERANCE: f64 = 1e-6;
const VARIANCE_FLOOR_FRACTION: f64 = 1e-6;
/// Per-parameter quantization term: (1 + ln(1/12)) / 2.
const QUANTIZATION_PER_PARAM: f64 = -0.742_453_325_110_937_4;

/// A fitted diagonal-Gaussian mixture with its total message length in nats.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    pub weights: Vec<f64>,
    /// k x d component means.
    pub means: Array2<f64>,
    /// k x d component variances (diagonal covariance).
    pub variances: Array2<f64>,
    pub message_length: f64,
}

impl MixtureModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> usize {
        self.means.ncols()
    }
}

/// Cluster index per data row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
}

/// Knobs for the cluster-count sweep.
#[derive(Debug, Clone, Copy)]
pub struct ClusterOptions {
    pub max_k: Option<usize>,
    pub restarts: usize,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            max_k: None,
            restarts: 10,
        }
    }
}

/// Default sweep ceiling: one cluster per five rows, at most ten.
pub fn default_max_k(rows: usize) -> usize {
    rows.div_ceil(5).clamp(1, 10)
}

fn min_weight(rows: usize) -> f64 {
    1.0 / (2.0 * rows as f64)
}

fn column_stats(data: &ArrayView2<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = data.nrows() as f64;
    let d = data.ncols();
    let mut means = vec![0.0; d];
    let mut vars = vec![0.0; d];
    let mut ranges = vec![0.0; d];
    for (l, col) in data.columns().into_iter().enumerate() {
        let m = col.sum() / n;
        let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        means[l] = m;
        vars[l] = v;
        ranges[l] = hi - lo;
    }
    (means, vars, ranges)
}

fn variance_floors(col_vars: &[f64]) -> Vec<f64> {
    col_vars
        .iter()
        .map(|v| (VARIANCE_FLOOR_FRACTION * v).max(1e-12))
        .collect()
}

/// Normalize raw proportions so they sum to 1 with every entry at or above
/// `floor`. Entries pinned at the floor keep it exactly; the rest share the
/// remaining mass proportionally.
fn clamp_weights(raw: &[f64], floor: f64) -> Vec<f64> {
    let k = raw.len();
    let mut pinned = vec![false; k];
    loop {
        let pinned_count = pinned.iter().filter(|&&p| p).count();
        if pinned_count == k {
            return vec![1.0 / k as f64; k];
        }
        let free_mass = 1.0 - floor * pinned_count as f64;
        let free_sum: f64 = raw
            .iter()
            .zip(&pinned)
            .filter(|(_, &p)| !p)
            .map(|(&w, _)| w)
            .sum();
        let mut changed = false;
        let mut out = vec![0.0; k];
        for j in 0..k {
            if pinned[j] {
                out[j] = floor;
                continue;
            }
            let w = if free_sum > 0.0 {
                raw[j] / free_sum * free_mass
            } else {
                free_mass / (k - pinned_count) as f64
            };
            if w < floor {
                pinned[j] = true;
                changed = true;
            } else {
                out[j] = w;
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Log density of the mixture at each row, plus per-row component
/// responsibilities.
fn e_step(model: &MixtureModel, data: &ArrayView2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = data.nrows();
    let k = model.k();
    let d = model.dims();
    let mut log_joint = Array2::<f64>::zeros((n, k));
    for j in 0..k {
        let lw = model.weights[j].ln();
        let mut log_norm = 0.0;
        for l in 0..d {
            log_norm += -0.5 * (2.0 * std::f64::consts::PI * model.variances[[j, l]]).ln();
        }
        for i in 0..n {
            let mut quad = 0.0;
            for l in 0..d {
                let diff = data[[i, l]] - model.means[[j, l]];
                quad += diff * diff / model.variances[[j, l]];
            }
            log_joint[[i, j]] = lw + log_norm - 0.5 * quad;
        }
    }
    let mut log_density = vec![0.0; n];
    let mut resp = Array2::<f64>::zeros((n, k));
    for i in 0..n {
        let row_max = (0..k).fold(f64::NEG_INFINITY, |a, j| a.max(log_joint[[i, j]]));
        let sum_exp: f64 = (0..k).map(|j| (log_joint[[i, j]] - row_max).exp()).sum();
        let lse = row_max + sum_exp.ln();
        log_density[i] = lse;
        for j in 0..k {
            resp[[i, j]] = (log_joint[[i, j]] - lse).exp();
        }
    }
    (log_density, resp)
}

fn validate_model(model: &MixtureModel, data: &ArrayView2<f64>) -> Result<()> {
    let n = data.nrows();
    if model.dims() != data.ncols() {
        return Err(Error::Dimension(format!(
            "model has {} dims, data has {}",
            model.dims(),
            data.ncols()
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("mixture", "non-finite feature value"));
    }
    let wsum: f64 = model.weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-6 {
        return Err(Error::data("mixture", format!("weights sum to {wsum}")));
    }
    let floor = min_weight(n);
    if let Some(w) = model.weights.iter().find(|&&w| w < floor - 1e-12) {
        return Err(Error::data(
            "mixture",
            format!("weight {w} below the minimum {floor} for {n} rows"),
        ));
    }
    if model.variances.iter().any(|&v| v <= 0.0) {
        return Err(Error::data("mixture", "non-positive variance"));
    }
    Ok(())
}

/// Two-part message length: (statement cost, data cost), both in nats.
pub fn message_length_parts(model: &MixtureModel, data: &ArrayView2<f64>) -> Result<(f64, f64)> {
    validate_model(model, data)?;
    let n = data.nrows();
    let k = model.k();
    let d = model.dims();
    let (_, col_vars, ranges) = column_stats(data);
    let floors = variance_floors(&col_vars);

    let (log_density, resp) = e_step(model, data);
    let part2: f64 = -log_density.iter().sum::<f64>();

    let nf = n as f64;
    let mut part1 = k as f64 * std::f64::consts::LN_2; // geometric prior on the count
    part1 -= ln_gamma(k as f64); // ln (k-1)!, uniform prior over the simplex
    part1 += 0.5 * (k as f64 - 1.0) * nf.ln();
    for j in 0..k {
        part1 -= 0.5 * model.weights[j].ln();
        let n_j = resp.column(j).sum().max(1.0);
        for l in 0..d {
            let range = ranges[l].max(1e-9);
            let sigma_min = floors[l].sqrt();
            let log_ratio = (range / sigma_min).ln().max(1.0);
            part1 += range.ln() + log_ratio.ln();
            part1 += 0.5 * std::f64::consts::LN_2 + n_j.ln();
            part1 -= 0.5 * model.variances[[j, l]].ln();
        }
    }
    let param_count = (k - 1) + 2 * k * d;
    part1 += param_count as f64 * QUANTIZATION_PER_PARAM;
    Ok((part1, part2))
}

/// Total message length in nats; lower is better.
pub fn message_length(model: &MixtureModel, data: &ArrayView2<f64>) -> Result<f64> {
    let (p1, p2) = message_length_parts(model, data)?;
    Ok(p1 + p2)
}

fn kmeans_pp_centers(data: &ArrayView2<f64>, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let n = data.nrows();
    let mut centers = vec![rng.random_range(0..n)];
    let mut dist2 = vec![f64::INFINITY; n];
    while centers.len() < k {
        let last = *centers.last().unwrap();
        for i in 0..n {
            let mut d2 = 0.0;
            for l in 0..data.ncols() {
                let diff = data[[i, l]] - data[[last, l]];
                d2 += diff * diff;
            }
            dist2[i] = dist2[i].min(d2);
        }
        let total: f64 = dist2.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d2) in dist2.iter().enumerate() {
                if target < d2 {
                    chosen = i;
                    break;
                }
                target -= d2;
            }
            chosen
        };
        centers.push(next);
    }
    centers
}

/// EM fit for a fixed component count, deterministic given `seed`.
/// Returns the fitted model and the data-cost trace per iteration.
pub fn fit_mixture_traced(
    data: &ArrayView2<f64>,
    k: usize,
    seed: u64,
) -> Result<(MixtureModel, Vec<f64>)> {
    let n = data.nrows();
    let d = data.ncols();
    if k == 0 {
        return Err(Error::data("mixture", "k must be at least 1"));
    }
    if n < k {
        return Err(Error::data(
            "mixture",
            format!("{k} clusters need at least {k} rows, got {n}"),
        ));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("mixture", "non-finite feature value"));
    }

    let (_, col_vars, _) = column_stats(data);
    let floors = variance_floors(&col_vars);
    let mut rng = substream_indexed(seed, "mixture-init", k as u64);
    let centers = kmeans_pp_centers(data, k, &mut rng);

    let mut means = Array2::<f64>::zeros((k, d));
    let mut variances = Array2::<f64>::zeros((k, d));
    for (j, &c) in centers.iter().enumerate() {
        for l in 0..d {
            means[[j, l]] = data[[c, l]];
            variances[[j, l]] = col_vars[l].max(floors[l]);
        }
    }
    let mut model = MixtureModel {
        weights: vec![1.0 / k as f64; k],
        means,
        variances,
        message_length: f64::INFINITY,
    };

    let w_floor = min_weight(n);
    let mut trace = Vec::new();
    let mut previous_total = f64::INFINITY;
    for _ in 0..EM_MAX_ITERATIONS {
        let (log_density, resp) = e_step(&model, data);
        let part2: f64 = -log_density.iter().sum::<f64>();
        trace.push(part2);

        // M-step: responsibility-weighted moments with degeneracy guards
        let mut raw_weights = vec![0.0; k];
        for j in 0..k {
            let n_j: f64 = resp.column(j).sum();
            let denom = n_j.max(1e-12);
            for l in 0..d {
                let mut m = 0.0;
                for i in 0..n {
                    m += resp[[i, j]] * data[[i, l]];
                }
                m /= denom;
                let mut v = 0.0;
                for i in 0..n {
                    let diff = data[[i, l]] - m;
                    v += resp[[i, j]] * diff * diff;
                }
                v /= denom;
                model.means[[j, l]] = m;
                model.variances[[j, l]] = v.max(floors[l]);
            }
            raw_weights[j] = n_j / n as f64;
        }
        model.weights = clamp_weights(&raw_weights, w_floor);

        let total = message_length(&model, data)?;
        let converged = previous_total.is_finite()
            && (previous_total - total).abs() <= EM_RELATIVE_TOLERANCE * previous_total.abs().max(1.0);
        previous_total = total;
        if converged {
            break;
        }
    }
    model.message_length = message_length(&model, data)?;
    Ok((model, trace))
}

/// EM fit for a fixed component count, deterministic given `seed`.
pub fn fit_mixture(data: &ArrayView2<f64>, k: usize, seed: u64) -> Result<MixtureModel> {
    fit_mixture_traced(data, k, seed).map(|(m, _)| m)
}

fn standardize(data: &ArrayView2<f64>) -> Array2<f64> {
    let (means, vars, _) = column_stats(data);
    let mut out = data.to_owned();
    for (l, (&m, &v)) in means.iter().zip(&vars).enumerate() {
        let scale = if v > 0.0 { v.sqrt() } else { 1.0 };
        for i in 0..out.nrows() {
            out[[i, l]] = (out[[i, l]] - m) / scale;
        }
    }
    out
}

fn label_rows(model: &MixtureModel, data: &ArrayView2<f64>) -> Vec<usize> {
    let (_, resp) = e_step(model, data);
    (0..data.nrows())
        .map(|i| {
            let mut best = 0;
            for j in 1..model.k() {
                // strict comparison keeps the lowest index on ties
                if resp[[i, j]] > resp[[i, best]] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Sweep the cluster count, fit each candidate with seeded restarts, and
/// return the model with the shortest total message plus the row labels.
/// Columns are standardized internally; clusters left empty by labeling are
/// dropped and labels compacted.
pub fn cluster(
    data: &ArrayView2<f64>,
    options: ClusterOptions,
    seed: u64,
) -> Result<(MixtureModel, ClusterAssignment)> {
    let n = data.nrows();
    if n == 0 {
        return Err(Error::data("cluster", "no rows to cluster"));
    }
    let std_data = standardize(data);
    let view = std_data.view();
    let max_k = options.max_k.unwrap_or_else(|| default_max_k(n)).min(n).max(1);

    let mut best: Option<MixtureModel> = None;
    for k in 1..=max_k {
        for r in 0..options.restarts.max(1) {
            let child_seed = substream_indexed(seed, "cluster-sweep", (k * 1009 + r) as u64)
                .random::<u64>();
            let model = fit_mixture(&view, k, child_seed)?;
            if best
                .as_ref()
                .is_none_or(|b| model.message_length < b.message_length)
            {
                best = Some(model);
            }
        }
    }
    let mut model = best.expect("at least one fit");
    let mut labels = label_rows(&model, &view);

    // drop clusters with no members and compact the labels
    let mut member_count = vec![0usize; model.k()];
    for &l in &labels {
        member_count[l] += 1;
    }
    if member_count.iter().any(|&c| c == 0) {
        let keep: Vec<usize> = (0..model.k()).filter(|&j| member_count[j] > 0).collect();
        let remap: Vec<Option<usize>> = {
            let mut r = vec![None; model.k()];
            for (new, &old) in keep.iter().enumerate() {
                r[old] = Some(new);
            }
            r
        };
        let d = model.dims();
        let mut means = Array2::<f64>::zeros((keep.len(), d));
        let mut variances = Array2::<f64>::zeros((keep.len(), d));
        let mut weights = Vec::with_capacity(keep.len());
        for (new, &old) in keep.iter().enumerate() {
            for l in 0..d {
                means[[new, l]] = model.means[[old, l]];
                variances[[new, l]] = model.variances[[old, l]];
            }
            weights.push(model.weights[old]);
        }
        let weights = clamp_weights(&weights, min_weight(n));
        model = MixtureModel {
            weights,
            means,
            variances,
            message_length: f64::INFINITY,
        };
        model.message_length = message_length(&model, &view)?;
        for l in &mut labels {
            *l = remap[*l].expect("kept cluster");
        }
    }

    Ok((model, ClusterAssignment { labels }))
}
