//! Peephole LSTM with an affine projection head, exact
//! backpropagation-through-time across each series' patch sequence, and a
//! stochastic-gradient training loop with input noise injection and L2
//! regularization.
//!
//! All training patches of one series are read as a single sequence: the
//! recurrent state starts at zero per series and threads across its patches,
//! so a trained network still behaves differently per series through the
//! state it accumulates. Input and forget gates peek at the previous cell
//! state, the output gate at the updated one; peepholes are diagonal.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::prep::TrainingPatch;
use crate::rng::{substream, substream_indexed};

/// Gradient clipping threshold (whole-gradient L2 norm), a divergence guard.
const GRADIENT_CLIP_NORM: f64 = 10.0;
/// Uniform initialization half-width.
const INIT_RANGE: f64 = 0.05;

/// One gate's parameters. `peephole` is a diagonal (elementwise) connection
/// to the cell state; the candidate gate has none.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    /// cell_dim x cell_dim, applied to the previous hidden state.
    pub recurrent: Array2<f64>,
    /// cell_dim x input_size, applied to the current input window.
    pub input: Array2<f64>,
    /// cell_dim, elementwise on the cell state.
    pub peephole: Option<Array1<f64>>,
    pub bias: Array1<f64>,
}

impl Gate {
    fn zeros(cell_dim: usize, input_size: usize, peephole: bool) -> Self {
        Gate {
            recurrent: Array2::zeros((cell_dim, cell_dim)),
            input: Array2::zeros((cell_dim, input_size)),
            peephole: peephole.then(|| Array1::zeros(cell_dim)),
            bias: Array1::zeros(cell_dim),
        }
    }

    fn preactivation(&self, h: &Array1<f64>, x: &Array1<f64>, cell: Option<&Array1<f64>>) -> Array1<f64> {
        let mut z = self.recurrent.dot(h) + self.input.dot(x) + &self.bias;
        if let (Some(p), Some(c)) = (&self.peephole, cell) {
            z = z + &(p * c);
        }
        z
    }

    fn for_each_param(&self, f: &mut impl FnMut(f64)) {
        self.recurrent.iter().for_each(|&v| f(v));
        self.input.iter().for_each(|&v| f(v));
        if let Some(p) = &self.peephole {
            p.iter().for_each(|&v| f(v));
        }
        self.bias.iter().for_each(|&v| f(v));
    }

    fn for_each_param_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        self.recurrent.iter_mut().for_each(|v| f(v));
        self.input.iter_mut().for_each(|v| f(v));
        if let Some(p) = &mut self.peephole {
            p.iter_mut().for_each(|v| f(v));
        }
        self.bias.iter_mut().for_each(|v| f(v));
    }

    fn zip_apply(&mut self, other: &Gate, f: &mut impl FnMut(&mut f64, f64)) {
        self.recurrent
            .iter_mut()
            .zip(other.recurrent.iter())
            .for_each(|(a, &b)| f(a, b));
        self.input
            .iter_mut()
            .zip(other.input.iter())
            .for_each(|(a, &b)| f(a, b));
        if let (Some(p), Some(q)) = (&mut self.peephole, &other.peephole) {
            p.iter_mut().zip(q.iter()).for_each(|(a, &b)| f(a, b));
        }
        self.bias
            .iter_mut()
            .zip(other.bias.iter())
            .for_each(|(a, &b)| f(a, b));
    }
}

/// All parameters of one group's network: gate weights, diagonal peepholes,
/// biases, and the affine head (no bias) projecting the hidden state to the
/// forecast horizon. The same shape doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub input_gate: Gate,
    pub forget_gate: Gate,
    pub candidate: Gate,
    pub output_gate: Gate,
    /// output_size x cell_dim.
    pub head: Array2<f64>,
}

/// Recurrent state, reset to zeros at each series boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub hidden: Array1<f64>,
    pub cell: Array1<f64>,
}

impl LstmState {
    pub fn zeros(cell_dim: usize) -> Self {
        LstmState {
            hidden: Array1::zeros(cell_dim),
            cell: Array1::zeros(cell_dim),
        }
    }
}

/// Knobs of one training run. `epoch_size` counts patches consumed per epoch,
/// `minibatch_size` counts whole series per parameter update, and
/// `lr_per_sample` multiplies the summed (not averaged) minibatch gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub cell_dim: usize,
    pub epoch_size: usize,
    pub minibatch_size: usize,
    pub lr_per_sample: f64,
    pub max_epochs: usize,
    pub noise_std: f64,
    pub l2_weight: f64,
    pub seed: u64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmModel {
    pub fn zeros(cell_dim: usize, input_size: usize, output_size: usize) -> Self {
        LstmModel {
            input_gate: Gate::zeros(cell_dim, input_size, true),
            forget_gate: Gate::zeros(cell_dim, input_size, true),
            candidate: Gate::zeros(cell_dim, input_size, false),
            output_gate: Gate::zeros(cell_dim, input_size, true),
            head: Array2::zeros((output_size, cell_dim)),
        }
    }

    /// Uniform initialization in [-0.05, 0.05] from the given stream.
    pub fn init_uniform(
        cell_dim: usize,
        input_size: usize,
        output_size: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut model = Self::zeros(cell_dim, input_size, output_size);
        model.for_each_param_mut(|v| *v = rng.random_range(-INIT_RANGE..INIT_RANGE));
        model
    }

    pub fn cell_dim(&self) -> usize {
        self.head.ncols()
    }

    pub fn input_size(&self) -> usize {
        self.input_gate.input.ncols()
    }

    pub fn output_size(&self) -> usize {
        self.head.nrows()
    }

    pub fn for_each_param(&self, mut f: impl FnMut(f64)) {
        self.input_gate.for_each_param(&mut f);
        self.forget_gate.for_each_param(&mut f);
        self.candidate.for_each_param(&mut f);
        self.output_gate.for_each_param(&mut f);
        self.head.iter().for_each(|&v| f(v));
    }

    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        self.input_gate.for_each_param_mut(&mut f);
        self.forget_gate.for_each_param_mut(&mut f);
        self.candidate.for_each_param_mut(&mut f);
        self.output_gate.for_each_param_mut(&mut f);
        self.head.iter_mut().for_each(|v| f(v));
    }

    /// Apply `f(self_param, other_param)` across matching parameters.
    pub fn zip_apply(&mut self, other: &LstmModel, mut f: impl FnMut(&mut f64, f64)) {
        self.input_gate.zip_apply(&other.input_gate, &mut f);
        self.forget_gate.zip_apply(&other.forget_gate, &mut f);
        self.candidate.zip_apply(&other.candidate, &mut f);
        self.output_gate.zip_apply(&other.output_gate, &mut f);
        self.head
            .iter_mut()
            .zip(other.head.iter())
            .for_each(|(a, &b)| f(a, b));
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_param(|_| n += 1);
        n
    }

    pub fn squared_param_norm(&self) -> f64 {
        let mut s = 0.0;
        self.for_each_param(|v| s += v * v);
        s
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_param(|v| ok &= v.is_finite());
        ok
    }

    /// One recurrent step. Input and forget gates peek at the incoming cell
    /// state, the output gate at the updated one.
    pub fn cell_step(&self, state: &LstmState, x: &Array1<f64>) -> Result<(LstmState, Array1<f64>)> {
        if x.len() != self.input_size() {
            return Err(Error::Dimension(format!(
                "input length {} does not match input size {}",
                x.len(),
                self.input_size()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("lstm", "non-finite input"));
        }
        let i = self
            .input_gate
            .preactivation(&state.hidden, x, Some(&state.cell))
            .mapv(sigmoid);
        let f = self
            .forget_gate
            .preactivation(&state.hidden, x, Some(&state.cell))
            .mapv(sigmoid);
        let ctilde = self
            .candidate
            .preactivation(&state.hidden, x, None)
            .mapv(f64::tanh);
        let cell = &f * &state.cell + &i * &ctilde;
        let o = self
            .output_gate
            .preactivation(&state.hidden, x, Some(&cell))
            .mapv(sigmoid);
        let hidden = &o * &cell.mapv(f64::tanh);
        Ok((LstmState { hidden: hidden.clone(), cell }, hidden))
    }

    /// Thread the state across one series' patches (in window order) and
    /// project each hidden state to a horizon-length prediction.
    pub fn forward_series(&self, patches: &[TrainingPatch]) -> Result<Vec<Array1<f64>>> {
        validate_sequence(patches)?;
        let mut state = LstmState::zeros(self.cell_dim());
        let mut predictions = Vec::with_capacity(patches.len());
        for patch in patches {
            let x = Array1::from_vec(patch.input.clone());
            let (next, h) = self.cell_step(&state, &x)?;
            predictions.push(self.head.dot(&h));
            state = next;
        }
        Ok(predictions)
    }

    /// Run the state over a sequence of input windows and return the
    /// prediction from the final one.
    pub fn forecast_after_warmup(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        if inputs.is_empty() {
            return Err(Error::data("lstm", "no warm-up windows"));
        }
        let mut state = LstmState::zeros(self.cell_dim());
        let mut last_h = Array1::zeros(self.cell_dim());
        for input in inputs {
            let x = Array1::from_vec(input.clone());
            let (next, h) = self.cell_step(&state, &x)?;
            last_h = h;
            state = next;
        }
        Ok(self.head.dot(&last_h).to_vec())
    }
}

fn validate_sequence(patches: &[TrainingPatch]) -> Result<()> {
    if patches.is_empty() {
        return Err(Error::data("lstm", "empty patch sequence"));
    }
    let id = &patches[0].series_id;
    for w in patches.windows(2) {
        if w[1].series_id != *id {
            return Err(Error::data(
                id,
                format!("mixed series ids in one sequence: `{}`", w[1].series_id),
            ));
        }
        if w[1].window_index <= w[0].window_index {
            return Err(Error::data(id, "patches out of window order"));
        }
    }
    Ok(())
}

/// Sum of squared differences over patches and horizon.
pub fn squared_error(predictions: &[Array1<f64>], targets: &[&[f64]]) -> f64 {
    predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            p.iter()
                .zip(t.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum()
}

/// Data loss of one series.
pub fn series_loss(model: &LstmModel, patches: &[TrainingPatch]) -> Result<f64> {
    let predictions = model.forward_series(patches)?;
    let targets: Vec<&[f64]> = patches.iter().map(|p| p.target.as_slice()).collect();
    Ok(squared_error(&predictions, &targets))
}

/// Full training objective: summed data loss plus `l2_weight` times the
/// squared parameter norm.
pub fn objective(model: &LstmModel, series: &[Vec<TrainingPatch>], l2_weight: f64) -> Result<f64> {
    let mut total = 0.0;
    for patches in series {
        total += series_loss(model, patches)?;
    }
    Ok(total + l2_weight * model.squared_param_norm())
}

struct StepCache {
    x: Array1<f64>,
    h_prev: Array1<f64>,
    c_prev: Array1<f64>,
    i: Array1<f64>,
    f: Array1<f64>,
    ctilde: Array1<f64>,
    o: Array1<f64>,
    cell: Array1<f64>,
    tanh_cell: Array1<f64>,
    h: Array1<f64>,
}

fn outer_add(acc: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    for (r, &av) in a.iter().enumerate() {
        if av == 0.0 {
            continue;
        }
        for (c, &bv) in b.iter().enumerate() {
            acc[[r, c]] += av * bv;
        }
    }
}

/// Exact gradient of the data loss through the full unrolled sequence,
/// including the peephole paths and the cross-patch state dependence.
/// Regularization is the caller's concern (see [`add_l2_gradient`]).
pub fn backward_series(model: &LstmModel, patches: &[TrainingPatch]) -> Result<LstmModel> {
    validate_sequence(patches)?;
    let n = model.cell_dim();

    // forward pass with caches
    let mut caches = Vec::with_capacity(patches.len());
    let mut d_head_inputs = Vec::with_capacity(patches.len());
    let mut state = LstmState::zeros(n);
    let mut grad = LstmModel::zeros(n, model.input_size(), model.output_size());
    for patch in patches {
        let x = Array1::from_vec(patch.input.clone());
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(&patch.series_id, "non-finite input"));
        }
        let i = model
            .input_gate
            .preactivation(&state.hidden, &x, Some(&state.cell))
            .mapv(sigmoid);
        let f = model
            .forget_gate
            .preactivation(&state.hidden, &x, Some(&state.cell))
            .mapv(sigmoid);
        let ctilde = model
            .candidate
            .preactivation(&state.hidden, &x, None)
            .mapv(f64::tanh);
        let cell = &f * &state.cell + &i * &ctilde;
        let o = model
            .output_gate
            .preactivation(&state.hidden, &x, Some(&cell))
            .mapv(sigmoid);
        let tanh_cell = cell.mapv(f64::tanh);
        let h = &o * &tanh_cell;

        let pred = model.head.dot(&h);
        let target = Array1::from_vec(patch.target.clone());
        let dpred = (&pred - &target) * 2.0;
        // head gradient and the loss signal entering the hidden state
        outer_add(&mut grad.head, &dpred, &h);
        d_head_inputs.push(model.head.t().dot(&dpred));

        caches.push(StepCache {
            x,
            h_prev: state.hidden.clone(),
            c_prev: state.cell.clone(),
            i,
            f,
            ctilde,
            o,
            cell: cell.clone(),
            tanh_cell,
            h: h.clone(),
        });
        state = LstmState { hidden: h, cell };
    }

    // backward through time
    let mut dh_carry = Array1::<f64>::zeros(n);
    let mut dc_carry = Array1::<f64>::zeros(n);
    let p_i = model.input_gate.peephole.as_ref().expect("input peephole");
    let p_f = model.forget_gate.peephole.as_ref().expect("forget peephole");
    let p_o = model.output_gate.peephole.as_ref().expect("output peephole");
    for (t, cache) in caches.iter().enumerate().rev() {
        let dh_total = &d_head_inputs[t] + &dh_carry;
        let do_pre =
            &dh_total * &cache.tanh_cell * &cache.o.mapv(|v| v * (1.0 - v));
        let mut dc_total = &dh_total * &cache.o * &cache.tanh_cell.mapv(|v| 1.0 - v * v);
        dc_total = dc_total + &dc_carry + &(&do_pre * p_o);
        let di_pre = &dc_total * &cache.ctilde * &cache.i.mapv(|v| v * (1.0 - v));
        let df_pre = &dc_total * &cache.c_prev * &cache.f.mapv(|v| v * (1.0 - v));
        let dct_pre = &dc_total * &cache.i * &cache.ctilde.mapv(|v| 1.0 - v * v);

        for (gate_grad, d_pre) in [
            (&mut grad.input_gate, &di_pre),
            (&mut grad.forget_gate, &df_pre),
            (&mut grad.candidate, &dct_pre),
            (&mut grad.output_gate, &do_pre),
        ] {
            outer_add(&mut gate_grad.recurrent, d_pre, &cache.h_prev);
            outer_add(&mut gate_grad.input, d_pre, &cache.x);
            gate_grad.bias += d_pre;
        }
        if let Some(p) = &mut grad.input_gate.peephole {
            *p += &(&di_pre * &cache.c_prev);
        }
        if let Some(p) = &mut grad.forget_gate.peephole {
            *p += &(&df_pre * &cache.c_prev);
        }
        if let Some(p) = &mut grad.output_gate.peephole {
            *p += &(&do_pre * &cache.cell);
        }

        dh_carry = model.input_gate.recurrent.t().dot(&di_pre)
            + model.forget_gate.recurrent.t().dot(&df_pre)
            + model.candidate.recurrent.t().dot(&dct_pre)
            + model.output_gate.recurrent.t().dot(&do_pre);
        dc_carry = &dc_total * &cache.f + &(&di_pre * p_i) + &(&df_pre * p_f);
    }
    let _ = &caches; // h fields kept for symmetry with the forward pass
    Ok(grad)
}

/// Add the regularization gradient `2 * l2 * parameter` in place.
pub fn add_l2_gradient(model: &LstmModel, l2_weight: f64, grad: &mut LstmModel) {
    if l2_weight == 0.0 {
        return;
    }
    grad.zip_apply(model, |g, p| *g += 2.0 * l2_weight * p);
}

fn noisy_copy(patches: &[TrainingPatch], noise_std: f64, rng: &mut impl Rng) -> Vec<TrainingPatch> {
    if noise_std <= 0.0 {
        return patches.to_vec();
    }
    let dist = Normal::new(0.0, noise_std).expect("valid noise std");
    patches
        .iter()
        .map(|p| {
            let mut q = p.clone();
            for v in &mut q.input {
                *v += dist.sample(rng);
            }
            q
        })
        .collect()
}

/// Train a model on the given per-series patch lists; per-epoch objectives
/// (noise-free, regularization included) are returned alongside.
pub fn train_traced(
    series: &[Vec<TrainingPatch>],
    config: &TrainConfig,
    group: &str,
) -> Result<(LstmModel, Vec<f64>)> {
    let total_patches: usize = series.iter().map(Vec::len).sum();
    if total_patches == 0 {
        return Err(Error::data(group, "no training patches"));
    }
    if config.minibatch_size == 0 || config.epoch_size == 0 {
        return Err(Error::data(group, "epoch and minibatch sizes must be positive"));
    }
    let input_size = series
        .iter()
        .flat_map(|s| s.iter())
        .map(|p| p.input.len())
        .next()
        .unwrap();
    let output_size = series[0][0].target.len();
    for patch in series.iter().flat_map(|s| s.iter()) {
        if patch.input.len() != input_size || patch.target.len() != output_size {
            return Err(Error::Dimension(format!(
                "patch shapes differ within group `{group}`"
            )));
        }
    }

    let mut init_rng = substream(config.seed, "init");
    let mut model = LstmModel::init_uniform(config.cell_dim, input_size, output_size, &mut init_rng);
    let mut noise_rng = substream(config.seed, "noise");
    let mut epoch_losses = Vec::with_capacity(config.max_epochs);

    for epoch in 0..config.max_epochs {
        let mut order: Vec<usize> = (0..series.len()).collect();
        order.shuffle(&mut substream_indexed(config.seed, "shuffle", epoch as u64));

        let mut consumed = 0usize;
        let mut cursor = 0usize;
        let mut batch_grad = LstmModel::zeros(config.cell_dim, input_size, output_size);
        let mut batch_members = 0usize;
        while consumed < config.epoch_size {
            let idx = order[cursor % order.len()];
            cursor += 1;
            let noisy = noisy_copy(&series[idx], config.noise_std, &mut noise_rng);
            let grad = backward_series(&model, &noisy)?;
            batch_grad.zip_apply(&grad, |a, b| *a += b);
            batch_members += 1;
            consumed += series[idx].len().max(1);

            if batch_members == config.minibatch_size || consumed >= config.epoch_size {
                add_l2_gradient(&model, config.l2_weight, &mut batch_grad);
                let norm = batch_grad.squared_param_norm().sqrt();
                if !norm.is_finite() {
                    return Err(Error::Divergence {
                        group: group.to_string(),
                        epoch,
                        reason: "non-finite gradient".to_string(),
                    });
                }
                let scale = if norm > GRADIENT_CLIP_NORM {
                    GRADIENT_CLIP_NORM / norm
                } else {
                    1.0
                };
                let lr = config.lr_per_sample;
                model.zip_apply(&batch_grad, |p, g| *p -= lr * scale * g);
                batch_grad.for_each_param_mut(|v| *v = 0.0);
                batch_members = 0;
            }
        }
        if !model.all_finite() {
            return Err(Error::Divergence {
                group: group.to_string(),
                epoch,
                reason: "non-finite parameter after update".to_string(),
            });
        }
        let obj = objective(&model, series, config.l2_weight)?;
        if !obj.is_finite() {
            return Err(Error::Divergence {
                group: group.to_string(),
                epoch,
                reason: format!("objective became {obj}"),
            });
        }
        epoch_losses.push(obj);
    }
    Ok((model, epoch_losses))
}

/// Train a model; deterministic given `config.seed`.
pub fn train(series: &[Vec<TrainingPatch>], config: &TrainConfig, group: &str) -> Result<LstmModel> {
    train_traced(series, config, group).map(|(m, _)| m)
}

const CHECKPOINT_HEADER: &str = "# lstm-model v1";

fn write_tensor(w: &mut impl Write, name: &str, rows: usize, cols: usize, data: impl Iterator<Item = f64>) -> std::io::Result<()> {
    writeln!(w, "tensor {name} {rows} {cols}")?;
    let mut col = 0;
    for v in data {
        if col > 0 {
            write!(w, " ")?;
        }
        write!(w, "{:016x}", v.to_bits())?;
        col += 1;
        if col == cols {
            writeln!(w)?;
            col = 0;
        }
    }
    Ok(())
}

impl LstmModel {
    /// Versioned textual checkpoint; float bits are hex so the round trip is
    /// exact.
    pub fn write_checkpoint(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{CHECKPOINT_HEADER}")?;
        writeln!(
            w,
            "dims {} {} {}",
            self.cell_dim(),
            self.input_size(),
            self.output_size()
        )?;
        let n = self.cell_dim();
        let m = self.input_size();
        for (label, gate) in [
            ("input_gate", &self.input_gate),
            ("forget_gate", &self.forget_gate),
            ("candidate", &self.candidate),
            ("output_gate", &self.output_gate),
        ] {
            write_tensor(w, &format!("{label}.recurrent"), n, n, gate.recurrent.iter().copied())?;
            write_tensor(w, &format!("{label}.input"), n, m, gate.input.iter().copied())?;
            if let Some(p) = &gate.peephole {
                write_tensor(w, &format!("{label}.peephole"), 1, n, p.iter().copied())?;
            }
            write_tensor(w, &format!("{label}.bias"), 1, n, gate.bias.iter().copied())?;
        }
        write_tensor(
            w,
            "head",
            self.output_size(),
            self.cell_dim(),
            self.head.iter().copied(),
        )?;
        Ok(())
    }

    pub fn read_checkpoint(r: &mut impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::parse("checkpoint", "empty file"))?;
        if header.trim() != CHECKPOINT_HEADER {
            return Err(Error::parse("checkpoint", format!("bad header `{header}`")));
        }
        let dims_line = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::parse("checkpoint", "missing dims"))?;
        let dims: Vec<usize> = dims_line
            .split_whitespace()
            .skip(1)
            .map(|t| t.parse().map_err(|_| Error::parse("checkpoint", "bad dims")))
            .collect::<Result<_>>()?;
        if dims.len() != 3 {
            return Err(Error::parse("checkpoint", "expected three dims"));
        }
        let (n, m, k) = (dims[0], dims[1], dims[2]);
        let mut model = LstmModel::zeros(n, m, k);

        let read_values = |lines: &mut std::io::Lines<&mut _>, rows: usize, cols: usize, name: &str| -> Result<Vec<f64>> {
            let head = lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::parse("checkpoint", format!("missing tensor {name}")))?;
            let parts: Vec<&str> = head.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "tensor" || parts[1] != name {
                return Err(Error::parse("checkpoint", format!("expected tensor {name}, got `{head}`")));
            }
            if parts[2].parse::<usize>().ok() != Some(rows) || parts[3].parse::<usize>().ok() != Some(cols) {
                return Err(Error::parse("checkpoint", format!("tensor {name} has wrong shape")));
            }
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let row = lines
                    .next()
                    .transpose()?
                    .ok_or_else(|| Error::parse("checkpoint", format!("truncated tensor {name}")))?;
                for tok in row.split_whitespace() {
                    let bits = u64::from_str_radix(tok, 16)
                        .map_err(|_| Error::parse("checkpoint", format!("bad hex in {name}")))?;
                    values.push(f64::from_bits(bits));
                }
            }
            if values.len() != rows * cols {
                return Err(Error::parse("checkpoint", format!("tensor {name} has wrong cell count")));
            }
            Ok(values)
        };

        for label in ["input_gate", "forget_gate", "candidate", "output_gate"] {
            let rec = read_values(&mut lines, n, n, &format!("{label}.recurrent"))?;
            let inp = read_values(&mut lines, n, m, &format!("{label}.input"))?;
            let peep = if label == "candidate" {
                None
            } else {
                Some(read_values(&mut lines, 1, n, &format!("{label}.peephole"))?)
            };
            let bias = read_values(&mut lines, 1, n, &format!("{label}.bias"))?;
            let gate = Gate {
                recurrent: Array2::from_shape_vec((n, n), rec)
                    .map_err(|e| Error::parse("checkpoint", e.to_string()))?,
                input: Array2::from_shape_vec((n, m), inp)
                    .map_err(|e| Error::parse("checkpoint", e.to_string()))?,
                peephole: peep.map(Array1::from_vec),
                bias: Array1::from_vec(bias),
            };
            match label {
                "input_gate" => model.input_gate = gate,
                "forget_gate" => model.forget_gate = gate,
                "candidate" => model.candidate = gate,
                _ => model.output_gate = gate,
            }
        }
        let head = read_values(&mut lines, k, n, "head")?;
        model.head = Array2::from_shape_vec((k, n), head)
            .map_err(|e| Error::parse("checkpoint", e.to_string()))?;
        Ok(model)
    }
}
