//! Stacked, optionally bidirectional recurrent classifier with a sigmoid
//! head, plus exact reverse-mode gradients through time.

use crate::error::{Error, Result};
use crate::features::SequenceTensor;
use crate::rng::Rng;

use super::cell::{step_backward, step_forward, CellKind, CellParams, StepCache, BCE_CLAMP};
use super::cell::bce_loss;
use super::linalg::{axpy, dot, sigmoid};

/// Parameters of the full classifier. `cells` is indexed by
/// `layer * directions + direction` with direction 0 forward, 1 backward.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub bidirectional: bool,
    pub dropout_rate: f64,
    cells: Vec<CellParams>,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

impl ClassifierParams {
    pub fn init(
        kind: CellKind,
        input_dim: usize,
        hidden_dim: usize,
        layers: usize,
        bidirectional: bool,
        dropout_rate: f64,
        rng: &mut Rng,
    ) -> Result<ClassifierParams> {
        if !(1..=2).contains(&layers) {
            return Err(Error::Config(format!("layers must be 1 or 2, got {layers}")));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate must be in [0, 1), got {dropout_rate}"
            )));
        }
        let dirs = if bidirectional { 2 } else { 1 };
        let mut cells = Vec::with_capacity(layers * dirs);
        for layer in 0..layers {
            let in_dim = if layer == 0 { input_dim } else { hidden_dim * dirs };
            for _ in 0..dirs {
                cells.push(CellParams::init(kind, in_dim, hidden_dim, rng));
            }
        }
        let width = hidden_dim * dirs;
        let a = (6.0 / (width + 1) as f64).sqrt();
        let head_w = (0..width).map(|_| rng.uniform(-a, a)).collect();
        Ok(ClassifierParams {
            kind,
            input_dim,
            hidden_dim,
            layers,
            bidirectional,
            dropout_rate,
            cells,
            head_w,
            head_b: 0.0,
        })
    }

    pub fn zeros_like(&self) -> ClassifierParams {
        ClassifierParams {
            kind: self.kind,
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            layers: self.layers,
            bidirectional: self.bidirectional,
            dropout_rate: self.dropout_rate,
            cells: self.cells.iter().map(CellParams::zeros_like).collect(),
            head_w: vec![0.0; self.head_w.len()],
            head_b: 0.0,
        }
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    /// Width of the state vector feeding the head.
    pub fn head_width(&self) -> usize {
        self.hidden_dim * self.directions()
    }

    pub fn cell(&self, layer: usize, dir: usize) -> &CellParams {
        &self.cells[layer * self.directions() + dir]
    }

    fn cell_mut(&mut self, layer: usize, dir: usize) -> &mut CellParams {
        let dirs = self.directions();
        &mut self.cells[layer * dirs + dir]
    }

    /// (name, rows, cols) for every tensor, in the canonical order shared by
    /// `tensors`, `tensors_mut` and the optimizer state.
    pub fn tensor_meta(&self) -> Vec<(String, usize, usize)> {
        let mut meta = Vec::new();
        let dirs = self.directions();
        for (ci, cell) in self.cells.iter().enumerate() {
            let layer = ci / dirs;
            let dir = if ci % dirs == 0 { "fwd" } else { "bwd" };
            for (gi, gate) in cell.gates.iter().enumerate() {
                let gname = cell.kind.gate_names()[gi];
                let prefix = format!("l{layer}.{dir}.{gname}");
                meta.push((format!("{prefix}.w"), gate.w.rows, gate.w.cols));
                meta.push((format!("{prefix}.u"), gate.u.rows, gate.u.cols));
                meta.push((format!("{prefix}.b"), 1, gate.b.len()));
            }
        }
        meta.push(("head.w".to_string(), 1, self.head_w.len()));
        meta.push(("head.b".to_string(), 1, 1));
        meta
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for cell in &self.cells {
            for gate in &cell.gates {
                out.push(gate.w.data());
                out.push(gate.u.data());
                out.push(gate.b.as_slice());
            }
        }
        out.push(self.head_w.as_slice());
        out.push(std::slice::from_ref(&self.head_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for cell in &mut self.cells {
            for gate in &mut cell.gates {
                out.push(gate.w.data_mut());
                out.push(gate.u.data_mut());
                out.push(gate.b.as_mut_slice());
            }
        }
        out.push(self.head_w.as_mut_slice());
        out.push(std::slice::from_mut(&mut self.head_b));
        out
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Scale every tensor, used to average accumulated batch gradients.
    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// Reset every tensor to zero, reusing the allocation.
    pub fn zero_out(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    /// self += other, tensor by tensor.
    pub fn add_assign(&mut self, other: &ClassifierParams) {
        let others = other.tensors();
        for (mine, theirs) in self.tensors_mut().into_iter().zip(others) {
            axpy(1.0, theirs, mine);
        }
    }
}

pub(crate) struct DirectionTrace {
    /// Timestep indices actually processed, in processing order.
    order: Vec<usize>,
    caches: Vec<StepCache>,
    /// Hidden state at every input timestep; zero rows where masked.
    outputs: Vec<Vec<f64>>,
    final_h: Vec<f64>,
}

fn run_direction_trace(cell: &CellParams, seq: &SequenceTensor, reverse: bool) -> DirectionTrace {
    let n = cell.hidden_dim;
    let mut h = vec![0.0; n];
    let mut c = if cell.kind == CellKind::Lstm {
        vec![0.0; n]
    } else {
        Vec::new()
    };
    let mut order = Vec::new();
    let mut caches = Vec::new();
    let mut outputs = vec![vec![0.0; n]; seq.len()];

    let indices: Vec<usize> = if reverse {
        (0..seq.len()).rev().collect()
    } else {
        (0..seq.len()).collect()
    };
    for t in indices {
        if seq.masked(t) {
            continue; // padding leaves the state unchanged
        }
        let cache = step_forward(cell, seq.row(t), &h, &c);
        h.copy_from_slice(&cache.h);
        if cell.kind == CellKind::Lstm {
            c.copy_from_slice(&cache.c);
        }
        outputs[t].copy_from_slice(&h);
        order.push(t);
        caches.push(cache);
    }
    DirectionTrace {
        order,
        caches,
        outputs,
        final_h: h,
    }
}

/// Iterate the cell over the sequence from a zero initial state and return
/// the final hidden state. Masked (padding) steps leave the state
/// unchanged.
pub fn run_direction(cell: &CellParams, seq: &SequenceTensor, reverse: bool) -> Result<Vec<f64>> {
    if seq.dim != cell.input_dim {
        return Err(Error::Dimension(format!(
            "sequence width {} != cell input {}",
            seq.dim, cell.input_dim
        )));
    }
    Ok(run_direction_trace(cell, seq, reverse).final_h)
}

pub(crate) struct ForwardTrace {
    /// Inputs consumed by layers 1.. (layer 0 reads the caller's sequence).
    upper_inputs: Vec<SequenceTensor>,
    runs: Vec<Vec<DirectionTrace>>,
    state: Vec<f64>,
    pub p: f64,
}

fn forward_trace(
    params: &ClassifierParams,
    seq: &SequenceTensor,
    dropout_mask: Option<&[f64]>,
) -> Result<ForwardTrace> {
    if seq.dim != params.input_dim {
        return Err(Error::Dimension(format!(
            "sequence width {} != classifier input {}",
            seq.dim, params.input_dim
        )));
    }
    if let Some(mask) = dropout_mask {
        if mask.len() != params.head_width() {
            return Err(Error::Dimension(format!(
                "dropout mask width {} != state width {}",
                mask.len(),
                params.head_width()
            )));
        }
    }
    let dirs = params.directions();
    let mut runs: Vec<Vec<DirectionTrace>> = Vec::with_capacity(params.layers);
    let mut upper_inputs: Vec<SequenceTensor> = Vec::new();

    for layer in 0..params.layers {
        let input: &SequenceTensor = if layer == 0 {
            seq
        } else {
            &upper_inputs[layer - 1]
        };
        let layer_runs: Vec<DirectionTrace> = (0..dirs)
            .map(|dir| run_direction_trace(params.cell(layer, dir), input, dir == 1))
            .collect();
        if layer + 1 < params.layers {
            // next layer consumes the per-timestep hidden outputs,
            // directions concatenated, same mask
            let width = params.hidden_dim * dirs;
            let rows: Vec<Vec<f64>> = (0..input.len())
                .map(|t| {
                    let mut row = Vec::with_capacity(width);
                    for run in &layer_runs {
                        row.extend_from_slice(&run.outputs[t]);
                    }
                    row
                })
                .collect();
            upper_inputs.push(SequenceTensor::from_rows_with_mask(
                width,
                rows,
                input.mask().to_vec(),
            ));
        }
        runs.push(layer_runs);
    }

    let mut state = Vec::with_capacity(params.head_width());
    for run in runs.last().unwrap() {
        state.extend_from_slice(&run.final_h);
    }
    if let Some(mask) = dropout_mask {
        for (s, m) in state.iter_mut().zip(mask) {
            *s *= m;
        }
    }
    let logit = dot(&params.head_w, &state) + params.head_b;
    let p = sigmoid(logit);
    if !p.is_finite() {
        return Err(Error::Numeric {
            epoch: 0,
            msg: "non-finite probability in forward pass".into(),
        });
    }
    Ok(ForwardTrace {
        upper_inputs,
        runs,
        state,
        p,
    })
}

/// Inference-mode probability that the input is the positive (OFF) class.
pub fn forward(params: &ClassifierParams, seq: &SequenceTensor) -> Result<f64> {
    Ok(forward_trace(params, seq, None)?.p)
}

pub struct BackwardResult {
    pub loss: f64,
    pub p: f64,
    pub grads: ClassifierParams,
}

/// Exact gradients of `bce_loss(forward(seq), y)` with respect to every
/// parameter tensor, through gates, the state recurrence, bidirectional
/// concatenation and the supplied dropout mask. Pass an all-ones mask for
/// inference-mode gradients.
pub fn backward(
    params: &ClassifierParams,
    seq: &SequenceTensor,
    y: f64,
    dropout_mask: &[f64],
) -> Result<BackwardResult> {
    let mut grads = params.zeros_like();
    let (loss, p) = backward_into(params, seq, y, dropout_mask, &mut grads)?;
    Ok(BackwardResult { loss, p, grads })
}

/// Like [`backward`] but accumulates into an existing gradient buffer,
/// so a training loop can sum a mini-batch without reallocating.
pub fn backward_into(
    params: &ClassifierParams,
    seq: &SequenceTensor,
    y: f64,
    dropout_mask: &[f64],
    grads: &mut ClassifierParams,
) -> Result<(f64, f64)> {
    let trace = forward_trace(params, seq, Some(dropout_mask))?;
    let p = trace.p;
    let loss = bce_loss(p, y);
    if !loss.is_finite() {
        return Err(Error::Numeric {
            epoch: 0,
            msg: "non-finite loss".into(),
        });
    }

    // d loss / d logit; zero in the clamped region where the loss is flat
    let d_logit = if p > BCE_CLAMP && p < 1.0 - BCE_CLAMP {
        p - y
    } else {
        0.0
    };
    grads.head_b += d_logit;
    for (g, s) in grads.head_w.iter_mut().zip(&trace.state) {
        *g += d_logit * s;
    }
    let mut d_state: Vec<f64> = params.head_w.iter().map(|w| d_logit * w).collect();
    for (d, m) in d_state.iter_mut().zip(dropout_mask) {
        *d *= m;
    }

    let dirs = params.directions();
    let n = params.hidden_dim;
    // per-timestep gradients flowing into the current layer's outputs
    // (width hidden * dirs); empty for the top layer
    let mut d_outputs: Vec<Vec<f64>> = Vec::new();

    for layer in (0..params.layers).rev() {
        let input: &SequenceTensor = if layer == 0 {
            seq
        } else {
            &trace.upper_inputs[layer - 1]
        };
        let is_top = layer + 1 == params.layers;
        let mut d_input: Vec<Vec<f64>> = if layer > 0 {
            vec![vec![0.0; input.dim]; input.len()]
        } else {
            Vec::new()
        };

        for dir in 0..dirs {
            let run = &trace.runs[layer][dir];
            let cell = params.cell(layer, dir);
            let mut dh: Vec<f64> = if is_top {
                d_state[dir * n..(dir + 1) * n].to_vec()
            } else {
                vec![0.0; n]
            };
            let mut dc: Vec<f64> = if cell.kind == CellKind::Lstm {
                vec![0.0; n]
            } else {
                Vec::new()
            };
            let mut dh_prev = Vec::new();
            let mut dc_prev = Vec::new();

            for (i, &t) in run.order.iter().enumerate().rev() {
                if !is_top {
                    // gradient arriving from the upper layer at this timestep
                    axpy(1.0, &d_outputs[t][dir * n..(dir + 1) * n], &mut dh);
                }
                let dx = if layer > 0 {
                    Some(&mut d_input[t][..])
                } else {
                    None
                };
                step_backward(
                    cell,
                    &run.caches[i],
                    input.row(t),
                    &dh,
                    &dc,
                    grads.cell_mut(layer, dir),
                    &mut dh_prev,
                    &mut dc_prev,
                    dx,
                );
                std::mem::swap(&mut dh, &mut dh_prev);
                std::mem::swap(&mut dc, &mut dc_prev);
            }
        }
        d_outputs = d_input;
    }

    if !grads.all_finite() {
        return Err(Error::Numeric {
            epoch: 0,
            msg: "non-finite gradient".into(),
        });
    }
    Ok((loss, p))
}

/// Inverted-dropout mask over the state vector feeding the head: each entry
/// is 0 with probability `rate`, otherwise `1 / (1 - rate)`.
pub fn dropout_mask(width: usize, rate: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if rate == 0.0 {
        return Ok(vec![1.0; width]);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok((0..width)
        .map(|_| if rng.next_f64() < rate { 0.0 } else { keep })
        .collect())
}
