//! Recurrent cell parameters and single-timestep transitions.
//!
//! Formulations are the standard ones: Elman RNN `h' = tanh(Wx + Uh + b)`;
//! GRU with update/reset gates and candidate
//! `h' = (1-z) (.) h + z (.) tanh(W_h x + U_h (r (.) h) + b_h)`;
//! vanilla LSTM without peepholes,
//! `c' = f (.) c + i (.) g`, `h' = o (.) tanh(c')`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::linalg::{sigmoid, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellKind {
    Rnn,
    Gru,
    Lstm,
}

impl CellKind {
    pub fn gate_count(&self) -> usize {
        match self {
            CellKind::Rnn => 1,
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }

    /// Gate tags used in checkpoint tensor names.
    pub fn gate_names(&self) -> &'static [&'static str] {
        match self {
            CellKind::Rnn => &["h"],
            CellKind::Gru => &["z", "r", "h"],
            CellKind::Lstm => &["i", "f", "o", "g"],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CellKind::Rnn => "RNN",
            CellKind::Gru => "GRU",
            CellKind::Lstm => "LSTM",
        }
    }
}

/// One gate's parameters: input weights `w` (hidden x input), recurrent
/// weights `u` (hidden x hidden) and bias `b` (hidden).
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
}

impl Gate {
    fn zeros(input_dim: usize, hidden_dim: usize) -> Gate {
        Gate {
            w: Matrix::zeros(hidden_dim, input_dim),
            u: Matrix::zeros(hidden_dim, hidden_dim),
            b: vec![0.0; hidden_dim],
        }
    }

    fn glorot(input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Gate {
        let mut gate = Gate::zeros(input_dim, hidden_dim);
        let a_w = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        for v in gate.w.data_mut() {
            *v = rng.uniform(-a_w, a_w);
        }
        let a_u = (6.0 / (2 * hidden_dim) as f64).sqrt();
        for v in gate.u.data_mut() {
            *v = rng.uniform(-a_u, a_u);
        }
        gate
    }

    /// pre-activation = W x + U h + b
    fn preact(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut a = self.b.clone();
        self.w.matvec_add(x, &mut a);
        self.u.matvec_add(h, &mut a);
        a
    }
}

/// All parameter tensors of one recurrent cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub gates: Vec<Gate>,
}

// GRU gate order
pub(crate) const GRU_UPDATE: usize = 0;
pub(crate) const GRU_RESET: usize = 1;
pub(crate) const GRU_CAND: usize = 2;
// LSTM gate order
pub(crate) const LSTM_IN: usize = 0;
pub(crate) const LSTM_FORGET: usize = 1;
pub(crate) const LSTM_OUT: usize = 2;
pub(crate) const LSTM_CELL: usize = 3;

impl CellParams {
    pub fn zeros(kind: CellKind, input_dim: usize, hidden_dim: usize) -> CellParams {
        CellParams {
            kind,
            input_dim,
            hidden_dim,
            gates: (0..kind.gate_count())
                .map(|_| Gate::zeros(input_dim, hidden_dim))
                .collect(),
        }
    }

    /// Glorot-uniform weights, zero biases; the LSTM forget-gate bias
    /// starts at 1 so memory is initially carried.
    pub fn init(kind: CellKind, input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> CellParams {
        let mut cell = CellParams {
            kind,
            input_dim,
            hidden_dim,
            gates: (0..kind.gate_count())
                .map(|_| Gate::glorot(input_dim, hidden_dim, rng))
                .collect(),
        };
        if kind == CellKind::Lstm {
            for b in &mut cell.gates[LSTM_FORGET].b {
                *b = 1.0;
            }
        }
        cell
    }

    pub fn zeros_like(&self) -> CellParams {
        CellParams::zeros(self.kind, self.input_dim, self.hidden_dim)
    }

    fn check_shapes(&self, x: &[f64], h: &[f64]) -> Result<()> {
        if x.len() != self.input_dim || h.len() != self.hidden_dim {
            return Err(Error::Dimension(format!(
                "cell expects input {} / hidden {}, got {} / {}",
                self.input_dim,
                self.hidden_dim,
                x.len(),
                h.len()
            )));
        }
        Ok(())
    }
}

/// Everything the backward pass needs about one executed timestep.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gate values, indexed by the gate-order constants.
    pub gates: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

pub(crate) fn step_forward(p: &CellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
    match p.kind {
        CellKind::Rnn => {
            let mut a = p.gates[0].preact(x, h_prev);
            for v in &mut a {
                *v = v.tanh();
            }
            StepCache {
                h_prev: h_prev.to_vec(),
                c_prev: Vec::new(),
                gates: vec![a.clone()],
                h: a,
                c: Vec::new(),
                tanh_c: Vec::new(),
            }
        }
        CellKind::Gru => {
            let mut z = p.gates[GRU_UPDATE].preact(x, h_prev);
            let mut r = p.gates[GRU_RESET].preact(x, h_prev);
            for v in &mut z {
                *v = sigmoid(*v);
            }
            for v in &mut r {
                *v = sigmoid(*v);
            }
            let rh: Vec<f64> = r.iter().zip(h_prev).map(|(ri, hi)| ri * hi).collect();
            let mut cand = p.gates[GRU_CAND].b.clone();
            p.gates[GRU_CAND].w.matvec_add(x, &mut cand);
            p.gates[GRU_CAND].u.matvec_add(&rh, &mut cand);
            for v in &mut cand {
                *v = v.tanh();
            }
            let h: Vec<f64> = z
                .iter()
                .zip(&cand)
                .zip(h_prev)
                .map(|((zi, ci), hi)| (1.0 - zi) * hi + zi * ci)
                .collect();
            StepCache {
                h_prev: h_prev.to_vec(),
                c_prev: Vec::new(),
                gates: vec![z, r, cand],
                h,
                c: Vec::new(),
                tanh_c: Vec::new(),
            }
        }
        CellKind::Lstm => {
            let mut i = p.gates[LSTM_IN].preact(x, h_prev);
            let mut f = p.gates[LSTM_FORGET].preact(x, h_prev);
            let mut o = p.gates[LSTM_OUT].preact(x, h_prev);
            let mut g = p.gates[LSTM_CELL].preact(x, h_prev);
            for v in &mut i {
                *v = sigmoid(*v);
            }
            for v in &mut f {
                *v = sigmoid(*v);
            }
            for v in &mut o {
                *v = sigmoid(*v);
            }
            for v in &mut g {
                *v = v.tanh();
            }
            let c: Vec<f64> = f
                .iter()
                .zip(c_prev)
                .zip(i.iter().zip(&g))
                .map(|((fi, cp), (ii, gi))| fi * cp + ii * gi)
                .collect();
            let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
            let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(oi, tc)| oi * tc).collect();
            StepCache {
                h_prev: h_prev.to_vec(),
                c_prev: c_prev.to_vec(),
                gates: vec![i, f, o, g],
                h,
                c,
                tanh_c,
            }
        }
    }
}

/// Reverse one timestep. `dh`/`dc` are the loss gradients flowing into this
/// step's outputs; parameter gradients accumulate into `grads`, and the
/// gradients w.r.t. the previous state land in `dh_prev`/`dc_prev`. When
/// `dx` is given, the gradient w.r.t. the input vector is added to it.
#[allow(clippy::too_many_arguments)]
pub(crate) fn step_backward(
    p: &CellParams,
    cache: &StepCache,
    x: &[f64],
    dh: &[f64],
    dc: &[f64],
    grads: &mut CellParams,
    dh_prev: &mut Vec<f64>,
    dc_prev: &mut Vec<f64>,
    mut dx: Option<&mut [f64]>,
) {
    let n = p.hidden_dim;
    dh_prev.clear();
    dh_prev.resize(n, 0.0);

    let accumulate = |gate_idx: usize, da: &[f64], against: &[f64], grads: &mut CellParams, dh_prev: &mut [f64], dx: &mut Option<&mut [f64]>| {
        let g = &mut grads.gates[gate_idx];
        g.w.add_outer(da, x);
        g.u.add_outer(da, against);
        for (b, d) in g.b.iter_mut().zip(da) {
            *b += d;
        }
        // The GRU candidate's recurrent input is r (.) h_prev, so its U^T
        // contribution routes through drh instead of directly into dh_prev.
        if gate_idx != GRU_CAND || p.kind != CellKind::Gru {
            p.gates[gate_idx].u.tr_matvec_add(da, dh_prev);
        }
        if let Some(dx) = dx.as_deref_mut() {
            p.gates[gate_idx].w.tr_matvec_add(da, dx);
        }
    };

    match p.kind {
        CellKind::Rnn => {
            let h = &cache.h;
            let da: Vec<f64> = dh.iter().zip(h).map(|(d, hi)| d * (1.0 - hi * hi)).collect();
            accumulate(0, &da, &cache.h_prev, grads, dh_prev, &mut dx);
            dc_prev.clear();
        }
        CellKind::Gru => {
            let z = &cache.gates[GRU_UPDATE];
            let r = &cache.gates[GRU_RESET];
            let cand = &cache.gates[GRU_CAND];
            let h_prev = &cache.h_prev;

            let mut dz = vec![0.0; n];
            let mut dcand = vec![0.0; n];
            for k in 0..n {
                dz[k] = dh[k] * (cand[k] - h_prev[k]);
                dcand[k] = dh[k] * z[k];
                dh_prev[k] += dh[k] * (1.0 - z[k]);
            }

            let da_cand: Vec<f64> = dcand
                .iter()
                .zip(cand)
                .map(|(d, ci)| d * (1.0 - ci * ci))
                .collect();
            // candidate recurrent input was r (.) h_prev
            let rh: Vec<f64> = r.iter().zip(h_prev).map(|(ri, hi)| ri * hi).collect();
            accumulate(GRU_CAND, &da_cand, &rh, grads, dh_prev, &mut dx);

            let mut drh = vec![0.0; n];
            p.gates[GRU_CAND].u.tr_matvec_add(&da_cand, &mut drh);
            let mut dr = vec![0.0; n];
            for k in 0..n {
                dr[k] = drh[k] * h_prev[k];
                dh_prev[k] += drh[k] * r[k];
            }

            let da_z: Vec<f64> = dz.iter().zip(z).map(|(d, zi)| d * zi * (1.0 - zi)).collect();
            let da_r: Vec<f64> = dr.iter().zip(r).map(|(d, ri)| d * ri * (1.0 - ri)).collect();
            accumulate(GRU_UPDATE, &da_z, h_prev, grads, dh_prev, &mut dx);
            accumulate(GRU_RESET, &da_r, h_prev, grads, dh_prev, &mut dx);
            dc_prev.clear();
        }
        CellKind::Lstm => {
            let i = &cache.gates[LSTM_IN];
            let f = &cache.gates[LSTM_FORGET];
            let o = &cache.gates[LSTM_OUT];
            let g = &cache.gates[LSTM_CELL];
            let tc = &cache.tanh_c;

            let mut dct = vec![0.0; n];
            let mut dov = vec![0.0; n];
            for k in 0..n {
                dov[k] = dh[k] * tc[k];
                dct[k] = dc[k] + dh[k] * o[k] * (1.0 - tc[k] * tc[k]);
            }
            dc_prev.clear();
            dc_prev.resize(n, 0.0);
            let mut di = vec![0.0; n];
            let mut df = vec![0.0; n];
            let mut dg = vec![0.0; n];
            for k in 0..n {
                di[k] = dct[k] * g[k];
                dg[k] = dct[k] * i[k];
                df[k] = dct[k] * cache.c_prev[k];
                dc_prev[k] = dct[k] * f[k];
            }
            let da_i: Vec<f64> = di.iter().zip(i).map(|(d, v)| d * v * (1.0 - v)).collect();
            let da_f: Vec<f64> = df.iter().zip(f).map(|(d, v)| d * v * (1.0 - v)).collect();
            let da_o: Vec<f64> = dov.iter().zip(o).map(|(d, v)| d * v * (1.0 - v)).collect();
            let da_g: Vec<f64> = dg.iter().zip(g).map(|(d, v)| d * (1.0 - v * v)).collect();
            accumulate(LSTM_IN, &da_i, &cache.h_prev, grads, dh_prev, &mut dx);
            accumulate(LSTM_FORGET, &da_f, &cache.h_prev, grads, dh_prev, &mut dx);
            accumulate(LSTM_OUT, &da_o, &cache.h_prev, grads, dh_prev, &mut dx);
            accumulate(LSTM_CELL, &da_g, &cache.h_prev, grads, dh_prev, &mut dx);
        }
    }
}

/// `h' = tanh(Wx + Uh + b)`.
pub fn rnn_step(p: &CellParams, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if p.kind != CellKind::Rnn {
        return Err(Error::Dimension("rnn_step called on a non-RNN cell".into()));
    }
    p.check_shapes(x, h)?;
    Ok(step_forward(p, x, h, &[]).h)
}

/// Gated recurrent unit transition; the result is elementwise between the
/// previous state and the candidate.
pub fn gru_step(p: &CellParams, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if p.kind != CellKind::Gru {
        return Err(Error::Dimension("gru_step called on a non-GRU cell".into()));
    }
    p.check_shapes(x, h)?;
    Ok(step_forward(p, x, h, &[]).h)
}

/// LSTM transition over the (hidden, cell) state pair.
pub fn lstm_step(p: &CellParams, x: &[f64], state: (&[f64], &[f64])) -> Result<(Vec<f64>, Vec<f64>)> {
    if p.kind != CellKind::Lstm {
        return Err(Error::Dimension("lstm_step called on a non-LSTM cell".into()));
    }
    let (h, c) = state;
    p.check_shapes(x, h)?;
    if c.len() != p.hidden_dim {
        return Err(Error::Dimension(format!(
            "cell state width {} != hidden {}",
            c.len(),
            p.hidden_dim
        )));
    }
    let cache = step_forward(p, x, h, c);
    Ok((cache.h, cache.c))
}

/// Binary cross-entropy with the probability clamped into
/// `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

pub(crate) const BCE_CLAMP: f64 = 1e-7;
