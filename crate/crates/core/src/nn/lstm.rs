use rand::Rng;

use super::array::{axpy, dot};
use super::params::{join, Parameters};
use super::{sigmoid, Array, Linear};
use crate::error::{Error, Result};

/// LSTM cell weights. Gate rows are stacked in the order input, forget,
/// candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `[4H, D]`
    pub w_input: Array,
    /// `[4H, H]`
    pub w_hidden: Array,
    /// `[4H]`
    pub bias: Array,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Everything one step needs for its reverse pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    input: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_input: Array::zeros(&[4 * hidden, input]),
            w_hidden: Array::zeros(&[4 * hidden, hidden]),
            bias: Array::zeros(&[4 * hidden]),
        }
    }

    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w_input: Linear::glorot(input, 4 * hidden, rng).weight,
            w_hidden: Linear::glorot(hidden, 4 * hidden, rng).weight,
            bias: Array::zeros(&[4 * hidden]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.cols()
    }

    fn check(&self, state: &LstmState, input: &[f64]) -> Result<()> {
        let hd = self.hidden_dim();
        if self.w_input.rows() != 4 * hd || self.w_hidden.rows() != 4 * hd || self.bias.len() != 4 * hd {
            return Err(Error::Shape("inconsistent LSTM gate matrices".into()));
        }
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        if state.h.len() != hd || state.c.len() != hd {
            return Err(Error::DimensionMismatch {
                expected: hd,
                actual: state.h.len().max(state.c.len()),
            });
        }
        Ok(())
    }

    /// One cell update. Returns the new hidden output, the new state and the
    /// cache for [`LstmParams::backward_into`].
    pub fn step(&self, state: &LstmState, input: &[f64]) -> Result<(Vec<f64>, LstmState, LstmCache)> {
        self.check(state, input)?;
        let hd = self.hidden_dim();
        let pre: Vec<f64> = (0..4 * hd)
            .map(|r| self.bias.data()[r] + dot(self.w_input.row(r), input) + dot(self.w_hidden.row(r), &state.h))
            .collect();
        let i: Vec<f64> = pre[..hd].iter().map(|&z| sigmoid(z)).collect();
        let f: Vec<f64> = pre[hd..2 * hd].iter().map(|&z| sigmoid(z)).collect();
        let g: Vec<f64> = pre[2 * hd..3 * hd].iter().map(|z| z.tanh()).collect();
        let o: Vec<f64> = pre[3 * hd..].iter().map(|&z| sigmoid(z)).collect();
        let c: Vec<f64> = (0..hd).map(|k| f[k] * state.c[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
        let cache = LstmCache {
            input: input.to_vec(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            i,
            f,
            g,
            o,
            tanh_c,
        };
        Ok((h.clone(), LstmState { h, c }, cache))
    }

    /// Reverse pass of one step given gradients w.r.t. the step's `h` and `c`
    /// outputs. Returns `(d_input, d_h_prev, d_c_prev)`.
    pub fn backward_into(
        &self,
        cache: &LstmCache,
        dh: &[f64],
        dc: &[f64],
        grads: &mut LstmParams,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let hd = self.hidden_dim();
        if dh.len() != hd || dc.len() != hd || cache.i.len() != hd || cache.input.len() != self.input_dim() {
            return Err(Error::Shape("stale LSTM cache or gradient".into()));
        }
        let mut dpre = vec![0.0; 4 * hd];
        let mut dc_prev = vec![0.0; hd];
        for k in 0..hd {
            let do_ = dh[k] * cache.tanh_c[k];
            let dct = dc[k] + dh[k] * cache.o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
            let di = dct * cache.g[k];
            let dg = dct * cache.i[k];
            let df = dct * cache.c_prev[k];
            dc_prev[k] = dct * cache.f[k];
            dpre[k] = di * cache.i[k] * (1.0 - cache.i[k]);
            dpre[hd + k] = df * cache.f[k] * (1.0 - cache.f[k]);
            dpre[2 * hd + k] = dg * (1.0 - cache.g[k] * cache.g[k]);
            dpre[3 * hd + k] = do_ * cache.o[k] * (1.0 - cache.o[k]);
        }
        let mut dx = vec![0.0; self.input_dim()];
        let mut dh_prev = vec![0.0; hd];
        for (r, &d) in dpre.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            axpy(d, self.w_input.row(r), &mut dx);
            axpy(d, self.w_hidden.row(r), &mut dh_prev);
            axpy(d, &cache.input, grads.w_input.row_mut(r));
            axpy(d, &cache.h_prev, grads.w_hidden.row_mut(r));
            grads.bias.data_mut()[r] += d;
        }
        Ok((dx, dh_prev, dc_prev))
    }
}

impl Parameters for LstmParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Array)) {
        f(&join(prefix, "w_input"), &self.w_input);
        f(&join(prefix, "w_hidden"), &self.w_hidden);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Array)) {
        f(&join(prefix, "w_input"), &mut self.w_input);
        f(&join(prefix, "w_hidden"), &mut self.w_hidden);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
