//! Layers as parameter bundles that build tape subgraphs.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::error::Result;
use crate::matrix::Matrix;
use crate::param::{BufferId, ParamId, ParamStore};
use crate::tape::{Tape, Var};

/// Deterministic per-call seed stream for dropout during training.
/// Seeds are derived with a splitmix step so two calls never collide.
#[derive(Debug, Clone)]
pub struct TrainCtx {
    state: u64,
}

impl TrainCtx {
    pub fn new(seed: u64) -> Self {
        TrainCtx { state: seed }
    }

    pub fn next_seed(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
}

/// Dropout that is the identity in eval mode (`ctx` absent).
pub fn dropout(tape: &mut Tape, x: Var, p: f64, ctx: Option<&mut TrainCtx>) -> Var {
    match ctx {
        Some(ctx) if p > 0.0 => {
            let seed = ctx.next_seed();
            tape.dropout(x, p, seed)
        }
        _ => x,
    }
}

pub fn xavier_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized data")
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = store.add_param(&format!("{name}.w"), xavier_uniform(in_dim, out_dim, rng))?;
        let b = store.add_param(&format!("{name}.b"), Matrix::zeros(1, out_dim))?;
        Ok(Linear {
            w,
            b,
            in_dim,
            out_dim,
        })
    }

    /// y = x W + b
    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let xw = tape.matmul(x, w)?;
        tape.add_row(xw, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        let gain = store.add_param(&format!("{name}.gain"), Matrix::filled(1, dim, 1.0))?;
        let bias = store.add_param(&format!("{name}.bias"), Matrix::zeros(1, dim))?;
        Ok(LayerNorm {
            gain,
            bias,
            eps: 1e-5,
        })
    }

    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let gain = tape.param(store, self.gain);
        let bias = tape.param(store, self.bias);
        tape.layer_norm(x, gain, bias, self.eps)
    }
}

/// Multi-head scaled dot-product attention with learned Q/K/V/O projections.
/// Queries may come from a different input dimension than keys/values
/// (cross-modal use); both are projected into `model_dim`.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    pub model_dim: usize,
}

/// Attention output plus the per-head weight matrices (query x key), exposed
/// for interpretability reporting.
pub struct AttentionOutput {
    pub output: Var,
    pub weights: Vec<Var>,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        query_dim: usize,
        key_dim: usize,
        model_dim: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if model_dim % heads != 0 {
            return Err(crate::error::NnError::IndivisibleHeads {
                dim: model_dim,
                heads,
            });
        }
        Ok(MultiHeadAttention {
            wq: Linear::new(store, &format!("{name}.wq"), query_dim, model_dim, rng)?,
            wk: Linear::new(store, &format!("{name}.wk"), key_dim, model_dim, rng)?,
            wv: Linear::new(store, &format!("{name}.wv"), key_dim, model_dim, rng)?,
            wo: Linear::new(store, &format!("{name}.wo"), model_dim, model_dim, rng)?,
            heads,
            model_dim,
        })
    }

    pub fn apply(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        query_in: Var,
        key_in: Var,
    ) -> Result<AttentionOutput> {
        let q = self.wq.apply(tape, store, query_in)?;
        let k = self.wk.apply(tape, store, key_in)?;
        let v = self.wv.apply(tape, store, key_in)?;
        let dk = self.model_dim / self.heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let mut contexts = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_cols(q, h * dk, dk)?;
            let kh = tape.slice_cols(k, h * dk, dk)?;
            let vh = tape.slice_cols(v, h * dk, dk)?;
            let kht = tape.transpose(kh);
            let scores = tape.matmul(qh, kht)?;
            let scaled = tape.scale(scores, scale);
            let attn = tape.softmax_rows(scaled);
            let ctx = tape.matmul(attn, vh)?;
            weights.push(attn);
            contexts.push(ctx);
        }
        let merged = tape.concat_cols(&contexts)?;
        let output = self.wo.apply(tape, store, merged)?;
        Ok(AttentionOutput { output, weights })
    }
}

/// Batch normalization over the row (batch) dimension with running statistics.
/// Training mode requires at least two rows; eval mode is a pure affine map
/// built from the stored running statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub gain: ParamId,
    pub bias: ParamId,
    pub running_mean: BufferId,
    pub running_var: BufferId,
    pub momentum: f64,
    pub eps: f64,
    pub dim: usize,
}

impl BatchNorm1d {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        let gain = store.add_param(&format!("{name}.gain"), Matrix::filled(1, dim, 1.0))?;
        let bias = store.add_param(&format!("{name}.bias"), Matrix::zeros(1, dim))?;
        let running_mean = store.add_buffer(&format!("{name}.running_mean"), Matrix::zeros(1, dim))?;
        let running_var =
            store.add_buffer(&format!("{name}.running_var"), Matrix::filled(1, dim, 1.0))?;
        Ok(BatchNorm1d {
            gain,
            bias,
            running_mean,
            running_var,
            momentum: 0.1,
            eps: 1e-5,
            dim,
        })
    }

    pub fn apply_train(
        &self,
        tape: &mut Tape,
        store: &mut ParamStore,
        x: Var,
        update_running: bool,
    ) -> Result<Var> {
        let gain = tape.param(store, self.gain);
        let bias = tape.param(store, self.bias);
        tape.batch_norm_train(
            x,
            gain,
            bias,
            store,
            self.running_mean,
            self.running_var,
            self.momentum,
            self.eps,
            update_running,
        )
    }

    pub fn apply_eval(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let mean = store.buffer(self.running_mean);
        let var = store.buffer(self.running_var);
        let inv: Vec<f64> = var
            .data()
            .iter()
            .map(|&v| 1.0 / (v + self.eps).sqrt())
            .collect();
        let neg_mu_inv: Vec<f64> = mean
            .data()
            .iter()
            .zip(inv.iter())
            .map(|(&m, &i)| -m * i)
            .collect();
        let c_inv = tape.constant(Matrix::row_vector(inv));
        let c_shift = tape.constant(Matrix::row_vector(neg_mu_inv));
        let gain = tape.param(store, self.gain);
        let bias = tape.param(store, self.bias);
        // y = (x - mu)/sigma * gain + bias, built from broadcasts
        let xi = tape.mul_row(x, c_inv)?;
        let xg = tape.mul_row(xi, gain)?;
        let shift_g = tape.hadamard(c_shift, gain)?;
        let with_bias = tape.add_row(xg, bias)?;
        tape.add_row(with_bias, shift_g)
    }
}
