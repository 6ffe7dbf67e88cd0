//! Named parameter storage with gradients, AdamW moments, and non-trainable
//! buffers (batch-norm running statistics). Checkpoints are JSON: `f64`
//! values survive a serialize/parse round trip bit-exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::matrix::Matrix;
use crate::tape::Gradients;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferId(pub(crate) usize);

#[derive(Debug, Clone)]
struct Param {
    name: String,
    value: Matrix,
    grad: Matrix,
    m: Matrix,
    v: Matrix,
}

#[derive(Debug, Clone)]
struct Buffer {
    name: String,
    value: Matrix,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    buffers: Vec<Buffer>,
    by_name: BTreeMap<String, usize>,
    buffer_by_name: BTreeMap<String, usize>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_param(&mut self, name: &str, value: Matrix) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(NnError::DuplicateParam(name.to_string()));
        }
        let id = self.params.len();
        let (r, c) = value.shape();
        self.params.push(Param {
            name: name.to_string(),
            grad: Matrix::zeros(r, c),
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
            value,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn add_buffer(&mut self, name: &str, value: Matrix) -> Result<BufferId> {
        if self.buffer_by_name.contains_key(name) {
            return Err(NnError::DuplicateParam(name.to_string()));
        }
        let id = self.buffers.len();
        self.buffers.push(Buffer {
            name: name.to_string(),
            value,
        });
        self.buffer_by_name.insert(name.to_string(), id);
        Ok(BufferId(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].grad
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn buffer(&self, id: BufferId) -> &Matrix {
        &self.buffers[id.0].value
    }

    pub fn buffer_mut(&mut self, id: BufferId) -> &mut Matrix {
        &mut self.buffers[id.0].value
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Accumulate a gradient set produced by [`crate::tape::Tape::backward`].
    pub fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        for (id, g) in grads.iter() {
            self.params[id.0].grad.add_assign(g)?;
        }
        Ok(())
    }

    /// One AdamW update over every parameter from the accumulated gradients.
    /// Decoupled weight decay, bias-corrected moments.
    pub fn adamw_step(&mut self, cfg: &crate::optim::AdamWConfig, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for p in &mut self.params {
            let grads = p.grad.data();
            let ms = p.m.data_mut();
            let vs = p.v.data_mut();
            let vals = p.value.data_mut();
            for i in 0..vals.len() {
                let g = grads[i];
                ms[i] = cfg.beta1 * ms[i] + (1.0 - cfg.beta1) * g;
                vs[i] = cfg.beta2 * vs[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = ms[i] / bc1;
                let v_hat = vs[i] / bc2;
                vals[i] -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * vals[i]);
            }
        }
    }

    pub fn save_checkpoint(&self) -> CheckpointFile {
        CheckpointFile {
            version: CHECKPOINT_VERSION,
            step: self.step,
            params: self
                .params
                .iter()
                .map(|p| NamedMatrix {
                    name: p.name.clone(),
                    value: p.value.clone(),
                })
                .collect(),
            buffers: self
                .buffers
                .iter()
                .map(|b| NamedMatrix {
                    name: b.name.clone(),
                    value: b.value.clone(),
                })
                .collect(),
        }
    }

    /// Load values into a store that already has the full parameter layout
    /// (built from the model config). Names and shapes must match exactly.
    pub fn load_checkpoint(&mut self, file: &CheckpointFile) -> Result<()> {
        if file.version != CHECKPOINT_VERSION {
            return Err(NnError::CheckpointVersion {
                found: file.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        if file.params.len() != self.params.len() {
            return Err(NnError::Checkpoint(format!(
                "parameter count mismatch: checkpoint has {}, model has {}",
                file.params.len(),
                self.params.len()
            )));
        }
        for nm in &file.params {
            let id = self.id(&nm.name)?;
            if self.params[id.0].value.shape() != nm.value.shape() {
                return Err(NnError::Checkpoint(format!(
                    "shape mismatch for `{}`",
                    nm.name
                )));
            }
            self.params[id.0].value = nm.value.clone();
        }
        for nm in &file.buffers {
            let id = self
                .buffer_by_name
                .get(&nm.name)
                .copied()
                .ok_or_else(|| NnError::UnknownParam(nm.name.clone()))?;
            self.buffers[id].value = nm.value.clone();
        }
        self.step = file.step;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedMatrix {
    pub name: String,
    pub value: Matrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub version: u32,
    pub step: u64,
    pub params: Vec<NamedMatrix>,
    pub buffers: Vec<NamedMatrix>,
}

impl CheckpointFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| NnError::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut store = ParamStore::new();
        store
            .add_param(
                "w",
                Matrix::from_vec(2, 2, vec![0.1, -0.2, 1.0 / 3.0, 4e-17]).unwrap(),
            )
            .unwrap();
        store
            .add_buffer("running", Matrix::row_vector(vec![0.5, -0.0]))
            .unwrap();
        let json = store.save_checkpoint().to_json();
        let parsed = CheckpointFile::from_json(&json).unwrap();
        let mut other = ParamStore::new();
        other.add_param("w", Matrix::zeros(2, 2)).unwrap();
        other
            .add_buffer("running", Matrix::zeros(1, 2))
            .unwrap();
        other.load_checkpoint(&parsed).unwrap();
        let a = store.value(store.id("w").unwrap()).data().to_vec();
        let b = other.value(other.id("w").unwrap()).data().to_vec();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn version_mismatch_is_an_error() {
        let mut store = ParamStore::new();
        store.add_param("w", Matrix::zeros(1, 1)).unwrap();
        let mut file = store.save_checkpoint();
        file.version = 99;
        assert!(matches!(
            store.load_checkpoint(&file),
            Err(NnError::CheckpointVersion { .. })
        ));
    }
}
