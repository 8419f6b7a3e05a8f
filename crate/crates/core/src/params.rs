//! Named parameter stores and the binary checkpoint format.
//!
//! # Checkpoint layout
//!
//! All integers are little-endian.
//!
//! ```text
//! magic     8 bytes   "SAFERCKP"
//! version   u32       1
//! count     u32       number of parameters
//! count × { name_len u32, name (UTF-8, name_len bytes), ndim u32, dims u64 × ndim }
//! count × { product(dims) × f64, row-major }
//! ```
//!
//! Payloads follow the header in the same order as the header entries.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SAFERCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// How an optimiser should treat a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Euclidean,
    /// Rows are points on a Poincaré ball whose curvature is `softplus(κ) + 1e-4`,
    /// with `κ` stored in the parameter at the given index.
    Ball { curvature: usize },
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    kinds: Vec<ParamKind>,
    frozen_rows: BTreeMap<usize, Vec<usize>>,
    no_decay: Vec<usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        self.add_kind(name, tensor, ParamKind::Euclidean)
    }

    pub fn add_kind(&mut self, name: impl Into<String>, mut tensor: Tensor, kind: ParamKind) -> usize {
        let name = name.into();
        assert!(self.index(&name).is_none(), "duplicate parameter {name}");
        tensor.requires_grad = true;
        self.names.push(name);
        self.tensors.push(tensor);
        self.kinds.push(kind);
        self.tensors.len() - 1
    }

    /// Glorot-uniform `rows × cols` weight.
    pub fn add_glorot(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut Rng) -> usize {
        self.add(name, glorot(rows, cols, rng))
    }

    /// Rows listed here keep a zero gradient (e.g. a padding embedding).
    pub fn freeze_rows(&mut self, idx: usize, rows: Vec<usize>) {
        self.frozen_rows.insert(idx, rows);
    }

    /// True when every row of the parameter is frozen.
    pub fn is_frozen(&self, idx: usize) -> bool {
        self.frozen_rows
            .get(&idx)
            .is_some_and(|rows| (0..self.tensors[idx].rows()).all(|r| rows.contains(&r)))
    }

    /// Excludes a parameter from decoupled weight decay.
    pub fn exclude_from_decay(&mut self, idx: usize) {
        if !self.no_decay.contains(&idx) {
            self.no_decay.push(idx);
        }
    }

    pub fn decays(&self, idx: usize) -> bool {
        !self.no_decay.contains(&idx) && self.kinds[idx] == ParamKind::Euclidean
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kind(&self, idx: usize) -> ParamKind {
        self.kinds[idx]
    }

    pub fn get(&self, idx: usize) -> &Tensor {
        &self.tensors[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.tensors[idx]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.index(name).map(|i| &self.tensors[i])
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Registers every parameter as a gradient-tracking leaf on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.tensors.iter().map(|t| tape.leaf(t.clone(), true)).collect()
    }

    /// Like [`ParamStore::bind`] but with gradients disabled (evaluation).
    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.tensors.iter().map(|t| tape.constant(t.clone())).collect()
    }

    /// Copies gradients from a backward pass into each tensor's `grad`.
    pub fn absorb(&mut self, grads: &Gradients, bound: &[Var<'_>]) -> Result<()> {
        for (i, var) in bound.iter().enumerate() {
            let mut g = grads.get_or_zeros(*var);
            if let Some(rows) = self.frozen_rows.get(&i) {
                let cols = self.tensors[i].cols();
                for &r in rows {
                    g[r * cols..(r + 1) * cols].iter_mut().for_each(|v| *v = 0.0);
                }
            }
            self.tensors[i].set_grad(g)?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Scales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let total: f64 = self
            .tensors
            .iter()
            .filter_map(Tensor::grad)
            .flat_map(|g| g.iter().map(|v| v * v))
            .sum::<f64>()
            .sqrt();
        if total > max_norm && total.is_finite() {
            let scale = max_norm / total;
            for t in &mut self.tensors {
                if let Some(g) = t.grad() {
                    let scaled = g.iter().map(|v| v * scale).collect();
                    t.set_grad(scaled).expect("same length");
                }
            }
        }
        total
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let io = |e| Error::io("<checkpoint>", e);
        w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.len() as u32).to_le_bytes()).map_err(io)?;
        for (name, t) in self.names.iter().zip(&self.tensors) {
            w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io)?;
            w.write_all(name.as_bytes()).map_err(io)?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes()).map_err(io)?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
            }
        }
        for t in &self.tensors {
            for v in t.data() {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        Ok(())
    }

    /// Reads a checkpoint into a fresh store (all parameters Euclidean).
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut bytes.as_slice()).map_err(|e| match e {
            Error::Validation(m) => Error::Load {
                path: path.to_path_buf(),
                line: 0,
                message: m,
            },
            other => other,
        })
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |m: &str| Error::Validation(format!("malformed checkpoint: {m}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("wrong magic"));
        }
        let version = read_u32(r).ok_or_else(|| bad("truncated version"))?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let count = read_u32(r).ok_or_else(|| bad("truncated count"))? as usize;
        let mut header = Vec::with_capacity(count);
        for _ in 0..count {
            let len = read_u32(r).ok_or_else(|| bad("truncated name length"))? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name).map_err(|_| bad("truncated name"))?;
            let name = String::from_utf8(name).map_err(|_| bad("name is not UTF-8"))?;
            let ndim = read_u32(r).ok_or_else(|| bad("truncated rank"))? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                let mut b = [0u8; 8];
                r.read_exact(&mut b).map_err(|_| bad("truncated dims"))?;
                dims.push(u64::from_le_bytes(b) as usize);
            }
            header.push((name, dims));
        }
        let mut store = ParamStore::new();
        for (name, dims) in header {
            let n: usize = dims.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 8];
                r.read_exact(&mut b).map_err(|_| bad("truncated payload"))?;
                data.push(f64::from_le_bytes(b));
            }
            let t = Tensor::new(dims, data).map_err(|e| bad(&e.to_string()))?;
            store.add(name, t);
        }
        Ok(store)
    }

    /// Overwrites values of same-named parameters from `other`.
    pub fn load_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for i in 0..self.len() {
            let src = other
                .by_name(&self.names[i])
                .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter {}", self.names[i])))?;
            if src.shape() != self.tensors[i].shape() {
                return Err(Error::dim("checkpoint", self.tensors[i].shape(), src.shape()));
            }
            self.tensors[i].data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}

fn read_u32(r: &mut impl Read) -> Option<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).ok()?;
    Some(u32::from_le_bytes(b))
}

pub fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::matrix(rows, cols, data).expect("positive dims")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut rng = crate::rng::seeded(3);
        let mut store = ParamStore::new();
        store.add_glorot("layer0.weight", 3, 4, &mut rng);
        store.add("bias", Tensor::row(vec![f64::MIN_POSITIVE, -0.0, 1e300]));
        let mut buf = Vec::new();
        store.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], CHECKPOINT_MAGIC);
        let back = ParamStore::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.names(), store.names());
        for (a, b) in back.tensors().iter().zip(store.tensors()) {
            assert_eq!(a.shape(), b.shape());
            let ab: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::eye(2));
        let mut buf = Vec::new();
        store.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(ParamStore::read_from(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::zeros(1, 2));
        let b = store.add("b", Tensor::zeros(1, 1));
        store.get_mut(a).set_grad(vec![3.0, 0.0]).unwrap();
        store.get_mut(b).set_grad(vec![4.0]).unwrap();
        let before = store.clip_grad_norm(1.0);
        assert!((before - 5.0).abs() < 1e-12);
        let g: Vec<f64> = store.get(a).grad().unwrap().iter().chain(store.get(b).grad().unwrap()).copied().collect();
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }
}
