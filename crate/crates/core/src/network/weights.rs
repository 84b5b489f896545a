//! Named weight storage and its binary file format.
//!
//! File layout: magic `AMTW`, version u32, tensor count u32, then for each
//! tensor a u16 name length, the UTF-8 name, a u8 rank, u32 dimensions, and
//! the f32 little-endian values. Tensors are stored sorted by name, so a
//! weight set always serializes to identical bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binio;

use super::NetworkError;

const MAGIC: &[u8; 4] = b"AMTW";
const VERSION: u32 = 1;

/// One named parameter block: dimensions plus row-major f32 data.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl WeightTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, NetworkError> {
        let want: usize = dims.iter().product();
        if data.len() != want {
            return Err(NetworkError::Weights(format!(
                "tensor data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn filled(dims: Vec<usize>, value: f32) -> Self {
        let len = dims.iter().product();
        Self { dims, data: vec![value; len] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// How a declared tensor participates in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    /// Learned convolution / linear kernel; randomized by `random`.
    Kernel,
    /// Learned additive parameter; zero-initialized by `random`.
    Bias,
    /// Learned normalization scale; one-initialized by `random`.
    Gamma,
    /// Learned normalization shift; zero-initialized by `random`.
    Beta,
    /// Stored running mean (not a learned parameter).
    RunningMean,
    /// Stored running variance (not a learned parameter).
    RunningVar,
}

impl TensorRole {
    pub fn trainable(self) -> bool {
        !matches!(self, TensorRole::RunningMean | TensorRole::RunningVar)
    }
}

/// Declared name, shape, and role of one tensor in a model layout.
#[derive(Debug, Clone)]
pub struct TensorDecl {
    pub name: String,
    pub dims: Vec<usize>,
    pub role: TensorRole,
}

impl TensorDecl {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, role: TensorRole) -> Self {
        Self { name: name.into(), dims, role }
    }
}

/// A complete set of model weights, keyed by tensor name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelWeights {
    tensors: BTreeMap<String, WeightTensor>,
}

impl ModelWeights {
    pub fn get(&self, name: &str) -> Result<&WeightTensor, NetworkError> {
        self.tensors
            .get(name)
            .ok_or_else(|| NetworkError::Weights(format!("missing tensor {name:?}")))
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: WeightTensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn remove(&mut self, name: &str) -> Option<WeightTensor> {
        self.tensors.remove(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &WeightTensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Keeps only tensors whose name passes `keep` (used to carve a smaller
    /// model's weights out of a larger one's).
    pub fn filtered(&self, keep: impl Fn(&str) -> bool) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .filter(|(name, _)| keep(name))
                .map(|(name, t)| (name.clone(), t.clone()))
                .collect(),
        }
    }

    /// Every declared tensor present with the declared shape, and nothing
    /// extra.
    pub fn validate_decls(&self, decls: &[TensorDecl]) -> Result<(), NetworkError> {
        for d in decls {
            let t = self.get(&d.name)?;
            if t.dims != d.dims {
                return Err(NetworkError::Weights(format!(
                    "tensor {:?} has dims {:?}, expected {:?}",
                    d.name, t.dims, d.dims
                )));
            }
        }
        if self.tensors.len() != decls.len() {
            let declared: std::collections::BTreeSet<&str> =
                decls.iter().map(|d| d.name.as_str()).collect();
            let extra: Vec<&str> =
                self.names().filter(|n| !declared.contains(n)).collect();
            return Err(NetworkError::Weights(format!("unexpected tensors: {extra:?}")));
        }
        Ok(())
    }

    /// All-zero weights (running variances set to one so normalization stays
    /// finite).
    pub fn zeros_from_decls(decls: &[TensorDecl]) -> Self {
        let mut w = Self::default();
        for d in decls {
            let fill = if d.role == TensorRole::RunningVar { 1.0 } else { 0.0 };
            w.insert(d.name.clone(), WeightTensor::filled(d.dims.clone(), fill));
        }
        w
    }

    /// Reproducible random initialization: kernels are uniform with a
    /// fan-balanced scale, biases and shifts zero, scales one, running
    /// statistics at mean zero / variance one.
    pub fn random_from_decls(decls: &[TensorDecl], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Self::default();
        for d in decls {
            let t = match d.role {
                TensorRole::Kernel => {
                    let (fan_in, fan_out) = kernel_fans(&d.dims);
                    let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let data = (0..d.dims.iter().product::<usize>())
                        .map(|_| rng.gen_range(-scale..scale) as f32)
                        .collect();
                    WeightTensor { dims: d.dims.clone(), data }
                }
                TensorRole::Bias | TensorRole::Beta | TensorRole::RunningMean => {
                    WeightTensor::filled(d.dims.clone(), 0.0)
                }
                TensorRole::Gamma | TensorRole::RunningVar => {
                    WeightTensor::filled(d.dims.clone(), 1.0)
                }
            };
            w.insert(d.name.clone(), t);
        }
        w
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        binio::write_u32(w, VERSION)?;
        binio::write_u32(w, self.tensors.len() as u32)?;
        for (name, t) in &self.tensors {
            binio::write_u16(w, name.len() as u16)?;
            w.write_all(name.as_bytes())?;
            binio::write_u8(w, t.dims.len() as u8)?;
            for &d in &t.dims {
                binio::write_u32(w, d as u32)?;
            }
            for &v in &t.data {
                binio::write_f32(w, v)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self, NetworkError> {
        let truncated = |e: std::io::Error| NetworkError::Format(format!("truncated file: {e}"));
        let r = &mut bytes;
        let magic = binio::read_magic(r).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(NetworkError::Format(format!("bad magic {magic:?}, want {MAGIC:?}")));
        }
        let version = binio::read_u32(r).map_err(truncated)?;
        if version != VERSION {
            return Err(NetworkError::Format(format!("unsupported version {version}")));
        }
        let count = binio::read_u32(r).map_err(truncated)?;
        let mut w = Self::default();
        for _ in 0..count {
            let name_len = binio::read_u16(r).map_err(truncated)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes).map_err(truncated)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| NetworkError::Format("tensor name is not UTF-8".into()))?;
            let rank = binio::read_u8(r).map_err(truncated)? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(binio::read_u32(r).map_err(truncated)? as usize);
            }
            let len: usize = dims.iter().product();
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                data.push(binio::read_f32(r).map_err(truncated)?);
            }
            if w.tensors.insert(name.clone(), WeightTensor { dims, data }).is_some() {
                return Err(NetworkError::Format(format!("duplicate tensor {name:?}")));
            }
        }
        Ok(w)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetworkError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetworkError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn kernel_fans(dims: &[usize]) -> (usize, usize) {
    match dims.len() {
        // [out, in, kv, kt] convolution
        4 => (dims[1] * dims[2] * dims[3], dims[0] * dims[2] * dims[3]),
        // [out, in] linear layer
        2 => (dims[1], dims[0]),
        _ => {
            let n: usize = dims.iter().product();
            (n, n)
        }
    }
}
