//! Named, shaped parameter tensors and their initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Which optimizer phase owns a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    /// Speech/pose encoders, attention blocks and the pose generator.
    Autoencoder,
    Discriminator,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    FanIn(usize),
    Uniform(f64),
    /// Recurrent kernel `[hidden × 4·hidden]`: each gate block is orthogonal.
    OrthogonalGates,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
    pub group: Group,
}

/// Collects parameter declarations while a model is being assembled.
#[derive(Debug, Default)]
pub struct LayoutBuilder {
    specs: Vec<ParamSpec>,
}

impl LayoutBuilder {
    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, init: Init) -> ParamId {
        let name = name.into();
        let group =
            if name.starts_with("disc.") { Group::Discriminator } else { Group::Autoencoder };
        self.specs.push(ParamSpec { name, rows, cols, init, group });
        ParamId(self.specs.len() - 1)
    }

    pub fn finish(self) -> Vec<ParamSpec> {
        self.specs
    }
}

/// Parameter values in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    specs: Vec<ParamSpec>,
    values: Vec<Matrix>,
}

impl ParamStore {
    /// Initializes every tensor from `seed`. Values are rounded to `f32` so a
    /// checkpoint stores them exactly.
    pub fn init(specs: &[ParamSpec], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = specs
            .iter()
            .map(|spec| {
                let mut m = match spec.init {
                    Init::FanIn(fan_in) => {
                        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                        uniform(&mut rng, spec.rows, spec.cols, bound)
                    }
                    Init::Uniform(bound) => uniform(&mut rng, spec.rows, spec.cols, bound),
                    Init::OrthogonalGates => orthogonal_gates(&mut rng, spec.rows, spec.cols),
                    Init::Zeros => Matrix::zeros(spec.rows, spec.cols),
                    Init::Ones => Matrix::filled(spec.rows, spec.cols, 1.0),
                };
                m.round_to_f32();
                m
            })
            .collect();
        Self { specs: specs.to_vec(), values }
    }

    /// Builds a store from explicit values; shapes must match the layout.
    pub fn from_values(specs: &[ParamSpec], values: Vec<Matrix>) -> Result<Self> {
        if specs.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameter specs but {} tensors",
                specs.len(),
                values.len()
            )));
        }
        for (s, v) in specs.iter().zip(&values) {
            if v.shape() != (s.rows, s.cols) {
                return Err(Error::DimensionMismatch(format!(
                    "parameter {} expects {}x{}, got {:?}",
                    s.name,
                    s.rows,
                    s.cols,
                    v.shape()
                )));
            }
        }
        Ok(Self { specs: specs.to_vec(), values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn spec(&self, id: ParamId) -> &ParamSpec {
        &self.specs[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.specs.iter().position(|s| s.name == name).map(ParamId)
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(Matrix::is_finite)
    }

    /// SHA-256 over names, shapes and raw value bits.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (s, v) in self.specs.iter().zip(&self.values) {
            h.update(s.name.as_bytes());
            h.update((s.rows as u64).to_le_bytes());
            h.update((s.cols as u64).to_le_bytes());
            for x in v.as_slice() {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound))
}

fn orthogonal_gates(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let hidden = rows;
    let gates = cols / hidden.max(1);
    let mut out = Matrix::zeros(rows, cols);
    for g in 0..gates {
        let q = random_orthogonal(rng, hidden);
        for r in 0..hidden {
            for c in 0..hidden {
                out.set(r, g * hidden + c, q.get(r, c));
            }
        }
    }
    out
}

/// Modified Gram-Schmidt on a Gaussian matrix.
fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let mut cols: Vec<Vec<f64>> =
        (0..n).map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
    for i in 0..n {
        for j in 0..i {
            let (done, rest) = cols.split_at_mut(i);
            let proj: f64 = done[j].iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
            for (x, q) in rest[0].iter_mut().zip(&done[j]) {
                *x -= proj * q;
            }
        }
        let norm = cols[i].iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for x in &mut cols[i] {
            *x /= norm;
        }
    }
    Matrix::from_fn(n, n, |r, c| cols[c][r])
}
