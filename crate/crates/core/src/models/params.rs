use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Anything holding trainable tensors. Gradients are stored in a value of
/// the same type, so optimizers and checks can walk both in lockstep.
pub trait Parameterized {
    /// Visits every tensor as a flat slice, in a fixed order.
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64]));

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |_, t| out.extend_from_slice(t));
        out
    }

    /// Overwrites all tensors from a flat vector produced by [`to_flat`](Self::to_flat).
    fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.visit_mut(&mut |_, t| {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        });
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut(&mut |_, t| t.fill(value));
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, t| ok &= t.iter().all(|x| x.is_finite()));
        ok
    }

    /// SHA-256 over the names and exact bit patterns of every tensor.
    fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        self.visit(&mut |name, t| {
            h.update(name.as_bytes());
            for x in t {
                h.update(x.to_bits().to_le_bytes());
            }
        });
        hex::encode(h.finalize())
    }
}

pub(crate) fn slice_of<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
    a.as_slice().expect("parameters are contiguous")
}

pub(crate) fn slice_of_mut<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are contiguous")
}

/// `[-bound, bound]` uniform with `bound = 1 / sqrt(fan_in)`.
pub(crate) fn uniform_init<R: Rng>(rng: &mut R, shape: (usize, usize), fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_fn(shape, |_| rng.gen_range(-bound..=bound))
}

pub(crate) fn uniform_init_vec<R: Rng>(rng: &mut R, len: usize, fan_in: usize) -> Array1<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array1::from_shape_fn(len, |_| rng.gen_range(-bound..=bound))
}

/// Fully connected layer `y = x W^T + b`, with `W` of shape `(out, in)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn new<R: Rng>(rng: &mut R, input: usize, output: usize) -> Self {
        Self {
            weight: uniform_init(rng, (output, input), input),
            bias: uniform_init_vec(rng, output, input),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.output_dim())
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.weight += &dy.t().dot(x);
        grad.bias += &dy.sum_axis(ndarray::Axis(0));
        dy.dot(&self.weight)
    }

    pub(crate) fn visit_prefixed(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&format!("{prefix}.weight"), slice_of(&self.weight));
        f(&format!("{prefix}.bias"), slice_of(&self.bias));
    }

    pub(crate) fn visit_prefixed_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&format!("{prefix}.weight"), slice_of_mut(&mut self.weight));
        f(&format!("{prefix}.bias"), slice_of_mut(&mut self.bias));
    }
}

impl Parameterized for Linear {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.visit_prefixed("linear", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.visit_prefixed_mut("linear", f);
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
