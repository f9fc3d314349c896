//! Fully connected networks with a flat parameter vector.
//!
//! Layout of the flat vector, layer by layer: the weight matrix row-major
//! (`out × in`) followed by the bias. Inputs are mapped affinely from the
//! architecture's input box onto `[-1, 1]` before the first layer.

mod batch;
mod blob;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{DifferentiableFunction, Dual, Real};
use crate::seed;

pub use batch::{backward_batch, forward_batch, BatchTrace, JetSpec, Jets};
pub use blob::{read_blob, read_blob_file, write_blob, write_blob_file};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputTransform {
    None,
    /// `(x, y) ↦ y·‖x − anchor‖`, zero at the anchor for every parameter value.
    EikonalTime { anchor: Vec<f64> },
    /// `(x, y) ↦ |y| + offset`.
    AbsOffset { offset: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub output_dim: usize,
    /// Hidden layer count.
    pub depth: usize,
    pub width: usize,
    pub activation: Activation,
    pub transform: OutputTransform,
    /// Box mapped onto `[-1, 1]`; empty means inputs are used as given.
    pub input_lo: Vec<f64>,
    pub input_hi: Vec<f64>,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, output_dim: usize, depth: usize, width: usize, activation: Activation) -> Self {
        MlpArchitecture {
            input_dim,
            output_dim,
            depth,
            width,
            activation,
            transform: OutputTransform::None,
            input_lo: Vec::new(),
            input_hi: Vec::new(),
        }
    }

    pub fn with_transform(mut self, transform: OutputTransform) -> Self {
        self.transform = transform;
        self
    }

    pub fn with_input_box(mut self, lo: &[f64], hi: &[f64]) -> Self {
        self.input_lo = lo.to_vec();
        self.input_hi = hi.to_vec();
        self
    }

    /// `(fan_in, fan_out)` of every affine layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.depth + 1);
        let mut fan_in = self.input_dim;
        for _ in 0..self.depth {
            shapes.push((fan_in, self.width));
            fan_in = self.width;
        }
        shapes.push((fan_in, self.output_dim));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|&(i, o)| (i + 1) * o).sum()
    }

    /// Per-axis input scale and shift so that `z = scale·x + shift`.
    pub fn input_affine(&self) -> (Vec<f64>, Vec<f64>) {
        if self.input_lo.is_empty() {
            return (vec![1.0; self.input_dim], vec![0.0; self.input_dim]);
        }
        let scale: Vec<f64> = self
            .input_lo
            .iter()
            .zip(&self.input_hi)
            .map(|(lo, hi)| 2.0 / (hi - lo))
            .collect();
        let shift = self.input_lo.iter().zip(&scale).map(|(lo, s)| -1.0 - s * lo).collect();
        (scale, shift)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    pub arch: MlpArchitecture,
    pub values: Vec<f64>,
}

/// One affine layer in unflattened form.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        ParamVector { arch: arch.clone(), values: vec![0.0; arch.param_count()] }
    }

    pub fn unflatten(&self) -> Vec<Layer> {
        let mut off = 0;
        self.arch
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| {
                let weights = self.values[off..off + i * o].to_vec();
                off += i * o;
                let bias = self.values[off..off + o].to_vec();
                off += o;
                Layer { weights, bias }
            })
            .collect()
    }

    pub fn flatten(arch: &MlpArchitecture, layers: &[Layer]) -> Self {
        let values = layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect();
        ParamVector { arch: arch.clone(), values }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        forward(&self.arch, &self.values, x)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Glorot-uniform weights and zero biases.
pub fn init_params(arch: &MlpArchitecture, seed: u64) -> ParamVector {
    let mut rng = seed::rng(seed);
    let mut values = Vec::with_capacity(arch.param_count());
    for (fan_in, fan_out) in arch.layer_shapes() {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        values.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)));
        values.extend(std::iter::repeat(0.0).take(fan_out));
    }
    ParamVector { arch: arch.clone(), values }
}

#[inline]
fn activate<T: Real>(act: Activation, z: T) -> T {
    match act {
        Activation::Tanh => z.tanh(),
        Activation::Sin => z.sin(),
    }
}

/// Raw network output before the output transform.
pub fn forward_raw<T: Real>(arch: &MlpArchitecture, params: &[T], x: &[T]) -> Vec<T> {
    let (scale, shift) = arch.input_affine();
    let mut h: Vec<T> = x.iter().zip(scale.iter().zip(&shift)).map(|(&v, (&s, &c))| v * s + c).collect();
    let shapes = arch.layer_shapes();
    let last = shapes.len() - 1;
    let mut off = 0;
    for (l, &(fan_in, fan_out)) in shapes.iter().enumerate() {
        let w = &params[off..off + fan_in * fan_out];
        let b = &params[off + fan_in * fan_out..off + (fan_in + 1) * fan_out];
        off += (fan_in + 1) * fan_out;
        h = (0..fan_out)
            .map(|o| {
                let mut z = b[o];
                for i in 0..fan_in {
                    z += w[o * fan_in + i] * h[i];
                }
                if l == last {
                    z
                } else {
                    activate(arch.activation, z)
                }
            })
            .collect();
    }
    h
}

/// Network output including the output transform.
pub fn forward<T: Real>(arch: &MlpArchitecture, params: &[T], x: &[T]) -> Vec<T> {
    let y = forward_raw(arch, params, x);
    match &arch.transform {
        OutputTransform::None => y,
        OutputTransform::AbsOffset { offset } => y.into_iter().map(|v| v.abs() + *offset).collect(),
        OutputTransform::EikonalTime { anchor } => {
            let mut r2 = T::zero();
            for (&xi, &ai) in x.iter().zip(anchor) {
                r2 += (xi - ai).square();
            }
            let r = if r2.value() == 0.0 { r2 } else { r2.sqrt() };
            y.into_iter().map(|v| v * r).collect()
        }
    }
}

/// Value, first and (optionally) second derivatives of the first output
/// along each requested axis, one nested-dual pass per axis.
pub fn point_jets<S: Real>(arch: &MlpArchitecture, params: &[S], x: &[S], spec: &JetSpec) -> (S, Vec<S>, Vec<S>) {
    let ps: Vec<Dual<Dual<S>>> = params.iter().map(|&p| Dual::constant(Dual::constant(p))).collect();
    let mut u = forward(arch, params, x)[0];
    let mut d1 = Vec::with_capacity(spec.axes.len());
    let mut d2 = Vec::with_capacity(spec.axes.len());
    for &axis in &spec.axes {
        let xs: Vec<Dual<Dual<S>>> = x
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let seed = if k == axis { S::one() } else { S::zero() };
                Dual::new(Dual::new(v, seed), Dual::new(seed, S::zero()))
            })
            .collect();
        let y = forward(arch, &ps, &xs)[0];
        u = y.re.re;
        d1.push(y.re.eps);
        if spec.second {
            d2.push(y.eps.eps);
        }
    }
    (u, d1, d2)
}

/// The network as a function of its input.
pub struct InputFn<'a> {
    pub arch: &'a MlpArchitecture,
    pub params: &'a [f64],
}

impl DifferentiableFunction for InputFn<'_> {
    fn arity_in(&self) -> usize {
        self.arch.input_dim
    }
    fn arity_out(&self) -> usize {
        self.arch.output_dim
    }
    fn eval<T: Real>(&self, x: &[T]) -> Vec<T> {
        let p: Vec<T> = self.params.iter().map(|&v| T::cst(v)).collect();
        forward(self.arch, &p, x)
    }
}

/// The network as a function of its flat parameter vector at a fixed input.
pub struct ParamFn<'a> {
    pub arch: &'a MlpArchitecture,
    pub x: &'a [f64],
}

impl DifferentiableFunction for ParamFn<'_> {
    fn arity_in(&self) -> usize {
        self.arch.param_count()
    }
    fn arity_out(&self) -> usize {
        self.arch.output_dim
    }
    fn eval<T: Real>(&self, p: &[T]) -> Vec<T> {
        let x: Vec<T> = self.x.iter().map(|&v| T::cst(v)).collect();
        forward(self.arch, p, &x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> MlpArchitecture {
        MlpArchitecture::new(2, 1, 3, 8, Activation::Tanh)
    }

    #[test]
    fn param_count_formula() {
        let a = arch();
        assert_eq!(a.param_count(), 3 * 8 + 2 * 9 * 8 + 9);
        let b = MlpArchitecture::new(1, 1, 6, 8, Activation::Tanh);
        assert_eq!(b.param_count(), 2 * 8 + 5 * 9 * 8 + 9);
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = arch();
        let p = init_params(&a, 7);
        assert_eq!(p, init_params(&a, 7));
        assert_ne!(p, init_params(&a, 8));
        for layer in p.unflatten() {
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn flatten_roundtrip_is_exact() {
        let a = arch();
        let p = init_params(&a, 3);
        let q = ParamVector::flatten(&a, &p.unflatten());
        assert_eq!(
            p.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            q.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn zero_params_give_zero_or_offset() {
        let a = arch();
        let z = ParamVector::zeros(&a);
        assert_eq!(z.eval(&[0.3, -2.0]), vec![0.0]);
        let b = arch().with_transform(OutputTransform::AbsOffset { offset: 0.2 });
        assert_eq!(ParamVector::zeros(&b).eval(&[1.0, 4.0]), vec![0.2]);
    }

    #[test]
    fn eikonal_transform_vanishes_at_anchor() {
        let a = arch().with_transform(OutputTransform::EikonalTime { anchor: vec![0.0, 0.0] });
        for s in 0..5 {
            assert_eq!(init_params(&a, s).eval(&[0.0, 0.0]), vec![0.0]);
        }
    }

    #[test]
    fn input_box_maps_to_unit_interval() {
        let a = MlpArchitecture::new(1, 1, 1, 2, Activation::Tanh).with_input_box(&[0.0], &[20.0]);
        let (s, c) = a.input_affine();
        assert_eq!(s[0] * 0.0 + c[0], -1.0);
        assert_eq!(s[0] * 20.0 + c[0], 1.0);
    }
}
