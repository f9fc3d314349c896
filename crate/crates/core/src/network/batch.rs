//! Batched forward and backward passes carrying input-derivative jets.
//!
//! For a batch of points the forward pass propagates the value together
//! with first and second derivatives along a few input axes. The backward
//! pass maps cotangents on those jets to the parameter gradient. Both are
//! generic in the scalar, so a dual scalar gives exact directional
//! derivatives of the gradient itself.
//!
//! Storage is `[unit][point]` and `[axis][unit][point]` so the inner loops
//! run over contiguous points.

use super::{Activation, MlpArchitecture, OutputTransform};
use crate::autodiff::Real;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct JetSpec {
    pub axes: Vec<usize>,
    pub second: bool,
}

impl JetSpec {
    pub fn value() -> Self {
        JetSpec::default()
    }

    pub fn first(axes: &[usize]) -> Self {
        JetSpec { axes: axes.to_vec(), second: false }
    }

    pub fn second(axes: &[usize]) -> Self {
        JetSpec { axes: axes.to_vec(), second: true }
    }
}

/// Network output and its derivatives at `n` points.
#[derive(Clone, Debug, PartialEq)]
pub struct Jets<T> {
    pub n: usize,
    pub u: Vec<T>,
    /// `d1[a][p]` is ∂u/∂x_{axes[a]} at point `p`.
    pub d1: Vec<Vec<T>>,
    pub d2: Vec<Vec<T>>,
}

impl<T: Real> Jets<T> {
    pub fn zeros(n: usize, spec: &JetSpec) -> Self {
        let na = spec.axes.len();
        Jets {
            n,
            u: vec![T::zero(); n],
            d1: vec![vec![T::zero(); n]; na],
            d2: if spec.second { vec![vec![T::zero(); n]; na] } else { Vec::new() },
        }
    }
}

struct LayerState<T> {
    s1: Vec<T>,
    zk: Vec<T>,
    zkk: Vec<T>,
    a: Vec<T>,
    ak: Vec<T>,
    akk: Vec<T>,
}

/// Intermediate values kept for the backward pass.
pub struct BatchTrace<T> {
    n: usize,
    spec: JetSpec,
    input: LayerInput<T>,
    hidden: Vec<LayerState<T>>,
    raw: Jets<T>,
    radius: Option<RadiusJets<T>>,
}

struct LayerInput<T> {
    h: Vec<T>,
    hk: Vec<T>,
}

struct RadiusJets<T> {
    r: Vec<T>,
    rk: Vec<Vec<T>>,
    rkk: Vec<Vec<T>>,
}

/// Activation value and its slope.
#[inline]
fn act_slope<T: Real>(act: Activation, z: T) -> (T, T) {
    match act {
        Activation::Tanh => {
            let t = z.tanh();
            (t, T::one() - t * t)
        }
        Activation::Sin => (z.sin(), z.cos()),
    }
}

/// Second and third derivatives from the activation value and slope.
#[inline]
fn higher<T: Real>(act: Activation, a: T, s1: T) -> (T, T) {
    match act {
        Activation::Tanh => (a * s1 * -2.0, s1 * s1 * -2.0 + a * a * s1 * 4.0),
        Activation::Sin => (-a, -s1),
    }
}

/// Dot product with four running sums, which breaks the add latency chain.
#[inline]
fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (xc, yc) = (x.chunks_exact(4), y.chunks_exact(4));
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        acc[0] += a[0] * b[0];
        acc[1] += a[1] * b[1];
        acc[2] += a[2] * b[2];
        acc[3] += a[3] * b[3];
    }
    let mut tail = T::zero();
    for (&a, &b) in xr.iter().zip(yr) {
        tail += a * b;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn affine<T: Real>(w: &[T], b: Option<&[T]>, h: &[T], fan_in: usize, fan_out: usize, n: usize, out: &mut [T]) {
    for o in 0..fan_out {
        let row = &mut out[o * n..(o + 1) * n];
        match b {
            Some(b) => row.iter_mut().for_each(|v| *v = b[o]),
            None => row.iter_mut().for_each(|v| *v = T::zero()),
        }
        for i in 0..fan_in {
            let wi = w[o * fan_in + i];
            let hi = &h[i * n..(i + 1) * n];
            for (r, &x) in row.iter_mut().zip(hi) {
                *r += wi * x;
            }
        }
    }
}

/// Forward pass over `points` (row-major, `n × input_dim`). Only the first
/// output is propagated.
pub fn forward_batch<T: Real>(
    arch: &MlpArchitecture,
    params: &[T],
    points: &[T],
    spec: &JetSpec,
) -> (Jets<T>, BatchTrace<T>) {
    let d = arch.input_dim;
    let n = points.len() / d;
    let na = spec.axes.len();
    let (scale, shift) = arch.input_affine();

    let mut h0 = vec![T::zero(); d * n];
    for p in 0..n {
        for i in 0..d {
            h0[i * n + p] = points[p * d + i] * scale[i] + shift[i];
        }
    }
    // The input jets are constant per axis; they are only materialized for
    // the first layer's weight gradient.
    let mut hk0 = vec![T::zero(); na * d * n];
    for (a, &ax) in spec.axes.iter().enumerate() {
        let s = T::cst(scale[ax]);
        hk0[(a * d + ax) * n..(a * d + ax + 1) * n].iter_mut().for_each(|v| *v = s);
    }

    let shapes = arch.layer_shapes();
    let mut hidden: Vec<LayerState<T>> = Vec::with_capacity(arch.depth);
    let mut off = 0;
    let mut out = Jets::zeros(n, spec);
    for (l, &(fan_in, fan_out)) in shapes.iter().enumerate() {
        let w = &params[off..off + fan_in * fan_out];
        let b = &params[off + fan_in * fan_out..off + (fan_in + 1) * fan_out];
        off += (fan_in + 1) * fan_out;
        let (h, hk, hkk): (&[T], &[T], Option<&[T]>) = if l == 0 {
            (&h0, &hk0, None)
        } else {
            let prev = &hidden[l - 1];
            (&prev.a, &prev.ak, if spec.second { Some(&prev.akk) } else { None })
        };
        let mut z = vec![T::zero(); fan_out * n];
        let mut zk = vec![T::zero(); na * fan_out * n];
        let mut zkk = vec![T::zero(); if spec.second { na * fan_out * n } else { 0 }];
        affine(w, Some(b), h, fan_in, fan_out, n, &mut z);
        for a in 0..na {
            let src = &hk[a * fan_in * n..(a + 1) * fan_in * n];
            affine(w, None, src, fan_in, fan_out, n, &mut zk[a * fan_out * n..(a + 1) * fan_out * n]);
            if let Some(hkk) = hkk {
                let src = &hkk[a * fan_in * n..(a + 1) * fan_in * n];
                affine(w, None, src, fan_in, fan_out, n, &mut zkk[a * fan_out * n..(a + 1) * fan_out * n]);
            }
        }
        if l + 1 == shapes.len() {
            out.u.copy_from_slice(&z[..n]);
            for a in 0..na {
                out.d1[a].copy_from_slice(&zk[a * fan_out * n..a * fan_out * n + n]);
                if spec.second {
                    out.d2[a].copy_from_slice(&zkk[a * fan_out * n..a * fan_out * n + n]);
                }
            }
            break;
        }
        let m = fan_out * n;
        let mut act = z;
        let mut slope = vec![T::zero(); m];
        for (v, s) in act.iter_mut().zip(slope.iter_mut()) {
            let (a, s1) = act_slope(arch.activation, *v);
            *v = a;
            *s = s1;
        }
        let mut ak = vec![T::zero(); na * m];
        let mut akk = vec![T::zero(); zkk.len()];
        for a in 0..na {
            let zka = &zk[a * m..(a + 1) * m];
            for ((o, &k), &s1) in ak[a * m..(a + 1) * m].iter_mut().zip(zka).zip(&slope) {
                *o = s1 * k;
            }
            if spec.second {
                let zkka = &zkk[a * m..(a + 1) * m];
                let it = akk[a * m..(a + 1) * m].iter_mut().zip(zka).zip(zkka).zip(act.iter().zip(&slope));
                for (((o, &k), &kk), (&v, &s1)) in it {
                    let (s2, _) = higher(arch.activation, v, s1);
                    *o = s2 * k * k + s1 * kk;
                }
            }
        }
        hidden.push(LayerState { s1: slope, zk, zkk, a: act, ak, akk });
    }

    let raw = out.clone();
    let mut radius = None;
    match &arch.transform {
        OutputTransform::None => {}
        OutputTransform::AbsOffset { offset } => {
            for p in 0..n {
                let neg = out.u[p].value() < 0.0;
                out.u[p] = out.u[p].abs() + *offset;
                if neg {
                    for a in 0..na {
                        out.d1[a][p] = -out.d1[a][p];
                        if spec.second {
                            out.d2[a][p] = -out.d2[a][p];
                        }
                    }
                }
            }
        }
        OutputTransform::EikonalTime { anchor } => {
            let mut rj = RadiusJets {
                r: vec![T::zero(); n],
                rk: vec![vec![T::zero(); n]; na],
                rkk: vec![vec![T::zero(); n]; na],
            };
            for p in 0..n {
                let mut r2 = T::zero();
                for i in 0..d {
                    r2 += (points[p * d + i] - anchor[i]).square();
                }
                let r = if r2.value() == 0.0 { r2 } else { r2.sqrt() };
                rj.r[p] = r;
                if r.value() == 0.0 {
                    continue;
                }
                for (a, &ax) in spec.axes.iter().enumerate() {
                    let rk = (points[p * d + ax] - anchor[ax]) / r;
                    rj.rk[a][p] = rk;
                    rj.rkk[a][p] = (T::one() - rk * rk) / r;
                }
            }
            for p in 0..n {
                let (y, r) = (raw.u[p], rj.r[p]);
                out.u[p] = y * r;
                for a in 0..na {
                    let (yk, rk) = (raw.d1[a][p], rj.rk[a][p]);
                    out.d1[a][p] = yk * r + y * rk;
                    if spec.second {
                        out.d2[a][p] = raw.d2[a][p] * r + yk * rk * 2.0 + y * rj.rkk[a][p];
                    }
                }
            }
            radius = Some(rj);
        }
    }

    let trace = BatchTrace {
        n,
        spec: spec.clone(),
        input: LayerInput { h: h0, hk: hk0 },
        hidden,
        raw,
        radius,
    };
    (out, trace)
}

/// Adds the parameter gradient of `Σ_p cot·jets` to `grad`.
pub fn backward_batch<T: Real>(arch: &MlpArchitecture, params: &[T], trace: &BatchTrace<T>, cot: &Jets<T>, grad: &mut [T]) {
    let n = trace.n;
    let spec = &trace.spec;
    let na = spec.axes.len();
    let second = spec.second;

    // Output transform.
    let mut g = cot.clone();
    match &arch.transform {
        OutputTransform::None => {}
        OutputTransform::AbsOffset { .. } => {
            for p in 0..n {
                if trace.raw.u[p].value() < 0.0 {
                    g.u[p] = -g.u[p];
                    for a in 0..na {
                        g.d1[a][p] = -g.d1[a][p];
                        if second {
                            g.d2[a][p] = -g.d2[a][p];
                        }
                    }
                }
            }
        }
        OutputTransform::EikonalTime { .. } => {
            let rj = trace.radius.as_ref().expect("radius jets recorded");
            for p in 0..n {
                let r = rj.r[p];
                let mut gu = cot.u[p] * r;
                for a in 0..na {
                    let rk = rj.rk[a][p];
                    gu += cot.d1[a][p] * rk;
                    let mut gk = cot.d1[a][p] * r;
                    if second {
                        gu += cot.d2[a][p] * rj.rkk[a][p];
                        gk += cot.d2[a][p] * rk * 2.0;
                        g.d2[a][p] = cot.d2[a][p] * r;
                    }
                    g.d1[a][p] = gk;
                }
                g.u[p] = gu;
            }
        }
    }

    let shapes = arch.layer_shapes();
    let offsets: Vec<usize> = shapes
        .iter()
        .scan(0, |off, &(i, o)| {
            let cur = *off;
            *off += (i + 1) * o;
            Some(cur)
        })
        .collect();

    // Cotangents on the current layer's pre-activation outputs.
    let (_, out_dim) = shapes[shapes.len() - 1];
    let mut zb = vec![T::zero(); out_dim * n];
    let mut zkb = vec![T::zero(); na * out_dim * n];
    let mut zkkb = vec![T::zero(); if second { na * out_dim * n } else { 0 }];
    zb[..n].copy_from_slice(&g.u);
    for a in 0..na {
        zkb[a * out_dim * n..a * out_dim * n + n].copy_from_slice(&g.d1[a]);
        if second {
            zkkb[a * out_dim * n..a * out_dim * n + n].copy_from_slice(&g.d2[a]);
        }
    }

    for l in (0..shapes.len()).rev() {
        let (fan_in, fan_out) = shapes[l];
        let off = offsets[l];
        let w = &params[off..off + fan_in * fan_out];
        let (h, hk, hkk): (&[T], &[T], &[T]) = if l == 0 {
            (&trace.input.h, &trace.input.hk, &[])
        } else {
            let s = &trace.hidden[l - 1];
            (&s.a, &s.ak, &s.akk)
        };

        // Weight and bias gradients.
        for o in 0..fan_out {
            let zo = &zb[o * n..(o + 1) * n];
            let bsum = zo.iter().fold(T::zero(), |s, &v| s + v);
            grad[off + fan_in * fan_out + o] += bsum;
            for i in 0..fan_in {
                let mut acc = dot(zo, &h[i * n..(i + 1) * n]);
                for a in 0..na {
                    let zko = &zkb[(a * fan_out + o) * n..(a * fan_out + o + 1) * n];
                    let hki = &hk[(a * fan_in + i) * n..(a * fan_in + i + 1) * n];
                    acc += dot(zko, hki);
                    if second && l > 0 {
                        let zkko = &zkkb[(a * fan_out + o) * n..(a * fan_out + o + 1) * n];
                        let hkki = &hkk[(a * fan_in + i) * n..(a * fan_in + i + 1) * n];
                        acc += dot(zkko, hkki);
                    }
                }
                grad[off + o * fan_in + i] += acc;
            }
        }
        if l == 0 {
            break;
        }

        // Cotangents on the previous layer's activations: Wᵀ·(·).
        let back = |src: &[T]| -> Vec<T> {
            let mut dst = vec![T::zero(); fan_in * n];
            for o in 0..fan_out {
                let so = &src[o * n..(o + 1) * n];
                for i in 0..fan_in {
                    let wi = w[o * fan_in + i];
                    for (d, &v) in dst[i * n..(i + 1) * n].iter_mut().zip(so) {
                        *d += wi * v;
                    }
                }
            }
            dst
        };
        let ab = back(&zb);
        let mut akb = vec![T::zero(); na * fan_in * n];
        let mut akkb = vec![T::zero(); if second { na * fan_in * n } else { 0 }];
        for a in 0..na {
            let r = a * fan_out * n..(a + 1) * fan_out * n;
            akb[a * fan_in * n..(a + 1) * fan_in * n].copy_from_slice(&back(&zkb[r.clone()]));
            if second {
                akkb[a * fan_in * n..(a + 1) * fan_in * n].copy_from_slice(&back(&zkkb[r]));
            }
        }

        // Through the activation of hidden layer l-1.
        let s = &trace.hidden[l - 1];
        let width = fan_in;
        let mut nzb = vec![T::zero(); width * n];
        let mut nzkb = vec![T::zero(); na * width * n];
        let mut nzkkb = vec![T::zero(); akkb.len()];
        for idx in 0..width * n {
            let s1 = s.s1[idx];
            let (s2, s3) = higher(arch.activation, s.a[idx], s1);
            let mut gz = s1 * ab[idx];
            for a in 0..na {
                let j = a * width * n + idx;
                let zk = s.zk[j];
                gz += s2 * zk * akb[j];
                let mut gk = s1 * akb[j];
                if second {
                    let gkk = akkb[j];
                    gz += gkk * (s3 * zk * zk + s2 * s.zkk[j]);
                    gk += s2 * zk * gkk * 2.0;
                    nzkkb[j] = s1 * gkk;
                }
                nzkb[j] = gk;
            }
            nzb[idx] = gz;
        }
        zb = nzb;
        zkb = nzkb;
        zkkb = nzkkb;
    }
}
