//! A small convolutional stack with hand-written reverse-mode
//! derivatives. Nothing here is clever: the point is a dependency-free
//! network whose gradients we can check against finite differences and
//! whose forward pass is bit-reproducible.

use ndarray::{Array1, Array2, Array3, Array4, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activations flowing between layers. Convolutions see `Hwc`, dense
/// layers see `Vec`; pooling and flattening cross between the two.
#[derive(Clone, Debug)]
pub enum Tensor {
    Hwc(Array3<f64>),
    Vec(Array1<f64>),
}

impl Tensor {
    pub fn as_hwc(&self) -> Result<&Array3<f64>> {
        match self {
            Tensor::Hwc(a) => Ok(a),
            Tensor::Vec(_) => Err(Error::shape("expected a spatial tensor, got a vector")),
        }
    }

    pub fn as_vec(&self) -> Result<&Array1<f64>> {
        match self {
            Tensor::Vec(a) => Ok(a),
            Tensor::Hwc(_) => Err(Error::shape("expected a vector, got a spatial tensor")),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Conv2d {
    /// (out_channels, in_channels, kh, kw)
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dense {
    /// (out, in)
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Layer {
    Conv(Conv2d),
    Relu,
    GlobalAvgPool,
    Flatten,
    Dense(Dense),
}

#[derive(Clone, Debug)]
pub enum LayerGrad {
    Conv { dw: Array4<f64>, db: Array1<f64> },
    Dense { dw: Array2<f64>, db: Array1<f64> },
    None,
}

#[derive(Clone, Debug)]
pub struct NetGrads(pub Vec<LayerGrad>);

impl NetGrads {
    pub fn zeros_like(net: &Net) -> Self {
        let gs = net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => LayerGrad::Conv {
                    dw: Array4::zeros(c.weight.raw_dim()),
                    db: Array1::zeros(c.bias.raw_dim()),
                },
                Layer::Dense(d) => LayerGrad::Dense {
                    dw: Array2::zeros(d.weight.raw_dim()),
                    db: Array1::zeros(d.bias.raw_dim()),
                },
                _ => LayerGrad::None,
            })
            .collect();
        NetGrads(gs)
    }

    pub fn add_assign(&mut self, other: &NetGrads) {
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            match (a, b) {
                (
                    LayerGrad::Conv { dw, db },
                    LayerGrad::Conv { dw: odw, db: odb },
                ) => {
                    *dw += odw;
                    *db += odb;
                }
                (
                    LayerGrad::Dense { dw, db },
                    LayerGrad::Dense { dw: odw, db: odb },
                ) => {
                    *dw += odw;
                    *db += odb;
                }
                (LayerGrad::None, LayerGrad::None) => {}
                _ => panic!("gradient structure mismatch"),
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.0.iter_mut() {
            match g {
                LayerGrad::Conv { dw, db } => {
                    dw.mapv_inplace(|v| v * s);
                    db.mapv_inplace(|v| v * s);
                }
                LayerGrad::Dense { dw, db } => {
                    dw.mapv_inplace(|v| v * s);
                    db.mapv_inplace(|v| v * s);
                }
                LayerGrad::None => {}
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Net {
    pub layers: Vec<Layer>,
}

impl Net {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer_forward(layer, &cur)?;
        }
        Ok(cur)
    }

    /// Forward pass keeping each layer's input, which is exactly the
    /// state the backward pass needs.
    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            caches.push(cur.clone());
            cur = layer_forward(layer, &cur)?;
        }
        Ok((cur, caches))
    }

    /// Reverse-mode sweep: given the cotangent of the output, returns
    /// the cotangent of the input and per-parameter gradients.
    pub fn backward(&self, caches: &[Tensor], cot: &Tensor) -> Result<(Tensor, NetGrads)> {
        if caches.len() != self.layers.len() {
            return Err(Error::shape("cache length does not match layer count"));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut cur = cot.clone();
        for (layer, cache) in self.layers.iter().zip(caches.iter()).rev() {
            let (gin, gparam) = layer_backward(layer, cache, &cur)?;
            grads.push(gparam);
            cur = gin;
        }
        grads.reverse();
        Ok((cur, NetGrads(grads)))
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => c.weight.len() + c.bias.len(),
                Layer::Dense(d) => d.weight.len() + d.bias.len(),
                _ => 0,
            })
            .sum()
    }

    pub fn flat_params(&self) -> Array1<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            match l {
                Layer::Conv(c) => {
                    out.extend(c.weight.iter());
                    out.extend(c.bias.iter());
                }
                Layer::Dense(d) => {
                    out.extend(d.weight.iter());
                    out.extend(d.bias.iter());
                }
                _ => {}
            }
        }
        Array1::from_vec(out)
    }

    pub fn set_flat_params(&mut self, flat: &ArrayView1<f64>) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(format!(
                "flat parameter vector has {} values, net has {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut i = 0;
        for l in self.layers.iter_mut() {
            match l {
                Layer::Conv(c) => {
                    for v in c.weight.iter_mut() {
                        *v = flat[i];
                        i += 1;
                    }
                    for v in c.bias.iter_mut() {
                        *v = flat[i];
                        i += 1;
                    }
                }
                Layer::Dense(d) => {
                    for v in d.weight.iter_mut() {
                        *v = flat[i];
                        i += 1;
                    }
                    for v in d.bias.iter_mut() {
                        *v = flat[i];
                        i += 1;
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn output_dim(&self, input: (usize, usize, usize)) -> Result<usize> {
        let probe = Tensor::Hwc(Array3::zeros(input));
        match self.forward(&probe)? {
            Tensor::Vec(v) => Ok(v.len()),
            Tensor::Hwc(_) => Err(Error::shape("net does not end in a vector output")),
        }
    }
}

pub fn flat_grads(net: &Net, grads: &NetGrads) -> Array1<f64> {
    let mut out = Vec::with_capacity(net.param_count());
    for g in &grads.0 {
        match g {
            LayerGrad::Conv { dw, db } => {
                out.extend(dw.iter());
                out.extend(db.iter());
            }
            LayerGrad::Dense { dw, db } => {
                out.extend(dw.iter());
                out.extend(db.iter());
            }
            LayerGrad::None => {}
        }
    }
    Array1::from_vec(out)
}

fn conv_out_dim(n: usize, k: usize, pad: usize, stride: usize) -> Result<usize> {
    let padded = n + 2 * pad;
    if padded < k || stride == 0 {
        return Err(Error::shape(format!(
            "conv kernel {k} does not fit input {n} with pad {pad}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

fn layer_forward(layer: &Layer, x: &Tensor) -> Result<Tensor> {
    match layer {
        Layer::Conv(c) => Ok(Tensor::Hwc(conv_forward(c, x.as_hwc()?)?)),
        Layer::Relu => Ok(match x {
            Tensor::Hwc(a) => Tensor::Hwc(a.mapv(|v| v.max(0.0))),
            Tensor::Vec(a) => Tensor::Vec(a.mapv(|v| v.max(0.0))),
        }),
        Layer::GlobalAvgPool => {
            let a = x.as_hwc()?;
            Ok(Tensor::Vec(crate::img::channel_means(a)))
        }
        Layer::Flatten => {
            let a = x.as_hwc()?;
            Ok(Tensor::Vec(Array1::from_iter(a.iter().cloned())))
        }
        Layer::Dense(d) => {
            let v = x.as_vec()?;
            if v.len() != d.weight.ncols() {
                return Err(Error::shape(format!(
                    "dense expects {} inputs, got {}",
                    d.weight.ncols(),
                    v.len()
                )));
            }
            Ok(Tensor::Vec(d.weight.dot(v) + &d.bias))
        }
    }
}

fn conv_forward(c: &Conv2d, x: &Array3<f64>) -> Result<Array3<f64>> {
    let (h, w, icn) = x.dim();
    let (ocn, wic, kh, kw) = c.weight.dim();
    if wic != icn {
        return Err(Error::shape(format!(
            "conv expects {wic} input channels, got {icn}"
        )));
    }
    let oh = conv_out_dim(h, kh, c.pad, c.stride)?;
    let ow = conv_out_dim(w, kw, c.pad, c.stride)?;
    let xs = x.as_standard_layout();
    let xs = xs.as_slice().unwrap();
    let ws = c.weight.as_slice().unwrap();
    let mut out = Array3::zeros((oh, ow, ocn));
    let os = out.as_slice_mut().unwrap();
    let wstride = icn * kh * kw;
    for oy in 0..oh {
        for ox in 0..ow {
            let obase = (oy * ow + ox) * ocn;
            for oc in 0..ocn {
                os[obase + oc] = c.bias[oc];
            }
            for ky in 0..kh {
                let iy = (oy * c.stride + ky) as isize - c.pad as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * c.stride + kx) as isize - c.pad as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let xbase = (iy as usize * w + ix as usize) * icn;
                    let wbase = (ky * kw + kx) as usize;
                    for ic in 0..icn {
                        let xv = xs[xbase + ic];
                        let woff = ic * kh * kw + wbase;
                        for oc in 0..ocn {
                            os[obase + oc] += ws[oc * wstride + woff] * xv;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn conv_backward(
    c: &Conv2d,
    x: &Array3<f64>,
    dout: &Array3<f64>,
) -> Result<(Array3<f64>, Array4<f64>, Array1<f64>)> {
    let (h, w, icn) = x.dim();
    let (ocn, _, kh, kw) = c.weight.dim();
    let (oh, ow, docn) = dout.dim();
    if docn != ocn {
        return Err(Error::shape("conv cotangent channel mismatch"));
    }
    let xs = x.as_standard_layout();
    let xs = xs.as_slice().unwrap();
    let ws = c.weight.as_slice().unwrap();
    let ds = dout.as_standard_layout();
    let ds = ds.as_slice().unwrap();
    let mut dx = Array3::<f64>::zeros((h, w, icn));
    let mut dw = Array4::<f64>::zeros(c.weight.raw_dim());
    let mut db = Array1::<f64>::zeros(ocn);
    let dxs = dx.as_slice_mut().unwrap();
    let dws = dw.as_slice_mut().unwrap();
    let wstride = icn * kh * kw;
    for oy in 0..oh {
        for ox in 0..ow {
            let obase = (oy * ow + ox) * ocn;
            for oc in 0..ocn {
                db[oc] += ds[obase + oc];
            }
            for ky in 0..kh {
                let iy = (oy * c.stride + ky) as isize - c.pad as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * c.stride + kx) as isize - c.pad as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let xbase = (iy as usize * w + ix as usize) * icn;
                    let wbase = ky * kw + kx;
                    for ic in 0..icn {
                        let xv = xs[xbase + ic];
                        let woff = ic * kh * kw + wbase;
                        let mut acc = 0.0;
                        for oc in 0..ocn {
                            let g = ds[obase + oc];
                            dws[oc * wstride + woff] += g * xv;
                            acc += g * ws[oc * wstride + woff];
                        }
                        dxs[xbase + ic] += acc;
                    }
                }
            }
        }
    }
    Ok((dx, dw, db))
}

fn layer_backward(layer: &Layer, cache: &Tensor, cot: &Tensor) -> Result<(Tensor, LayerGrad)> {
    match layer {
        Layer::Conv(c) => {
            let x = cache.as_hwc()?;
            let dout = cot.as_hwc()?;
            let (dx, dw, db) = conv_backward(c, x, dout)?;
            Ok((Tensor::Hwc(dx), LayerGrad::Conv { dw, db }))
        }
        Layer::Relu => {
            let g = match (cache, cot) {
                (Tensor::Hwc(x), Tensor::Hwc(d)) => {
                    let mut out = d.clone();
                    out.zip_mut_with(x, |gv, &xv| {
                        if xv <= 0.0 {
                            *gv = 0.0;
                        }
                    });
                    Tensor::Hwc(out)
                }
                (Tensor::Vec(x), Tensor::Vec(d)) => {
                    let mut out = d.clone();
                    out.zip_mut_with(x, |gv, &xv| {
                        if xv <= 0.0 {
                            *gv = 0.0;
                        }
                    });
                    Tensor::Vec(out)
                }
                _ => return Err(Error::shape("relu cache/cotangent kind mismatch")),
            };
            Ok((g, LayerGrad::None))
        }
        Layer::GlobalAvgPool => {
            let x = cache.as_hwc()?;
            let d = cot.as_vec()?;
            let (h, w, c) = x.dim();
            if d.len() != c {
                return Err(Error::shape("pool cotangent length mismatch"));
            }
            let scale = 1.0 / (h * w) as f64;
            let mut dx = Array3::zeros((h, w, c));
            for y in 0..h {
                for xx in 0..w {
                    for ch in 0..c {
                        dx[[y, xx, ch]] = d[ch] * scale;
                    }
                }
            }
            Ok((Tensor::Hwc(dx), LayerGrad::None))
        }
        Layer::Flatten => {
            let x = cache.as_hwc()?;
            let d = cot.as_vec()?;
            if d.len() != x.len() {
                return Err(Error::shape("flatten cotangent length mismatch"));
            }
            let dx = Array3::from_shape_vec(x.raw_dim(), d.to_vec())
                .map_err(|e| Error::shape(e.to_string()))?;
            Ok((Tensor::Hwc(dx), LayerGrad::None))
        }
        Layer::Dense(dn) => {
            let x = cache.as_vec()?;
            let d = cot.as_vec()?;
            if d.len() != dn.weight.nrows() {
                return Err(Error::shape("dense cotangent length mismatch"));
            }
            let dx = dn.weight.t().dot(d);
            let dw = d
                .view()
                .insert_axis(ndarray::Axis(1))
                .dot(&x.view().insert_axis(ndarray::Axis(0)));
            Ok((
                Tensor::Vec(dx),
                LayerGrad::Dense { dw, db: d.clone() },
            ))
        }
    }
}

/// He-initialised conv stack: 3x3 kernels, first conv stride 1, later
/// convs stride 2, global average pool, then a dense map to the
/// embedding. `channels` also fixes the depth, so the stack stays small.
pub fn backbone<R: Rng>(
    input: (usize, usize, usize),
    channels: &[usize],
    embed_dim: usize,
    rng: &mut R,
) -> Result<Net> {
    if channels.is_empty() || channels.len() > 5 {
        return Err(Error::invalid("backbone wants between 1 and 5 conv layers"));
    }
    if embed_dim == 0 {
        return Err(Error::invalid("embedding dimension must be positive"));
    }
    let mut layers = Vec::new();
    let mut in_c = input.2;
    let mut spatial = (input.0, input.1);
    for (i, &out_c) in channels.iter().enumerate() {
        let stride = if i == 0 { 1 } else { 2 };
        layers.push(Layer::Conv(conv_he(out_c, in_c, 3, 3, stride, 1, rng)));
        spatial = (
            conv_out_dim(spatial.0, 3, 1, stride)?,
            conv_out_dim(spatial.1, 3, 1, stride)?,
        );
        if spatial.0 == 0 || spatial.1 == 0 {
            return Err(Error::shape("input too small for the conv stack"));
        }
        layers.push(Layer::Relu);
        in_c = out_c;
    }
    layers.push(Layer::GlobalAvgPool);
    layers.push(Layer::Dense(dense_he(embed_dim, in_c, rng)));
    Ok(Net { layers })
}

/// Two-layer projection head used only during contrastive training.
pub fn projection_head<R: Rng>(embed_dim: usize, proj_dim: usize, rng: &mut R) -> Net {
    let hidden = embed_dim.max(proj_dim);
    Net {
        layers: vec![
            Layer::Dense(dense_he(hidden, embed_dim, rng)),
            Layer::Relu,
            Layer::Dense(dense_he(proj_dim, hidden, rng)),
        ],
    }
}

fn conv_he<R: Rng>(
    oc: usize,
    ic: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    rng: &mut R,
) -> Conv2d {
    let sd = (2.0 / (ic * kh * kw) as f64).sqrt();
    let dist = Normal::new(0.0, sd).unwrap();
    Conv2d {
        weight: Array4::from_shape_fn((oc, ic, kh, kw), |_| dist.sample(rng)),
        bias: Array1::zeros(oc),
        stride,
        pad,
    }
}

fn dense_he<R: Rng>(out: usize, inp: usize, rng: &mut R) -> Dense {
    let sd = (2.0 / inp as f64).sqrt();
    let dist = Normal::new(0.0, sd).unwrap();
    Dense {
        weight: Array2::from_shape_fn((out, inp), |_| dist.sample(rng)),
        bias: Array1::zeros(out),
    }
}

pub fn log_sum_exp(z: &ArrayView1<f64>) -> f64 {
    let m = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if m.is_infinite() {
        return m;
    }
    m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &ArrayView1<f64>) -> Array1<f64> {
    let lse = log_sum_exp(z);
    z.mapv(|v| (v - lse).exp())
}

/// Cross-entropy of logits against an integer label, with its gradient
/// in logit space (softmax minus the one-hot target).
pub fn ce_from_logits(z: &ArrayView1<f64>, y: usize) -> Result<(f64, Array1<f64>)> {
    if y >= z.len() {
        return Err(Error::invalid(format!(
            "label {y} out of range for {} logits",
            z.len()
        )));
    }
    let lse = log_sum_exp(z);
    let loss = lse - z[y];
    let mut g = z.mapv(|v| (v - lse).exp());
    g[y] -= 1.0;
    Ok((loss, g))
}

/// Plain heavy-ball SGD on a flat parameter vector.
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    vel: Array1<f64>,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64, dim: usize) -> Self {
        SgdMomentum { lr, momentum, vel: Array1::zeros(dim) }
    }

    pub fn step(&mut self, params: &mut Array1<f64>, grad: &ArrayView1<f64>) {
        self.vel.zip_mut_with(grad, |v, &g| *v = self.momentum * *v + g);
        params.zip_mut_with(&self.vel, |p, &v| *p -= self.lr * v);
    }
}

/// Adam on a flat vector, bias-corrected, betas (0.9, 0.999).
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Array1<f64>,
    v: Array1<f64>,
}

impl Adam {
    pub fn new(lr: f64, dim: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Array1::zeros(dim),
            v: Array1::zeros(dim),
        }
    }

    pub fn step(&mut self, params: &mut Array1<f64>, grad: &ArrayView1<f64>) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}
