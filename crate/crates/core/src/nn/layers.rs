//! Layers with hand-derived backward passes. Every layer's backward is
//! validated against central finite differences (see `gradcheck`).

use rand::Rng;

use super::tensor::{matmul_acc, matmul_bt_acc, Scalar, Tensor};

/// Mutable view of one named parameter and its gradient.
pub struct ParamMut<'a, S> {
    pub name: String,
    pub value: &'a mut Tensor<S>,
    pub grad: &'a mut Tensor<S>,
}

/// Shared view of one named parameter and its gradient.
pub struct ParamRef<'a, S> {
    pub name: String,
    pub value: &'a Tensor<S>,
    pub grad: &'a Tensor<S>,
}

pub trait Layer<S: Scalar> {
    /// Computes outputs and caches whatever backward needs.
    fn forward(&mut self, x: &Tensor<S>) -> Tensor<S>;
    /// Accumulates parameter gradients and returns the input gradient.
    /// Must follow a forward call on the same input.
    fn backward(&mut self, dy: &Tensor<S>) -> Tensor<S>;
    fn params(&self) -> Vec<ParamRef<'_, S>> {
        Vec::new()
    }
    fn params_mut(&mut self) -> Vec<ParamMut<'_, S>> {
        Vec::new()
    }
    fn zero_grads(&mut self) {
        // layers without parameters have nothing to clear
    }
}

pub fn kaiming_uniform<S: Scalar, R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<S> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| S::from_f64(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::from_vec(shape, data)
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

/// 2-D cross-correlation with per-filter bias, via im2col.
pub struct Conv2d<S> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Tensor<S>, // (F, C, k, k)
    pub bias: Tensor<S>,   // (F)
    pub dweight: Tensor<S>,
    pub dbias: Tensor<S>,
    cols: Vec<Vec<S>>, // cached im2col per sample
    in_shape: Vec<usize>,
    out_hw: (usize, usize),
}

impl<S: Scalar> Conv2d<S> {
    pub fn new<R: Rng>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            weight: kaiming_uniform(&[out_ch, in_ch, kernel, kernel], fan_in, rng),
            bias: Tensor::zeros(&[out_ch]),
            dweight: Tensor::zeros(&[out_ch, in_ch, kernel, kernel]),
            dbias: Tensor::zeros(&[out_ch]),
            cols: Vec::new(),
            in_shape: Vec::new(),
            out_hw: (0, 0),
        }
    }

    pub fn with_params(mut self, weight: Tensor<S>, bias: Tensor<S>) -> Self {
        assert_eq!(weight.shape(), self.weight.shape());
        assert_eq!(bias.shape(), self.bias.shape());
        self.weight = weight;
        self.bias = bias;
        self
    }

    /// Output size with floor semantics: positions that would overrun the
    /// padded input are dropped, as in mainstream conv implementations.
    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let oh = (h + 2 * self.pad)
            .checked_sub(self.kernel)
            .expect("kernel larger than padded input")
            / self.stride
            + 1;
        let ow = (w + 2 * self.pad - self.kernel) / self.stride + 1;
        (oh, ow)
    }

    fn im2col(&self, x: &[S], h: usize, w: usize, oh: usize, ow: usize) -> Vec<S> {
        let k = self.kernel;
        let len = self.in_ch * k * k * oh * ow;
        let mut col = vec![S::ZERO; len];
        let mut row = 0usize;
        for c in 0..self.in_ch {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let dst = &mut col[row * oh * ow..(row + 1) * oh * ow];
                    for ohi in 0..oh {
                        let ih = (ohi * self.stride + ki) as isize - self.pad as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        let src = &plane[ih as usize * w..(ih as usize + 1) * w];
                        let drow = &mut dst[ohi * ow..(ohi + 1) * ow];
                        for (owi, d) in drow.iter_mut().enumerate() {
                            let iw = (owi * self.stride + kj) as isize - self.pad as isize;
                            if iw >= 0 && iw < w as isize {
                                *d = src[iw as usize];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
        col
    }

    fn col2im(&self, col: &[S], h: usize, w: usize, oh: usize, ow: usize, x_grad: &mut [S]) {
        let k = self.kernel;
        let mut row = 0usize;
        for c in 0..self.in_ch {
            let plane = &mut x_grad[c * h * w..(c + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let src = &col[row * oh * ow..(row + 1) * oh * ow];
                    for ohi in 0..oh {
                        let ih = (ohi * self.stride + ki) as isize - self.pad as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        let drow = &mut plane[ih as usize * w..(ih as usize + 1) * w];
                        for (owi, &v) in src[ohi * ow..(ohi + 1) * ow].iter().enumerate() {
                            let iw = (owi * self.stride + kj) as isize - self.pad as isize;
                            if iw >= 0 && iw < w as isize {
                                drow[iw as usize] += v;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

impl<S: Scalar> Layer<S> for Conv2d<S> {
    fn forward(&mut self, x: &Tensor<S>) -> Tensor<S> {
        let shape = x.shape();
        assert_eq!(shape.len(), 4, "conv2d expects (N,C,H,W), got {shape:?}");
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        assert_eq!(c, self.in_ch, "conv2d channel mismatch: {c} != {}", self.in_ch);
        let (oh, ow) = self.out_size(h, w);
        let l = oh * ow;
        let ckk = self.in_ch * self.kernel * self.kernel;

        self.in_shape = shape.to_vec();
        self.out_hw = (oh, ow);
        self.cols.clear();

        let mut out = Tensor::zeros(&[n, self.out_ch, oh, ow]);
        for ni in 0..n {
            let col = self.im2col(&x.data()[ni * c * h * w..(ni + 1) * c * h * w], h, w, oh, ow);
            let dst = &mut out.data_mut()[ni * self.out_ch * l..(ni + 1) * self.out_ch * l];
            matmul_acc(self.weight.data(), &col, dst, self.out_ch, ckk, l);
            for f in 0..self.out_ch {
                let b = self.bias.data()[f];
                for v in &mut dst[f * l..(f + 1) * l] {
                    *v += b;
                }
            }
            self.cols.push(col);
        }
        out
    }

    fn backward(&mut self, dy: &Tensor<S>) -> Tensor<S> {
        let (n, c, h, w) = (
            self.in_shape[0],
            self.in_shape[1],
            self.in_shape[2],
            self.in_shape[3],
        );
        let (oh, ow) = self.out_hw;
        let l = oh * ow;
        let ckk = self.in_ch * self.kernel * self.kernel;
        assert_eq!(dy.shape(), &[n, self.out_ch, oh, ow], "conv2d backward shape");

        let mut dx = Tensor::zeros(&[n, c, h, w]);
        let mut dcol = vec![S::ZERO; ckk * l];
        for ni in 0..n {
            let dy_n = &dy.data()[ni * self.out_ch * l..(ni + 1) * self.out_ch * l];
            let col = &self.cols[ni];
            // dW += dY * col^T
            matmul_bt_acc(dy_n, col, self.dweight.data_mut(), self.out_ch, l, ckk);
            for f in 0..self.out_ch {
                let mut acc = S::ZERO;
                for &v in &dy_n[f * l..(f + 1) * l] {
                    acc += v;
                }
                self.dbias.data_mut()[f] += acc;
            }
            // dcol = W^T * dY, accumulated as rank-1 updates over filters
            dcol.iter_mut().for_each(|v| *v = S::ZERO);
            for f in 0..self.out_ch {
                let wrow = &self.weight.data()[f * ckk..(f + 1) * ckk];
                let dyrow = &dy_n[f * l..(f + 1) * l];
                for (q, &wv) in wrow.iter().enumerate() {
                    if wv == S::ZERO {
                        continue;
                    }
                    let drow = &mut dcol[q * l..(q + 1) * l];
                    for (d, &g) in drow.iter_mut().zip(dyrow) {
                        *d += wv * g;
                    }
                }
            }
            self.col2im(
                &dcol,
                h,
                w,
                oh,
                ow,
                &mut dx.data_mut()[ni * c * h * w..(ni + 1) * c * h * w],
            );
        }
        dx
    }

    fn params(&self) -> Vec<ParamRef<'_, S>> {
        vec![
            ParamRef {
                name: "weight".into(),
                value: &self.weight,
                grad: &self.dweight,
            },
            ParamRef {
                name: "bias".into(),
                value: &self.bias,
                grad: &self.dbias,
            },
        ]
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, S>> {
        vec![
            ParamMut {
                name: "weight".into(),
                value: &mut self.weight,
                grad: &mut self.dweight,
            },
            ParamMut {
                name: "bias".into(),
                value: &mut self.bias,
                grad: &mut self.dbias,
            },
        ]
    }

    fn zero_grads(&mut self) {
        self.dweight.fill(S::ZERO);
        self.dbias.fill(S::ZERO);
    }
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

/// Affine map y = xW + b with W stored (in_dim, out_dim).
pub struct Dense<S> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
    pub dweight: Tensor<S>,
    pub dbias: Tensor<S>,
    cached_x: Tensor<S>,
}

impl<S: Scalar> Dense<S> {
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Dense {
            in_dim,
            out_dim,
            weight: kaiming_uniform(&[in_dim, out_dim], in_dim, rng),
            bias: Tensor::zeros(&[out_dim]),
            dweight: Tensor::zeros(&[in_dim, out_dim]),
            dbias: Tensor::zeros(&[out_dim]),
            cached_x: Tensor::zeros(&[0]),
        }
    }

    pub fn with_params(mut self, weight: Tensor<S>, bias: Tensor<S>) -> Self {
        assert_eq!(weight.shape(), self.weight.shape());
        assert_eq!(bias.shape(), self.bias.shape());
        self.weight = weight;
        self.bias = bias;
        self
    }
}

impl<S: Scalar> Layer<S> for Dense<S> {
    fn forward(&mut self, x: &Tensor<S>) -> Tensor<S> {
        let shape = x.shape();
        assert_eq!(shape.len(), 2, "dense expects (N,D), got {shape:?}");
        let (n, d) = (shape[0], shape[1]);
        assert_eq!(d, self.in_dim, "dense input dim {d} != {}", self.in_dim);
        let m = self.out_dim;
        let mut out = Tensor::zeros(&[n, m]);
        matmul_acc(x.data(), self.weight.data(), out.data_mut(), n, d, m);
        for ni in 0..n {
            let row = &mut out.data_mut()[ni * m..(ni + 1) * m];
            for (v, &b) in row.iter_mut().zip(self.bias.data()) {
                *v += b;
            }
        }
        self.cached_x = x.clone();
        out
    }

    fn backward(&mut self, dy: &Tensor<S>) -> Tensor<S> {
        let n = self.cached_x.shape()[0];
        let (d, m) = (self.in_dim, self.out_dim);
        assert_eq!(dy.shape(), &[n, m], "dense backward shape");
        let x = self.cached_x.data();
        // dW += x^T dY
        for ni in 0..n {
            let xrow = &x[ni * d..(ni + 1) * d];
            let dyrow = &dy.data()[ni * m..(ni + 1) * m];
            for (di, &xv) in xrow.iter().enumerate() {
                if xv == S::ZERO {
                    continue;
                }
                let wrow = &mut self.dweight.data_mut()[di * m..(di + 1) * m];
                for (o, &g) in wrow.iter_mut().zip(dyrow) {
                    *o += xv * g;
                }
            }
            for (b, &g) in self.dbias.data_mut().iter_mut().zip(dyrow) {
                *b += g;
            }
        }
        // dx = dY W^T
        let mut dx = Tensor::zeros(&[n, d]);
        matmul_bt_acc(dy.data(), self.weight.data(), dx.data_mut(), n, m, d);
        dx
    }

    fn params(&self) -> Vec<ParamRef<'_, S>> {
        vec![
            ParamRef {
                name: "weight".into(),
                value: &self.weight,
                grad: &self.dweight,
            },
            ParamRef {
                name: "bias".into(),
                value: &self.bias,
                grad: &self.dbias,
            },
        ]
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, S>> {
        vec![
            ParamMut {
                name: "weight".into(),
                value: &mut self.weight,
                grad: &mut self.dweight,
            },
            ParamMut {
                name: "bias".into(),
                value: &mut self.bias,
                grad: &mut self.dbias,
            },
        ]
    }

    fn zero_grads(&mut self) {
        self.dweight.fill(S::ZERO);
        self.dbias.fill(S::ZERO);
    }
}

// ---------------------------------------------------------------------------
// ReLU and global average pooling
// ---------------------------------------------------------------------------

#[derive(Default)]
pub struct Relu<S> {
    cached_out: Option<Tensor<S>>,
}

impl<S: Scalar> Relu<S> {
    pub fn new() -> Self {
        Relu { cached_out: None }
    }
}

impl<S: Scalar> Layer<S> for Relu<S> {
    fn forward(&mut self, x: &Tensor<S>) -> Tensor<S> {
        let mut out = x.clone();
        out.data_mut()
            .iter_mut()
            .for_each(|v| *v = v.maximum(S::ZERO));
        self.cached_out = Some(out.clone());
        out
    }

    fn backward(&mut self, dy: &Tensor<S>) -> Tensor<S> {
        let out = self.cached_out.as_ref().expect("relu backward before forward");
        let mut dx = dy.clone();
        for (d, &o) in dx.data_mut().iter_mut().zip(out.data()) {
            if o <= S::ZERO {
                *d = S::ZERO;
            }
        }
        dx
    }
}

#[derive(Default)]
pub struct GlobalAvgPool<S> {
    in_shape: Vec<usize>,
    _marker: std::marker::PhantomData<S>,
}

impl<S: Scalar> GlobalAvgPool<S> {
    pub fn new() -> Self {
        GlobalAvgPool {
            in_shape: Vec::new(),
            _marker: std::marker::PhantomData,
        }
    }
}

impl<S: Scalar> Layer<S> for GlobalAvgPool<S> {
    fn forward(&mut self, x: &Tensor<S>) -> Tensor<S> {
        let shape = x.shape();
        assert_eq!(shape.len(), 4, "gap expects (N,C,H,W)");
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let inv = S::from_f64(1.0 / (h * w) as f64);
        let mut out = Tensor::zeros(&[n, c]);
        for ni in 0..n {
            for ci in 0..c {
                let plane = &x.data()[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
                let mut acc = S::ZERO;
                for &v in plane {
                    acc += v;
                }
                out.data_mut()[ni * c + ci] = acc * inv;
            }
        }
        self.in_shape = shape.to_vec();
        out
    }

    fn backward(&mut self, dy: &Tensor<S>) -> Tensor<S> {
        let (n, c, h, w) = (
            self.in_shape[0],
            self.in_shape[1],
            self.in_shape[2],
            self.in_shape[3],
        );
        assert_eq!(dy.shape(), &[n, c]);
        let inv = S::from_f64(1.0 / (h * w) as f64);
        let mut dx = Tensor::zeros(&[n, c, h, w]);
        for ni in 0..n {
            for ci in 0..c {
                let g = dy.data()[ni * c + ci] * inv;
                for v in
                    &mut dx.data_mut()[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w]
                {
                    *v = g;
                }
            }
        }
        dx
    }
}

// ---------------------------------------------------------------------------
// rSoftmax
// ---------------------------------------------------------------------------

/// Softmax across the radix axis of (N, r, C) logits; sigmoid when r = 1.
pub fn rsoftmax_forward<S: Scalar>(logits: &Tensor<S>) -> Tensor<S> {
    let shape = logits.shape();
    assert_eq!(shape.len(), 3, "rsoftmax expects (N,r,C), got {shape:?}");
    let (n, r, c) = (shape[0], shape[1], shape[2]);
    let mut out = Tensor::zeros(shape);
    let x = logits.data();
    let y = out.data_mut();
    if r == 1 {
        for (o, &v) in y.iter_mut().zip(x) {
            *o = S::ONE / (S::ONE + (-v).exp());
        }
        return out;
    }
    for ni in 0..n {
        for ci in 0..c {
            let idx = |k: usize| (ni * r + k) * c + ci;
            let mut m = x[idx(0)];
            for k in 1..r {
                m = m.maximum(x[idx(k)]);
            }
            let mut denom = S::ZERO;
            for k in 0..r {
                let e = (x[idx(k)] - m).exp();
                y[idx(k)] = e;
                denom += e;
            }
            for k in 0..r {
                y[idx(k)] = y[idx(k)] / denom;
            }
        }
    }
    out
}

/// Gradient of rsoftmax given its output `weights` and upstream `dweights`.
pub fn rsoftmax_backward<S: Scalar>(weights: &Tensor<S>, dweights: &Tensor<S>) -> Tensor<S> {
    let shape = weights.shape();
    let (n, r, c) = (shape[0], shape[1], shape[2]);
    assert_eq!(dweights.shape(), shape);
    let mut dlogits = Tensor::zeros(shape);
    let w = weights.data();
    let dw = dweights.data();
    let dl = dlogits.data_mut();
    if r == 1 {
        for i in 0..w.len() {
            dl[i] = dw[i] * w[i] * (S::ONE - w[i]);
        }
        return dlogits;
    }
    for ni in 0..n {
        for ci in 0..c {
            let idx = |k: usize| (ni * r + k) * c + ci;
            let mut dot = S::ZERO;
            for k in 0..r {
                dot += w[idx(k)] * dw[idx(k)];
            }
            for k in 0..r {
                dl[idx(k)] = w[idx(k)] * (dw[idx(k)] - dot);
            }
        }
    }
    dlogits
}

/// Layer wrapper so rsoftmax can go through the shared gradient checker.
#[derive(Default)]
pub struct RSoftmax<S> {
    cached_out: Option<Tensor<S>>,
}

impl<S: Scalar> RSoftmax<S> {
    pub fn new() -> Self {
        RSoftmax { cached_out: None }
    }
}

impl<S: Scalar> Layer<S> for RSoftmax<S> {
    fn forward(&mut self, x: &Tensor<S>) -> Tensor<S> {
        let out = rsoftmax_forward(x);
        self.cached_out = Some(out.clone());
        out
    }

    fn backward(&mut self, dy: &Tensor<S>) -> Tensor<S> {
        let out = self
            .cached_out
            .as_ref()
            .expect("rsoftmax backward before forward");
        rsoftmax_backward(out, dy)
    }
}

// ---------------------------------------------------------------------------
// Split-attention block
// ---------------------------------------------------------------------------

/// Radix split-attention block (cardinality 1): r parallel 3x3 convolutions,
/// channel attention over the radix axis from a pooled bottleneck, residual
/// shortcut, final ReLU.
pub struct SplitAttention<S> {
    pub radix: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
    pub branches: Vec<Conv2d<S>>,
    pub fc1: Dense<S>,
    pub fc2: Dense<S>,
    pub shortcut: Option<Conv2d<S>>,
    cache: Option<SplitAttnCache<S>>,
}

struct SplitAttnCache<S> {
    branch_outs: Vec<Tensor<S>>,
    z: Tensor<S>,
    attn: Tensor<S>,
    out: Tensor<S>,
    hw: usize,
}

impl<S: Scalar> SplitAttention<S> {
    pub fn new<R: Rng>(in_ch: usize, out_ch: usize, radix: usize, stride: usize, rng: &mut R) -> Self {
        assert!(radix >= 1);
        let branches = (0..radix)
            .map(|_| Conv2d::new(in_ch, out_ch, 3, stride, 1, rng))
            .collect();
        let bottleneck = (out_ch / 4).max(1);
        let fc1 = Dense::new(out_ch, bottleneck, rng);
        let fc2 = Dense::new(bottleneck, radix * out_ch, rng);
        let shortcut = if in_ch == out_ch && stride == 1 {
            None
        } else {
            Some(Conv2d::new(in_ch, out_ch, 1, stride, 0, rng))
        };
        SplitAttention {
            radix,
            in_ch,
            out_ch,
            stride,
            branches,
            fc1,
            fc2,
            shortcut,
            cache: None,
        }
    }

    /// Attention weights from the last forward pass, shape (N, r, C).
    pub fn last_attention(&self) -> Option<&Tensor<S>> {
        self.cache.as_ref().map(|c| &c.attn)
    }
}

impl<S: Scalar> Layer<S> for SplitAttention<S> {
    fn forward(&mut self, x: &Tensor<S>) -> Tensor<S> {
        let n = x.shape()[0];
        let branch_outs: Vec<Tensor<S>> = self.branches.iter_mut().map(|b| b.forward(x)).collect();
        let out_shape = branch_outs[0].shape().to_vec();
        let (c, oh, ow) = (out_shape[1], out_shape[2], out_shape[3]);
        let hw = oh * ow;

        let mut u = branch_outs[0].clone();
        for b in &branch_outs[1..] {
            u.add_assign(b);
        }

        // squeeze: global average pool of the fused map
        let inv = S::from_f64(1.0 / hw as f64);
        let mut pooled = Tensor::zeros(&[n, c]);
        for ni in 0..n {
            for ci in 0..c {
                let plane = &u.data()[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
                let mut acc = S::ZERO;
                for &v in plane {
                    acc += v;
                }
                pooled.data_mut()[ni * c + ci] = acc * inv;
            }
        }

        let mut z = self.fc1.forward(&pooled);
        z.data_mut().iter_mut().for_each(|v| *v = v.maximum(S::ZERO));
        let logits = self.fc2.forward(&z).reshaped(&[n, self.radix, c]);
        let attn = rsoftmax_forward(&logits);

        let mut v = Tensor::zeros(&out_shape);
        for (k, branch) in branch_outs.iter().enumerate() {
            for ni in 0..n {
                for ci in 0..c {
                    let a = attn.data()[(ni * self.radix + k) * c + ci];
                    let src = &branch.data()[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
                    let dst = &mut v.data_mut()[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += a * s;
                    }
                }
            }
        }

        match &mut self.shortcut {
            Some(conv) => v.add_assign(&conv.forward(x)),
            None => v.add_assign(x),
        }
        v.data_mut().iter_mut().for_each(|e| *e = e.maximum(S::ZERO));

        self.cache = Some(SplitAttnCache {
            branch_outs,
            z,
            attn,
            out: v.clone(),
            hw,
        });
        v
    }

    fn backward(&mut self, dy: &Tensor<S>) -> Tensor<S> {
        let cache = self.cache.as_ref().expect("split-attention backward before forward");
        let out_shape = cache.out.shape().to_vec();
        let (n, c, hw) = (out_shape[0], out_shape[1], cache.hw);
        let r = self.radix;
        assert_eq!(dy.shape(), &out_shape[..], "split-attention backward shape");

        // through the final ReLU
        let mut dpre = dy.clone();
        for (d, &o) in dpre.data_mut().iter_mut().zip(cache.out.data()) {
            if o <= S::ZERO {
                *d = S::ZERO;
            }
        }

        // attention-weighted sum: gradients to attn and to each branch
        let mut dattn = Tensor::zeros(&[n, r, c]);
        let mut dbranches: Vec<Tensor<S>> =
            (0..r).map(|_| Tensor::zeros(&out_shape)).collect();
        for (k, branch) in cache.branch_outs.iter().enumerate() {
            for ni in 0..n {
                for ci in 0..c {
                    let a = cache.attn.data()[(ni * r + k) * c + ci];
                    let src = &branch.data()[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
                    let g = &dpre.data()[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
                    let db = &mut dbranches[k].data_mut()
                        [(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
                    let mut acc = S::ZERO;
                    for ((d, &s), &gv) in db.iter_mut().zip(src).zip(g) {
                        acc += s * gv;
                        *d += a * gv;
                    }
                    dattn.data_mut()[(ni * r + k) * c + ci] = acc;
                }
            }
        }

        // attention path: rsoftmax -> fc2 -> relu -> fc1 -> pooled U
        let dlogits = rsoftmax_backward(&cache.attn, &dattn).reshaped(&[n, r * c]);
        let mut dz = self.fc2.backward(&dlogits);
        for (d, &zv) in dz.data_mut().iter_mut().zip(cache.z.data()) {
            if zv <= S::ZERO {
                *d = S::ZERO;
            }
        }
        let dpooled = self.fc1.backward(&dz);
        let inv = S::from_f64(1.0 / hw as f64);
        for db in &mut dbranches {
            for ni in 0..n {
                for ci in 0..c {
                    let g = dpooled.data()[ni * c + ci] * inv;
                    for v in
                        &mut db.data_mut()[(ni * c + ci) * hw..(ni * c + ci + 1) * hw]
                    {
                        *v += g;
                    }
                }
            }
        }

        let mut dx: Option<Tensor<S>> = None;
        for (k, db) in dbranches.iter().enumerate() {
            let g = self.branches[k].backward(db);
            match &mut dx {
                Some(acc) => acc.add_assign(&g),
                None => dx = Some(g),
            }
        }
        let mut dx = dx.expect("radix >= 1");
        match &mut self.shortcut {
            Some(conv) => dx.add_assign(&conv.backward(&dpre)),
            None => dx.add_assign(&dpre),
        }
        dx
    }

    fn params(&self) -> Vec<ParamRef<'_, S>> {
        let mut v = Vec::new();
        for (i, b) in self.branches.iter().enumerate() {
            for mut p in b.params() {
                p.name = format!("branch{i}.{}", p.name);
                v.push(p);
            }
        }
        for mut p in self.fc1.params() {
            p.name = format!("fc1.{}", p.name);
            v.push(p);
        }
        for mut p in self.fc2.params() {
            p.name = format!("fc2.{}", p.name);
            v.push(p);
        }
        if let Some(conv) = &self.shortcut {
            for mut p in conv.params() {
                p.name = format!("shortcut.{}", p.name);
                v.push(p);
            }
        }
        v
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, S>> {
        let mut v = Vec::new();
        for (i, b) in self.branches.iter_mut().enumerate() {
            for mut p in b.params_mut() {
                p.name = format!("branch{i}.{}", p.name);
                v.push(p);
            }
        }
        for mut p in self.fc1.params_mut() {
            p.name = format!("fc1.{}", p.name);
            v.push(p);
        }
        for mut p in self.fc2.params_mut() {
            p.name = format!("fc2.{}", p.name);
            v.push(p);
        }
        if let Some(conv) = &mut self.shortcut {
            for mut p in conv.params_mut() {
                p.name = format!("shortcut.{}", p.name);
                v.push(p);
            }
        }
        v
    }

    fn zero_grads(&mut self) {
        for b in &mut self.branches {
            b.zero_grads();
        }
        self.fc1.zero_grads();
        self.fc2.zero_grads();
        if let Some(conv) = &mut self.shortcut {
            conv.zero_grads();
        }
    }
}

// ---------------------------------------------------------------------------
// Plain residual conv block (the attention-free baseline)
// ---------------------------------------------------------------------------

/// Single 3x3 convolution with residual shortcut and ReLU; the plain-CNN
/// counterpart of the split-attention block.
pub struct PlainBlock<S> {
    pub conv: Conv2d<S>,
    pub shortcut: Option<Conv2d<S>>,
    cached_out: Option<Tensor<S>>,
}

impl<S: Scalar> PlainBlock<S> {
    pub fn new<R: Rng>(in_ch: usize, out_ch: usize, stride: usize, rng: &mut R) -> Self {
        let conv = Conv2d::new(in_ch, out_ch, 3, stride, 1, rng);
        let shortcut = if in_ch == out_ch && stride == 1 {
            None
        } else {
            Some(Conv2d::new(in_ch, out_ch, 1, stride, 0, rng))
        };
        PlainBlock {
            conv,
            shortcut,
            cached_out: None,
        }
    }
}

impl<S: Scalar> Layer<S> for PlainBlock<S> {
    fn forward(&mut self, x: &Tensor<S>) -> Tensor<S> {
        let mut y = self.conv.forward(x);
        match &mut self.shortcut {
            Some(conv) => y.add_assign(&conv.forward(x)),
            None => y.add_assign(x),
        }
        y.data_mut().iter_mut().for_each(|v| *v = v.maximum(S::ZERO));
        self.cached_out = Some(y.clone());
        y
    }

    fn backward(&mut self, dy: &Tensor<S>) -> Tensor<S> {
        let out = self.cached_out.as_ref().expect("plain block backward before forward");
        let mut dpre = dy.clone();
        for (d, &o) in dpre.data_mut().iter_mut().zip(out.data()) {
            if o <= S::ZERO {
                *d = S::ZERO;
            }
        }
        let mut dx = self.conv.backward(&dpre);
        match &mut self.shortcut {
            Some(conv) => dx.add_assign(&conv.backward(&dpre)),
            None => dx.add_assign(&dpre),
        }
        dx
    }

    fn params(&self) -> Vec<ParamRef<'_, S>> {
        let mut v = Vec::new();
        for mut p in self.conv.params() {
            p.name = format!("conv.{}", p.name);
            v.push(p);
        }
        if let Some(conv) = &self.shortcut {
            for mut p in conv.params() {
                p.name = format!("shortcut.{}", p.name);
                v.push(p);
            }
        }
        v
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, S>> {
        let mut v = Vec::new();
        for mut p in self.conv.params_mut() {
            p.name = format!("conv.{}", p.name);
            v.push(p);
        }
        if let Some(conv) = &mut self.shortcut {
            for mut p in conv.params_mut() {
                p.name = format!("shortcut.{}", p.name);
                v.push(p);
            }
        }
        v
    }

    fn zero_grads(&mut self) {
        self.conv.zero_grads();
        if let Some(conv) = &mut self.shortcut {
            conv.zero_grads();
        }
    }
}
