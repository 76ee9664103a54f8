use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Mode, NnError, Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// One layer of a sequential network. Convolutions use stride 1 and SAME
/// padding; `Softmax` is the terminal dense projection followed by softmax.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv1d { kernel: usize, filters: usize },
    Conv2d { kernel: (usize, usize), filters: usize },
    BatchNorm,
    Relu,
    MaxPool1d { size: usize, stride: usize },
    MaxPool2d { size: usize, stride: usize },
    Flatten,
    Dense { units: usize },
    Dropout { ratio: f64 },
    Softmax { units: usize },
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } | LayerSpec::Conv2d { .. } => "Convolution",
            LayerSpec::BatchNorm => "Batch-Norm",
            LayerSpec::Relu => "ReLU",
            LayerSpec::MaxPool1d { .. } | LayerSpec::MaxPool2d { .. } => "MaxPooling",
            LayerSpec::Flatten => "Flatten",
            LayerSpec::Dense { .. } => "Dense",
            LayerSpec::Dropout { .. } => "Dropout",
            LayerSpec::Softmax { .. } => "SoftMax",
        }
    }

    /// Layers that carry shape-changing structure; activations and dropout
    /// are attached to these.
    pub fn is_structural(&self) -> bool {
        !matches!(self, LayerSpec::Relu | LayerSpec::Dropout { .. })
    }

    /// Fixed-width numeric encoding: `[kind, a, b, c]`.
    pub fn encode(&self) -> [f64; 4] {
        match *self {
            LayerSpec::Conv1d { kernel, filters } => [0.0, kernel as f64, filters as f64, 0.0],
            LayerSpec::Conv2d { kernel: (kh, kw), filters } => [1.0, kh as f64, kw as f64, filters as f64],
            LayerSpec::BatchNorm => [2.0, 0.0, 0.0, 0.0],
            LayerSpec::Relu => [3.0, 0.0, 0.0, 0.0],
            LayerSpec::MaxPool1d { size, stride } => [4.0, size as f64, stride as f64, 0.0],
            LayerSpec::MaxPool2d { size, stride } => [5.0, size as f64, stride as f64, 0.0],
            LayerSpec::Flatten => [6.0, 0.0, 0.0, 0.0],
            LayerSpec::Dense { units } => [7.0, units as f64, 0.0, 0.0],
            LayerSpec::Dropout { ratio } => [8.0, ratio, 0.0, 0.0],
            LayerSpec::Softmax { units } => [9.0, units as f64, 0.0, 0.0],
        }
    }

    pub fn decode(code: &[f64]) -> Result<Self, NnError> {
        let bad = || NnError::Config(format!("bad layer code {code:?}"));
        if code.len() != 4 || code.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(bad());
        }
        let n = |v: f64| v as usize;
        Ok(match code[0] as u32 {
            0 => LayerSpec::Conv1d { kernel: n(code[1]), filters: n(code[2]) },
            1 => LayerSpec::Conv2d { kernel: (n(code[1]), n(code[2])), filters: n(code[3]) },
            2 => LayerSpec::BatchNorm,
            3 => LayerSpec::Relu,
            4 => LayerSpec::MaxPool1d { size: n(code[1]), stride: n(code[2]) },
            5 => LayerSpec::MaxPool2d { size: n(code[1]), stride: n(code[2]) },
            6 => LayerSpec::Flatten,
            7 => LayerSpec::Dense { units: n(code[1]) },
            8 => LayerSpec::Dropout { ratio: code[1] },
            9 => LayerSpec::Softmax { units: n(code[1]) },
            _ => return Err(bad()),
        })
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        let need_rank = |r: usize| {
            if input.len() == r {
                Ok(())
            } else {
                Err(format!("{} expects rank-{r} input, got {input:?}", self.name()))
            }
        };
        let positive = |v: usize, what: &str| if v == 0 { Err(format!("{what} must be positive")) } else { Ok(()) };
        match *self {
            LayerSpec::Conv1d { kernel, filters } => {
                need_rank(2)?;
                positive(kernel, "kernel")?;
                positive(filters, "filters")?;
                Ok(vec![input[0], filters])
            }
            LayerSpec::Conv2d { kernel: (kh, kw), filters } => {
                need_rank(3)?;
                positive(kh * kw, "kernel")?;
                positive(filters, "filters")?;
                Ok(vec![input[0], input[1], filters])
            }
            LayerSpec::BatchNorm | LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Dropout { ratio } => {
                if (0.0..1.0).contains(&ratio) {
                    Ok(input.to_vec())
                } else {
                    Err(format!("dropout ratio {ratio} outside [0, 1)"))
                }
            }
            LayerSpec::MaxPool1d { size, stride } => {
                need_rank(2)?;
                positive(size * stride, "pool size and stride")?;
                if input[0] < size {
                    return Err(format!("length {} shorter than pool {size}", input[0]));
                }
                Ok(vec![(input[0] - size) / stride + 1, input[1]])
            }
            LayerSpec::MaxPool2d { size, stride } => {
                need_rank(3)?;
                positive(size * stride, "pool size and stride")?;
                if input[0] < size || input[1] < size {
                    return Err(format!("map {}x{} smaller than pool {size}", input[0], input[1]));
                }
                Ok(vec![(input[0] - size) / stride + 1, (input[1] - size) / stride + 1, input[2]])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { units } | LayerSpec::Softmax { units } => {
                need_rank(1)?;
                positive(units, "units")?;
                Ok(vec![units])
            }
        }
    }
}

pub(crate) enum Cache<T> {
    Empty,
    Input(Tensor<T>),
    Mask(Vec<T>),
    Argmax(Vec<usize>),
    Norm { xhat: Vec<T>, inv_std: Vec<T>, batch: bool },
}

pub(crate) struct Forward<T> {
    pub out: Tensor<T>,
    pub cache: Cache<T>,
    /// Per-channel batch mean and biased variance from a training batch norm.
    pub bn_stats: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub(crate) struct Layer<T> {
    pub spec: LayerSpec,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    pub params: Vec<Tensor<T>>,
    pub grads: Vec<Tensor<T>>,
    /// Batch-norm running mean and variance.
    pub running: Vec<Tensor<T>>,
    pub bn_updates: u64,
}

fn glorot<T: Scalar>(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::of(rng.random_range(-limit..limit))).collect();
    Tensor { shape, data }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let k = *logits.shape().last().expect("non-empty shape");
    let mut out = logits.clone();
    for row in out.data.chunks_mut(k) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

impl<T: Scalar> Layer<T> {
    pub fn build(spec: LayerSpec, in_shape: &[usize], index: usize, rng: &mut ChaCha8Rng) -> Result<Self, NnError> {
        let out_shape = spec.output_shape(in_shape).map_err(|msg| NnError::Shape { layer: index, msg })?;
        let mut params = Vec::new();
        let mut running = Vec::new();
        match spec {
            LayerSpec::Conv1d { kernel, filters } => {
                let cin = in_shape[1];
                params.push(glorot(vec![kernel, cin, filters], kernel * cin, kernel * filters, rng));
                params.push(Tensor::zeros(vec![filters]));
            }
            LayerSpec::Conv2d { kernel: (kh, kw), filters } => {
                let cin = in_shape[2];
                params.push(glorot(vec![kh, kw, cin, filters], kh * kw * cin, kh * kw * filters, rng));
                params.push(Tensor::zeros(vec![filters]));
            }
            LayerSpec::Dense { units } | LayerSpec::Softmax { units } => {
                params.push(glorot(vec![in_shape[0], units], in_shape[0], units, rng));
                params.push(Tensor::zeros(vec![units]));
            }
            LayerSpec::BatchNorm => {
                let c = *in_shape.last().unwrap();
                params.push(Tensor { shape: vec![c], data: vec![T::one(); c] });
                params.push(Tensor::zeros(vec![c]));
                running.push(Tensor::zeros(vec![c]));
                running.push(Tensor { shape: vec![c], data: vec![T::one(); c] });
            }
            _ => {}
        }
        let grads = params.iter().map(|p| Tensor::zeros(p.shape.clone())).collect();
        Ok(Layer { spec, in_shape: in_shape.to_vec(), out_shape, params, grads, running, bn_updates: 0 })
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self.spec {
            LayerSpec::BatchNorm => &["gamma", "beta"],
            LayerSpec::Conv1d { .. } | LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. } | LayerSpec::Softmax { .. } => {
                &["weight", "bias"]
            }
            _ => &[],
        }
    }

    pub fn forward(
        &self,
        x: &Tensor<T>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
        index: usize,
    ) -> Result<Forward<T>, NnError> {
        if x.shape.len() != self.in_shape.len() + 1 || x.shape[1..] != self.in_shape[..] {
            return Err(NnError::Shape {
                layer: index,
                msg: format!("expected [B, {:?}], got {:?}", self.in_shape, x.shape),
            });
        }
        let batch = x.shape[0];
        let mut out_shape = vec![batch];
        out_shape.extend(&self.out_shape);
        let plain = |out: Tensor<T>, cache| Forward { out, cache, bn_stats: None };
        Ok(match self.spec {
            LayerSpec::Conv1d { kernel, filters } => plain(self.conv1d(x, kernel, filters, out_shape), Cache::Input(x.clone())),
            LayerSpec::Conv2d { kernel, filters } => plain(self.conv2d(x, kernel, filters, out_shape), Cache::Input(x.clone())),
            LayerSpec::BatchNorm => return self.batchnorm(x, mode, index),
            LayerSpec::Relu => {
                let mask: Vec<T> = x.data.iter().map(|&v| if v > T::zero() { T::one() } else { T::zero() }).collect();
                let data = x.data.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                plain(Tensor { shape: out_shape, data }, Cache::Mask(mask))
            }
            LayerSpec::Dropout { ratio } => {
                if mode == Mode::Infer || ratio == 0.0 {
                    plain(x.clone(), Cache::Empty)
                } else {
                    let keep = 1.0 - ratio;
                    let scale = T::of(1.0 / keep);
                    let mask: Vec<T> = (0..x.len())
                        .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
                        .collect();
                    let data = x.data.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                    plain(Tensor { shape: out_shape, data }, Cache::Mask(mask))
                }
            }
            LayerSpec::MaxPool1d { size, stride } => {
                let (l, c) = (self.in_shape[0], self.in_shape[1]);
                let lo = self.out_shape[0];
                let mut data = Vec::with_capacity(batch * lo * c);
                let mut idx = Vec::with_capacity(batch * lo * c);
                for b in 0..batch {
                    for o in 0..lo {
                        for ch in 0..c {
                            let mut best = (b * l + o * stride) * c + ch;
                            for k in 1..size {
                                let i = (b * l + o * stride + k) * c + ch;
                                if x.data[i] > x.data[best] {
                                    best = i;
                                }
                            }
                            data.push(x.data[best]);
                            idx.push(best);
                        }
                    }
                }
                plain(Tensor { shape: out_shape, data }, Cache::Argmax(idx))
            }
            LayerSpec::MaxPool2d { size, stride } => {
                let (h, w, c) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
                let (ho, wo) = (self.out_shape[0], self.out_shape[1]);
                let mut data = Vec::with_capacity(batch * ho * wo * c);
                let mut idx = Vec::with_capacity(batch * ho * wo * c);
                for b in 0..batch {
                    for oh in 0..ho {
                        for ow in 0..wo {
                            for ch in 0..c {
                                let at = |i: usize, j: usize| ((b * h + oh * stride + i) * w + ow * stride + j) * c + ch;
                                let mut best = at(0, 0);
                                for i in 0..size {
                                    for j in 0..size {
                                        let p = at(i, j);
                                        if x.data[p] > x.data[best] {
                                            best = p;
                                        }
                                    }
                                }
                                data.push(x.data[best]);
                                idx.push(best);
                            }
                        }
                    }
                }
                plain(Tensor { shape: out_shape, data }, Cache::Argmax(idx))
            }
            LayerSpec::Flatten => plain(x.clone().reshaped(out_shape), Cache::Empty),
            LayerSpec::Dense { units } => plain(self.dense(x, units, out_shape), Cache::Input(x.clone())),
            LayerSpec::Softmax { units } => {
                let logits = self.dense(x, units, out_shape);
                plain(softmax_rows(&logits), Cache::Input(x.clone()))
            }
        })
    }

    fn conv1d(&self, x: &Tensor<T>, k: usize, f: usize, out_shape: Vec<usize>) -> Tensor<T> {
        let (b, l, cin) = (x.shape[0], self.in_shape[0], self.in_shape[1]);
        let (w, bias) = (&self.params[0].data, &self.params[1].data);
        let pad = (k - 1) / 2;
        let mut out = vec![T::zero(); b * l * f];
        for bi in 0..b {
            for li in 0..l {
                let o = &mut out[(bi * l + li) * f..][..f];
                o.copy_from_slice(bias);
                for ki in 0..k {
                    let Some(src) = (li + ki).checked_sub(pad).filter(|&s| s < l) else { continue };
                    let xrow = &x.data[(bi * l + src) * cin..][..cin];
                    for (ci, &xv) in xrow.iter().enumerate() {
                        let wrow = &w[(ki * cin + ci) * f..][..f];
                        for (ov, &wv) in o.iter_mut().zip(wrow) {
                            *ov += xv * wv;
                        }
                    }
                }
            }
        }
        Tensor { shape: out_shape, data: out }
    }

    fn conv2d(&self, x: &Tensor<T>, (kh, kw): (usize, usize), f: usize, out_shape: Vec<usize>) -> Tensor<T> {
        let (b, h, wd, cin) = (x.shape[0], self.in_shape[0], self.in_shape[1], self.in_shape[2]);
        let (w, bias) = (&self.params[0].data, &self.params[1].data);
        let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
        let mut out = vec![T::zero(); b * h * wd * f];
        for bi in 0..b {
            for hi in 0..h {
                for wi in 0..wd {
                    let o = &mut out[((bi * h + hi) * wd + wi) * f..][..f];
                    o.copy_from_slice(bias);
                    for i in 0..kh {
                        let Some(sh) = (hi + i).checked_sub(ph).filter(|&s| s < h) else { continue };
                        for j in 0..kw {
                            let Some(sw) = (wi + j).checked_sub(pw).filter(|&s| s < wd) else { continue };
                            let xrow = &x.data[((bi * h + sh) * wd + sw) * cin..][..cin];
                            for (ci, &xv) in xrow.iter().enumerate() {
                                let wrow = &w[((i * kw + j) * cin + ci) * f..][..f];
                                for (ov, &wv) in o.iter_mut().zip(wrow) {
                                    *ov += xv * wv;
                                }
                            }
                        }
                    }
                }
            }
        }
        Tensor { shape: out_shape, data: out }
    }

    fn dense(&self, x: &Tensor<T>, units: usize, out_shape: Vec<usize>) -> Tensor<T> {
        let (b, n) = (x.shape[0], self.in_shape[0]);
        let (w, bias) = (&self.params[0].data, &self.params[1].data);
        let mut out = vec![T::zero(); b * units];
        for bi in 0..b {
            let o = &mut out[bi * units..][..units];
            o.copy_from_slice(bias);
            for (i, &xv) in x.data[bi * n..][..n].iter().enumerate() {
                if xv == T::zero() {
                    continue;
                }
                for (ov, &wv) in o.iter_mut().zip(&w[i * units..][..units]) {
                    *ov += xv * wv;
                }
            }
        }
        Tensor { shape: out_shape, data: out }
    }

    fn batchnorm(&self, x: &Tensor<T>, mode: Mode, index: usize) -> Result<Forward<T>, NnError> {
        let c = *self.in_shape.last().unwrap();
        let n = x.len() / c;
        let (gamma, beta) = (&self.params[0].data, &self.params[1].data);
        let (mean, var, batch) = match mode {
            Mode::Train => {
                if x.shape[0] < 2 {
                    return Err(NnError::Shape { layer: index, msg: "batch norm training needs a batch of at least 2".into() });
                }
                let mut mean = vec![0.0f64; c];
                for row in x.data.chunks(c) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v.as_f64();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0f64; c];
                for row in x.data.chunks(c) {
                    for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v.as_f64() - m).powi(2);
                    }
                }
                var.iter_mut().for_each(|s| *s /= n as f64);
                (mean, var, true)
            }
            Mode::Infer => {
                if self.bn_updates == 0 {
                    return Err(NnError::NotTrained { layer: index });
                }
                let mean = self.running[0].data.iter().map(|v| v.as_f64()).collect();
                let var = self.running[1].data.iter().map(|v| v.as_f64()).collect();
                (mean, var, false)
            }
        };
        let inv_std: Vec<T> = var.iter().map(|v| T::of(1.0 / (v + BN_EPS).sqrt())).collect();
        let mean_t: Vec<T> = mean.iter().map(|&m| T::of(m)).collect();
        let mut xhat = Vec::with_capacity(x.len());
        let mut out = Vec::with_capacity(x.len());
        for row in x.data.chunks(c) {
            for ch in 0..c {
                let h = (row[ch] - mean_t[ch]) * inv_std[ch];
                xhat.push(h);
                out.push(gamma[ch] * h + beta[ch]);
            }
        }
        Ok(Forward {
            out: Tensor { shape: x.shape.clone(), data: out },
            cache: Cache::Norm { xhat, inv_std, batch },
            bn_stats: batch.then_some((mean, var)),
        })
    }

    pub fn apply_bn_stats(&mut self, mean: &[f64], var: &[f64]) {
        let blend = |run: &mut Tensor<T>, batch: &[f64]| {
            for (r, &b) in run.data.iter_mut().zip(batch) {
                *r = T::of(BN_MOMENTUM * r.as_f64() + (1.0 - BN_MOMENTUM) * b);
            }
        };
        blend(&mut self.running[0], mean);
        blend(&mut self.running[1], var);
        self.bn_updates += 1;
    }

    /// Propagates `dy` to the input, writing parameter gradients. The
    /// softmax head receives the gradient with respect to its logits.
    pub fn backward(&mut self, cache: &Cache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let in_full = |batch: usize| {
            let mut s = vec![batch];
            s.extend(&self.in_shape);
            s
        };
        let batch = dy.shape[0];
        match (self.spec, cache) {
            (LayerSpec::Conv1d { kernel, filters }, Cache::Input(x)) => self.conv1d_back(x, dy, kernel, filters),
            (LayerSpec::Conv2d { kernel, filters }, Cache::Input(x)) => self.conv2d_back(x, dy, kernel, filters),
            (LayerSpec::Dense { units } | LayerSpec::Softmax { units }, Cache::Input(x)) => self.dense_back(x, dy, units),
            (LayerSpec::BatchNorm, Cache::Norm { xhat, inv_std, batch: from_batch }) => {
                let c = inv_std.len();
                let n = T::of((dy.len() / c) as f64);
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for (g, h) in dy.data.chunks(c).zip(xhat.chunks(c)) {
                    for ch in 0..c {
                        dgamma[ch] += g[ch] * h[ch];
                        dbeta[ch] += g[ch];
                    }
                }
                let gamma = &self.params[0].data;
                let mut dx = Vec::with_capacity(dy.len());
                for (g, h) in dy.data.chunks(c).zip(xhat.chunks(c)) {
                    for ch in 0..c {
                        let scale = gamma[ch] * inv_std[ch];
                        dx.push(if *from_batch {
                            scale * (g[ch] - dbeta[ch] / n - h[ch] * dgamma[ch] / n)
                        } else {
                            scale * g[ch]
                        });
                    }
                }
                self.grads[0].data = dgamma;
                self.grads[1].data = dbeta;
                Tensor { shape: dy.shape.clone(), data: dx }
            }
            (LayerSpec::Relu | LayerSpec::Dropout { .. }, Cache::Mask(mask)) => {
                Tensor { shape: dy.shape.clone(), data: dy.data.iter().zip(mask).map(|(&g, &m)| g * m).collect() }
            }
            (LayerSpec::Dropout { .. }, Cache::Empty) => dy.clone(),
            (LayerSpec::MaxPool1d { .. } | LayerSpec::MaxPool2d { .. }, Cache::Argmax(idx)) => {
                let mut dx = Tensor::zeros(in_full(batch));
                for (&i, &g) in idx.iter().zip(&dy.data) {
                    dx.data[i] += g;
                }
                dx
            }
            (LayerSpec::Flatten, _) => dy.clone().reshaped(in_full(batch)),
            _ => unreachable!("cache kind matches the layer that produced it"),
        }
    }

    fn conv1d_back(&mut self, x: &Tensor<T>, dy: &Tensor<T>, k: usize, f: usize) -> Tensor<T> {
        let (b, l, cin) = (x.shape[0], self.in_shape[0], self.in_shape[1]);
        let pad = (k - 1) / 2;
        let w = &self.params[0].data;
        let mut dw = vec![T::zero(); w.len()];
        let mut db = vec![T::zero(); f];
        let mut dx = vec![T::zero(); x.len()];
        for bi in 0..b {
            for li in 0..l {
                let g = &dy.data[(bi * l + li) * f..][..f];
                for (d, &gv) in db.iter_mut().zip(g) {
                    *d += gv;
                }
                for ki in 0..k {
                    let Some(src) = (li + ki).checked_sub(pad).filter(|&s| s < l) else { continue };
                    for ci in 0..cin {
                        let xi = (bi * l + src) * cin + ci;
                        let xv = x.data[xi];
                        let off = (ki * cin + ci) * f;
                        let mut acc = T::zero();
                        for fi in 0..f {
                            dw[off + fi] += xv * g[fi];
                            acc += w[off + fi] * g[fi];
                        }
                        dx[xi] += acc;
                    }
                }
            }
        }
        self.grads[0].data = dw;
        self.grads[1].data = db;
        Tensor { shape: x.shape.clone(), data: dx }
    }

    fn conv2d_back(&mut self, x: &Tensor<T>, dy: &Tensor<T>, (kh, kw): (usize, usize), f: usize) -> Tensor<T> {
        let (b, h, wd, cin) = (x.shape[0], self.in_shape[0], self.in_shape[1], self.in_shape[2]);
        let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
        let w = &self.params[0].data;
        let mut dw = vec![T::zero(); w.len()];
        let mut db = vec![T::zero(); f];
        let mut dx = vec![T::zero(); x.len()];
        for bi in 0..b {
            for hi in 0..h {
                for wi in 0..wd {
                    let g = &dy.data[((bi * h + hi) * wd + wi) * f..][..f];
                    for (d, &gv) in db.iter_mut().zip(g) {
                        *d += gv;
                    }
                    for i in 0..kh {
                        let Some(sh) = (hi + i).checked_sub(ph).filter(|&s| s < h) else { continue };
                        for j in 0..kw {
                            let Some(sw) = (wi + j).checked_sub(pw).filter(|&s| s < wd) else { continue };
                            for ci in 0..cin {
                                let xi = ((bi * h + sh) * wd + sw) * cin + ci;
                                let xv = x.data[xi];
                                let off = ((i * kw + j) * cin + ci) * f;
                                let mut acc = T::zero();
                                for fi in 0..f {
                                    dw[off + fi] += xv * g[fi];
                                    acc += w[off + fi] * g[fi];
                                }
                                dx[xi] += acc;
                            }
                        }
                    }
                }
            }
        }
        self.grads[0].data = dw;
        self.grads[1].data = db;
        Tensor { shape: x.shape.clone(), data: dx }
    }

    fn dense_back(&mut self, x: &Tensor<T>, dy: &Tensor<T>, units: usize) -> Tensor<T> {
        let (b, n) = (x.shape[0], self.in_shape[0]);
        let w = &self.params[0].data;
        let mut dw = vec![T::zero(); w.len()];
        let mut db = vec![T::zero(); units];
        let mut dx = vec![T::zero(); x.len()];
        for bi in 0..b {
            let g = &dy.data[bi * units..][..units];
            for (d, &gv) in db.iter_mut().zip(g) {
                *d += gv;
            }
            for i in 0..n {
                let xv = x.data[bi * n + i];
                let wrow = &w[i * units..][..units];
                let dwrow = &mut dw[i * units..][..units];
                let mut acc = T::zero();
                for u in 0..units {
                    dwrow[u] += xv * g[u];
                    acc += wrow[u] * g[u];
                }
                dx[bi * n + i] = acc;
            }
        }
        self.grads[0].data = dw;
        self.grads[1].data = db;
        Tensor { shape: x.shape.clone(), data: dx }
    }
}
