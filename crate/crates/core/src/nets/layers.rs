use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gemm::{gemm, ROW_MAJOR, TRANSPOSED};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { outputs: usize },
    Conv2d { filters: usize, kernel: usize, stride: usize, padding: usize },
    Relu,
    Flatten,
}

/// Architecture of a [`Sequential`]: per-sample input shape and layer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetSpec {
    /// Dense layers with ReLU after each hidden layer and a linear output.
    pub fn mlp(inputs: usize, hidden: &[usize], outputs: usize) -> Self {
        let mut layers = Vec::new();
        for &h in hidden {
            layers.push(LayerSpec::Dense { outputs: h });
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::Dense { outputs });
        Self { input_shape: vec![inputs], layers }
    }

    /// Strided 3×3 convolutions with ReLU, a 1×1 squeeze convolution, then a
    /// dense embedding layer, all ReLU-activated.
    pub fn image_encoder(input: [usize; 3], conv_filters: &[usize], squeeze: usize, embed: usize) -> Self {
        let mut layers = Vec::new();
        for &f in conv_filters {
            layers.push(LayerSpec::Conv2d { filters: f, kernel: 3, stride: 2, padding: 1 });
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::Conv2d { filters: squeeze, kernel: 1, stride: 1, padding: 0 });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::Dense { outputs: embed });
        layers.push(LayerSpec::Relu);
        Self { input_shape: input.to_vec(), layers }
    }

    /// Per-sample shape entering each layer, followed by the output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let bad = |i: usize, why: &str| Error::InvalidSpec(format!("layer {i}: {why}"));
        let mut shapes = vec![self.input_shape.clone()];
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::InvalidSpec(format!("input shape {:?}", self.input_shape)));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let s = shapes.last().expect("non-empty");
            let next = match *l {
                LayerSpec::Dense { outputs } => {
                    if s.len() != 1 {
                        return Err(bad(i, "dense layer needs a flat input"));
                    }
                    if outputs == 0 {
                        return Err(bad(i, "dense layer with no outputs"));
                    }
                    vec![outputs]
                }
                LayerSpec::Conv2d { filters, kernel, stride, padding } => {
                    if s.len() != 3 {
                        return Err(bad(i, "convolution needs a [channels, height, width] input"));
                    }
                    if filters == 0 || kernel == 0 || stride == 0 {
                        return Err(bad(i, "convolution with zero filters, kernel or stride"));
                    }
                    let out = |n: usize| (n + 2 * padding).checked_sub(kernel).map(|v| v / stride + 1);
                    match (out(s[1]), out(s[2])) {
                        (Some(h), Some(w)) => vec![filters, h, w],
                        _ => return Err(bad(i, "kernel larger than padded input")),
                    }
                }
                LayerSpec::Relu => s.clone(),
                LayerSpec::Flatten => vec![s.iter().product()],
            };
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shapes()?.pop().expect("non-empty"))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Conv {
    channels: usize,
    height: usize,
    width: usize,
    filters: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
}

impl Conv {
    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    fn im2col(&self, x: &[f64], col: &mut [f64]) {
        let (k, p) = (self.kernel, self.pixels());
        for c in 0..self.channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut col[((c * k + ky) * k + kx) * p..][..p];
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        for ox in 0..self.out_w {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            row[oy * self.out_w + ox] =
                                if iy >= 0 && ix >= 0 && (iy as usize) < self.height && (ix as usize) < self.width {
                                    x[(c * self.height + iy as usize) * self.width + ix as usize]
                                } else {
                                    0.0
                                };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[f64], dx: &mut [f64]) {
        let (k, p) = (self.kernel, self.pixels());
        for c in 0..self.channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = &col[((c * k + ky) * k + kx) * p..][..p];
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy as usize >= self.height {
                            continue;
                        }
                        for ox in 0..self.out_w {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix >= 0 && (ix as usize) < self.width {
                                dx[(c * self.height + iy as usize) * self.width + ix as usize] +=
                                    row[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Dense { inputs: usize, outputs: usize, weight: Vec<f64>, bias: Vec<f64> },
    Conv2d { geom: Conv, weight: Vec<f64>, bias: Vec<f64> },
    Relu,
    Flatten,
}

/// Parameter gradients, one buffer per parameter block in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

impl Grads {
    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().flatten().for_each(|v| *v *= s);
    }

    pub fn fill_zero(&mut self) {
        self.0.iter_mut().flatten().for_each(|v| *v = 0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

/// Activations recorded by a forward pass: the input and every layer output.
#[derive(Debug, Clone)]
pub struct Trace {
    acts: Vec<Tensor>,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        self.acts.last().expect("non-empty trace")
    }

    pub fn into_output(mut self) -> Tensor {
        self.acts.pop().expect("non-empty trace")
    }
}

/// Feed-forward stack of dense, convolution, ReLU and flatten layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential {
    spec: NetSpec,
    shapes: Vec<Vec<usize>>,
    layers: Vec<Layer>,
}

impl Sequential {
    /// He-uniform weights (fan-in), zero biases.
    pub fn new<R: Rng + ?Sized>(spec: NetSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        for layer in &mut net.layers {
            let (fan_in, weight) = match layer {
                Layer::Dense { inputs, weight, .. } => (*inputs, weight),
                Layer::Conv2d { geom, weight, .. } => (geom.rows(), weight),
                _ => continue,
            };
            let limit = (6.0 / fan_in as f64).sqrt();
            weight.iter_mut().for_each(|w| *w = rng.random_range(-limit..limit));
        }
        Ok(net)
    }

    /// All parameters zero.
    pub fn zeros(spec: NetSpec) -> Result<Self> {
        let shapes = spec.shapes()?;
        let layers = spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| match *l {
                LayerSpec::Dense { outputs } => {
                    let inputs = shapes[i][0];
                    Layer::Dense { inputs, outputs, weight: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
                }
                LayerSpec::Conv2d { filters, kernel, stride, padding } => {
                    let (s, o) = (&shapes[i], &shapes[i + 1]);
                    let geom = Conv {
                        channels: s[0],
                        height: s[1],
                        width: s[2],
                        filters,
                        kernel,
                        stride,
                        padding,
                        out_h: o[1],
                        out_w: o[2],
                    };
                    let weight = vec![0.0; filters * geom.rows()];
                    Layer::Conv2d { geom, weight, bias: vec![0.0; filters] }
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Flatten => Layer::Flatten,
            })
            .collect();
        Ok(Self { spec, shapes, layers })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("non-empty")
    }

    pub fn input_len(&self) -> usize {
        self.input_shape().iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output_shape().iter().product()
    }

    /// Shapes of the parameter blocks in declaration order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Dense { inputs, outputs, .. } => {
                    out.push(vec![*outputs, *inputs]);
                    out.push(vec![*outputs]);
                }
                Layer::Conv2d { geom, .. } => {
                    out.push(vec![geom.filters, geom.channels, geom.kernel, geom.kernel]);
                    out.push(vec![geom.filters]);
                }
                _ => {}
            }
        }
        out
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            if let Layer::Dense { weight, bias, .. } | Layer::Conv2d { weight, bias, .. } = l {
                out.push(weight);
                out.push(bias);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            if let Layer::Dense { weight, bias, .. } | Layer::Conv2d { weight, bias, .. } = l {
                out.push(weight);
                out.push(bias);
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        Grads(self.params().iter().map(|p| vec![0.0; p.len()]).collect())
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != self.shapes[0].len() + 1 || x.shape()[1..] != self.shapes[0][..] {
            return Err(Error::ShapeMismatch {
                expected: format!("[batch, {:?}]", self.shapes[0]),
                got: format!("{:?}", x.shape()),
            });
        }
        Ok(())
    }

    /// Forward pass over a batch, keeping the activations for [`Self::backward`].
    pub fn forward(&self, x: &Tensor) -> Result<Trace> {
        self.check_input(x)?;
        let b = x.batch();
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = &acts[i];
            let mut shape = vec![b];
            shape.extend_from_slice(&self.shapes[i + 1]);
            let out = match layer {
                Layer::Dense { inputs, outputs, weight, bias } => {
                    let mut y = vec![0.0; b * outputs];
                    for r in 0..b {
                        y[r * outputs..(r + 1) * outputs].copy_from_slice(bias);
                    }
                    gemm(
                        b,
                        *inputs,
                        *outputs,
                        input.data(),
                        ROW_MAJOR(*inputs),
                        weight,
                        TRANSPOSED(*inputs),
                        1.0,
                        &mut y,
                    );
                    y
                }
                Layer::Conv2d { geom, weight, bias } => {
                    let (rows, pix) = (geom.rows(), geom.pixels());
                    let per_out = geom.filters * pix;
                    let mut y = vec![0.0; b * per_out];
                    let mut col = vec![0.0; rows * pix];
                    for s in 0..b {
                        geom.im2col(input.item(s), &mut col);
                        let ys = &mut y[s * per_out..(s + 1) * per_out];
                        for f in 0..geom.filters {
                            ys[f * pix..(f + 1) * pix].fill(bias[f]);
                        }
                        gemm(geom.filters, rows, pix, weight, ROW_MAJOR(rows), &col, ROW_MAJOR(pix), 1.0, ys);
                    }
                    y
                }
                Layer::Relu => input.data().iter().map(|&v| v.max(0.0)).collect(),
                Layer::Flatten => input.data().to_vec(),
            };
            acts.push(Tensor { shape, data: out });
        }
        Ok(Trace { acts })
    }

    /// Forward pass returning only the output.
    pub fn output(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x)?.into_output())
    }

    /// Backpropagates `upstream = ∂L/∂output` through a recorded trace.
    ///
    /// Parameter gradients are accumulated into `grads` when given; the
    /// gradient with respect to the network input is returned.
    pub fn backward(&self, trace: &Trace, upstream: &Tensor, mut grads: Option<&mut Grads>) -> Result<Tensor> {
        let out = trace.output();
        if upstream.shape() != out.shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", out.shape()),
                got: format!("{:?}", upstream.shape()),
            });
        }
        if let Some(g) = grads.as_deref() {
            if g.0.len() != self.params().len() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} gradient blocks", self.params().len()),
                    got: g.0.len().to_string(),
                });
            }
        }
        let b = out.batch();
        let mut delta = upstream.data().to_vec();
        let mut block = self.params().len();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.acts[i];
            delta = match layer {
                Layer::Dense { inputs, outputs, weight, .. } => {
                    block -= 2;
                    if let Some(g) = grads.as_deref_mut() {
                        let (gw, gb) = pair_mut(&mut g.0, block);
                        gemm(
                            *outputs,
                            b,
                            *inputs,
                            &delta,
                            TRANSPOSED(*outputs),
                            input.data(),
                            ROW_MAJOR(*inputs),
                            1.0,
                            gw,
                        );
                        for r in 0..b {
                            gb.iter_mut().zip(&delta[r * outputs..(r + 1) * outputs]).for_each(|(a, d)| *a += d);
                        }
                    }
                    let mut dx = vec![0.0; b * inputs];
                    gemm(b, *outputs, *inputs, &delta, ROW_MAJOR(*outputs), weight, ROW_MAJOR(*inputs), 0.0, &mut dx);
                    dx
                }
                Layer::Conv2d { geom, weight, .. } => {
                    block -= 2;
                    let (rows, pix) = (geom.rows(), geom.pixels());
                    let per_out = geom.filters * pix;
                    let per_in = input.item_len();
                    let mut dx = vec![0.0; b * per_in];
                    let mut col = vec![0.0; rows * pix];
                    let mut dcol = vec![0.0; rows * pix];
                    for s in 0..b {
                        let ds = &delta[s * per_out..(s + 1) * per_out];
                        if let Some(g) = grads.as_deref_mut() {
                            geom.im2col(input.item(s), &mut col);
                            let (gw, gb) = pair_mut(&mut g.0, block);
                            gemm(geom.filters, pix, rows, ds, ROW_MAJOR(pix), &col, TRANSPOSED(pix), 1.0, gw);
                            for f in 0..geom.filters {
                                gb[f] += ds[f * pix..(f + 1) * pix].iter().sum::<f64>();
                            }
                        }
                        gemm(rows, geom.filters, pix, weight, TRANSPOSED(rows), ds, ROW_MAJOR(pix), 0.0, &mut dcol);
                        geom.col2im(&dcol, &mut dx[s * per_in..(s + 1) * per_in]);
                    }
                    dx
                }
                Layer::Relu => {
                    delta.iter_mut().zip(input.data()).for_each(|(d, &v)| {
                        if v <= 0.0 {
                            *d = 0.0
                        }
                    });
                    delta
                }
                Layer::Flatten => delta,
            };
        }
        Ok(Tensor { shape: trace.acts[0].shape().to_vec(), data: delta })
    }

    /// Replaces all parameters; block lengths must match [`Self::param_shapes`].
    pub fn set_params(&mut self, blocks: Vec<Vec<f64>>) -> Result<()> {
        let mut dst = self.params_mut();
        if blocks.len() != dst.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} blocks", dst.len()),
                got: blocks.len().to_string(),
            });
        }
        for (d, s) in dst.iter_mut().zip(&blocks) {
            if d.len() != s.len() {
                return Err(Error::ShapeMismatch { expected: d.len().to_string(), got: s.len().to_string() });
            }
        }
        for (d, s) in dst.iter_mut().zip(blocks) {
            d.copy_from_slice(&s);
        }
        Ok(())
    }
}

fn pair_mut(v: &mut [Vec<f64>], i: usize) -> (&mut [f64], &mut [f64]) {
    let (a, b) = v.split_at_mut(i + 1);
    (&mut a[i], &mut b[0])
}
