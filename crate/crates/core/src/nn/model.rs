use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::layers::{BnRelu, Conv2d, DenseBlock, Linear, Mode, Module, Parameter, Transition};
use super::ops::{global_avgpool_backward, global_avgpool_forward, maxpool_backward, maxpool_forward, softmax};
use super::tensor::{Scalar, Tensor};

/// One stage of the classifier, in execution order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LayerSpec {
    /// Convolution followed by BN-ReLU.
    Stem {
        out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    DenseBlock {
        layers: usize,
        growth: usize,
        bottleneck: usize,
    },
    /// Halves channels and spatial size.
    Transition,
    GlobalAvgPool,
    Linear {
        out: usize,
    },
    Softmax,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub input_channels: usize,
    pub input_size: usize,
    pub layers: Vec<LayerSpec>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        let block = LayerSpec::DenseBlock {
            layers: 6,
            growth: 32,
            bottleneck: 128,
        };
        Self {
            input_channels: 3,
            input_size: 64,
            layers: vec![
                LayerSpec::Stem {
                    out: 64,
                    kernel: 7,
                    stride: 2,
                    pad: 3,
                },
                LayerSpec::MaxPool {
                    kernel: 3,
                    stride: 2,
                    pad: 1,
                },
                block.clone(),
                LayerSpec::Transition,
                block,
                LayerSpec::GlobalAvgPool,
                LayerSpec::Linear { out: 6 },
                LayerSpec::Softmax,
            ],
        }
    }
}

impl ModelSpec {
    /// Output shape `[C, H, W]` after every layer, derived from the layer list
    /// alone.
    pub fn shape_trace(&self) -> Result<Vec<[usize; 3]>> {
        let (mut c, mut h, mut w) = (self.input_channels, self.input_size, self.input_size);
        let mut out = Vec::with_capacity(self.layers.len());
        let conv_out = |n: usize, k: usize, s: usize, p: usize| -> Result<usize> {
            if s == 0 || n + 2 * p < k {
                return Err(Error::InvalidArgument(format!(
                    "kernel {k} stride {s} pad {p} does not fit {n}"
                )));
            }
            Ok((n + 2 * p - k) / s + 1)
        };
        for (i, l) in self.layers.iter().enumerate() {
            match *l {
                LayerSpec::Stem {
                    out,
                    kernel,
                    stride,
                    pad,
                } => {
                    c = out;
                    h = conv_out(h, kernel, stride, pad)?;
                    w = conv_out(w, kernel, stride, pad)?;
                }
                LayerSpec::MaxPool { kernel, stride, pad } => {
                    if pad >= kernel {
                        return Err(Error::InvalidArgument(format!(
                            "layer {i}: pool padding must be below kernel"
                        )));
                    }
                    h = conv_out(h, kernel, stride, pad)?;
                    w = conv_out(w, kernel, stride, pad)?;
                }
                LayerSpec::DenseBlock { layers, growth, .. } => c += layers * growth,
                LayerSpec::Transition => {
                    if c % 2 != 0 || h < 2 || w < 2 {
                        return Err(Error::InvalidArgument(format!(
                            "layer {i}: transition needs even channels and >= 2x2 maps, got {c}x{h}x{w}"
                        )));
                    }
                    c /= 2;
                    h /= 2;
                    w /= 2;
                }
                LayerSpec::GlobalAvgPool => {
                    h = 1;
                    w = 1;
                }
                LayerSpec::Linear { out } => {
                    if h != 1 || w != 1 {
                        return Err(Error::InvalidArgument(format!(
                            "layer {i}: linear needs pooled 1x1 input, got {h}x{w}"
                        )));
                    }
                    c = out;
                }
                LayerSpec::Softmax => {}
            }
            if c == 0 || h == 0 || w == 0 {
                return Err(Error::InvalidArgument(format!("layer {i} produces an empty map")));
            }
            out.push([c, h, w]);
        }
        Ok(out)
    }

    pub fn num_classes(&self) -> Result<usize> {
        match self.layers.iter().rev().find_map(|l| match l {
            LayerSpec::Linear { out } => Some(*out),
            _ => None,
        }) {
            Some(k) => Ok(k),
            None => Err(Error::InvalidArgument("model has no linear layer".into())),
        }
    }
}

#[derive(Clone, Debug)]
enum Stage<T: Scalar> {
    Stem(Conv2d<T>, BnRelu<T>),
    MaxPool {
        kernel: usize,
        stride: usize,
        pad: usize,
        cache: Option<(Vec<usize>, Vec<usize>)>,
    },
    Block(DenseBlock<T>),
    Transition(Transition<T>),
    GlobalAvgPool(Option<Vec<usize>>),
    Linear(Linear<T>),
    Softmax,
}

impl<T: Scalar> Stage<T> {
    fn name(&self) -> &'static str {
        match self {
            Stage::Stem(..) => "stem",
            Stage::MaxPool { .. } => "maxpool",
            Stage::Block(_) => "dense_block",
            Stage::Transition(_) => "transition",
            Stage::GlobalAvgPool(_) => "global_avgpool",
            Stage::Linear(_) => "linear",
            Stage::Softmax => "softmax",
        }
    }

    fn eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Stage::Stem(conv, norm) => norm.eval(&conv.eval(x)?),
            Stage::MaxPool {
                kernel, stride, pad, ..
            } => Ok(maxpool_forward(x, *kernel, *stride, *pad)?.0),
            Stage::Block(b) => b.eval(x),
            Stage::Transition(t) => t.eval(x),
            Stage::GlobalAvgPool(_) => global_avgpool_forward(x),
            Stage::Linear(l) => {
                let n = x.shape()[0];
                let flat = x.clone().reshape(&[n, x.len() / n])?;
                l.eval(&flat)
            }
            Stage::Softmax => softmax(x),
        }
    }

    fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Stage::Stem(conv, norm) => norm.forward(&conv.forward(x)?),
            Stage::MaxPool {
                kernel,
                stride,
                pad,
                cache,
            } => {
                let (y, arg) = maxpool_forward(&x, *kernel, *stride, *pad)?;
                *cache = Some((x.shape().to_vec(), arg));
                Ok(y)
            }
            Stage::Block(b) => b.forward(&x),
            Stage::Transition(t) => t.forward(&x),
            Stage::GlobalAvgPool(cache) => {
                *cache = Some(x.shape().to_vec());
                global_avgpool_forward(&x)
            }
            Stage::Linear(l) => {
                let n = x.shape()[0];
                let f = x.len() / n;
                l.forward(x.reshape(&[n, f])?)
            }
            Stage::Softmax => softmax(&x),
        }
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let missing = || Error::InvalidArgument("backward called without a preceding training forward".into());
        match self {
            Stage::Stem(conv, norm) => conv.backward(&norm.backward(dy)?),
            Stage::MaxPool { cache, .. } => {
                let (shape, arg) = cache.take().ok_or_else(missing)?;
                maxpool_backward(&shape, &arg, dy)
            }
            Stage::Block(b) => b.backward(dy),
            Stage::Transition(t) => t.backward(dy),
            Stage::GlobalAvgPool(cache) => {
                let shape = cache.take().ok_or_else(missing)?;
                global_avgpool_backward(&shape, dy)
            }
            Stage::Linear(l) => {
                let dx = l.backward(dy)?;
                let n = dx.shape()[0];
                dx.reshape(&[n, l.weight.value.shape()[1], 1, 1])
            }
            Stage::Softmax => Err(Error::InvalidArgument(
                "softmax is not differentiated on its own; train against the logits".into(),
            )),
        }
    }

    fn module(&self) -> Option<&dyn Module<T>> {
        match self {
            Stage::Stem(..) | Stage::MaxPool { .. } | Stage::GlobalAvgPool(_) | Stage::Softmax => None,
            Stage::Block(b) => Some(b),
            Stage::Transition(t) => Some(t),
            Stage::Linear(l) => Some(l),
        }
    }
}

/// The dense-block defect classifier: `[N, 3, 64, 64]` in, class
/// probabilities `[N, 6]` out.
#[derive(Clone, Debug)]
pub struct DenseNet<T: Scalar = f32> {
    spec: ModelSpec,
    stages: Vec<Stage<T>>,
}

impl<T: Scalar> DenseNet<T> {
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let trace = spec.shape_trace()?;
        if !matches!(spec.layers.last(), Some(LayerSpec::Softmax)) {
            return Err(Error::InvalidArgument("model must end with softmax".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = spec.input_channels;
        let (mut n_blocks, mut n_trans) = (0, 0);
        let mut stages = Vec::with_capacity(spec.layers.len());
        for (l, shape) in spec.layers.iter().zip(&trace) {
            let stage = match *l {
                LayerSpec::Stem {
                    out,
                    kernel,
                    stride,
                    pad,
                } => Stage::Stem(
                    Conv2d::new("stem.conv", c, out, kernel, stride, pad, &mut rng),
                    BnRelu::new("stem.norm", out),
                ),
                LayerSpec::MaxPool { kernel, stride, pad } => Stage::MaxPool {
                    kernel,
                    stride,
                    pad,
                    cache: None,
                },
                LayerSpec::DenseBlock {
                    layers,
                    growth,
                    bottleneck,
                } => {
                    n_blocks += 1;
                    Stage::Block(DenseBlock::new(
                        &format!("block{n_blocks}"),
                        c,
                        layers,
                        growth,
                        bottleneck,
                        &mut rng,
                    ))
                }
                LayerSpec::Transition => {
                    n_trans += 1;
                    Stage::Transition(Transition::new(&format!("transition{n_trans}"), c, &mut rng))
                }
                LayerSpec::GlobalAvgPool => Stage::GlobalAvgPool(None),
                LayerSpec::Linear { out } => Stage::Linear(Linear::new("classifier", c, out, &mut rng)),
                LayerSpec::Softmax => Stage::Softmax,
            };
            stages.push(stage);
            c = shape[0];
        }
        Ok(Self {
            spec: spec.clone(),
            stages,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes().expect("validated at construction")
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        let s = self.spec.input_size;
        if (c, h, w) != (self.spec.input_channels, s, s) {
            return Err(Error::DimensionMismatch(format!(
                "model input must be [N, {}, {s}, {s}], got {:?}",
                self.spec.input_channels,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Eval-mode class probabilities. Pure: the model is not touched.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut a = x.clone();
        for s in &self.stages {
            a = s.eval(&a)?;
        }
        Ok(a)
    }

    /// Eval-mode output shape of each stage, starting with the input.
    pub fn shape_trace(&self, x: &Tensor<T>) -> Result<Vec<(&'static str, Vec<usize>)>> {
        self.check_input(x)?;
        let mut trace = vec![("input", x.shape().to_vec())];
        let mut a = x.clone();
        for s in &self.stages {
            a = s.eval(&a)?;
            trace.push((s.name(), a.shape().to_vec()));
        }
        Ok(trace)
    }

    /// Probabilities; `Mode::Train` uses batch statistics, updates running
    /// statistics and keeps activations for [`DenseNet::backward`].
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let logits = self.forward_logits(x, mode)?;
        softmax(&logits)
    }

    /// Everything up to, not including, the softmax.
    pub fn forward_logits(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let (last, body) = self.stages.split_last_mut().expect("non-empty");
        debug_assert!(matches!(last, Stage::Softmax));
        let mut a = x.clone();
        for s in body {
            a = match mode {
                Mode::Train => s.forward(a)?,
                Mode::Eval => s.eval(&a)?,
            };
        }
        Ok(a)
    }

    /// Accumulates parameter gradients from the gradient w.r.t. the logits
    /// of the last training forward; returns the input gradient.
    pub fn backward(&mut self, dlogits: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.stages.len();
        let mut g = dlogits.clone();
        for s in self.stages[..n - 1].iter_mut().rev() {
            g = s.backward(&g)?;
        }
        Ok(g)
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = Vec::new();
        for s in &mut self.stages {
            match s {
                Stage::Stem(conv, norm) => {
                    conv.parameters_mut(&mut out);
                    norm.bn.parameters_mut(&mut out);
                }
                Stage::Block(b) => b.parameters_mut(&mut out),
                Stage::Transition(t) => t.parameters_mut(&mut out),
                Stage::Linear(l) => l.parameters_mut(&mut out),
                Stage::MaxPool { .. } | Stage::GlobalAvgPool(_) | Stage::Softmax => {}
            }
        }
        out
    }

    pub fn zero_grad(&mut self) {
        self.parameters_mut().into_iter().for_each(Parameter::zero_grad);
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t, trainable| {
            if trainable {
                n += t.len();
            }
        });
        n
    }

    pub fn dense_blocks(&self) -> Vec<&DenseBlock<T>> {
        self.stages
            .iter()
            .filter_map(|s| match s {
                Stage::Block(b) => Some(b),
                _ => None,
            })
            .collect()
    }

    /// Every stored tensor (parameters and running statistics) in file order.
    pub fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, bool)) {
        for s in &self.stages {
            if let Stage::Stem(conv, norm) = s {
                conv.visit(f);
                norm.bn.visit(f);
            } else if let Some(m) = s.module() {
                m.visit(f);
            }
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, bool)) {
        for s in &mut self.stages {
            match s {
                Stage::Stem(conv, norm) => {
                    conv.visit_mut(f);
                    norm.bn.visit_mut(f);
                }
                Stage::Block(b) => b.visit_mut(f),
                Stage::Transition(t) => t.visit_mut(f),
                Stage::Linear(l) => l.visit_mut(f),
                Stage::MaxPool { .. } | Stage::GlobalAvgPool(_) | Stage::Softmax => {}
            }
        }
    }
}
