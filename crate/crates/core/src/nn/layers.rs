//! Stateful layers: parameters, running statistics and the activations a
//! training-mode forward keeps for its backward pass.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::ops::{
    avgpool_backward, avgpool_forward, batchnorm_backward, batchnorm_eval, batchnorm_train, conv2d_backward,
    conv2d_forward, linear_backward, linear_forward, relu, relu_backward, BatchNormCache,
};
use super::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A trainable tensor with its gradient and momentum buffer.
#[derive(Clone, Debug)]
pub struct Parameter<T: Scalar = f32> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub momentum: Tensor<T>,
    /// Whether weight decay applies (conv and linear weights only).
    pub decay: bool,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>, decay: bool) -> Self {
        let grad = Tensor::zeros(value.shape());
        let momentum = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
            momentum,
            decay,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    fn accumulate(&mut self, g: &Tensor<T>) {
        self.grad.add_assign(g).expect("gradient shape matches its parameter");
    }
}

/// Tensor traversal in a fixed order. The `bool` passed to visitors is false
/// for running statistics.
pub trait Module<T: Scalar> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, bool));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, bool));
    fn parameters_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter<T>>);
}

fn he_normal<T: Scalar, R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let d = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let data = (0..shape.iter().product::<usize>())
        .map(|_| T::from_f64_lossy(d.sample(rng)))
        .collect();
    Tensor::from_vec(shape, data).expect("sized from shape")
}

#[derive(Clone, Debug)]
pub struct Conv2d<T: Scalar = f32> {
    pub weight: Parameter<T>,
    pub stride: usize,
    pub pad: usize,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng>(
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: Parameter::new(
                format!("{name}.weight"),
                he_normal(&[out_c, in_c, k, k], in_c * k * k, rng),
                true,
            ),
            stride,
            pad,
            input: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d_forward(x, &self.weight.value, self.stride, self.pad)
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let y = self.eval(&x)?;
        self.input = Some(x);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or_else(no_cache)?;
        let (dx, dw) = conv2d_backward(&x, &self.weight.value, dy, self.stride, self.pad)?;
        self.weight.accumulate(&dw);
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, bool)) {
        f(&self.weight.name, &self.weight.value, true);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, bool)) {
        f(&self.weight.name, &mut self.weight.value, true);
    }

    fn parameters_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter<T>>) {
        out.push(&mut self.weight);
    }
}

fn no_cache() -> Error {
    Error::InvalidArgument("backward called without a preceding training forward".into())
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d<T: Scalar = f32> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    running_mean_name: String,
    running_var_name: String,
    pub eps: T,
    /// Weight of the newest batch in the running statistics.
    pub momentum: T,
    cache: Option<BatchNormCache<T>>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Parameter::new(format!("{name}.gamma"), Tensor::filled(&[channels], T::one()), false),
            beta: Parameter::new(format!("{name}.beta"), Tensor::zeros(&[channels]), false),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], T::one()),
            running_mean_name: format!("{name}.running_mean"),
            running_var_name: format!("{name}.running_var"),
            eps: T::from_f64_lossy(1e-5),
            momentum: T::from_f64_lossy(0.1),
            cache: None,
        }
    }

    pub fn eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        batchnorm_eval(
            x,
            &self.gamma.value,
            &self.beta.value,
            &self.running_mean,
            &self.running_var,
            self.eps,
        )
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, cache) = batchnorm_train(x, &self.gamma.value, &self.beta.value, self.eps)?;
        let (n, _, h, w) = x.dims4()?;
        let m = T::from_usize(n * h * w).expect("count");
        let unbias = m / (m - T::one());
        let keep = T::one() - self.momentum;
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(&cache.mean) {
            *r = keep * *r + self.momentum * b;
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(&cache.var) {
            *r = keep * *r + self.momentum * b * unbias;
        }
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(no_cache)?;
        let (dx, dg, db) = batchnorm_backward(dy, &self.gamma.value, &cache)?;
        self.gamma.accumulate(&dg);
        self.beta.accumulate(&db);
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for BatchNorm2d<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, bool)) {
        f(&self.gamma.name, &self.gamma.value, true);
        f(&self.beta.name, &self.beta.value, true);
        f(&self.running_mean_name, &self.running_mean, false);
        f(&self.running_var_name, &self.running_var, false);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, bool)) {
        f(&self.gamma.name, &mut self.gamma.value, true);
        f(&self.beta.name, &mut self.beta.value, true);
        f(&self.running_mean_name, &mut self.running_mean, false);
        f(&self.running_var_name, &mut self.running_var, false);
    }

    fn parameters_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter<T>>) {
        out.push(&mut self.gamma);
        out.push(&mut self.beta);
    }
}

/// BN followed by ReLU, the pre-activation unit in front of every conv.
#[derive(Clone, Debug)]
pub struct BnRelu<T: Scalar = f32> {
    pub bn: BatchNorm2d<T>,
    pre: Option<Tensor<T>>,
}

impl<T: Scalar> BnRelu<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            bn: BatchNorm2d::new(name, channels),
            pre: None,
        }
    }

    pub fn eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(relu(&self.bn.eval(x)?))
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let pre = self.bn.forward(x)?;
        let y = relu(&pre);
        self.pre = Some(pre);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let pre = self.pre.take().ok_or_else(no_cache)?;
        self.bn.backward(&relu_backward(&pre, dy)?)
    }
}

/// BN-ReLU-Conv1x1-BN-ReLU-Conv3x3 producing `growth` feature maps.
#[derive(Clone, Debug)]
pub struct DenseLayer<T: Scalar = f32> {
    pub norm1: BnRelu<T>,
    pub conv1: Conv2d<T>,
    pub norm2: BnRelu<T>,
    pub conv2: Conv2d<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new<R: Rng>(name: &str, in_c: usize, growth: usize, bottleneck: usize, rng: &mut R) -> Self {
        Self {
            norm1: BnRelu::new(&format!("{name}.norm1"), in_c),
            conv1: Conv2d::new(&format!("{name}.conv1"), in_c, bottleneck, 1, 1, 0, rng),
            norm2: BnRelu::new(&format!("{name}.norm2"), bottleneck),
            conv2: Conv2d::new(&format!("{name}.conv2"), bottleneck, growth, 3, 1, 1, rng),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.conv1.weight.value.shape()[1]
    }

    pub fn bottleneck_channels(&self) -> usize {
        self.conv1.out_channels()
    }

    pub fn eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let a = self.conv1.eval(&self.norm1.eval(x)?)?;
        self.conv2.eval(&self.norm2.eval(&a)?)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let a = self.conv1.forward(self.norm1.forward(x)?)?;
        self.conv2.forward(self.norm2.forward(&a)?)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.norm2.backward(&self.conv2.backward(dy)?)?;
        self.norm1.backward(&self.conv1.backward(&g)?)
    }
}

impl<T: Scalar> Module<T> for DenseLayer<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, bool)) {
        self.norm1.bn.visit(f);
        self.conv1.visit(f);
        self.norm2.bn.visit(f);
        self.conv2.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, bool)) {
        self.norm1.bn.visit_mut(f);
        self.conv1.visit_mut(f);
        self.norm2.bn.visit_mut(f);
        self.conv2.visit_mut(f);
    }

    fn parameters_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter<T>>) {
        self.norm1.bn.parameters_mut(out);
        self.conv1.parameters_mut(out);
        self.norm2.bn.parameters_mut(out);
        self.conv2.parameters_mut(out);
    }
}

/// Each layer consumes the channel concatenation of the block input and all
/// earlier layer outputs; the block returns the concatenation of everything.
#[derive(Clone, Debug)]
pub struct DenseBlock<T: Scalar = f32> {
    pub layers: Vec<DenseLayer<T>>,
}

impl<T: Scalar> DenseBlock<T> {
    pub fn new<R: Rng>(
        name: &str,
        in_c: usize,
        n_layers: usize,
        growth: usize,
        bottleneck: usize,
        rng: &mut R,
    ) -> Self {
        let layers = (0..n_layers)
            .map(|l| {
                DenseLayer::new(
                    &format!("{name}.layer{}", l + 1),
                    in_c + growth * l,
                    growth,
                    bottleneck,
                    rng,
                )
            })
            .collect();
        Self { layers }
    }

    pub fn out_channels(&self) -> usize {
        self.layers
            .last()
            .map_or(0, |l| l.in_channels() + l.conv2.out_channels())
    }

    /// Feature-map routes as `(source node, consuming layer)`: node 0 is the
    /// block input and node `l` the output of layer `l`.
    pub fn connections(&self) -> Vec<(usize, usize)> {
        (1..=self.layers.len())
            .flat_map(|l| (0..l).map(move |src| (src, l)))
            .collect()
    }

    pub fn eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut feats = x.clone();
        for layer in &self.layers {
            let out = layer.eval(&feats)?;
            feats = Tensor::concat_channels(&[&feats, &out])?;
        }
        Ok(feats)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut feats = x.clone();
        for layer in &mut self.layers {
            let out = layer.forward(&feats)?;
            feats = Tensor::concat_channels(&[&feats, &out])?;
        }
        Ok(feats)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let mut grad = dy.clone();
        for layer in self.layers.iter_mut().rev() {
            let c_in = layer.in_channels();
            let d_out = grad.channel_slice(c_in, layer.conv2.out_channels())?;
            let mut d_in = grad.channel_slice(0, c_in)?;
            d_in.add_assign(&layer.backward(&d_out)?)?;
            grad = d_in;
        }
        Ok(grad)
    }
}

impl<T: Scalar> Module<T> for DenseBlock<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, bool)) {
        self.layers.iter().for_each(|l| l.visit(f));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, bool)) {
        self.layers.iter_mut().for_each(|l| l.visit_mut(f));
    }

    fn parameters_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter<T>>) {
        self.layers.iter_mut().for_each(|l| l.parameters_mut(out));
    }
}

/// BN-ReLU-Conv1x1 to half the channels, then 2x2 average pooling.
#[derive(Clone, Debug)]
pub struct Transition<T: Scalar = f32> {
    pub norm: BnRelu<T>,
    pub conv: Conv2d<T>,
    pooled: Option<Vec<usize>>,
}

impl<T: Scalar> Transition<T> {
    pub fn new<R: Rng>(name: &str, in_c: usize, rng: &mut R) -> Self {
        Self {
            norm: BnRelu::new(&format!("{name}.norm"), in_c),
            conv: Conv2d::new(&format!("{name}.conv"), in_c, in_c / 2, 1, 1, 0, rng),
            pooled: None,
        }
    }

    pub fn eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        avgpool_forward(&self.conv.eval(&self.norm.eval(x)?)?, 2, 2)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let c = self.conv.forward(self.norm.forward(x)?)?;
        self.pooled = Some(c.shape().to_vec());
        avgpool_forward(&c, 2, 2)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.pooled.take().ok_or_else(no_cache)?;
        let g = avgpool_backward(&shape, 2, 2, dy)?;
        self.norm.backward(&self.conv.backward(&g)?)
    }
}

impl<T: Scalar> Module<T> for Transition<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, bool)) {
        self.norm.bn.visit(f);
        self.conv.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, bool)) {
        self.norm.bn.visit_mut(f);
        self.conv.visit_mut(f);
    }

    fn parameters_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter<T>>) {
        self.norm.bn.parameters_mut(out);
        self.conv.parameters_mut(out);
    }
}

#[derive(Clone, Debug)]
pub struct Linear<T: Scalar = f32> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng>(name: &str, in_f: usize, out_f: usize, rng: &mut R) -> Self {
        let d = Normal::new(0.0, (1.0 / in_f as f64).sqrt()).expect("positive std");
        let w = (0..in_f * out_f).map(|_| T::from_f64_lossy(d.sample(rng))).collect();
        Self {
            weight: Parameter::new(
                format!("{name}.weight"),
                Tensor::from_vec(&[out_f, in_f], w).expect("sized"),
                true,
            ),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[out_f]), false),
            input: None,
        }
    }

    pub fn eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        linear_forward(x, &self.weight.value, &self.bias.value)
    }

    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let y = self.eval(&x)?;
        self.input = Some(x);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or_else(no_cache)?;
        let (dx, dw, db) = linear_backward(&x, &self.weight.value, dy)?;
        self.weight.accumulate(&dw);
        self.bias.accumulate(&db);
        Ok(dx)
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>, bool)) {
        f(&self.weight.name, &self.weight.value, true);
        f(&self.bias.name, &self.bias.value, true);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, bool)) {
        f(&self.weight.name, &mut self.weight.value, true);
        f(&self.bias.name, &mut self.bias.value, true);
    }

    fn parameters_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter<T>>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}
