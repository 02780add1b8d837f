//! Independent oracles shared by the integration tests and the acceptance
//! harness. Nothing here calls into the code paths it checks.
#![allow(dead_code)]

use aoi_core::nn::{
    avgpool_backward, avgpool_forward, batchnorm_backward, batchnorm_train, conv2d_backward, conv2d_forward,
    global_avgpool_backward, global_avgpool_forward, linear_backward, linear_forward, maxpool_backward,
    maxpool_forward, relu, relu_backward, softmax_cross_entropy, DenseLayer, LayerSpec, ModelSpec, Module, Scalar,
    Tensor, Transition,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor<T: Scalar>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64(rng.random_range(-1.0..1.0)).unwrap())
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Seven nested loops straight from the definition of a zero-padded
/// strided cross-correlation.
pub fn naive_conv<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, stride: usize, pad: usize) -> Tensor<T> {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, _, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    let mut y = vec![T::zero(); n * o * ho * wo];
    for b in 0..n {
        for oc in 0..o {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = T::zero();
                    for ic in 0..c {
                        for u in 0..kh {
                            for v in 0..kw {
                                let yy = (i * stride + u) as isize - pad as isize;
                                let xx = (j * stride + v) as isize - pad as isize;
                                if yy < 0 || xx < 0 || yy >= h as isize || xx >= wd as isize {
                                    continue;
                                }
                                let xi = ((b * c + ic) * h + yy as usize) * wd + xx as usize;
                                let wi = ((oc * c + ic) * kh + u) * kw + v;
                                acc += x.data()[xi] * w.data()[wi];
                            }
                        }
                    }
                    y[((b * o + oc) * ho + i) * wo + j] = acc;
                }
            }
        }
    }
    Tensor::from_vec(&[n, o, ho, wo], y).unwrap()
}

/// Gradient magnitude below which errors are measured against this floor
/// instead: central-difference roundoff on O(1) losses is about 1e-10.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Largest relative error between `analytic` and central differences of
/// `loss` at `probes` random coordinates of `x` (every coordinate when
/// `x` is small). Step `h = 1e-5 * max(1, |x_i|)`.
pub fn fd_max_rel_err(
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
    mut loss: impl FnMut(&Tensor<f64>) -> f64,
    probes: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    assert_eq!(x.shape(), analytic.shape());
    let idx: Vec<usize> = if x.len() <= probes {
        (0..x.len()).collect()
    } else {
        (0..probes).map(|_| rng.random_range(0..x.len())).collect()
    };
    let mut worst = 0f64;
    for i in idx {
        let h = 1e-5 * x.data()[i].abs().max(1.0);
        let mut xp = x.clone();
        xp.data_mut()[i] += h;
        let mut xm = x.clone();
        xm.data_mut()[i] -= h;
        let numeric = (loss(&xp) - loss(&xm)) / (2.0 * h);
        let a = analytic.data()[i];
        let denom = a.abs().max(numeric.abs()).max(GRAD_FLOOR);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Max relative gradient error per layer kind over five random shapes each.
pub fn gradient_report(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let probes = 60;
    let mut out = Vec::new();

    let conv_shapes = [
        (1, 2, 5, 5, 3, 3, 1, 1),
        (2, 3, 6, 7, 4, 3, 2, 1),
        (2, 1, 8, 8, 2, 1, 1, 0),
        (1, 3, 9, 9, 2, 7, 2, 3),
        (3, 2, 4, 6, 3, 2, 1, 0),
    ];
    let mut worst = 0f64;
    for &(n, c, h, w, o, k, s, p) in &conv_shapes {
        let x = rand_tensor::<f64>(&[n, c, h, w], &mut r);
        let wt = rand_tensor::<f64>(&[o, c, k, k], &mut r);
        let y = conv2d_forward(&x, &wt, s, p).unwrap();
        let g = rand_tensor::<f64>(y.shape(), &mut r);
        let (dx, dw) = conv2d_backward(&x, &wt, &g, s, p).unwrap();
        worst = worst.max(fd_max_rel_err(
            &x,
            &dx,
            |v| dot(&conv2d_forward(v, &wt, s, p).unwrap(), &g),
            probes,
            &mut r,
        ));
        worst = worst.max(fd_max_rel_err(
            &wt,
            &dw,
            |v| dot(&conv2d_forward(&x, v, s, p).unwrap(), &g),
            probes,
            &mut r,
        ));
    }
    out.push(("conv2d", worst));

    let bn_shapes = [[2, 3, 4, 4], [4, 1, 2, 3], [1, 2, 5, 5], [3, 4, 1, 1], [2, 2, 3, 7]];
    let mut worst = 0f64;
    for shape in &bn_shapes {
        let c = shape[1];
        let x = rand_tensor::<f64>(shape, &mut r);
        let gamma = rand_tensor::<f64>(&[c], &mut r);
        let beta = rand_tensor::<f64>(&[c], &mut r);
        let eps = 1e-5;
        let (y, cache) = batchnorm_train(&x, &gamma, &beta, eps).unwrap();
        let g = rand_tensor::<f64>(y.shape(), &mut r);
        let (dx, dg, db) = batchnorm_backward(&g, &gamma, &cache).unwrap();
        let f =
            |x: &Tensor<f64>, gm: &Tensor<f64>, bt: &Tensor<f64>| dot(&batchnorm_train(x, gm, bt, eps).unwrap().0, &g);
        worst = worst.max(fd_max_rel_err(&x, &dx, |v| f(v, &gamma, &beta), probes, &mut r));
        worst = worst.max(fd_max_rel_err(&gamma, &dg, |v| f(&x, v, &beta), probes, &mut r));
        worst = worst.max(fd_max_rel_err(&beta, &db, |v| f(&x, &gamma, v), probes, &mut r));
    }
    out.push(("batchnorm", worst));

    let act_shapes = [[1, 1, 4, 4], [2, 3, 5, 5], [1, 2, 7, 3], [3, 1, 6, 6], [2, 2, 8, 8]];
    let mut worst = 0f64;
    for shape in &act_shapes {
        let x = rand_tensor::<f64>(shape, &mut r);
        let g = rand_tensor::<f64>(shape, &mut r);
        let dx = relu_backward(&x, &g).unwrap();
        worst = worst.max(fd_max_rel_err(&x, &dx, |v| dot(&relu(v), &g), probes, &mut r));
    }
    out.push(("relu", worst));

    let mut worst = 0f64;
    for shape in &act_shapes {
        let x = rand_tensor::<f64>(shape, &mut r);
        let (y, arg) = maxpool_forward(&x, 3, 2, 1).unwrap();
        let g = rand_tensor::<f64>(y.shape(), &mut r);
        let dx = maxpool_backward(x.shape(), &arg, &g).unwrap();
        worst = worst.max(fd_max_rel_err(
            &x,
            &dx,
            |v| dot(&maxpool_forward(v, 3, 2, 1).unwrap().0, &g),
            probes,
            &mut r,
        ));
    }
    out.push(("maxpool", worst));

    let even_shapes = [[1, 1, 2, 2], [2, 3, 4, 4], [1, 2, 6, 8], [3, 1, 4, 2], [2, 2, 8, 8]];
    let mut worst = 0f64;
    for shape in &even_shapes {
        let x = rand_tensor::<f64>(shape, &mut r);
        let y = avgpool_forward(&x, 2, 2).unwrap();
        let g = rand_tensor::<f64>(y.shape(), &mut r);
        let dx = avgpool_backward(x.shape(), 2, 2, &g).unwrap();
        worst = worst.max(fd_max_rel_err(
            &x,
            &dx,
            |v| dot(&avgpool_forward(v, 2, 2).unwrap(), &g),
            probes,
            &mut r,
        ));
    }
    out.push(("avgpool", worst));

    let mut worst = 0f64;
    for shape in &act_shapes {
        let x = rand_tensor::<f64>(shape, &mut r);
        let y = global_avgpool_forward(&x).unwrap();
        let g = rand_tensor::<f64>(y.shape(), &mut r);
        let dx = global_avgpool_backward(x.shape(), &g).unwrap();
        worst = worst.max(fd_max_rel_err(
            &x,
            &dx,
            |v| dot(&global_avgpool_forward(v).unwrap(), &g),
            probes,
            &mut r,
        ));
    }
    out.push(("global_avgpool", worst));

    let lin_shapes = [(1, 3, 2), (4, 5, 6), (2, 10, 3), (3, 1, 4), (8, 7, 6)];
    let mut worst = 0f64;
    for &(n, f, o) in &lin_shapes {
        let x = rand_tensor::<f64>(&[n, f], &mut r);
        let w = rand_tensor::<f64>(&[o, f], &mut r);
        let b = rand_tensor::<f64>(&[o], &mut r);
        let y = linear_forward(&x, &w, &b).unwrap();
        let g = rand_tensor::<f64>(y.shape(), &mut r);
        let (dx, dw, db) = linear_backward(&x, &w, &g).unwrap();
        worst = worst.max(fd_max_rel_err(
            &x,
            &dx,
            |v| dot(&linear_forward(v, &w, &b).unwrap(), &g),
            probes,
            &mut r,
        ));
        worst = worst.max(fd_max_rel_err(
            &w,
            &dw,
            |v| dot(&linear_forward(&x, v, &b).unwrap(), &g),
            probes,
            &mut r,
        ));
        worst = worst.max(fd_max_rel_err(
            &b,
            &db,
            |v| dot(&linear_forward(&x, &w, v).unwrap(), &g),
            probes,
            &mut r,
        ));
    }
    out.push(("linear", worst));

    let ce_shapes = [(1, 6), (4, 6), (3, 2), (8, 6), (2, 10)];
    let mut worst = 0f64;
    for &(n, k) in &ce_shapes {
        let x = rand_tensor::<f64>(&[n, k], &mut r).map(|v| 3.0 * v);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let (_, dx) = softmax_cross_entropy(&x, &labels).unwrap();
        worst = worst.max(fd_max_rel_err(
            &x,
            &dx,
            |v| softmax_cross_entropy(v, &labels).unwrap().0,
            probes,
            &mut r,
        ));
    }
    out.push(("softmax_cross_entropy", worst));

    // composite units, all parameters through the module's own backward
    let dense_shapes = [
        (2, 4, 3, 3, 2, 4),
        (1, 3, 4, 4, 3, 2),
        (3, 2, 2, 3, 1, 3),
        (2, 5, 3, 2, 2, 2),
        (2, 1, 4, 4, 2, 5),
    ];
    let mut worst = 0f64;
    for (i, &(n, c, h, w, growth, bottleneck)) in dense_shapes.iter().enumerate() {
        let mut layer = DenseLayer::<f64>::new("d", c, growth, bottleneck, &mut rng(seed ^ i as u64));
        worst = worst.max(module_check(
            &mut layer,
            &[n, c, h, w],
            |m, x| m.forward(x).unwrap(),
            |m, g| m.backward(g).unwrap(),
            &mut r,
        ));
    }
    out.push(("dense_layer", worst));

    let trans_shapes = [[2, 4, 4, 4], [1, 2, 6, 6], [3, 6, 2, 2], [2, 8, 4, 2], [2, 2, 8, 8]];
    let mut worst = 0f64;
    for (i, shape) in trans_shapes.iter().enumerate() {
        let mut t = Transition::<f64>::new("t", shape[1], &mut rng(seed ^ (100 + i as u64)));
        worst = worst.max(module_check(
            &mut t,
            shape,
            |m, x| m.forward(x).unwrap(),
            |m, g| m.backward(g).unwrap(),
            &mut r,
        ));
    }
    out.push(("transition", worst));

    out
}

/// Checks the input gradient and every parameter gradient of a module with
/// a training-mode forward.
fn module_check<M: Module<f64> + Clone>(
    module: &mut M,
    shape: &[usize],
    fwd: impl Fn(&mut M, &Tensor<f64>) -> Tensor<f64>,
    bwd: impl Fn(&mut M, &Tensor<f64>) -> Tensor<f64>,
    r: &mut ChaCha8Rng,
) -> f64 {
    let x = rand_tensor::<f64>(shape, r);
    let y = fwd(module, &x);
    let g = rand_tensor::<f64>(y.shape(), r);
    module.params().into_iter().for_each(|p| p.zero_grad());
    let dx = bwd(module, &g);
    let base = module.clone();
    let mut worst = fd_max_rel_err(&x, &dx, |v| dot(&fwd(&mut base.clone(), v), &g), 40, r);
    let n_params = base.clone().params().len();
    for pi in 0..n_params {
        let (value, grad) = {
            let mut m = module.clone();
            let ps = m.params();
            (ps[pi].value.clone(), ps[pi].grad.clone())
        };
        let err = fd_max_rel_err(
            &value,
            &grad,
            |v| {
                let mut m = base.clone();
                m.params()[pi].value = v.clone();
                dot(&fwd(&mut m, &x), &g)
            },
            20,
            r,
        );
        worst = worst.max(err);
    }
    worst
}

trait Params<T: Scalar> {
    fn params(&mut self) -> Vec<&mut aoi_core::nn::Parameter<T>>;
}

impl<T: Scalar, M: Module<T>> Params<T> for M {
    fn params(&mut self) -> Vec<&mut aoi_core::nn::Parameter<T>> {
        let mut v = Vec::new();
        Module::parameters_mut(self, &mut v);
        v
    }
}

/// Trainable scalar count tallied row by row from the layer table, without
/// building a model.
pub fn parameter_tally(spec: &ModelSpec) -> usize {
    let mut total = 0;
    let mut c = spec.input_channels;
    for l in &spec.layers {
        match *l {
            LayerSpec::Stem { out, kernel, .. } => {
                total += c * out * kernel * kernel; // conv, no bias
                total += 2 * out; // BN gamma, beta
                c = out;
            }
            LayerSpec::DenseBlock {
                layers,
                growth,
                bottleneck,
            } => {
                for l in 1..=layers {
                    let k_in = c + growth * (l - 1);
                    total += 2 * k_in + k_in * bottleneck; // BN, 1x1
                    total += 2 * bottleneck + bottleneck * growth * 9; // BN, 3x3
                }
                c += layers * growth;
            }
            LayerSpec::Transition => {
                total += 2 * c + c * (c / 2);
                c /= 2;
            }
            LayerSpec::Linear { out } => {
                total += c * out + out;
                c = out;
            }
            LayerSpec::MaxPool { .. } | LayerSpec::GlobalAvgPool | LayerSpec::Softmax => {}
        }
    }
    total
}
