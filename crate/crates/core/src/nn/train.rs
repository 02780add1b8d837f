use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ColorImage, DefectClass, Raster};

use super::layers::Mode;
use super::model::DenseNet;
use super::ops::softmax_cross_entropy;
use super::optim::{sgd_step, TrainConfig};
use super::tensor::Tensor;

/// A classifier input: an RGB crop already resized to the model input.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledCrop {
    pub image: ColorImage,
    pub class: DefectClass,
}

/// `[N, 3, H, W]` with channels scaled to `[0, 1]`.
pub fn images_to_tensor(images: &[&ColorImage]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::EmptyDataset("no images to batch".into()))?;
    let (w, h) = (first.width(), first.height());
    let plane = w * h;
    let mut data = vec![0f32; images.len() * 3 * plane];
    for (i, img) in images.iter().enumerate() {
        if (img.width(), img.height()) != (w, h) {
            return Err(Error::DimensionMismatch(format!(
                "batch mixes {w}x{h} with {}x{}",
                img.width(),
                img.height()
            )));
        }
        let dst = &mut data[i * 3 * plane..(i + 1) * 3 * plane];
        for (p, px) in img.data().chunks_exact(3).enumerate() {
            for c in 0..3 {
                dst[c * plane + p] = px[c] as f32 / 255.0;
            }
        }
    }
    Tensor::from_vec(&[images.len(), 3, h, w], data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose weights the model holds after training.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

/// One SGD step on a batch; returns the batch loss before the update.
pub fn train_step(model: &mut DenseNet, images: &Tensor, labels: &[usize], lr: f64, cfg: &TrainConfig) -> Result<f64> {
    let logits = model.forward_logits(images, Mode::Train)?;
    let (loss, dlogits) = softmax_cross_entropy(&logits, labels)?;
    model.zero_grad();
    model.backward(&dlogits)?;
    sgd_step(&mut model.parameters_mut(), lr, cfg.momentum, cfg.weight_decay);
    Ok(loss as f64)
}

pub fn train(
    model: &mut DenseNet,
    train_set: &[LabeledCrop],
    val_set: &[LabeledCrop],
    cfg: &TrainConfig,
) -> Result<TrainingLog> {
    train_with(model, train_set, val_set, cfg, |_| {})
}

/// Trains for `cfg.epochs` epochs, calling `on_epoch` after each, and leaves
/// the model holding the weights of the epoch with the best validation
/// accuracy (earliest on ties).
pub fn train_with(
    model: &mut DenseNet,
    train_set: &[LabeledCrop],
    val_set: &[LabeledCrop],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainingLog> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("training set".into()));
    }
    if val_set.is_empty() {
        return Err(Error::EmptyDataset("validation set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = TrainingLog::default();
    let mut best: Option<DenseNet> = None;
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let imgs: Vec<&ColorImage> = chunk.iter().map(|&i| &train_set[i].image).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_set[i].class.ordinal()).collect();
            let x = images_to_tensor(&imgs)?;
            let logits = model.forward_logits(&x, Mode::Train)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &labels)?;
            correct += argmax_rows(&logits).iter().zip(&labels).filter(|(p, l)| p == l).count();
            loss_sum += loss as f64 * chunk.len() as f64;
            model.zero_grad();
            model.backward(&dlogits)?;
            sgd_step(&mut model.parameters_mut(), lr, cfg.momentum, cfg.weight_decay);
        }
        let val_accuracy = accuracy(model, val_set)?;
        let entry = EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            val_accuracy,
        };
        on_epoch(&entry);
        if best.is_none() || val_accuracy > log.best_val_accuracy {
            log.best_epoch = epoch;
            log.best_val_accuracy = val_accuracy;
            best = Some(model.clone());
        }
        log.epochs.push(entry);
    }
    if let Some(b) = best {
        *model = b;
    }
    Ok(log)
}

fn argmax_rows(t: &Tensor) -> Vec<usize> {
    let k = t.shape()[1];
    t.data()
        .chunks_exact(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(
                    (0, f32::NEG_INFINITY),
                    |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
                )
                .0
        })
        .collect()
}

const INFER_BATCH: usize = 16;

/// Most probable class and the full softmax row.
pub type Prediction = (DefectClass, [f32; 6]);

/// Eval-mode predictions for many crops; chunks run in parallel and the
/// result does not depend on the chunking.
pub fn predict_batch(model: &DenseNet, crops: &[&ColorImage]) -> Result<Vec<Prediction>> {
    if model.num_classes() != DefectClass::COUNT {
        return Err(Error::InvalidArgument(format!(
            "model has {} outputs, expected {}",
            model.num_classes(),
            DefectClass::COUNT
        )));
    }
    let parts: Vec<Result<Vec<Prediction>>> = crops
        .par_chunks(INFER_BATCH)
        .map(|chunk| {
            let p = model.infer(&images_to_tensor(chunk)?)?;
            Ok(p.data()
                .chunks_exact(6)
                .map(|row| {
                    let mut probs = [0f32; 6];
                    probs.copy_from_slice(row);
                    let best = argmax_rows(&Tensor::from_vec(&[1, 6], row.to_vec()).expect("1x6"))[0];
                    (DefectClass::from_ordinal(best).expect("six classes"), probs)
                })
                .collect())
        })
        .collect();
    let mut out = Vec::with_capacity(crops.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn predict(model: &DenseNet, crop: &ColorImage) -> Result<Prediction> {
    Ok(predict_batch(model, &[crop])?.remove(0))
}

/// Fraction of crops whose predicted class matches the label.
pub fn accuracy(model: &DenseNet, data: &[LabeledCrop]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("accuracy over no samples".into()));
    }
    let imgs: Vec<&ColorImage> = data.iter().map(|s| &s.image).collect();
    let preds = predict_batch(model, &imgs)?;
    let hits = preds.iter().zip(data).filter(|((p, _), s)| *p == s.class).count();
    Ok(hits as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelSpec;

    fn solid(rgb: [u8; 3]) -> ColorImage {
        let mut img = ColorImage::new(64, 64);
        for y in 0..64 {
            for x in 0..64 {
                img.put(x, y, rgb);
            }
        }
        img
    }

    #[test]
    fn tensor_layout_is_planar() {
        let mut img = ColorImage::new(2, 1);
        img.put(0, 0, [255, 0, 51]);
        img.put(1, 0, [0, 255, 0]);
        let t = images_to_tensor(&[&img]).unwrap();
        assert_eq!(t.shape(), &[1, 3, 1, 2]);
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 1.0, 0.2, 0.0]);
    }

    #[test]
    fn empty_sets_rejected() {
        let mut m = DenseNet::new(&ModelSpec::default(), 1).unwrap();
        let one = vec![LabeledCrop {
            image: solid([1, 2, 3]),
            class: DefectClass::Spur,
        }];
        let cfg = TrainConfig {
            epochs: 1,
            ..Default::default()
        };
        assert!(matches!(train(&mut m, &[], &one, &cfg), Err(Error::EmptyDataset(_))));
        assert!(matches!(train(&mut m, &one, &[], &cfg), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn chunking_does_not_change_predictions() {
        let m = DenseNet::new(&ModelSpec::default(), 3).unwrap();
        let imgs: Vec<ColorImage> = (0..20).map(|i| solid([i * 12, 200 - i * 5, 7 * i])).collect();
        let refs: Vec<&ColorImage> = imgs.iter().collect();
        let batched = predict_batch(&m, &refs).unwrap();
        for (img, b) in imgs.iter().zip(&batched) {
            assert_eq!(&predict(&m, img).unwrap(), b);
        }
    }
}
