use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::{patch_tensor, Backward, Gradients, Model};
use super::{NetError, Tensor};
use crate::patcher::Patch;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Heavy-ball coefficient; 0 gives plain SGD.
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, epochs: 10, batch_size: 16, seed: 1, momentum: 0.9 }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), NetError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || self.batch_size == 0 {
            return Err(NetError::InvalidConfig(format!(
                "learning rate {} and batch size {} must be positive",
                self.learning_rate, self.batch_size
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NetError::InvalidConfig(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    /// Mean loss over each epoch, measured before each batch update.
    pub epoch_loss: Vec<f64>,
    pub epoch_accuracy: Vec<f64>,
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

fn labeled_inputs(model: &Model, patches: &[Patch]) -> Result<Vec<(Tensor, usize)>, NetError> {
    let classes = model.output_len();
    let mut seen = vec![false; classes];
    let mut out = Vec::with_capacity(patches.len());
    for (i, p) in patches.iter().enumerate() {
        let label = p.label.ok_or(NetError::UnlabeledPatch(i))? as usize;
        if label >= classes {
            return Err(NetError::ShapeMismatch(format!("patch {i} label {label} outside {classes} classes")));
        }
        seen[label] = true;
        let x = patch_tensor(p)?;
        if x.shape() != model.input_shape() {
            return Err(NetError::ShapeMismatch(format!(
                "patch {i} is {:?}, model expects {:?}",
                x.shape(),
                model.input_shape()
            )));
        }
        out.push((x, label));
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(NetError::SingleClassDataset);
    }
    Ok(out)
}

/// Minibatch SGD on cross-entropy. Per-sample gradients may be computed in
/// parallel; they are always summed in batch order.
pub fn train(mut model: Model, patches: &[Patch], cfg: &TrainConfig) -> Result<(Model, TrainHistory), NetError> {
    cfg.validate()?;
    let data = labeled_inputs(&model, patches)?;
    let mut history = TrainHistory::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut velocity = Gradients::zeros_like(&model);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Backward> = batch
                .par_iter()
                .map(|&i| model.backward(&data[i].0, data[i].1))
                .collect::<Result<_, _>>()?;
            let mut total = Gradients::zeros_like(&model);
            for (r, &i) in results.iter().zip(batch) {
                total.add_assign(&r.grads);
                loss_sum += r.loss;
                correct += (argmax(&r.output) == data[i].1) as usize;
            }
            let scale = 1.0 / batch.len() as f64;
            for (k, layer) in model.layers_mut().iter_mut().enumerate() {
                let params = layer.weights.iter_mut().zip(velocity.weights[k].iter_mut()).zip(&total.weights[k]);
                let biases = layer.bias.iter_mut().zip(velocity.bias[k].iter_mut()).zip(&total.bias[k]);
                for ((w, v), g) in params.chain(biases) {
                    *v = cfg.momentum * *v + g * scale;
                    *w -= cfg.learning_rate * *v;
                }
            }
        }
        history.epoch_loss.push(loss_sum / data.len() as f64);
        history.epoch_accuracy.push(correct as f64 / data.len() as f64);
    }
    Ok((model, history))
}

/// Class probabilities for many patches, in input order.
pub fn predict_many(model: &Model, patches: &[Patch]) -> Result<Vec<Vec<f64>>, NetError> {
    patches.par_iter().map(|p| model.predict(p)).collect()
}

/// Fraction of labeled patches whose most probable class matches the label.
pub fn accuracy(model: &Model, patches: &[Patch]) -> Result<f64, NetError> {
    let data = labeled_inputs(model, patches)?;
    let hits: usize = data
        .par_iter()
        .map(|(x, y)| model.forward(x).map(|p| (argmax(p.values()) == *y) as usize))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    Ok(hits as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::micronet::{LayerSpec, Model};

    fn toy_patch(value: f64, label: u8) -> Patch {
        Patch { n: 2, slices: 1, data: vec![value; 4], provenance: Vec::new(), label: Some(label) }
    }

    fn toy_model() -> Model {
        Model::from_specs([2, 2, 1], &[LayerSpec::fc(4), LayerSpec::relu(), LayerSpec::fc(2), LayerSpec::softmax()], 9).unwrap()
    }

    fn toy_set() -> Vec<Patch> {
        (0..10).map(|i| if i % 2 == 0 { toy_patch(0.1 + 0.02 * i as f64, 0) } else { toy_patch(0.7 + 0.02 * i as f64, 1) }).collect()
    }

    #[test]
    fn zero_epochs_is_identity() {
        let m = toy_model();
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let (trained, h) = train(m.clone(), &toy_set(), &cfg).unwrap();
        assert_eq!(trained, m);
        assert!(h.epoch_loss.is_empty());
    }

    #[test]
    fn loss_falls_on_separable_toy_set() {
        let cfg = TrainConfig { learning_rate: 0.5, epochs: 50, batch_size: 10, seed: 3, momentum: 0.0 };
        let (_, h) = train(toy_model(), &toy_set(), &cfg).unwrap();
        // one SGD step per epoch: compare block means of ten steps
        let blocks: Vec<f64> = h.epoch_loss.chunks(10).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        for w in blocks.windows(2) {
            assert!(w[1] < w[0], "{blocks:?}");
        }
        assert!(h.epoch_loss[49] < 0.5 * h.epoch_loss[0]);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig { learning_rate: 0.2, epochs: 5, batch_size: 3, seed: 8, momentum: 0.9 };
        let a = train(toy_model(), &toy_set(), &cfg).unwrap();
        let b = train(toy_model(), &toy_set(), &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.epoch_loss.last(), b.1.epoch_loss.last());
    }

    #[test]
    fn dataset_errors() {
        let cfg = TrainConfig::default();
        let mut unlabeled = toy_set();
        unlabeled[3].label = None;
        assert!(matches!(train(toy_model(), &unlabeled, &cfg), Err(NetError::UnlabeledPatch(3))));
        let single: Vec<Patch> = (0..4).map(|_| toy_patch(0.2, 1)).collect();
        assert!(matches!(train(toy_model(), &single, &cfg), Err(NetError::SingleClassDataset)));
    }
}
