use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{Batch, Dataset, Gradients, Network};
use super::Scalar;
use crate::error::{LemError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(LemError::InvalidInput(format!(
                "learning rate {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(LemError::InvalidInput(
                "batch size and epochs must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Adam with the usual moment coefficients (0.9, 0.999) and eps 1e-8.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Gradients<T>,
    v: Gradients<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(net: &Network<T>) -> Self {
        let zeros = || Gradients {
            weights: net.layers().iter().map(|l| vec![T::zero(); l.weights.len()]).collect(),
            biases: net.layers().iter().map(|l| vec![T::zero(); l.bias.len()]).collect(),
        };
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn update(&mut self, net: &mut Network<T>, grads: &Gradients<T>, lr: f64) {
        self.t += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let c1 = T::from_f64(1.0 - self.beta1.powi(self.t as i32));
        let c2 = T::from_f64(1.0 - self.beta2.powi(self.t as i32));
        let lr = T::from_f64(lr);
        let eps = T::from_f64(self.eps);
        let one = T::one();

        let step = |p: &mut [T], g: &[T], m: &mut [T], v: &mut [T]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        for (i, layer) in net.layers_mut().iter_mut().enumerate() {
            step(
                &mut layer.weights,
                &grads.weights[i],
                &mut self.m.weights[i],
                &mut self.v.weights[i],
            );
            step(
                &mut layer.bias,
                &grads.biases[i],
                &mut self.m.biases[i],
                &mut self.v.biases[i],
            );
        }
    }
}

/// Single-writer training loop state for one network.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub config: TrainConfig,
    adam: Adam<T>,
    batches_seen: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(net: &Network<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            config,
            adam: Adam::new(net),
            batches_seen: 0,
        })
    }

    pub fn batches_seen(&self) -> usize {
        self.batches_seen
    }

    /// One optimizer step on `batch`; returns the loss before the update.
    pub fn step(&mut self, net: &mut Network<T>, batch: &Batch<'_, T>) -> Result<f64> {
        let index = self.batches_seen;
        self.batches_seen += 1;
        let (loss, grads) = net.loss_and_gradients(batch)?;
        if !loss.is_finite() {
            return Err(LemError::NonFiniteLoss { batch_index: index });
        }
        self.adam.update(net, &grads, self.config.learning_rate);
        Ok(loss)
    }

    /// One shuffled pass over `data`; returns the mean batch loss.
    pub fn epoch<R: Rng>(
        &mut self,
        net: &mut Network<T>,
        data: &Dataset<T>,
        rng: &mut R,
    ) -> Result<f64> {
        if data.is_empty() {
            return Err(LemError::InvalidInput("empty training set".into()));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(rng);
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        let mut total = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(self.config.batch_size) {
            data.gather(chunk, &mut inputs, &mut targets);
            let batch = Batch {
                inputs: &inputs,
                targets: &targets,
            };
            total += self.step(net, &batch)? * chunk.len() as f64;
            count += chunk.len();
        }
        Ok(total / count as f64)
    }
}

/// Mean loss over a dataset, evaluated in chunks.
pub fn dataset_loss<T: Scalar>(net: &Network<T>, data: &Dataset<T>) -> Result<f64> {
    if data.is_empty() {
        return Err(LemError::InvalidInput("empty evaluation set".into()));
    }
    const CHUNK: usize = 4096;
    let mut total = 0.0;
    let n = data.len();
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let batch = Batch {
            inputs: &data.inputs[start * data.input_dim..end * data.input_dim],
            targets: &data.targets[start * data.target_width..end * data.target_width],
        };
        total += net.loss(&batch)? * (end - start) as f64;
        start = end;
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{Activation, Head, NetworkSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_net(seed: u64) -> Network<f32> {
        Network::new(
            &NetworkSpec {
                input_dim: 3,
                hidden: vec![8],
                hidden_activation: Activation::Sigmoid,
                heads: vec![Head::categorical(2)],
            },
            seed,
        )
        .unwrap()
    }

    fn cfg(lr: f64) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            batch_size: 1,
            max_epochs: 1,
            seed: 0,
        }
    }

    #[test]
    fn overfits_one_sample() {
        let mut net = small_net(3);
        let mut trainer = Trainer::new(&net, cfg(0.01)).unwrap();
        let batch = Batch {
            inputs: &[0.2f32, -0.4, 0.9],
            targets: &[1],
        };
        let mut losses = Vec::new();
        for _ in 0..200 {
            losses.push(trainer.step(&mut net, &batch).unwrap());
        }
        let p = net.forward(batch.inputs).unwrap();
        assert!(p[1] > 0.99, "p = {p:?}");
        assert!(losses.windows(2).all(|w| w[1] <= w[0] + 1e-7));
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut net = small_net(4);
        let before = net.clone();
        let mut trainer = Trainer::new(&net, cfg(0.0)).unwrap();
        let batch = Batch {
            inputs: &[0.1f32, 0.5, -0.3],
            targets: &[0],
        };
        let l1 = trainer.step(&mut net, &batch).unwrap();
        let l2 = trainer.step(&mut net, &batch).unwrap();
        assert_eq!(net, before);
        assert_eq!(l1, l2);
    }

    #[test]
    fn non_finite_loss_reports_batch_index() {
        let mut net = small_net(5);
        let mut trainer = Trainer::new(&net, cfg(0.01)).unwrap();
        let ok = Batch {
            inputs: &[0.1f32, 0.5, -0.3],
            targets: &[0],
        };
        trainer.step(&mut net, &ok).unwrap();
        let bad = Batch {
            inputs: &[f32::NAN, 0.5, -0.3],
            targets: &[0],
        };
        match trainer.step(&mut net, &bad) {
            Err(LemError::NonFiniteLoss { batch_index }) => assert_eq!(batch_index, 1),
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }

    #[test]
    fn epoch_is_deterministic() {
        let mut data = Dataset::new(3, 1);
        for i in 0..50 {
            let v = i as f32 / 50.0;
            data.push(&[v, 1.0 - v, 0.5], &[(i % 2) as u16]);
        }
        let run = || {
            let mut net = small_net(6);
            let mut trainer = Trainer::new(&net, TrainConfig { batch_size: 8, ..cfg(0.01) }).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let loss = trainer.epoch(&mut net, &data, &mut rng).unwrap();
            (net, loss)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(cfg(-1.0).validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..cfg(0.1) }.validate().is_err());
        assert!(TrainConfig { max_epochs: 0, ..cfg(0.1) }.validate().is_err());
    }
}
