//! Mini-batch training with Adam, validation-based early stopping and
//! resumable state.

use alloc::string::ToString;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::model::{Example, LossParts, Mode, Paradox};
use crate::numerics::{AdamConfig, AdamState, ParamStore};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 4,
            patience: 10,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            bail!(Config, "batch_size must be positive");
        }
        if !(self.adam.lr >= 0.0) {
            bail!(Config, "learning rate must be non-negative, got {}", self.adam.lr);
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_l1: f64,
    pub train_l2: f64,
    pub val_loss: f64,
    pub val_l1: f64,
    pub val_l2: f64,
    pub val_perplexity: f64,
    pub improved: bool,
}

/// Everything besides the weights needed to continue a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub epochs_done: usize,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub bad_epochs: usize,
    pub adam: AdamState,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub model: Paradox,
    /// Weights of the best validation epoch so far.
    pub best: ParamStore,
    pub state: TrainState,
}

impl Trainer {
    pub fn new(model: Paradox, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(config.adam, &model.params);
        Ok(Self {
            config,
            best: model.params.clone(),
            model,
            state: TrainState {
                epochs_done: 0,
                best_val_loss: f64::INFINITY,
                best_epoch: 0,
                bad_epochs: 0,
                adam,
            },
        })
    }

    pub fn resume(model: Paradox, best: ParamStore, state: TrainState, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if state.adam.m.len() != model.params.len() || best.len() != model.params.len() {
            bail!(Compatibility, "training state does not match the model's parameters");
        }
        Ok(Self {
            config,
            model,
            best,
            state,
        })
    }

    pub fn finished(&self) -> bool {
        self.state.epochs_done >= self.config.epochs || self.state.bad_epochs >= self.config.patience
    }

    /// One pass over `train` in an epoch-seeded order, then validation.
    /// Every random stream is keyed by the epoch, so a resumed run repeats
    /// the draws an uninterrupted one would make.
    pub fn run_epoch(&mut self, train: &[Example], validation: &[Example]) -> Result<EpochLog> {
        if train.is_empty() {
            bail!(DegenerateInput, "training split is empty");
        }
        let epoch = self.state.epochs_done as u64;
        let seed = self.config.seed;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream_rng(seed, Stream::DataOrder, epoch));
        let mut dropout = stream_rng(seed, Stream::Dropout, epoch);
        let mut noise = stream_rng(seed, Stream::PersonaNoise, epoch);

        let (mut sum, mut batches) = (LossParts { total: 0.0, l1: 0.0, l2: 0.0, tokens: 0 }, 0usize);
        for idx in order.chunks(self.config.batch_size) {
            let batch: Vec<Example> = idx.iter().map(|&i| train[i].clone()).collect();
            let parts = self.step(&batch, &mut Mode::train(&mut dropout, &mut noise))?;
            sum.total += parts.total;
            sum.l1 += parts.l1;
            sum.l2 += parts.l2;
            batches += 1;
        }
        let val = self.model.evaluate_loss(validation)?;
        if !val.total.is_finite() {
            bail!(NonFinite, "validation loss is {} after epoch {}", val.total, epoch + 1);
        }
        let improved = val.total < self.state.best_val_loss;
        self.state.epochs_done += 1;
        if improved {
            self.state.best_val_loss = val.total;
            self.state.best_epoch = self.state.epochs_done;
            self.state.bad_epochs = 0;
            self.best = self.model.params.clone();
        } else {
            self.state.bad_epochs += 1;
        }
        let n = batches as f64;
        Ok(EpochLog {
            epoch: self.state.epochs_done,
            train_loss: sum.total / n,
            train_l1: sum.l1 / n,
            train_l2: sum.l2 / n,
            val_loss: val.total,
            val_l1: val.l1,
            val_l2: val.l2,
            val_perplexity: val.perplexity(),
            improved,
        })
    }

    /// Gradient step on one batch.
    pub fn step(&mut self, batch: &[Example], mode: &mut Mode<'_>) -> Result<LossParts> {
        self.model.params.zero_grads();
        let (parts, grads) = {
            let loss = self.model.batch_loss(batch, mode)?;
            let parts = loss.parts;
            (parts, loss.backward()?)
        };
        self.model.params.accumulate(&grads)?;
        if let Some(name) = self.model.params.first_non_finite() {
            bail!(
                NonFinite,
                "parameter `{}` became non-finite at optimizer step {} (loss {})",
                name,
                self.state.adam.step + 1,
                parts.total
            );
        }
        if !parts.total.is_finite() {
            bail!(NonFinite, "loss is {} at optimizer step {}", parts.total, self.state.adam.step + 1);
        }
        self.state.adam.step(&mut self.model.params)?;
        if let Some(name) = self.model.params.first_non_finite() {
            bail!(
                NonFinite,
                "parameter `{}` became non-finite after optimizer step {}",
                name.to_string(),
                self.state.adam.step
            );
        }
        Ok(parts)
    }

    /// Runs epochs until the budget or patience runs out, calling
    /// `on_epoch` after each one. The callback may use its own error type.
    pub fn fit<E: From<crate::Error>>(
        &mut self,
        train: &[Example],
        validation: &[Example],
        mut on_epoch: impl FnMut(&EpochLog, &Trainer) -> Result<(), E>,
    ) -> Result<(), E> {
        while !self.finished() {
            let log = self.run_epoch(train, validation)?;
            on_epoch(&log, self)?;
        }
        Ok(())
    }

    /// The model carrying the best validation weights.
    pub fn best_model(&self) -> Paradox {
        let mut m = self.model.clone();
        m.params = self.best.clone();
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, UserRef};
    use alloc::vec;

    fn tiny() -> ModelConfig {
        ModelConfig {
            d_model: 8,
            n_layers_enc: 1,
            n_layers_dec: 1,
            n_heads: 2,
            d_ff: 16,
            vocab_size: 12,
            n_users: 2,
            max_length: 10,
            ..ModelConfig::default()
        }
    }

    fn data() -> Vec<Example> {
        vec![
            Example {
                user: UserRef::Known(0),
                source: vec![4, 5, 6],
                target: vec![4, 5, 6],
            },
            Example {
                user: UserRef::Known(1),
                source: vec![7, 8],
                target: vec![7, 8],
            },
            Example {
                user: UserRef::Known(0),
                source: vec![9, 10, 11],
                target: vec![9, 10, 11],
            },
        ]
    }

    fn config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 2,
            patience: 100,
            seed: 4,
            adam: AdamConfig {
                lr: 1e-2,
                ..AdamConfig::default()
            },
        }
    }

    #[test]
    fn loss_decreases() {
        let mut t = Trainer::new(Paradox::new(tiny(), 1).unwrap(), config(30)).unwrap();
        let mut logs = Vec::new();
        t.fit(&data(), &data(), |l, _| {
            logs.push(*l);
            Ok::<_, crate::Error>(())
        })
        .unwrap();
        assert_eq!(logs.len(), 30);
        assert!(logs.last().unwrap().val_l1 < 0.5 * logs[0].val_l1);
        assert_eq!(t.state.best_epoch, logs.iter().rposition(|l| l.improved).unwrap() + 1);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let full = {
            let mut t = Trainer::new(Paradox::new(tiny(), 1).unwrap(), config(6)).unwrap();
            let mut logs = Vec::new();
            t.fit(&data(), &data(), |l, _| {
                logs.push(*l);
                Ok::<_, crate::Error>(())
            })
            .unwrap();
            logs
        };
        let mut first = Trainer::new(Paradox::new(tiny(), 1).unwrap(), config(3)).unwrap();
        first.fit(&data(), &data(), |_, _| Ok::<_, crate::Error>(())).unwrap();
        let mut second = Trainer::resume(first.model, first.best, first.state, config(6)).unwrap();
        let mut rest = Vec::new();
        second
            .fit(&data(), &data(), |l, _| {
                rest.push(*l);
                Ok::<_, crate::Error>(())
            })
            .unwrap();
        assert_eq!(&full[3..], &rest[..]);
    }

    #[test]
    fn patience_stops_early() {
        let mut c = config(50);
        c.patience = 2;
        c.adam.lr = 0.0;
        let mut t = Trainer::new(Paradox::new(tiny(), 1).unwrap(), c).unwrap();
        t.fit(&data(), &data(), |_, _| Ok::<_, crate::Error>(())).unwrap();
        assert_eq!(t.state.epochs_done, 3);
        assert_eq!(t.state.bad_epochs, 2);
    }

    #[test]
    fn non_finite_weights_are_named() {
        let mut t = Trainer::new(Paradox::new(tiny(), 1).unwrap(), config(1)).unwrap();
        let shape = t.model.params.by_name("out.b").unwrap().shape().to_vec();
        t.model
            .params
            .assign("out.b", &shape, vec![f64::NAN; shape.iter().product()])
            .unwrap();
        let err = t.run_epoch(&data(), &data()).unwrap_err();
        assert!(matches!(err, crate::Error::NonFinite(ref m) if m.contains("out.b")), "{err}");
    }

    #[test]
    fn linear_mode_logs_zero_kl() {
        let c = ModelConfig {
            persona_mode: crate::model::PersonaMode::Linear,
            ..tiny()
        };
        let mut t = Trainer::new(Paradox::new(c, 1).unwrap(), config(2)).unwrap();
        t.fit(&data(), &data(), |l, _| {
            assert_eq!((l.train_l2, l.val_l2), (0.0, 0.0));
            Ok::<_, crate::Error>(())
        })
        .unwrap();
    }
}
