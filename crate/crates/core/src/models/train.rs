use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{arg_err, Error, Result};
use crate::models::spec::{binarize, infer, input_scale_from, ModelParams};
use crate::rng;
use crate::sparse::{se_metrics, SeMetrics};
use crate::tensor::Tensor;
use crate::training::{adam_step, backward, evaluate, AdamConfig, AdamState, LossSpec, Target};

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Raw network input (proxy image or measurement vector).
    pub input: Tensor,
    pub target: Target,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub loss: LossSpec,
    pub freeze_shifts: bool,
    /// Derive the input scale from the training inputs; otherwise keep the
    /// model's current scale.
    pub fit_input_scale: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            adam: AdamConfig::default(),
            loss: LossSpec::default(),
            freeze_shifts: false,
            fit_input_scale: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample training loss over the epoch's batches.
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
    /// Fraction of correctly classified validation samples (class heads).
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (lowest validation loss).
    pub best_epoch: Option<usize>,
}

/// Mini-batch Adam training with validation-best checkpointing.
#[derive(Clone, Debug)]
pub struct Trainer {
    params: ModelParams,
    best: Option<(f64, ModelParams)>,
    state: AdamState,
    cfg: TrainConfig,
    history: TrainHistory,
}

impl Trainer {
    pub fn new(params: ModelParams, cfg: TrainConfig) -> Result<Self> {
        cfg.loss.validate()?;
        if cfg.batch_size == 0 {
            return Err(arg_err!("batch size must be positive"));
        }
        let mut state = AdamState::new(&params.network, cfg.adam);
        state.freeze_shifts = cfg.freeze_shifts;
        Ok(Self { params, best: None, state, cfg, history: TrainHistory::default() })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn history(&self) -> &TrainHistory {
        &self.history
    }

    /// One Adam update on `batch` (inputs already scaled). Returns the
    /// summed batch loss before the update.
    pub fn step(&mut self, batch: &[(Tensor, Target)]) -> Result<f64> {
        let (loss, grads) = backward(&self.params.network, batch, &self.cfg.loss)?;
        adam_step(&mut self.params.network, &grads, &mut self.state)?;
        Ok(loss)
    }

    /// Mean loss, macro F1 and class accuracy on raw samples.
    pub fn evaluate(&self, samples: &[Sample]) -> Result<(f64, f64, Option<f64>)> {
        if samples.is_empty() {
            return Ok((0.0, 0.0, None));
        }
        let mut loss = 0.0;
        let mut metrics = Vec::with_capacity(samples.len());
        let mut correct = 0usize;
        let mut classified = 0usize;
        for s in samples {
            let trace = self.params.network.trace(&self.params.scaled(&s.input))?;
            loss += evaluate(&self.params.network, &trace, &s.target, &self.cfg.loss)?.0;
            let out = infer(&self.params, &s.input)?;
            metrics.push(se_metrics(s.target.mask.data(), binarize(&out.probs, 0.5).data())?);
            if let (Some(c), Some(label)) = (out.classes, s.target.class) {
                classified += 1;
                if argmax(c.data()) == label {
                    correct += 1;
                }
            }
        }
        let acc = if classified > 0 { Some(correct as f64 / classified as f64) } else { None };
        Ok((loss / samples.len() as f64, SeMetrics::macro_average(&metrics).f1, acc))
    }

    /// Shuffles, runs every mini-batch once, then scores the validation set
    /// and keeps the best parameters so far.
    pub fn run_epoch(&mut self, train: &[(Tensor, Target)], val: &[Sample]) -> Result<EpochRecord> {
        let epoch = self.history.epochs.len();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::stream(self.cfg.seed, rng::purpose::SHUFFLE, epoch as u64));
        let mut total = 0.0;
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch: Vec<(Tensor, Target)> = chunk.iter().map(|&i| train[i].clone()).collect();
            total += self.step(&batch)?;
        }
        let (val_loss, val_f1, val_accuracy) = if val.is_empty() {
            (total / train.len() as f64, 0.0, None)
        } else {
            self.evaluate(val)?
        };
        let rec = EpochRecord { epoch, train_loss: total / train.len() as f64, val_loss, val_f1, val_accuracy };
        if !rec.train_loss.is_finite() {
            return Err(Error::NonFinite(alloc::format!("training loss at epoch {}", epoch)));
        }
        if self.best.as_ref().map_or(true, |(b, _)| val_loss < *b) {
            self.best = Some((val_loss, self.params.clone()));
            self.history.best_epoch = Some(epoch);
        }
        self.history.epochs.push(rec);
        Ok(rec)
    }

    /// Best checkpoint (or the current parameters if no epoch ran).
    pub fn finish(self) -> (ModelParams, TrainHistory) {
        let params = self.best.map(|(_, p)| p).unwrap_or(self.params);
        (params, self.history)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Trains `params` on `data` for `cfg.epochs` epochs and returns the
/// validation-best parameters with the per-epoch history.
pub fn train_model(mut params: ModelParams, data: &Dataset, cfg: &TrainConfig) -> Result<(ModelParams, TrainHistory)> {
    if data.train.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if cfg.fit_input_scale {
        params.input_scale = input_scale_from(data.train.iter().map(|s| &s.input));
    }
    let train: Vec<(Tensor, Target)> = data.train.iter().map(|s| (params.scaled(&s.input), s.target.clone())).collect();
    let mut trainer = Trainer::new(params, *cfg)?;
    for _ in 0..cfg.epochs {
        trainer.run_epoch(&train, &data.val)?;
    }
    Ok(trainer.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::spec::{build, ModelInput, ModelSpec, Variant};
    use rand::Rng;

    fn toy(seed: u64, count: usize) -> Vec<Sample> {
        let mut g = rng::stream(seed, rng::purpose::SIGNALS, 0);
        (0..count)
            .map(|_| {
                let mask = Tensor::from_fn(&[1, 6, 6], |_| if g.gen::<f64>() < 0.3 { 1.0 } else { 0.0 });
                let input = mask.map(|v| v + 0.1).zip_map(&Tensor::from_fn(&[1, 6, 6], |_| g.gen_range(-0.2..0.2)), |a, b| a + b).unwrap();
                Sample { input, target: Target::mask(mask) }
            })
            .collect()
    }

    fn spec() -> ModelSpec {
        let mut s = ModelSpec::new(Variant::Osen1, 2, ModelInput::Image { channels: 1, height: 6, width: 6 });
        s.hidden = (6, 4);
        s
    }

    #[test]
    fn one_epoch_reduces_training_loss() {
        let data = Dataset { train: toy(1, 10), val: Vec::new() };
        let params = build(&spec(), 1, None).unwrap();
        let cfg = TrainConfig { epochs: 1, batch_size: 2, adam: AdamConfig { lr: 1e-2, ..AdamConfig::default() }, ..TrainConfig::default() };
        let scale = input_scale_from(data.train.iter().map(|s| &s.input));
        let scaled: Vec<(Tensor, Target)> = data.train.iter().map(|s| (s.input.scale(scale), s.target.clone())).collect();
        let before = backward(&params.network, &scaled, &cfg.loss).unwrap().0;
        let (trained, hist) = train_model(params, &data, &cfg).unwrap();
        let after = backward(&trained.network, &scaled, &cfg.loss).unwrap().0;
        assert!(after < before, "{} -> {}", before, after);
        assert_eq!(hist.epochs.len(), 1);
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let data = Dataset { train: toy(2, 12), val: toy(3, 4) };
        let cfg = TrainConfig { epochs: 2, batch_size: 4, seed: 7, ..TrainConfig::default() };
        let a = train_model(build(&spec(), 5, None).unwrap(), &data, &cfg).unwrap();
        let b = train_model(build(&spec(), 5, None).unwrap(), &data, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert!(a.1.best_epoch.is_some());
    }

    #[test]
    fn empty_training_set_rejected() {
        let cfg = TrainConfig::default();
        assert!(train_model(build(&spec(), 1, None).unwrap(), &Dataset::default(), &cfg).is_err());
    }
}
