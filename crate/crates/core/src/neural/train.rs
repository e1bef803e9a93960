//! Mini-batch training loop shared by the tagger and the parser.

use rand::seq::SliceRandom;

use super::config::TrainConfig;
use super::graph::{Graph, Var};
use super::layers::Noise;
use super::optim::{clip_norm, Adam};
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::treebank_ops::seeded_rng;

/// A differentiable training objective over items of one kind.
pub trait Objective {
    type Item;

    /// Summed loss over `batch` and the number of predictions it covers.
    /// `noise` is present during training only.
    fn loss(
        &self,
        g: &mut Graph<'_>,
        batch: &[&Self::Item],
        noise: Option<&mut Noise<'_>>,
    ) -> Result<(Var, usize)>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    /// 0-based epoch.
    pub epoch: usize,
    /// 0-based batch within the epoch.
    pub batch: usize,
    pub batches_per_epoch: usize,
    /// Updates performed so far, counting this one.
    pub step: usize,
    /// Mean loss per prediction on this batch.
    pub loss: f64,
}

impl StepInfo {
    pub fn is_epoch_end(&self) -> bool {
        self.batch + 1 == self.batches_per_epoch
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Observes training; called after every update.
pub trait Monitor {
    fn wants_eval(&mut self, info: &StepInfo) -> bool;
    fn evaluate(&mut self, params: &ParamStore, info: &StepInfo) -> Result<Control>;
}

/// Never evaluates.
pub struct NoMonitor;

impl Monitor for NoMonitor {
    fn wants_eval(&mut self, _: &StepInfo) -> bool {
        false
    }

    fn evaluate(&mut self, _: &ParamStore, _: &StepInfo) -> Result<Control> {
        Ok(Control::Continue)
    }
}

/// Epoch-end evaluation keeping the best-scoring parameters, with patience.
pub struct EarlyStopping<F> {
    score: F,
    patience: usize,
    since_best: usize,
    pub best: Option<(f64, ParamStore)>,
    pub history: Vec<f64>,
}

impl<F: FnMut(&ParamStore) -> Result<f64>> EarlyStopping<F> {
    pub fn new(patience: usize, score: F) -> Self {
        EarlyStopping {
            score,
            patience,
            since_best: 0,
            best: None,
            history: Vec::new(),
        }
    }

    pub fn best_score(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.0)
    }
}

impl<F: FnMut(&ParamStore) -> Result<f64>> Monitor for EarlyStopping<F> {
    fn wants_eval(&mut self, info: &StepInfo) -> bool {
        info.is_epoch_end()
    }

    fn evaluate(&mut self, params: &ParamStore, _: &StepInfo) -> Result<Control> {
        let s = (self.score)(params)?;
        self.history.push(s);
        if self.best.as_ref().is_none_or(|(b, _)| s > *b) {
            self.best = Some((s, params.clone()));
            self.since_best = 0;
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                return Ok(Control::Stop);
            }
        }
        Ok(Control::Continue)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub epochs: usize,
    pub steps: usize,
    pub last_loss: f64,
    pub stopped_early: bool,
}

/// Minimize `objective` over `data` in place. Batches are reshuffled every
/// epoch from `seed`; the same seed reproduces the same parameters bit for
/// bit.
pub fn train<O: Objective>(
    params: &mut ParamStore,
    objective: &O,
    data: &[O::Item],
    cfg: &TrainConfig,
    seed: u64,
    monitor: &mut dyn Monitor,
) -> Result<TrainSummary> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("no training data"));
    }
    let mut rng = seeded_rng(seed);
    let mut adam = Adam::new(params, cfg);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batches_per_epoch = data.len().div_ceil(cfg.batch_size);
    let mut summary = TrainSummary {
        epochs: 0,
        steps: 0,
        last_loss: f64::NAN,
        stopped_early: false,
    };
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let items: Vec<&O::Item> = chunk.iter().map(|&i| &data[i]).collect();
            let (mut grads, loss) = {
                let mut g = Graph::new(params);
                let mut noise = Noise {
                    dropout: cfg.dropout,
                    word_dropout: cfg.word_dropout,
                    rng: &mut rng,
                };
                let (loss, count) = objective.loss(&mut g, &items, Some(&mut noise))?;
                let total = g.scalar(loss);
                let mean = total / count.max(1) as f64;
                if !mean.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        loss: mean,
                        epoch,
                        batch,
                    });
                }
                let mut grads = g.backward(loss);
                grads.scale(1.0 / count.max(1) as f64);
                (grads, mean)
            };
            if let Some(max) = cfg.clip_norm {
                clip_norm(&mut grads, max);
            }
            adam.update(params, &grads);
            summary.steps += 1;
            summary.last_loss = loss;
            let info = StepInfo {
                epoch,
                batch,
                batches_per_epoch,
                step: summary.steps,
                loss,
            };
            if monitor.wants_eval(&info) && monitor.evaluate(params, &info)? == Control::Stop {
                summary.epochs = epoch + 1;
                summary.stopped_early = true;
                return Ok(summary);
            }
        }
        summary.epochs = epoch + 1;
    }
    Ok(summary)
}
