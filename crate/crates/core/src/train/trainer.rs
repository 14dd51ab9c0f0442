use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EvalReport, TrainError};
use crate::audio::{augment, AudioBuffer, AugmentPolicy};
use crate::detect::{Detector, FeatureExtractor, Features};
use crate::nn::{Adam, Graph, ParamStore};
use crate::rng::seeded;

/// Smallest validation-loss drop that counts as progress.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

pub const TRAIN_PRESETS: [&str; 3] = ["paper-s1-bce", "paper-s1-focal", "paper-s2"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Bce,
    Focal { gamma: f64, alpha: f64 },
}

impl LossKind {
    pub fn focal() -> Self {
        LossKind::Focal { gamma: 2.0, alpha: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub seed: u64,
    pub augment: AugmentPolicy,
    pub max_seq: usize,
    /// Dropout rate used while training; 0 disables it.
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 8,
            loss: LossKind::Bce,
            lr: 1e-5,
            weight_decay: 1e-6,
            patience: 5,
            seed: 0,
            augment: AugmentPolicy::default(),
            max_seq: crate::detect::MAX_SEGMENTS,
            dropout: 0.0,
        }
    }
}

impl TrainConfig {
    /// Named recipes: stage-1 with BCE (30 epochs, batch 8), stage-1 with
    /// focal loss (50 epochs, batch 32) and stage 2 (50 epochs, batch 8, BCE).
    pub fn preset(name: &str) -> Result<Self, TrainError> {
        let base = Self::default();
        Ok(match name {
            "paper-s1-bce" => base,
            "paper-s1-focal" => Self {
                epochs: 50,
                batch_size: 32,
                loss: LossKind::focal(),
                ..base
            },
            "paper-s2" => Self {
                epochs: 50,
                augment: AugmentPolicy::disabled(),
                ..base
            },
            _ => return Err(TrainError::BadConfig(format!("unknown preset {name:?}"))),
        })
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::BadConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.patience == 0 {
            return bad("patience must be >= 1");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return bad("lr and weight_decay must be finite and >= 0");
        }
        if let LossKind::Focal { gamma, alpha } = self.loss {
            if gamma < 0.0 || !(alpha > 0.0 && alpha < 1.0) {
                return bad("focal loss needs gamma >= 0 and alpha in (0, 1)");
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        self.augment.validate().map_err(|e| TrainError::BadConfig(e.to_string()))?;
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        let v = value.trim();
        let err = || TrainError::BadConfig(format!("bad value {v:?} for {key}"));
        fn num<T: std::str::FromStr>(v: &str, err: impl Fn() -> TrainError) -> Result<T, TrainError> {
            v.parse().map_err(|_| err())
        }
        match key.trim() {
            "epochs" => self.epochs = num(v, err)?,
            "batch_size" => self.batch_size = num(v, err)?,
            "lr" => self.lr = num(v, err)?,
            "weight_decay" => self.weight_decay = num(v, err)?,
            "patience" => self.patience = num(v, err)?,
            "seed" => self.seed = num(v, err)?,
            "max_seq" => self.max_seq = num(v, err)?,
            "dropout" => self.dropout = num(v, err)?,
            "loss" => {
                self.loss = match v {
                    "bce" => LossKind::Bce,
                    "focal" => LossKind::focal(),
                    _ => return Err(err()),
                }
            }
            "augment" => {
                self.augment = match v {
                    "on" | "true" => AugmentPolicy::default(),
                    "off" | "false" => AugmentPolicy::disabled(),
                    _ => return Err(err()),
                }
            }
            other => return Err(TrainError::BadConfig(format!("unknown key {other:?}"))),
        }
        Ok(())
    }
}

/// Labelled examples for training or evaluation.
pub trait Dataset {
    fn len(&self) -> usize;
    fn label(&self, i: usize) -> u8;
    /// Model input for example `i`; `rng` is present only while training and
    /// drives augmentation.
    fn item(&self, i: usize, rng: Option<&mut ChaCha8Rng>) -> Result<Features, TrainError>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn labels(&self) -> Vec<u8> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }
}

/// Precomputed features; never augmented.
#[derive(Debug, Clone, Default)]
pub struct FeatureSet {
    pub items: Vec<Features>,
    pub labels: Vec<u8>,
}

impl FeatureSet {
    pub fn push(&mut self, f: Features, label: u8) {
        self.items.push(f);
        self.labels.push(label);
    }
}

impl Dataset for FeatureSet {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    fn item(&self, i: usize, _rng: Option<&mut ChaCha8Rng>) -> Result<Features, TrainError> {
        Ok(self.items[i].clone())
    }
}

/// Audio segments run through an extractor on demand, with optional
/// augmentation while training.
pub struct AudioSet<'a> {
    pub segments: Vec<AudioBuffer>,
    pub labels: Vec<u8>,
    pub extractor: &'a dyn FeatureExtractor,
    pub policy: AugmentPolicy,
}

impl Dataset for AudioSet<'_> {
    fn len(&self) -> usize {
        self.segments.len()
    }

    fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    fn item(&self, i: usize, rng: Option<&mut ChaCha8Rng>) -> Result<Features, TrainError> {
        let seg = match rng {
            Some(rng) => augment(&self.segments[i], &self.policy, self.extractor.trainable(), rng)?,
            None => self.segments[i].clone(),
        };
        Ok(self.extractor.extract(&seg, &format!("seg{i}"))?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// `None` when the validation split holds one class only.
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TrainError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_loss", "val_loss", "val_acc", "val_auc"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                format!("{:.12e}", e.train_loss),
                format!("{:.12e}", e.val_loss),
                format!("{:.6}", e.val_accuracy),
                e.val_auc.map(|a| format!("{a:.6}")).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), TrainError> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Stops after `patience` epochs without a validation-loss drop of at least
/// [`MIN_IMPROVEMENT`].
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Records epoch `epoch` (1-based); returns `(improved, stop)`.
    pub fn update(&mut self, epoch: usize, val_loss: f64) -> (bool, bool) {
        if val_loss < self.best - MIN_IMPROVEMENT {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
            (true, false)
        } else {
            self.stale += 1;
            (false, self.stale >= self.patience)
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: History,
    pub best_epoch: usize,
    pub steps: usize,
}

fn loss_on<D: Detector>(
    model: &D,
    g: &mut Graph,
    x: &D::Input,
    label: u8,
    loss: LossKind,
) -> Result<(crate::nn::Var, f64), TrainError> {
    let v = model.forward_on(g, x)?;
    let y = label as f64;
    let l = match loss {
        LossKind::Bce => g.bce_with_logits(v.logit, y),
        LossKind::Focal { gamma, alpha } => g.focal_with_logits(v.logit, y, gamma, alpha),
    };
    Ok((l, g.scalar(v.logit)))
}

/// Scores (probabilities), mean loss and report over a dataset, without augmentation.
pub fn evaluate<D: Detector>(
    model: &D,
    data: &dyn Dataset,
    loss: LossKind,
) -> Result<(Vec<f64>, f64, EvalReport), TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptySplit("evaluation set".into()));
    }
    let mut scores = Vec::with_capacity(data.len());
    let mut total = 0.0;
    for i in 0..data.len() {
        let x = model.input_from(data.item(i, None)?)?;
        let mut g = Graph::new();
        let (l, logit) = loss_on(model, &mut g, &x, data.label(i), loss)?;
        g.check_finite()?;
        total += g.scalar(l);
        scores.push(crate::nn::sigmoid(logit));
    }
    let report = EvalReport::from_scores(&scores, &data.labels(), 0.5)?;
    Ok((scores, total / data.len() as f64, report))
}

/// Mini-batch Adam training with early stopping on validation loss. The
/// model ends up holding the best-validation parameters.
pub fn train<D: Detector>(
    model: &mut D,
    train_set: &dyn Dataset,
    val_set: &dyn Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_set.len() < cfg.batch_size {
        return Err(TrainError::EmptySplit(format!(
            "train split has {} examples, fewer than one batch of {}",
            train_set.len(),
            cfg.batch_size
        )));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySplit("validation split".into()));
    }
    let mut order_rng = seeded(cfg.seed);
    let mut aug_rng = seeded(cfg.seed.wrapping_add(1));
    let mut drop_rng = seeded(cfg.seed.wrapping_add(2));
    let mut adam = Adam::new(cfg.lr, cfg.weight_decay);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best: ParamStore = model.params().clone();
    let mut history = History::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let scale = 1.0 / cfg.batch_size as f64;
    let mut steps = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0;
        for batch in order.chunks_exact(cfg.batch_size) {
            model.params_mut().zero_grad();
            for &i in batch {
                let x = model.input_from(train_set.item(i, Some(&mut aug_rng))?)?;
                let mut g = if cfg.dropout > 0.0 {
                    Graph::with_dropout(cfg.dropout, ChaCha8Rng::seed_from_u64(drop_rng.gen()))
                } else {
                    Graph::new()
                };
                let (l, _) = loss_on(model, &mut g, &x, train_set.label(i), cfg.loss)?;
                let value = g.scalar(l);
                if g.check_finite().is_err() || !value.is_finite() {
                    return Err(TrainError::DivergedLoss { epoch });
                }
                epoch_loss += value;
                seen += 1;
                let scaled = g.scale(l, scale);
                g.backward_into(scaled, model.params_mut())
                    .map_err(|_| TrainError::DivergedLoss { epoch })?;
            }
            adam.step(model.params_mut())?;
            steps += 1;
        }
        let (_, val_loss, report) = evaluate(model, val_set, cfg.loss)?;
        if !val_loss.is_finite() {
            return Err(TrainError::DivergedLoss { epoch });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / seen.max(1) as f64,
            val_loss,
            val_accuracy: report.accuracy,
            val_auc: (!report.undefined.contains(&"auc")).then_some(report.auc),
        });
        let (improved, stop) = stopper.update(epoch, val_loss);
        if improved {
            best = model.params().clone();
        }
        if stop {
            break;
        }
    }
    model.params_mut().copy_values_from(&best)?;
    Ok(TrainOutcome {
        history,
        best_epoch: stopper.best_epoch,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopping_trace() {
        let mut s = EarlyStopping::new(2);
        let losses = [1.0, 0.9, 0.95, 0.97];
        let mut stopped_at = None;
        for (i, &l) in losses.iter().enumerate() {
            if s.update(i + 1, l).1 {
                stopped_at = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(4));
        assert_eq!(s.best_epoch, 2);
    }

    #[test]
    fn tiny_gains_do_not_count() {
        let mut s = EarlyStopping::new(1);
        assert!(s.update(1, 1.0).0);
        assert_eq!(s.update(2, 1.0 - 5e-7), (false, true));
    }

    #[test]
    fn presets() {
        let a = TrainConfig::preset("paper-s1-bce").unwrap();
        assert_eq!((a.epochs, a.batch_size, a.loss, a.lr, a.weight_decay), (30, 8, LossKind::Bce, 1e-5, 1e-6));
        let b = TrainConfig::preset("paper-s1-focal").unwrap();
        assert_eq!((b.epochs, b.batch_size), (50, 32));
        assert!(matches!(b.loss, LossKind::Focal { .. }));
        let c = TrainConfig::preset("paper-s2").unwrap();
        assert_eq!((c.epochs, c.loss, c.max_seq), (50, LossKind::Bce, 48));
        assert!(TrainConfig::preset("fast").is_err());
    }

    #[test]
    fn overrides() {
        let mut c = TrainConfig::default();
        c.set("epochs", "3").unwrap();
        c.set("loss", "focal").unwrap();
        assert_eq!(c.epochs, 3);
        assert!(c.set("epochs", "x").is_err());
        assert!(c.set("nope", "1").is_err());
        c.set("patience", "0").unwrap();
        assert!(c.validate().is_err());
    }
}
