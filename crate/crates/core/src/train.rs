//! Deterministic SGD training of an [`Mlp`] with per-epoch metrics.
//!
//! Schedule: SGD with momentum (`v = mu v + g; w -= lr v`), learning rate
//! cosine-annealed once per epoch from `lr0` to zero, no weight decay, no
//! augmentation. The model reported on the test set is the one from the
//! epoch with the highest validation accuracy (earliest on ties).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::DataSplits;
use crate::error::{Error, Result};
use crate::initializers::{init, InitMethod, InitSpec};
use crate::matrix_io::WeightMatrix;
use crate::mlp::{Mlp, MlpArch};
use crate::rewiring::{pa_rewire, variance_search, PassMode, SearchMode};
use crate::rng::{derive_stream, RngStream, StreamPurpose};

/// How initial weights are post-processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RewireMode {
    #[default]
    None,
    /// Bidirectional PA rewiring of every weight matrix.
    Pa,
    /// Best of `K` candidates by smallest input-strength variance.
    VarMin(usize),
    /// Best of `K` candidates by largest input-strength variance.
    VarMax(usize),
}

impl fmt::Display for RewireMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewireMode::None => f.write_str("none"),
            RewireMode::Pa => f.write_str("pa"),
            RewireMode::VarMin(k) => write!(f, "var-min:{k}"),
            RewireMode::VarMax(k) => write!(f, "var-max:{k}"),
        }
    }
}

impl FromStr for RewireMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse_k = |k: &str| {
            k.parse::<usize>()
                .ok()
                .filter(|&k| k >= 1)
                .ok_or_else(|| Error::InvalidArgument(format!("bad K in rewire mode {s:?}")))
        };
        match s {
            "none" => Ok(RewireMode::None),
            "pa" | "pa-bidirectional" => Ok(RewireMode::Pa),
            _ => {
                if let Some(k) = s.strip_prefix("var-min:") {
                    Ok(RewireMode::VarMin(parse_k(k)?))
                } else if let Some(k) = s.strip_prefix("var-max:") {
                    Ok(RewireMode::VarMax(parse_k(k)?))
                } else {
                    Err(Error::InvalidArgument(format!("unknown rewire mode {s:?}")))
                }
            }
        }
    }
}

impl TryFrom<String> for RewireMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RewireMode> for String {
    fn from(m: RewireMode) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: MlpArch,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub global_seed: u64,
    pub repetition: u32,
    pub init: InitMethod,
    pub rewire: RewireMode,
    pub log_gradients: bool,
}

impl TrainConfig {
    pub fn new(arch: MlpArch, init: InitMethod) -> Self {
        Self {
            arch,
            epochs: 100,
            batch_size: 128,
            lr0: 0.01,
            momentum: 0.9,
            global_seed: 0,
            repetition: 0,
            init,
            rewire: RewireMode::None,
            log_gradients: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "epochs and batch size must be positive".into(),
            ));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lr0 must be positive, got {}",
                self.lr0
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Learning rate in force during 0-indexed epoch `epoch` of `total`.
pub fn cosine_lr(lr0: f64, epoch: usize, total: usize) -> f64 {
    lr0 * (1.0 + (PI * epoch as f64 / total as f64).cos()) / 2.0
}

/// Initial weights for one repetition.
///
/// Layer `l` samples from `derive_stream(seed, l, rep)`, so every rewire mode
/// starts from the same base draw; PA rewiring then reads the matching
/// rewire-purpose stream.
pub fn build_initial_weights(cfg: &TrainConfig) -> Result<Vec<WeightMatrix>> {
    let sizes = cfg.arch.layer_sizes();
    (0..cfg.arch.num_weight_layers())
        .map(|l| {
            let layer = l as u32;
            let spec = InitSpec::new(cfg.init, sizes[l], sizes[l + 1]);
            let mut rng = derive_stream(cfg.global_seed, layer, cfg.repetition);
            match cfg.rewire {
                RewireMode::None => init(&spec, &mut rng),
                RewireMode::Pa => {
                    let base = init(&spec, &mut rng)?;
                    let mut rewire_rng = rng.with_purpose(StreamPurpose::Rewire);
                    pa_rewire(&base, PassMode::Bidirectional, &mut rewire_rng)
                }
                RewireMode::VarMin(k) => variance_search(&spec, k, SearchMode::Min, &mut rng),
                RewireMode::VarMax(k) => variance_search(&spec, k, SearchMode::Max, &mut rng),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-indexed.
    pub epoch: usize,
    pub lr: f64,
    /// Accuracy on the full training set after the epoch's updates, in percent.
    pub train_acc: f64,
    /// Accuracy accumulated over the epoch's batches while weights moved.
    pub train_running_acc: f64,
    /// Mean batch loss over the epoch.
    pub train_loss: f64,
    pub val_acc: f64,
    pub val_loss: f64,
    /// Per weight matrix, mean |dL/dW| averaged over the epoch's batches.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub grad_mean_abs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub repetition: u32,
    pub global_seed: u64,
    pub init: InitMethod,
    pub rewire: RewireMode,
    pub epochs: usize,
    pub epoch1_train_acc: f64,
    pub epoch1_val_acc: f64,
    /// 1-indexed epoch of the best validation accuracy.
    pub convergence_epoch: usize,
    pub best_val_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    pub convergence_epoch: usize,
    pub test_acc: f64,
}

impl RunMetrics {
    pub fn summary(&self) -> RunSummary {
        let first = &self.epochs[0];
        let best = &self.epochs[self.convergence_epoch - 1];
        RunSummary {
            repetition: self.config.repetition,
            global_seed: self.config.global_seed,
            init: self.config.init,
            rewire: self.config.rewire,
            epochs: self.epochs.len(),
            epoch1_train_acc: first.train_acc,
            epoch1_val_acc: first.val_acc,
            convergence_epoch: self.convergence_epoch,
            best_val_acc: best.val_acc,
            test_acc: self.test_acc,
        }
    }
}

/// 1-indexed position of the first maximum.
pub fn convergence_epoch(val_acc: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in val_acc.iter().enumerate() {
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientFlowRow {
    pub epoch: usize,
    pub layer: usize,
    pub mean_abs_grad: f64,
}

/// One row per (epoch, weight matrix).
pub fn gradient_flow(metrics: &RunMetrics) -> Result<Vec<GradientFlowRow>> {
    let mut rows = Vec::new();
    for e in &metrics.epochs {
        let g = e
            .grad_mean_abs
            .as_ref()
            .ok_or(Error::GradientLoggingDisabled)?;
        rows.extend(g.iter().enumerate().map(|(layer, &v)| GradientFlowRow {
            epoch: e.epoch,
            layer,
            mean_abs_grad: v,
        }));
    }
    Ok(rows)
}

/// Batch order stream: depends on the global seed only, so every
/// repetition and rewire mode sees the same sequence of batches.
pub fn shuffle_stream(global_seed: u64) -> RngStream {
    RngStream::new(StreamPurpose::Shuffle, global_seed, 0, 0)
}

/// Validation split stream, fixed per global seed.
pub fn split_stream(global_seed: u64) -> RngStream {
    RngStream::new(StreamPurpose::Split, global_seed, 0, 0)
}

/// Trains one repetition. `on_epoch` sees each record as it is produced.
pub fn train_with<F>(cfg: &TrainConfig, data: &DataSplits, mut on_epoch: F) -> Result<RunMetrics>
where
    F: FnMut(&EpochRecord),
{
    cfg.validate()?;
    if data.train.features() != cfg.arch.inputs() {
        return Err(Error::InvalidShape(format!(
            "data has {} features, network expects {}",
            data.train.features(),
            cfg.arch.inputs()
        )));
    }
    if data.train.is_empty() || data.validation.is_empty() {
        return Err(Error::InvalidArgument(
            "training needs nonempty train and validation sets".into(),
        ));
    }

    let mut model = Mlp::new(cfg.arch.clone(), build_initial_weights(cfg)?)?;
    let depth = cfg.arch.num_weight_layers();
    let mut vel_w: Vec<Vec<f64>> = model
        .weights()
        .iter()
        .map(|w| vec![0.0; w.data().len()])
        .collect();
    let mut vel_b: Vec<Vec<f64>> = model.biases().iter().map(|b| vec![0.0; b.len()]).collect();

    let n = data.train.len();
    let features = data.train.features();
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffler = shuffle_stream(cfg.global_seed);
    let mut batch_x = Vec::with_capacity(cfg.batch_size * features);
    let mut batch_y = Vec::with_capacity(cfg.batch_size);

    let mut epochs: Vec<EpochRecord> = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Mlp)> = None;

    for e in 0..cfg.epochs {
        let lr = cosine_lr(cfg.lr0, e, cfg.epochs);
        order.iter_mut().enumerate().for_each(|(i, o)| *o = i);
        order.shuffle(&mut shuffler);

        let mut correct = 0usize;
        let mut loss_sum = 0.0;
        let mut grad_abs = vec![0.0; depth];
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.extend_from_slice(data.train.image(i));
                batch_y.push(data.train.labels()[i]);
            }
            let out = model.loss_and_gradients(&batch_x, &batch_y)?;
            if !out.loss.is_finite() {
                return Err(Error::Diverged {
                    epoch: e + 1,
                    loss: out.loss,
                });
            }
            correct += out.correct;
            loss_sum += out.loss * chunk.len() as f64;
            batches += 1;
            for l in 0..depth {
                let gw = &out.grads.weights[l];
                if cfg.log_gradients {
                    grad_abs[l] += gw.iter().map(|g| g.abs()).sum::<f64>() / gw.len() as f64;
                }
                for ((w, v), g) in model
                    .weight_data_mut(l)
                    .iter_mut()
                    .zip(&mut vel_w[l])
                    .zip(gw)
                {
                    *v = cfg.momentum * *v + g;
                    *w -= lr * *v;
                }
                for ((b, v), g) in model
                    .bias_mut(l)
                    .iter_mut()
                    .zip(&mut vel_b[l])
                    .zip(&out.grads.biases[l])
                {
                    *v = cfg.momentum * *v + g;
                    *b -= lr * *v;
                }
            }
        }

        let (train_acc, _) = model.evaluate(data.train.images(), data.train.labels());
        let (val_acc, val_loss) =
            model.evaluate(data.validation.images(), data.validation.labels());
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch: e + 1,
                loss: val_loss,
            });
        }
        let record = EpochRecord {
            epoch: e + 1,
            lr,
            train_acc,
            train_running_acc: 100.0 * correct as f64 / n as f64,
            train_loss: loss_sum / n as f64,
            val_acc,
            val_loss,
            grad_mean_abs: cfg
                .log_gradients
                .then(|| grad_abs.iter().map(|g| g / batches as f64).collect()),
        };
        on_epoch(&record);
        if best.as_ref().map_or(true, |(b, _)| val_acc > *b) {
            best = Some((val_acc, model.clone()));
        }
        epochs.push(record);
    }

    let (_, best_model) = best.expect("at least one epoch");
    let (test_acc, _) = best_model.evaluate(data.test.images(), data.test.labels());
    let val: Vec<f64> = epochs.iter().map(|e| e.val_acc).collect();
    Ok(RunMetrics {
        config: cfg.clone(),
        convergence_epoch: convergence_epoch(&val).expect("at least one epoch"),
        epochs,
        test_acc,
    })
}

pub fn train(cfg: &TrainConfig, data: &DataSplits) -> Result<RunMetrics> {
    train_with(cfg, data, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_values() {
        assert_eq!(cosine_lr(0.01, 0, 100), 0.01);
        assert!((cosine_lr(0.01, 50, 100) - 0.005).abs() < 1e-15);
        assert!(cosine_lr(0.01, 100, 100).abs() < 1e-12);
        for e in 1..100 {
            assert!(cosine_lr(0.01, e, 100) < cosine_lr(0.01, e - 1, 100));
        }
    }

    #[test]
    fn convergence_is_first_argmax() {
        assert_eq!(convergence_epoch(&[90.1, 95.2, 94.8]), Some(2));
        assert_eq!(convergence_epoch(&[90.0, 95.0, 95.0]), Some(2));
        assert_eq!(convergence_epoch(&[]), None);
    }

    #[test]
    fn rewire_mode_strings() {
        for m in [
            RewireMode::None,
            RewireMode::Pa,
            RewireMode::VarMin(50),
            RewireMode::VarMax(3),
        ] {
            assert_eq!(m.to_string().parse::<RewireMode>().unwrap(), m);
        }
        assert_eq!(
            "pa-bidirectional".parse::<RewireMode>().unwrap(),
            RewireMode::Pa
        );
        assert!("var-min:0".parse::<RewireMode>().is_err());
        assert!("magic".parse::<RewireMode>().is_err());
        let json = serde_json::to_string(&RewireMode::VarMin(7)).unwrap();
        assert_eq!(json, "\"var-min:7\"");
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::new(MlpArch::shallow_thin(4, 10), InitMethod::KaimingUniform);
        assert!(cfg.validate().is_ok());
        cfg.momentum = 1.0;
        assert!(cfg.validate().is_err());
        cfg.momentum = 0.9;
        cfg.lr0 = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn pa_weights_are_rewired_base_weights() {
        let mut cfg = TrainConfig::new(
            MlpArch::new(vec![12, 9, 10]).unwrap(),
            InitMethod::KaimingNormal,
        );
        let base = build_initial_weights(&cfg).unwrap();
        cfg.rewire = RewireMode::Pa;
        let pa = build_initial_weights(&cfg).unwrap();
        for (b, p) in base.iter().zip(&pa) {
            assert_ne!(b, p);
            assert_eq!(b.sorted_entries(), p.sorted_entries());
        }
    }

    #[test]
    fn gradient_flow_requires_logging() {
        let cfg = TrainConfig::new(
            MlpArch::new(vec![2, 10]).unwrap(),
            InitMethod::KaimingNormal,
        );
        let rec = |g: Option<Vec<f64>>| EpochRecord {
            epoch: 1,
            lr: 0.01,
            train_acc: 0.0,
            train_running_acc: 0.0,
            train_loss: 0.0,
            val_acc: 0.0,
            val_loss: 0.0,
            grad_mean_abs: g,
        };
        let mut m = RunMetrics {
            config: cfg,
            epochs: vec![rec(Some(vec![0.5]))],
            convergence_epoch: 1,
            test_acc: 0.0,
        };
        assert_eq!(gradient_flow(&m).unwrap().len(), 1);
        m.epochs[0] = rec(None);
        assert!(matches!(
            gradient_flow(&m),
            Err(Error::GradientLoggingDisabled)
        ));
    }
}
