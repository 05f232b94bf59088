use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{adamw_step, layer_lr_scale, lr_at, smoothed_cross_entropy, AdamWConfig, OptimizerState, ParamHyper};
use crate::numcore::{Array, Graph, Scalar};
use crate::seqdata::{one_hot_encode, Dataset, ProteinRecord};
use crate::sptmodel::{argmax, DropPath, SptModel};
use crate::{Error, Result};

/// Optimisation recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub base_lr: f64,
    pub min_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub layer_decay: f64,
    pub label_smoothing: f64,
    pub drop_path: f64,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            warmup_epochs: 5,
            base_lr: 1e-3,
            min_lr: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.05,
            layer_decay: 0.75,
            label_smoothing: 0.1,
            drop_path: 0.1,
            batch_size: 32,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch_size must be positive".into());
        }
        if self.warmup_epochs >= self.epochs {
            return fail(format!(
                "warmup_epochs {} must be below epochs {}",
                self.warmup_epochs, self.epochs
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("betas must lie in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.label_smoothing) {
            return fail("label_smoothing must lie in [0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.drop_path) {
            return fail("drop_path must lie in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.layer_decay) || self.layer_decay == 0.0 {
            return fail("layer_decay must lie in (0, 1]".into());
        }
        if self.base_lr <= 0.0 || self.min_lr < 0.0 || self.min_lr > self.base_lr || self.weight_decay < 0.0 {
            return fail("learning rates and weight decay out of range".into());
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_err: f64,
    pub val_err: Option<f64>,
    /// Learning rate at the last step of the epoch.
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: SptModel<T>,
    pub history: Vec<EpochMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    /// Fraction of records whose argmax differs from the label.
    pub error_rate: f64,
    /// `None` for classes absent from the data.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub predictions: Vec<usize>,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        1.0 - self.error_rate
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a root seed and a path of indices.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(root), |acc, &p| splitmix(acc ^ splitmix(p)))
}

struct SampleResult<T> {
    loss: f64,
    correct: bool,
    grads: Vec<Array<T>>,
}

fn sample_step<T: Scalar>(
    model: &SptModel<T>,
    record: &ProteinRecord,
    drop: &mut DropPath,
    smoothing: f64,
) -> Result<SampleResult<T>> {
    let enc = one_hot_encode::<T>(&record.sequence);
    let mut g = Graph::new();
    let bound = model.bind(&mut g, true);
    let x = g.constant(enc.matrix().clone());
    let y = model.logits_var(&mut g, &bound, x, drop)?;
    let logits = g.value(y).data().to_vec();
    let (loss, dlogits) = smoothed_cross_entropy(&logits, record.label, smoothing);
    let seed = Array::from_vec(1, dlogits.len(), dlogits.into_iter().map(T::of).collect())?;
    let mut grads = g.backward_seeded(y, seed)?;
    let grads = bound.vars().iter().map(|&v| grads.take(v)).collect::<Result<Vec<_>>>()?;
    Ok(SampleResult {
        loss,
        correct: argmax(&logits) == record.label,
        grads,
    })
}

pub fn param_hypers<T: Scalar>(model: &SptModel<T>, cfg: &TrainConfig) -> Vec<ParamHyper> {
    let layers = model.config().layers;
    model
        .specs()
        .iter()
        .map(|s| ParamHyper {
            lr_scale: layer_lr_scale(s.group, layers, cfg.layer_decay),
            decay: s.decay,
        })
        .collect()
}

/// Trains from the given initial model.
pub fn train<T: Scalar>(
    model: SptModel<T>,
    train_ds: &Dataset,
    val_ds: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_with(model, train_ds, val_ds, cfg, |_, _| Ok(()))
}

/// [`train`] with a hook called after every epoch.
pub fn train_with<T: Scalar, F>(
    mut model: SptModel<T>,
    train_ds: &Dataset,
    val_ds: Option<&Dataset>,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome<T>>
where
    F: FnMut(&EpochMetrics, &SptModel<T>) -> Result<()>,
{
    cfg.validate()?;
    let classes = model.config().num_classes;
    for ds in std::iter::once(train_ds).chain(val_ds) {
        if ds.num_classes() != classes {
            return Err(Error::Config(format!(
                "dataset has {} classes but the model has {classes}",
                ds.num_classes()
            )));
        }
        let longest = ds.max_len();
        if longest > model.config().max_len {
            return Err(Error::TooLong {
                len: longest,
                max_len: model.config().max_len,
            });
        }
    }

    let n = train_ds.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let warmup_steps = cfg.warmup_epochs * steps_per_epoch;
    let hypers = param_hypers(&model, cfg);
    let adamw = cfg.adamw();
    let mut state = OptimizerState::new(model.params());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, &[1, epoch as u64]));
        order.shuffle(&mut shuffle_rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        let mut lr = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            lr = lr_at(step, total_steps, warmup_steps, cfg.base_lr, cfg.min_lr)?;
            let results: Vec<Result<SampleResult<T>>> = batch
                .par_iter()
                .map(|&i| {
                    let seed = derive_seed(cfg.rng_seed, &[2, epoch as u64, i as u64]);
                    let mut drop = DropPath::training(cfg.drop_path, seed);
                    sample_step(&model, &train_ds.records[i], &mut drop, cfg.label_smoothing)
                })
                .collect();
            let mut sum: Option<Vec<Array<T>>> = None;
            let mut batch_loss = 0.0;
            for r in results {
                let r = r?;
                batch_loss += r.loss;
                correct += r.correct as usize;
                match &mut sum {
                    None => sum = Some(r.grads),
                    Some(acc) => acc.iter_mut().zip(&r.grads).for_each(|(a, g)| a.add_assign(g)),
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    step,
                    detail: format!("batch loss {batch_loss}"),
                });
            }
            loss_sum += batch_loss;
            let mut grads = sum.expect("non-empty batch");
            let inv = T::of(1.0 / batch.len() as f64);
            grads.iter_mut().for_each(|g| g.scale_in_place(inv));
            adamw_step(model.params_mut(), &grads, &mut state, lr, &hypers, &adamw).map_err(|e| {
                Error::Diverged {
                    step,
                    detail: e.to_string(),
                }
            })?;
            step += 1;
        }
        let val_err = val_ds.map(|ds| evaluate(&model, ds).map(|r| r.error_rate)).transpose()?;
        let metrics = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / n as f64,
            train_err: 1.0 - correct as f64 / n as f64,
            val_err,
            lr,
        };
        on_epoch(&metrics, &model)?;
        history.push(metrics);
    }
    Ok(TrainOutcome { model, history })
}

/// Evaluation-mode predictions for every record.
pub fn predict_all<T: Scalar>(model: &SptModel<T>, ds: &Dataset) -> Result<Vec<usize>> {
    ds.records
        .par_iter()
        .map(|r| model.predict(&one_hot_encode(&r.sequence)))
        .collect()
}

/// Top-1 error rate and per-class accuracy.
pub fn evaluate<T: Scalar>(model: &SptModel<T>, ds: &Dataset) -> Result<EvalReport> {
    let predictions = predict_all(model, ds)?;
    let c = ds.num_classes();
    let (mut hits, mut totals) = (vec![0usize; c], vec![0usize; c]);
    for (r, &p) in ds.records.iter().zip(&predictions) {
        totals[r.label] += 1;
        hits[r.label] += (p == r.label) as usize;
    }
    let correct: usize = hits.iter().sum();
    Ok(EvalReport {
        error_rate: 1.0 - correct as f64 / ds.len() as f64,
        per_class_accuracy: hits
            .iter()
            .zip(&totals)
            .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
            .collect(),
        predictions,
    })
}

/// `epoch,train_loss,train_err,val_err,lr`; missing validation is left empty.
pub fn write_metrics_csv(history: &[EpochMetrics], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "train_loss", "train_err", "val_err", "lr"])?;
    for m in history {
        w.write_record([
            m.epoch.to_string(),
            m.train_loss.to_string(),
            m.train_err.to_string(),
            m.val_err.map(|v| v.to_string()).unwrap_or_default(),
            m.lr.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("metrics.csv", e))
}

pub fn save_metrics_csv(history: &[EpochMetrics], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_metrics_csv(history, file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqdata::{parse_sequence, Split};
    use crate::sptmodel::ModelConfig;

    fn tiny_cfg(classes: usize) -> ModelConfig {
        let mut c = ModelConfig::new(1, 8, 2, 16, classes);
        c.max_len = 32;
        c
    }

    fn two_records() -> Dataset {
        Dataset::new(
            vec![
                ProteinRecord::new("a", parse_sequence("ACDEFG").unwrap(), 0),
                ProteinRecord::new("b", parse_sequence("WYWYV").unwrap(), 1),
            ],
            vec!["x".into(), "y".into()],
            Split::Train,
        )
        .unwrap()
    }

    #[test]
    fn smoke_one_epoch() {
        let cfg = TrainConfig {
            epochs: 1,
            warmup_epochs: 0,
            batch_size: 2,
            ..Default::default()
        };
        let model = SptModel::<f64>::build(tiny_cfg(2), 0).unwrap();
        let out = train(model, &two_records(), Some(&two_records()), &cfg).unwrap();
        assert_eq!(out.history.len(), 1);
        assert!(out.history[0].train_loss.is_finite());
        assert!(out.history[0].val_err.is_some());
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = TrainConfig {
            epochs: 3,
            warmup_epochs: 1,
            batch_size: 1,
            rng_seed: 4,
            ..Default::default()
        };
        let run = || {
            let model = SptModel::<f64>::build(tiny_cfg(2), 1).unwrap();
            train(model, &two_records(), None, &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn rejects_class_mismatch_and_bad_warmup() {
        let model = SptModel::<f64>::build(tiny_cfg(3), 0).unwrap();
        assert!(train(model.clone(), &two_records(), None, &TrainConfig::default()).is_err());
        let cfg = TrainConfig {
            epochs: 5,
            warmup_epochs: 5,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn constant_predictor_on_its_class_has_zero_error() {
        let mut model = SptModel::<f64>::build(tiny_cfg(2), 0).unwrap();
        model.param_mut("head.weight").unwrap().data_mut().fill(0.0);
        model.param_mut("head.bias").unwrap().data_mut().copy_from_slice(&[0.0, 5.0]);
        let ds = Dataset::new(
            vec![
                ProteinRecord::new("a", parse_sequence("ACD").unwrap(), 1),
                ProteinRecord::new("b", parse_sequence("KLM").unwrap(), 1),
            ],
            vec!["x".into(), "y".into()],
            Split::Test,
        )
        .unwrap();
        let report = evaluate(&model, &ds).unwrap();
        assert_eq!(report.error_rate, 0.0);
        assert_eq!(report.per_class_accuracy, [None, Some(1.0)]);
    }

    #[test]
    fn metrics_csv_layout() {
        let h = vec![EpochMetrics {
            epoch: 1,
            train_loss: 0.5,
            train_err: 0.25,
            val_err: None,
            lr: 1e-3,
        }];
        let mut buf = Vec::new();
        write_metrics_csv(&h, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,train_loss,train_err,val_err,lr\n1,0.5,0.25,,0.001\n"
        );
    }

    #[test]
    fn seeds_differ_across_paths() {
        assert_ne!(derive_seed(1, &[2, 0, 5]), derive_seed(1, &[2, 0, 6]));
        assert_ne!(derive_seed(1, &[2, 0]), derive_seed(2, &[2, 0]));
        assert_eq!(derive_seed(9, &[1]), derive_seed(9, &[1]));
    }
}
