//! Severity-weighted training with a validation-driven cliff weight.
//!
//! Each epoch walks the training molecules in seeded shuffled mini-batches,
//! weighting every sample by `1 + λ·s_i`. After the epoch a validation pass
//! measures MAE on the lowest and highest exposure quartiles; the controller
//! turns the gap into the λ used by the next epoch. The trace of every epoch is
//! returned for plotting.

mod controller;
mod loss;
mod predictor;

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use controller::{ema_update, gap_signal, lambda_update, ControllerConfig, ControllerState};
pub use loss::{cliff_loss, sample_weights, LossParts};
pub use predictor::{LinearPredictor, Predictor};

use crate::cliffgraph::Split;
use crate::fingerprint::Fingerprint;
use crate::severity::SeverityGroup;
use crate::stats;

const STREAM_SHUFFLE: u64 = 7;
const MODEL_FORMAT: &str = "cliffkit-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no training molecules")]
    EmptyTrain,
    #[error("controller starved: {0}")]
    ControllerStarvation(String),
    #[error("model file: {0}")]
    Model(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Plain MAE; the controller still runs but its λ is never applied.
    Base,
    Cliff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub objective: Objective,
    /// Keep λ at its base value instead of failing when validation has no
    /// Q1 or no Q4 molecules.
    pub freeze_on_starvation: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 16,
            learning_rate: 0.02,
            objective: Objective::Cliff,
            freeze_on_starvation: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::Config(format!(
                "epochs ({}) and batch size ({}) must be positive",
                self.epochs, self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning rate {} must be > 0",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Per-molecule inputs, all indexed by canonical molecule index.
pub struct TrainData<'a> {
    pub fps: &'a [Fingerprint],
    pub targets: &'a [f64],
    pub labels: &'a [Split],
    /// Severity scores `s_i`.
    pub scores: &'a [f64],
    /// Exposure groups; only validation entries are read.
    pub groups: &'a [SeverityGroup],
}

impl TrainData<'_> {
    fn check(&self) -> Result<(), TrainError> {
        let n = self.fps.len();
        if [self.targets.len(), self.labels.len(), self.scores.len(), self.groups.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(TrainError::Dimension(format!(
                "{} fingerprints, {} targets, {} labels, {} scores, {} groups",
                n,
                self.targets.len(),
                self.labels.len(),
                self.scores.len(),
                self.groups.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub base_loss: f64,
    pub cliff_loss: f64,
    pub total_loss: f64,
    /// Weight applied during this epoch.
    pub lambda: f64,
    pub gap: Option<f64>,
    pub g_bar: Option<f64>,
    pub val_q1_mae: Option<f64>,
    pub val_q4_mae: Option<f64>,
    pub val_mae: Option<f64>,
}

fn group_mae(errors: &[(SeverityGroup, f64)], group: SeverityGroup) -> Option<f64> {
    let e: Vec<f64> = errors.iter().filter(|(g, _)| *g == group).map(|(_, e)| *e).collect();
    stats::mean(&e)
}

/// Runs the full training loop and returns one record per epoch.
pub fn train<P: Predictor>(
    predictor: &mut P,
    data: &TrainData<'_>,
    training: &TrainingConfig,
    controller: &ControllerConfig,
    seed: u64,
) -> Result<Vec<EpochRecord>, TrainError> {
    training.validate()?;
    controller.validate()?;
    data.check()?;
    let mut order: Vec<usize> = (0..data.labels.len()).filter(|&i| data.labels[i] == Split::Train).collect();
    if order.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    let val: Vec<usize> = (0..data.labels.len()).filter(|&i| data.labels[i] == Split::Val).collect();
    let has = |g| val.iter().any(|&i| data.groups[i] == g);
    let fed = has(SeverityGroup::Q1) && has(SeverityGroup::Q4);
    let apply_cliff = training.objective == Objective::Cliff;
    if !fed && apply_cliff {
        let msg = format!(
            "validation split has {} molecules but lacks Q1 or Q4 exposure members; \
             enlarge the validation fraction, lower tau, or freeze lambda at its base value",
            val.len()
        );
        if !training.freeze_on_starvation {
            return Err(TrainError::ControllerStarvation(msg));
        }
        log::warn!("{msg}; lambda frozen at {}", controller.lambda_base);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SHUFFLE);
    let mut state = ControllerState::new(controller);
    let mut trace = Vec::with_capacity(training.epochs);
    for epoch in 1..=training.epochs {
        let lambda = if apply_cliff { state.lambda } else { 0.0 };
        order.shuffle(&mut rng);
        let mut sum_abs = 0.0;
        let mut sum_cliff = 0.0;
        for batch in order.chunks(training.batch_size) {
            let fps: Vec<&Fingerprint> = batch.iter().map(|&i| &data.fps[i]).collect();
            let targets: Vec<f64> = batch.iter().map(|&i| data.targets[i]).collect();
            let scores: Vec<f64> = batch.iter().map(|&i| data.scores[i]).collect();
            for (p, (&y, &s)) in predictor.predict(&fps).iter().zip(targets.iter().zip(&scores)) {
                let e = (p - y).abs();
                sum_abs += e;
                sum_cliff += s * e;
            }
            let weights = sample_weights(&scores, lambda);
            predictor.weighted_step(&fps, &targets, &weights, training.learning_rate);
        }
        let n = order.len() as f64;
        let base_loss = sum_abs / n;
        let cliff_loss = sum_cliff / n;

        let val_fps: Vec<&Fingerprint> = val.iter().map(|&i| &data.fps[i]).collect();
        let preds = predictor.predict(&val_fps);
        let errors: Vec<(SeverityGroup, f64)> = val
            .iter()
            .zip(&preds)
            .map(|(&i, p)| (data.groups[i], (p - data.targets[i]).abs()))
            .collect();
        let all: Vec<f64> = errors.iter().map(|(_, e)| *e).collect();
        let q1 = group_mae(&errors, SeverityGroup::Q1);
        let q4 = group_mae(&errors, SeverityGroup::Q4);
        let (gap, g_bar) = match (q4, q1, fed) {
            (Some(q4), Some(q1), true) => {
                let g = state.observe(q4, q1, controller);
                (Some(g), Some(state.g_bar))
            }
            _ => (None, None),
        };
        trace.push(EpochRecord {
            epoch,
            base_loss,
            cliff_loss,
            total_loss: base_loss + lambda * cliff_loss,
            lambda,
            gap,
            g_bar,
            val_q1_mae: q1,
            val_q4_mae: q4,
            val_mae: stats::mean(&all),
        });
    }
    Ok(trace)
}

fn na(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Tab-separated trace, one row per epoch, `NA` for undefined values.
pub fn write_trace<W: Write>(trace: &[EpochRecord], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "epoch\tbase_loss\tcliff_loss\ttotal_loss\tlambda\tgap\tg_bar\tval_q1_mae\tval_q4_mae\tval_mae"
    )?;
    for r in trace {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.epoch,
            r.base_loss,
            r.cliff_loss,
            r.total_loss,
            r.lambda,
            na(r.gap),
            na(r.g_bar),
            na(r.val_q1_mae),
            na(r.val_q4_mae),
            na(r.val_mae)
        )?;
    }
    out.flush()
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    kind: String,
    model: LinearPredictor,
}

pub fn write_model<W: Write>(model: &LinearPredictor, mut out: W) -> Result<(), TrainError> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        kind: "linear".into(),
        model: model.clone(),
    };
    serde_json::to_writer(&mut out, &file).map_err(|e| TrainError::Model(e.to_string()))?;
    out.write_all(b"\n").map_err(|e| TrainError::Model(e.to_string()))?;
    out.flush().map_err(|e| TrainError::Model(e.to_string()))
}

pub fn read_model<R: Read>(input: R) -> Result<LinearPredictor, TrainError> {
    let file: ModelFile = serde_json::from_reader(input).map_err(|e| TrainError::Model(e.to_string()))?;
    if file.format != MODEL_FORMAT || file.version != MODEL_VERSION || file.kind != "linear" {
        return Err(TrainError::Model(format!(
            "unsupported model {:?} v{} kind {:?}",
            file.format, file.version, file.kind
        )));
    }
    if file.model.weights.len() != file.model.width || !file.model.weights.iter().all(|w| w.is_finite()) {
        return Err(TrainError::Model("weights do not match width or are not finite".into()));
    }
    Ok(file.model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<Fingerprint>, Vec<f64>, Vec<Split>, Vec<f64>, Vec<SeverityGroup>) {
        let fps: Vec<Fingerprint> = (0..24)
            .map(|k| Fingerprint::from_indices(64, [k % 8, 8 + k % 5, 20 + k % 3]).unwrap())
            .collect();
        let y: Vec<f64> = (0..24).map(|k| (k % 8) as f64 * 0.5 - (k % 3) as f64).collect();
        let labels: Vec<Split> = (0..24)
            .map(|k| if k % 4 == 0 { Split::Val } else { Split::Train })
            .collect();
        let scores: Vec<f64> = (0..24).map(|k| (k % 5) as f64 * 0.3).collect();
        let groups: Vec<SeverityGroup> = (0..24).map(|k| SeverityGroup::from_quartile((k / 4 % 5) as u8)).collect();
        (fps, y, labels, scores, groups)
    }

    #[test]
    fn lambda_stays_in_bounds_and_trace_is_seeded() {
        let (fps, y, labels, scores, groups) = toy();
        let data = TrainData {
            fps: &fps,
            targets: &y,
            labels: &labels,
            scores: &scores,
            groups: &groups,
        };
        let c = ControllerConfig::default();
        let t = TrainingConfig {
            epochs: 15,
            batch_size: 4,
            ..Default::default()
        };
        let mut a = LinearPredictor::new(64);
        let ta = train(&mut a, &data, &t, &c, 3).unwrap();
        let mut b = LinearPredictor::new(64);
        let tb = train(&mut b, &data, &t, &c, 3).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(a, b);
        assert_eq!(ta[0].lambda, c.lambda_base);
        for r in &ta[1..] {
            assert!(r.lambda >= c.lambda_min() && r.lambda <= c.lambda_max());
        }
    }

    #[test]
    fn starvation_errors_or_freezes() {
        let (fps, y, labels, scores, _) = toy();
        let groups = vec![SeverityGroup::Q2; 24];
        let data = TrainData {
            fps: &fps,
            targets: &y,
            labels: &labels,
            scores: &scores,
            groups: &groups,
        };
        let c = ControllerConfig::default();
        let mut t = TrainingConfig {
            epochs: 3,
            ..Default::default()
        };
        let mut m = LinearPredictor::new(64);
        assert!(matches!(
            train(&mut m, &data, &t, &c, 0),
            Err(TrainError::ControllerStarvation(_))
        ));
        t.freeze_on_starvation = true;
        let trace = train(&mut m, &data, &t, &c, 0).unwrap();
        assert!(trace.iter().all(|r| r.lambda == 0.1 && r.gap.is_none()));
    }

    #[test]
    fn model_round_trip() {
        let mut m = LinearPredictor::new(64);
        m.weights[3] = 0.1 + 0.2;
        m.bias = -1.0 / 3.0;
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        assert_eq!(read_model(buf.as_slice()).unwrap(), m);
    }
}
