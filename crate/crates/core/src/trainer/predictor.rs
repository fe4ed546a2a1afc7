//! Predictor contract and the built-in linear model.

use serde::{Deserialize, Serialize};

use crate::fingerprint::Fingerprint;

/// Anything that maps fingerprints to a real value and can take a weighted
/// absolute-error step.
pub trait Predictor {
    fn predict(&self, batch: &[&Fingerprint]) -> Vec<f64>;

    /// One descent step on `mean(w_i · |f(x_i) - y_i|)`. All-zero weights
    /// must leave the parameters unchanged.
    fn weighted_step(&mut self, batch: &[&Fingerprint], targets: &[f64], weights: &[f64], lr: f64);
}

/// Linear over fingerprint bits plus a bias, zero-initialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictor {
    pub width: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl LinearPredictor {
    pub fn new(width: usize) -> Self {
        Self {
            width,
            weights: vec![0.0; width],
            bias: 0.0,
        }
    }

    pub fn predict_one(&self, fp: &Fingerprint) -> f64 {
        let mut out = self.bias;
        for bit in fp.ones() {
            out += self.weights[bit];
        }
        out
    }

    /// `mean(w_i · |f(x_i) - y_i|)` at the current parameters.
    pub fn weighted_loss(&self, batch: &[&Fingerprint], targets: &[f64], weights: &[f64]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        batch
            .iter()
            .zip(targets)
            .zip(weights)
            .map(|((fp, y), w)| w * (self.predict_one(fp) - y).abs())
            .sum::<f64>()
            / batch.len() as f64
    }

    /// Subgradient of [`Self::weighted_loss`] as `(d/d weights, d/d bias)`,
    /// taking `sign(0) = 0` at kinks.
    pub fn subgradient(&self, batch: &[&Fingerprint], targets: &[f64], weights: &[f64]) -> (Vec<f64>, f64) {
        let mut gw = vec![0.0; self.width];
        let mut gb = 0.0;
        if batch.is_empty() {
            return (gw, gb);
        }
        let n = batch.len() as f64;
        for ((fp, y), w) in batch.iter().zip(targets).zip(weights) {
            let g = w * sign(self.predict_one(fp) - y) / n;
            if g == 0.0 {
                continue;
            }
            gb += g;
            for bit in fp.ones() {
                gw[bit] += g;
            }
        }
        (gw, gb)
    }
}

impl Predictor for LinearPredictor {
    fn predict(&self, batch: &[&Fingerprint]) -> Vec<f64> {
        batch.iter().map(|fp| self.predict_one(fp)).collect()
    }

    fn weighted_step(&mut self, batch: &[&Fingerprint], targets: &[f64], weights: &[f64], lr: f64) {
        let (gw, gb) = self.subgradient(batch, targets, weights);
        for (w, g) in self.weights.iter_mut().zip(gw) {
            if g != 0.0 {
                *w -= lr * g;
            }
        }
        if gb != 0.0 {
            self.bias -= lr * gb;
        }
    }
}
