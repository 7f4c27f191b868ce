use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::neural::{argmax, ops, ClassifierModel, NeuralError};

/// Frozen mean-pooled encoder features, one row per text.
pub fn pooled_features(model: &ClassifierModel, texts: &[&str]) -> Result<Array2<f64>, NeuralError> {
    let mut out = Array2::zeros((texts.len(), model.config().embedding_dim));
    for (c, chunk) in texts.chunks(64).enumerate() {
        let ids: Vec<Vec<u32>> = chunk.iter().map(|t| model.encode(t).ids).collect();
        let fwd = model.forward(&ids)?;
        out.slice_mut(ndarray::s![c * 64..c * 64 + chunk.len(), ..]).assign(&fwd.pooled);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub iterations: usize,
    pub l2: f64,
    /// Rescale each feature to zero mean and unit variance (train statistics).
    pub standardize: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { iterations: 2000, l2: 1e-2, standardize: false }
    }
}

/// L2-regularized multinomial logistic regression (the same function class
/// as the model's domain head), fit by full-batch
/// gradient descent from zero weights with step `1/L`, where `L` bounds the
/// curvature of the objective. The objective is strongly convex, so with
/// enough iterations the fit is the unique optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    mean: Array1<f64>,
    scale: Array1<f64>,
    weights: Array2<f64>,
    bias: Array1<f64>,
}

impl LinearProbe {
    pub fn fit(features: &Array2<f64>, targets: &[usize], classes: usize, config: &ProbeConfig) -> Self {
        assert_eq!(features.nrows(), targets.len(), "one target per feature row");
        assert!(!targets.is_empty() && targets.iter().all(|&t| t < classes), "targets in range");
        let n = features.nrows() as f64;
        let (mean, scale) = if config.standardize {
            let var = features.var_axis(Axis(0), 0.0);
            (features.mean_axis(Axis(0)).expect("non-empty"), var.mapv(|v| if v > 1e-12 { 1.0 / v.sqrt() } else { 0.0 }))
        } else {
            (Array1::zeros(features.ncols()), Array1::ones(features.ncols()))
        };
        let x = (features - &mean) * &scale;
        let mut weights = Array2::<f64>::zeros((features.ncols(), classes));
        let mut bias = Array1::<f64>::zeros(classes);
        // Softmax cross-entropy has Hessian bounded by 1/2 * (X'X/n) per class
        // block; the bias column adds at most 1/2.
        let step = 1.0 / (0.5 * (top_eigenvalue(&x) + 1.0) + config.l2);
        for _ in 0..config.iterations {
            let mut probs = x.dot(&weights) + &bias;
            ops::softmax_rows(&mut probs);
            for (i, &t) in targets.iter().enumerate() {
                probs[[i, t]] -= 1.0;
            }
            let gw = x.t().dot(&probs) / n + &weights * config.l2;
            let gb = probs.sum_axis(Axis(0)) / n;
            weights.scaled_add(-step, &gw);
            bias.scaled_add(-step, &gb);
        }
        LinearProbe { mean, scale, weights, bias }
    }

    pub fn predict(&self, features: &Array2<f64>) -> Vec<usize> {
        let x = (features - &self.mean) * &self.scale;
        let logits = x.dot(&self.weights) + &self.bias;
        logits.rows().into_iter().map(argmax).collect()
    }

    pub fn accuracy(&self, features: &Array2<f64>, targets: &[usize]) -> f64 {
        let preds = self.predict(features);
        let hits = preds.iter().zip(targets).filter(|(p, t)| p == t).count();
        hits as f64 / targets.len().max(1) as f64
    }
}

/// Largest eigenvalue of `X'X / n` by power iteration.
fn top_eigenvalue(x: &Array2<f64>) -> f64 {
    let n = x.nrows().max(1) as f64;
    let mut v = Array1::from_shape_fn(x.ncols(), |i| 1.0 + i as f64);
    v /= v.dot(&v).sqrt().max(1.0);
    let mut value = 0.0;
    for _ in 0..100 {
        let w = x.t().dot(&x.dot(&v)) / n;
        let norm = w.dot(&w).sqrt();
        if norm < 1e-300 {
            return 0.0;
        }
        value = v.dot(&w);
        v = w / norm;
    }
    value.max(0.0)
}
