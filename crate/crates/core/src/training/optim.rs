use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" | "adamw" => Ok(OptimizerKind::Adam),
            other => Err(format!("unknown optimizer {other:?} (expected sgd or adam)")),
        }
    }
}

/// First-order optimizer with decoupled weight decay. `decay_mask[i]`
/// selects the parameters that decay. Parameter groups may override the
/// learning-rate multiplier and the decay coefficient for a slice.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    lr_scale: Vec<f64>,
    decay: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64, decay_mask: Vec<bool>) -> Self {
        let n = decay_mask.len();
        let moments = if kind == OptimizerKind::Adam { n } else { 0 };
        Optimizer {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr_scale: vec![1.0; n],
            decay: decay_mask.into_iter().map(|d| if d { weight_decay } else { 0.0 }).collect(),
            m: vec![0.0; moments],
            v: vec![0.0; moments],
            t: 0,
        }
    }

    /// Overrides the learning-rate multiplier and the decay coefficient of
    /// the parameters in `range`. Decay is applied as `lr * scale * decay`.
    pub fn set_group(&mut self, range: std::ops::Range<usize>, lr_scale: f64, weight_decay: f64) {
        self.lr_scale[range.clone()].fill(lr_scale);
        self.decay[range].fill(weight_decay);
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. Parameters are left on the f32 grid.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len(), "gradient/parameter length mismatch");
        assert_eq!(params.len(), self.decay.len(), "optimizer built for a different parameter count");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            let lr = self.lr * self.lr_scale[i];
            let direction = match self.kind {
                OptimizerKind::Sgd => g,
                OptimizerKind::Adam => {
                    self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                    self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                    (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + self.eps)
                }
            };
            let p = params[i];
            let next = p - lr * direction - lr * self.decay[i] * p;
            params[i] = f64::from(next as f32);
        }
    }
}
