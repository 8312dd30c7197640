use serde::{Deserialize, Serialize};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a logit: returns the loss and its derivative.
pub fn bce_loss(logit: f64, label: f64) -> (f64, f64) {
    let loss = logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p();
    (loss, sigmoid(logit) - label)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for a fixed list of parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, block_lens: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Applies one bias-corrected update. Block lengths must match construction.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            assert_eq!(p.len(), m.len());
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_reference_values() {
        let (l, g) = bce_loss(0.0, 1.0);
        assert!((l - 2f64.ln()).abs() < 1e-15 && (g + 0.5).abs() < 1e-15);
        let (l, g) = bce_loss(0.0, 0.0);
        assert!((l - 2f64.ln()).abs() < 1e-15 && (g - 0.5).abs() < 1e-15);
        let (l, g) = bce_loss(50.0, 1.0);
        assert!(l.is_finite() && l < 1e-20 && g.abs() < 1e-20);
        let (l, _) = bce_loss(-800.0, 1.0);
        assert!((l - 800.0).abs() < 1e-9);
    }

    #[test]
    fn bce_derivative_matches_finite_differences() {
        for &(x, y) in &[(-3.0, 1.0), (0.7, 0.0), (2.5, 1.0)] {
            let h = 1e-6;
            let fd = (bce_loss(x + h, y).0 - bce_loss(x - h, y).0) / (2.0 * h);
            assert!((fd - bce_loss(x, y).1).abs() < 1e-8);
        }
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut p = [1.0, -2.0, 0.5];
        let g = [3.0, -0.2, 0.0];
        let mut st = AdamState::new(AdamConfig::default(), &[3]);
        st.update(&mut [&mut p[..]], &[&g[..]]);
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p[1] - (-2.0 + 1e-3)).abs() < 1e-9);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut p = vec![0.3; 5];
            let mut st = AdamState::new(AdamConfig::default(), &[5]);
            for k in 0..100 {
                let g: Vec<f64> = p.iter().enumerate().map(|(i, v)| v * (i as f64 + 1.0) - (k as f64).sin()).collect();
                st.update(&mut [&mut p[..]], &[&g[..]]);
            }
            p
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
