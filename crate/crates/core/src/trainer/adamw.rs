use crate::model::ModelParams;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Number of steps taken.
    pub t: u64,
    pub m: ModelParams,
    pub v: ModelParams,
}

impl AdamW {
    pub fn new(params: &ModelParams, learning_rate: f64, weight_decay: f64) -> Self {
        AdamW {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// One update of every parameter tensor whose path passes `trainable`.
    /// Other tensors and their moment estimates are left untouched.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, trainable: impl Fn(&str) -> bool) {
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (lr, decay) = (self.learning_rate, 1.0 - self.learning_rate * self.weight_decay);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);

        let grads = grads.slices();
        let moments = self.m.slices_mut().into_iter().zip(self.v.slices_mut());
        for (((name, p), (_, g)), ((_, m), (_, v))) in params.slices_mut().into_iter().zip(grads).zip(moments) {
            if !trainable(&name) {
                continue;
            }
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] = p[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_like(p: &ModelParams, seed: u64) -> ModelParams {
        let mut out = p.zeros_like();
        let mut rng = crate::seed::rng(seed);
        for (_, s) in out.slices_mut() {
            s.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        out
    }

    /// Textbook Adam without any decay term.
    fn plain_adam(params: &mut [f64], grads: &[Vec<f64>], lr: f64) {
        let (mut m, mut v) = (vec![0.0; params.len()], vec![0.0; params.len()]);
        for (t, g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            for i in 0..params.len() {
                m[i] = 0.9 * m[i] + (1.0 - 0.9) * g[i];
                v[i] = 0.999 * v[i] + (1.0 - 0.999) * g[i] * g[i];
                let m_hat = m[i] / (1.0 - 0.9f64.powi(t));
                let v_hat = v[i] / (1.0 - 0.999f64.powi(t));
                params[i] -= lr * m_hat / (v_hat.sqrt() + 1e-8);
            }
        }
    }

    #[test]
    fn zero_decay_is_plain_adam() {
        let init = ModelParams::init(8, 1);
        let grads: Vec<ModelParams> = (0..5).map(|k| random_like(&init, k)).collect();
        let mut params = init.clone();
        let mut opt = AdamW::new(&params, 1e-3, 0.0);
        for g in &grads {
            opt.step(&mut params, g, |_| true);
        }
        for (pi, (name, got)) in params.slices().into_iter().enumerate() {
            let mut expected = init.slices()[pi].1.to_vec();
            let stream: Vec<Vec<f64>> = grads.iter().map(|g| g.slices()[pi].1.to_vec()).collect();
            plain_adam(&mut expected, &stream, 1e-3);
            assert_eq!(got, expected.as_slice(), "{name}");
        }
    }

    #[test]
    fn decay_is_decoupled_from_gradient() {
        let init = ModelParams::init(8, 2);
        let mut params = init.clone();
        let mut opt = AdamW::new(&params, 1e-2, 0.5);
        opt.step(&mut params, &init.zeros_like(), |_| true);
        for ((_, a), (_, b)) in params.slices().into_iter().zip(init.slices()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(*x, y * (1.0 - 1e-2 * 0.5));
            }
        }
    }

    #[test]
    fn frozen_tensors_untouched() {
        let init = ModelParams::init(8, 3);
        let mut params = init.clone();
        let mut opt = AdamW::new(&params, 1e-2, 1e-2);
        opt.step(&mut params, &random_like(&init, 9), |name| name.starts_with("heads.VQ."));
        for ((name, a), (_, b)) in params.slices().into_iter().zip(init.slices()) {
            assert_eq!(a == b, !name.starts_with("heads.VQ."), "{name}");
        }
        assert!(opt.m.slices().iter().filter(|(n, _)| !n.starts_with("heads.VQ.")).all(|(_, s)| s.iter().all(|&v| v == 0.0)));
    }
}
