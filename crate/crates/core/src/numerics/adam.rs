use serde::{Deserialize, Serialize};

use super::{NumericsError, Tensor};

/// Adam with bias correction and time-based learning-rate decay.
///
/// The rate used for update number `step + 1` is `lr / (1 + decay * step)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64, decay: f64) -> Self {
        Self {
            lr,
            decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Learning rate that the next update will use.
    pub fn effective_lr(&self) -> f64 {
        self.lr / (1.0 + self.decay * self.step as f64)
    }

    /// Applies one update. `names` is only used for error messages.
    pub fn update(
        &mut self,
        params: &mut [Tensor],
        grads: &[Tensor],
        names: &[String],
    ) -> Result<(), NumericsError> {
        if params.len() != grads.len() {
            return Err(NumericsError::ParamCount {
                params: params.len(),
                grads: grads.len(),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(NumericsError::shape("adam_step", p.shape(), g.shape()));
            }
            if !g.is_finite() {
                let name = names.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
                return Err(NumericsError::NonFinite(format!("gradient of parameter {name}")));
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len()
            || self.first.iter().zip(params.iter()).any(|(m, p)| m.shape() != p.shape())
        {
            return Err(NumericsError::ParamCount {
                params: params.len(),
                grads: self.first.len(),
            });
        }

        let lr_t = self.effective_lr();
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *mv = b1 * *mv + (1.0 - b1) * gv;
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut adam = Adam::new(0.01, 0.0);
        let mut p = vec![Tensor::scalar(1.0)];
        adam.update(&mut p, &[Tensor::scalar(-3.0)], &[]).unwrap();
        assert!((p[0].data()[0] - 1.01).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_leaves_params_bit_identical() {
        let mut adam = Adam::new(0.1, 1e-6);
        let orig = Tensor::from_rows(&[[0.123456789, -9.87654321]]).unwrap();
        let mut p = vec![orig.clone()];
        adam.update(&mut p, &[Tensor::zeros(1, 2)], &[]).unwrap();
        assert_eq!(p[0], orig);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn decay_shrinks_rate() {
        let mut adam = Adam::new(1.0, 0.5);
        assert_eq!(adam.effective_lr(), 1.0);
        let mut p = vec![Tensor::scalar(0.0)];
        adam.update(&mut p, &[Tensor::scalar(1.0)], &[]).unwrap();
        assert!((adam.effective_lr() - 1.0 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut adam = Adam::new(0.1, 0.0);
        let mut p = vec![Tensor::scalar(0.0)];
        let err = adam
            .update(&mut p, &[Tensor::scalar(f64::NAN)], &["decoder.w".to_string()])
            .unwrap_err();
        assert!(err.to_string().contains("decoder.w"));
    }

    /// Independent scalar recurrence for Adam on f(w) = (w - 3)^2.
    fn scalar_adam_oracle(steps: usize, lr: f64) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut w, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        let mut trace = Vec::with_capacity(steps);
        for t in 1..=steps {
            let g = 2.0 * (w - 3.0);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            w -= lr * mh / (vh.sqrt() + eps);
            trace.push(w);
        }
        trace
    }

    #[test]
    fn quadratic_converges_like_scalar_recurrence() {
        let oracle = scalar_adam_oracle(200, 0.1);
        let mut adam = Adam::new(0.1, 0.0);
        let mut p = vec![Tensor::scalar(0.0)];
        for (i, expected) in oracle.iter().enumerate() {
            let g = 2.0 * (p[0].data()[0] - 3.0);
            adam.update(&mut p, &[Tensor::scalar(g)], &[]).unwrap();
            assert!((p[0].data()[0] - expected).abs() < 1e-12, "step {i}");
        }
        assert!((p[0].data()[0] - 3.0).abs() < 0.05);

        // Adam oscillates around the optimum; the error envelope over
        // 25-step windows shrinks monotonically.
        let envelope: Vec<f64> = oracle
            .chunks(25)
            .map(|c| c.iter().map(|w| (w - 3.0).abs()).fold(0.0, f64::max))
            .collect();
        assert!(envelope.windows(2).all(|w| w[1] < w[0]), "{envelope:?}");
    }
}
