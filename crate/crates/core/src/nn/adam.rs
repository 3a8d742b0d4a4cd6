use crate::error::{Error, Result};

use super::network::{Network, ParamGrads};

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid Adam settings {self:?}")))
        }
    }
}

impl Network {
    /// One bias-corrected Adam update. Non-finite gradients leave the
    /// parameters untouched and return a numeric error; the caller fills in
    /// the epoch and batch.
    pub fn adam_step(&mut self, grads: &ParamGrads, config: &AdamConfig) -> Result<()> {
        let params = &mut self.params;
        if grads.layers.len() != params.layers.len()
            || grads.layers.iter().zip(&params.layers).any(|(g, p)| {
                g.weights.shape() != p.weights.shape() || g.bias.len() != p.bias.len()
            })
        {
            return Err(Error::shape("gradient layout does not match parameters"));
        }
        if !grads.is_finite() {
            return Err(Error::Numeric {
                epoch: 0,
                batch: 0,
                detail: "non-finite gradient".into(),
            });
        }

        params.step += 1;
        let t = params.step as i32;
        let c1 = 1.0 - config.beta1.powi(t);
        let c2 = 1.0 - config.beta2.powi(t);
        let (b1, b2) = (config.beta1, config.beta2);
        for (((p, g), m), v) in params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(params.first_moment.iter_mut())
            .zip(params.second_moment.iter_mut())
        {
            let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
                }
            };
            update(
                p.weights.as_mut_slice(),
                g.weights.as_slice(),
                m.weights.as_mut_slice(),
                v.weights.as_mut_slice(),
            );
            update(&mut p.bias, &g.bias, &mut m.bias, &mut v.bias);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::{LayerParams, NetworkParams, NetworkSpec};
    use crate::rng::SeededRng;
    use crate::tensor::DenseMatrix;

    fn scalar_net(weight: f64) -> Network {
        let spec = NetworkSpec::new(1, &[], 1).unwrap();
        let mut params = NetworkParams::zeros(&spec);
        params.layers[0].weights = DenseMatrix::from_rows(&[[weight]]).unwrap();
        Network::from_parts(spec, params).unwrap()
    }

    fn grads(w: f64, b: f64) -> ParamGrads {
        ParamGrads {
            layers: vec![LayerParams {
                weights: DenseMatrix::from_rows(&[[w]]).unwrap(),
                bias: vec![b],
            }],
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let spec = NetworkSpec::new(3, &[4], 2).unwrap();
        let mut net = Network::init(spec, &mut SeededRng::new(1, "init")).unwrap();
        let before = net.params.flatten();
        let zero = ParamGrads {
            layers: net
                .params
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.weights.rows(), l.weights.cols()))
                .collect(),
        };
        for _ in 0..3 {
            net.adam_step(&zero, &AdamConfig::default()).unwrap();
        }
        assert_eq!(net.params.flatten(), before);
        assert_eq!(net.params.step, 3);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g², so the step is lr * g / (|g| + eps)
        let mut net = scalar_net(1.0);
        let cfg = AdamConfig::default();
        net.adam_step(&grads(0.5, 0.0), &cfg).unwrap();
        let expected = 1.0 - 0.001 * 0.5 / (0.5 + 1e-8);
        let w = net.params.layers[0].weights.get(0, 0);
        assert!((w - expected).abs() < 1e-12);
        assert!((w - 0.999).abs() < 1e-10);
    }

    #[test]
    fn opposite_gradients_move_symmetrically() {
        let mut net = scalar_net(0.0);
        net.adam_step(&grads(0.3, -0.3), &AdamConfig::default()).unwrap();
        let w = net.params.layers[0].weights.get(0, 0);
        let b = net.params.layers[0].bias[0];
        assert_eq!(w, -b);
        assert!(w < 0.0);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut net = scalar_net(1.0);
        let mut g = grads(0.0, 0.0);
        g.layers[0].weights.set(0, 0, f64::NAN);
        let err = net.adam_step(&g, &AdamConfig::default());
        assert!(matches!(err, Err(Error::Numeric { .. })));
        assert_eq!(net.params.step, 0);
        assert_eq!(net.params.layers[0].weights.get(0, 0), 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig::default().validate().is_ok());
        let bad = AdamConfig {
            beta2: 1.0,
            ..AdamConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
