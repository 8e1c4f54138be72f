use crate::error::{Error, Result};
use crate::model::Parameters;
use crate::tensor::Real;

use super::config::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl From<&TrainConfig> for AdamConfig {
    fn from(c: &TrainConfig) -> Self {
        AdamConfig {
            learning_rate: c.learning_rate,
            beta1: c.adam_beta1,
            beta2: c.adam_beta2,
            eps: c.adam_eps,
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        (&TrainConfig::default()).into()
    }
}

/// First and second moments for every parameter tensor, plus the step count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState<T> {
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &impl Parameters<T>) -> Self {
        let zeros: Vec<Vec<T>> = params
            .tensors()
            .iter()
            .map(|(_, t)| vec![T::zero(); t.numel()])
            .collect();
        AdamState {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update from the gradients stored on each tensor,
/// which are cleared afterwards.
///
/// A coordinate whose gradient is exactly zero keeps its value; its moments
/// still decay.
pub fn adam_step<T: Real>(
    params: &mut impl Parameters<T>,
    state: &mut AdamState<T>,
    config: &AdamConfig,
) -> Result<()> {
    let mut tensors = params.tensors_mut();
    if state.first.len() != tensors.len() {
        return Err(Error::Training(format!(
            "optimizer state holds {} tensors, model has {}",
            state.first.len(),
            tensors.len()
        )));
    }
    for (name, t) in &tensors {
        if t.grad().is_none() {
            return Err(Error::Training(format!(
                "missing gradient for parameter {name}"
            )));
        }
    }
    state.step += 1;
    let step = state.step as i32;
    let (b1, b2) = (T::of(config.beta1), T::of(config.beta2));
    let one = T::one();
    let c1 = one - T::of(config.beta1.powi(step));
    let c2 = one - T::of(config.beta2.powi(step));
    let lr = T::of(config.learning_rate);
    let eps = T::of(config.eps);

    for (i, (name, t)) in tensors.iter_mut().enumerate() {
        let grad = t.take_grad().expect("checked above");
        let (m, v) = (&mut state.first[i], &mut state.second[i]);
        if m.len() != grad.len() || v.len() != grad.len() {
            return Err(Error::Training(format!(
                "optimizer moments for {name} do not match its shape"
            )));
        }
        for (j, theta) in t.data_mut().iter_mut().enumerate() {
            let g = grad[j];
            m[j] = b1 * m[j] + (one - b1) * g;
            v[j] = b2 * v[j] + (one - b2) * g * g;
            if g != T::zero() {
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        t.set_requires_grad(true);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_param(x: f64) -> Vec<(String, Tensor<f64>)> {
        vec![(
            "w".into(),
            Tensor::new(vec![1], vec![x]).unwrap().with_grad(),
        )]
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar_param(0.0);
        let mut s = AdamState::new(&p);
        let c = AdamConfig::default();
        p[0].1.set_grad(vec![1.0]).unwrap();
        adam_step(&mut p, &mut s, &c).unwrap();
        let expected = -c.learning_rate / (1.0 + c.eps);
        assert!((p[0].1.data()[0] - expected).abs() < 1e-18);
        assert!(p[0].1.grad().is_none());
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = scalar_param(0.3);
        let mut s = AdamState::new(&p);
        let c = AdamConfig::default();
        p[0].1.set_grad(vec![1.0]).unwrap();
        adam_step(&mut p, &mut s, &c).unwrap();
        let before = p[0].1.data()[0];
        let m_before = s.first[0][0];
        p[0].1.set_grad(vec![0.0]).unwrap();
        adam_step(&mut p, &mut s, &c).unwrap();
        assert_eq!(p[0].1.data()[0].to_bits(), before.to_bits());
        assert_eq!(s.first[0][0], 0.9 * m_before);
    }

    #[test]
    fn missing_gradient_names_parameter() {
        let mut p = scalar_param(0.0);
        let mut s = AdamState::new(&p);
        let err = adam_step(&mut p, &mut s, &AdamConfig::default()).unwrap_err();
        assert!(err.to_string().contains("w"), "{err}");
    }
}
