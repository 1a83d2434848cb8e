use super::{NnError, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Zeroed moment buffers shaped like `params`, default hyperparameters.
    pub fn new(params: &[Vec<T>]) -> Self {
        Self::with_lr(params, 1e-3)
    }

    pub fn with_lr(params: &[Vec<T>], lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NnError::InvalidConfig(format!(
                "adam lr={} beta1={} beta2={} eps={}",
                self.lr, self.beta1, self.beta2, self.epsilon
            )))
        }
    }
}

/// One bias-corrected Adam update of every parameter buffer.
pub fn adam_step<T: Scalar>(params: &mut [Vec<T>], grads: &[Vec<T>], state: &mut AdamState<T>) -> Result<(), NnError> {
    let shapes_match = params.len() == grads.len()
        && params.len() == state.m.len()
        && params.iter().zip(grads).zip(&state.m).all(|((p, g), m)| p.len() == g.len() && p.len() == m.len());
    if !shapes_match {
        return Err(NnError::Shape("parameter, gradient and moment buffers differ".into()));
    }
    state.validate()?;
    state.t += 1;
    let t = state.t as i32;
    let step = state.lr * (1.0 - state.beta2.powi(t)).sqrt() / (1.0 - state.beta1.powi(t));
    let (b1, b2) = (T::from_f64(state.beta1), T::from_f64(state.beta2));
    let (c1, c2) = (T::one() - b1, T::one() - b2);
    let step = T::from_f64(step);
    let eps_hat = T::from_f64(state.epsilon * (1.0 - state.beta2.powi(t)).sqrt());
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + c1 * gi;
            v[i] = b2 * v[i] + c2 * gi * gi;
            p[i] -= step * m[i] / (v[i].sqrt() + eps_hat);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let s = AdamState::<f32>::new(&[vec![0.0; 3]]);
        assert_eq!((s.lr, s.beta1, s.beta2, s.epsilon, s.t), (1e-3, 0.9, 0.999, 1e-8, 0));
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![vec![0.5f64, -2.0], vec![3.0]];
        let orig = p.clone();
        let mut s = AdamState::new(&p);
        for _ in 0..3 {
            adam_step(&mut p, &[vec![0.0, 0.0], vec![0.0]], &mut s).unwrap();
        }
        assert_eq!(p, orig);
        assert_eq!(s.t, 3);
    }

    #[test]
    fn first_step_magnitude() {
        for g in [1e-3, 0.5, -7.0] {
            let mut p = vec![vec![1.0f64]];
            let mut s = AdamState::new(&p);
            adam_step(&mut p, &[vec![g]], &mut s).unwrap();
            // m_hat = g, v_hat = g^2, so the step is lr * |g| / (|g| + eps)
            let expect = 1e-3 * g.abs() / (g.abs() + 1e-8);
            assert!(((1.0 - p[0][0]).abs() - expect).abs() < 1e-12);
            assert_eq!((1.0 - p[0][0]).signum(), g.signum());
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![vec![1.0f32, 2.0]];
        let mut s = AdamState::new(&p);
        assert!(adam_step(&mut p, &[vec![1.0]], &mut s).is_err());
        assert_eq!(s.t, 0);
    }
}
