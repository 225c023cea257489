//! Momentum SGD in accumulator form: v' = mu*v + g, w' = w - lr*v'.

use super::{KernelError, ParameterVector};

/// Velocity accumulator; zero-initialized at training start.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub velocity: Vec<f64>,
}

impl MomentumState {
    pub fn zeros(len: usize) -> Self {
        Self { velocity: vec![0.0; len] }
    }
}

/// Applies one momentum-SGD update in place and advances the version counter.
///
/// Non-finite gradient entries abort with a divergence error so the caller
/// can terminate the run instead of silently training on NaNs.
pub fn sgd_momentum_step(
    params: &mut ParameterVector,
    mstate: &mut MomentumState,
    grad: &[f64],
    lr: f64,
    momentum: f64,
) -> Result<(), KernelError> {
    if grad.len() != params.values.len() || mstate.velocity.len() != params.values.len() {
        return Err(KernelError::DimensionMismatch(format!(
            "grad {} / velocity {} / params {}",
            grad.len(),
            mstate.velocity.len(),
            params.values.len()
        )));
    }
    if !(lr > 0.0) {
        return Err(KernelError::InvalidConfig("lr must be > 0".into()));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(KernelError::Diverged("gradient"));
    }
    for ((w, v), g) in params.values.iter_mut().zip(&mut mstate.velocity).zip(grad) {
        *v = momentum * *v + g;
        *w -= lr * *v;
    }
    params.version += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut params = ParameterVector { values: vec![1.0, -2.0], version: 3 };
        let mut m = MomentumState::zeros(2);
        sgd_momentum_step(&mut params, &mut m, &[0.5, -1.0], 0.1, 0.0).unwrap();
        assert_eq!(params.values, vec![1.0 - 0.05, -2.0 + 0.1]);
        assert_eq!(params.version, 4);
    }

    #[test]
    fn zero_gradient_coasts_on_velocity() {
        let mut params = ParameterVector { values: vec![1.0], version: 0 };
        let mut m = MomentumState { velocity: vec![2.0] };
        sgd_momentum_step(&mut params, &mut m, &[0.0], 0.1, 0.9).unwrap();
        assert_eq!(m.velocity, vec![1.8]);
        assert_eq!(params.values, vec![1.0 - 0.1 * 1.8]);
    }

    #[test]
    fn matches_scalar_recurrence_on_1d_quadratic() {
        // Oracle: hand-rolled scalar recurrence for f(w) = 0.5*w^2 (grad w).
        let (lr, mu) = (0.05, 0.9);
        let mut params = ParameterVector { values: vec![3.0], version: 0 };
        let mut m = MomentumState::zeros(1);
        let (mut w_ref, mut v_ref) = (3.0f64, 0.0f64);
        for _ in 0..50 {
            let g = params.values[0];
            sgd_momentum_step(&mut params, &mut m, &[g], lr, mu).unwrap();
            v_ref = mu * v_ref + w_ref;
            w_ref -= lr * v_ref;
            assert_eq!(params.values[0], w_ref);
            assert_eq!(m.velocity[0], v_ref);
        }
        assert_eq!(params.version, 50);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut params = ParameterVector { values: vec![1.0], version: 0 };
        let mut m = MomentumState::zeros(1);
        assert!(matches!(
            sgd_momentum_step(&mut params, &mut m, &[f64::NAN], 0.1, 0.9),
            Err(KernelError::Diverged(_))
        ));
    }
}
