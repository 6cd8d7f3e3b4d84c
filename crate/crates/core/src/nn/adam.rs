use serde::{Deserialize, Serialize};

use crate::clinalg::{Complex, ComplexMatrix};
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moments for a fixed, ordered list of complex parameter tensors. Each
/// complex entry is two independent real parameters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AdamState {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_valid(&self) -> bool {
        self.first.iter().flatten().all(|m| m.is_finite())
            && self.second.iter().flatten().all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// One bias-corrected Adam update over `params[i] -= lr · m̂ / (√v̂ + ε)`.
///
/// A non-finite gradient rejects the whole step, leaving parameters and state untouched.
pub fn adam_step(
    params: &mut [&mut ComplexMatrix],
    grads: &[&ComplexMatrix],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::InvalidArgument(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::Shape {
                op: "adam_step",
                left: p.shape(),
                right: g.shape(),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of parameter {i}")));
        }
    }
    if state.first.is_empty() {
        state.first = params.iter().map(|p| vec![0.0; 2 * p.len()]).collect();
        state.second = state.first.clone();
    } else if state.first.len() != params.len()
        || state.first.iter().zip(params.iter()).any(|(m, p)| m.len() != 2 * p.len())
    {
        return Err(Error::InvalidArgument(
            "parameter list changed between Adam steps".into(),
        ));
    }

    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        for (idx, (w, gz)) in p.as_mut_slice().iter_mut().zip(g.as_slice()).enumerate() {
            let mut parts = [w.re, w.im];
            for (k, gk) in [gz.re, gz.im].into_iter().enumerate() {
                let s = 2 * idx + k;
                m[s] = BETA1 * m[s] + (1.0 - BETA1) * gk;
                v[s] = BETA2 * v[s] + (1.0 - BETA2) * gk * gk;
                let m_hat = m[s] / c1;
                let v_hat = v[s] / c2;
                parts[k] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
            *w = Complex::new(parts[0], parts[1]);
        }
    }
    Ok(())
}
