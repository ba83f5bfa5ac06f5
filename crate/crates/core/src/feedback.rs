//! Feedback policies injected in place of the bare gradient.
//!
//! A policy turns the measured gradient into a direction. Step scale is not
//! applied here: the integrator multiplies by `λ·Δt` for every policy, so `λ`
//! means the same thing across all three.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyConfig {
    Gd,
    Momentum {
        #[serde(default = "default_theta")]
        theta: f64,
    },
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

fn default_theta() -> f64 {
    0.9
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}

impl PolicyConfig {
    pub fn momentum() -> Self {
        PolicyConfig::Momentum { theta: default_theta() }
    }

    pub fn adam() -> Self {
        PolicyConfig::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyConfig::Gd => "gd",
            PolicyConfig::Momentum { .. } => "momentum",
            PolicyConfig::Adam { .. } => "adam",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must lie in [0, 1), got {v}")))
            }
        };
        match *self {
            PolicyConfig::Gd => Ok(()),
            PolicyConfig::Momentum { theta } => unit("theta", theta),
            PolicyConfig::Adam { beta1, beta2, epsilon } => {
                unit("beta1", beta1)?;
                unit("beta2", beta2)?;
                // ε = 0 is allowed for scale-invariance experiments.
                if !(epsilon >= 0.0 && epsilon.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "epsilon must be non-negative, got {epsilon}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Per-trajectory optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    /// Momentum accumulator.
    pub g_accum: Vec<f64>,
    /// Adam first moment.
    pub m: Vec<f64>,
    /// Adam second moment.
    pub v: Vec<f64>,
    /// Number of updates applied so far.
    pub t: usize,
}

impl PolicyState {
    pub fn len(&self) -> usize {
        self.g_accum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g_accum.is_empty()
    }
}

pub fn init_state(n: usize, config: &PolicyConfig) -> Result<PolicyState> {
    if n == 0 {
        return Err(Error::InvalidParameter("policy dimension must be at least 1".into()));
    }
    config.validate()?;
    Ok(PolicyState {
        g_accum: vec![0.0; n],
        m: vec![0.0; n],
        v: vec![0.0; n],
        t: 0,
    })
}

/// Pure form: returns the direction and the successor state.
pub fn compute_update(
    state: &PolicyState,
    grad: &[f64],
    config: &PolicyConfig,
) -> Result<(Vec<f64>, PolicyState)> {
    let mut next = state.clone();
    let mut direction = vec![0.0; grad.len()];
    update_in_place(&mut next, grad, config, &mut direction)?;
    Ok((direction, next))
}

/// In-place form used by the integrator. On error the state is untouched.
pub fn update_in_place(
    state: &mut PolicyState,
    grad: &[f64],
    config: &PolicyConfig,
    direction: &mut [f64],
) -> Result<()> {
    let n = state.len();
    if grad.len() != n || direction.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if grad.len() != n { grad.len() } else { direction.len() },
        });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { roundtrip: state.t });
    }
    state.t += 1;
    match *config {
        PolicyConfig::Gd => direction.copy_from_slice(grad),
        PolicyConfig::Momentum { theta } => {
            for ((acc, d), &g) in state.g_accum.iter_mut().zip(direction.iter_mut()).zip(grad) {
                *acc = theta * *acc + (1.0 - theta) * g;
                *d = *acc;
            }
        }
        PolicyConfig::Adam { beta1, beta2, epsilon } => {
            let t = i32::try_from(state.t).unwrap_or(i32::MAX);
            let bias1 = 1.0 - beta1.powi(t);
            let bias2 = 1.0 - beta2.powi(t);
            for i in 0..n {
                let g = grad[i];
                state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
                state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
                let m_hat = state.m[i] / bias1;
                let v_hat = state.v[i] / bias2;
                let denom = v_hat.sqrt() + epsilon;
                direction[i] = if denom == 0.0 { 0.0 } else { m_hat / denom };
            }
        }
    }
    Ok(())
}
