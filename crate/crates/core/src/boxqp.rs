//! Box-constrained quadratic programs and the mapping from oscillator
//! amplitudes to decision variables.
//!
//! The objective is `xᵀQx + cᵀx` over `0 ≤ x ≤ 1`, with no symmetry or sign
//! assumption on `Q`. Amplitudes in `[-√a, √a]` map affinely onto `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense BoxQP instance. `Q` is stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxQpInstance {
    n: usize,
    q: Vec<f64>,
    c: Vec<f64>,
    // Q + Qᵀ, cached for the gradient.
    sym: Vec<f64>,
    best_known: Option<f64>,
    label: String,
}

impl BoxQpInstance {
    /// Builds an instance from a row-major `n×n` matrix and a length-`n` vector.
    pub fn new(label: impl Into<String>, q: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let n = c.len();
        if n == 0 {
            return Err(Error::InvalidInstance("dimension must be at least 1".into()));
        }
        if q.len() != n * n {
            return Err(Error::InvalidInstance(format!(
                "Q has {} entries, expected {}",
                q.len(),
                n * n
            )));
        }
        if let Some(i) = q.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInstance(format!(
                "Q entry ({}, {}) is not finite",
                i / n,
                i % n
            )));
        }
        if let Some(i) = c.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInstance(format!("c entry {i} is not finite")));
        }
        let mut sym = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                sym[i * n + j] = q[i * n + j] + q[j * n + i];
            }
        }
        Ok(Self {
            n,
            q,
            c,
            sym,
            best_known: None,
            label: label.into(),
        })
    }

    pub fn with_best_known(mut self, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidInstance(format!(
                "best-known objective {value} is not finite"
            )));
        }
        self.best_known = Some(value);
        Ok(self)
    }

    pub fn set_best_known(&mut self, value: Option<f64>) -> Result<()> {
        if let Some(v) = value {
            if !v.is_finite() {
                return Err(Error::InvalidInstance(format!(
                    "best-known objective {v} is not finite"
                )));
            }
        }
        self.best_known = value;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn q_at(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.n + j]
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn best_known(&self) -> Option<f64> {
        self.best_known
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: len,
            });
        }
        Ok(())
    }

    /// `xᵀQx + cᵀx`, exactly as written. `x` need not lie in the box.
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x.len())?;
        Ok(self.objective_unchecked(x))
    }

    pub(crate) fn objective_unchecked(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for (i, row) in self.q.chunks_exact(n).enumerate() {
            let qx: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            total += x[i] * qx + self.c[i] * x[i];
        }
        total
    }

    /// `(Q + Qᵀ)x + c`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let mut out = vec![0.0; self.n];
        self.gradient_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, row), ci) in out.iter_mut().zip(self.sym.chunks_exact(self.n)).zip(&self.c) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + ci;
        }
    }
}

/// A point of the unit box `[0, 1]^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxPoint(Vec<f64>);

impl BoxPoint {
    /// Rejects any coordinate outside `[0, 1]` (or non-finite).
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = x
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::OutsideBox { index, value });
        }
        Ok(Self(x))
    }

    /// Projects onto the box. NaN coordinates map to 0.
    pub fn clipped(mut x: Vec<f64>) -> Self {
        for v in &mut x {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self(x)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Squared amplitude `a` of the double-well minima, with `√a` cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeDomain {
    a: f64,
    sqrt_a: f64,
}

impl AmplitudeDomain {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "squared well amplitude must be positive and finite, got {a}"
            )));
        }
        Ok(Self { a, sqrt_a: a.sqrt() })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn sqrt_a(&self) -> f64 {
        self.sqrt_a
    }
}

/// How the box-space gradient is carried back into amplitude space.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackScaling {
    /// Chain rule through the affine map: the box gradient times `1/(2√a)`.
    #[default]
    ChainRule,
    /// Box gradient at the unclipped image, without the chain factor.
    Unscaled,
}

#[inline]
fn affine(mu: f64, sqrt_a: f64) -> f64 {
    0.5 * (mu / sqrt_a + 1.0)
}

/// `x_i = max(min(½(μ_i/√a + 1), 1), 0)`.
pub fn amplitude_to_box(mu: &[f64], dom: &AmplitudeDomain) -> BoxPoint {
    BoxPoint::clipped(mu.iter().map(|&m| affine(m, dom.sqrt_a)).collect())
}

/// The affine part of [`amplitude_to_box`], without projection.
pub fn amplitude_to_box_unclipped(mu: &[f64], dom: &AmplitudeDomain) -> Vec<f64> {
    mu.iter().map(|&m| affine(m, dom.sqrt_a)).collect()
}

/// Gradient of `μ ↦ f(½(μ/√a + 1))`, i.e. the box gradient at the unclipped
/// image scaled by `1/(2√a)`.
pub fn feedback_gradient(inst: &BoxQpInstance, mu: &[f64], dom: &AmplitudeDomain) -> Result<Vec<f64>> {
    feedback_gradient_scaled(inst, mu, dom, FeedbackScaling::ChainRule)
}

pub fn feedback_gradient_scaled(
    inst: &BoxQpInstance,
    mu: &[f64],
    dom: &AmplitudeDomain,
    scaling: FeedbackScaling,
) -> Result<Vec<f64>> {
    inst.check_len(mu.len())?;
    let mut x = vec![0.0; mu.len()];
    let mut out = vec![0.0; mu.len()];
    feedback_gradient_into(inst, mu, dom, scaling, &mut x, &mut out);
    Ok(out)
}

/// Allocation-free form used by the integrator; `x` is scratch space.
pub(crate) fn feedback_gradient_into(
    inst: &BoxQpInstance,
    mu: &[f64],
    dom: &AmplitudeDomain,
    scaling: FeedbackScaling,
    x: &mut [f64],
    out: &mut [f64],
) {
    for (xi, &m) in x.iter_mut().zip(mu) {
        *xi = affine(m, dom.sqrt_a);
    }
    inst.gradient_into(x, out);
    if scaling == FeedbackScaling::ChainRule {
        let factor = 0.5 / dom.sqrt_a;
        out.iter_mut().for_each(|g| *g *= factor);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> Vec<f64> {
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            q[i * n + i] = 1.0;
        }
        q
    }

    #[test]
    fn objective_identity_and_cross_term() {
        let inst = BoxQpInstance::new("id", identity(2), vec![0.0, 0.0]).unwrap();
        assert_eq!(inst.objective(&[1.0, 1.0]).unwrap(), 2.0);
        let inst = BoxQpInstance::new("x", vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(inst.objective(&[1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn gradient_hand_cases() {
        let inst = BoxQpInstance::new("id", identity(2), vec![0.0, 0.0]).unwrap();
        assert_eq!(inst.gradient(&[1.0, 0.0]).unwrap(), vec![2.0, 0.0]);
        let inst = BoxQpInstance::new("x", vec![0.0, 1.0, 0.0, 0.0], vec![3.0, -1.0]).unwrap();
        assert_eq!(inst.gradient(&[1.0, 1.0]).unwrap(), vec![4.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let inst = BoxQpInstance::new("id", identity(2), vec![0.0, 0.0]).unwrap();
        assert_eq!(
            inst.objective(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        );
        assert!(inst.gradient(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn construction_validates() {
        assert!(BoxQpInstance::new("e", vec![], vec![]).is_err());
        assert!(BoxQpInstance::new("e", vec![1.0, 2.0], vec![0.0, 0.0]).is_err());
        assert!(BoxQpInstance::new("e", vec![f64::NAN], vec![0.0]).is_err());
        assert!(BoxQpInstance::new("e", vec![1.0], vec![f64::INFINITY]).is_err());
        let inst = BoxQpInstance::new("e", vec![1.0], vec![0.0]).unwrap();
        assert!(inst.with_best_known(f64::NAN).is_err());
    }

    #[test]
    fn box_point_rejects_outside() {
        assert!(BoxPoint::new(vec![0.0, 1.0, 0.5]).is_ok());
        assert_eq!(
            BoxPoint::new(vec![0.5, 1.5]),
            Err(Error::OutsideBox { index: 1, value: 1.5 })
        );
        assert_eq!(BoxPoint::clipped(vec![-1.0, 2.0, 0.3]).as_slice(), &[0.0, 1.0, 0.3]);
    }

    #[test]
    fn amplitude_mapping_examples() {
        let dom = AmplitudeDomain::new(4.0).unwrap();
        let s = dom.sqrt_a();
        assert_eq!(amplitude_to_box(&[s, 0.0, -2.0 * s], &dom).as_slice(), &[1.0, 0.5, 0.0]);
        assert_eq!(amplitude_to_box_unclipped(&[s, -3.0 * s, 3.0 * s], &dom), vec![1.0, -1.0, 2.0]);
    }

    #[test]
    fn domain_validation() {
        assert!(AmplitudeDomain::new(0.0).is_err());
        assert!(AmplitudeDomain::new(-1.0).is_err());
        let dom = AmplitudeDomain::new(2553.23).unwrap();
        assert!((dom.sqrt_a() * dom.sqrt_a() - dom.a()).abs() <= 1e-12 * dom.a());
    }

    #[test]
    fn feedback_gradient_chain_rule_examples() {
        let dom = AmplitudeDomain::new(9.0).unwrap();
        let s = dom.sqrt_a();
        let inst = BoxQpInstance::new("id", identity(2), vec![0.0, 0.0]).unwrap();
        let g = feedback_gradient(&inst, &[s, s], &dom).unwrap();
        assert!((g[0] - 1.0 / s).abs() < 1e-15 && (g[1] - 1.0 / s).abs() < 1e-15);
        assert_eq!(feedback_gradient(&inst, &[-s, -s], &dom).unwrap(), vec![0.0, 0.0]);
        let raw = feedback_gradient_scaled(&inst, &[s, s], &dom, FeedbackScaling::Unscaled).unwrap();
        assert_eq!(raw, vec![2.0, 2.0]);
    }
}
