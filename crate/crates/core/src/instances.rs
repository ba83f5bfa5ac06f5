//! Instance files, the conditioned random generator, and reference optima.
//!
//! Canonical instance file (UTF-8):
//!
//! ```text
//! n
//! c_1 ... c_n
//! Q_11 ... Q_1n
//! ...
//! Q_n1 ... Q_nn
//! ```
//!
//! The objective is `xᵀQx + cᵀx` with no ½ factor. Reference tables are
//! `label,value` lines with optional `#` comments and an optional
//! `label,value` header.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::boxqp::{BoxPoint, BoxQpInstance};
use crate::rng::seeded;
use crate::{Error, Result};

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_reals(tokens: &str, line: usize, expected: usize, what: &str) -> Result<Vec<f64>> {
    let vals = tokens
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| parse_error(line, format!("non-numeric token `{t}` in {what}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if vals.len() != expected {
        return Err(parse_error(
            line,
            format!("{what} has {} entries, expected {expected}", vals.len()),
        ));
    }
    if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
        return Err(parse_error(line, format!("non-finite value {v} in {what}")));
    }
    Ok(vals)
}

/// Parses a canonical instance file. Blank lines are skipped; reported line
/// numbers are physical (1-based).
pub fn parse_instance(text: &str, label: &str) -> Result<BoxQpInstance> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (line, header) = lines.next().ok_or_else(|| parse_error(1, "empty instance file"))?;
    let n: usize = header
        .parse()
        .map_err(|_| parse_error(line, format!("header `{header}` is not a dimension")))?;
    if n == 0 {
        return Err(parse_error(line, "dimension must be at least 1"));
    }

    let (line, c_line) = lines
        .next()
        .ok_or_else(|| parse_error(line + 1, "missing linear coefficients"))?;
    let c = parse_reals(c_line, line, n, "linear coefficients")?;

    let mut q = Vec::with_capacity(n * n);
    let mut last = line;
    for row in 0..n {
        let (line, text) = lines
            .next()
            .ok_or_else(|| parse_error(last + 1, format!("missing row {} of Q", row + 1)))?;
        q.extend(parse_reals(text, line, n, &format!("row {} of Q", row + 1))?);
        last = line;
    }
    if let Some((line, _)) = lines.next() {
        return Err(parse_error(line, "trailing data after Q"));
    }
    BoxQpInstance::new(label, q, c)
}

/// Writes the canonical format with shortest round-trip number formatting.
pub fn serialize_instance(inst: &BoxQpInstance) -> String {
    let n = inst.n();
    let join = |vals: &[f64]| vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
    let mut out = format!("{n}\n{}\n", join(inst.c()));
    for row in inst.q().chunks_exact(n) {
        out.push_str(&join(row));
        out.push('\n');
    }
    out
}

/// Parameters of the conditioned random instance
/// `Q = D(κ) U Σ Uᵀ D(κ)`, `c = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionedSpec {
    pub n: usize,
    pub kappa: f64,
    pub seed: u64,
}

impl ConditionedSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!(
                "conditioned instances need n >= 2, got {}",
                self.n
            )));
        }
        if !(self.kappa >= 1.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa must be >= 1, got {}", self.kappa)));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("cond-n{}-k{}-s{}", self.n, self.kappa, self.seed)
    }
}

/// `n` entries linearly spaced from 1 to κ.
pub fn skew_diagonal(n: usize, kappa: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                kappa
            } else {
                1.0 + (kappa - 1.0) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// `+1` on the first `⌊n/2⌋` entries, `−1` on the rest.
pub fn signature_diagonal(n: usize) -> Vec<f64> {
    (0..n).map(|i| if i < n / 2 { 1.0 } else { -1.0 }).collect()
}

/// Haar-distributed orthogonal matrix (row-major): QR of a standard Gaussian
/// matrix with the triangular factor's diagonal made non-negative.
pub fn random_orthogonal(n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("orthogonal matrix dimension must be at least 1".into()));
    }
    let mut rng = seeded(seed);
    let entries: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
    let qr = DMatrix::from_row_slice(n, n, &entries).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = q[(i, j)];
        }
    }
    Ok(out)
}

pub fn generate_conditioned(spec: &ConditionedSpec) -> Result<BoxQpInstance> {
    spec.validate()?;
    let n = spec.n;
    let u = random_orthogonal(n, spec.seed)?;
    let sig = signature_diagonal(n);
    let d = skew_diagonal(n, spec.kappa);
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let core: f64 = (0..n).map(|k| u[i * n + k] * sig[k] * u[j * n + k]).sum();
            m[i * n + j] = d[i] * core * d[j];
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = avg;
            m[j * n + i] = avg;
        }
    }
    BoxQpInstance::new(spec.label(), m, vec![0.0; n])
}

const STATIONARY_TOL: f64 = 1e-9;

fn project(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Projected gradient descent with backtracking from `x`. Returns the final
/// objective value; `x` is updated in place.
fn projected_descent(inst: &BoxQpInstance, x: &mut [f64], max_iters: usize, lipschitz: f64) -> f64 {
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut f = inst.objective_unchecked(x);
    let mut step = 1.0 / lipschitz;
    for _ in 0..max_iters {
        inst.gradient_into(x, &mut g);
        let pg: f64 = x
            .iter()
            .zip(&g)
            .map(|(&xi, &gi)| {
                let d = project(xi - gi) - xi;
                d * d
            })
            .sum::<f64>()
            .sqrt();
        if pg <= STATIONARY_TOL {
            break;
        }
        loop {
            let mut lin = 0.0;
            let mut sq = 0.0;
            for i in 0..n {
                y[i] = project(x[i] - step * g[i]);
                let d = y[i] - x[i];
                lin += g[i] * d;
                sq += d * d;
            }
            let fy = inst.objective_unchecked(&y);
            if fy <= f + lin + sq / (2.0 * step) {
                x.copy_from_slice(&y);
                f = fy;
                step *= 2.0;
                break;
            }
            step *= 0.5;
            if step < 1e-30 {
                return f;
            }
        }
    }
    f
}

/// Best objective over `n_starts` projected-gradient runs from uniform random
/// points of the box. A best-known value, not a certificate.
pub fn oracle_best(inst: &BoxQpInstance, n_starts: usize, max_iters: usize, seed: u64) -> Result<(BoxPoint, f64)> {
    if n_starts == 0 {
        return Err(Error::InvalidParameter("oracle needs at least one start".into()));
    }
    let n = inst.n();
    let frob = inst.q().iter().map(|v| v * v).sum::<f64>().sqrt();
    let lipschitz = (2.0 * frob).max(1e-12);
    let mut rng = seeded(seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..n_starts {
        let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let f = projected_descent(inst, &mut x, max_iters, lipschitz);
        if best.as_ref().is_none_or(|(_, fb)| f < *fb) {
            best = Some((x, f));
        }
    }
    let (x, f) = best.expect("at least one start");
    Ok((BoxPoint::clipped(x), f))
}

/// Largest grid the brute-force oracle will enumerate.
pub const GRID_BUDGET: usize = 10_000_000;

/// Minimum of the objective over the regular grid with `points_per_axis`
/// points per coordinate, endpoints included.
pub fn grid_oracle(inst: &BoxQpInstance, points_per_axis: usize) -> Result<f64> {
    let n = inst.n();
    if points_per_axis < 2 {
        return Err(Error::InvalidParameter("grid needs at least 2 points per axis".into()));
    }
    let total = u32::try_from(n)
        .ok()
        .and_then(|e| points_per_axis.checked_pow(e))
        .filter(|&t| t <= GRID_BUDGET)
        .ok_or(Error::GridBudget { points: points_per_axis, n })?;
    let h = 1.0 / (points_per_axis - 1) as f64;
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    let mut best = f64::INFINITY;
    for _ in 0..total {
        for (xi, &k) in x.iter_mut().zip(&idx) {
            *xi = k as f64 * h;
        }
        best = best.min(inst.objective_unchecked(&x));
        for k in idx.iter_mut() {
            *k += 1;
            if *k < points_per_axis {
                break;
            }
            *k = 0;
        }
    }
    Ok(best)
}

/// Best-known objective per instance label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferenceTable {
    entries: BTreeMap<String, f64>,
}

impl ReferenceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.entries.get(label).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Inserts a new label; duplicates are an error.
    pub fn insert(&mut self, label: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::InvalidParameter(format!("reference for `{label}` is not finite")));
        }
        if self.entries.contains_key(label) {
            return Err(Error::DuplicateLabel(label.to_string()));
        }
        self.entries.insert(label.to_string(), value);
        Ok(())
    }

    /// Keeps the lower of the stored and offered value. Returns whether the
    /// table changed.
    pub fn improve(&mut self, label: &str, value: f64) -> Result<bool> {
        if !value.is_finite() {
            return Err(Error::InvalidParameter(format!("reference for `{label}` is not finite")));
        }
        match self.entries.get_mut(label) {
            Some(v) if *v <= value => Ok(false),
            Some(v) => {
                *v = value;
                Ok(true)
            }
            None => {
                self.entries.insert(label.to_string(), value);
                Ok(true)
            }
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,value\n");
        for (k, v) in &self.entries {
            out.push_str(&format!("{k},{}\n", format_real(*v)));
        }
        out
    }
}

pub fn load_reference(text: &str) -> Result<ReferenceTable> {
    let mut table = ReferenceTable::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line == "label,value" {
            continue;
        }
        let (label, value) = line
            .split_once(',')
            .ok_or_else(|| parse_error(i + 1, format!("expected `label,value`, got `{line}`")))?;
        let label = label.trim();
        if label.is_empty() {
            return Err(parse_error(i + 1, "empty label"));
        }
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| parse_error(i + 1, format!("value `{}` is not a number", value.trim())))?;
        if !value.is_finite() {
            return Err(parse_error(i + 1, format!("value for `{label}` is not finite")));
        }
        table.insert(label, value)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(vals: &[f64], c: Vec<f64>) -> BoxQpInstance {
        let n = vals.len();
        let mut q = vec![0.0; n * n];
        for (i, v) in vals.iter().enumerate() {
            q[i * n + i] = *v;
        }
        BoxQpInstance::new("d", q, c).unwrap()
    }

    #[test]
    fn parses_smallest_file() {
        let inst = parse_instance("2\n0 0\n1 0\n0 1\n", "t").unwrap();
        assert_eq!(inst.n(), 2);
        assert_eq!(inst.c(), &[0.0, 0.0]);
        assert_eq!(inst.q(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn short_c_line_names_line_2() {
        let err = parse_instance("3\n1 2\n1 0 0\n0 1 0\n0 0 1\n", "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(parse_instance("", "t"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_instance("x\n", "t"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_instance("1\n0\nfoo\n", "t"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_instance("2\n0 0\n1 0\n", "t"), Err(Error::Parse { line: 4, .. })));
        assert!(matches!(parse_instance("1\n0\n1\n5\n", "t"), Err(Error::Parse { line: 4, .. })));
        assert!(matches!(parse_instance("1\nnan\n1\n", "t"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn diagonals() {
        assert_eq!(skew_diagonal(2, 5.0), vec![1.0, 5.0]);
        assert_eq!(skew_diagonal(5, 5.0), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(signature_diagonal(5), vec![1.0, 1.0, -1.0, -1.0, -1.0]);
        assert_eq!(signature_diagonal(4), vec![1.0, 1.0, -1.0, -1.0]);
    }

    #[test]
    fn orthogonal_small_cases() {
        let u = random_orthogonal(1, 3).unwrap();
        assert_eq!(u.len(), 1);
        assert_eq!(u[0].abs(), 1.0);
        assert!(random_orthogonal(0, 3).is_err());
    }

    #[test]
    fn conditioned_spec_validation_and_label() {
        assert!(ConditionedSpec { n: 1, kappa: 1.0, seed: 0 }.validate().is_err());
        assert!(ConditionedSpec { n: 4, kappa: 0.5, seed: 0 }.validate().is_err());
        let spec = ConditionedSpec { n: 20, kappa: 1000.0, seed: 7 };
        assert_eq!(spec.label(), "cond-n20-k1000-s7");
        let a = generate_conditioned(&spec).unwrap();
        let b = generate_conditioned(&spec).unwrap();
        assert!(a.q().iter().zip(b.q()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.c().iter().all(|&v| v == 0.0));
        for i in 0..20 {
            for j in 0..20 {
                assert_eq!(a.q_at(i, j).to_bits(), a.q_at(j, i).to_bits());
            }
        }
    }

    #[test]
    fn oracle_hand_cases() {
        let convex = diag(&[1.0, 1.0], vec![1.0, 1.0]);
        let (x, f) = oracle_best(&convex, 10, 1000, 1).unwrap();
        assert_eq!(x.as_slice(), &[0.0, 0.0]);
        assert_eq!(f, 0.0);

        let concave = diag(&[-1.0, -1.0], vec![0.0, 0.0]);
        let (_, f) = oracle_best(&concave, 100, 1000, 1).unwrap();
        assert!(f <= -2.0 + 1e-9);
        assert!(oracle_best(&concave, 0, 10, 1).is_err());
    }

    #[test]
    fn grid_hand_cases() {
        let parabola = diag(&[1.0], vec![-1.0]);
        assert!((grid_oracle(&parabola, 101).unwrap() + 0.25).abs() < 1e-15);
        let concave = diag(&[-1.0, -1.0], vec![0.0, 0.0]);
        assert_eq!(grid_oracle(&concave, 11).unwrap(), -2.0);
        let big = diag(&[1.0; 8], vec![0.0; 8]);
        assert!(matches!(grid_oracle(&big, 11), Err(Error::GridBudget { .. })));
        assert!(grid_oracle(&parabola, 1).is_err());
    }

    #[test]
    fn reference_table_examples() {
        let t = load_reference("spar020-100-1,-706.5\n").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("spar020-100-1"), Some(-706.5));
        assert!(load_reference("").unwrap().is_empty());
        assert_eq!(
            load_reference("a,1\n# note\nb,2\na,3\n"),
            Err(Error::DuplicateLabel("a".into()))
        );
        assert!(matches!(load_reference("a;1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(load_reference("a,abc\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn reference_csv_round_trip_is_exact() {
        let mut t = ReferenceTable::new();
        t.insert("x", -0.1 - 0.2).unwrap();
        t.insert("y", -1234.5678e-3).unwrap();
        assert_eq!(load_reference(&t.to_csv()).unwrap(), t);
    }

    #[test]
    fn improve_keeps_lower_value() {
        let mut t = ReferenceTable::new();
        assert!(t.improve("a", -1.0).unwrap());
        assert!(!t.improve("a", -0.5).unwrap());
        assert!(t.improve("a", -2.0).unwrap());
        assert_eq!(t.get("a"), Some(-2.0));
    }
}
