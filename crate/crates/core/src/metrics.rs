//! Evaluation metrics over gap histories.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::GapSeries;
use crate::{Error, Result};

/// `(f − f*) / |f*|`. Negative when `f` beats the reference.
pub fn relative_gap(f_val: f64, f_star: f64) -> Result<f64> {
    if f_star == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((f_val - f_star) / f_star.abs())
}

/// Percentile by linear interpolation between closest ranks, with rank
/// `1 + (X/100)(k − 1)` over the ascending values. `sorted` must be sorted.
pub fn percentile_of_sorted(sorted: &[f64], x: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = (x / 100.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

pub fn percentile(values: &[f64], x: f64) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_of_sorted(&v, x)
}

pub fn median(values: &[f64]) -> Option<f64> {
    percentile(values, 50.0)
}

/// Xth percentile of the gap across samples, per recorded roundtrip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileTrajectory {
    pub percentile: f64,
    /// `(roundtrip, gap)` in increasing roundtrip order.
    pub points: Vec<(usize, f64)>,
}

impl PercentileTrajectory {
    pub fn min_value(&self) -> Option<f64> {
        self.points.iter().map(|p| p.1).reduce(f64::min)
    }

    pub fn first_reaching(&self, target: f64) -> Option<usize> {
        self.points.iter().find(|p| p.1 <= target).map(|p| p.0)
    }
}

/// At every recorded roundtrip, the Xth percentile over the samples that are
/// still alive there. Roundtrips where every sample has diverged are omitted.
pub fn percentile_series(runs: &[GapSeries], x: f64) -> Result<PercentileTrajectory> {
    if runs.is_empty() {
        return Err(Error::Metric("percentile over zero runs".into()));
    }
    if !(x > 0.0 && x < 100.0) {
        return Err(Error::Metric(format!("percentile must lie in (0, 100), got {x}")));
    }
    let mut by_roundtrip: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for run in runs {
        for r in &run.records {
            by_roundtrip.entry(r.roundtrip).or_default().push(r.gap);
        }
    }
    let points = by_roundtrip
        .into_iter()
        .filter_map(|(rt, gaps)| percentile(&gaps, x).map(|p| (rt, p)))
        .collect();
    Ok(PercentileTrajectory { percentile: x, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Faster {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioResult {
    pub target_gap: f64,
    pub roundtrip_a: usize,
    pub roundtrip_b: usize,
    pub ratio: f64,
    pub faster: Faster,
    /// The faster variant hit the target at roundtrip 0, so the ratio is 0.
    pub zero_roundtrip: bool,
}

/// Roundtrip ratio between two percentile trajectories.
///
/// The target is the best gap both reach, `max(min a, min b)`. Each side's
/// roundtrip is the first one at or below the target; the ratio is the
/// faster one over the slower one.
pub fn roundtrip_ratio(a: &PercentileTrajectory, b: &PercentileTrajectory) -> Result<RatioResult> {
    let (min_a, min_b) = match (a.min_value(), b.min_value()) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::Metric("roundtrip ratio needs non-empty trajectories".into())),
    };
    let target_gap = min_a.max(min_b);
    let unreached = || Error::Metric(format!("trajectory never reaches target gap {target_gap}"));
    let roundtrip_a = a.first_reaching(target_gap).ok_or_else(unreached)?;
    let roundtrip_b = b.first_reaching(target_gap).ok_or_else(unreached)?;
    let (lo, hi) = (roundtrip_a.min(roundtrip_b), roundtrip_a.max(roundtrip_b));
    let faster = match roundtrip_a.cmp(&roundtrip_b) {
        std::cmp::Ordering::Less => Faster::A,
        std::cmp::Ordering::Greater => Faster::B,
        std::cmp::Ordering::Equal => Faster::Tie,
    };
    let ratio = if hi == 0 { 1.0 } else { lo as f64 / hi as f64 };
    Ok(RatioResult {
        target_gap,
        roundtrip_a,
        roundtrip_b,
        ratio,
        faster,
        zero_roundtrip: lo == 0 && hi > 0,
    })
}

/// Time to reach a target with confidence `s`, given per-run success
/// probability `p_succ`. Returns infinity when `p_succ = 0`; at least one
/// repetition is always charged.
pub fn ttt(t_single: f64, p_succ: f64, s: f64) -> Result<f64> {
    if !(t_single >= 0.0 && t_single.is_finite()) {
        return Err(Error::Metric(format!("t_single must be non-negative, got {t_single}")));
    }
    if !(0.0..=1.0).contains(&p_succ) {
        return Err(Error::Metric(format!("success probability must lie in [0, 1], got {p_succ}")));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Metric(format!("confidence must lie in (0, 1), got {s}")));
    }
    if p_succ == 0.0 {
        return Ok(f64::INFINITY);
    }
    if p_succ >= s {
        return Ok(t_single);
    }
    let reps = (1.0 - s).ln() / (1.0 - p_succ).ln();
    Ok(t_single * reps.max(1.0))
}

/// Population standard deviation.
pub fn gap_stddev(gaps: &[f64]) -> Result<f64> {
    if gaps.is_empty() {
        return Err(Error::Metric("standard deviation of zero samples".into()));
    }
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    let var = gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / n;
    Ok(var.sqrt())
}

/// Fraction of samples whose best gap is at most `threshold`. `None` marks a
/// diverged sample, which always counts as a failure.
pub fn success_probability(best_gaps: &[Option<f64>], threshold: f64) -> Result<f64> {
    if best_gaps.is_empty() {
        return Err(Error::Metric("success probability of zero samples".into()));
    }
    let hits = best_gaps
        .iter()
        .filter(|g| matches!(g, Some(v) if *v <= threshold))
        .count();
    Ok(hits as f64 / best_gaps.len() as f64)
}
