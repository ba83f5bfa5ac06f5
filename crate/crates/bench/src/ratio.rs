//! Roundtrip ratios between two runs' percentile trajectories.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use cvcim::metrics::{roundtrip_ratio, Faster, PercentileTrajectory, RatioResult};
use log::warn;

use crate::output::{cells, parse_real, real, Table};
use crate::runner::PERCENTILES_HEADER;

pub const HISTOGRAM_BUCKETS: usize = 10;

/// One side of the comparison: a run directory and, when it holds more
/// than one policy, which one to use.
#[derive(Debug, Clone)]
pub struct RatioSide {
    pub dir: PathBuf,
    pub policy: Option<String>,
}

type Trajectories = BTreeMap<(String, String, u64), Vec<(usize, f64)>>;

/// Parses `percentiles.csv` keyed by (instance, policy, percentile bits).
pub fn parse_percentiles(text: &str) -> Result<Trajectories> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if cells(h) == PERCENTILES_HEADER => {}
        _ => bail!("percentiles.csv must start with `{}`", PERCENTILES_HEADER.join(",")),
    }
    let mut out: Trajectories = BTreeMap::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let c = cells(line);
        ensure!(c.len() == 5, "percentiles.csv line {}: expected 5 fields", i + 1);
        let rt: usize = c[0].parse().with_context(|| format!("percentiles.csv line {}", i + 1))?;
        let x = parse_real(c[3])?;
        let gap = parse_real(c[4])?;
        out.entry((c[1].to_string(), c[2].to_string(), x.to_bits())).or_default().push((rt, gap));
    }
    for pts in out.values_mut() {
        pts.sort_by_key(|p| p.0);
    }
    Ok(out)
}

fn load_side(side: &RatioSide) -> Result<(String, BTreeMap<(String, u64), Vec<(usize, f64)>>)> {
    let path = side.dir.join("percentiles.csv");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let all = parse_percentiles(&text).with_context(|| format!("in {}", path.display()))?;
    let policy = match &side.policy {
        Some(p) => p.clone(),
        None => {
            let mut names: Vec<&String> = all.keys().map(|k| &k.1).collect();
            names.sort();
            names.dedup();
            match names.as_slice() {
                [one] => (*one).clone(),
                [] => bail!("{} holds no trajectories", path.display()),
                _ => bail!("{} holds several policies; name one", path.display()),
            }
        }
    };
    let picked: BTreeMap<_, _> = all
        .into_iter()
        .filter(|(k, _)| k.1 == policy)
        .map(|((inst, _, x), pts)| ((inst, x), pts))
        .collect();
    ensure!(!picked.is_empty(), "policy `{policy}` not found in {}", path.display());
    Ok((policy, picked))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub instance: String,
    pub percentile: f64,
    pub policy_a: String,
    pub policy_b: String,
    pub result: RatioResult,
}

impl RatioRow {
    /// Name of the faster policy, or `tie`.
    pub fn faster_name(&self) -> &str {
        match self.result.faster {
            Faster::A => &self.policy_a,
            Faster::B => &self.policy_b,
            Faster::Tie => "tie",
        }
    }
}

pub fn compute_ratios(a: &RatioSide, b: &RatioSide, percentiles: &[f64]) -> Result<Vec<RatioRow>> {
    ensure!(!percentiles.is_empty(), "no percentiles requested");
    let (pa, ta) = load_side(a)?;
    let (pb, tb) = load_side(b)?;
    let mut instances: Vec<&String> = ta.keys().map(|k| &k.0).filter(|i| tb.keys().any(|k| &k.0 == *i)).collect();
    instances.dedup();
    let mut rows = Vec::new();
    for inst in instances {
        for &x in percentiles {
            let key = (inst.clone(), x.to_bits());
            let (Some(sa), Some(sb)) = (ta.get(&key), tb.get(&key)) else {
                warn!("percentile {x} missing for {inst}; skipped");
                continue;
            };
            let traj = |pts: &Vec<(usize, f64)>| PercentileTrajectory { percentile: x, points: pts.clone() };
            let result = roundtrip_ratio(&traj(sa), &traj(sb))?;
            rows.push(RatioRow {
                instance: inst.clone(),
                percentile: x,
                policy_a: pa.clone(),
                policy_b: pb.clone(),
                result,
            });
        }
    }
    Ok(rows)
}

pub fn bucket_of(ratio: f64) -> usize {
    ((ratio * HISTOGRAM_BUCKETS as f64).floor() as usize).min(HISTOGRAM_BUCKETS - 1)
}

pub fn write_ratio_outputs(rows: &[RatioRow], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut t = Table::new(&[
        "instance",
        "percentile",
        "policy_a",
        "policy_b",
        "target_gap",
        "roundtrip_a",
        "roundtrip_b",
        "ratio",
        "faster",
        "zero_roundtrip",
    ]);
    let mut hist: BTreeMap<(u64, String), [usize; HISTOGRAM_BUCKETS]> = BTreeMap::new();
    for r in rows {
        t.row(&[
            r.instance.clone(),
            real(r.percentile),
            r.policy_a.clone(),
            r.policy_b.clone(),
            real(r.result.target_gap),
            r.result.roundtrip_a.to_string(),
            r.result.roundtrip_b.to_string(),
            real(r.result.ratio),
            r.faster_name().to_string(),
            r.result.zero_roundtrip.to_string(),
        ]);
        hist.entry((r.percentile.to_bits(), r.faster_name().to_string())).or_insert([0; HISTOGRAM_BUCKETS])
            [bucket_of(r.result.ratio)] += 1;
    }
    t.write(&dir.join("ratio.csv"))?;
    let mut h = Table::new(&["percentile", "faster", "bucket_lo", "bucket_hi", "count"]);
    for ((x, faster), counts) in &hist {
        for (k, c) in counts.iter().enumerate() {
            h.row(&[
                real(f64::from_bits(*x)),
                faster.clone(),
                real(k as f64 / HISTOGRAM_BUCKETS as f64),
                real((k + 1) as f64 / HISTOGRAM_BUCKETS as f64),
                c.to_string(),
            ]);
        }
    }
    h.write(&dir.join("ratio_histogram.csv"))?;
    Ok(())
}

pub fn cmd_ratio(a: &RatioSide, b: &RatioSide, percentiles: &[f64], out: &Path) -> Result<Vec<RatioRow>> {
    let rows = compute_ratios(a, b, percentiles)?;
    write_ratio_outputs(&rows, out)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buckets_cover_unit_interval() {
        assert_eq!(bucket_of(0.0), 0);
        assert_eq!(bucket_of(0.31667), 3);
        assert_eq!(bucket_of(0.99), 9);
        assert_eq!(bucket_of(1.0), 9);
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(parse_percentiles("a,b\n").is_err());
        let t = parse_percentiles("roundtrip,instance,policy,percentile,gap\n20,i,gd,5,0.5\n10,i,gd,5,0.7\n").unwrap();
        let pts = &t[&("i".to_string(), "gd".to_string(), 5f64.to_bits())];
        assert_eq!(pts, &vec![(10, 0.7), (20, 0.5)]);
    }
}
