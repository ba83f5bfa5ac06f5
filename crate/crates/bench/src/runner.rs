//! Trajectory grids: `run` and `sweep`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use cvcim::dynamics::{simulate, GapSeries};
use cvcim::instances::{generate_conditioned, load_reference, oracle_best, parse_instance, ConditionedSpec, ReferenceTable};
use cvcim::metrics::{gap_stddev, median, percentile, percentile_series, success_probability, ttt};
use cvcim::rng::child_seed;
use cvcim::{BoxQpInstance, CimParams, PolicyConfig};
use log::{info, warn};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, InstanceSource, Mode};
use crate::output::{opt_int, opt_real, real, runs_jsonl, RunRecord, Table, REACH_THRESHOLDS};

/// Command-line overrides shared by `run` and `sweep`.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub stride: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(s) = self.stride {
            cfg.stride = s;
        }
    }

    /// `--out` is taken relative to the working directory, `out` in the
    /// config relative to the config file.
    pub fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        match (&self.out, &cfg.out) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => cfg.resolve(p),
            (None, None) => PathBuf::from("out"),
        }
    }
}

/// Runs `f` on a pool of `workers` threads (machine parallelism if `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            bail!("--workers must be positive");
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().context("building worker pool")?;
    Ok(pool.install(f))
}

/// One finished trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub record: RunRecord,
    pub series: GapSeries,
    pub wall_seconds: f64,
}

fn run_one(
    inst: &BoxQpInstance,
    params: &CimParams,
    policy_name: &str,
    policy: &PolicyConfig,
    sample: usize,
    seed: u64,
    stride: usize,
) -> Result<Trajectory> {
    let start = Instant::now();
    let (_, series) = simulate(inst, params, policy, seed, stride)?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let best = series.best_gap();
    if best.is_some_and(|g| g < 0.0) {
        warn!(
            "{} / {policy_name} sample {sample} beat the reference (gap {}); update the reference table",
            inst.label(),
            best.unwrap_or_default()
        );
    }
    let record = RunRecord {
        instance: inst.label().to_string(),
        policy: policy_name.to_string(),
        sample,
        seed,
        diverged_at: series.diverged_at,
        best_gap: best,
        final_gap: series.final_gap(),
        first_reach_1e2: series.first_reaching(REACH_THRESHOLDS[0]),
        first_reach_1e3: series.first_reaching(REACH_THRESHOLDS[1]),
    };
    Ok(Trajectory { record, series, wall_seconds })
}

/// Aggregate statistics of one instance × policy cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub samples: usize,
    pub diverged: usize,
    /// Population std of per-sample best gaps (truncated at divergence).
    pub gap_stddev: f64,
    pub success_probability: f64,
    pub median_best_gap: f64,
    /// Time to target at 99% confidence, in roundtrips.
    pub ttt99_roundtrips: f64,
}

pub fn summarize(runs: &[Trajectory], threshold: f64, roundtrips: usize) -> Result<CellSummary> {
    let best: Vec<f64> = runs.iter().filter_map(|r| r.record.best_gap).collect();
    let outcomes: Vec<Option<f64>> = runs
        .iter()
        .map(|r| if r.record.diverged_at.is_some() { None } else { r.record.best_gap })
        .collect();
    let p = success_probability(&outcomes, threshold)?;
    Ok(CellSummary {
        samples: runs.len(),
        diverged: runs.iter().filter(|r| r.record.diverged_at.is_some()).count(),
        gap_stddev: if best.is_empty() { f64::NAN } else { gap_stddev(&best)? },
        success_probability: p,
        median_best_gap: median(&best).unwrap_or(f64::NAN),
        ttt99_roundtrips: ttt(roundtrips as f64, p, 0.99)?,
    })
}

/// All trajectories of one policy on one instance, by sample index.
#[derive(Debug, Clone)]
pub struct PolicyRuns {
    pub policy: String,
    pub runs: Vec<Trajectory>,
}

#[derive(Debug, Clone)]
pub struct InstanceRuns {
    pub label: String,
    pub reference: f64,
    pub policies: Vec<PolicyRuns>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub instances: Vec<InstanceRuns>,
    pub references: ReferenceTable,
    /// Instances skipped before simulation, with the reason.
    pub refused: Vec<(String, String)>,
}

fn file_label(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

enum Loaded {
    File(BoxQpInstance),
    Generated(BoxQpInstance, u64),
}

/// Loads every instance and attaches reference values. Instances without
/// a usable reference are refused with a logged reason.
fn prepare_instances(cfg: &ExperimentConfig) -> Result<(Vec<BoxQpInstance>, ReferenceTable, Vec<(String, String)>)> {
    let table = match &cfg.reference {
        Some(p) => {
            let path = cfg.resolve(p);
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            load_reference(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => ReferenceTable::new(),
    };
    let mut loaded = Vec::new();
    let mut labels = BTreeSet::new();
    for src in &cfg.instances {
        let item = match src {
            InstanceSource::File { file } => {
                let path = cfg.resolve(file);
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let inst = parse_instance(&text, &file_label(&path)).with_context(|| format!("in {}", path.display()))?;
                Loaded::File(inst)
            }
            InstanceSource::Generated { n, kappa, seed } => {
                let spec = ConditionedSpec { n: *n, kappa: *kappa, seed: *seed };
                Loaded::Generated(generate_conditioned(&spec)?, *seed)
            }
        };
        let label = match &item {
            Loaded::File(i) | Loaded::Generated(i, _) => i.label().to_string(),
        };
        if !labels.insert(label.clone()) {
            bail!("instance label `{label}` appears twice");
        }
        loaded.push(item);
    }

    let oracle = &cfg.oracle;
    let resolved: Vec<Result<(BoxQpInstance, Option<f64>, Option<String>)>> = loaded
        .into_par_iter()
        .map(|item| {
            let (inst, fallback) = match item {
                Loaded::File(i) => (i, None),
                Loaded::Generated(i, seed) => (i, Some(seed)),
            };
            if let Some(v) = table.get(inst.label()) {
                return Ok((inst, Some(v), None));
            }
            match fallback {
                Some(seed) => {
                    let (_, v) = oracle_best(&inst, oracle.starts, oracle.max_iters, seed)?;
                    Ok((inst, Some(v), None))
                }
                None => Ok((inst, None, Some("no reference value in the reference table".to_string()))),
            }
        })
        .collect();

    let mut ready = Vec::new();
    let mut used = ReferenceTable::new();
    let mut refused = Vec::new();
    for r in resolved {
        let (inst, value, reason) = r?;
        let label = inst.label().to_string();
        match value {
            Some(v) if v == 0.0 => {
                warn!("refusing instance {label}: reference objective is zero, gap undefined");
                refused.push((label, "reference objective is zero".to_string()));
            }
            Some(v) => {
                used.insert(&label, v)?;
                ready.push(inst.with_best_known(v)?);
            }
            None => {
                let reason = reason.unwrap_or_default();
                warn!("refusing instance {label}: {reason}");
                refused.push((label, reason));
            }
        }
    }
    Ok((ready, used, refused))
}

/// Executes the instance × policy × sample grid in memory.
pub fn execute_run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate(Mode::Run)?;
    let (instances, references, refused) = prepare_instances(cfg)?;
    let mut tasks = Vec::new();
    for i in 0..instances.len() {
        for p in 0..cfg.policies.len() {
            for s in 0..cfg.samples {
                tasks.push((i, p, s));
            }
        }
    }
    info!(
        "running {} trajectories ({} instances, {} policies, {} samples)",
        tasks.len(),
        instances.len(),
        cfg.policies.len(),
        cfg.samples
    );
    let results: Vec<Trajectory> = tasks
        .par_iter()
        .map(|&(i, p, s)| {
            let inst = &instances[i];
            let entry = &cfg.policies[p];
            let seed = child_seed(cfg.master_seed, inst.label(), s as u64);
            run_one(inst, &cfg.params, entry.name(), &entry.config, s, seed, cfg.stride)
        })
        .collect::<Result<_>>()?;

    let mut it = results.into_iter();
    let mut out = Vec::new();
    for inst in &instances {
        let policies = cfg
            .policies
            .iter()
            .map(|entry| PolicyRuns { policy: entry.name().to_string(), runs: it.by_ref().take(cfg.samples).collect() })
            .collect();
        out.push(InstanceRuns {
            label: inst.label().to_string(),
            reference: inst.best_known().unwrap_or(f64::NAN),
            policies,
        });
    }
    Ok(RunOutcome { instances: out, references, refused })
}

pub const PERCENTILES_HEADER: [&str; 5] = ["roundtrip", "instance", "policy", "percentile", "gap"];

/// Writes `runs.jsonl`, `percentiles.csv`, `summary.csv`, `reference.csv`
/// and `timing.csv`.
pub fn write_run_outputs(cfg: &ExperimentConfig, outcome: &RunOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let records: Vec<RunRecord> = outcome
        .instances
        .iter()
        .flat_map(|i| i.policies.iter().flat_map(|p| p.runs.iter().map(|r| r.record.clone())))
        .collect();
    fs::write(dir.join("runs.jsonl"), runs_jsonl(&records)?)?;

    let mut pct = Table::new(&PERCENTILES_HEADER);
    let mut summary = Table::new(&[
        "instance",
        "policy",
        "samples",
        "diverged",
        "gap_stddev",
        "success_probability",
        "median_best_gap",
        "ttt99_roundtrips",
        "reference",
    ]);
    let mut timing = Table::new(&["instance", "policy", "sample", "wall_seconds"]);
    for inst in &outcome.instances {
        for pol in &inst.policies {
            let series: Vec<GapSeries> = pol.runs.iter().map(|r| r.series.clone()).collect();
            for &x in &cfg.percentiles {
                let traj = percentile_series(&series, x)?;
                for (rt, gap) in traj.points {
                    pct.row(&[rt.to_string(), inst.label.clone(), pol.policy.clone(), real(x), real(gap)]);
                }
            }
            let s = summarize(&pol.runs, cfg.success_threshold, cfg.params.roundtrips)?;
            summary.row(&[
                inst.label.clone(),
                pol.policy.clone(),
                s.samples.to_string(),
                s.diverged.to_string(),
                real(s.gap_stddev),
                real(s.success_probability),
                real(s.median_best_gap),
                real(s.ttt99_roundtrips),
                real(inst.reference),
            ]);
            for r in &pol.runs {
                timing.row(&[
                    inst.label.clone(),
                    pol.policy.clone(),
                    r.record.sample.to_string(),
                    format!("{:.6}", r.wall_seconds),
                ]);
            }
        }
    }
    pct.write(&dir.join("percentiles.csv"))?;
    summary.write(&dir.join("summary.csv"))?;
    timing.write(&dir.join("timing.csv"))?;
    fs::write(dir.join("reference.csv"), outcome.references.to_csv())?;
    Ok(())
}

pub fn cmd_run(mut cfg: ExperimentConfig, over: &Overrides) -> Result<RunOutcome> {
    over.apply(&mut cfg);
    cfg.validate(Mode::Run)?;
    let dir = over.out_dir(&cfg);
    let outcome = with_workers(over.workers, || execute_run(&cfg))??;
    write_run_outputs(&cfg, &outcome, &dir)?;
    info!("wrote outputs to {}", dir.display());
    Ok(outcome)
}

/// One row of `sweep_runs.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub kappa: f64,
    pub lambda: f64,
    pub instance: String,
    pub policy: String,
    pub sample: usize,
    pub seed: u64,
    pub diverged_at: Option<usize>,
    pub best_gap: Option<f64>,
    pub final_gap: Option<f64>,
}

/// One row of `sweep.csv`: all samples of one (κ, λ, policy) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub kappa: f64,
    pub lambda: f64,
    pub policy: String,
    pub samples: usize,
    pub diverged: usize,
    pub fraction_diverged: f64,
    /// Best-gap statistics over the samples that did not diverge.
    pub median_best_gap: f64,
    pub min_best_gap: f64,
    pub q25_best_gap: f64,
    pub q75_best_gap: f64,
    pub max_best_gap: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub runs: Vec<SweepRun>,
    pub cells: Vec<SweepCell>,
    pub references: ReferenceTable,
}

fn kappa_tag(kappa: f64) -> String {
    format!("sweep-k{kappa}")
}

/// Instances of one κ row. Their seeds derive from the master seed.
pub fn sweep_instances(cfg: &ExperimentConfig, kappa: f64) -> Result<Vec<BoxQpInstance>> {
    let axes = cfg.sweep.clone().unwrap_or_default();
    (0..axes.instances_per_kappa)
        .map(|i| {
            let seed = child_seed(cfg.master_seed, &kappa_tag(kappa), i as u64);
            Ok(generate_conditioned(&ConditionedSpec { n: axes.n, kappa, seed })?)
        })
        .collect()
}

pub fn execute_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    cfg.validate(Mode::Sweep)?;
    let axes = cfg.sweep.clone().unwrap_or_default();
    let table = match &cfg.reference {
        Some(p) => load_reference(&fs::read_to_string(cfg.resolve(p))?)?,
        None => ReferenceTable::new(),
    };
    let mut generated = Vec::new();
    for &kappa in &axes.kappa {
        for inst in sweep_instances(cfg, kappa)? {
            generated.push((kappa, inst));
        }
    }
    info!("computing references for {} sweep instances", generated.len());
    let oracle = &cfg.oracle;
    let prepared: Vec<(f64, BoxQpInstance)> = generated
        .into_par_iter()
        .map(|(kappa, inst)| {
            let v = match table.get(inst.label()) {
                Some(v) => v,
                None => {
                    let seed = child_seed(cfg.master_seed, inst.label(), u64::MAX);
                    oracle_best(&inst, oracle.starts, oracle.max_iters, seed)?.1
                }
            };
            if v == 0.0 {
                bail!("reference objective of {} is zero; gap undefined", inst.label());
            }
            Ok((kappa, inst.with_best_known(v)?))
        })
        .collect::<Result<_>>()?;
    let mut references = ReferenceTable::new();
    for (_, inst) in &prepared {
        references.insert(inst.label(), inst.best_known().unwrap_or(f64::NAN))?;
    }

    let mut tasks = Vec::new();
    for (k, (kappa, _)) in prepared.iter().enumerate() {
        for &lambda in &axes.lambda {
            for p in 0..cfg.policies.len() {
                for s in 0..cfg.samples {
                    tasks.push((*kappa, k, lambda, p, s));
                }
            }
        }
    }
    info!("running {} sweep trajectories", tasks.len());
    let runs: Vec<SweepRun> = tasks
        .par_iter()
        .map(|&(kappa, k, lambda, p, s)| {
            let inst = &prepared[k].1;
            let entry = &cfg.policies[p];
            let params = CimParams { lambda, ..cfg.params };
            let seed = child_seed(cfg.master_seed, inst.label(), s as u64);
            let t = run_one(inst, &params, entry.name(), &entry.config, s, seed, cfg.stride)?;
            Ok(SweepRun {
                kappa,
                lambda,
                instance: t.record.instance,
                policy: t.record.policy,
                sample: s,
                seed,
                diverged_at: t.record.diverged_at,
                best_gap: t.record.best_gap,
                final_gap: t.record.final_gap,
            })
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for &kappa in &axes.kappa {
        for &lambda in &axes.lambda {
            for entry in &cfg.policies {
                let members: Vec<&SweepRun> = runs
                    .iter()
                    .filter(|r| r.kappa == kappa && r.lambda == lambda && r.policy == entry.name())
                    .collect();
                let diverged = members.iter().filter(|r| r.diverged_at.is_some()).count();
                let best: Vec<f64> = members
                    .iter()
                    .filter(|r| r.diverged_at.is_none())
                    .filter_map(|r| r.best_gap)
                    .collect();
                let q = |x: f64| percentile(&best, x).unwrap_or(f64::NAN);
                cells.push(SweepCell {
                    kappa,
                    lambda,
                    policy: entry.name().to_string(),
                    samples: members.len(),
                    diverged,
                    fraction_diverged: diverged as f64 / members.len() as f64,
                    median_best_gap: median(&best).unwrap_or(f64::NAN),
                    min_best_gap: best.iter().copied().reduce(f64::min).unwrap_or(f64::NAN),
                    q25_best_gap: q(25.0),
                    q75_best_gap: q(75.0),
                    max_best_gap: best.iter().copied().reduce(f64::max).unwrap_or(f64::NAN),
                });
            }
        }
    }
    Ok(SweepOutcome { runs, cells, references })
}

pub fn write_sweep_outputs(outcome: &SweepOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut raw = Table::new(&[
        "kappa",
        "lambda",
        "instance",
        "policy",
        "sample",
        "seed",
        "diverged_at",
        "best_gap",
        "final_gap",
    ]);
    for r in &outcome.runs {
        raw.row(&[
            real(r.kappa),
            real(r.lambda),
            r.instance.clone(),
            r.policy.clone(),
            r.sample.to_string(),
            r.seed.to_string(),
            opt_int(r.diverged_at),
            opt_real(r.best_gap),
            opt_real(r.final_gap),
        ]);
    }
    let mut agg = Table::new(&[
        "kappa",
        "lambda",
        "policy",
        "samples",
        "diverged",
        "fraction_diverged",
        "median_best_gap",
        "min_best_gap",
        "q25_best_gap",
        "q75_best_gap",
        "max_best_gap",
    ]);
    for c in &outcome.cells {
        agg.row(&[
            real(c.kappa),
            real(c.lambda),
            c.policy.clone(),
            c.samples.to_string(),
            c.diverged.to_string(),
            real(c.fraction_diverged),
            real(c.median_best_gap),
            real(c.min_best_gap),
            real(c.q25_best_gap),
            real(c.q75_best_gap),
            real(c.max_best_gap),
        ]);
    }
    raw.write(&dir.join("sweep_runs.csv"))?;
    agg.write(&dir.join("sweep.csv"))?;
    fs::write(dir.join("reference.csv"), outcome.references.to_csv())?;
    Ok(())
}

pub fn cmd_sweep(mut cfg: ExperimentConfig, over: &Overrides) -> Result<SweepOutcome> {
    over.apply(&mut cfg);
    cfg.validate(Mode::Sweep)?;
    let dir = over.out_dir(&cfg);
    let outcome = with_workers(over.workers, || execute_sweep(&cfg))??;
    write_sweep_outputs(&outcome, &dir)?;
    info!("wrote outputs to {}", dir.display());
    Ok(outcome)
}
