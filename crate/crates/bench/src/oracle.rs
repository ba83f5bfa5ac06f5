//! Reference tables and instance generation.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use cvcim::instances::{generate_conditioned, load_reference, oracle_best, parse_instance, serialize_instance};
use cvcim::instances::{ConditionedSpec, ReferenceTable};
use cvcim::rng::child_seed;
use log::info;
use rayon::prelude::*;

use crate::config::OracleBudget;

/// Labels instance files by their stem, as `run` does.
pub fn label_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Runs the multistart oracle on every file and merges the values into
/// `out/reference.csv`. Stored values never increase.
pub fn cmd_oracle(files: &[PathBuf], budget: &OracleBudget, seed: u64, out: &Path) -> Result<ReferenceTable> {
    ensure!(!files.is_empty(), "no instance files given");
    ensure!(budget.starts > 0, "--starts must be positive");
    let mut instances = Vec::with_capacity(files.len());
    for f in files {
        let text = fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        instances.push(parse_instance(&text, &label_of(f)).with_context(|| format!("in {}", f.display()))?);
    }
    let values: Vec<(String, f64)> = instances
        .par_iter()
        .map(|inst| {
            let s = child_seed(seed, inst.label(), 0);
            let (_, v) = oracle_best(inst, budget.starts, budget.max_iters, s)?;
            Ok((inst.label().to_string(), v))
        })
        .collect::<Result<_>>()?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("reference.csv");
    let mut table = if path.is_file() {
        load_reference(&fs::read_to_string(&path)?).with_context(|| format!("in {}", path.display()))?
    } else {
        ReferenceTable::new()
    };
    for (label, v) in values {
        if table.improve(&label, v)? {
            info!("{label}: {v}");
        } else {
            info!("{label}: kept stored value {} (oracle found {v})", table.get(&label).unwrap_or(v));
        }
    }
    fs::write(&path, table.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    Ok(table)
}

/// Writes a generated instance to `out/<label>.txt`.
pub fn cmd_gen(spec: &ConditionedSpec, out: &Path) -> Result<PathBuf> {
    let inst = generate_conditioned(spec)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(format!("{}.txt", inst.label()));
    fs::write(&path, serialize_instance(&inst)).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
