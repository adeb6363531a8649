//! The four commands, callable without the argument parser.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ucr_core::eval::{evaluate, EvalSplit};
use ucr_core::synth::{generate_stream, StreamSpec};
use ucr_core::trainer::{train_stream, TrainOutcome};
use ucr_core::{Ablation, BaselineVariant, EncoderParams, EvalReport, HyperParams, MemoryPolicy};

use crate::checkpoint::{read_checkpoint, write_checkpoint};
use crate::config::{load_or_default, write_config};
use crate::dataset::{read_dataset, write_dataset, Dataset};
use crate::error::{Error, Result};
use crate::memory_dump::MemoryDump;
use crate::tables::{write_table, AblationRecord, CurveRecord, MetricRecord, ReportRecord, SkipRecord};

pub const THREADS_ENV: &str = "UCR_THREADS";

/// Worker pool sized by `UCR_THREADS` when set, otherwise by the machine.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| Error::Config {
            path: PathBuf::from(format!("${THREADS_ENV}")),
            reason: format!("expected a positive integer, got {v:?}"),
        })?,
        Err(_) => 0,
    };
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool"))
}

/// Output directory that appears under its final name only once complete.
pub struct Staging {
    target: PathBuf,
    tmp: PathBuf,
}

impl Staging {
    pub fn new(target: &Path) -> Result<Self> {
        if let Ok(mut entries) = std::fs::read_dir(target) {
            if entries.next().is_some() {
                return Err(Error::OutputExists(target.to_path_buf()));
            }
        }
        let name = target.file_name().map_or("out".into(), |n| n.to_string_lossy().into_owned());
        let tmp = target.with_file_name(format!(".{name}.partial-{}", std::process::id()));
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp).map_err(Error::io(&tmp))?;
        }
        std::fs::create_dir_all(&tmp).map_err(Error::io(&tmp))?;
        Ok(Staging {
            target: target.to_path_buf(),
            tmp,
        })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.tmp.join(file)
    }

    pub fn commit(self) -> Result<PathBuf> {
        if self.target.exists() {
            std::fs::remove_dir(&self.target).map_err(Error::io(&self.target))?;
        }
        std::fs::rename(&self.tmp, &self.target).map_err(Error::io(&self.target))?;
        let target = self.target.clone();
        std::mem::forget(self);
        Ok(target)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.tmp);
    }
}

pub fn generate(spec: &StreamSpec, out: &Path) -> Result<Dataset> {
    let dataset = Dataset::from(generate_stream(spec));
    let staging = Staging::new(out)?;
    write_dataset(&dataset, &staging.tmp)?;
    staging.commit()?;
    Ok(dataset)
}

/// Flag overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub baseline_variant: Option<BaselineVariant>,
    pub k_mem: Option<usize>,
    pub memory_policy: Option<MemoryPolicy>,
}

impl Overrides {
    pub fn apply(&self, mut hp: HyperParams) -> Result<HyperParams> {
        if let Some(s) = self.seed {
            hp.seed = s;
        }
        if let Some(v) = self.baseline_variant {
            hp.baseline_variant = v;
        }
        if let Some(k) = self.k_mem {
            hp.k_mem = k;
        }
        if let Some(p) = self.memory_policy {
            hp.memory_policy = p;
        }
        hp.validate()?;
        Ok(hp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<PathBuf>,
    pub data: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub use_old: bool,
    pub use_sim: bool,
}

fn write_run_manifest(path: &Path, m: &RunManifest) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(m).expect("serializable");
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(Error::io(path))
}

pub fn evaluate_splits(pool: &rayon::ThreadPool, encoder: &EncoderParams, splits: &[EvalSplit]) -> Result<Vec<EvalReport>> {
    pool.install(|| splits.par_iter().map(|s| evaluate(encoder, s)).collect::<Result<Vec<_>, _>>())
        .map_err(Error::from)
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub config: Option<PathBuf>,
    pub data: PathBuf,
    pub out: PathBuf,
    pub overrides: Overrides,
    pub ablation: Ablation,
}

pub struct TrainRun {
    pub hp: HyperParams,
    pub outcome: TrainOutcome,
    /// Momentum encoder at the end of every domain.
    pub domain_encoders: Vec<EncoderParams>,
    /// Report rows, one per split after every domain. `step` counts the
    /// domains trained so far.
    pub report: Vec<ReportRecord>,
}

/// Trains on the seen domains and evaluates every split after each domain.
pub fn run_training(dataset: &Dataset, hp: &HyperParams, ablation: Ablation, pool: &rayon::ThreadPool) -> Result<TrainRun> {
    let splits: Vec<EvalSplit> = dataset.seen_splits().into_iter().chain(dataset.unseen_splits()).collect();
    let mut report = Vec::new();
    let mut domain_encoders = Vec::new();
    let mut eval_error = None;
    let outcome = train_stream(&dataset.train_domains(), hp, ablation, |state| {
        let step = state.domain_index;
        match evaluate_splits(pool, &state.encoders.momentum, &splits) {
            Ok(rs) => report.extend(splits.iter().zip(&rs).map(|(s, r)| ReportRecord::new(&s.name, step, r))),
            Err(e) => {
                eval_error = Some(e);
                return Err(ucr_core::Error::DomainAborted { domain: step - 1 });
            }
        }
        domain_encoders.push(state.encoders.momentum.clone());
        Ok(())
    });
    if let Some(e) = eval_error {
        return Err(e);
    }
    Ok(TrainRun {
        hp: hp.clone(),
        outcome: outcome?,
        domain_encoders,
        report,
    })
}

/// Writes `domain{i}.ucrw` per domain, `final.ucrw`, `metrics.csv`,
/// `skipped.csv`, `report.csv`, `memory.ucrm`, `config.json` and `run.json`.
pub fn train(opts: &TrainOptions) -> Result<TrainRun> {
    let hp = opts.overrides.apply(load_or_default(opts.config.as_deref())?)?;
    let dataset = read_dataset(&opts.data)?;
    let pool = worker_pool()?;
    let staging = Staging::new(&opts.out)?;
    let run = run_training(&dataset, &hp, opts.ablation, &pool)?;
    let log = &run.outcome.state.log;
    for (i, enc) in run.domain_encoders.iter().enumerate() {
        write_checkpoint(enc, &staging.path(&format!("domain{i}.ucrw")))?;
    }
    write_checkpoint(&run.outcome.momentum, &staging.path("final.ucrw"))?;
    write_table(&staging.path("metrics.csv"), &log.rows.iter().map(MetricRecord::from).collect::<Vec<_>>())?;
    let skipped: Vec<SkipRecord> = log
        .skipped_epochs
        .iter()
        .map(|s| SkipRecord {
            domain_index: s.domain_index,
            epoch: s.epoch,
            reason: s.reason.clone(),
        })
        .collect();
    write_table(&staging.path("skipped.csv"), &skipped)?;
    write_table(&staging.path("report.csv"), &run.report)?;
    MemoryDump::capture(&run.outcome.state.bank, &run.outcome.state.memory).write(&staging.path("memory.ucrm"))?;
    write_config(&hp, &staging.path("config.json"))?;
    write_run_manifest(
        &staging.path("run.json"),
        &RunManifest {
            command: "train".into(),
            config: opts.config.clone(),
            data: opts.data.clone(),
            out: opts.out.clone(),
            seed: hp.seed,
            use_old: opts.ablation.use_old,
            use_sim: opts.ablation.use_sim,
        },
    )?;
    staging.commit()?;
    Ok(run)
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub checkpoints: Vec<PathBuf>,
    pub data: PathBuf,
    pub splits: Vec<String>,
    pub out: PathBuf,
}

/// Scores every checkpoint on the chosen splits; `step` is the checkpoint's
/// position on the command line.
pub fn eval(opts: &EvalOptions) -> Result<Vec<ReportRecord>> {
    let dataset = read_dataset(&opts.data)?;
    let splits = dataset.splits(&opts.splits)?;
    let encoders = opts
        .checkpoints
        .iter()
        .map(|p| read_checkpoint(p))
        .collect::<Result<Vec<_>>>()?;
    let pool = worker_pool()?;
    let staging = Staging::new(&opts.out)?;
    let mut rows = Vec::new();
    for (step, enc) in encoders.iter().enumerate() {
        let reports = evaluate_splits(&pool, enc, &splits)?;
        rows.extend(splits.iter().zip(&reports).map(|(s, r)| ReportRecord::new(&s.name, step, r)));
    }
    write_table(&staging.path("report.csv"), &rows)?;
    staging.commit()?;
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct AblateOptions {
    pub config: Option<PathBuf>,
    pub data: PathBuf,
    pub out: PathBuf,
    pub overrides: Overrides,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Summary of the final-step rows of one run.
pub fn summarize(variant: &str, dataset: &Dataset, report: &[ReportRecord]) -> AblationRecord {
    let last = report.iter().map(|r| r.step).max().unwrap_or(0);
    let at = |names: &[String]| -> Vec<&ReportRecord> {
        report
            .iter()
            .filter(|r| r.step == last && names.contains(&r.split_name))
            .collect()
    };
    let seen_names: Vec<String> = dataset.seen.iter().map(|d| d.domain.name.clone()).collect();
    let unseen_names: Vec<String> = dataset.unseen.iter().map(|d| d.domain.name.clone()).collect();
    let seen = at(&seen_names);
    let unseen = at(&unseen_names);
    AblationRecord {
        variant: variant.into(),
        seen_avg_map: mean(seen.iter().map(|r| r.map)),
        seen_avg_rank1: mean(seen.iter().map(|r| r.rank1)),
        unseen_avg_map: mean(unseen.iter().map(|r| r.map)),
        unseen_avg_rank1: mean(unseen.iter().map(|r| r.rank1)),
        first_domain_map: seen.iter().find(|r| r.split_name == seen_names[0]).map_or(f64::NAN, |r| r.map),
    }
}

/// The four rehearsal ablation rows, run one after another with a shared seed.
pub fn ablate(opts: &AblateOptions) -> Result<Vec<AblationRecord>> {
    let hp = opts.overrides.apply(load_or_default(opts.config.as_deref())?)?;
    let dataset = read_dataset(&opts.data)?;
    let pool = worker_pool()?;
    let staging = Staging::new(&opts.out)?;
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for ab in Ablation::GRID {
        let run = run_training(&dataset, &hp, ab, &pool)?;
        rows.push(summarize(ab.label(), &dataset, &run.report));
        curves.extend(run.report.iter().map(|r| CurveRecord {
            variant: ab.label().into(),
            split_name: r.split_name.clone(),
            step: r.step,
            map: r.map,
            rank1: r.rank1,
        }));
    }
    write_table(&staging.path("ablation.csv"), &rows)?;
    write_table(&staging.path("curves.csv"), &curves)?;
    write_config(&hp, &staging.path("config.json"))?;
    staging.commit()?;
    Ok(rows)
}
