//! CSV tables written by the commands, each with a fixed header row.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use ucr_core::trainer::MetricRow;
use ucr_core::EvalReport;

use crate::error::{Error, Result};

pub trait Table: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub domain_index: usize,
    pub epoch: usize,
    pub iter: usize,
    pub loss_current: f64,
    pub loss_old: f64,
    pub loss_sim: f64,
    pub loss_overall: f64,
    pub lr: f64,
    pub num_clusters: usize,
}

impl Table for MetricRecord {
    const HEADER: &'static [&'static str] = &[
        "domain_index",
        "epoch",
        "iter",
        "loss_current",
        "loss_old",
        "loss_sim",
        "loss_overall",
        "lr",
        "num_clusters",
    ];
}

impl From<&MetricRow> for MetricRecord {
    fn from(r: &MetricRow) -> Self {
        MetricRecord {
            domain_index: r.domain_index,
            epoch: r.epoch,
            iter: r.iter,
            loss_current: r.loss_current,
            loss_old: r.loss_old,
            loss_sim: r.loss_sim,
            loss_overall: r.loss_overall,
            lr: r.lr,
            num_clusters: r.num_clusters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub domain_index: usize,
    pub epoch: usize,
    pub reason: String,
}

impl Table for SkipRecord {
    const HEADER: &'static [&'static str] = &["domain_index", "epoch", "reason"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub split_name: String,
    pub step: usize,
    #[serde(rename = "mAP")]
    pub map: f64,
    pub rank1: f64,
    pub rank5: f64,
    pub rank10: f64,
    pub skipped: usize,
}

impl Table for ReportRecord {
    const HEADER: &'static [&'static str] = &["split_name", "step", "mAP", "rank1", "rank5", "rank10", "skipped"];
}

impl ReportRecord {
    pub fn new(split_name: &str, step: usize, r: &EvalReport) -> Self {
        ReportRecord {
            split_name: split_name.into(),
            step,
            map: r.map,
            rank1: r.rank(1),
            rank5: r.rank(5),
            rank10: r.rank(10),
            skipped: r.skipped_queries,
        }
    }
}

/// One row of the ablation grid: averages over splits after the last domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRecord {
    pub variant: String,
    pub seen_avg_map: f64,
    pub seen_avg_rank1: f64,
    pub unseen_avg_map: f64,
    pub unseen_avg_rank1: f64,
    pub first_domain_map: f64,
}

impl Table for AblationRecord {
    const HEADER: &'static [&'static str] = &[
        "variant",
        "seen_avg_map",
        "seen_avg_rank1",
        "unseen_avg_map",
        "unseen_avg_rank1",
        "first_domain_map",
    ];
}

/// Report rows of one ablation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub variant: String,
    pub split_name: String,
    pub step: usize,
    #[serde(rename = "mAP")]
    pub map: f64,
    pub rank1: f64,
}

impl Table for CurveRecord {
    const HEADER: &'static [&'static str] = &["variant", "split_name", "step", "mAP", "rank1"];
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_table<T: Table>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err(path))?;
    w.write_record(T::HEADER).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(Error::io(path))
}

pub fn read_table<T: Table>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(T::HEADER.iter().copied()) {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            reason: format!("unexpected header {:?}", header),
        });
    }
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))
}
