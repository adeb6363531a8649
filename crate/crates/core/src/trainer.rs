//! Lifelong training loop.
//!
//! Per domain and epoch: embed the domain with the momentum encoder, pseudo
//! label it, rebuild the current prototypes, then run the optimization
//! iterations. From the second domain on, every iteration also draws a batch
//! from the image memory for the rehearsal and similarity terms. At the end
//! of a domain its clusters are committed to memory and the momentum encoder
//! becomes the frozen reference and the new online starting point.

use alloc::string::String;
use alloc::vec::Vec;

use crate::config::{BaselineVariant, HyperParams};
use crate::data::{features_matrix, validate_stream, Domain};
use crate::encoder::{EncoderParams, EncoderSet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::losses::{
    loss_current, loss_old, loss_overall, loss_sim, sim_distributions, CurrentBatch, CurrentParams, LossValue,
};
use crate::memory::{
    camera_prototypes, cluster_prototypes, commit_domain_memory, sample_batch, IdentityPool, ImageMemory, Origin,
    PrototypeBank,
};
use crate::pseudo_label::{pseudo_labels, PseudoLabeling};
use crate::rng::Rng;

/// Which old-domain terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ablation {
    pub use_old: bool,
    pub use_sim: bool,
}

impl Ablation {
    pub const FULL: Self = Self {
        use_old: true,
        use_sim: true,
    };
    pub const BASELINE: Self = Self {
        use_old: false,
        use_sim: false,
    };

    /// The four ablation rows, baseline first.
    pub const GRID: [Self; 4] = [
        Self::BASELINE,
        Self {
            use_old: true,
            use_sim: false,
        },
        Self {
            use_old: false,
            use_sim: true,
        },
        Self::FULL,
    ];

    pub fn label(&self) -> &'static str {
        match (self.use_old, self.use_sim) {
            (false, false) => "baseline",
            (true, false) => "+old",
            (false, true) => "+sim",
            (true, true) => "+old+sim",
        }
    }
}

impl Default for Ablation {
    fn default() -> Self {
        Self::FULL
    }
}

/// Linear warm-up to the base rate, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub warmup_epochs: usize,
}

impl LrSchedule {
    /// `base · min(1, (epoch + 1) / warmup_epochs)`, epochs counted from 0.
    pub fn at(&self, epoch: usize) -> f64 {
        if self.warmup_epochs == 0 {
            return self.base;
        }
        let ramp = (epoch + 1) as f64 / self.warmup_epochs as f64;
        self.base * ramp.min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
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

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedEpoch {
    pub domain_index: usize,
    pub epoch: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSummary {
    pub domain_index: usize,
    pub name: String,
    /// Clusters committed to memory.
    pub clusters: usize,
    pub cluster_sizes: Vec<usize>,
    pub memory_size: usize,
    pub prototype_memory_size: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricRow>,
    pub skipped_epochs: Vec<SkippedEpoch>,
    pub domains: Vec<DomainSummary>,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub encoders: EncoderSet,
    pub bank: PrototypeBank,
    pub memory: ImageMemory,
    /// Number of domains finished so far.
    pub domain_index: usize,
    pub epoch: usize,
    pub iter: usize,
    pub rng: Rng,
    pub log: MetricsLog,
}

impl TrainState {
    /// Fresh encoders for inputs of width `d_in`. Initialization draws from
    /// fork 1 of the run seed; batch sampling uses the seed's main stream.
    pub fn new(d_in: usize, hp: &HyperParams) -> Self {
        let rng = Rng::new(hp.seed);
        let online = EncoderParams::init(&hp.layer_dims(d_in), &mut rng.fork(1));
        Self {
            encoders: EncoderSet::new(online),
            bank: PrototypeBank::new(hp.d_emb),
            memory: ImageMemory::default(),
            domain_index: 0,
            epoch: 0,
            iter: 0,
            rng,
            log: MetricsLog::default(),
        }
    }

    fn skip(&mut self, epoch: usize, reason: String) {
        self.log.skipped_epochs.push(SkippedEpoch {
            domain_index: self.domain_index,
            epoch,
            reason,
        });
    }

    /// Trains on one domain, then commits it to memory and hands the momentum
    /// encoder over as frozen reference.
    pub fn train_domain(&mut self, domain: &Domain, hp: &HyperParams, ablation: Ablation) -> Result<()> {
        let schedule = LrSchedule {
            base: hp.lr,
            warmup_epochs: hp.warmup_epochs,
        };
        let features = domain.features();
        let cameras: Vec<usize> = domain.samples.iter().map(|s| s.camera_id).collect();
        let rehearse = self.domain_index >= 1 && (ablation.use_old || ablation.use_sim) && !self.memory.is_empty();

        let memory_features = features_matrix(self.memory.entries.iter().map(|e| &e.sample));
        let old_pool = self.memory.pool();
        let frozen_memory = match (&self.encoders.frozen, rehearse && ablation.use_sim) {
            (Some(f), true) => Some(f.embed(&memory_features)?),
            (None, true) => return Err(Error::NoFrozenEncoder),
            _ => None,
        };
        let current_params = CurrentParams {
            variant: hp.baseline_variant,
            tau_p: hp.tau_p,
            tau_c: hp.tau_c,
            lambda_cam: hp.lambda_cam,
            n_neg: hp.n_neg,
        };

        let mut last_labels: Option<PseudoLabeling> = None;
        for epoch in 0..hp.epochs_per_domain {
            self.epoch = epoch;
            let lr = schedule.at(epoch);
            let embeddings = self.encoders.momentum.embed(&features)?;
            let labels = pseudo_labels(&embeddings, hp)?;
            if labels.num_clusters == 0 {
                self.skip(epoch, "no clusters".into());
                continue;
            }
            let protos = match cluster_prototypes(&embeddings, &labels, hp.normalize_prototypes) {
                Ok(p) => p,
                Err(e @ Error::DegeneratePrototype { .. }) => {
                    self.skip(epoch, alloc::format!("{e}"));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let cams = camera_prototypes(&embeddings, &labels, &cameras, hp.normalize_prototypes);
            self.bank.refresh(protos, cams);
            let pool = IdentityPool::from_labels(&labels);
            let all_protos = self.bank.all();
            let stale_momentum = if rehearse && ablation.use_sim && !hp.fresh_old_momentum {
                Some(self.encoders.momentum.embed(&memory_features)?)
            } else {
                None
            };

            for iter in 0..hp.iters_per_epoch {
                self.iter = iter;
                let batch = sample_batch(&pool, hp.batch_current, Origin::Current, &mut self.rng)?;
                let xb = features.select_rows(&batch.indices);
                let cams_b: Vec<usize> = batch.indices.iter().map(|&i| cameras[i]).collect();
                let fwd = self.encoders.online.forward(&xb)?;
                let momentum_b = match hp.baseline_variant {
                    BaselineVariant::ClusterHard => Some(self.encoders.momentum.embed(&xb)?),
                    _ => None,
                };
                let current = loss_current(
                    &CurrentBatch {
                        online: fwd.output(),
                        momentum: momentum_b.as_ref(),
                        labels: &batch.ids,
                        cameras: &cams_b,
                        prototypes: self.bank.current(),
                        camera_prototypes: self.bank.camera_current(),
                    },
                    current_params,
                )?;

                let mut old: Option<LossValue> = None;
                let mut sim: Option<LossValue> = None;
                let mut fwd_old = None;
                if rehearse {
                    let ob = sample_batch(&old_pool, hp.batch_old, Origin::Old, &mut self.rng)?;
                    let xo = memory_features.select_rows(&ob.indices);
                    let fo = self.encoders.online.forward(&xo)?;
                    if ablation.use_old {
                        old = Some(loss_old(fo.output(), &ob.ids, &all_protos, hp.tau_p)?);
                    }
                    if let Some(frozen) = &frozen_memory {
                        let m = match &stale_momentum {
                            Some(s) => s.select_rows(&ob.indices),
                            None => self.encoders.momentum.embed(&xo)?,
                        };
                        let g = frozen.select_rows(&ob.indices);
                        let d = sim_distributions(fo.output(), &m, &g, hp.tau_s)?;
                        sim = Some(loss_sim(&d));
                    }
                    fwd_old = Some(fo);
                }

                let total = loss_overall(&current, old.as_ref(), sim.as_ref(), hp.lambda_sim);
                let mut grads = self.encoders.online.backward(&fwd, &total.grad_current)?;
                if let (Some(fo), Some(g)) = (&fwd_old, &total.grad_old) {
                    let go = self.encoders.online.backward(fo, g)?;
                    grads.add_scaled(&go, 1.0);
                }
                self.encoders.adam_step(&grads, lr, hp.weight_decay)?;
                self.encoders.ema_update(hp.alpha);

                self.log.rows.push(MetricRow {
                    domain_index: self.domain_index,
                    epoch,
                    iter,
                    loss_current: total.current,
                    loss_old: total.old,
                    loss_sim: total.sim,
                    loss_overall: total.value,
                    lr,
                    num_clusters: labels.num_clusters,
                });
            }
            last_labels = Some(labels);
        }

        let labels = last_labels.ok_or(Error::DomainAborted {
            domain: self.domain_index,
        })?;
        let embeddings = self.encoders.momentum.embed(&features)?;
        let before = self.bank.old().len();
        commit_domain_memory(
            &mut self.bank,
            &mut self.memory,
            &embeddings,
            &labels,
            &domain.samples,
            self.domain_index,
            hp.k_mem,
            hp.memory_policy,
            hp.normalize_prototypes,
            &mut self.rng,
        )?;
        debug_assert!(self.bank.old().len() >= before);
        self.encoders.snapshot_frozen();
        self.log.domains.push(DomainSummary {
            domain_index: self.domain_index,
            name: domain.name.clone(),
            clusters: labels.num_clusters,
            cluster_sizes: labels.members().iter().map(Vec::len).collect(),
            memory_size: self.memory.len(),
            prototype_memory_size: self.bank.old().len(),
        });
        self.domain_index += 1;
        Ok(())
    }
}

pub struct TrainOutcome {
    /// Momentum encoder after the final domain.
    pub momentum: EncoderParams,
    pub state: TrainState,
}

/// Trains on `domains` in order. `after_domain` sees the state once each
/// domain has been committed.
pub fn train_stream<F>(domains: &[Domain], hp: &HyperParams, ablation: Ablation, mut after_domain: F) -> Result<TrainOutcome>
where
    F: FnMut(&TrainState) -> Result<()>,
{
    hp.validate()?;
    let d_in = domains
        .first()
        .ok_or(Error::EmptyStream)?
        .samples
        .first()
        .map_or(0, |s| s.features.len());
    validate_stream(domains, d_in)?;
    let mut state = TrainState::new(d_in, hp);
    for domain in domains {
        state.train_domain(domain, hp, ablation)?;
        after_domain(&state)?;
    }
    Ok(TrainOutcome {
        momentum: state.encoders.momentum.clone(),
        state,
    })
}

/// Embedding helper for a whole domain with any encoder.
pub fn embed_domain(encoder: &EncoderParams, domain: &Domain) -> Result<Matrix> {
    encoder.embed(&domain.features())
}
