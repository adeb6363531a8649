use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ucr::commands::{self, AblateOptions, EvalOptions, Overrides, TrainOptions};
use ucr::ucr_core::synth::StreamSpec;
use ucr::ucr_core::{Ablation, BaselineVariant, MemoryPolicy};

/// Lifelong unsupervised re-identification with contrastive rehearsal.
///
/// Exit codes: 0 success, 1 I/O failure, 2 usage error, 3 invalid
/// configuration, 4 invalid data, 5 training failure. UCR_THREADS caps the
/// number of evaluation workers.
#[derive(Parser)]
#[command(name = "ucr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic domain stream as a dataset directory.
    Generate(GenerateArgs),
    /// Train on the seen domains of a dataset.
    Train(TrainArgs),
    /// Score checkpoints on dataset splits.
    Eval(EvalArgs),
    /// Run the four rehearsal ablation rows.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seen (training) domains.
    #[arg(long)]
    domains: Option<usize>,
    #[arg(long)]
    unseen: Option<usize>,
    #[arg(long)]
    ids: Option<usize>,
    /// Identities per domain held out for query/gallery.
    #[arg(long)]
    test_ids: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    cameras: Option<usize>,
    /// Feature dimension.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    camera_shift: Option<f64>,
    /// Per-plane rotation angle between domains, radians.
    #[arg(long)]
    rotation: Option<f64>,
    #[arg(long)]
    translation: Option<f64>,
}

impl GenerateArgs {
    fn spec(&self) -> StreamSpec {
        let d = StreamSpec::default();
        StreamSpec {
            num_domains: self.domains.unwrap_or(d.num_domains),
            unseen_domains: self.unseen.unwrap_or(d.unseen_domains),
            ids_per_domain: self.ids.unwrap_or(d.ids_per_domain),
            test_ids_per_domain: self.test_ids.unwrap_or(d.test_ids_per_domain),
            samples_per_id: self.samples.unwrap_or(d.samples_per_id),
            cameras_per_domain: self.cameras.unwrap_or(d.cameras_per_domain),
            d_in: self.dim.unwrap_or(d.d_in),
            noise: self.noise.unwrap_or(d.noise),
            camera_shift: self.camera_shift.unwrap_or(d.camera_shift),
            domain_rotation: self.rotation.unwrap_or(d.domain_rotation),
            domain_translation: self.translation.unwrap_or(d.domain_translation),
            seed: self.seed,
            ..d
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    baseline_variant: Option<Variant>,
    #[arg(long)]
    k_mem: Option<usize>,
    #[arg(long, value_enum)]
    memory_policy: Option<Policy>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            baseline_variant: self.baseline_variant.map(Variant::into_core),
            k_mem: self.k_mem,
            memory_policy: self.memory_policy.map(Policy::into_core),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Drop the rehearsal loss on stored samples.
    #[arg(long)]
    no_old: bool,
    /// Drop the similarity constraint.
    #[arg(long)]
    no_sim: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint file; repeat to compare several (row step = position).
    #[arg(long, required = true)]
    checkpoint: Vec<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Split name; repeat for several. All splits when absent.
    #[arg(long)]
    split: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Clone, Copy, ValueEnum)]
#[allow(clippy::enum_variant_names)]
enum Variant {
    #[value(name = "cluster_only")]
    ClusterOnly,
    #[value(name = "cluster+hard")]
    ClusterHard,
    #[value(name = "cluster+cam")]
    ClusterCam,
}

impl Variant {
    fn into_core(self) -> BaselineVariant {
        match self {
            Variant::ClusterOnly => BaselineVariant::ClusterOnly,
            Variant::ClusterHard => BaselineVariant::ClusterHard,
            Variant::ClusterCam => BaselineVariant::ClusterCam,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Nearest,
    Farthest,
    Random,
}

impl Policy {
    fn into_core(self) -> MemoryPolicy {
        match self {
            Policy::Nearest => MemoryPolicy::Nearest,
            Policy::Farthest => MemoryPolicy::Farthest,
            Policy::Random => MemoryPolicy::Random,
        }
    }
}

fn run(cli: Cli) -> ucr::Result<()> {
    match cli.command {
        Command::Generate(a) => {
            let d = commands::generate(&a.spec(), &a.out)?;
            println!(
                "wrote {} seen and {} unseen domains to {}",
                d.seen.len(),
                d.unseen.len(),
                a.out.display()
            );
        }
        Command::Train(a) => {
            let opts = TrainOptions {
                config: a.run.config.clone(),
                data: a.run.data.clone(),
                out: a.run.out.clone(),
                overrides: a.run.overrides(),
                ablation: Ablation {
                    use_old: !a.no_old,
                    use_sim: !a.no_sim,
                },
            };
            let r = commands::train(&opts)?;
            let last = r.report.iter().map(|x| x.step).max().unwrap_or(0);
            for row in r.report.iter().filter(|x| x.step == last) {
                println!("{:<12} mAP {:.4}  rank1 {:.4}", row.split_name, row.map, row.rank1);
            }
        }
        Command::Eval(a) => {
            let rows = commands::eval(&EvalOptions {
                checkpoints: a.checkpoint,
                data: a.data,
                splits: a.split,
                out: a.out,
            })?;
            for row in rows {
                println!("{} {:<12} mAP {:.4}  rank1 {:.4}", row.step, row.split_name, row.map, row.rank1);
            }
        }
        Command::Ablate(a) => {
            let rows = commands::ablate(&AblateOptions {
                config: a.run.config.clone(),
                data: a.run.data.clone(),
                out: a.run.out.clone(),
                overrides: a.run.overrides(),
            })?;
            println!("{:<10} {:>8} {:>8} {:>8} {:>8}", "variant", "seen", "rank1", "unseen", "rank1");
            for r in rows {
                println!(
                    "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                    r.variant, r.seen_avg_map, r.seen_avg_rank1, r.unseen_avg_map, r.unseen_avg_rank1
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.failure().exit_code() as u8)
        }
    }
}
