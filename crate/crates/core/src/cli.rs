//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime
//! error; failures print one `ERROR <code>: <message>` line on stderr.

use std::ffi::OsString;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::TrainingConfig;
use crate::data::io::read_json;
use crate::data::manifest::UNPAIR_MANIFEST_FILE;
use crate::data::{
    gen_dataset, load_garment, load_sample, make_unpaired_split, CompactSample, DatasetManifest, GarmentKind,
    GarmentRecord, GenOptions, Resolution, Split,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_split, Predictor, RandomConvEmbedder};
use crate::pipeline::{full_pipeline_infer, write_bundle, Pipeline, TryOnInputs};
use crate::service::{serve, ServiceState};
use crate::train::checkpoint_path;
use crate::wearing_guide::MaskWire;
use crate::{scwm, tom, wgpgm};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "tryon", version, about = "Mask-guided top-and-bottom virtual try-on")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset.
    GenData(GenDataArgs),
    /// Train one module.
    Train(TrainArgs),
    /// Run the full pipeline on one model.
    Infer(InferArgs),
    /// Evaluate on a paired test set and its unpaired remix.
    Eval(EvalArgs),
    /// Serve the HTTP try-on API.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "64x48")]
    pub resolution: Resolution,
    #[arg(long, default_value = "train")]
    pub split: Split,
    /// Seed of the unpaired remix written next to a test_pair split.
    #[arg(long)]
    pub unpair_seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Module {
    Wgpgm,
    Scwm,
    Tom,
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    /// Config file of `key=value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set wgpgm.lambda_wg=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<TrainingConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainingConfig::load(p)?,
            None => TrainingConfig::default(),
        };
        let pairs = self
            .overrides
            .iter()
            .map(|s| {
                s.split_once('=')
                    .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        cfg.apply(pairs)?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    pub module: Module,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Training dataset directory or manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Parsing-generator checkpoint for non-teacher-forced training.
    #[arg(long)]
    pub wgpgm_ckpt: Option<PathBuf>,
    /// Warping checkpoint for non-teacher-forced synthesis training.
    #[arg(long)]
    pub scwm_ckpt: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    /// Directory holding wgpgm.ckpt, scwm.ckpt and tom.ckpt.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: String,
    /// Defaults to the model's own top.
    #[arg(long)]
    pub top: Option<String>,
    /// Defaults to the model's own bottom; `none` for a dress.
    #[arg(long)]
    pub bottom: Option<String>,
    /// Hem row of the wearing-guide mask; defaults to the ground-truth hem.
    #[arg(long, conflicts_with = "mask")]
    pub hem: Option<i64>,
    /// Mask in wire format (JSON).
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint directory; omit with --ground-truth.
    #[arg(long, required_unless_present = "ground_truth")]
    pub ckpt: Option<PathBuf>,
    /// Score the ground-truth images against themselves.
    #[arg(long)]
    pub ground_truth: bool,
    /// Paired test dataset directory or manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Unpaired manifest; defaults to the one next to the paired manifest,
    /// else a remix drawn with --seed.
    #[arg(long)]
    pub unpair: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = RandomConvEmbedder::DEFAULT_SEED)]
    pub embedder_seed: u64,
    #[arg(long)]
    pub serial: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

/// Either a usage problem (exit 1) or a failure while running (exit 2).
enum Failure {
    Usage(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn manifest_of(path: &Path) -> Result<DatasetManifest> {
    DatasetManifest::load(path)
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let m = gen_dataset(
        &GenOptions {
            count: a.count,
            resolution: a.resolution,
            seed: a.seed,
            split: a.split,
        },
        &a.out,
    )?;
    if a.split == Split::TestPair && m.len() >= 2 {
        make_unpaired_split(&m, a.unpair_seed.unwrap_or(a.seed))?.save(UNPAIR_MANIFEST_FILE)?;
    }
    println!("{} samples at {} written to {}", m.len(), m.resolution, a.out.display());
    Ok(())
}

fn train_config(a: &TrainArgs) -> Result<TrainingConfig> {
    let mut cfg = a.config.load()?;
    if let Some(d) = &a.data {
        cfg.data_dir = d.clone();
    }
    if let Some(o) = &a.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        match a.module {
            Module::Wgpgm => cfg.wgpgm.optim.epochs = e,
            Module::Scwm => cfg.scwm.optim.epochs = e,
            Module::Tom => cfg.tom.optim.epochs = e,
        }
    }
    Ok(cfg)
}

/// An explicit upstream checkpoint, else the one already in the output
/// directory if present.
fn upstream(explicit: &Option<PathBuf>, cfg: &TrainingConfig, component: &str) -> Option<PathBuf> {
    explicit
        .clone()
        .or_else(|| Some(checkpoint_path(&cfg.out_dir, component)).filter(|p| p.exists()))
}

fn train(a: &TrainArgs, cfg: &TrainingConfig) -> Result<()> {
    let manifest = manifest_of(&cfg.data_dir)?;
    if manifest.resolution != cfg.resolution {
        return Err(Error::SchemaMismatch(format!(
            "dataset is {}, config says {}",
            manifest.resolution, cfg.resolution
        )));
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let resume = a.resume.as_deref();
    let path = match a.module {
        Module::Wgpgm => wgpgm::train_wgpgm(&manifest, cfg, resume)?,
        Module::Scwm => {
            let w = if cfg.scwm.teacher_forcing {
                None
            } else {
                upstream(&a.wgpgm_ckpt, cfg, wgpgm::COMPONENT)
            };
            scwm::train_scwm(&manifest, cfg, w.as_deref(), resume)?
        }
        Module::Tom => {
            let (w, s) = if cfg.tom.teacher_forcing {
                (None, None)
            } else {
                (
                    upstream(&a.wgpgm_ckpt, cfg, wgpgm::COMPONENT),
                    upstream(&a.scwm_ckpt, cfg, scwm::COMPONENT),
                )
            };
            tom::train_tom(&manifest, cfg, w.as_deref(), s.as_deref(), resume)?
        }
    };
    println!("{}", path.display());
    Ok(())
}

fn infer(a: &InferArgs) -> Result<()> {
    let m = manifest_of(&a.data)?;
    let p = Pipeline::load_dir(&a.ckpt)?;
    let model = CompactSample::from(load_sample(&m, &a.model)?);
    let entry = m.entry(&a.model)?;
    let top = load_garment(&m, GarmentKind::Top, a.top.as_deref().unwrap_or(&entry.top_id))?;
    let bottom_id = match a.bottom.as_deref() {
        Some("none") => None,
        Some(id) => Some(id.to_string()),
        None => entry.bottom_id.clone(),
    };
    let bottom = match bottom_id {
        Some(id) => load_garment(&m, GarmentKind::Bottom, &id)?,
        None => GarmentRecord::absent(m.resolution),
    };
    let mask = match (&a.mask, a.hem) {
        (Some(path), _) => read_json::<MaskWire>(path)?.to_mask(p.res)?,
        (None, Some(row)) => MaskWire::Hem { hem_row: row }.to_mask(p.res)?,
        (None, None) => model.hem()?.to_mask(),
    };
    let out = full_pipeline_infer(&TryOnInputs::with_garments(&model, top, bottom, mask), &p)?;
    println!("{}", write_bundle(&out, &a.out)?.display());
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let pair = manifest_of(&a.data)?;
    let unpair = match &a.unpair {
        Some(p) => manifest_of(p)?,
        None => {
            let beside = pair.root.join(UNPAIR_MANIFEST_FILE);
            if beside.exists() {
                manifest_of(&beside)?
            } else {
                make_unpaired_split(&pair, a.seed)?
            }
        }
    };
    let embedder = RandomConvEmbedder::new(a.embedder_seed, &RandomConvEmbedder::DEFAULT_WIDTHS);
    let pipeline = a.ckpt.as_deref().filter(|_| !a.ground_truth).map(Pipeline::load_dir).transpose()?;
    let pred = match &pipeline {
        Some(p) => Predictor::Pipeline(p),
        None => Predictor::GroundTruth,
    };
    let ev = evaluate_split(pred, &pair, &unpair, &embedder, !a.serial)?;
    ev.write(&a.out)?;
    for f in &ev.failures {
        eprintln!("WARN {} {}: {}", f.split, f.id, f.message);
    }
    if ev.fid_degenerate {
        eprintln!("WARN DegenerateCovariance: a feature covariance is singular");
    }
    println!("{}", serde_json::to_string_pretty(&ev.report).expect("report serializes"));
    Ok(())
}

fn dispatch(cli: Cli) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::GenData(a) => gen_data(&a)?,
        Command::Train(a) => {
            let cfg = train_config(&a).map_err(Failure::Usage)?;
            train(&a, &cfg)?
        }
        Command::Infer(a) => {
            if let Some(h) = a.hem {
                if h < 0 {
                    return Err(Failure::Usage(Error::Config(format!("--hem must be non-negative, got {h}"))));
                }
            }
            infer(&a)?
        }
        Command::Eval(a) => eval(&a)?,
        Command::Serve(a) => {
            let state = ServiceState::load(&a.ckpt, &a.data)?;
            serve(state, SocketAddr::new(a.host, a.port))?
        }
    }
    Ok(())
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            if matches!(e.kind(), ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                eprint!("{e}");
                return EXIT_USAGE;
            }
            let text = e.to_string();
            let detail: Vec<&str> = text
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| !l.is_empty() && !l.starts_with("tip:"))
                .collect();
            eprintln!("ERROR UsageError: {}", detail.join(" ").trim_start_matches("error: "));
            return EXIT_USAGE;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(e)) => {
            eprintln!("ERROR {}: {e}", e.code());
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("ERROR {}: {e}", e.code());
            EXIT_RUNTIME
        }
    }
}
