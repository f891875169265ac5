//! Shared training driver: output locking, deterministic batch schedule,
//! loss logging, periodic checkpoints and resume.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::config::{OptimConfig, TrainingConfig};
use crate::data::CompactSample;
use crate::error::{Error, Result};

pub const LOCK_FILE: &str = ".lock";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// One network's training procedure, driven by [`run`].
pub trait Trainer {
    /// Component name used for file names and the checkpoint header.
    fn component(&self) -> &'static str;
    fn optim(&self) -> &OptimConfig;
    /// CSV columns after `step`.
    fn log_columns(&self) -> &'static [&'static str];
    /// One optimizer step; returns the values of [`Trainer::log_columns`].
    fn train_step(&mut self, batch: &[&CompactSample]) -> Result<Vec<f64>>;
    /// Parameters and optimizer state.
    fn write_state(&self, ckpt: &mut Checkpoint);
    fn read_state(&mut self, ckpt: &Checkpoint) -> Result<()>;
}

pub fn steps_per_epoch(samples: usize, batch_size: usize) -> u64 {
    samples.div_ceil(batch_size) as u64
}

pub fn total_steps(samples: usize, optim: &OptimConfig) -> u64 {
    let all = optim.epochs * steps_per_epoch(samples, optim.batch_size);
    if optim.max_steps > 0 {
        all.min(optim.max_steps)
    } else {
        all
    }
}

/// Independent seed for one named random stream under a master seed.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// Sample order of one epoch, a pure function of (seed, component, epoch).
pub fn epoch_order(samples: usize, seed: u64, component: &str, epoch: u64) -> Vec<usize> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(component.as_bytes());
    h.update(epoch.to_le_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut order: Vec<usize> = (0..samples).collect();
    order.shuffle(&mut ChaCha8Rng::from_seed(key));
    order
}

pub fn checkpoint_path(out_dir: &Path, component: &str) -> PathBuf {
    out_dir.join(format!("{component}.ckpt"))
}

pub fn step_checkpoint_path(out_dir: &Path, component: &str, step: u64) -> PathBuf {
    out_dir.join(format!("{component}_step{step:06}.ckpt"))
}

pub fn log_path(out_dir: &Path, component: &str) -> PathBuf {
    out_dir.join(format!("{component}_log.csv"))
}

fn snapshot<T: Trainer>(trainer: &T, cfg: &TrainingConfig, step: u64, spe: u64) -> Checkpoint {
    let mut ckpt = Checkpoint::new(trainer.component(), cfg);
    ckpt.set_counter("step", step);
    ckpt.set_counter("epoch", step.checked_div(spe).unwrap_or(0));
    trainer.write_state(&mut ckpt);
    ckpt
}

/// Open the loss log, keeping only rows up to `resume_step` when resuming.
fn open_log(path: &Path, header: &str, resume_step: Option<u64>) -> Result<File> {
    let mut kept = format!("{header}\n");
    if let Some(step) = resume_step {
        if let Ok(text) = fs::read_to_string(path) {
            for line in text.lines().skip(1) {
                let row_step = line.split(',').next().and_then(|s| s.parse::<u64>().ok());
                if row_step.is_some_and(|s| s <= step) {
                    kept.push_str(line);
                    kept.push('\n');
                }
            }
        }
    }
    fs::write(path, kept).map_err(|e| Error::io(path, e))?;
    OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))
}

/// Train until the configured step budget is used up, then write the final
/// checkpoint `<out_dir>/<component>.ckpt` and return its path.
pub fn run<T: Trainer>(
    trainer: &mut T,
    samples: &[CompactSample],
    cfg: &TrainingConfig,
    resume: Option<&Path>,
) -> Result<PathBuf> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let component = trainer.component();
    let out_dir = cfg.out_dir.clone();
    let _lock = OutputLock::acquire(&out_dir)?;
    let optim = trainer.optim().clone();
    let spe = steps_per_epoch(samples.len(), optim.batch_size);
    let total = total_steps(samples.len(), &optim);

    let mut start = 0;
    if let Some(path) = resume {
        let ckpt = Checkpoint::load_component(path, component)?;
        trainer.read_state(&ckpt)?;
        start = ckpt.step();
    }
    let columns = trainer.log_columns();
    let header = format!("step,{}", columns.join(","));
    let log_file = log_path(&out_dir, component);
    let mut log = open_log(&log_file, &header, resume.map(|_| start))?;

    let began = Instant::now();
    let mut order_epoch = u64::MAX;
    let mut order = Vec::new();
    for step in start..total {
        let epoch = step / spe;
        if epoch != order_epoch {
            order = epoch_order(samples.len(), cfg.seed, component, epoch);
            order_epoch = epoch;
        }
        let first = ((step % spe) as usize) * optim.batch_size;
        let batch: Vec<&CompactSample> = order[first..(first + optim.batch_size).min(samples.len())]
            .iter()
            .map(|&i| &samples[i])
            .collect();
        let values = trainer.train_step(&batch)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedLoss {
                step: step + 1,
                batch: batch.iter().map(|s| s.id.as_str()).collect::<Vec<_>>().join(","),
            });
        }
        let row: Vec<String> = values.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(log, "{},{}", step + 1, row.join(",")).map_err(|e| Error::io(&log_file, e))?;
        let done = step + 1;
        if done % 50 == 0 || done == total {
            let total_col = columns.iter().position(|&c| c == "total").unwrap_or(0);
            log::info!(
                "{component} step {done}/{total} epoch {epoch} total {:.4} ({:.1}s)",
                values[total_col],
                began.elapsed().as_secs_f64()
            );
        }
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done != total {
            snapshot(trainer, cfg, done, spe).save(&step_checkpoint_path(&out_dir, component, done))?;
        }
    }
    let final_step = start.max(total);
    let path = checkpoint_path(&out_dir, component);
    snapshot(trainer, cfg, final_step, spe).save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_is_a_pure_permutation() {
        let a = epoch_order(10, 1, "wgpgm", 0);
        assert_eq!(a, epoch_order(10, 1, "wgpgm", 0));
        assert_ne!(a, epoch_order(10, 1, "wgpgm", 1));
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn step_budget() {
        let mut o = TrainingConfig::default().wgpgm.optim;
        o.batch_size = 4;
        o.epochs = 3;
        assert_eq!(total_steps(10, &o), 9);
        o.max_steps = 5;
        assert_eq!(total_steps(10, &o), 5);
        o.epochs = 0;
        assert_eq!(total_steps(10, &o), 0);
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let lock = OutputLock::acquire(dir.path()).unwrap();
        assert!(matches!(OutputLock::acquire(dir.path()), Err(Error::Locked(_))));
        drop(lock);
        assert!(!dir.path().join(LOCK_FILE).exists());
        OutputLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn log_truncates_on_resume() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        fs::write(&p, "step,a\n1,0.5\n2,0.4\n3,0.3\n").unwrap();
        drop(open_log(&p, "step,a", Some(2)).unwrap());
        assert_eq!(fs::read_to_string(&p).unwrap(), "step,a\n1,0.5\n2,0.4\n");
        drop(open_log(&p, "step,a", None).unwrap());
        assert_eq!(fs::read_to_string(&p).unwrap(), "step,a\n");
    }
}
