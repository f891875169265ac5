use std::path::Path;
use std::process::{Command, Output};

use tryon::checkpoint::Checkpoint;
use tryon::data::DatasetManifest;
use tryon::metrics::MetricsReport;

fn tryon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tryon"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_data_then_init_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = tryon(&["gen-data", "--count", "6", "--seed", "3", "--resolution", "64x48", "--out", p(&data)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = DatasetManifest::load(&data).unwrap();
    assert_eq!(m.len(), 6);
    m.validate().unwrap();

    let ckpt = dir.path().join("ckpt");
    let o = tryon(&["train", "wgpgm", "--data", p(&data), "--epochs", "0", "--out", p(&ckpt)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let c = Checkpoint::load_component(&ckpt.join("wgpgm.ckpt"), "wgpgm").unwrap();
    assert_eq!(c.step(), 0);
    assert!(!ckpt.join(".lock").exists());
}

#[test]
fn usage_errors_exit_one() {
    let o = tryon(&["train", "bogus"]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.starts_with("ERROR UsageError:"), "{e}");
    for m in ["wgpgm", "scwm", "tom"] {
        assert!(e.contains(m), "{e}");
    }

    let o = tryon(&["gen-data", "--count", "x", "--out", "/tmp/never"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--count"));

    let o = tryon(&["gen-data", "--count", "1", "--resolution", "64x64", "--out", "/tmp/never"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("64x64"));

    let o = tryon(&["train", "tom", "--set", "tom.lambda_l1=-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR NegativeWeight:"));

    let o = tryon(&["train", "tom", "--set", "tom.nope=1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR ConfigError:"));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = tryon(&["train", "scwm", "--data", p(&dir.path().join("missing")), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.starts_with("ERROR IoError:") && e.lines().count() == 1, "{e}");

    let data = dir.path().join("data");
    assert_eq!(tryon(&["gen-data", "--count", "2", "--out", p(&data)]).status.code(), Some(0));
    let o = tryon(&["train", "tom", "--data", p(&data), "--set", "resolution=32x24", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("ERROR SchemaMismatch:"));
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(tryon(&["gen-data", "--count", "2", "--out", p(&data)]).status.code(), Some(0));
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, format!("data_dir={}\nscwm.epochs=0\nseed=9\n", data.display())).unwrap();
    let out = dir.path().join("ckpt");
    let o = tryon(&["train", "scwm", "--config", p(&cfg), "--set", "scwm.lambda_tps=0.5", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let c = Checkpoint::load_component(&out.join("scwm.ckpt"), "scwm").unwrap();
    assert_eq!(c.config.seed, 9);
    assert_eq!(c.config.scwm.lambda_tps, 0.5);
}

#[test]
fn eval_ground_truth_and_infer() {
    let dir = tempfile::tempdir().unwrap();
    let test = dir.path().join("test");
    let o = tryon(&["gen-data", "--count", "5", "--seed", "8", "--split", "test_pair", "--out", p(&test)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(test.join("manifest_unpair.json").exists());

    let out = dir.path().join("eval");
    let o = tryon(&["eval", "--ground-truth", "--data", p(&test), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: MetricsReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r.ssim_pair, 1.0);
    assert_eq!(r.lpips_pair, 0.0);
    assert!(r.fid_pair < 1e-3);
    assert!(out.join("report.json").exists());

    // Untrained checkpoints are enough to exercise the inference path.
    let data = dir.path().join("train");
    let ckpt = dir.path().join("ckpt");
    assert_eq!(tryon(&["gen-data", "--count", "2", "--out", p(&data)]).status.code(), Some(0));
    for m in ["wgpgm", "scwm", "tom"] {
        let o = tryon(&["train", m, "--data", p(&data), "--epochs", "0", "--out", p(&ckpt)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let bundle = dir.path().join("bundle");
    let o = tryon(&[
        "infer", "--ckpt", p(&ckpt), "--data", p(&test), "--model", "s00001", "--hem", "30", "--out", p(&bundle),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["index.json", "final.png", "parsing.png", "warped_top.png", "warped_bottom.png"] {
        assert!(bundle.join(f).exists(), "{f}");
    }
    let o = tryon(&["infer", "--ckpt", p(&ckpt), "--data", p(&test), "--model", "nobody", "--out", p(&bundle)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("ERROR UnknownId:"));
}
