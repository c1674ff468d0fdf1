use std::path::{Path, PathBuf};
use std::process::Command;

use vot::config::RunConfig;
use vot::io::read_netpbm;
use vot::Error;

const SMALL: &[&str] = &[
    "render.width=16",
    "render.height=8",
    "collect.train_samples=64",
    "collect.val_samples=24",
    "collect.keep_prob=0.3",
    "model.dim=16",
    "model.depth=1",
    "model.heads=2",
    "train.epochs=2",
    "train.warmup_epochs=1",
    "train.batch_size=16",
    "eval.episodes=4",
    "eval.scenes=201,202",
];

struct Run {
    code: i32,
    dir: Option<PathBuf>,
    stderr: String,
}

fn vot(out: &Path, cmd: &str, sets: &[&str]) -> Run {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vot"));
    c.arg(cmd).arg("--out").arg(out).arg("--threads").arg("1");
    for s in SMALL.iter().chain(sets) {
        c.arg("--set").arg(s);
    }
    let o = c.output().unwrap();
    let stdout = String::from_utf8_lossy(&o.stdout);
    Run {
        code: o.status.code().unwrap_or(-1),
        dir: stdout.lines().find_map(|l| l.strip_prefix("run directory: ")).map(PathBuf::from),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
    }
}

fn ok(out: &Path, cmd: &str, sets: &[&str]) -> PathBuf {
    let r = vot(out, cmd, sets);
    assert_eq!(r.code, 0, "{cmd}: {}", r.stderr);
    r.dir.unwrap()
}

fn manifest_hashes(dir: &Path) -> Vec<String> {
    std::fs::read_to_string(dir.join("manifest.txt"))
        .unwrap()
        .lines()
        .filter(|l| l.contains("sha256"))
        .map(String::from)
        .collect()
}

#[test]
fn config_errors_name_the_line() {
    let mut cfg = RunConfig::default();
    let err = cfg.apply_text("run.seed = 3\n\n# note\ntrain.epochs = many\n", "a.cfg").unwrap_err();
    assert!(matches!(&err, Error::Config(m) if m.starts_with("a.cfg:4: train.epochs")), "{err}");
    let err = cfg.apply_text("model.widht = 3\n", "b.cfg").unwrap_err();
    assert!(err.to_string().contains("b.cfg:1") && err.to_string().contains("unknown key"));
    let err = cfg.apply_text("just words\n", "c.cfg").unwrap_err();
    assert!(err.to_string().contains("c.cfg:1"));
    assert_eq!(cfg.seed, 3);
}

#[test]
fn rendered_config_parses_back() {
    let mut cfg = RunConfig::default();
    for kv in ["run.seed=9", "noise.rgb_sigma=0.125", "eval.subsets=depth,rgb", "train.schedule=invariance"] {
        cfg.apply_override(kv).unwrap();
    }
    let mut back = RunConfig::default();
    back.apply_text(&cfg.render(), "echo").unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn validation_rejects_inconsistent_configs() {
    for kv in ["collect.val_scenes=1,5", "collect.train_samples=0", "model.heads=3", "collect.keep_prob=0"] {
        let mut cfg = RunConfig::default();
        cfg.apply_override(kv).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{kv}");
    }
}

#[test]
fn bad_arguments_exit_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let r = vot(tmp.path(), "collect", &["collect.train_samples=0"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert_eq!(vot(tmp.path(), "collect", &["nope.key=1"]).code, 2);
    let r = vot(tmp.path(), "train", &[]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("dataset path"));
    let r = vot(tmp.path(), "train", &["train.train_data=/nonexistent.votd", "train.val_data=/nonexistent.votd"]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("/nonexistent.votd"));
}

#[test]
fn collect_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = ok(tmp.path(), "collect", &[]);
    let b = ok(tmp.path(), "collect", &[]);
    assert_ne!(a, b);
    assert_eq!(manifest_hashes(&a), manifest_hashes(&b));
    assert_eq!(manifest_hashes(&a).len(), 2);
    let c = ok(tmp.path(), "collect", &["run.seed=1"]);
    assert_ne!(manifest_hashes(&a), manifest_hashes(&c));
    let cfg = RunConfig::load(&a.join("config.txt")).unwrap();
    assert_eq!(cfg.train_samples, 64);
}

#[test]
fn train_eval_attn_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = ok(tmp.path(), "collect", &[]);
    let tr = format!("train.train_data={}", data.join("train.votd").display());
    let va = format!("train.val_data={}", data.join("val.votd").display());

    let run = ok(tmp.path(), "train", &[&tr, &va]);
    let log = std::fs::read_to_string(run.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(run.join("best.votc").exists() && run.join("last.votc").exists());

    // Resuming a one-epoch run to two epochs reproduces the two-epoch log.
    let short = ok(tmp.path(), "train", &[&tr, &va, "train.epochs=1"]);
    let resume = format!("train.resume={}", short.join("last.votc").display());
    let resumed = ok(tmp.path(), "train", &[&tr, &va, &resume]);
    assert_eq!(std::fs::read_to_string(resumed.join("train_log.csv")).unwrap(), log);

    let ckpt = format!("eval.checkpoint={}", run.join("best.votc").display());
    let ev = ok(tmp.path(), "eval", &[&ckpt, "eval.subsets=rgbd,depth,rgb,none", "eval.trajectories=1"]);
    let metrics = std::fs::read_to_string(ev.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = metrics.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("rgbd,") && rows[3].starts_with("none,"));
    for name in ["rgbd", "depth", "rgb", "none"] {
        let errs = std::fs::read_to_string(ev.join(format!("vo_errors_{name}.csv"))).unwrap();
        assert_eq!(errs.lines().count(), 10);
        assert!(ev.join(format!("trajectories/{name}_000.ppm")).exists());
    }

    let ds = format!("attn.dataset={}", data.join("val.votd").display());
    let at = ok(tmp.path(), "attn", &[&ckpt, &ds, "attn.indices=0,3"]);
    let mut maps: Vec<_> = std::fs::read_dir(&at)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.file_name().into_string().unwrap()))
        .filter(|n| n.ends_with(".pgm"))
        .collect();
    maps.sort();
    assert_eq!(maps.len(), 8);
    assert_eq!(maps[0], "attn_0000_depth_t0.pgm");
    let img = read_netpbm(&at.join(&maps[0])).unwrap();
    assert_eq!((img.width, img.height, img.maxval), (16, 8, 65535));
    assert_eq!(vot(tmp.path(), "attn", &[&ckpt, &ds, "attn.indices=999"]).code, 3);

    // A checkpoint trained at 16x8 cannot drive the default 32x16 renderer.
    let mut c = Command::new(env!("CARGO_BIN_EXE_vot"));
    let o = c
        .args(["eval", "--set", &ckpt, "--set", "eval.episodes=2", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("16x8"));
}

#[test]
fn invariance_schedule_frequencies_are_logged() {
    let tmp = tempfile::tempdir().unwrap();
    let data = ok(tmp.path(), "collect", &["collect.train_samples=400"]);
    let tr = format!("train.train_data={}", data.join("train.votd").display());
    let va = format!("train.val_data={}", data.join("val.votd").display());
    let run = ok(tmp.path(), "train", &[&tr, &va, "train.schedule=invariance", "train.batch_size=1", "train.epochs=1", "train.warmup_epochs=0"]);
    let log = std::fs::read_to_string(run.join("train_log.csv")).unwrap();
    let row: Vec<f64> = log.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    for (got, want) in row[5..8].iter().zip([0.2, 0.3, 0.5]) {
        assert!((got - want).abs() < 0.06, "{row:?}");
    }
}

#[test]
fn oracle_eval_and_worldgen() {
    let tmp = tempfile::tempdir().unwrap();
    let ev = ok(tmp.path(), "eval", &["render.width=32", "render.height=16", "eval.estimator=oracle", "eval.noiseless=true", "eval.episodes=20"]);
    let metrics = std::fs::read_to_string(ev.join("metrics.csv")).unwrap();
    let row: Vec<&str> = metrics.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "oracle");
    assert!(row[1].parse::<f64>().unwrap() >= 0.95, "{metrics}");
    assert!(ev.join("summary.txt").exists());

    let wg = ok(tmp.path(), "worldgen", &["worldgen.scenes=3,4", "eval.upscale=4"]);
    let floor = read_netpbm(&wg.join("floor_3.ppm")).unwrap();
    assert_eq!((floor.width, floor.height), (24 * 4, 24 * 4));
    let depth = read_netpbm(&wg.join("view_4_depth.pgm")).unwrap();
    assert_eq!((depth.width, depth.height), (16, 8));
}
