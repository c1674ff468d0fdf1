//! Command implementations behind the `vot` binary.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::autodiff::Checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{
    build_suite, export_trajectory, metrics_csv, run_suite, summary_text, vo_error_csv, Canvas,
    Estimator, MetricsReport,
};
use crate::io::{write_pgm16, write_ppm};
use crate::model::{attention_panels, PairRef, Vot};
use crate::rng;
use crate::training::{collect, load_model, train, Dataset, NormStats, TrainState};
use crate::world::{
    generate_floorplan, render, sample_episode, Image, Modality, MAX_DEPTH,
};

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::NonFinite(_) => 4,
        _ => 3,
    }
}

/// Creates `<out>/<timestamp>-seed<seed>[-k]` and echoes the resolved config.
pub fn run_dir(cfg: &RunConfig, command: &str) -> Result<PathBuf> {
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let base = Path::new(&cfg.out).join(format!("{stamp}-seed{}-{command}", cfg.seed));
    let mut dir = base.clone();
    let mut k = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{k}", base.display()));
        k += 1;
    }
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.txt"), cfg.render())?;
    Ok(dir)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn scenes(v: &[u64]) -> String {
    v.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

/// Writes `train.votd`, `val.votd` and `manifest.txt` into `dir`.
pub fn cmd_collect(cfg: &RunConfig, dir: &Path) -> Result<()> {
    cfg.validate()?;
    let cc = cfg.collect_config();
    let parts = [
        ("train", &cfg.train_scenes, cfg.train_samples, rng::derive(cfg.seed, 1)),
        ("val", &cfg.val_scenes, cfg.val_samples, rng::derive(cfg.seed, 2)),
    ];
    let mut manifest = format!("seed = {}\n", cfg.seed);
    for (name, scene_seeds, n, seed) in parts {
        let data = collect(&cc, scene_seeds, n, seed)?;
        let path = dir.join(format!("{name}.votd"));
        data.save(&path)?;
        let collided = data.samples.iter().filter(|s| s.collided).count();
        manifest.push_str(&format!(
            "{name}.file = {name}.votd\n{name}.scenes = {}\n{name}.seed = {seed}\n{name}.count = {}\n{name}.collided = {collided}\n{name}.sha256 = {}\n",
            scenes(scene_seeds),
            data.len(),
            sha256_file(&path)?
        ));
        println!("{name}: {} samples ({collided} collided) -> {}", data.len(), path.display());
    }
    fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

fn load_dataset(path: &str, what: &str) -> Result<Dataset> {
    if path.is_empty() {
        return Err(Error::Config(format!("{what} dataset path is not set")));
    }
    Dataset::load(Path::new(path)).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{path}: {io}"))),
        e => e,
    })
}

fn check_dims(model: &Vot, width: usize, height: usize, what: &str) -> Result<()> {
    let mc = model.config();
    if (mc.width, mc.height) != (width, height) {
        return Err(Error::shape(
            "checkpoint",
            format!(
                "model expects {}x{} observations, {what} has {width}x{height}",
                mc.width, mc.height
            ),
        ));
    }
    Ok(())
}

/// Trains from scratch or resumes from `train.resume`.
pub fn cmd_train(cfg: &RunConfig, dir: &Path) -> Result<()> {
    cfg.validate()?;
    let train_set = load_dataset(&cfg.train_data, "training")?;
    let val_set = load_dataset(&cfg.val_data, "validation")?;
    let mut state = if cfg.resume.is_empty() {
        let model = Vot::new(cfg.model_config(), &mut rng::stream(cfg.seed, 0x494e_4954))?;
        TrainState::new(model)
    } else {
        TrainState::from_checkpoint(&Checkpoint::load(Path::new(&cfg.resume))?)?
    };
    check_dims(&state.model, train_set.width, train_set.height, "the training set")?;
    train(&mut state, &train_set, &val_set, &cfg.train_config(), Some(dir))?;
    if let Some(row) = state.log.last() {
        println!(
            "epoch {} train {:.6} val {:.6}; best val {:.6} at epoch {}",
            row.epoch, row.train_loss, row.val_loss, state.best_val, state.best_epoch
        );
    }
    Ok(())
}

fn load_checkpoint(path: &str) -> Result<(Vot, NormStats)> {
    if path.is_empty() {
        return Err(Error::Config("eval.checkpoint is not set".into()));
    }
    load_model(&Checkpoint::load(Path::new(path))?)
}

/// Runs the episode suite once per subset (or once for a non-model
/// estimator) and writes metrics, error tables and trajectories.
pub fn cmd_eval(cfg: &RunConfig, dir: &Path) -> Result<Vec<MetricsReport>> {
    cfg.validate()?;
    let nav = cfg.nav_config();
    let suite = build_suite(cfg.floor, &cfg.eval_scenes, cfg.eval_episodes, cfg.seed, cfg.episode)?;
    let loaded = if cfg.estimator == "model" {
        let (model, norm) = load_checkpoint(&cfg.checkpoint)?;
        check_dims(&model, cfg.render.width, cfg.render.height, "the renderer")?;
        Some((model, norm))
    } else {
        None
    };
    let conditions: Vec<(String, Estimator)> = match &loaded {
        Some((model, norm)) => cfg
            .eval_subsets
            .iter()
            .map(|&available| {
                (
                    available.name().to_string(),
                    Estimator::Model {
                        model,
                        norm,
                        available,
                    },
                )
            })
            .collect(),
        None if cfg.estimator == "oracle" => vec![("oracle".into(), Estimator::Oracle)],
        None => vec![("nominal".into(), Estimator::Nominal)],
    };
    let mut reports = Vec::new();
    for (name, est) in &conditions {
        let results = run_suite(&suite, est, &nav)?;
        let report = MetricsReport::from_results(name, &results);
        fs::write(dir.join(format!("vo_errors_{name}.csv")), vo_error_csv(&report.vo_errors))?;
        for (i, r) in results.iter().take(cfg.trajectories).enumerate() {
            let (p, spec, _) = &suite.episodes[i];
            export_trajectory(&dir.join("trajectories"), &format!("{name}_{i:03}"), &suite.plans[*p], spec.goal, r, cfg.upscale)?;
        }
        reports.push(report);
    }
    fs::write(dir.join("metrics.csv"), metrics_csv(&reports))?;
    let summary = summary_text(&reports);
    fs::write(dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(reports)
}

/// Nearest-neighbour upsampling of a patch grid to pixel resolution.
pub fn upsample(values: &[f64], rows: usize, cols: usize, patch: usize) -> Vec<f64> {
    let (w, h) = (cols * patch, rows * patch);
    (0..w * h).map(|k| values[(k / w / patch) * cols + (k % w) / patch]).collect()
}

/// Gray background (depth or luminance) tinted red by the heat map.
pub fn overlay(img: &Image, modality: Modality, heat: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(img.width * img.height * 3);
    for y in 0..img.height {
        for x in 0..img.width {
            let base = match modality {
                Modality::Depth => 1.0 - img.get(x, y, 0) / MAX_DEPTH,
                Modality::Rgb => (0..3).map(|c| img.get(x, y, c)).sum::<f64>() / 3.0,
            };
            let a = heat[y * img.width + x];
            out.extend([base * (1.0 - a) + a, base * (1.0 - a), base * (1.0 - a)]);
        }
    }
    out
}

/// Writes a heat map (16-bit PGM) and overlay (PPM) per modality and
/// timestep for each selected sample. Returns the written heat-map paths.
pub fn cmd_attn(cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let (model, norm) = load_checkpoint(&cfg.checkpoint)?;
    let data = load_dataset(&cfg.attn_dataset, "attention")?;
    check_dims(&model, data.width, data.height, "the dataset")?;
    let available = model.config().modalities;
    if available.is_empty() {
        return Err(Error::InvalidArgument("a blind model has no attention over patches".into()));
    }
    let p = model.config().patch;
    let mut written = Vec::new();
    for &idx in &cfg.attn_indices {
        let s = data.samples.get(idx).ok_or_else(|| {
            Error::InvalidArgument(format!("sample index {idx} out of range (dataset has {})", data.len()))
        })?;
        let o_t = norm.normalize(&s.o_t, available)?;
        let o_t1 = norm.normalize(&s.o_t1, available)?;
        let pair = PairRef {
            o_t: &o_t,
            o_t1: &o_t1,
            action: s.action,
        };
        let (_, rec, layout) = model.predict_with_attention(pair, available)?;
        for panel in attention_panels(&rec, &layout) {
            let t = panel.timestep.unwrap_or(0);
            let stem = format!("attn_{idx:04}_{}_t{t}", panel.modality.name());
            let heat = upsample(&panel.values, panel.rows, panel.cols, p);
            let (w, h) = (panel.cols * p, panel.rows * p);
            let pgm = dir.join(format!("{stem}.pgm"));
            write_pgm16(&pgm, w, h, &heat, 0.0, 1.0)?;
            let src = if t == 0 { &s.o_t } else { &s.o_t1 };
            if let Some(img) = src.get(panel.modality) {
                write_ppm(&dir.join(format!("{stem}_overlay.ppm")), w, h, &overlay(img, panel.modality, &heat))?;
            }
            written.push(pgm);
        }
        println!("sample {idx} ({}): {} maps", s.action, written.len());
    }
    Ok(written)
}

/// Floorplan previews plus the first-person view from a sampled start pose.
pub fn cmd_worldgen(cfg: &RunConfig, dir: &Path) -> Result<()> {
    cfg.validate()?;
    for &seed in &cfg.worldgen_scenes {
        let plan = generate_floorplan(seed, cfg.floor)?;
        let spec = sample_episode(&plan, rng::derive(cfg.seed, seed), cfg.episode)?;
        let mut canvas = Canvas::floorplan(&plan, cfg.upscale);
        canvas.dot(spec.start.position, (cfg.upscale / 3) as i64, [0.1, 0.3, 0.9]);
        canvas.dot(spec.goal, (cfg.upscale / 3) as i64, [0.9, 0.7, 0.0]);
        write_ppm(&dir.join(format!("floor_{seed}.ppm")), canvas.width, canvas.height, &canvas.data)?;
        let obs = render(&plan, spec.start, &cfg.render);
        if let Some(rgb) = obs.get(Modality::Rgb) {
            write_ppm(&dir.join(format!("view_{seed}_rgb.ppm")), rgb.width, rgb.height, &rgb.data)?;
        }
        if let Some(d) = obs.get(Modality::Depth) {
            write_pgm16(&dir.join(format!("view_{seed}_depth.pgm")), d.width, d.height, &d.data, 0.0, MAX_DEPTH)?;
        }
        let free = plan.cells().iter().filter(|&&c| c != crate::world::WALL).count();
        println!("scene {seed}: {}x{} cells, {free} free", plan.width(), plan.height());
    }
    Ok(())
}
