//! Subcommand implementations. Each takes a resolved `RunConfig` plus an
//! output directory, writes its artifacts and the resolved config there,
//! and returns a single descriptive error on failure.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use widepth_core::csi::{self, PreprocessConfig};
use widepth_core::data::{self, Dataset, DatasetConfig, Sample};
use widepth_core::depth::{self, DepthPrepConfig, MovingDepthFrame};
use widepth_core::metrics::{score_pair, EvalReport};
use widepth_core::sim;
use widepth_core::student::{
    self, infer_depth, train_baseline_e2e, train_student, BaselineModel, StudentConfig,
    StudentLossWeights, StudentModel,
};
use widepth_core::teacher::{
    self, train_teacher, TeacherConfig, TeacherLossWeights, TeacherModel, TrainConfig,
};
use widepth_core::{Rng, Tensor};

use crate::config::RunConfig;
use crate::formats::{
    self, read_csi_record, read_dataset, read_manifest, read_pgm16, write_csi_record,
    write_history_csv, write_manifest, write_pgm16, write_pgm8, write_report_csv, write_sample,
    Checkpoint, ManifestRow,
};

/// Training aborted on divergence but the last good checkpoint was kept;
/// the run exits nonzero without removing its outputs.
#[derive(Debug)]
pub struct Diverged(pub String);

impl fmt::Display for Diverged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "training diverged ({}); last good checkpoint kept", self.0)
    }
}

impl std::error::Error for Diverged {}

// ------------------------------------------------------------ key tables

pub const SIMULATE_KEYS: &[(&str, &str)] = &[
    ("n_subjects", "6"),
    ("windows_per_subject", "333"),
    ("n_packet", "300"),
    ("hop_s", "0.1"),
    ("warmup_s", "3.0"),
    ("seed", "1"),
    ("noise_std", "0.001"),
    ("offsets_enabled", "true"),
    ("object_gain", "10"),
];

pub const PREPROCESS_KEYS: &[(&str, &str)] = &[
    ("manifest", ""),
    ("cutoff_hz", "2.0"),
    ("sg_window", "11"),
    ("sg_order", "3"),
    ("ref_tx", "0"),
];

pub const TRAIN_TEACHER_KEYS: &[(&str, &str)] = &[
    ("data", ""),
    ("held_out", "-1"),
    ("epochs", "50"),
    ("batch_size", "32"),
    ("lr", "0.001"),
    ("subsample", "0.2"),
    ("seed", "1"),
    ("beta", "0.5"),
    ("w1", "1"),
    ("w2", "1"),
    ("w3", "1"),
    ("w4", "1"),
];

pub const TRAIN_STUDENT_KEYS: &[(&str, &str)] = &[
    ("data", ""),
    ("teacher", ""),
    ("held_out", "-1"),
    ("epochs", "50"),
    ("batch_size", "32"),
    ("lr", "0.001"),
    ("subsample", "0.2"),
    ("seed", "1"),
    ("w5", "1"),
    ("w6", "1"),
    ("w7", "1"),
    ("alpha", "0.5"),
    ("w2p", "1"),
    ("w3p", "1"),
    ("w4p", "1"),
];

pub const TRAIN_BASELINE_KEYS: &[(&str, &str)] = &[
    ("data", ""),
    ("held_out", "-1"),
    ("epochs", "50"),
    ("batch_size", "32"),
    ("lr", "0.001"),
    ("subsample", "0.2"),
    ("seed", "1"),
    ("beta", "0.5"),
];

pub const EVALUATE_KEYS: &[(&str, &str)] = &[
    ("data", ""),
    ("teacher", ""),
    ("student", ""),
    ("baseline", ""),
    ("held_out", "-1"),
    ("split", "test"),
];

pub const INFER_KEYS: &[(&str, &str)] = &[
    ("data", ""),
    ("teacher", ""),
    ("student", ""),
    ("ids", ""),
];

pub const GRADCHECK_KEYS: &[(&str, &str)] = &[("threshold", "0.0001")];

pub fn keys_for(subcommand: &str) -> &'static [(&'static str, &'static str)] {
    match subcommand {
        "simulate" => SIMULATE_KEYS,
        "preprocess" => PREPROCESS_KEYS,
        "train-teacher" => TRAIN_TEACHER_KEYS,
        "train-student" => TRAIN_STUDENT_KEYS,
        "train-baseline" => TRAIN_BASELINE_KEYS,
        "evaluate" => EVALUATE_KEYS,
        "infer" => INFER_KEYS,
        "gradcheck" => GRADCHECK_KEYS,
        other => panic!("unknown subcommand {other}"),
    }
}

// ------------------------------------------------------------ helpers

fn dataset_config(cfg: &RunConfig) -> Result<DatasetConfig> {
    let mut dc = DatasetConfig::default();
    dc.n_subjects = cfg.parse("n_subjects")?;
    dc.windows_per_subject = cfg.parse("windows_per_subject")?;
    dc.n_packet = cfg.parse("n_packet")?;
    dc.hop_s = cfg.parse("hop_s")?;
    dc.warmup_s = cfg.parse("warmup_s")?;
    dc.seed = cfg.parse("seed")?;
    dc.channel.noise_std = cfg.parse("noise_std")?;
    dc.channel.offsets_enabled = cfg.bool("offsets_enabled")?;
    dc.channel.object_gain = cfg.parse("object_gain")?;
    Ok(dc)
}

fn train_config(cfg: &RunConfig) -> Result<TrainConfig> {
    Ok(TrainConfig {
        epochs: cfg.parse("epochs")?,
        batch_size: cfg.parse("batch_size")?,
        lr: cfg.parse("lr")?,
        seed: cfg.parse("seed")?,
        subsample: cfg.parse("subsample")?,
    })
}

/// Training indices for a dataset given a `held_out` subject (-1 = all).
fn train_indices(ds: &Dataset, held_out: i64) -> Vec<usize> {
    if held_out < 0 {
        (0..ds.samples.len()).collect()
    } else {
        data::loso_split(ds, held_out as u32).0
    }
}

fn teacher_meta(cfg: &TeacherConfig) -> Vec<(String, String)> {
    vec![
        ("kind".into(), "teacher".into()),
        ("image_h".into(), cfg.image_h.to_string()),
        ("image_w".into(), cfg.image_w.to_string()),
        ("latent_dim".into(), cfg.latent_dim.to_string()),
        ("mask_side".into(), cfg.mask_side.to_string()),
    ]
}

fn teacher_config_from_meta(ck: &Checkpoint) -> Result<TeacherConfig> {
    let get = |k: &str| -> Result<usize> {
        ck.meta(k)
            .with_context(|| format!("checkpoint missing `{k}`"))?
            .parse()
            .with_context(|| format!("bad checkpoint `{k}`"))
    };
    Ok(TeacherConfig {
        image_h: get("image_h")?,
        image_w: get("image_w")?,
        latent_dim: get("latent_dim")?,
        mask_side: get("mask_side")?,
    })
}

pub fn save_teacher(path: &Path, model: &TeacherModel<f32>) -> Result<()> {
    Checkpoint::from_params(teacher_meta(&model.cfg), &model.param_names(), &model.params())
        .write(path)
}

pub fn load_teacher(path: &Path) -> Result<TeacherModel<f32>> {
    let ck = Checkpoint::read(path)?;
    if ck.meta("kind") != Some("teacher") {
        bail!("{} is not a teacher checkpoint", path.display());
    }
    let cfg = teacher_config_from_meta(&ck)?;
    let mut model = TeacherModel::<f32>::new(cfg, &mut Rng::new(0))
        .map_err(|e| anyhow::anyhow!("building teacher: {e}"))?;
    let names = model.param_names();
    ck.load_into(&names, &mut model.params_mut())?;
    Ok(model)
}

pub fn save_student(path: &Path, model: &StudentModel<f32>, tcfg: &TeacherConfig) -> Result<()> {
    let mut meta = teacher_meta(tcfg);
    meta[0].1 = "student".into();
    Checkpoint::from_params(meta, &model.param_names(), &model.params()).write(path)
}

pub fn load_student(path: &Path) -> Result<StudentModel<f32>> {
    let ck = Checkpoint::read(path)?;
    if ck.meta("kind") != Some("student") {
        bail!("{} is not a student checkpoint", path.display());
    }
    let tcfg = teacher_config_from_meta(&ck)?;
    let mut model = StudentModel::<f32>::new(StudentConfig::for_teacher(&tcfg), &mut Rng::new(0));
    let names = model.param_names();
    ck.load_into(&names, &mut model.params_mut())?;
    Ok(model)
}

pub fn save_baseline(path: &Path, model: &BaselineModel<f32>, tcfg: &TeacherConfig) -> Result<()> {
    let mut meta = teacher_meta(tcfg);
    meta[0].1 = "baseline".into();
    meta.push(("beta".into(), format!("{}", model.beta)));
    Checkpoint::from_params(meta, &model.param_names(), &model.params()).write(path)
}

pub fn load_baseline(path: &Path) -> Result<BaselineModel<f32>> {
    let ck = Checkpoint::read(path)?;
    if ck.meta("kind") != Some("baseline") {
        bail!("{} is not a baseline checkpoint", path.display());
    }
    let tcfg = teacher_config_from_meta(&ck)?;
    let beta: f64 = ck
        .meta("beta")
        .context("checkpoint missing `beta`")?
        .parse()
        .context("bad checkpoint `beta`")?;
    let mut model = BaselineModel::<f32>::new(&tcfg, beta, &mut Rng::new(0));
    let names = model.param_names();
    ck.load_into(&names, &mut model.params_mut())?;
    Ok(model)
}

// ------------------------------------------------------------ simulate

/// Render, simulate, and write the raw dataset: per-window CSI records,
/// aligned moving-depth frames as 16-bit millimeter PGMs, and the manifest.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dc = dataset_config(cfg)?;
    fs::create_dir_all(out.join("csi"))?;
    let mut rows: Vec<ManifestRow> = Vec::new();
    for subject in 0..dc.n_subjects as u32 {
        let scene = dc.subject_scene(subject);
        scene
            .validate()
            .map_err(|e| anyhow::anyhow!("subject {subject} scene: {e}"))?;
        let frames = data::subject_frames(&dc, &scene);
        let moving = depth::extract_moving(&frames, &dc.depth)
            .map_err(|e| anyhow::anyhow!("subject {subject} depth: {e}"))?;
        let fps = scene.camera.fps;
        let depth_dir = format!("depth/s{subject}");
        fs::create_dir_all(out.join(&depth_dir))?;
        let rng = Rng::new(dc.seed).derive(0xDA7A_0000 + subject as u64);
        for w in 0..dc.windows_per_subject {
            let start = w as f64 * dc.hop_s;
            let end = start + dc.window_len_s();
            let fi = (((dc.warmup_s + end) * fps) as usize).min(moving.len() - 1);
            let comps = depth::core_components(&moving[fi], &dc.depth);
            if comps.center.is_none() {
                continue; // object out of view for this window
            }
            let id = format!("s{subject}w{w:04}");
            let mut wrng = rng.derive(w as u64);
            let raw = sim::simulate_csi(&scene, &dc.channel, start, dc.n_packet, &mut wrng);
            let csi_path = format!("csi/{id}.csir");
            write_csi_record(&out.join(&csi_path), &raw)?;
            let m = &moving[fi];
            let mm: Vec<u16> = m
                .data
                .iter()
                .map(|&v| (v * dc.depth.max_range_mm).round().clamp(0.0, 65535.0) as u16)
                .collect();
            write_pgm16(&out.join(format!("{depth_dir}/{id}.pgm")), m.width, m.height, &mm)?;
            rows.push(ManifestRow {
                id,
                subject,
                window_start_s: start,
                csi_path,
                depth_dir: depth_dir.clone(),
            });
        }
    }
    if rows.is_empty() {
        bail!("no usable windows simulated");
    }
    write_manifest(&out.join("manifest.txt"), &rows)?;
    cfg.write_resolved(out)?;
    Ok(())
}

// ------------------------------------------------------------ preprocess

/// Turn each manifest row into a serialized training sample: preprocess the
/// raw CSI window and recompute the depth-side targets from the stored
/// frame.
pub fn cmd_preprocess(cfg: &RunConfig, out: &Path) -> Result<()> {
    let manifest_path = PathBuf::from(cfg.str("manifest")?);
    if manifest_path.as_os_str().is_empty() {
        bail!("`manifest` is required");
    }
    let rows = read_manifest(&manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let pp = PreprocessConfig {
        cutoff_hz: cfg.parse("cutoff_hz")?,
        sg_window: cfg.parse("sg_window")?,
        sg_order: cfg.parse("sg_order")?,
        ref_tx: cfg.parse("ref_tx")?,
    };
    let depth_cfg = DepthPrepConfig::default();
    fs::create_dir_all(out.join("samples"))?;
    let mut index = String::new();
    for row in &rows {
        let raw = read_csi_record(&base.join(&row.csi_path))?;
        let (csi_tensor, feature) = csi::preprocess_window(&raw, &pp)
            .map_err(|e| anyhow::anyhow!("sample {}: {e}", row.id))?;
        let (w, h, mm) = read_pgm16(&base.join(&row.depth_dir).join(format!("{}.pgm", row.id)))?;
        let norm: Vec<f32> = mm
            .iter()
            .map(|&v| v as f32 / depth_cfg.max_range_mm)
            .collect();
        let frame = MovingDepthFrame {
            width: w,
            height: h,
            data: norm,
            timestamp: row.window_start_s,
        };
        let comps = depth::core_components(&frame, &depth_cfg);
        let center = comps
            .center
            .with_context(|| format!("sample {}: no object in stored frame", row.id))?;
        let sample = Sample {
            id: row.id.clone(),
            subject: row.subject,
            window_start: row.window_start_s,
            csi: csi_tensor,
            phase: feature.to_flat(),
            image: frame.to_tensor(),
            mask: comps.mask,
            center,
            avg_depth: comps.avg_depth,
        };
        let rel = format!("samples/{}.smp", row.id);
        write_sample(&out.join(&rel), &sample)?;
        index.push_str(&rel);
        index.push('\n');
    }
    formats::write_text(&out.join("index.txt"), &index)?;
    cfg.write_resolved(out)?;
    Ok(())
}

// ------------------------------------------------------------ training

fn finish_training<M>(
    out: &Path,
    cfg: &RunConfig,
    term_names: &[&str],
    history: &[(usize, f64, Vec<f64>)],
    diverged: Option<String>,
    save: impl FnOnce(&Path) -> Result<()>,
    checkpoint_name: &str,
) -> Result<()>
where
    M: Sized,
{
    write_history_csv(&out.join("history.csv"), term_names, history)?;
    save(&out.join(checkpoint_name))?;
    cfg.write_resolved(out)?;
    if let Some(msg) = diverged {
        return Err(anyhow::Error::new(Diverged(msg)));
    }
    Ok(())
}

pub fn cmd_train_teacher(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ds = read_dataset(&PathBuf::from(cfg.str("data")?))?;
    let held_out: i64 = cfg.parse("held_out")?;
    let indices = train_indices(&ds, held_out);
    let weights = TeacherLossWeights {
        beta: cfg.parse("beta")?,
        w1: cfg.parse("w1")?,
        w2: cfg.parse("w2")?,
        w3: cfg.parse("w3")?,
        w4: cfg.parse("w4")?,
    };
    let tc = train_config(cfg)?;
    fs::create_dir_all(out)?;
    let outcome = train_teacher::<f32>(&ds, &indices, &weights, &tc)
        .map_err(|e| anyhow::anyhow!("teacher training: {e}"))?;
    finish_training::<TeacherModel<f32>>(
        out,
        cfg,
        &["kl", "rimg", "cimg", "depth", "center"],
        &outcome.history,
        outcome.diverged,
        |p| save_teacher(p, &outcome.model),
        "teacher.widp",
    )
}

pub fn cmd_train_student(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ds = read_dataset(&PathBuf::from(cfg.str("data")?))?;
    let teacher_path = PathBuf::from(cfg.str("teacher")?);
    let teacher = load_teacher(&teacher_path)?;
    let hash_before = formats::file_sha256(&teacher_path)?;
    let held_out: i64 = cfg.parse("held_out")?;
    let indices = train_indices(&ds, held_out);
    let weights = StudentLossWeights {
        w5: cfg.parse("w5")?,
        w6: cfg.parse("w6")?,
        w7: cfg.parse("w7")?,
        alpha: cfg.parse("alpha")?,
        w2p: cfg.parse("w2p")?,
        w3p: cfg.parse("w3p")?,
        w4p: cfg.parse("w4p")?,
    };
    let tc = train_config(cfg)?;
    fs::create_dir_all(out)?;
    let outcome = train_student::<f32>(&ds, &indices, &teacher, &weights, &tc)
        .map_err(|e| anyhow::anyhow!("student training: {e}"))?;
    // freeze contract: the teacher checkpoint on disk must be untouched
    let hash_after = formats::file_sha256(&teacher_path)?;
    if hash_before != hash_after {
        bail!("teacher checkpoint changed during student training");
    }
    formats::write_text(&out.join("teacher.sha256"), &format!("{hash_after}\n"))?;
    finish_training::<StudentModel<f32>>(
        out,
        cfg,
        &["feature", "latent", "gt_mask", "gt_depth", "gt_center"],
        &outcome.history,
        outcome.diverged,
        |p| save_student(p, &outcome.model, &teacher.cfg),
        "student.widp",
    )
}

pub fn cmd_train_baseline(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ds = read_dataset(&PathBuf::from(cfg.str("data")?))?;
    let held_out: i64 = cfg.parse("held_out")?;
    let indices = train_indices(&ds, held_out);
    let beta: f64 = cfg.parse("beta")?;
    let tc = train_config(cfg)?;
    let tcfg = TeacherConfig::default();
    fs::create_dir_all(out)?;
    let outcome = train_baseline_e2e::<f32>(&ds, &indices, &tcfg, beta, &tc)
        .map_err(|e| anyhow::anyhow!("baseline training: {e}"))?;
    finish_training::<BaselineModel<f32>>(
        out,
        cfg,
        &["kl", "rec"],
        &outcome.history,
        outcome.diverged,
        |p| save_baseline(p, &outcome.model, &tcfg),
        "baseline.widp",
    )
}

// ------------------------------------------------------------ evaluate

/// Score a model chain on one held-out subject; writes `report.csv`.
pub fn cmd_evaluate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ds = read_dataset(&PathBuf::from(cfg.str("data")?))?;
    let held_out: i64 = cfg.parse("held_out")?;
    if held_out < 0 {
        bail!("`held_out` must name the test subject");
    }
    let (_, test) = data::loso_split(&ds, held_out as u32);
    if test.is_empty() {
        bail!("no samples for held-out subject {held_out}");
    }
    let baseline_path = cfg.str("baseline")?;
    let mut report = EvalReport::new(cfg.str("split")?.to_string());
    if baseline_path.is_empty() {
        let teacher = load_teacher(&PathBuf::from(cfg.str("teacher")?))?;
        let student = load_student(&PathBuf::from(cfg.str("student")?))?;
        for &i in &test {
            let s = &ds.samples[i];
            let (csi_t, phase_t) = student::sample_inputs::<f32>(s);
            let inf = infer_depth(&student, &teacher, &csi_t, &phase_t)
                .map_err(|e| anyhow::anyhow!("inference on {}: {e}", s.id))?;
            let scores = score_pair(&inf.image, &s.image)
                .map_err(|e| anyhow::anyhow!("scoring {}: {e}", s.id))?;
            report.push(s.id.clone(), scores);
        }
    } else {
        let baseline = load_baseline(&PathBuf::from(baseline_path))?;
        for &i in &test {
            let s = &ds.samples[i];
            let (csi_t, phase_t) = student::sample_inputs::<f32>(s);
            let est = baseline
                .infer(&csi_t, &phase_t)
                .map_err(|e| anyhow::anyhow!("inference on {}: {e}", s.id))?;
            let scores = score_pair(&est, &s.image)
                .map_err(|e| anyhow::anyhow!("scoring {}: {e}", s.id))?;
            report.push(s.id.clone(), scores);
        }
    }
    fs::create_dir_all(out)?;
    write_report_csv(&out.join("report.csv"), &report)?;
    cfg.write_resolved(out)?;
    Ok(())
}

// ------------------------------------------------------------ infer

/// Emit per-sample 8-bit PGM depth images plus a components CSV.
pub fn cmd_infer(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ds = read_dataset(&PathBuf::from(cfg.str("data")?))?;
    let teacher = load_teacher(&PathBuf::from(cfg.str("teacher")?))?;
    let student = load_student(&PathBuf::from(cfg.str("student")?))?;
    let ids: Vec<&str> = cfg
        .str("ids")?
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect();
    fs::create_dir_all(out.join("images"))?;
    let mut csv = String::from("sample_id,center_x,center_y,avg_depth\n");
    let mut emitted = 0;
    for s in &ds.samples {
        if !ids.is_empty() && !ids.contains(&s.id.as_str()) {
            continue;
        }
        let (csi_t, phase_t) = student::sample_inputs::<f32>(s);
        let inf = infer_depth(&student, &teacher, &csi_t, &phase_t)
            .map_err(|e| anyhow::anyhow!("inference on {}: {e}", s.id))?;
        let (h, w) = (inf.image.shape()[1], inf.image.shape()[2]);
        write_pgm8(&out.join(format!("images/{}.pgm", s.id)), w, h, inf.image.data())?;
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            s.id, inf.center.0, inf.center.1, inf.avg_depth
        ));
        emitted += 1;
    }
    if emitted == 0 {
        bail!("no samples matched the requested ids");
    }
    formats::write_text(&out.join("components.csv"), &csv)?;
    cfg.write_resolved(out)?;
    Ok(())
}

// ------------------------------------------------------------ gradcheck

/// Finite-difference verification table over every layer kind, the loss
/// functions, and both composite model losses.
pub fn gradcheck_rows() -> Vec<(String, f64)> {
    let mut rows = widepth_core::nn::gradcheck::layer_kind_reports();
    rows.push(("teacher-composite".to_string(), teacher::composite_fd_max_rel_err()));
    rows.push(("student-composite".to_string(), student::composite_fd_max_rel_err()));
    rows
}

pub fn cmd_gradcheck(cfg: &RunConfig, out: &Path) -> Result<()> {
    let threshold: f64 = cfg.parse("threshold")?;
    let rows = gradcheck_rows();
    let mut table = String::from("check,max_rel_err,status\n");
    let mut failures = 0;
    for (name, err) in &rows {
        let ok = *err < threshold;
        if !ok {
            failures += 1;
        }
        let line = format!("{name},{err:.3e},{}", if ok { "pass" } else { "FAIL" });
        println!("{line}");
        table.push_str(&line);
        table.push('\n');
    }
    fs::create_dir_all(out)?;
    formats::write_text(&out.join("gradcheck.csv"), &table)?;
    cfg.write_resolved(out)?;
    if failures > 0 {
        bail!("{failures} gradient check(s) exceeded {threshold}");
    }
    Ok(())
}

/// Tensor helper shared by tests: (2, h, w) -> flattened norm image data.
pub fn normalized_image_data(t: &Tensor<f32>) -> &[f32] {
    t.data()
}
