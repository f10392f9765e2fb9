//! Subcommand implementations.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use flexpose::evalkit::{mean_max_pck_curve, sequence_pck, synth_sequence};
use flexpose::fmp::{unary_maps, PartLocation, PoseCandidate};
use flexpose::imagedata::{
    load_frames, parse_annotations, save_png, serialize_annotations, AnnotationSet, Dataset,
    SequenceAnnotations,
};
use flexpose::learning::{frame_features, train as train_model};
use flexpose::model_io::{load_model, save_model};
use flexpose::scfmp::cascade;
use flexpose::tracking::{track as track_sequence, TrackPath};
use flexpose::{Annotation, Image, RunConfig, Scalar, ScfmpModel};

use crate::io::{
    candidate_out, read_json, write_json, write_manifest, CandidateOut, DetectOutput,
    FrameDetections, TrackFrameOut,
};
use crate::overlay::Overlay;
use crate::CliError;

fn data_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

pub fn synth(cfg: &RunConfig, out_dir: &Path, started: Instant) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(data_err)?;
    let synth_cfg = cfg.synth_config();
    let (seq, annotations, _gt) = synth_sequence(&synth_cfg).map_err(data_err)?;
    for (i, frame) in seq.frames.iter().enumerate() {
        save_png(frame, out_dir.join(format!("frame_{i:04}.png"))).map_err(data_err)?;
    }
    let set = AnnotationSet {
        part_count: synth_cfg.part_count,
        sequences: vec![SequenceAnnotations { dir: ".".into(), annotations }],
    };
    std::fs::write(out_dir.join("annotations.json"), serialize_annotations(&set))
        .map_err(data_err)?;
    if cfg.synth_backgrounds > 0 {
        let bg_dir = out_dir.join("backgrounds");
        std::fs::create_dir_all(&bg_dir).map_err(data_err)?;
        for i in 0..cfg.synth_backgrounds {
            let img: Image = flexpose::evalkit::synth_background(
                cfg.synth_width,
                cfg.synth_height,
                10,
                cfg.seed ^ 0x6267 ^ i as u64,
            );
            save_png(&img, bg_dir.join(format!("bg_{i:04}.png"))).map_err(data_err)?;
        }
    }
    write_manifest("synth", cfg, out_dir, started)?;
    println!("wrote {} frames to {}", seq.frames.len(), out_dir.display());
    Ok(())
}

pub fn train(
    cfg: &RunConfig,
    data_path: &Path,
    backgrounds_dir: &Path,
    model_path: &Path,
    started: Instant,
) -> Result<(), CliError> {
    let set: AnnotationSet<Scalar> = parse_annotations(data_path).map_err(data_err)?;
    let base = data_path.parent().unwrap_or(Path::new("."));
    let mut sequences = Vec::new();
    for seq in &set.sequences {
        sequences.push(load_frames::<Scalar>(base.join(&seq.dir), "*.png").map_err(data_err)?);
    }
    let dataset = Dataset::assemble(&set, sequences).map_err(data_err)?;
    let backgrounds = load_frames::<Scalar>(backgrounds_dir, "*.png").map_err(data_err)?.frames;
    let model = train_model(&dataset, &backgrounds, cfg).map_err(data_err)?;
    save_model(&model, model_path).map_err(data_err)?;
    write_manifest("train", cfg, model_path, started)?;
    println!(
        "trained {} parts x {} types on {} sequences; model at {}",
        model.fmp.parts,
        model.fmp.types,
        dataset.sequences.len(),
        model_path.display()
    );
    Ok(())
}

struct FrameResult {
    stage1: Vec<PoseCandidate<Scalar>>,
    stage2: Vec<PoseCandidate<Scalar>>,
}

fn run_cascade(
    cfg: &RunConfig,
    model: &ScfmpModel,
    frames: &[Image],
    stage2_m: usize,
) -> Result<Vec<FrameResult>, CliError> {
    frames
        .par_iter()
        .map(|frame| {
            let ff = frame_features(frame, cfg).map_err(data_err)?;
            let maps = unary_maps(&model.fmp, &ff.pyramid).map_err(data_err)?;
            let (stage1, stage2) = cascade(
                model,
                &ff.pyramid,
                &maps,
                &ff.odt,
                cfg.stage1_m,
                stage2_m,
                cfg.nms_radius,
            )
            .map_err(data_err)?;
            Ok(FrameResult { stage1, stage2 })
        })
        .collect()
}

pub fn detect(
    cfg: &RunConfig,
    model_path: &Path,
    frames_dir: &Path,
    out: &Path,
    m: Option<usize>,
    pattern: &str,
    started: Instant,
) -> Result<(), CliError> {
    let model: ScfmpModel = load_model(model_path).map_err(data_err)?;
    let seq = load_frames::<Scalar>(frames_dir, pattern).map_err(data_err)?;
    let m_out = m.unwrap_or(cfg.stage2_m).max(1);
    let results = run_cascade(cfg, &model, &seq.frames, m_out)?;
    let frames = results
        .iter()
        .enumerate()
        .map(|(i, r)| FrameDetections {
            frame: i,
            stage1: r.stage1.iter().take(m_out).map(candidate_out).collect(),
            stage2: r.stage2.iter().take(m_out).map(candidate_out).collect(),
        })
        .collect();
    let output = DetectOutput { part_count: model.fmp.parts, frames };
    write_json(&output, out)?;
    write_manifest("detect", cfg, out, started)?;
    println!("detected over {} frames -> {}", output.frames.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn track(
    cfg: &RunConfig,
    model_path: &Path,
    frames_dir: &Path,
    out: &Path,
    gamma: Option<f64>,
    pattern: &str,
    overlay_dir: Option<&Path>,
    started: Instant,
) -> Result<(), CliError> {
    let model: ScfmpModel = load_model(model_path).map_err(data_err)?;
    let seq = load_frames::<Scalar>(frames_dir, pattern).map_err(data_err)?;
    let results = run_cascade(cfg, &model, &seq.frames, cfg.stage2_m)?;
    let candidates: Vec<Vec<PoseCandidate<Scalar>>> =
        results.into_iter().map(|r| r.stage2).collect();
    let gamma = gamma.unwrap_or(cfg.gamma);
    let n = cfg.smooth_points_for(model.fmp.parts);
    let path: TrackPath<Scalar> =
        track_sequence(&candidates, gamma, n, cfg.flip_tolerant).map_err(data_err)?;
    let out_frames: Vec<TrackFrameOut> = path
        .poses
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let c = candidate_out(pose);
            TrackFrameOut { frame: i, score: c.score, parts: c.parts }
        })
        .collect();
    write_json(&out_frames, out)?;
    write_manifest("track", cfg, out, started)?;
    if let Some(dir) = overlay_dir {
        std::fs::create_dir_all(dir).map_err(data_err)?;
        for (i, (frame, pose)) in seq.frames.iter().zip(path.poses.iter()).enumerate() {
            let mut ov = Overlay::from_frame(frame);
            ov.draw(pose, 0);
            ov.save(&dir.join(format!("overlay_{i:04}.png")))?;
        }
    }
    println!(
        "tracked {} frames, total score {:.4} -> {}",
        out_frames.len(),
        path.total_score,
        out.display()
    );
    Ok(())
}

fn pose_from_candidate(c: &CandidateOut) -> PoseCandidate<Scalar> {
    let parts = c
        .parts
        .iter()
        .enumerate()
        .map(|(part, p)| PartLocation { part, level: p.level, cx: 0, cy: 0, tau: p.tau, x: p.x, y: p.y })
        .collect();
    PoseCandidate { parts, states: None, score: c.score }
}

fn pose_from_points(points: &[[Scalar; 2]]) -> PoseCandidate<Scalar> {
    let parts = points
        .iter()
        .enumerate()
        .map(|(part, p)| PartLocation { part, level: 0, cx: 0, cy: 0, tau: 0, x: p[0], y: p[1] })
        .collect();
    PoseCandidate { parts, states: None, score: 0.0 }
}

fn gt_annotations(gt_path: &Path) -> Result<Vec<Annotation>, CliError> {
    let set: AnnotationSet<Scalar> = parse_annotations(gt_path).map_err(data_err)?;
    if set.sequences.len() != 1 {
        return Err(CliError::Data(format!(
            "evaluation expects a single-sequence ground truth, found {}",
            set.sequences.len()
        )));
    }
    Ok(set.sequences[0].annotations.clone())
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    cfg: &RunConfig,
    pred_path: &Path,
    gt_path: &Path,
    out: &Path,
    beta: Option<f64>,
    ms: &str,
    stage: u8,
    started: Instant,
) -> Result<(), CliError> {
    let beta = beta.unwrap_or(cfg.pck_beta);
    let gts = gt_annotations(gt_path)?;
    if gts.is_empty() {
        return Err(CliError::Data("ground truth has no annotations".into()));
    }
    let value: serde_json::Value = read_json(pred_path)?;
    let mut csv = String::new();
    if value.is_array() {
        // Track output: sequence PCK over annotated frames.
        let frames: Vec<TrackFrameOut> = read_json(pred_path)?;
        let poses: Vec<PoseCandidate<Scalar>> = frames
            .iter()
            .map(|f| pose_from_candidate(&CandidateOut { score: f.score, parts: f.parts.clone() }))
            .collect();
        let path = TrackPath { choices: vec![0; poses.len()], poses, total_score: 0.0 };
        let s = sequence_pck(&path, &gts, beta).map_err(data_err)?;
        csv.push_str("frames,sequence_pck\n");
        csv.push_str(&format!("{},{:.6}\n", frames.len(), s));
        println!("sequence PCK@{beta} = {s:.4} over {} frames", frames.len());
    } else {
        // Detection output (or an annotation file evaluated against itself).
        let per_frame: Vec<(usize, Vec<PoseCandidate<Scalar>>)> = if value.get("frames").is_some()
        {
            let det: DetectOutput = read_json(pred_path)?;
            det.frames
                .iter()
                .map(|f| {
                    let list = if stage == 1 { &f.stage1 } else { &f.stage2 };
                    (f.frame, list.iter().map(pose_from_candidate).collect())
                })
                .collect()
        } else if value.get("part_count").is_some() {
            let set: AnnotationSet<Scalar> = parse_annotations(pred_path).map_err(data_err)?;
            if set.sequences.len() != 1 {
                return Err(CliError::Data("prediction annotations must be one sequence".into()));
            }
            set.sequences[0]
                .annotations
                .iter()
                .map(|a| (a.frame, vec![pose_from_points(&a.keypoints)]))
                .collect()
        } else {
            return Err(CliError::Data("unrecognized prediction format".into()));
        };
        // Align candidate lists with the annotated frames.
        let mut lists = Vec::new();
        let mut aligned_gts = Vec::new();
        for ann in &gts {
            match per_frame.iter().find(|(f, _)| *f == ann.frame) {
                Some((_, cands)) if !cands.is_empty() => {
                    lists.push(cands.clone());
                    aligned_gts.push(ann.clone());
                }
                _ => {
                    return Err(CliError::Data(format!(
                        "no predictions for annotated frame {}",
                        ann.frame
                    )))
                }
            }
        }
        let mut ms: Vec<usize> = ms
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Usage(format!("bad --ms list: {e}")))?;
        ms.sort_unstable();
        ms.dedup();
        let curve = mean_max_pck_curve(&lists, &aligned_gts, beta, &ms).map_err(data_err)?;
        csv.push_str("M,meanPCK,maxPCK\n");
        for pt in &curve {
            csv.push_str(&format!("{},{:.6},{:.6}\n", pt.m, pt.mean_pck, pt.max_pck));
            println!(
                "M={:<4} meanPCK={:.4} maxPCK={:.4}{}",
                pt.m,
                pt.mean_pck,
                pt.max_pck,
                if pt.clamped { " (clamped)" } else { "" }
            );
        }
    }
    std::fs::write(out, csv).map_err(data_err)?;
    write_manifest("eval", cfg, out, started)?;
    Ok(())
}
