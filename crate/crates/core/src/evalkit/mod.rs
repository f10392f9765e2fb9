//! Evaluation metrics (keypoint correctness, mean/max curves over candidate
//! counts, sequence accuracy) and a synthetic deformable-body generator for
//! ground-truth-controlled experiments.

mod synth;

pub use synth::{synth_background, synth_sequence, SynthConfig, SynthGroundTruth};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmp::PoseCandidate;
use crate::imagedata::Annotation;
use crate::real::Real;
use crate::tracking::TrackPath;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction has {got} parts, ground truth has {expected}")]
    ArityError { expected: usize, got: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid configuration: {0}")]
    ConfigError(String),
}

/// Per-part correctness of one pose against one annotation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PckResult<T> {
    pub beta: T,
    pub correct: Vec<bool>,
    pub fraction: T,
}

/// Fraction of predicted keypoints within `beta * max(h, w)` of the ground
/// truth, where (h, w) is the tightest box around the ground-truth keypoints.
/// The threshold is inclusive.
pub fn pck<T: Real>(
    pred: &PoseCandidate<T>,
    gt: &Annotation<T>,
    beta: T,
) -> Result<PckResult<T>, EvalError> {
    if pred.parts.len() != gt.keypoints.len() {
        return Err(EvalError::ArityError { expected: gt.keypoints.len(), got: pred.parts.len() });
    }
    let (mut min_x, mut max_x) = (T::infinity(), T::neg_infinity());
    let (mut min_y, mut max_y) = (T::infinity(), T::neg_infinity());
    for kp in &gt.keypoints {
        min_x = min_x.min(kp[0]);
        max_x = max_x.max(kp[0]);
        min_y = min_y.min(kp[1]);
        max_y = max_y.max(kp[1]);
    }
    let threshold = beta * (max_x - min_x).max(max_y - min_y);
    let correct: Vec<bool> = pred
        .parts
        .iter()
        .zip(gt.keypoints.iter())
        .map(|(p, kp)| {
            let d = ((p.x - kp[0]) * (p.x - kp[0]) + (p.y - kp[1]) * (p.y - kp[1])).sqrt();
            d <= threshold
        })
        .collect();
    let n_correct = correct.iter().filter(|&&c| c).count();
    let fraction = T::of_usize(n_correct) / T::of_usize(correct.len());
    Ok(PckResult { beta, correct, fraction })
}

/// One point of the accuracy-vs-candidate-count curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurvePoint<T> {
    pub m: usize,
    pub mean_pck: T,
    pub max_pck: T,
    /// Set when some frame offered fewer than `m` candidates.
    pub clamped: bool,
}

/// For each candidate count `m`: the frame-averaged best PCK among the top-m
/// candidates (max) and the frame-averaged mean PCK over the top-m (mean).
pub fn mean_max_pck_curve<T: Real>(
    candidates: &[Vec<PoseCandidate<T>>],
    gts: &[Annotation<T>],
    beta: T,
    ms: &[usize],
) -> Result<Vec<CurvePoint<T>>, EvalError> {
    if candidates.len() != gts.len() {
        return Err(EvalError::InsufficientData(format!(
            "{} candidate lists vs {} annotations",
            candidates.len(),
            gts.len()
        )));
    }
    if candidates.is_empty() {
        return Err(EvalError::InsufficientData("no frames".into()));
    }
    if ms.windows(2).any(|w| w[0] >= w[1]) || ms.is_empty() || ms[0] == 0 {
        return Err(EvalError::ConfigError("M values must be positive and ascending".into()));
    }
    // Per frame, per candidate fractions (computed once).
    let mut fractions: Vec<Vec<T>> = Vec::with_capacity(candidates.len());
    for (frame, gt) in candidates.iter().zip(gts.iter()) {
        let mut fs = Vec::with_capacity(frame.len());
        for cand in frame {
            fs.push(pck(cand, gt, beta)?.fraction);
        }
        if fs.is_empty() {
            return Err(EvalError::InsufficientData("frame without candidates".into()));
        }
        fractions.push(fs);
    }
    let frames = T::of_usize(candidates.len());
    let out = ms
        .iter()
        .map(|&m| {
            let mut mean_acc = T::zero();
            let mut max_acc = T::zero();
            let mut clamped = false;
            for fs in &fractions {
                let take = m.min(fs.len());
                if take < m {
                    clamped = true;
                }
                let top = &fs[..take];
                let max = top.iter().cloned().fold(T::neg_infinity(), T::max);
                let mean = top.iter().cloned().sum::<T>() / T::of_usize(take);
                max_acc += max;
                mean_acc += mean;
            }
            CurvePoint { m, mean_pck: mean_acc / frames, max_pck: max_acc / frames, clamped }
        })
        .collect();
    Ok(out)
}

/// Mean PCK of a tracked sequence over the annotated frames (annotations may
/// cover a subset of frames).
pub fn sequence_pck<T: Real>(
    path: &TrackPath<T>,
    gts: &[Annotation<T>],
    beta: T,
) -> Result<T, EvalError> {
    let usable: Vec<&Annotation<T>> =
        gts.iter().filter(|a| a.frame < path.poses.len()).collect();
    if usable.is_empty() {
        return Err(EvalError::InsufficientData("no annotated frames in range".into()));
    }
    let mut acc = T::zero();
    for ann in &usable {
        acc += pck(&path.poses[ann.frame], ann, beta)?.fraction;
    }
    Ok(acc / T::of_usize(usable.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fmp::PartLocation;

    fn pose_at(points: &[(f64, f64)]) -> PoseCandidate<f64> {
        let parts = points
            .iter()
            .enumerate()
            .map(|(part, &(x, y))| PartLocation { part, level: 0, cx: 0, cy: 0, tau: 0, x, y })
            .collect();
        PoseCandidate { parts, states: None, score: 0.0 }
    }

    fn ann(frame: usize, points: &[(f64, f64)]) -> Annotation<f64> {
        Annotation { frame, keypoints: points.iter().map(|&(x, y)| [x, y]).collect(), radii: None }
    }

    #[test]
    fn exact_match_is_one() {
        let pts = [(0.0, 0.0), (50.0, 10.0), (100.0, 50.0)];
        let r = pck(&pose_at(&pts), &ann(0, &pts), 0.1).unwrap();
        assert_eq!(r.fraction, 1.0);
        assert!(r.correct.iter().all(|&c| c));
    }

    /// Box 100x50, beta 0.1 -> threshold 10, boundary inclusive.
    #[test]
    fn boundary_inclusive_threshold() {
        let gt_pts = [(0.0, 0.0), (100.0, 50.0)];
        let on = pose_at(&[(10.0, 0.0), (100.0, 50.0)]);
        let r = pck(&on, &ann(0, &gt_pts), 0.1).unwrap();
        assert!(r.correct[0], "exactly at threshold counts");
        let off = pose_at(&[(10.01, 0.0), (100.0, 50.0)]);
        let r = pck(&off, &ann(0, &gt_pts), 0.1).unwrap();
        assert!(!r.correct[0], "just past threshold fails");
        assert_eq!(r.fraction, 0.5);
    }

    #[test]
    fn all_wrong_is_zero() {
        let gt_pts = [(0.0, 0.0), (100.0, 50.0)];
        let far = pose_at(&[(50.0, 200.0), (200.0, 200.0)]);
        assert_eq!(pck(&far, &ann(0, &gt_pts), 0.1).unwrap().fraction, 0.0);
    }

    #[test]
    fn arity_mismatch_rejected() {
        let r = pck(&pose_at(&[(0.0, 0.0)]), &ann(0, &[(0.0, 0.0), (1.0, 1.0)]), 0.1);
        assert!(matches!(r, Err(EvalError::ArityError { expected: 2, got: 1 })));
    }

    #[test]
    fn pck_translation_invariant() {
        let gt_pts = [(5.0, 5.0), (60.0, 30.0), (90.0, 80.0)];
        let pr_pts = [(6.0, 5.0), (62.0, 31.0), (150.0, 80.0)];
        let base = pck(&pose_at(&pr_pts), &ann(0, &gt_pts), 0.1).unwrap();
        let shift =
            |pts: &[(f64, f64)]| -> Vec<(f64, f64)> { pts.iter().map(|&(x, y)| (x + 37.0, y - 11.0)).collect() };
        let moved = pck(&pose_at(&shift(&pr_pts)), &ann(0, &shift(&gt_pts)), 0.1).unwrap();
        assert_eq!(base.correct, moved.correct);
    }

    #[test]
    fn curve_m1_identity_and_monotonicity() {
        let gt = vec![ann(0, &[(0.0, 0.0), (100.0, 0.0)]), ann(1, &[(0.0, 0.0), (100.0, 0.0)])];
        let frames = vec![
            vec![
                pose_at(&[(0.0, 0.0), (100.0, 0.0)]),
                pose_at(&[(0.0, 0.0), (50.0, 50.0)]),
                pose_at(&[(90.0, 90.0), (50.0, 50.0)]),
            ],
            vec![
                pose_at(&[(40.0, 40.0), (100.0, 0.0)]),
                pose_at(&[(0.0, 0.0), (100.0, 0.0)]),
                pose_at(&[(90.0, 90.0), (50.0, 50.0)]),
            ],
        ];
        let curve = mean_max_pck_curve(&frames, &gt, 0.1, &[1, 2, 3]).unwrap();
        assert_eq!(curve[0].mean_pck, curve[0].max_pck, "M=1 identity");
        for w in curve.windows(2) {
            assert!(w[1].max_pck >= w[0].max_pck, "maxPCK non-decreasing");
        }
        assert!(!curve[2].clamped);
        // Hand-computed: frame fractions per candidate are
        // f0: [1.0, 0.5, 0.0], f1: [0.5, 1.0, 0.0].
        // M=2: max = (1.0 + 1.0)/2 = 1.0; mean = (0.75 + 0.75)/2 = 0.75.
        assert!((curve[1].max_pck - 1.0).abs() < 1e-12);
        assert!((curve[1].mean_pck - 0.75).abs() < 1e-12);
        // Clamping flagged when M exceeds the lists.
        let over = mean_max_pck_curve(&frames, &gt, 0.1, &[5]).unwrap();
        assert!(over[0].clamped);
    }

    #[test]
    fn sequence_pck_cases() {
        let mk_path = |poses: Vec<PoseCandidate<f64>>| TrackPath {
            choices: vec![0; poses.len()],
            poses,
            total_score: 0.0,
        };
        let gt_pts = [(0.0, 0.0), (100.0, 0.0)];
        // Perfect track annotated every other frame.
        let path = mk_path(vec![pose_at(&gt_pts); 4]);
        let gts = vec![ann(0, &gt_pts), ann(2, &gt_pts)];
        assert_eq!(sequence_pck(&path, &gts, 0.1).unwrap(), 1.0);
        // Half the annotated frames fully wrong.
        let path = mk_path(vec![
            pose_at(&gt_pts),
            pose_at(&gt_pts),
            pose_at(&[(50.0, 90.0), (50.0, 90.0)]),
            pose_at(&gt_pts),
        ]);
        assert_eq!(sequence_pck(&path, &gts, 0.1).unwrap(), 0.5);
        // Three-annotation toy: fractions 1.0, 0.5, 0.0 -> mean 0.5.
        let path = mk_path(vec![
            pose_at(&gt_pts),
            pose_at(&[(0.0, 0.0), (50.0, 50.0)]),
            pose_at(&[(50.0, 90.0), (50.0, 90.0)]),
        ]);
        let gts = vec![ann(0, &gt_pts), ann(1, &gt_pts), ann(2, &gt_pts)];
        assert!((sequence_pck(&path, &gts, 0.1).unwrap() - 0.5).abs() < 1e-12);
        // No annotations in range.
        let gts = vec![ann(7, &gt_pts)];
        assert!(matches!(
            sequence_pck(&path, &gts, 0.1),
            Err(EvalError::InsufficientData(_))
        ));
    }
}
