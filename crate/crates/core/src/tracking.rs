//! Sequence-level dynamic programming over per-frame pose candidates with a
//! resampled, bi-arc-interpolated temporal smoothness term.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmp::PoseCandidate;
use crate::geom::Point2;
use crate::real::Real;
use crate::shape::{axis_biarc, Biarc, ShapeError};

#[derive(Debug, Error)]
pub enum TrackingError {
    #[error("frame {0} has no candidates")]
    EmptyFrame(usize),
    #[error("resampling needs at least 2 points")]
    TooFewPoints,
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Body axis resampled to `n` points at uniform arc length.
#[derive(Debug, Clone)]
pub struct ResampledPose<T> {
    pub points: Vec<Point2<T>>,
    pub spacing: T,
}

/// An optimal pose sequence: per-frame candidate choices and the chosen poses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackPath<T> {
    pub choices: Vec<usize>,
    pub poses: Vec<PoseCandidate<T>>,
    pub total_score: T,
}

/// Piecewise curve with arc-length lookup.
struct PiecewiseCurve<T> {
    segments: Vec<(T, Biarc<T>)>,
    total: T,
}

impl<T: Real> PiecewiseCurve<T> {
    fn point_at(&self, s: T) -> Point2<T> {
        let s = s.min(self.total).max(T::zero());
        let mut chosen = &self.segments[self.segments.len() - 1];
        for seg in &self.segments {
            if s <= seg.0 + seg.1.length() {
                chosen = seg;
                break;
            }
        }
        chosen.1.point_at(s - chosen.0)
    }
}

/// Resample the body axis of a pose at `n` uniform arc-length stations.
///
/// Poses carrying full shape states use the concatenated medial-axis bi-arcs
/// of consecutive parts (by part index); stage-1 poses without states fall
/// back to the straight polyline through the part centers.
pub fn resample_pose<T: Real>(
    pose: &PoseCandidate<T>,
    n: usize,
) -> Result<ResampledPose<T>, TrackingError> {
    if n < 2 {
        return Err(TrackingError::TooFewPoints);
    }
    let curve: PiecewiseCurve<T> = match &pose.states {
        Some(states) => {
            let mut segments = Vec::with_capacity(states.len() - 1);
            let mut acc = T::zero();
            for w in states.windows(2) {
                let b = axis_biarc(&w[0], &w[1])?;
                let len = b.length();
                segments.push((acc, b));
                acc += len;
            }
            PiecewiseCurve { segments, total: acc }
        }
        None => {
            let mut segments = Vec::with_capacity(pose.parts.len() - 1);
            let mut acc = T::zero();
            for w in pose.parts.windows(2) {
                let p0 = Point2::new(w[0].x, w[0].y);
                let p1 = Point2::new(w[1].x, w[1].y);
                let dir = p1.sub(p0).angle();
                let b = crate::shape::biarc(p0, dir, p1, dir)?;
                let len = b.length();
                segments.push((acc, b));
                acc += len;
            }
            PiecewiseCurve { segments, total: acc }
        }
    };
    let total = curve.total;
    let points = (0..n)
        .map(|k| curve.point_at(total * T::of_usize(k) / T::of_usize(n - 1)))
        .collect();
    Ok(ResampledPose { points, spacing: total / T::of_usize(n - 1) })
}

fn neg_ssd<T: Real>(a: &ResampledPose<T>, b: &ResampledPose<T>) -> T {
    let mut acc = T::zero();
    for (pa, pb) in a.points.iter().zip(b.points.iter()) {
        let d = pa.sub(*pb);
        acc += d.dot(d);
    }
    -acc
}

fn neg_ssd_reversed<T: Real>(a: &ResampledPose<T>, b: &ResampledPose<T>) -> T {
    let mut acc = T::zero();
    for (pa, pb) in a.points.iter().zip(b.points.iter().rev()) {
        let d = pa.sub(*pb);
        acc += d.dot(d);
    }
    -acc
}

/// Negated sum of squared distances over `n` resampled corresponding points;
/// zero for identical poses, more negative the further apart they are.
pub fn pairwise_smoothness<T: Real>(
    a: &PoseCandidate<T>,
    b: &PoseCandidate<T>,
    n: usize,
) -> Result<T, TrackingError> {
    let ra = resample_pose(a, n)?;
    let rb = resample_pose(b, n)?;
    Ok(neg_ssd(&ra, &rb))
}

/// Flip-tolerant variant: the better of the forward and reversed point
/// correspondences, for bodies whose head/tail identity may swap.
pub fn pairwise_smoothness_flip_tolerant<T: Real>(
    a: &PoseCandidate<T>,
    b: &PoseCandidate<T>,
    n: usize,
) -> Result<T, TrackingError> {
    let ra = resample_pose(a, n)?;
    let rb = resample_pose(b, n)?;
    Ok(neg_ssd(&ra, &rb).max(neg_ssd_reversed(&ra, &rb)))
}

/// Exact maximizer of
/// `sum_t score(Z_t) + gamma * sum_t smoothness(Z_{t-1}, Z_t)`
/// over all per-frame candidate choices, by chain dynamic programming.
/// Ties resolve to the smallest candidate index.
pub fn track<T: Real>(
    candidates: &[Vec<PoseCandidate<T>>],
    gamma: T,
    n: usize,
    flip_tolerant: bool,
) -> Result<TrackPath<T>, TrackingError> {
    assert!(gamma >= T::zero(), "gamma must be >= 0");
    for (t, frame) in candidates.iter().enumerate() {
        if frame.is_empty() {
            return Err(TrackingError::EmptyFrame(t));
        }
    }
    let frames = candidates.len();
    // Resample every candidate once.
    let resampled: Vec<Vec<ResampledPose<T>>> = candidates
        .iter()
        .map(|frame| frame.iter().map(|c| resample_pose(c, n)).collect::<Result<_, _>>())
        .collect::<Result<_, _>>()?;

    let mut dp: Vec<T> = candidates[0].iter().map(|c| c.score).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(frames);
    for t in 1..frames {
        let prev = &resampled[t - 1];
        let cur = &resampled[t];
        // Transition table, parallel over current candidates.
        let step: Vec<(T, usize)> = cur
            .par_iter()
            .map(|rc| {
                let mut best = (T::neg_infinity(), 0usize);
                for (i, rp) in prev.iter().enumerate() {
                    let s = if flip_tolerant {
                        neg_ssd(rp, rc).max(neg_ssd_reversed(rp, rc))
                    } else {
                        neg_ssd(rp, rc)
                    };
                    let v = dp[i] + gamma * s;
                    if v > best.0 {
                        best = (v, i);
                    }
                }
                best
            })
            .collect();
        dp = step
            .iter()
            .zip(candidates[t].iter())
            .map(|(&(v, _), c)| v + c.score)
            .collect();
        back.push(step.iter().map(|&(_, i)| i).collect());
    }
    let mut best = (T::neg_infinity(), 0usize);
    for (j, &v) in dp.iter().enumerate() {
        if v > best.0 {
            best = (v, j);
        }
    }
    let mut choices = vec![0usize; frames];
    choices[frames - 1] = best.1;
    for t in (1..frames).rev() {
        choices[t - 1] = back[t - 1][choices[t]];
    }
    let poses = choices.iter().zip(candidates.iter()).map(|(&j, f)| f[j].clone()).collect();
    Ok(TrackPath { choices, poses, total_score: best.0 })
}

/// Recompute the tracking objective of a chosen sequence (used to check the
/// stored total).
pub fn path_objective<T: Real>(
    path: &TrackPath<T>,
    gamma: T,
    n: usize,
    flip_tolerant: bool,
) -> Result<T, TrackingError> {
    let mut total = T::zero();
    for p in &path.poses {
        total += p.score;
    }
    for w in path.poses.windows(2) {
        let s = if flip_tolerant {
            pairwise_smoothness_flip_tolerant(&w[0], &w[1], n)?
        } else {
            pairwise_smoothness(&w[0], &w[1], n)?
        };
        total += gamma * s;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fmp::PartLocation;
    use crate::shape::PartState;

    fn pose_from_axis(points: &[(f64, f64)], score: f64) -> PoseCandidate<f64> {
        let states: Vec<PartState<f64>> = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                // Axis direction from the local chain segment.
                let (nx, ny) = if i + 1 < points.len() { points[i + 1] } else { points[i - 1] };
                let theta = (ny - y).atan2(nx - x);
                PartState::new(x, y, 2.0, theta, 0.0, 0)
            })
            .collect();
        let parts = points
            .iter()
            .enumerate()
            .map(|(part, &(x, y))| PartLocation { part, level: 0, cx: 0, cy: 0, tau: 0, x, y })
            .collect();
        PoseCandidate { parts, states: Some(states), score }
    }

    #[test]
    fn straight_pose_uniform_spacing() {
        let pose = pose_from_axis(&[(0.0, 0.0), (40.0, 0.0), (80.0, 0.0)], 0.0);
        let r = resample_pose(&pose, 9).unwrap();
        assert_eq!(r.points.len(), 9);
        assert!((r.spacing - 10.0).abs() < 1e-9);
        for (k, p) in r.points.iter().enumerate() {
            assert!((p.x - 10.0 * k as f64).abs() < 1e-9);
            assert!(p.y.abs() < 1e-9);
        }
    }

    #[test]
    fn two_points_are_endpoints() {
        let pose = pose_from_axis(&[(1.0, 2.0), (11.0, 6.0), (25.0, 3.0)], 0.0);
        let r = resample_pose(&pose, 2).unwrap();
        assert!((r.points[0].x - 1.0).abs() < 0.5 && (r.points[0].y - 2.0).abs() < 0.5);
        assert!((r.points[1].x - 25.0).abs() < 0.5 && (r.points[1].y - 3.0).abs() < 0.5);
    }

    #[test]
    fn quarter_circle_spacing() {
        // Five states on a quarter circle of radius 20 centered at the origin.
        let radius = 20.0f64;
        let pts: Vec<(f64, f64)> = (0..5)
            .map(|i| {
                let a = std::f64::consts::FRAC_PI_2 * i as f64 / 4.0;
                (radius * a.cos(), radius * a.sin())
            })
            .collect();
        let states: Vec<PartState<f64>> = pts
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                let a = std::f64::consts::FRAC_PI_2 * i as f64 / 4.0;
                // Circle tangent.
                PartState::new(x, y, 2.0, a + std::f64::consts::FRAC_PI_2, 0.0, 0)
            })
            .collect();
        let parts = pts
            .iter()
            .enumerate()
            .map(|(part, &(x, y))| PartLocation { part, level: 0, cx: 0, cy: 0, tau: 0, x, y })
            .collect();
        let pose = PoseCandidate { parts, states: Some(states), score: 0.0 };
        let r = resample_pose(&pose, 5).unwrap();
        let expect = std::f64::consts::PI * radius / 8.0;
        assert!(
            (r.spacing - expect).abs() / expect < 0.01,
            "spacing {} vs {expect}",
            r.spacing
        );
        // All resampled points on the circle.
        for p in &r.points {
            assert!((p.norm() - radius).abs() < 1e-6);
        }
    }

    #[test]
    fn smoothness_basics() {
        let a = pose_from_axis(&[(0.0, 0.0), (20.0, 0.0), (40.0, 0.0)], 0.0);
        assert_eq!(pairwise_smoothness(&a, &a, 7).unwrap(), 0.0);
        let b = pose_from_axis(&[(3.0, 4.0), (23.0, 4.0), (43.0, 4.0)], 0.0);
        let n = 7;
        let s = pairwise_smoothness(&a, &b, n).unwrap();
        assert!((s + 25.0 * n as f64).abs() < 1e-9, "translated smoothness {s}");
        // Symmetry.
        assert_eq!(s, pairwise_smoothness(&b, &a, n).unwrap());
    }

    #[test]
    fn smoothness_rigid_invariant() {
        let a = pose_from_axis(&[(0.0, 0.0), (15.0, 5.0), (30.0, 0.0)], 0.0);
        let b = pose_from_axis(&[(1.0, 1.0), (16.0, 7.0), (31.0, 2.0)], 0.0);
        let s0 = pairwise_smoothness(&a, &b, 9).unwrap();
        let rot = 0.6f64;
        let xf = |pts: &[(f64, f64)]| -> Vec<(f64, f64)> {
            pts.iter()
                .map(|&(x, y)| {
                    let p = Point2::new(x, y).rotate(rot).add(Point2::new(5.0, -3.0));
                    (p.x, p.y)
                })
                .collect()
        };
        let ar = pose_from_axis(&xf(&[(0.0, 0.0), (15.0, 5.0), (30.0, 0.0)]), 0.0);
        let br = pose_from_axis(&xf(&[(1.0, 1.0), (16.0, 7.0), (31.0, 2.0)]), 0.0);
        let s1 = pairwise_smoothness(&ar, &br, 9).unwrap();
        assert!((s0 - s1).abs() < 1e-6 * s0.abs().max(1.0), "{s0} vs {s1}");
    }

    #[test]
    fn flip_tolerant_handles_reversal() {
        let a = pose_from_axis(&[(0.0, 0.0), (20.0, 0.0), (40.0, 0.0)], 0.0);
        let rev = pose_from_axis(&[(40.0, 0.0), (20.0, 0.0), (0.0, 0.0)], 0.0);
        let plain = pairwise_smoothness(&a, &rev, 5).unwrap();
        let flip = pairwise_smoothness_flip_tolerant(&a, &rev, 5).unwrap();
        assert!(plain < -100.0);
        assert!(flip.abs() < 1e-9);
    }

    #[test]
    fn gamma_zero_is_per_frame_argmax() {
        let frames: Vec<Vec<PoseCandidate<f64>>> = (0..4)
            .map(|t| {
                (0..3)
                    .map(|j| {
                        pose_from_axis(
                            &[(j as f64 * 10.0, t as f64), (j as f64 * 10.0 + 10.0, t as f64)],
                            ((t + 2) * (j + 1) % 5) as f64,
                        )
                    })
                    .collect()
            })
            .collect();
        let path = track(&frames, 0.0, 4, false).unwrap();
        for (t, &j) in path.choices.iter().enumerate() {
            let best = frames[t]
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.score.partial_cmp(&b.1.score).unwrap().then(b.0.cmp(&a.0)))
                .unwrap()
                .0;
            assert_eq!(j, best, "frame {t}");
        }
    }

    #[test]
    fn matches_brute_force_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let frames: Vec<Vec<PoseCandidate<f64>>> = (0..4)
                .map(|_| {
                    (0..3)
                        .map(|_| {
                            let x0: f64 = rng.random_range(0.0..30.0);
                            let y0: f64 = rng.random_range(0.0..30.0);
                            pose_from_axis(
                                &[(x0, y0), (x0 + 12.0, y0 + rng.random_range(-4.0..4.0))],
                                rng.random_range(-2.0..2.0),
                            )
                        })
                        .collect()
                })
                .collect();
            let gamma = rng.random_range(0.0..0.05);
            let n = 5;
            let path = track(&frames, gamma, n, false).unwrap();
            // Enumerate all 81 paths.
            let mut best = (f64::NEG_INFINITY, vec![0usize; 4]);
            for a in 0..3 {
                for b in 0..3 {
                    for c in 0..3 {
                        for d in 0..3 {
                            let idx = [a, b, c, d];
                            let mut s = 0.0;
                            for t in 0..4 {
                                s += frames[t][idx[t]].score;
                            }
                            for t in 1..4 {
                                s += gamma
                                    * pairwise_smoothness(
                                        &frames[t - 1][idx[t - 1]],
                                        &frames[t][idx[t]],
                                        n,
                                    )
                                    .unwrap();
                            }
                            if s > best.0 {
                                best = (s, idx.to_vec());
                            }
                        }
                    }
                }
            }
            assert!((path.total_score - best.0).abs() < 1e-9, "{} vs {}", path.total_score, best.0);
            assert_eq!(path.choices, best.1);
            // Stored total equals the objective recomputed from the choices.
            let re = path_objective(&path, gamma, n, false).unwrap();
            assert!((re - path.total_score).abs() < 1e-9);
        }
    }

    #[test]
    fn large_gamma_prefers_static_candidate() {
        // Candidate 0 is identical in every frame; candidate 1 is better per
        // frame but jumps around.
        let static_pts = [(10.0, 10.0), (25.0, 10.0)];
        let frames: Vec<Vec<PoseCandidate<f64>>> = (0..5)
            .map(|t| {
                vec![
                    pose_from_axis(&static_pts, 0.0),
                    pose_from_axis(
                        &[(40.0 * (t % 2) as f64, 30.0), (40.0 * (t % 2) as f64 + 15.0, 30.0)],
                        1.0,
                    ),
                ]
            })
            .collect();
        let path = track(&frames, 1e9, 4, false).unwrap();
        assert_eq!(path.choices, vec![0; 5]);
    }

    #[test]
    fn gamma_monotone_smoothness() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(32);
        let frames: Vec<Vec<PoseCandidate<f64>>> = (0..5)
            .map(|_| {
                (0..4)
                    .map(|_| {
                        let x0: f64 = rng.random_range(0.0..40.0);
                        let y0: f64 = rng.random_range(0.0..40.0);
                        pose_from_axis(&[(x0, y0), (x0 + 10.0, y0)], rng.random_range(-1.0..1.0))
                    })
                    .collect()
            })
            .collect();
        let n = 4;
        let smooth_total = |path: &TrackPath<f64>| -> f64 {
            path.poses
                .windows(2)
                .map(|w| pairwise_smoothness(&w[0], &w[1], n).unwrap())
                .sum()
        };
        let mut last = f64::NEG_INFINITY;
        for gamma in [0.0, 0.01, 0.1, 1.0, 10.0] {
            let path = track(&frames, gamma, n, false).unwrap();
            let s = smooth_total(&path);
            assert!(s >= last - 1e-9, "smoothness decreased: {s} < {last} at gamma {gamma}");
            last = s;
        }
    }

    #[test]
    fn empty_frame_rejected() {
        let frames: Vec<Vec<PoseCandidate<f64>>> =
            vec![vec![pose_from_axis(&[(0.0, 0.0), (10.0, 0.0)], 0.0)], vec![]];
        assert!(matches!(track(&frames, 0.1, 4, false), Err(TrackingError::EmptyFrame(1))));
    }
}
