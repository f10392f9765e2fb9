//! Parameter learning: shape-prior estimation from annotations, appearance
//! type derivation by offset clustering, hard-negative mining, and structural
//! SVM training by dual coordinate descent.
//!
//! Two margin problems are solved in alternation with mining. The stage-1
//! problem learns templates, biases and quadratic placement springs (with the
//! curvature weights projected negative); the shape problem learns templates,
//! biases, descriptor weights and the chamfer weight. The final model takes
//! its templates and biases from the shape problem and its springs from the
//! stage-1 problem.

mod gamma;
mod svm;

pub use gamma::{
    apply_fmp_beta, apply_shape_beta, gamma_fmp, gamma_shape, gamma_shape_with_states,
    pack_fmp_beta, pack_shape_beta, FmpLayout, ShapeLayout,
};
pub use svm::{dual_coordinate_descent, dual_coordinate_descent_with_targets, SvmExample, SvmSolution};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::RunConfig;
use crate::features::{
    chamfer_query, detect_edges, hog_pyramid, oriented_distance_transform, FeatureError,
    HogPyramid, OrientedDistanceTransform,
};
use crate::fmp::{infer_m_best, unary_maps, FmpError, FmpModel, PartLocation};
use crate::geom::wrap_angle;
use crate::imagedata::{Dataset, Image};
use crate::real::Real;
use crate::scfmp::{cascade, PartPrior, ScfmpError, ScfmpModel, ShapePriors};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Fmp(#[from] FmpError),
    #[error(transparent)]
    Scfmp(#[from] ScfmpError),
}

/// One labeled energy-feature vector, with the score it was harvested at.
#[derive(Debug, Clone)]
pub struct TrainingExample<T> {
    pub positive: bool,
    pub features: Vec<T>,
    pub score: T,
}

/// A margin problem for [`train_structural_svm`].
#[derive(Debug, Clone)]
pub struct SvmProblem<T> {
    pub examples: Vec<TrainingExample<T>>,
    pub c: T,
    /// Coordinates projected to <= -1e-3 after each epoch.
    pub concave_slots: Vec<usize>,
    /// Optional fixed score contribution per example (residual learning);
    /// empty means none.
    pub margin_offsets: Vec<T>,
}

const CONCAVE_BOUND: f64 = -1e-3;

/// Solve the margin problem: positives constrained above +1, negatives below
/// -1, slack penalized by `c`.
pub fn train_structural_svm<T: Real>(
    problem: &SvmProblem<T>,
    iterations: usize,
    tolerance: T,
) -> Result<SvmSolution<T>, LearnError> {
    let pos = problem.examples.iter().filter(|e| e.positive).count();
    if pos == 0 || pos == problem.examples.len() {
        return Err(LearnError::InsufficientData(
            "need at least one positive and one negative example".into(),
        ));
    }
    let examples: Vec<SvmExample<'_, T>> = problem
        .examples
        .iter()
        .map(|e| SvmExample { features: &e.features, positive: e.positive })
        .collect();
    let targets: Vec<T> = if problem.margin_offsets.is_empty() {
        vec![T::one(); examples.len()]
    } else {
        assert_eq!(problem.margin_offsets.len(), examples.len());
        problem
            .examples
            .iter()
            .zip(problem.margin_offsets.iter())
            .map(|(e, &o)| {
                let y = if e.positive { T::one() } else { -T::one() };
                T::one() - y * o
            })
            .collect()
    };
    Ok(dual_coordinate_descent_with_targets(
        &examples,
        &targets,
        problem.c,
        iterations,
        tolerance,
        &problem.concave_slots,
        T::of(CONCAVE_BOUND),
    ))
}

fn median<T: Real>(values: &mut [T]) -> T {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) * T::of(0.5)
    }
}

fn median_abs_dev<T: Real>(values: &[T], med: T) -> T {
    let mut devs: Vec<T> = values.iter().map(|&v| (v - med).abs()).collect();
    median(&mut devs)
}

/// Neighbor structure of the part tree: parent and first child per part.
fn tree_neighbors(parts: usize, edges: &[(usize, usize)]) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
    let mut parent = vec![None; parts];
    let mut first_child = vec![None; parts];
    for &(p, c) in edges {
        parent[c] = Some(p);
        if first_child[p].is_none() {
            first_child[p] = Some(c);
        }
    }
    (parent, first_child)
}

/// Estimate per-part shape priors from annotated poses.
///
/// Radii come from annotation radii when present, otherwise from the nearest
/// edge distance (minimum over orientation bins) at the keypoint. Axis
/// orientation is estimated headward along the chain; flaring from the radius
/// slope; the angle offset relates the axis estimate to the line toward the
/// parent (the root uses its first child edge), matching the binding used at
/// inference time.
pub fn learn_shape_priors<T: Real>(
    data: &Dataset<T>,
    edges: &[(usize, usize)],
) -> Result<ShapePriors<T>, LearnError> {
    let k = data.part_count;
    if k < 2 {
        return Err(LearnError::InsufficientData("need at least 2 parts".into()));
    }
    let (parent, first_child) = tree_neighbors(k, edges);
    let mut radius_samples: Vec<Vec<T>> = vec![Vec::new(); k];
    let mut flare_samples: Vec<Vec<T>> = vec![Vec::new(); k];
    let mut alpha_samples: Vec<Vec<T>> = vec![Vec::new(); k];
    let mut total = 0usize;
    for (seq, anns) in &data.sequences {
        // Edge features are only needed when an annotation lacks radii.
        let mut odt_cache: std::collections::BTreeMap<usize, OrientedDistanceTransform<T>> =
            std::collections::BTreeMap::new();
        for ann in anns {
            total += 1;
            let kp = &ann.keypoints;
            let radii: Vec<T> = match &ann.radii {
                Some(r) => r.clone(),
                None => {
                    let odt = odt_cache.entry(ann.frame).or_insert_with(|| {
                        let em = detect_edges(&seq.frames[ann.frame], T::of(0.05), T::of(0.15));
                        oriented_distance_transform(&em, 8)
                    });
                    kp.iter()
                        .map(|p| {
                            let mut best = T::infinity();
                            for b in 0..odt.bins {
                                let o = (T::of_usize(b) + T::of(0.01)) * T::PI()
                                    / T::of_usize(odt.bins);
                                best = best.min(chamfer_query(odt, p[0], p[1], o));
                            }
                            best.max(T::of(0.5))
                        })
                        .collect()
                }
            };
            for i in 0..k {
                let (hp, hc) = (parent[i], first_child[i]);
                // Headward axis estimate and radius slope from the chain.
                let (tangent, dr, ds) = match (hp, hc) {
                    (Some(p), Some(c)) => {
                        let dx = kp[p][0] - kp[c][0];
                        let dy = kp[p][1] - kp[c][1];
                        let ds = (dx * dx + dy * dy).sqrt();
                        (dy.atan2(dx), radii[p] - radii[c], ds)
                    }
                    (Some(p), None) => {
                        let dx = kp[p][0] - kp[i][0];
                        let dy = kp[p][1] - kp[i][1];
                        (dy.atan2(dx), radii[p] - radii[i], (dx * dx + dy * dy).sqrt())
                    }
                    (None, Some(c)) => {
                        let dx = kp[i][0] - kp[c][0];
                        let dy = kp[i][1] - kp[c][1];
                        (dy.atan2(dx), radii[i] - radii[c], (dx * dx + dy * dy).sqrt())
                    }
                    (None, None) => {
                        return Err(LearnError::InsufficientData(format!(
                            "part {i} is disconnected"
                        )))
                    }
                };
                // Line of the binding edge: toward the parent, or for the
                // root from its first child toward it.
                let line = match hp {
                    Some(p) => (kp[p][1] - kp[i][1]).atan2(kp[p][0] - kp[i][0]),
                    None => {
                        let c = first_child[i].expect("root has a child");
                        (kp[i][1] - kp[c][1]).atan2(kp[i][0] - kp[c][0])
                    }
                };
                radius_samples[i].push(radii[i]);
                if ds > T::zero() {
                    flare_samples[i].push((dr / ds).atan());
                }
                alpha_samples[i].push(wrap_angle(tangent - line));
            }
        }
    }
    if total < 2 {
        return Err(LearnError::InsufficientData(format!("{total} annotated poses, need >= 2")));
    }
    let parts = (0..k)
        .map(|i| {
            let r_med = median(&mut radius_samples[i]);
            let f_med = median(&mut flare_samples[i]);
            let a_med = median(&mut alpha_samples[i]);
            PartPrior {
                radius: r_med,
                radius_spread: median_abs_dev(&radius_samples[i], r_med),
                flare: f_med,
                flare_spread: median_abs_dev(&flare_samples[i], f_med),
                alpha: a_med,
                alpha_spread: median_abs_dev(&alpha_samples[i], a_med),
            }
        })
        .collect();
    Ok(ShapePriors { parts })
}

/// Per-frame image features the pipeline needs repeatedly.
pub struct FrameFeatures<T> {
    pub pyramid: HogPyramid<T>,
    pub odt: OrientedDistanceTransform<T>,
}

/// Largest pyramid depth such that the coarsest level still spans 3x3 cells.
pub fn max_levels(width: usize, height: usize, cell: usize, step: f64) -> usize {
    let mut levels = 0usize;
    let mut s = 1.0f64;
    loop {
        let w = (width as f64 * s).round() as usize / cell;
        let h = (height as f64 * s).round() as usize / cell;
        if w < 3 || h < 3 || levels >= 64 {
            break;
        }
        levels += 1;
        s *= step;
    }
    levels.max(1)
}

/// Compute the pyramid and oriented distance transform for one frame.
pub fn frame_features<T: Real>(
    image: &Image<T>,
    cfg: &RunConfig,
) -> Result<FrameFeatures<T>, LearnError> {
    let levels = cfg
        .hog_levels
        .min(max_levels(image.width(), image.height(), cfg.hog_cell, cfg.hog_scale_step));
    let pyramid = hog_pyramid(image, cfg.hog_cell, levels, T::of(cfg.hog_scale_step))?;
    let em = detect_edges(image, T::of(cfg.edge_low), T::of(cfg.edge_high));
    let odt = oriented_distance_transform(&em, cfg.odt_bins);
    Ok(FrameFeatures { pyramid, odt })
}

/// A mined configuration on one background image, with its harvest score and
/// the shape states it was scored with (when it came from the shape stage).
struct MinedConfig<T> {
    image: usize,
    parts: Vec<PartLocation<T>>,
    states: Option<Vec<crate::shape::PartState<T>>>,
    score: T,
}

/// Run the cascade over backgrounds and keep the top margin-violating
/// configurations (score > -1).
fn mine_configs_cascade<T: Real>(
    model: &ScfmpModel<T>,
    features: &[FrameFeatures<T>],
    per_image: usize,
    cfg: &RunConfig,
) -> Result<Vec<MinedConfig<T>>, LearnError> {
    let stage1_m = (5 * per_image).clamp(20, cfg.stage1_m.max(20));
    let results: Vec<Result<Vec<MinedConfig<T>>, LearnError>> = features
        .par_iter()
        .enumerate()
        .map(|(image, ff)| {
            let maps = unary_maps(&model.fmp, &ff.pyramid)?;
            let (_, stage2) = cascade(
                model,
                &ff.pyramid,
                &maps,
                &ff.odt,
                stage1_m,
                per_image,
                T::of(cfg.nms_radius),
            )?;
            Ok(stage2
                .into_iter()
                .filter(|c| c.score > -T::one())
                .map(|c| MinedConfig { image, parts: c.parts, states: c.states, score: c.score })
                .collect())
        })
        .collect();
    let mut all = Vec::new();
    for r in results {
        all.extend(r?);
    }
    Ok(all)
}

/// Stage-1 counterpart, using the part model alone.
fn mine_configs_fmp<T: Real>(
    model: &FmpModel<T>,
    features: &[FrameFeatures<T>],
    per_image: usize,
    cfg: &RunConfig,
) -> Result<Vec<MinedConfig<T>>, LearnError> {
    let results: Vec<Result<Vec<MinedConfig<T>>, LearnError>> = features
        .par_iter()
        .enumerate()
        .map(|(image, ff)| {
            let maps = unary_maps(model, &ff.pyramid)?;
            let cands = infer_m_best(model, &ff.pyramid, &maps, per_image, T::of(cfg.nms_radius))?;
            Ok(cands
                .into_iter()
                .filter(|c| c.score > -T::one())
                .map(|c| MinedConfig { image, parts: c.parts, states: None, score: c.score })
                .collect())
        })
        .collect();
    let mut all = Vec::new();
    for r in results {
        all.extend(r?);
    }
    Ok(all)
}

/// Harvest shape-stage hard negatives: run the cascade on background images
/// and keep the top configurations that violate the negative margin
/// (score > -1), as feature vectors.
pub fn mine_negatives<T: Real>(
    model: &ScfmpModel<T>,
    backgrounds: &[Image<T>],
    per_image: usize,
) -> Result<Vec<TrainingExample<T>>, LearnError> {
    mine_negatives_with(model, backgrounds, per_image, &RunConfig::default())
}

pub fn mine_negatives_with<T: Real>(
    model: &ScfmpModel<T>,
    backgrounds: &[Image<T>],
    per_image: usize,
    cfg: &RunConfig,
) -> Result<Vec<TrainingExample<T>>, LearnError> {
    let features: Vec<FrameFeatures<T>> =
        backgrounds.par_iter().map(|img| frame_features(img, cfg)).collect::<Result<_, _>>()?;
    let mined = mine_configs_cascade(model, &features, per_image, cfg)?;
    mined
        .into_iter()
        .map(|m| {
            let ff = &features[m.image];
            let states = m.states.as_ref().expect("cascade candidates carry states");
            let features =
                gamma_shape_with_states(model, &m.parts, states, &ff.pyramid, &ff.odt)?;
            Ok(TrainingExample { positive: false, features, score: m.score })
        })
        .collect()
}

/// Seeded k-means over 2D points; returns (labels, centers).
fn kmeans2(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<[f64; 2]>) {
    assert!(k >= 1 && !points.is_empty());
    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..points.len())]);
    while centers.len() < k {
        // k-means++ seeding.
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                centers
                    .iter()
                    .map(|c| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            centers.push(points[rng.random_range(0..points.len())]);
            continue;
        }
        let mut target = rng.random_range(0.0..total);
        let mut pick = 0usize;
        for (i, &d) in d2.iter().enumerate() {
            if target <= d {
                pick = i;
                break;
            }
            target -= d;
        }
        centers.push(points[pick]);
    }
    let mut labels = vec![0usize; points.len()];
    for _ in 0..50 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = (f64::INFINITY, 0usize);
            for (ci, c) in centers.iter().enumerate() {
                let d = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                if d < best.0 {
                    best = (d, ci);
                }
            }
            if labels[i] != best.1 {
                labels[i] = best.1;
                changed = true;
            }
        }
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            sums[labels[i]][0] += p[0];
            sums[labels[i]][1] += p[1];
            counts[labels[i]] += 1;
        }
        for ci in 0..k {
            if counts[ci] > 0 {
                centers[ci] = [sums[ci][0] / counts[ci] as f64, sums[ci][1] / counts[ci] as f64];
            } else {
                centers[ci] = points[rng.random_range(0..points.len())];
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (labels, centers)
}

struct Exemplar<T> {
    seq: usize,
    frame: usize,
    parts: Vec<PartLocation<T>>,
}

/// Training diagnostics: the final margin problems (positives first).
pub struct TrainReport<T> {
    pub fmp_examples: Vec<TrainingExample<T>>,
    pub shape_examples: Vec<TrainingExample<T>>,
}

/// Full training pipeline: type derivation by clustering relative offsets,
/// shape priors from annotations, then alternating hard-negative mining and
/// margin solving for the placement and shape problems.
pub fn train<T: Real>(
    data: &Dataset<T>,
    backgrounds: &[Image<T>],
    cfg: &RunConfig,
) -> Result<ScfmpModel<T>, LearnError> {
    train_with_report(data, backgrounds, cfg).map(|(model, _)| model)
}

pub fn train_with_report<T: Real>(
    data: &Dataset<T>,
    backgrounds: &[Image<T>],
    cfg: &RunConfig,
) -> Result<(ScfmpModel<T>, TrainReport<T>), LearnError> {
    let k = data.part_count;
    if k < 2 {
        return Err(LearnError::InsufficientData("need at least 2 parts".into()));
    }
    let edges: Vec<(usize, usize)> = (1..k).map(|i| (i - 1, i)).collect();
    let priors = learn_shape_priors(data, &edges)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Exemplars snapped to level-0 template placements.
    let cell = cfg.hog_cell as f64;
    let tc = cfg.template_cells;
    let mut exemplars: Vec<Exemplar<T>> = Vec::new();
    for (si, (seq, anns)) in data.sequences.iter().enumerate() {
        let gw = (seq.width() / cfg.hog_cell).saturating_sub(tc - 1);
        let gh = (seq.height() / cfg.hog_cell).saturating_sub(tc - 1);
        if gw == 0 || gh == 0 {
            return Err(LearnError::Fmp(FmpError::ImageTooSmall));
        }
        for ann in anns {
            let parts = ann
                .keypoints
                .iter()
                .enumerate()
                .map(|(part, p)| {
                    let cx = ((p[0].f64() / cell) - tc as f64 / 2.0).round().max(0.0) as usize;
                    let cy = ((p[1].f64() / cell) - tc as f64 / 2.0).round().max(0.0) as usize;
                    PartLocation {
                        part,
                        level: 0,
                        cx: cx.min(gw - 1),
                        cy: cy.min(gh - 1),
                        tau: 0,
                        x: p[0],
                        y: p[1],
                    }
                })
                .collect();
            exemplars.push(Exemplar { seq: si, frame: ann.frame, parts });
        }
    }
    if exemplars.len() < 2 {
        return Err(LearnError::InsufficientData("need >= 2 annotated poses".into()));
    }

    // Appearance types: cluster each part's offset to its parent (the root
    // uses its offset to its first child).
    let types = cfg.type_count.max(1);
    let mut anchors_by_part: Vec<Vec<[f64; 2]>> = Vec::with_capacity(k);
    for part in 0..k {
        let other = if part == 0 { 1 } else { part - 1 };
        let pts: Vec<[f64; 2]> = exemplars
            .iter()
            .map(|e| {
                [
                    e.parts[part].cx as f64 - e.parts[other].cx as f64,
                    e.parts[part].cy as f64 - e.parts[other].cy as f64,
                ]
            })
            .collect();
        let (labels, centers) = kmeans2(&pts, types, &mut rng);
        for (e, &l) in exemplars.iter_mut().zip(labels.iter()) {
            e.parts[part].tau = l;
        }
        anchors_by_part.push(centers);
    }

    // Base model: chain edges, clustered anchors per child type.
    let mut fmp: FmpModel<T> = FmpModel::zero_chain(k, types, tc);
    for e in fmp.edges.iter_mut() {
        let centers = &anchors_by_part[e.child];
        for tp in 0..types {
            for tc_ in 0..types {
                let idx = tp * types + tc_;
                e.anchors[idx] = [T::of(centers[tc_][0]), T::of(centers[tc_][1])];
                // Start concave so inference stays well formed from round 0.
                e.springs[idx] = [T::zero(), T::zero(), T::of(CONCAVE_BOUND), T::of(CONCAVE_BOUND)];
            }
        }
    }
    let mut model = ScfmpModel::zero(fmp, priors);
    model.theta_step = T::of(cfg.theta_step);
    // Descriptor anchors: per-edge component medians over the exemplars.
    {
        let dummy_pyr = crate::features::hog_pyramid(
            &data.sequences[0].0.frames[0],
            cfg.hog_cell,
            1,
            T::of(0.5),
        )?;
        let mut samples: Vec<[Vec<T>; 5]> = (0..model.fmp.edges.len())
            .map(|_| std::array::from_fn(|_| Vec::new()))
            .collect();
        for e in &exemplars {
            let states = crate::scfmp::config_states(&model, &e.parts, &dummy_pyr);
            for (ei, edge) in model.fmp.edges.iter().enumerate() {
                if states[edge.child].center() == states[edge.parent].center() {
                    continue;
                }
                let d = crate::shape::geometric_descriptor(
                    &states[edge.child],
                    &states[edge.parent],
                );
                for k in 0..5 {
                    samples[ei][k].push(d[k]);
                }
            }
        }
        for (ei, per_edge) in samples.iter_mut().enumerate() {
            for k in 0..5 {
                if !per_edge[k].is_empty() {
                    model.shape_edges[ei].desc_anchor[k] = median(&mut per_edge[k]);
                }
            }
        }
    }

    // Per-exemplar frame features (positives are reused across rounds).
    let frame_keys: Vec<(usize, usize)> = {
        let mut keys: Vec<(usize, usize)> = exemplars.iter().map(|e| (e.seq, e.frame)).collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    };
    let features: Vec<FrameFeatures<T>> = frame_keys
        .par_iter()
        .map(|&(si, fi)| frame_features(&data.sequences[si].0.frames[fi], cfg))
        .collect::<Result<_, _>>()?;
    let feature_of = |e: &Exemplar<T>| -> &FrameFeatures<T> {
        let at = frame_keys.binary_search(&(e.seq, e.frame)).unwrap();
        &features[at]
    };

    if cfg.rounds == 0 {
        return Ok((model, TrainReport { fmp_examples: Vec::new(), shape_examples: Vec::new() }));
    }

    let c = T::of(cfg.svm_c);
    let tol = T::of(cfg.tolerance);
    let iterations = 400;

    // Stage-1 problem: learn templates/biases/springs for candidate mining.
    let fmp_layout = FmpLayout::of(&model.fmp);
    let fmp_positives: Vec<TrainingExample<T>> = exemplars
        .iter()
        .map(|e| {
            let ff = feature_of(e);
            let features = gamma_fmp(&model.fmp, &e.parts, &ff.pyramid)?;
            Ok(TrainingExample { positive: true, features, score: T::zero() })
        })
        .collect::<Result<_, LearnError>>()?;
    let bg_features: Vec<FrameFeatures<T>> =
        backgrounds.par_iter().map(|img| frame_features(img, cfg)).collect::<Result<_, _>>()?;
    let mut mined: Vec<MinedConfig<T>> = Vec::new();
    let mut fmp_negatives: Vec<TrainingExample<T>> = Vec::new();
    let mut fmp_examples = Vec::new();
    for _round in 0..cfg.rounds {
        let new_configs = mine_configs_fmp(&model.fmp, &bg_features, cfg.mine_per_image, cfg)?;
        for m in &new_configs {
            let ff = &bg_features[m.image];
            let features = gamma_fmp(&model.fmp, &m.parts, &ff.pyramid)?;
            fmp_negatives.push(TrainingExample { positive: false, features, score: m.score });
        }
        mined.extend(new_configs);
        let problem = SvmProblem {
            examples: [fmp_positives.clone(), fmp_negatives.clone()].concat(),
            c,
            concave_slots: fmp_layout.concave_slots(),
            margin_offsets: Vec::new(),
        };
        let solution = train_structural_svm(&problem, iterations, tol)?;
        apply_fmp_beta(&mut model.fmp, &solution.beta);
        fmp_examples = problem.examples;
    }
    // Shape problem: the templates and part biases stay fixed at the
    // placement solution (the shape objective shares the embedded part
    // model's appearance); the pair-type biases, placement features and
    // chamfer weight are learned as a residual with the appearance score as
    // a per-example margin offset.
    let layout = ShapeLayout::of(&model);
    let appearance_len = layout.parts * layout.types * layout.tdim + layout.parts * layout.types;
    let appearance_beta: Vec<T> = pack_shape_beta(&model)[..appearance_len].to_vec();
    let reduce = |full: &TrainingExample<T>| -> (TrainingExample<T>, T) {
        let offset = appearance_beta
            .iter()
            .zip(full.features[..appearance_len].iter())
            .map(|(b, x)| *b * *x)
            .sum();
        (
            TrainingExample {
                positive: full.positive,
                features: full.features[appearance_len..].to_vec(),
                score: full.score,
            },
            offset,
        )
    };
    let shape_positives: Vec<TrainingExample<T>> = exemplars
        .iter()
        .map(|e| {
            let ff = feature_of(e);
            let features = gamma_shape(&model, &e.parts, &ff.pyramid, &ff.odt)?;
            Ok(TrainingExample { positive: true, features, score: T::zero() })
        })
        .collect::<Result<_, LearnError>>()?;
    // Placement-mined configurations are informative for the shape problem
    // too (wrong geometry on background structure); featureize them for it.
    // Configurations with coincident adjacent parts have no silhouette and
    // are skipped.
    let mut shape_negatives: Vec<TrainingExample<T>> = Vec::new();
    for m in &mined {
        let ff = &bg_features[m.image];
        if let Ok(features) = gamma_shape(&model, &m.parts, &ff.pyramid, &ff.odt) {
            shape_negatives.push(TrainingExample { positive: false, features, score: m.score });
        }
    }
    let mut shape_examples = Vec::new();
    for _round in 0..cfg.rounds {
        let new_configs = mine_configs_cascade(&model, &bg_features, cfg.mine_per_image, cfg)?;
        for m in &new_configs {
            let ff = &bg_features[m.image];
            let states = m.states.as_ref().expect("cascade candidates carry states");
            let features =
                gamma_shape_with_states(&model, &m.parts, states, &ff.pyramid, &ff.odt)?;
            shape_negatives.push(TrainingExample { positive: false, features, score: m.score });
        }
        let full_examples = [shape_positives.clone(), shape_negatives.clone()].concat();
        let mut reduced = Vec::with_capacity(full_examples.len());
        let mut offsets = Vec::with_capacity(full_examples.len());
        for e in &full_examples {
            let (r, o) = reduce(e);
            reduced.push(r);
            offsets.push(o);
        }
        let problem =
            SvmProblem { examples: reduced, c, concave_slots: Vec::new(), margin_offsets: offsets };
        let solution = train_structural_svm(&problem, iterations, tol)?;
        // Expand the reduced solution into the full layout before applying.
        let mut full_beta = pack_shape_beta(&model);
        full_beta[appearance_len..].copy_from_slice(&solution.beta);
        apply_shape_beta(&mut model, &full_beta);
        shape_examples = full_examples;
    }
    Ok((model, TrainReport { fmp_examples, shape_examples }))
}

/// Chain edge list used for bodies ordered head to tail.
pub fn chain_edges(parts: usize) -> Vec<(usize, usize)> {
    (1..parts).map(|i| (i - 1, i)).collect()
}
