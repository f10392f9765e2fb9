//! Mixture-of-parts tree model: appearance templates over HoG cells, per-part
//! and pairwise type biases, quadratic placement springs, and exact inference
//! (best, M-best, max-marginals) over the feature pyramid.

mod gdt;
mod solve;

pub use solve::{infer_best, infer_m_best, max_marginals, InferenceContext, MaxMarginals};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{HogPyramid, HOG_DIMS};
use crate::real::Real;
use crate::shape::PartState;

#[derive(Debug, Error)]
pub enum FmpError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("part {part} out of pyramid bounds")]
    BoundsError { part: usize },
    #[error("pyramid has no level large enough for the templates")]
    ImageTooSmall,
}

/// Square appearance template over HoG cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template<T> {
    pub cells: usize,
    pub weights: Vec<T>,
}

impl<T: Real> Template<T> {
    pub fn zeros(cells: usize) -> Self {
        Self { cells, weights: vec![T::zero(); cells * cells * HOG_DIMS] }
    }
}

/// Pairwise parameters of one tree edge, indexed by (parent type, child type).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeParams<T> {
    pub parent: usize,
    pub child: usize,
    /// Pair-type bias, flattened `[tau_parent * types + tau_child]`.
    pub bias: Vec<T>,
    /// Spring weights on `[dx, dy, dx^2, dy^2]`, same indexing.
    pub springs: Vec<[T; 4]>,
    /// Rest offset of the child relative to the parent, in cells.
    pub anchors: Vec<[T; 2]>,
}

impl<T: Real> EdgeParams<T> {
    pub fn zeros(parent: usize, child: usize, types: usize) -> Self {
        Self {
            parent,
            child,
            bias: vec![T::zero(); types * types],
            springs: vec![[T::zero(); 4]; types * types],
            anchors: vec![[T::zero(); 2]; types * types],
        }
    }

    #[inline]
    pub fn idx(&self, types: usize, tau_parent: usize, tau_child: usize) -> usize {
        tau_parent * types + tau_child
    }
}

/// The tree part model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmpModel<T> {
    pub parts: usize,
    pub types: usize,
    pub template_cells: usize,
    /// `[part][type]` appearance templates.
    pub templates: Vec<Vec<Template<T>>>,
    /// `[part][type]` part-type biases.
    pub bias: Vec<Vec<T>>,
    /// Tree edges as (parent, child) pairs.
    pub edges: Vec<EdgeParams<T>>,
}

impl<T: Real> FmpModel<T> {
    /// A zero-parameter model over a chain `0-1-...-(parts-1)`.
    pub fn zero_chain(parts: usize, types: usize, template_cells: usize) -> Self {
        let templates = (0..parts)
            .map(|_| (0..types).map(|_| Template::zeros(template_cells)).collect())
            .collect();
        let bias = vec![vec![T::zero(); types]; parts];
        let edges = (1..parts).map(|i| EdgeParams::zeros(i - 1, i, types)).collect();
        Self { parts, types, template_cells, templates, bias, edges }
    }

    pub fn validate(&self) -> Result<(), FmpError> {
        if self.parts == 0 || self.types == 0 || self.template_cells == 0 {
            return Err(FmpError::InvalidModel("empty dimensions".into()));
        }
        if self.templates.len() != self.parts || self.bias.len() != self.parts {
            return Err(FmpError::InvalidModel("per-part arrays sized wrong".into()));
        }
        let tdim = self.template_cells * self.template_cells * HOG_DIMS;
        for per_part in &self.templates {
            if per_part.len() != self.types
                || per_part.iter().any(|t| t.cells != self.template_cells || t.weights.len() != tdim)
            {
                return Err(FmpError::InvalidModel("template dims mismatch".into()));
            }
        }
        if self.edges.len() + 1 != self.parts && self.parts > 0 {
            return Err(FmpError::InvalidModel("edge count must be parts - 1".into()));
        }
        // Connectivity check.
        let mut adj = vec![Vec::new(); self.parts];
        for e in &self.edges {
            if e.parent >= self.parts || e.child >= self.parts || e.parent == e.child {
                return Err(FmpError::InvalidModel("edge endpoints out of range".into()));
            }
            let tt = self.types * self.types;
            if e.bias.len() != tt || e.springs.len() != tt || e.anchors.len() != tt {
                return Err(FmpError::InvalidModel("edge parameter arrays sized wrong".into()));
            }
            adj[e.parent].push(e.child);
            adj[e.child].push(e.parent);
        }
        let mut seen = vec![false; self.parts];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(n) = stack.pop() {
            for &o in &adj[n] {
                if !seen[o] {
                    seen[o] = true;
                    stack.push(o);
                }
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(FmpError::InvalidModel("edges do not form a spanning tree".into()));
        }
        Ok(())
    }
}

/// Discrete part placement: template top-left cell `(cx, cy)` at a pyramid
/// level plus appearance type; `(x, y)` is the template center in image px.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartLocation<T> {
    pub part: usize,
    pub level: usize,
    pub cx: usize,
    pub cy: usize,
    pub tau: usize,
    pub x: T,
    pub y: T,
}

/// A scored full-body configuration. `states` is filled by the shape stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseCandidate<T> {
    pub parts: Vec<PartLocation<T>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<PartState<T>>>,
    pub score: T,
}

/// Cross-correlation of one template with the HoG grid at placement (cx, cy).
pub(crate) fn correlate<T: Real>(
    pyr: &HogPyramid<T>,
    level: usize,
    template: &Template<T>,
    cx: usize,
    cy: usize,
) -> T {
    let lv = &pyr.levels[level];
    let tc = template.cells;
    let mut acc = T::zero();
    let mut wi = 0usize;
    for dy in 0..tc {
        let row = ((cy + dy) * lv.cells_w + cx) * HOG_DIMS;
        let cells = &lv.data[row..row + tc * HOG_DIMS];
        for v in cells {
            acc += template.weights[wi] * *v;
            wi += 1;
        }
    }
    acc
}

/// Per-(part, type, level) appearance response grids (template correlation,
/// without the part-type bias).
#[derive(Debug, Clone)]
pub struct ResponseGrid<T> {
    pub w: usize,
    pub h: usize,
    pub v: Vec<T>,
}

impl<T: Real> ResponseGrid<T> {
    #[inline]
    pub fn at(&self, cx: usize, cy: usize) -> T {
        self.v[cy * self.w + cx]
    }
}

#[derive(Debug, Clone)]
pub struct UnaryMaps<T> {
    /// `[part][tau][level]`.
    pub grids: Vec<Vec<Vec<ResponseGrid<T>>>>,
    /// Valid template placements per level; (0, 0) when the level is too small.
    pub level_dims: Vec<(usize, usize)>,
}

/// Compute all appearance response maps for a model over a pyramid.
pub fn unary_maps<T: Real>(
    model: &FmpModel<T>,
    pyr: &HogPyramid<T>,
) -> Result<UnaryMaps<T>, FmpError> {
    use rayon::prelude::*;
    model.validate()?;
    let tc = model.template_cells;
    let level_dims: Vec<(usize, usize)> = pyr
        .levels
        .iter()
        .map(|lv| {
            if lv.cells_w >= tc && lv.cells_h >= tc {
                (lv.cells_w - tc + 1, lv.cells_h - tc + 1)
            } else {
                (0, 0)
            }
        })
        .collect();
    if level_dims.iter().all(|&(w, h)| w == 0 || h == 0) {
        return Err(FmpError::ImageTooSmall);
    }
    let jobs: Vec<(usize, usize, usize)> = (0..model.parts)
        .flat_map(|p| (0..model.types).flat_map(move |t| (0..pyr.levels.len()).map(move |l| (p, t, l))))
        .collect();
    let grids_flat: Vec<ResponseGrid<T>> = jobs
        .par_iter()
        .map(|&(p, t, l)| {
            let (gw, gh) = level_dims[l];
            let mut v = vec![T::zero(); gw * gh];
            let template = &model.templates[p][t];
            for cy in 0..gh {
                for cx in 0..gw {
                    v[cy * gw + cx] = correlate(pyr, l, template, cx, cy);
                }
            }
            ResponseGrid { w: gw, h: gh, v }
        })
        .collect();
    let mut it = grids_flat.into_iter();
    let grids = (0..model.parts)
        .map(|_| {
            (0..model.types)
                .map(|_| (0..pyr.levels.len()).map(|_| it.next().unwrap()).collect())
                .collect()
        })
        .collect();
    Ok(UnaryMaps { grids, level_dims })
}

/// Direct evaluation of the tree objective for a given configuration: sum of
/// template responses, part-type biases, pair-type biases and quadratic
/// placement terms. All parts must sit on one pyramid level.
pub fn score_pose<T: Real>(
    model: &FmpModel<T>,
    pose: &PoseCandidate<T>,
    pyr: &HogPyramid<T>,
) -> Result<T, FmpError> {
    model.validate()?;
    if pose.parts.len() != model.parts {
        return Err(FmpError::InvalidModel(format!(
            "pose has {} parts, model has {}",
            pose.parts.len(),
            model.parts
        )));
    }
    let tc = model.template_cells;
    let level = pose.parts[0].level;
    let mut score = T::zero();
    for (i, p) in pose.parts.iter().enumerate() {
        if p.level >= pyr.levels.len() || p.level != level {
            return Err(FmpError::BoundsError { part: i });
        }
        let lv = &pyr.levels[p.level];
        if p.tau >= model.types || p.cx + tc > lv.cells_w || p.cy + tc > lv.cells_h {
            return Err(FmpError::BoundsError { part: i });
        }
        score += correlate(pyr, p.level, &model.templates[i][p.tau], p.cx, p.cy);
        score += model.bias[i][p.tau];
    }
    for e in &model.edges {
        let pp = &pose.parts[e.parent];
        let pc = &pose.parts[e.child];
        let idx = e.idx(model.types, pp.tau, pc.tau);
        let anchor = e.anchors[idx];
        let dx = T::of_usize(pc.cx) - T::of_usize(pp.cx) - anchor[0];
        let dy = T::of_usize(pc.cy) - T::of_usize(pp.cy) - anchor[1];
        let w = e.springs[idx];
        score += e.bias[idx] + w[0] * dx + w[1] * dy + w[2] * dx * dx + w[3] * dy * dy;
    }
    Ok(score)
}

/// Pack a discrete state; the packed ordering (level, cy, cx, tau) is the
/// documented tie-break ordering.
#[inline]
pub(crate) fn pack_state(level: usize, cy: usize, cx: usize, tau: usize) -> u64 {
    ((level as u64) << 48) | ((cy as u64) << 32) | ((cx as u64) << 16) | tau as u64
}

#[inline]
pub(crate) fn unpack_state(s: u64) -> (usize, usize, usize, usize) {
    (
        (s >> 48) as usize,
        ((s >> 32) & 0xffff) as usize,
        ((s >> 16) & 0xffff) as usize,
        (s & 0xffff) as usize,
    )
}
