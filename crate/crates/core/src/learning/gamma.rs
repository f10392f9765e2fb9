//! Energy feature vectors: every term of the scoring objectives laid out as
//! one long vector, so scores factor exactly as weight-vector dot products.
//!
//! Two layouts exist: the shape objective (appearance blocks, part-type and
//! pair-type indicators, 5-component descriptor, chamfer scalar) and the
//! stage-1 placement objective (appearance blocks, indicators, quadratic
//! offset features per type pair).

use crate::features::{HogPyramid, OrientedDistanceTransform, HOG_DIMS};
use crate::fmp::{FmpError, FmpModel, PartLocation};
use crate::real::Real;
use crate::scfmp::{config_states, pair_features, ScfmpError, ScfmpModel, PAIR_FEATURES};
use crate::shape::{shape_consistency, PartState};

/// Offsets into the shape-objective feature vector.
#[derive(Debug, Clone)]
pub struct ShapeLayout {
    pub parts: usize,
    pub types: usize,
    pub tdim: usize,
    pub edges: usize,
    pub len: usize,
}

impl ShapeLayout {
    pub fn of<T: Real>(model: &ScfmpModel<T>) -> Self {
        let parts = model.fmp.parts;
        let types = model.fmp.types;
        let tdim = model.fmp.template_cells * model.fmp.template_cells * HOG_DIMS;
        let edges = model.fmp.edges.len();
        let len = parts * types * tdim
            + parts * types
            + edges * types * types
            + edges * PAIR_FEATURES
            + edges;
        Self { parts, types, tdim, edges, len }
    }

    #[inline]
    pub fn phi(&self, part: usize, tau: usize) -> usize {
        (part * self.types + tau) * self.tdim
    }

    #[inline]
    pub fn bias(&self, part: usize, tau: usize) -> usize {
        self.parts * self.types * self.tdim + part * self.types + tau
    }

    #[inline]
    pub fn pair_bias(&self, edge: usize, tau_parent: usize, tau_child: usize) -> usize {
        self.parts * self.types * self.tdim
            + self.parts * self.types
            + edge * self.types * self.types
            + tau_parent * self.types
            + tau_child
    }

    #[inline]
    pub fn pair_weights(&self, edge: usize) -> usize {
        self.parts * self.types * self.tdim
            + self.parts * self.types
            + self.edges * self.types * self.types
            + edge * PAIR_FEATURES
    }

    #[inline]
    pub fn shape_weight(&self, edge: usize) -> usize {
        self.parts * self.types * self.tdim
            + self.parts * self.types
            + self.edges * self.types * self.types
            + self.edges * PAIR_FEATURES
            + edge
    }
}

/// Copy the HoG patch under a template placement, in template weight order.
fn copy_patch<T: Real>(
    pyr: &HogPyramid<T>,
    level: usize,
    cells: usize,
    cx: usize,
    cy: usize,
    out: &mut [T],
) {
    let lv = &pyr.levels[level];
    let mut wi = 0usize;
    for dy in 0..cells {
        let row = ((cy + dy) * lv.cells_w + cx) * HOG_DIMS;
        let src = &lv.data[row..row + cells * HOG_DIMS];
        out[wi..wi + src.len()].copy_from_slice(src);
        wi += src.len();
    }
}

/// Shape-objective feature vector of a standalone configuration, with shape
/// states bound from its own tree geometry. The dot product with
/// [`pack_shape_beta`] reproduces [`crate::scfmp::score_shape_config`].
pub fn gamma_shape<T: Real>(
    model: &ScfmpModel<T>,
    parts: &[PartLocation<T>],
    pyr: &HogPyramid<T>,
    odt: &OrientedDistanceTransform<T>,
) -> Result<Vec<T>, ScfmpError> {
    let states = config_states(model, parts, pyr);
    gamma_shape_with_states(model, parts, &states, pyr, odt)
}

/// Shape-objective feature vector over explicitly provided shape states
/// (inference candidates carry the states they were scored with).
pub fn gamma_shape_with_states<T: Real>(
    model: &ScfmpModel<T>,
    parts: &[PartLocation<T>],
    states: &[PartState<T>],
    pyr: &HogPyramid<T>,
    odt: &OrientedDistanceTransform<T>,
) -> Result<Vec<T>, ScfmpError> {
    let layout = ShapeLayout::of(model);
    let mut g = vec![T::zero(); layout.len];
    for (i, p) in parts.iter().enumerate() {
        let base = layout.phi(i, p.tau);
        copy_patch(pyr, p.level, model.fmp.template_cells, p.cx, p.cy, &mut g[base..base + layout.tdim]);
        g[layout.bias(i, p.tau)] = T::one();
    }
    for (ei, e) in model.fmp.edges.iter().enumerate() {
        let (pc, pp) = (&parts[e.child], &parts[e.parent]);
        g[layout.pair_bias(ei, pp.tau, pc.tau)] = T::one();
        let (zi, zj) = (&states[e.child], &states[e.parent]);
        let feats = pair_features(zi, zj, &model.shape_edges[ei].desc_anchor);
        let base = layout.pair_weights(ei);
        for (k, &d) in feats.iter().enumerate() {
            g[base + k] = d;
        }
        g[layout.shape_weight(ei)] = shape_consistency(zi, zj, odt, model.theta_step)?;
    }
    Ok(g)
}

/// Flatten the shape-objective parameters in [`gamma_shape`] order.
pub fn pack_shape_beta<T: Real>(model: &ScfmpModel<T>) -> Vec<T> {
    let layout = ShapeLayout::of(model);
    let mut b = vec![T::zero(); layout.len];
    for part in 0..layout.parts {
        for tau in 0..layout.types {
            let base = layout.phi(part, tau);
            b[base..base + layout.tdim].copy_from_slice(&model.fmp.templates[part][tau].weights);
            b[layout.bias(part, tau)] = model.fmp.bias[part][tau];
        }
    }
    for (ei, se) in model.shape_edges.iter().enumerate() {
        for tp in 0..layout.types {
            for tc in 0..layout.types {
                b[layout.pair_bias(ei, tp, tc)] = se.pair_bias[tp * layout.types + tc];
            }
        }
        let base = layout.pair_weights(ei);
        for (k, &w) in se.pair_weights.iter().enumerate() {
            b[base + k] = w;
        }
        b[layout.shape_weight(ei)] = se.shape_weight;
    }
    b
}

/// Write a learned shape weight vector back into the model (templates,
/// part-type biases, pair-type biases, descriptor and chamfer weights).
pub fn apply_shape_beta<T: Real>(model: &mut ScfmpModel<T>, beta: &[T]) {
    let layout = ShapeLayout::of(model);
    assert_eq!(beta.len(), layout.len);
    for part in 0..layout.parts {
        for tau in 0..layout.types {
            let base = layout.phi(part, tau);
            model.fmp.templates[part][tau].weights.copy_from_slice(&beta[base..base + layout.tdim]);
            model.fmp.bias[part][tau] = beta[layout.bias(part, tau)];
        }
    }
    for ei in 0..layout.edges {
        for tp in 0..layout.types {
            for tc in 0..layout.types {
                model.shape_edges[ei].pair_bias[tp * layout.types + tc] =
                    beta[layout.pair_bias(ei, tp, tc)];
            }
        }
        let base = layout.pair_weights(ei);
        for k in 0..PAIR_FEATURES {
            model.shape_edges[ei].pair_weights[k] = beta[base + k];
        }
        model.shape_edges[ei].shape_weight = beta[layout.shape_weight(ei)];
    }
}

/// Offsets into the stage-1 placement feature vector.
#[derive(Debug, Clone)]
pub struct FmpLayout {
    pub parts: usize,
    pub types: usize,
    pub tdim: usize,
    pub edges: usize,
    pub len: usize,
}

impl FmpLayout {
    pub fn of<T: Real>(model: &FmpModel<T>) -> Self {
        let parts = model.parts;
        let types = model.types;
        let tdim = model.template_cells * model.template_cells * HOG_DIMS;
        let edges = model.edges.len();
        let len = parts * types * tdim + parts * types + edges * types * types * 5;
        Self { parts, types, tdim, edges, len }
    }

    #[inline]
    pub fn phi(&self, part: usize, tau: usize) -> usize {
        (part * self.types + tau) * self.tdim
    }

    #[inline]
    pub fn bias(&self, part: usize, tau: usize) -> usize {
        self.parts * self.types * self.tdim + part * self.types + tau
    }

    /// Pair block: bias indicator then the 4 quadratic offset features.
    #[inline]
    pub fn pair(&self, edge: usize, tau_parent: usize, tau_child: usize) -> usize {
        self.parts * self.types * self.tdim
            + self.parts * self.types
            + (edge * self.types * self.types + tau_parent * self.types + tau_child) * 5
    }

    /// Coordinates that must stay negative (the dx^2 / dy^2 weights).
    pub fn concave_slots(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for e in 0..self.edges {
            for tp in 0..self.types {
                for tc in 0..self.types {
                    let base = self.pair(e, tp, tc);
                    out.push(base + 3);
                    out.push(base + 4);
                }
            }
        }
        out
    }
}

/// Stage-1 feature vector: the dot product with [`pack_fmp_beta`] reproduces
/// the placement score. Offset features are taken relative to the model's
/// anchors, which are estimated by clustering rather than learned.
pub fn gamma_fmp<T: Real>(
    model: &FmpModel<T>,
    parts: &[PartLocation<T>],
    pyr: &HogPyramid<T>,
) -> Result<Vec<T>, FmpError> {
    let layout = FmpLayout::of(model);
    let mut g = vec![T::zero(); layout.len];
    for (i, p) in parts.iter().enumerate() {
        let base = layout.phi(i, p.tau);
        copy_patch(pyr, p.level, model.template_cells, p.cx, p.cy, &mut g[base..base + layout.tdim]);
        g[layout.bias(i, p.tau)] = T::one();
    }
    for (ei, e) in model.edges.iter().enumerate() {
        let (pc, pp) = (&parts[e.child], &parts[e.parent]);
        let idx = e.idx(model.types, pp.tau, pc.tau);
        let anchor = e.anchors[idx];
        let dx = T::of_usize(pc.cx) - T::of_usize(pp.cx) - anchor[0];
        let dy = T::of_usize(pc.cy) - T::of_usize(pp.cy) - anchor[1];
        let base = layout.pair(ei, pp.tau, pc.tau);
        g[base] = T::one();
        g[base + 1] = dx;
        g[base + 2] = dy;
        g[base + 3] = dx * dx;
        g[base + 4] = dy * dy;
    }
    Ok(g)
}

pub fn pack_fmp_beta<T: Real>(model: &FmpModel<T>) -> Vec<T> {
    let layout = FmpLayout::of(model);
    let mut b = vec![T::zero(); layout.len];
    for part in 0..layout.parts {
        for tau in 0..layout.types {
            let base = layout.phi(part, tau);
            b[base..base + layout.tdim].copy_from_slice(&model.templates[part][tau].weights);
            b[layout.bias(part, tau)] = model.bias[part][tau];
        }
    }
    for (ei, e) in model.edges.iter().enumerate() {
        for tp in 0..layout.types {
            for tc in 0..layout.types {
                let idx = e.idx(layout.types, tp, tc);
                let base = layout.pair(ei, tp, tc);
                b[base] = e.bias[idx];
                for k in 0..4 {
                    b[base + 1 + k] = e.springs[idx][k];
                }
            }
        }
    }
    b
}

pub fn apply_fmp_beta<T: Real>(model: &mut FmpModel<T>, beta: &[T]) {
    let layout = FmpLayout::of(model);
    assert_eq!(beta.len(), layout.len);
    for part in 0..layout.parts {
        for tau in 0..layout.types {
            let base = layout.phi(part, tau);
            model.templates[part][tau].weights.copy_from_slice(&beta[base..base + layout.tdim]);
            model.bias[part][tau] = beta[layout.bias(part, tau)];
        }
    }
    let types = layout.types;
    for (ei, e) in model.edges.iter_mut().enumerate() {
        for tp in 0..types {
            for tc in 0..types {
                let idx = tp * types + tc;
                let base = layout.pair(ei, tp, tc);
                e.bias[idx] = beta[base];
                for k in 0..4 {
                    e.springs[idx][k] = beta[base + 1 + k];
                }
            }
        }
    }
}
