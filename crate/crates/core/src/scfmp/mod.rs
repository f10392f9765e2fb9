//! Shape-consistent second inference stage: the part locations of stage-1
//! M-best candidates form a restricted per-part state space, augmented with
//! prior-bound radius and flaring state. Configurations are scored by
//! appearance, pair-type bias, the 5-component relative-placement descriptor
//! and the silhouette chamfer consistency term, and exact M-best
//! configurations are extracted over the restricted space.
//!
//! Pairwise descriptor and chamfer terms are independent of appearance types,
//! so each edge needs one location-pair table; messages then cost
//! O(states * locations) per edge plus an O(locations * types^2) bias sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{HogPyramid, OrientedDistanceTransform};
use crate::fmp::{FmpError, FmpModel, PartLocation, PoseCandidate, UnaryMaps};
use crate::geom::wrap_angle;
use crate::mbest::{extract_m_best, SubSpace};
use crate::real::Real;
use crate::shape::{geometric_descriptor, shape_consistency, PartState, ShapeError};

const SCORE_FLOOR: f64 = -1e20;

#[derive(Debug, Error)]
pub enum ScfmpError {
    #[error("empty state space")]
    EmptyStateSpace,
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Fmp(#[from] FmpError),
}

/// Per-part summaries of the shape state distributions: medians and
/// median-absolute-deviation spreads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartPrior<T> {
    pub radius: T,
    pub radius_spread: T,
    pub flare: T,
    pub flare_spread: T,
    /// Offset of the part axis from the line toward its parent (the root uses
    /// its first child edge).
    pub alpha: T,
    pub alpha_spread: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapePriors<T> {
    pub parts: Vec<PartPrior<T>>,
}

impl<T: Real> ShapePriors<T> {
    pub fn uniform(parts: usize, radius: T) -> Self {
        let p = PartPrior {
            radius,
            radius_spread: T::zero(),
            flare: T::zero(),
            flare_spread: T::zero(),
            alpha: T::zero(),
            alpha_spread: T::zero(),
        };
        Self { parts: vec![p; parts] }
    }

    pub fn validate(&self) -> Result<(), ScfmpError> {
        for p in &self.parts {
            if !(p.radius > T::zero()) || p.radius_spread < T::zero() || p.alpha_spread < T::zero()
            {
                return Err(ScfmpError::EmptyStateSpace);
            }
        }
        Ok(())
    }
}

/// Number of pairwise placement features: the 5 descriptor components plus
/// their squared deviations from the per-edge anchors.
pub const PAIR_FEATURES: usize = 10;

/// Shape-stage parameters of one tree edge (aligned with `fmp.edges`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeEdgeParams<T> {
    /// Weights on the pairwise placement features: the 5 descriptor
    /// components followed by their squared deviations from `desc_anchor`.
    pub pair_weights: [T; PAIR_FEATURES],
    /// Typical descriptor values for this edge (estimated from training
    /// exemplars), anchoring the squared-deviation features.
    pub desc_anchor: [T; 5],
    /// Weight on the chamfer consistency scalar.
    pub shape_weight: T,
    /// Pair-type bias for the shape objective, `[tau_parent * types + tau_child]`.
    pub pair_bias: Vec<T>,
}

/// Pairwise placement features of a bound state pair for one edge.
pub fn pair_features<T: Real>(
    zi: &PartState<T>,
    zj: &PartState<T>,
    anchor: &[T; 5],
) -> [T; PAIR_FEATURES] {
    let d = geometric_descriptor(zi, zj);
    let mut out = [T::zero(); PAIR_FEATURES];
    for k in 0..5 {
        out[k] = d[k];
        let dev = d[k] - anchor[k];
        out[5 + k] = dev * dev;
    }
    out
}

/// The full two-stage model: the embedded part model provides templates and
/// biases for both stages plus stage-1 springs; the shape section provides
/// the stage-2 pairwise terms and priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScfmpModel<T> {
    pub fmp: FmpModel<T>,
    pub shape_edges: Vec<ShapeEdgeParams<T>>,
    pub priors: ShapePriors<T>,
    /// Boundary sampling step in px for the chamfer term.
    pub theta_step: T,
}

impl<T: Real> ScfmpModel<T> {
    pub fn zero(fmp: FmpModel<T>, priors: ShapePriors<T>) -> Self {
        let types = fmp.types;
        let shape_edges = fmp
            .edges
            .iter()
            .map(|_| ShapeEdgeParams {
                pair_weights: [T::zero(); PAIR_FEATURES],
                desc_anchor: [T::zero(); 5],
                shape_weight: T::zero(),
                pair_bias: vec![T::zero(); types * types],
            })
            .collect();
        Self { fmp, shape_edges, priors, theta_step: T::one() }
    }

    pub fn validate(&self) -> Result<(), ScfmpError> {
        self.fmp.validate()?;
        if self.shape_edges.len() != self.fmp.edges.len()
            || self.priors.parts.len() != self.fmp.parts
        {
            return Err(ScfmpError::Fmp(FmpError::InvalidModel(
                "shape sections misaligned with part model".into(),
            )));
        }
        self.priors.validate()
    }

    /// Prior-bound part state at a grid location: radius scaled to the level,
    /// flaring from the prior, axis orientation left at zero (bound per pair
    /// during scoring).
    pub fn state_at(&self, pyr: &HogPyramid<T>, part: usize, loc: &PartLocation<T>) -> PartState<T> {
        let prior = &self.priors.parts[part];
        let scale = pyr.levels[loc.level].scale;
        PartState::new(loc.x, loc.y, prior.radius / scale, T::zero(), prior.flare, loc.tau)
    }
}

/// One restricted-space state: a stage-1 part location with bound shape
/// parameters and its cached appearance score.
#[derive(Debug, Clone)]
pub struct ShapeState<T> {
    pub loc: PartLocation<T>,
    pub r: T,
    pub theta: T,
    pub eta: T,
    pub unary: T,
    /// Index into the part's distinct-location list.
    pub loc_idx: usize,
}

/// Distinct (level, cx, cy) of one part with image-px center, bound radius
/// and the axis orientation inherited from its best-ranked source candidate.
#[derive(Debug, Clone)]
pub struct StateLocation<T> {
    pub level: usize,
    pub cx: usize,
    pub cy: usize,
    pub x: T,
    pub y: T,
    pub r: T,
    pub theta: T,
}

#[derive(Debug, Clone)]
pub struct PartStates<T> {
    pub states: Vec<ShapeState<T>>,
    pub locations: Vec<StateLocation<T>>,
}

/// Restricted per-part state space built from stage-1 candidates.
#[derive(Debug, Clone)]
pub struct StateSpace<T> {
    pub parts: Vec<PartStates<T>>,
}

/// Axis orientation of part `part` within a full configuration: the line
/// toward its tree parent (for the root: from its first child), offset by
/// the part's prior angle.
pub fn bound_theta<T: Real>(
    model: &ScfmpModel<T>,
    parts: &[PartLocation<T>],
    part: usize,
) -> T {
    let edge = model
        .fmp
        .edges
        .iter()
        .find(|e| e.child == part)
        .or_else(|| model.fmp.edges.iter().find(|e| e.parent == part))
        .expect("every part touches an edge");
    let (c, p) = (&parts[edge.child], &parts[edge.parent]);
    let line = (p.y - c.y).atan2(p.x - c.x);
    wrap_angle(line + model.priors.parts[part].alpha)
}

/// Collect the distinct (level, cx, cy, tau) states of every part across the
/// stage-1 candidates, bind radius and flaring from the priors, and cache
/// appearance scores. Each distinct location inherits its axis orientation
/// from the highest-ranked candidate that places the part there (the line
/// toward that candidate's parent part plus the prior angle offset).
pub fn build_state_space<T: Real>(
    stage1: &[PoseCandidate<T>],
    model: &ScfmpModel<T>,
    pyr: &HogPyramid<T>,
    maps: &UnaryMaps<T>,
) -> Result<StateSpace<T>, ScfmpError> {
    model.validate()?;
    if stage1.is_empty() {
        return Err(ScfmpError::EmptyStateSpace);
    }
    let k = model.fmp.parts;
    let mut parts = Vec::with_capacity(k);
    for part in 0..k {
        let mut keys: Vec<(usize, usize, usize, usize)> = stage1
            .iter()
            .map(|c| {
                let p = &c.parts[part];
                (p.level, p.cy, p.cx, p.tau)
            })
            .collect();
        keys.sort_unstable();
        keys.dedup();
        let mut loc_keys: Vec<(usize, usize, usize)> =
            keys.iter().map(|&(l, cy, cx, _)| (l, cy, cx)).collect();
        loc_keys.sort_unstable();
        loc_keys.dedup();
        // Orientation per location from the best-ranked source candidate.
        let mut thetas: Vec<Option<T>> = vec![None; loc_keys.len()];
        for cand in stage1 {
            let p = &cand.parts[part];
            let at = loc_keys.binary_search(&(p.level, p.cy, p.cx)).unwrap();
            if thetas[at].is_none() {
                thetas[at] = Some(bound_theta(model, &cand.parts, part));
            }
        }
        let prior = &model.priors.parts[part];
        let locations: Vec<StateLocation<T>> = loc_keys
            .iter()
            .enumerate()
            .map(|(li, &(level, cy, cx))| {
                let (x, y) = pyr.template_center(level, cx, cy, model.fmp.template_cells);
                StateLocation {
                    level,
                    cx,
                    cy,
                    x,
                    y,
                    r: prior.radius / pyr.levels[level].scale,
                    theta: thetas[li].unwrap_or_else(|| wrap_angle(prior.alpha)),
                }
            })
            .collect();
        let states: Vec<ShapeState<T>> = keys
            .iter()
            .map(|&(level, cy, cx, tau)| {
                let loc_idx = loc_keys.binary_search(&(level, cy, cx)).unwrap();
                let l = &locations[loc_idx];
                let loc = PartLocation { part, level, cx, cy, tau, x: l.x, y: l.y };
                let unary = maps.grids[part][tau][level].at(cx, cy) + model.fmp.bias[part][tau];
                ShapeState { loc, r: l.r, theta: l.theta, eta: prior.flare, unary, loc_idx }
            })
            .collect();
        if states.is_empty() {
            return Err(ScfmpError::EmptyStateSpace);
        }
        parts.push(PartStates { states, locations });
    }
    Ok(StateSpace { parts })
}

/// Stage-2 pairwise score of one tree edge: the pair-type bias, the
/// descriptor term and the chamfer term, evaluated on the states' bound
/// orientations (each state carries the axis orientation assigned when it
/// was constructed).
///
/// `zi` is the child part's state, `zj` the parent's, for edge `edge_idx`.
pub fn score_pair<T: Real>(
    zi: &PartState<T>,
    zj: &PartState<T>,
    edge_idx: usize,
    model: &ScfmpModel<T>,
    odt: &OrientedDistanceTransform<T>,
) -> Result<T, ScfmpError> {
    let se = &model.shape_edges[edge_idx];
    let bias = se.pair_bias[zj.tau * model.fmp.types + zi.tau];
    let feats = pair_features(zi, zj, &se.desc_anchor);
    let mut s = bias;
    for (w, d) in se.pair_weights.iter().zip(feats.iter()) {
        s += *w * *d;
    }
    let theta = shape_consistency(zi, zj, odt, model.theta_step)?;
    Ok(s + se.shape_weight * theta)
}

/// Location-pair tables of the type-independent pairwise terms, one per edge
/// in stored (child location, parent location) orientation.
struct PairTables<T> {
    /// `tables[edge][child_loc * parent_locs + parent_loc]`.
    tables: Vec<Vec<T>>,
}

fn build_pair_tables<T: Real>(
    space: &StateSpace<T>,
    model: &ScfmpModel<T>,
    odt: &OrientedDistanceTransform<T>,
) -> PairTables<T> {
    let tables = model
        .fmp
        .edges
        .iter()
        .enumerate()
        .map(|(ei, e)| {
            let child_locs = &space.parts[e.child].locations;
            let parent_locs = &space.parts[e.parent].locations;
            let np = parent_locs.len();
            let se = &model.shape_edges[ei];
            let mut table = vec![T::neg_huge(); child_locs.len() * np];
            table.par_chunks_mut(np).enumerate().for_each(|(ci, row)| {
                let cl = &child_locs[ci];
                for (pi, pl) in parent_locs.iter().enumerate() {
                    // Same-level constraint and distinct centers.
                    if cl.level != pl.level || (cl.x == pl.x && cl.y == pl.y) {
                        continue;
                    }
                    let zi = PartState::new(
                        cl.x,
                        cl.y,
                        cl.r,
                        cl.theta,
                        model.priors.parts[e.child].flare,
                        0,
                    );
                    let zj = PartState::new(
                        pl.x,
                        pl.y,
                        pl.r,
                        pl.theta,
                        model.priors.parts[e.parent].flare,
                        0,
                    );
                    let feats = pair_features(&zi, &zj, &se.desc_anchor);
                    let mut s = T::zero();
                    for (w, d) in se.pair_weights.iter().zip(feats.iter()) {
                        s += *w * *d;
                    }
                    if let Ok(theta) = shape_consistency(&zi, &zj, odt, model.theta_step) {
                        row[pi] = s + se.shape_weight * theta;
                    }
                }
            });
            table
        })
        .collect();
    PairTables { tables }
}

struct ShapeTraversal {
    post_order: Vec<usize>,
    children: Vec<Vec<usize>>,
    /// For each non-root node: (edge index, true when the stored edge's child
    /// is this node).
    up_edge: Vec<Option<(usize, bool)>>,
}

fn build_traversal<T: Real>(model: &FmpModel<T>) -> ShapeTraversal {
    let k = model.parts;
    let mut adj: Vec<Vec<(usize, bool)>> = vec![Vec::new(); k];
    for (ei, e) in model.edges.iter().enumerate() {
        adj[e.parent].push((ei, true));
        adj[e.child].push((ei, false));
    }
    let mut up_edge = vec![None; k];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut order = Vec::with_capacity(k);
    let mut seen = vec![false; k];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(n) = stack.pop() {
        order.push(n);
        for &(ei, stored_parent_here) in &adj[n] {
            let e = &model.edges[ei];
            let other = if stored_parent_here { e.child } else { e.parent };
            if seen[other] {
                continue;
            }
            seen[other] = true;
            children[n].push(other);
            up_edge[other] = Some((ei, stored_parent_here));
            stack.push(other);
        }
    }
    order.reverse();
    ShapeTraversal { post_order: order, children, up_edge }
}

struct ShapeSolver<'a, T: Real> {
    space: &'a StateSpace<T>,
    model: &'a ScfmpModel<T>,
    tables: PairTables<T>,
    trav: ShapeTraversal,
    unconstrained: Option<Option<(T, Vec<u64>)>>,
}

impl<T: Real> ShapeSolver<'_, T> {
    /// Oriented pairwise value for traversal edge `ei`: from state `sc` of the
    /// traversal child `c` to state `sp` of its traversal parent `p`.
    #[inline]
    fn pair_value(
        &self,
        ei: usize,
        stored_child_is_c: bool,
        c: usize,
        sc: usize,
        p: usize,
        sp: usize,
    ) -> T {
        let types = self.model.fmp.types;
        let (sc_st, sp_st) = (&self.space.parts[c].states[sc], &self.space.parts[p].states[sp]);
        let table = &self.tables.tables[ei];
        if stored_child_is_c {
            let np = self.space.parts[p].locations.len();
            table[sc_st.loc_idx * np + sp_st.loc_idx]
                + self.model.shape_edges[ei].pair_bias[sp_st.loc.tau * types + sc_st.loc.tau]
        } else {
            // Stored orientation has the traversal parent as its child.
            let nc = self.space.parts[c].locations.len();
            table[sp_st.loc_idx * nc + sc_st.loc_idx]
                + self.model.shape_edges[ei].pair_bias[sc_st.loc.tau * types + sp_st.loc.tau]
        }
    }

    fn solve(&mut self, sub: &SubSpace) -> Option<(T, Vec<u64>)> {
        if sub.prefix.is_empty() && sub.excluded.is_empty() {
            if self.unconstrained.is_none() {
                self.unconstrained = Some(self.solve_constrained(sub));
            }
            return self.unconstrained.clone().unwrap();
        }
        self.solve_constrained(sub)
    }

    fn solve_constrained(&self, sub: &SubSpace) -> Option<(T, Vec<u64>)> {
        let k = self.space.parts.len();
        let floor = T::of(SCORE_FLOOR);
        let allowed = |part: usize, s: usize| -> bool {
            if part < sub.prefix.len() {
                return sub.prefix[part] == s as u64;
            }
            if part == sub.prefix.len() {
                return !sub.excluded.contains(&(s as u64));
            }
            true
        };
        // Up pass with per-edge best-child backpointers.
        let mut up: Vec<Vec<T>> =
            (0..k).map(|p| vec![T::zero(); self.space.parts[p].states.len()]).collect();
        let mut args: Vec<Vec<Vec<usize>>> = (0..k).map(|_| Vec::new()).collect();
        for &node in &self.trav.post_order {
            let n_states = self.space.parts[node].states.len();
            for (si, st) in self.space.parts[node].states.iter().enumerate() {
                up[node][si] = if allowed(node, si) { st.unary } else { T::neg_huge() };
            }
            for &c in &self.trav.children[node] {
                let (ei, forward) = self.trav.up_edge[c].unwrap();
                let child_states = self.space.parts[c].states.len();
                let mut arg = vec![0usize; n_states];
                for sp in 0..n_states {
                    let mut best = T::neg_infinity();
                    let mut best_arg = 0usize;
                    for sc in 0..child_states {
                        let u = up[c][sc];
                        if u <= floor {
                            continue;
                        }
                        let v = u + self.pair_value(ei, forward, c, sc, node, sp);
                        if v > best {
                            best = v;
                            best_arg = sc;
                        }
                    }
                    if best > floor {
                        up[node][sp] += best;
                    } else {
                        up[node][sp] = T::neg_huge();
                    }
                    arg[sp] = best_arg;
                }
                args[node].push(arg);
            }
        }
        // Root scan (part 0): first strict maximum = smallest state index.
        let root_states = self.space.parts[0].states.len();
        let mut best = (T::neg_infinity(), 0usize);
        for si in 0..root_states {
            if up[0][si] > best.0 {
                best = (up[0][si], si);
            }
        }
        if !(best.0 > floor) {
            return None;
        }
        // Backtrack.
        let mut config = vec![0u64; k];
        config[0] = best.1 as u64;
        let mut stack = vec![(0usize, best.1)];
        while let Some((node, s)) = stack.pop() {
            for (ci, &c) in self.trav.children[node].iter().enumerate() {
                let sc = args[node][ci][s];
                config[c] = sc as u64;
                stack.push((c, sc));
            }
        }
        Some((best.0, config))
    }
}

/// Materialize the part states of a decoded configuration (orientations were
/// bound when the state space was built).
fn bind_configuration<T: Real>(space: &StateSpace<T>, config: &[u64]) -> Vec<PartState<T>> {
    config
        .iter()
        .enumerate()
        .map(|(p, &si)| {
            let s = &space.parts[p].states[si as usize];
            PartState::new(s.loc.x, s.loc.y, s.r, s.theta, s.eta, s.loc.tau)
        })
        .collect()
}

/// Exact M-best shape-consistent configurations over the restricted space,
/// scores non-increasing, one candidate per distinct configuration.
pub fn infer_m_best_shape<T: Real>(
    space: &StateSpace<T>,
    model: &ScfmpModel<T>,
    odt: &OrientedDistanceTransform<T>,
    m: usize,
) -> Result<Vec<PoseCandidate<T>>, ScfmpError> {
    assert!(m >= 1, "M must be >= 1");
    model.validate()?;
    if space.parts.is_empty() || space.parts.iter().any(|p| p.states.is_empty()) {
        return Err(ScfmpError::EmptyStateSpace);
    }
    let trav = build_traversal(&model.fmp);
    let tables = build_pair_tables(space, model, odt);
    let mut solver = ShapeSolver { space, model, tables, trav, unconstrained: None };
    let k = space.parts.len();
    let results = extract_m_best(k, m, |sub| solver.solve(sub), |_, _, _| true);
    let out = results
        .into_iter()
        .map(|(score, config)| {
            let states = bind_configuration(space, &config);
            let parts = config
                .iter()
                .enumerate()
                .map(|(p, &s)| space.parts[p].states[s as usize].loc)
                .collect();
            PoseCandidate { parts, states: Some(states), score }
        })
        .collect();
    Ok(out)
}

/// Build the full shape states of a standalone configuration: radius and
/// flaring from the priors, axis orientations from the configuration's own
/// tree geometry.
pub fn config_states<T: Real>(
    model: &ScfmpModel<T>,
    parts: &[PartLocation<T>],
    pyr: &HogPyramid<T>,
) -> Vec<PartState<T>> {
    parts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut z = model.state_at(pyr, i, p);
            z.theta = bound_theta(model, parts, i);
            z
        })
        .collect()
}

/// Direct evaluation of the shape objective for a given part configuration:
/// template responses and part-type biases plus, per edge, the pair-type
/// bias, descriptor term and chamfer term over the configuration's own bound
/// states.
pub fn score_shape_config<T: Real>(
    model: &ScfmpModel<T>,
    parts: &[PartLocation<T>],
    pyr: &HogPyramid<T>,
    odt: &OrientedDistanceTransform<T>,
) -> Result<T, ScfmpError> {
    model.validate()?;
    let mut s = T::zero();
    for (i, p) in parts.iter().enumerate() {
        s += crate::fmp::correlate(pyr, p.level, &model.fmp.templates[i][p.tau], p.cx, p.cy);
        s += model.fmp.bias[i][p.tau];
    }
    let states = config_states(model, parts, pyr);
    for (ei, e) in model.fmp.edges.iter().enumerate() {
        s += score_pair(&states[e.child], &states[e.parent], ei, model, odt)?;
    }
    Ok(s)
}

/// Full two-stage inference: stage-1 M-best part configurations restrict the
/// state space for the shape stage.
pub fn cascade<T: Real>(
    model: &ScfmpModel<T>,
    pyr: &HogPyramid<T>,
    maps: &UnaryMaps<T>,
    odt: &OrientedDistanceTransform<T>,
    stage1_m: usize,
    stage2_m: usize,
    nms_radius: T,
) -> Result<(Vec<PoseCandidate<T>>, Vec<PoseCandidate<T>>), ScfmpError> {
    let stage1 = crate::fmp::infer_m_best(&model.fmp, pyr, maps, stage1_m, nms_radius)?;
    let space = build_state_space(&stage1, model, pyr, maps)?;
    let stage2 = infer_m_best_shape(&space, model, odt, stage2_m)?;
    Ok((stage1, stage2))
}
