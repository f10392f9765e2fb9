//! Tree dynamic programming over the pyramid state space: single best
//! configuration, max-marginals via forward/backward passes, and exact M-best
//! via subspace partitioning around repeated constrained solves.
//!
//! States are (level, cy, cx, tau); all parts of a configuration share one
//! level. Messages use the generalized distance transform, so the quadratic
//! spring weights must be negative (learning clamps them to <= -1e-3; the
//! envelope additionally clamps at -1e-9 to tolerate all-zero models).

use super::gdt::gdt_max_1d;
use super::{
    pack_state, unpack_state, FmpError, FmpModel, PartLocation, PoseCandidate, ResponseGrid,
    UnaryMaps,
};
use crate::features::HogPyramid;
use crate::mbest::SubSpace;
use crate::real::Real;

const QUAD_CLAMP: f64 = -1e-9;
const SCORE_FLOOR: f64 = -1e20;

/// Tree edge oriented for a traversal rooted at part 0; parameter accessors
/// are in (traversal parent type, traversal child type) indexing.
struct OrientedEdge<T> {
    /// Stored-edge index and whether the stored orientation matches.
    forward: bool,
    edge_idx: usize,
    _phantom: std::marker::PhantomData<T>,
}

impl<T: Real> OrientedEdge<T> {
    #[inline]
    fn params(&self, model: &FmpModel<T>, tp: usize, tc: usize) -> (T, [T; 4], [T; 2]) {
        let e = &model.edges[self.edge_idx];
        if self.forward {
            let i = tp * model.types + tc;
            (e.bias[i], e.springs[i], e.anchors[i])
        } else {
            // Reversed traversal: swap roles; dx flips sign, quadratics keep it.
            let i = tc * model.types + tp;
            let w = e.springs[i];
            let a = e.anchors[i];
            (e.bias[i], [-w[0], -w[1], w[2], w[3]], [-a[0], -a[1]])
        }
    }
}

/// Traversal structure: post-order node list and, for each non-root node, the
/// oriented edge to its traversal parent.
struct Traversal<T> {
    post_order: Vec<usize>,
    up_edge: Vec<Option<OrientedEdge<T>>>,
    children: Vec<Vec<usize>>,
}

fn build_traversal<T: Real>(model: &FmpModel<T>) -> Traversal<T> {
    let k = model.parts;
    let mut adj: Vec<Vec<(usize, bool)>> = vec![Vec::new(); k];
    for (ei, e) in model.edges.iter().enumerate() {
        adj[e.parent].push((ei, true));
        adj[e.child].push((ei, false));
    }
    let mut up_edge: Vec<Option<OrientedEdge<T>>> = (0..k).map(|_| None).collect();
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
            up_edge[other] = Some(OrientedEdge {
                forward: stored_parent_here,
                edge_idx: ei,
                _phantom: std::marker::PhantomData,
            });
            stack.push(other);
        }
    }
    order.reverse(); // children before parents
    Traversal { post_order: order, up_edge, children }
}

/// Per-part state constraint inside one subspace.
#[derive(Debug, Clone, Copy)]
enum NodeConstraint<'a> {
    Free,
    Clamp(u64),
    Exclude(&'a [u64]),
}

impl NodeConstraint<'_> {
    #[inline]
    fn blocks(&self, packed: u64) -> bool {
        match self {
            NodeConstraint::Free => false,
            NodeConstraint::Clamp(s) => *s != packed,
            NodeConstraint::Exclude(xs) => xs.contains(&packed),
        }
    }
}

/// Message from `child` to `parent` for every (parent state, parent type):
/// values plus backtracking arguments (tc, qx, qy).
struct Message<T> {
    values: Vec<T>,          // [tp * gh * gw]
    args: Vec<(u16, u16, u16)>, // (tc, qx, qy)
}

#[allow(clippy::too_many_arguments)]
fn edge_message<T: Real>(
    model: &FmpModel<T>,
    edge: &OrientedEdge<T>,
    child_score: &[T], // [tc * gh * gw]
    gw: usize,
    gh: usize,
) -> Message<T> {
    let types = model.types;
    let cells = gw * gh;
    let mut values = vec![T::neg_huge(); types * cells];
    let mut args = vec![(0u16, 0u16, 0u16); types * cells];
    let mut rows = vec![T::zero(); cells];
    let mut rows_arg = vec![0usize; cells];
    let mut col_in = vec![T::zero(); gh];
    let mut col_out = vec![T::zero(); gh];
    let mut col_arg = vec![0usize; gh];
    let mut row_out = vec![T::zero(); gw];
    let mut row_arg = vec![0usize; gw];
    for tp in 0..types {
        for tc in 0..types {
            let (bias, w, anchor) = edge.params(model, tp, tc);
            let ax = w[2].min(T::of(QUAD_CLAMP));
            let ay = w[3].min(T::of(QUAD_CLAMP));
            let shift_x = anchor[0] - w[0] / (ax + ax);
            let shift_y = anchor[1] - w[1] / (ay + ay);
            let constant = bias - w[0] * w[0] / (T::of(4.0) * ax) - w[1] * w[1] / (T::of(4.0) * ay);
            let f = &child_score[tc * cells..(tc + 1) * cells];
            // Rows: transform over child cx for each child row.
            for cy in 0..gh {
                gdt_max_1d(&f[cy * gw..(cy + 1) * gw], ax, shift_x, &mut row_out, &mut row_arg);
                rows[cy * gw..(cy + 1) * gw].copy_from_slice(&row_out);
                rows_arg[cy * gw..(cy + 1) * gw].copy_from_slice(&row_arg);
            }
            // Columns: transform over child cy for each parent px.
            for px in 0..gw {
                for cy in 0..gh {
                    col_in[cy] = rows[cy * gw + px];
                }
                gdt_max_1d(&col_in, ay, shift_y, &mut col_out, &mut col_arg);
                for py in 0..gh {
                    let v = col_out[py] + constant;
                    let slot = tp * cells + py * gw + px;
                    if v > values[slot] {
                        let qy = col_arg[py];
                        let qx = rows_arg[qy * gw + px];
                        values[slot] = v;
                        args[slot] = (tc as u16, qx as u16, qy as u16);
                    }
                }
            }
        }
    }
    Message { values, args }
}

/// One level's DP state: per-node accumulated scores and per-node messages.
struct LevelDp<T> {
    up: Vec<Vec<T>>,            // [node][tau * gh * gw]
    msgs: Vec<Option<Message<T>>>, // message from node to its traversal parent
}

fn run_up_pass<T: Real>(
    model: &FmpModel<T>,
    maps: &UnaryMaps<T>,
    trav: &Traversal<T>,
    level: usize,
    constraints: &[NodeConstraint<'_>],
    anchor: usize,
    forbidden_roots: &std::collections::HashSet<(usize, usize, usize)>,
) -> LevelDp<T> {
    let (gw, gh) = maps.level_dims[level];
    let cells = gw * gh;
    let types = model.types;
    let mut up: Vec<Vec<T>> = vec![Vec::new(); model.parts];
    let mut msgs: Vec<Option<Message<T>>> = (0..model.parts).map(|_| None).collect();
    for &node in &trav.post_order {
        let mut score = vec![T::zero(); types * cells];
        let sentinel = T::neg_huge();
        for tau in 0..types {
            let grid: &ResponseGrid<T> = &maps.grids[node][tau][level];
            let b = model.bias[node][tau];
            for cy in 0..gh {
                for cx in 0..gw {
                    let packed = pack_state(level, cy, cx, tau);
                    let slot = tau * cells + cy * gw + cx;
                    let blocked = constraints[node].blocks(packed)
                        || (node == anchor
                            && !forbidden_roots.is_empty()
                            && forbidden_roots.contains(&(level, cy, cx)));
                    score[slot] = if blocked { sentinel } else { grid.at(cx, cy) + b };
                }
            }
        }
        for &c in &trav.children[node] {
            let msg = msgs[c].as_ref().expect("child processed before parent");
            for slot in 0..types * cells {
                score[slot] += msg.values[slot];
            }
        }
        if let Some(edge) = &trav.up_edge[node] {
            msgs[node] = Some(edge_message(model, edge, &score, gw, gh));
        }
        up[node] = score;
    }
    LevelDp { up, msgs }
}

/// Scan the root table for the best state; ties resolve to the smallest
/// (cy, cx, tau).
fn root_argmax<T: Real>(root_score: &[T], gw: usize, gh: usize, types: usize) -> (T, usize, usize, usize) {
    let cells = gw * gh;
    let mut best = (T::neg_infinity(), 0usize, 0usize, 0usize);
    for cy in 0..gh {
        for cx in 0..gw {
            for tau in 0..types {
                let v = root_score[tau * cells + cy * gw + cx];
                if v > best.0 {
                    best = (v, cy, cx, tau);
                }
            }
        }
    }
    best
}

fn backtrack<T: Real>(
    trav: &Traversal<T>,
    dp: &LevelDp<T>,
    level: usize,
    gw: usize,
    cells: usize,
    root_state: (usize, usize, usize),
) -> Vec<u64> {
    let parts = trav.children.len();
    let mut config = vec![0u64; parts];
    let (cy, cx, tau) = root_state;
    config[0] = pack_state(level, cy, cx, tau);
    let mut stack = vec![(0usize, cy, cx, tau)];
    while let Some((node, ny, nx, ntau)) = stack.pop() {
        for &c in &trav.children[node] {
            let msg = dp.msgs[c].as_ref().unwrap();
            let (tc, qx, qy) = msg.args[ntau * cells + ny * gw + nx];
            let (ctau, ccx, ccy) = (tc as usize, qx as usize, qy as usize);
            config[c] = pack_state(level, ccy, ccx, ctau);
            stack.push((c, ccy, ccx, ctau));
        }
    }
    config
}

/// Reusable inference state for one (model, pyramid) pair: the traversal,
/// unary maps reference, and cached unconstrained per-level solutions.
pub struct InferenceContext<'a, T: Real> {
    model: &'a FmpModel<T>,
    pyr: &'a HogPyramid<T>,
    maps: &'a UnaryMaps<T>,
    trav: Traversal<T>,
    level_cache: Vec<Option<Option<(T, Vec<u64>)>>>,
    /// Cells of the anchor part suppressed by already-accepted candidates.
    forbidden_roots: std::collections::HashSet<(usize, usize, usize)>,
    /// The part the suppression balls apply to.
    anchor: usize,
    /// Bumped whenever the forbidden set grows; invalidates the level cache.
    epoch: usize,
    cache_epoch: usize,
}

impl<'a, T: Real> InferenceContext<'a, T> {
    pub fn new(
        model: &'a FmpModel<T>,
        pyr: &'a HogPyramid<T>,
        maps: &'a UnaryMaps<T>,
    ) -> Result<Self, FmpError> {
        model.validate()?;
        if maps.level_dims.iter().all(|&(w, h)| w == 0 || h == 0) {
            return Err(FmpError::ImageTooSmall);
        }
        let trav = build_traversal(model);
        let levels = pyr.levels.len();
        Ok(Self {
            model,
            pyr,
            maps,
            trav,
            level_cache: vec![None; levels],
            forbidden_roots: std::collections::HashSet::new(),
            anchor: 0,
            epoch: 0,
            cache_epoch: 0,
        })
    }

    /// Reset the suppression state and point it at a new anchor part.
    fn reset_anchor(&mut self, anchor: usize) {
        self.anchor = anchor;
        if !self.forbidden_roots.is_empty() {
            self.forbidden_roots.clear();
            self.epoch += 1;
        }
    }

    /// Suppress all root cells whose template center lies strictly within
    /// `radius` image px of `(x, y)`, on every level.
    fn forbid_root_ball(&mut self, x: T, y: T, radius: T) {
        let tc = self.model.template_cells;
        let mut grew = false;
        for (level, &(gw, gh)) in self.maps.level_dims.iter().enumerate() {
            for cy in 0..gh {
                for cx in 0..gw {
                    let (px, py) = self.pyr.template_center(level, cx, cy, tc);
                    let d = ((px - x) * (px - x) + (py - y) * (py - y)).sqrt();
                    if d < radius {
                        grew |= self.forbidden_roots.insert((level, cy, cx));
                    }
                }
            }
        }
        if grew {
            self.epoch += 1;
        }
    }

    fn anchor_suppressed(&self, config: &[u64]) -> bool {
        let (level, cy, cx, _) = unpack_state(config[self.anchor]);
        self.forbidden_roots.contains(&(level, cy, cx))
    }

    fn solve_level(&self, level: usize, constraints: &[NodeConstraint<'_>]) -> Option<(T, Vec<u64>)> {
        let (gw, gh) = self.maps.level_dims[level];
        if gw == 0 || gh == 0 {
            return None;
        }
        let dp = run_up_pass(
            self.model,
            self.maps,
            &self.trav,
            level,
            constraints,
            self.anchor,
            &self.forbidden_roots,
        );
        let cells = gw * gh;
        let (score, cy, cx, tau) = root_argmax(&dp.up[0], gw, gh, self.model.types);
        if score <= T::of(SCORE_FLOOR) {
            return None;
        }
        let config = backtrack(&self.trav, &dp, level, gw, cells, (cy, cx, tau));
        Some((score, config))
    }

    fn solve_unconstrained_level(&mut self, level: usize) -> Option<(T, Vec<u64>)> {
        if self.cache_epoch != self.epoch {
            self.level_cache.iter_mut().for_each(|c| *c = None);
            self.cache_epoch = self.epoch;
        }
        if self.level_cache[level].is_none() {
            let free = vec![NodeConstraint::Free; self.model.parts];
            self.level_cache[level] = Some(self.solve_level(level, &free));
        }
        self.level_cache[level].clone().unwrap()
    }

    /// Best configuration within a subspace, or None when empty/blocked.
    fn solve_subspace(&mut self, space: &SubSpace) -> Option<(T, Vec<u64>)> {
        // Clamps pin the level; disagreeing clamps make the space empty.
        let clamp_level = space.prefix.first().map(|&s| unpack_state(s).0);
        if let Some(l) = clamp_level {
            if space.prefix.iter().any(|&s| unpack_state(s).0 != l) {
                return None;
            }
            let constraints = self.subspace_constraints(space);
            return self.solve_level(l, &constraints);
        }
        // No clamps: exclusions at part 0 only matter on their own levels.
        let mut best: Option<(T, Vec<u64>)> = None;
        for level in 0..self.maps.level_dims.len() {
            let touched = space.excluded.iter().any(|&s| unpack_state(s).0 == level);
            let sol = if touched {
                let constraints = self.subspace_constraints(space);
                self.solve_level(level, &constraints)
            } else {
                self.solve_unconstrained_level(level)
            };
            if let Some((s, cfg)) = sol {
                if best.as_ref().map_or(true, |(bs, _)| s > *bs) {
                    best = Some((s, cfg));
                }
            }
        }
        best
    }

    fn subspace_constraints<'s>(&self, space: &'s SubSpace) -> Vec<NodeConstraint<'s>> {
        let mut constraints = vec![NodeConstraint::Free; self.model.parts];
        for (i, &s) in space.prefix.iter().enumerate() {
            constraints[i] = NodeConstraint::Clamp(s);
        }
        if space.prefix.len() < self.model.parts && !space.excluded.is_empty() {
            constraints[space.prefix.len()] = NodeConstraint::Exclude(&space.excluded);
        }
        constraints
    }

    fn decode(&self, score: T, config: &[u64]) -> PoseCandidate<T> {
        let tc = self.model.template_cells;
        let parts = config
            .iter()
            .enumerate()
            .map(|(part, &s)| {
                let (level, cy, cx, tau) = unpack_state(s);
                let (x, y) = self.pyr.template_center(level, cx, cy, tc);
                PartLocation { part, level, cx, cy, tau, x, y }
            })
            .collect();
        PoseCandidate { parts, states: None, score }
    }
}

/// Exact best configuration over all levels, locations and types. Ties resolve
/// to the smallest (level, part-0 y, part-0 x, part-0 type).
pub fn infer_best<T: Real>(
    model: &FmpModel<T>,
    pyr: &HogPyramid<T>,
    maps: &UnaryMaps<T>,
) -> Result<PoseCandidate<T>, FmpError> {
    let mut ctx = InferenceContext::new(model, pyr, maps)?;
    let sol = ctx.solve_subspace(&SubSpace::default()).ok_or(FmpError::ImageTooSmall)?;
    Ok(ctx.decode(sol.0, &sol.1))
}

/// Exact M-best configurations, scores non-increasing.
///
/// With `nms_radius > 0`, candidates are extracted in K streams, one per
/// anchor part: within a stream, configurations whose anchor-part center
/// lies strictly within the radius of an already accepted candidate's same
/// part are suppressed (never enumerated: the suppression balls become state
/// exclusions inside the solver). The streams' outputs are merged, deduped
/// and sorted. With `nms_radius = 0` the streams coincide, so a single exact
/// extraction returns the global top-M.
pub fn infer_m_best<T: Real>(
    model: &FmpModel<T>,
    pyr: &HogPyramid<T>,
    maps: &UnaryMaps<T>,
    m: usize,
    nms_radius: T,
) -> Result<Vec<PoseCandidate<T>>, FmpError> {
    assert!(m >= 1, "M must be >= 1");
    let mut ctx = InferenceContext::new(model, pyr, maps)?;
    let mut merged: Vec<(T, Vec<u64>)> = Vec::new();
    if nms_radius > T::zero() {
        let per_stream = m.div_ceil(model.parts);
        for anchor in 0..model.parts {
            ctx.reset_anchor(anchor);
            merged.extend(extract_stream(&mut ctx, per_stream, nms_radius));
        }
        merged.sort_by(|a, b| {
            b.0.partial_cmp(&a.0).expect("finite scores").then(a.1.cmp(&b.1))
        });
        merged.dedup_by(|a, b| a.1 == b.1);
        merged.truncate(m);
    } else {
        merged = extract_stream(&mut ctx, m, T::zero());
    }
    Ok(merged.into_iter().map(|(s, cfg)| ctx.decode(s, &cfg)).collect())
}

/// One exact extraction stream over the subspace partition queue, with lazy
/// child expansion and lazy revalidation against the growing suppression set.
fn extract_stream<T: Real>(
    ctx: &mut InferenceContext<'_, T>,
    m: usize,
    nms_radius: T,
) -> Vec<(T, Vec<u64>)> {
    enum Entry<T> {
        /// Solved subspace with its best configuration.
        Solved { score: T, config: Vec<u64>, space: SubSpace, epoch: usize },
        /// Unsolved subspace bounded above by its parent's score.
        Pending { bound: T, space: SubSpace },
    }
    impl<T: Real> Entry<T> {
        fn key(&self) -> (T, &[u64]) {
            match self {
                Entry::Solved { score, config, .. } => (*score, config),
                Entry::Pending { bound, .. } => (*bound, &[]),
            }
        }
    }
    impl<T: Real> PartialEq for Entry<T> {
        fn eq(&self, other: &Self) -> bool {
            self.key() == other.key()
        }
    }
    impl<T: Real> Eq for Entry<T> {}
    impl<T: Real> Ord for Entry<T> {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            let (sa, ca) = self.key();
            let (sb, cb) = other.key();
            match sa.partial_cmp(&sb).expect("finite scores") {
                // Pending entries (empty config) sort above solved ties so
                // their true scores get resolved before emission.
                std::cmp::Ordering::Equal => cb.cmp(ca),
                ord => ord,
            }
        }
    }
    impl<T: Real> PartialOrd for Entry<T> {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    let parts = ctx.model.parts;
    let tc = ctx.model.template_cells;
    let mut heap = std::collections::BinaryHeap::new();
    heap.push(Entry::Pending { bound: T::infinity(), space: SubSpace::default() });
    let mut out: Vec<(T, Vec<u64>)> = Vec::new();
    while out.len() < m {
        let Some(entry) = heap.pop() else { break };
        match entry {
            Entry::Pending { space, .. } => {
                if let Some((score, config)) = ctx.solve_subspace(&space) {
                    heap.push(Entry::Solved { score, config, space, epoch: ctx.epoch });
                }
            }
            Entry::Solved { score, config, space, epoch } => {
                if epoch != ctx.epoch && ctx.anchor_suppressed(&config) {
                    // The best of this subspace got suppressed; re-solve.
                    if let Some((score, config)) = ctx.solve_subspace(&space) {
                        heap.push(Entry::Solved { score, config, space, epoch: ctx.epoch });
                    }
                    continue;
                }
                let base = space.prefix.len();
                for j in base..parts {
                    let mut excluded =
                        if j == base { space.excluded.clone() } else { Vec::new() };
                    excluded.push(config[j]);
                    let child = SubSpace { prefix: config[..j].to_vec(), excluded };
                    heap.push(Entry::Pending { bound: score, space: child });
                }
                if nms_radius > T::zero() {
                    let (level, cy, cx, _) = unpack_state(config[ctx.anchor]);
                    let (x, y) = ctx.pyr.template_center(level, cx, cy, tc);
                    ctx.forbid_root_ball(x, y, nms_radius);
                }
                out.push((score, config));
            }
        }
    }
    out
}

/// Max-marginal tables: for every (part, type, level, cy, cx), the best total
/// score among configurations placing that part there.
pub struct MaxMarginals<T> {
    /// `[part][tau][level]`.
    pub tables: Vec<Vec<Vec<ResponseGrid<T>>>>,
}

impl<T: Real> MaxMarginals<T> {
    pub fn global_max(&self) -> T {
        let mut best = T::neg_infinity();
        for per_part in &self.tables {
            for per_tau in per_part {
                for grid in per_tau {
                    for &v in &grid.v {
                        if v > best {
                            best = v;
                        }
                    }
                }
            }
        }
        best
    }

    /// Max over one part's table.
    pub fn part_max(&self, part: usize) -> T {
        let mut best = T::neg_infinity();
        for per_tau in &self.tables[part] {
            for grid in per_tau {
                for &v in &grid.v {
                    if v > best {
                        best = v;
                    }
                }
            }
        }
        best
    }
}

/// Two-way (forward + backward) pass producing max-marginals at every node.
pub fn max_marginals<T: Real>(
    model: &FmpModel<T>,
    pyr: &HogPyramid<T>,
    maps: &UnaryMaps<T>,
) -> Result<MaxMarginals<T>, FmpError> {
    model.validate()?;
    if maps.level_dims.iter().all(|&(w, h)| w == 0 || h == 0) {
        return Err(FmpError::ImageTooSmall);
    }
    let trav = build_traversal(model);
    let types = model.types;
    let mut tables: Vec<Vec<Vec<ResponseGrid<T>>>> = (0..model.parts)
        .map(|_| (0..types).map(|_| Vec::with_capacity(pyr.levels.len())).collect())
        .collect();
    for level in 0..pyr.levels.len() {
        let (gw, gh) = maps.level_dims[level];
        if gw == 0 || gh == 0 {
            for per_part in tables.iter_mut() {
                for per_tau in per_part.iter_mut() {
                    per_tau.push(ResponseGrid { w: 0, h: 0, v: Vec::new() });
                }
            }
            continue;
        }
        let cells = gw * gh;
        let free = vec![NodeConstraint::Free; model.parts];
        let empty = std::collections::HashSet::new();
        let dp = run_up_pass(model, maps, &trav, level, &free, 0, &empty);
        // Backward pass in reverse post-order (parents before children).
        let mut down: Vec<Vec<T>> = vec![vec![T::zero(); types * cells]; model.parts];
        for &node in trav.post_order.iter().rev() {
            for &c in &trav.children[node] {
                // Parent evidence excluding the child's own subtree.
                let msg = dp.msgs[c].as_ref().unwrap();
                let mut pre = vec![T::zero(); types * cells];
                for slot in 0..types * cells {
                    pre[slot] = dp.up[node][slot] + down[node][slot] - msg.values[slot];
                }
                let edge = trav.up_edge[c].as_ref().unwrap();
                down[c] = downward_message(model, edge, &pre, gw, gh);
            }
        }
        for part in 0..model.parts {
            for tau in 0..types {
                let mut v = vec![T::zero(); cells];
                for i in 0..cells {
                    v[i] = dp.up[part][tau * cells + i] + down[part][tau * cells + i];
                }
                tables[part][tau].push(ResponseGrid { w: gw, h: gh, v });
            }
        }
    }
    Ok(MaxMarginals { tables })
}

/// Message from the parent side down to `edge.child`: for each child state,
/// max over parent states of (parent evidence + pairwise term).
fn downward_message<T: Real>(
    model: &FmpModel<T>,
    edge: &OrientedEdge<T>,
    pre: &[T], // [tp * gh * gw]
    gw: usize,
    gh: usize,
) -> Vec<T> {
    let types = model.types;
    let cells = gw * gh;
    let mut out = vec![T::neg_huge(); types * cells];
    let mut rows = vec![T::zero(); cells];
    let mut col_in = vec![T::zero(); gh];
    let mut col_out = vec![T::zero(); gh];
    let mut col_arg = vec![0usize; gh];
    let mut row_out = vec![T::zero(); gw];
    let mut row_arg = vec![0usize; gw];
    for tc in 0..types {
        for tp in 0..types {
            let (bias, w, anchor) = edge.params(model, tp, tc);
            let ax = w[2].min(T::of(QUAD_CLAMP));
            let ay = w[3].min(T::of(QUAD_CLAMP));
            // As a function of the parent state the linear terms and anchor
            // flip sign, the quadratics are unchanged.
            let shift_x = -anchor[0] + w[0] / (ax + ax);
            let shift_y = -anchor[1] + w[1] / (ay + ay);
            let constant = bias - w[0] * w[0] / (T::of(4.0) * ax) - w[1] * w[1] / (T::of(4.0) * ay);
            let f = &pre[tp * cells..(tp + 1) * cells];
            for py in 0..gh {
                gdt_max_1d(&f[py * gw..(py + 1) * gw], ax, shift_x, &mut row_out, &mut row_arg);
                rows[py * gw..(py + 1) * gw].copy_from_slice(&row_out);
            }
            for cx in 0..gw {
                for py in 0..gh {
                    col_in[py] = rows[py * gw + cx];
                }
                gdt_max_1d(&col_in, ay, shift_y, &mut col_out, &mut col_arg);
                for cy in 0..gh {
                    let v = col_out[cy] + constant;
                    let slot = tc * cells + cy * gw + cx;
                    if v > out[slot] {
                        out[slot] = v;
                    }
                }
            }
        }
    }
    out
}
