//! Skeletal shape geometry: full part states, silhouette tangent points,
//! bi-arc interpolation, shape fragments, the chamfer consistency term and
//! the 5-component relative-placement descriptor.
//!
//! Conventions used throughout generation, learning and scoring:
//! - a part's silhouette tangent points sit at distance `r` perpendicular to
//!   the axis orientation `theta`; their directions are `theta +- eta`;
//! - boundary curves between adjacent parts are G1 circular bi-arcs with the
//!   symmetric (equal tangent length) junction rule;
//! - when interpolating between two parts, endpoint tangent directions are
//!   flipped by pi where needed so they point along the connecting chord.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{chamfer_query, OrientedDistanceTransform};
use crate::geom::{wrap_angle, wrap_orientation, Point2};
use crate::real::Real;

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

/// Full per-part shape state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartState<T> {
    pub x: T,
    pub y: T,
    /// Half-width of the body at this part, > 0.
    pub r: T,
    /// Axis orientation, wrapped to (-pi, pi].
    pub theta: T,
    /// Flaring angle of the silhouette tangents away from the axis, |eta| < pi/2.
    pub eta: T,
    /// Appearance type index.
    pub tau: usize,
}

impl<T: Real> PartState<T> {
    pub fn new(x: T, y: T, r: T, theta: T, eta: T, tau: usize) -> Self {
        Self { x, y, r, theta: wrap_angle(theta), eta, tau }
    }

    pub fn center(&self) -> Point2<T> {
        Point2::new(self.x, self.y)
    }
}

/// A point on a curve together with the curve direction there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray<T> {
    pub point: Point2<T>,
    pub direction: T,
}

/// The two silhouette tangent points of a part: offset `r` perpendicular to
/// the axis on either side, with directions `theta + eta` (left, the
/// `theta + pi/2` side) and `theta - eta` (right).
pub fn tangent_points<T: Real>(z: &PartState<T>) -> (Ray<T>, Ray<T>) {
    let half_pi = T::FRAC_PI_2();
    let c = z.center();
    let left = Ray {
        point: c.add(Point2::from_angle(z.theta + half_pi).scale(z.r)),
        direction: z.theta + z.eta,
    };
    let right = Ray {
        point: c.add(Point2::from_angle(z.theta - half_pi).scale(z.r)),
        direction: z.theta - z.eta,
    };
    (left, right)
}

/// One circular arc (or straight segment, curvature ~ 0), parameterized by
/// arc length from its start point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc<T> {
    pub start: Point2<T>,
    pub start_direction: T,
    pub curvature: T,
    pub length: T,
}

impl<T: Real> Arc<T> {
    /// Point at arc length `s` from the start.
    pub fn point_at(&self, s: T) -> Point2<T> {
        let kappa = self.curvature;
        if kappa.abs() < T::of(1e-12) {
            return self.start.add(Point2::from_angle(self.start_direction).scale(s));
        }
        let a0 = self.start_direction;
        let a1 = a0 + kappa * s;
        let inv = T::one() / kappa;
        Point2::new(
            self.start.x + (a1.sin() - a0.sin()) * inv,
            self.start.y - (a1.cos() - a0.cos()) * inv,
        )
    }

    pub fn direction_at(&self, s: T) -> T {
        self.start_direction + self.curvature * s
    }

    pub fn end(&self) -> Point2<T> {
        self.point_at(self.length)
    }

    pub fn end_direction(&self) -> T {
        self.direction_at(self.length)
    }

    /// Center of the supporting circle, if the arc is curved.
    pub fn center(&self) -> Option<Point2<T>> {
        if self.curvature.abs() < T::of(1e-12) {
            None
        } else {
            let n = Point2::from_angle(self.start_direction + T::FRAC_PI_2());
            Some(self.start.add(n.scale(T::one() / self.curvature)))
        }
    }

    pub fn radius(&self) -> Option<T> {
        self.center().map(|_| (T::one() / self.curvature).abs())
    }

    /// Signed sweep angle.
    pub fn sweep(&self) -> T {
        self.curvature * self.length
    }

    /// Start angle on the supporting circle (angle from center to start).
    pub fn start_angle(&self) -> Option<T> {
        self.center().map(|c| self.start.sub(c).angle())
    }
}

/// Pair of circular arcs joined with tangent continuity, interpolating a
/// start and end point with prescribed directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biarc<T> {
    pub first: Arc<T>,
    pub second: Arc<T>,
}

impl<T: Real> Biarc<T> {
    pub fn length(&self) -> T {
        self.first.length + self.second.length
    }

    pub fn junction(&self) -> Point2<T> {
        self.first.end()
    }

    pub fn start(&self) -> Point2<T> {
        self.first.start
    }

    pub fn end(&self) -> Point2<T> {
        self.second.end()
    }

    pub fn start_direction(&self) -> T {
        self.first.start_direction
    }

    pub fn end_direction(&self) -> T {
        self.second.end_direction()
    }

    pub fn point_at(&self, s: T) -> Point2<T> {
        if s <= self.first.length {
            self.first.point_at(s)
        } else {
            self.second.point_at(s - self.first.length)
        }
    }

    pub fn direction_at(&self, s: T) -> T {
        if s <= self.first.length {
            self.first.direction_at(s)
        } else {
            self.second.direction_at(s - self.first.length)
        }
    }
}

/// Arc from `p` with direction `t` through `q`, using the isoceles control
/// polygon relation (tangent at `q` mirrors `t` about the chord).
fn arc_through<T: Real>(p: Point2<T>, t: T, q: Point2<T>) -> Arc<T> {
    let chord = q.sub(p);
    let c = chord.norm();
    let tv = Point2::from_angle(t);
    // Signed half-angle between tangent and chord.
    let sin_phi = tv.cross(chord) / c;
    let cos_phi = tv.dot(chord) / c;
    let phi = sin_phi.atan2(cos_phi);
    if sin_phi.abs() < T::of(1e-12) && cos_phi > T::zero() {
        return Arc { start: p, start_direction: t, curvature: T::zero(), length: c };
    }
    let curvature = T::of(2.0) * sin_phi / c;
    if curvature == T::zero() || !curvature.is_finite() {
        // Exactly anti-parallel tangent: no circular arc reaches q; degrade
        // to the chord segment.
        return Arc { start: p, start_direction: t, curvature: T::zero(), length: c };
    }
    // Arc length: total turn 2*phi over curvature kappa.
    let length = (T::of(2.0) * phi / curvature).abs();
    Arc { start: p, start_direction: t, curvature, length }
}

/// G1 bi-arc interpolating (`p0`, direction `t0`) to (`p1`, direction `t1`)
/// with the symmetric equal-tangent-length junction rule. Collinear inputs
/// degenerate to a straight segment split in two zero-curvature arcs.
pub fn biarc<T: Real>(p0: Point2<T>, t0: T, p1: Point2<T>, t1: T) -> Result<Biarc<T>, ShapeError> {
    let w = p1.sub(p0);
    let d2 = w.dot(w);
    if d2 == T::zero() {
        return Err(ShapeError::DegenerateInput("coincident biarc endpoints".into()));
    }
    let tv0 = Point2::from_angle(t0);
    let tv1 = Point2::from_angle(t1);
    let s = tv0.add(tv1);
    let ws = w.dot(s);
    let four = T::of(4.0);
    // Tangent length L solving |p0 + L t0 - (p1 - L t1)| = 2L, in the
    // cancellation-free rational form.
    let disc = (ws * ws + (four - s.dot(s)) * d2).max(T::zero()).sqrt();
    let denom = ws + disc;
    let l = if denom > T::of(1e-12) * d2.sqrt() {
        d2 / denom
    } else {
        // Anti-parallel tangents pointing away from the chord: no symmetric
        // solution exists; fall back to a half-chord tangent length.
        d2.sqrt() * T::of(0.5)
    };
    let a = p0.add(tv0.scale(l));
    let b = p1.sub(tv1.scale(l));
    let j = a.add(b).scale(T::of(0.5));
    let first = arc_through(p0, t0, j);
    // Second arc built backward from p1 so its endpoint constraints hold
    // exactly, then flipped.
    let rev = arc_through(p1, t1 + T::PI(), j);
    let second = Arc {
        start: j,
        start_direction: wrap_angle(rev.end_direction() + T::PI()),
        curvature: -rev.curvature,
        length: rev.length,
    };
    Ok(Biarc { first, second })
}

/// A sampled point on a fragment boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySample<T> {
    pub point: Point2<T>,
    /// Undirected tangent orientation in [0, pi).
    pub orientation: T,
}

/// The silhouette region between two adjacent parts: left and right boundary
/// bi-arcs, the medial-axis bi-arc, and boundary samples at fixed spacing.
#[derive(Debug, Clone)]
pub struct ShapeFragment<T> {
    pub left: Biarc<T>,
    pub right: Biarc<T>,
    pub axis: Biarc<T>,
    pub left_samples: Vec<BoundarySample<T>>,
    pub right_samples: Vec<BoundarySample<T>>,
}

/// Flip `direction` by pi if it points against the chord from `from` to `to`,
/// so curves are traversed toward the second part regardless of how the part
/// axis is oriented.
pub(crate) fn align_direction<T: Real>(direction: T, from: Point2<T>, to: Point2<T>) -> T {
    let chord = to.sub(from);
    if Point2::from_angle(direction).dot(chord) < T::zero() {
        direction + T::PI()
    } else {
        direction
    }
}

fn sample_biarc<T: Real>(curve: &Biarc<T>, step: T) -> Vec<BoundarySample<T>> {
    let len = curve.length();
    let n = (len / step).ceil().f64() as usize + 1;
    let n = n.max(2);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let s = len * T::of_usize(i) / T::of_usize(n - 1);
        out.push(BoundarySample {
            point: curve.point_at(s),
            orientation: wrap_orientation(curve.direction_at(s)),
        });
    }
    out
}

fn boundary_between<T: Real>(a: Ray<T>, b: Ray<T>) -> Result<Biarc<T>, ShapeError> {
    let ta = align_direction(a.direction, a.point, b.point);
    let tb = align_direction(b.direction, a.point, b.point);
    biarc(a.point, ta, b.point, tb)
}

/// Medial-axis bi-arc between two part states.
pub fn axis_biarc<T: Real>(zi: &PartState<T>, zj: &PartState<T>) -> Result<Biarc<T>, ShapeError> {
    let ai = Ray { point: zi.center(), direction: zi.theta };
    let aj = Ray { point: zj.center(), direction: zj.theta };
    boundary_between(ai, aj)
}

/// Build the shape fragment between two adjacent parts, sampling both
/// silhouette boundaries at spacing <= `step`.
pub fn fragment_boundary<T: Real>(
    zi: &PartState<T>,
    zj: &PartState<T>,
    step: T,
) -> Result<ShapeFragment<T>, ShapeError> {
    if zi.center() == zj.center() {
        return Err(ShapeError::DegenerateInput("coincident part centers".into()));
    }
    let (li, ri) = tangent_points(zi);
    let (lj, rj) = tangent_points(zj);
    let left = boundary_between(li, lj)?;
    let right = boundary_between(ri, rj)?;
    let axis = axis_biarc(zi, zj)?;
    let left_samples = sample_biarc(&left, step);
    let right_samples = sample_biarc(&right, step);
    Ok(ShapeFragment { left, right, axis, left_samples, right_samples })
}

/// Relative-placement descriptor of an adjacent part pair:
/// `[L/r_i, alpha_i, r_j/r_i, wrap(theta_i - theta_j), eta_i - eta_j]`
/// where `L` is the center distance and `alpha_i` the angle from the axis of
/// part `i` to the connecting direction.
pub fn geometric_descriptor<T: Real>(zi: &PartState<T>, zj: &PartState<T>) -> [T; 5] {
    let v = zj.center().sub(zi.center());
    let l = v.norm();
    let alpha = wrap_angle(v.angle() - zi.theta);
    [l / zi.r, alpha, zj.r / zi.r, wrap_angle(zi.theta - zj.theta), zi.eta - zj.eta]
}

/// Mean oriented chamfer distance of the fragment's silhouette boundaries
/// against an edge map's distance fields. Boundary points only; the medial
/// axis does not contribute.
pub fn shape_consistency<T: Real>(
    zi: &PartState<T>,
    zj: &PartState<T>,
    odt: &OrientedDistanceTransform<T>,
    step: T,
) -> Result<T, ShapeError> {
    let frag = fragment_boundary(zi, zj, step)?;
    Ok(fragment_consistency(&frag, odt))
}

/// Chamfer consistency of an already-built fragment.
pub fn fragment_consistency<T: Real>(
    frag: &ShapeFragment<T>,
    odt: &OrientedDistanceTransform<T>,
) -> T {
    let mut total = T::zero();
    let mut count = 0usize;
    for s in frag.left_samples.iter().chain(frag.right_samples.iter()) {
        total += chamfer_query(odt, s.point.x, s.point.y, s.orientation);
        count += 1;
    }
    total / T::of_usize(count)
}
