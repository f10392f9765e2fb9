//! Pose estimation and tracking for elongated articulated bodies.
//!
//! The pipeline has two inference stages. A mixture-of-parts tree model scores
//! HoG appearance plus pairwise placement and produces exact M-best part
//! configurations per frame. Those part locations then form a restricted state
//! space for a shape-consistent model that adds per-part radius, orientation
//! and flaring state, scores silhouette agreement against image edges via an
//! oriented chamfer distance, and returns M-best shape-consistent poses.
//! Sequences are tracked by dynamic programming over per-frame candidates with
//! a resampled-axis smoothness term. Parameters are learned with a structural
//! SVM over mined hard negatives.
//!
//! All numeric code is generic over the scalar type (see [`real::Real`]);
//! `f64` aliases for the main types live at the crate root.

pub mod config;
pub mod evalkit;
pub mod features;
pub mod fmp;
pub mod geom;
pub mod imagedata;
pub mod learning;
pub(crate) mod mbest;
pub mod model_io;
pub mod real;
pub mod scfmp;
pub mod shape;
pub mod tracking;

pub use real::Real;

// Default scalar for the CLI and type aliases below.
pub type Scalar = f64;

pub type Image = imagedata::Image<Scalar>;
pub type FrameSequence = imagedata::FrameSequence<Scalar>;
pub type Annotation = imagedata::Annotation<Scalar>;
pub type AnnotationSet = imagedata::AnnotationSet<Scalar>;
pub type Dataset = imagedata::Dataset<Scalar>;
pub type HogPyramid = features::HogPyramid<Scalar>;
pub type EdgeMap = features::EdgeMap<Scalar>;
pub type OrientedDistanceTransform = features::OrientedDistanceTransform<Scalar>;
pub type FmpModel = fmp::FmpModel<Scalar>;
pub type PartLocation = fmp::PartLocation<Scalar>;
pub type PoseCandidate = fmp::PoseCandidate<Scalar>;
pub type PartState = shape::PartState<Scalar>;
pub type Biarc = shape::Biarc<Scalar>;
pub type ShapeFragment = shape::ShapeFragment<Scalar>;
pub type ShapePriors = scfmp::ShapePriors<Scalar>;
pub type ScfmpModel = scfmp::ScfmpModel<Scalar>;
pub type StateSpace = scfmp::StateSpace<Scalar>;
pub type TrackPath = tracking::TrackPath<Scalar>;
pub type SynthConfig = evalkit::SynthConfig<Scalar>;
pub type RunConfig = config::RunConfig;
