//! Viola-Jones style face detection over summed-area tables.

mod cascade;
mod detect;
mod integral;

pub use cascade::{
    parse_cascade, Branch, Cascade, CascadeError, HaarFeature, SplitNode, Stage, WeakClassifier,
    WeightedRect,
};
pub use detect::{
    detect_faces, group_detections, pyramid_scales, raw_detections, select_primary_face, sort_boxes,
    DetectParams, FaceBox, WindowVerdict, MIN_VARIANCE_FRACTION,
};
pub use integral::IntegralImage;
