//! Forward rasterization and differentiable re-projection of source views.
//!
//! [`rasterize`] produces a z-buffered [`FragmentBuffer`] with
//! perspective-correct barycentric coordinates. [`project_view`] renders a
//! source view's encoded features at a target pose by sampling the source
//! feature map at each fragment's re-projected location, and
//! [`pose_gradient`] provides the analytic derivative of that sampling path
//! with respect to the source pose.

mod features;
mod fragments;
mod gradient;
mod project;

pub use features::{encode_features, feature_pyramid};
pub use fragments::{rasterize, FragmentBuffer};
pub(crate) use gradient::pose_gradient_core;
pub use gradient::{pose_gradient, GradientResult};
pub use project::{
    bilinear_sample, interior_mask, project_view, project_view_at, ProjectedMap, SourceView,
    OCCLUSION_BOUNDARY_DIAMETER_FRACTION,
};
