//! Renders an object in arbitrary target poses by re-projecting and fusing a
//! few posed source images of a known non-textured mesh, and corrects noisy
//! source-pose annotations by gradient descent through the rasterizer.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`geometry`]: meshes, cameras, SE(3) poses, Euler conversions,
//!   projection, visibility, pose distances.
//! - [`raster`]: forward rasterization, per-view feature encoding, projection
//!   of source views to a target pose, and analytic pose gradients.
//! - [`fusion`]: median integration, softmax weight maps, weighted blending,
//!   image and smoothness losses.
//! - [`refine`]: the per-view gradient-descent pose refinement loop and the
//!   end-to-end render pipeline (fuse, refine each pose, fuse again).
//! - [`sampling`]: source-frame selection strategies, hemisphere pose grids,
//!   in-plane rotation variants.
//! - [`scenegen`]: procedural meshes, textures, ground-truth renders, color
//!   augmentation, and seeded trial sets for sensitivity experiments.
//! - [`metrics`]: ADD/ADI pose metrics, masked image metrics, and the
//!   sensitivity sweep harness.
//! - [`io`]: OBJ/PLY meshes, JSON poses/cameras/manifests, PNG images, and
//!   raw feature-map dumps.
//!
//! With the default `parallel` feature, per-view and per-trial work is
//! distributed with rayon; disabling it yields a dependency-free sequential
//! build with identical outputs.

pub mod error;
pub mod featuremap;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod par;
pub mod raster;
pub mod refine;
pub mod sampling;
pub mod scenegen;

pub use error::{Error, Result};
