//! Uncertainty-aware hypothesis-based path planning over semantic point
//! clouds.
//!
//! The crate is organised bottom-up:
//!
//! * [`cloud`] holds the semantic point cloud, safety classification and
//!   view fusion.
//! * [`regions`] clusters unclear points into regions with two-stage DBSCAN.
//! * [`terrain`] attaches poses to the terrain and expands motion primitives.
//! * [`planner`] grows the multi-hypothesis graph and ranks paths.
//! * [`nbv`] renders visibility and scores next-best-view candidates.
//! * [`sensor`] simulates a Bayesian semantic camera over a ground-truth scene.
//! * [`pipeline`] runs the closed loop and the evaluation protocols.
//! * [`config`], [`scenes`] and [`export`] bind everything to files.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{} vs {} (tol {:e})", a, b, tol);
    }};
}

pub mod cloud;
pub mod config;
pub mod error;
pub mod export;
pub mod geometry;
pub mod kdtree;
pub mod nbv;
pub mod pipeline;
pub mod planner;
pub mod regions;
pub mod rng;
pub mod scenes;
pub mod sensor;
pub mod terrain;

pub use error::{Error, Result};
pub use geometry::{CameraMount, Intrinsics, Pose6D};
