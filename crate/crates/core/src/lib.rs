//! Sub-Riemannian geometry learned from point clouds.
//!
//! A kernel-weighted local PCA assigns to every point a `k`-dimensional
//! subspace (the principal subbundle). Its cometric defines a Hamiltonian whose
//! normal geodesics are used to build low-dimensional submanifolds through the
//! data, chart coordinates and geometry-aware distances. Data may live in `R^d`
//! or on the unit sphere.

pub mod ambient;
pub mod cloud;
pub mod error;
pub mod geodesics;
pub mod io;
pub mod logmap;
pub mod moments;
pub mod submanifold;
pub mod subbundle;

pub use ambient::Geometry;
pub use cloud::PointCloud;
pub use error::{Error, Result};
