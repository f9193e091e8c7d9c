//! A numerical laboratory for deforming minimal surfaces in R^3 on planar
//! genus-zero domains: Weierstrass data with an evaluable expression engine,
//! Runge-type parameter functions with period closure, convex-body geometry,
//! the labyrinth / properness / completeness deformation engines, and
//! finitely truncated construction drivers that emit verified immersion
//! meshes plus per-round certificates.

pub mod convex;
pub mod deform;
pub mod domain;
pub mod error;
pub mod holo;
pub mod labyrinth;
pub mod mesh;
pub mod quad;
pub mod runge;
pub mod weierstrass;

pub use holo::HoloMap;
pub use weierstrass::{Frame, WeierstrassData};
