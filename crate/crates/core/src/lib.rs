//! Shooting-and-bouncing-rays kernels for monostatic radar cross section.
//!
//! The crate is `no_std` (it needs only `alloc`) and holds the pure numeric
//! pipeline: triangle geometry, BVH construction and closest-hit traversal,
//! aperture ray launching with multi-bounce specular transport, the
//! physical-optics backscatter sum, and a Mie-series oracle for PEC spheres.
//!
//! File formats, configuration, worker pools and the CLI live in the `sbr`
//! crate. Anything here that can run in parallel is expressed over the
//! [`Join`] trait so the caller picks the scheduler without changing the
//! arithmetic.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bvh;
pub mod geometry;
pub mod join;
pub mod mie;
pub mod po;
pub mod real;
pub mod transport;
pub mod vec3;

pub use bvh::{Bvh, BvhNode, BuildParams, Hit, NodeKind, SplitRule};
pub use geometry::{Aabb, Mesh, MeshError, Triangle};
pub use join::{Join, Sequential};
pub use po::{ComplexAmp, RcsValue, ScatterParams};
pub use real::Real;
pub use transport::{ApertureGrid, HitRecord, IncidentDirection, TraceParams};
pub use vec3::Vec3;
