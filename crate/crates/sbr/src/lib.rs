//! Radar cross section sweeps on triangle meshes: OBJ input, JSON
//! configuration, a rayon worker pool, and CSV / PPM / JSON outputs around
//! the kernels in `sbr_core`.

pub mod config;
pub mod error;
pub mod obj;
pub mod output;
pub mod parallel;
pub mod sphere;
pub mod sweep;

pub use config::SweepConfig;
pub use error::{Error, Result};
pub use sphere::{validate_sphere, SphereOptions, SphereReport};
pub use sweep::{run_sweep, run_sweep_on_mesh, SweepResult};
