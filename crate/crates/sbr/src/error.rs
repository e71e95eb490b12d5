use std::io;
use std::path::PathBuf;

use sbr_core::bvh::BvhError;
use sbr_core::geometry::MeshError;
use sbr_core::mie::MieError;
use sbr_core::po::PoError;
use sbr_core::transport::{ApertureError, TraceError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {msg}", path.display())]
    Obj {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{}: {source}", path.display())]
    Mesh { path: PathBuf, source: MeshError },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    ConfigParse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(
        "ray spacing {spacing} m exceeds λ/{factor} = {limit} m at λ = {wavelength} m; \
         set allow_aliasing to run anyway"
    )]
    Sampling {
        spacing: f64,
        wavelength: f64,
        factor: f64,
        limit: f64,
    },
    #[error(transparent)]
    Bvh(#[from] BvhError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Mie(#[from] MieError),
    #[error("angle (θ={theta_deg}°, φ={phi_deg}°): {source}")]
    Aperture {
        theta_deg: f64,
        phi_deg: f64,
        source: ApertureError,
    },
    #[error("angle (θ={theta_deg}°, φ={phi_deg}°): {source}")]
    Field {
        theta_deg: f64,
        phi_deg: f64,
        source: PoError,
    },
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for configuration or validation problems,
    /// 3 for I/O failures, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Pool(_) => 3,
            Error::Mie(_)
            | Error::Field {
                source: PoError::NonFinite { .. },
                ..
            } => 4,
            _ => 2,
        }
    }
}
