//! PEC sphere validation against the Mie series.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use log::info;
use sbr_core::bvh::BuildParams;
use sbr_core::geometry::{generate_icosphere, max_sagitta, MAX_ICOSPHERE_SUBDIVISIONS};
use sbr_core::mie::mie_backscatter_pec;
use sbr_core::transport::{sampling_check, Orientation, Sampling, DEFAULT_SAMPLING_FACTOR};
use sbr_core::{Bvh, Mesh, Real};

use crate::config::Precision;
use crate::error::{Error, Result};
use crate::parallel::{default_workers, pool, RayonJoin};
use crate::sweep::{evaluate_angles, Setup};

/// Default faceting tolerance: maximum sagitta as a fraction of the
/// wavelength. A facet with sagitta λ/16 spans a whole Fresnel zone of the
/// specular point; λ/256 keeps facets near a quarter of one.
pub const SAGITTA_FRACTION: f64 = 1.0 / 256.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SphereSpacing {
    /// Δs = λ / factor at every kr.
    PerWavelength(f64),
    /// The same Δs (m) at every kr.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereOptions {
    pub radius: f64,
    pub kr: Vec<f64>,
    pub spacing: SphereSpacing,
    /// Icosphere subdivision; `None` picks the coarsest one meeting the
    /// sagitta tolerance.
    pub subdivisions: Option<u32>,
    /// Sagitta limit for automatic subdivision, as a fraction of λ.
    pub sagitta_fraction: f64,
    pub directions: usize,
    pub margin: f64,
    pub max_bounces: u32,
    pub build: BuildParams,
    pub precision: Precision,
    pub workers: Option<usize>,
}

impl Default for SphereOptions {
    fn default() -> Self {
        Self {
            radius: 1.0,
            kr: vec![30.0, 50.0, 100.0],
            spacing: SphereSpacing::PerWavelength(DEFAULT_SAMPLING_FACTOR),
            subdivisions: None,
            sagitta_fraction: SAGITTA_FRACTION,
            directions: 16,
            margin: 0.025,
            max_bounces: 10,
            build: BuildParams::default(),
            precision: Precision::Double,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereRow {
    pub kr: f64,
    pub wavelength: f64,
    pub spacing: f64,
    pub subdivisions: u32,
    pub triangles: usize,
    pub sagitta: f64,
    pub sampling: Sampling,
    /// Direction-averaged SBR cross section (m²).
    pub sigma_sbr: f64,
    pub sigma_mie: f64,
    /// `(σ_SBR − σ_Mie) / σ_Mie` of the averaged value.
    pub rel_error: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Largest single-direction relative error against Mie.
    pub max_direction_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereReport {
    pub rows: Vec<SphereRow>,
}

impl SphereReport {
    pub fn mean_abs_error(&self) -> f64 {
        self.rows.iter().map(|r| r.rel_error.abs()).sum::<f64>() / self.rows.len().max(1) as f64
    }

    pub fn max_abs_error(&self) -> f64 {
        self.rows.iter().map(|r| r.rel_error.abs()).fold(0.0, f64::max)
    }
}

/// `n` quasi-uniform directions `(θ, φ)` in degrees on a Fibonacci lattice.
pub fn fibonacci_directions(n: usize) -> Vec<(f64, f64)> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let theta = z.clamp(-1.0, 1.0).acos();
            let phi = (golden * i as f64).rem_euclid(TAU);
            (theta.to_degrees(), phi.to_degrees())
        })
        .collect()
}

/// Icosphere meshes keyed by subdivision, generated on demand.
struct Spheres {
    radius: f64,
    meshes: BTreeMap<u32, (Mesh, f64)>,
}

impl Spheres {
    fn get(&mut self, s: u32) -> Result<&(Mesh, f64)> {
        if !self.meshes.contains_key(&s) {
            let mesh = generate_icosphere(self.radius, s)
                .map_err(|e| Error::Config(format!("sphere: {e}")))?;
            let sag = max_sagitta(&mesh, self.radius);
            self.meshes.insert(s, (mesh, sag));
        }
        Ok(&self.meshes[&s])
    }

    /// Coarsest subdivision with sagitta ≤ `limit`, capped at the generator
    /// limit.
    fn auto(&mut self, limit: f64) -> Result<u32> {
        for s in 0..=MAX_ICOSPHERE_SUBDIVISIONS {
            if self.get(s)?.1 <= limit {
                return Ok(s);
            }
        }
        log::warn!(
            "sagitta tolerance {limit:.3e} m not reachable; using subdivision {}",
            MAX_ICOSPHERE_SUBDIVISIONS
        );
        Ok(MAX_ICOSPHERE_SUBDIVISIONS)
    }
}

pub fn validate_sphere(opts: &SphereOptions) -> Result<SphereReport> {
    if !(opts.radius > 0.0 && opts.radius.is_finite()) {
        return Err(Error::Config(format!("radius must be positive, got {}", opts.radius)));
    }
    if opts.directions == 0 {
        return Err(Error::Config("at least one direction is required".into()));
    }
    if let Some(&bad) = opts.kr.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
        return Err(Error::Config(format!("kr values must be positive, got {bad}")));
    }
    match opts.spacing {
        SphereSpacing::PerWavelength(f) | SphereSpacing::Fixed(f) if !(f > 0.0 && f.is_finite()) => {
            return Err(Error::Config(format!("spacing must be positive, got {f}")));
        }
        _ => {}
    }
    if !(opts.sagitta_fraction > 0.0 && opts.sagitta_fraction.is_finite()) {
        return Err(Error::Config(format!(
            "sagitta fraction must be positive, got {}",
            opts.sagitta_fraction
        )));
    }
    opts.build.validate()?;
    let pool = pool(opts.workers.unwrap_or_else(default_workers))?;
    let dirs = fibonacci_directions(opts.directions);
    let mut spheres = Spheres {
        radius: opts.radius,
        meshes: BTreeMap::new(),
    };
    let mut bvhs: BTreeMap<u32, Bvh> = BTreeMap::new();

    let mut rows = Vec::with_capacity(opts.kr.len());
    for &kr in &opts.kr {
        let wavelength = TAU * opts.radius / kr;
        let spacing = match opts.spacing {
            SphereSpacing::PerWavelength(f) => wavelength / f,
            SphereSpacing::Fixed(s) => s,
        };
        let s = match opts.subdivisions {
            Some(s) => s,
            None => spheres.auto(wavelength * opts.sagitta_fraction)?,
        };
        let (mesh, sagitta) = spheres.get(s)?;
        let (mesh, sagitta) = (mesh.clone(), *sagitta);
        let setup = Setup {
            wavelength,
            spacing,
            margin: opts.margin,
            aperture_side: None,
            max_bounces: opts.max_bounces,
            epsilon: mesh.aabb().diagonal() * sbr_core::transport::DEFAULT_RELATIVE_EPSILON,
            orientation: Orientation::Flip,
            reflection: -1.0,
            count_trapped: false,
            keep_hits: false,
        };
        let sigmas: Vec<f64> = match opts.precision {
            Precision::Double => {
                if !bvhs.contains_key(&s) {
                    let b = pool.install(|| Bvh::build_with(&mesh, &opts.build, &RayonJoin))?;
                    bvhs.insert(s, b);
                }
                run(&pool, &mesh, &bvhs[&s], &setup, &dirs)?
            }
            Precision::Single => {
                let m32 = mesh.cast::<f32>();
                let b = pool.install(|| Bvh::build_with(&m32, &opts.build, &RayonJoin))?;
                run(&pool, &m32, &b, &setup, &dirs)?
            }
        };
        let sigma_sbr = sigmas.iter().sum::<f64>() / sigmas.len() as f64;
        let sigma_mie = mie_backscatter_pec(kr, opts.radius)?;
        let row = SphereRow {
            kr,
            wavelength,
            spacing,
            subdivisions: s,
            triangles: mesh.len(),
            sagitta,
            sampling: sampling_check(spacing, wavelength, DEFAULT_SAMPLING_FACTOR),
            sigma_sbr,
            sigma_mie,
            rel_error: (sigma_sbr - sigma_mie) / sigma_mie,
            sigma_min: sigmas.iter().copied().fold(f64::INFINITY, f64::min),
            sigma_max: sigmas.iter().copied().fold(0.0, f64::max),
            max_direction_error: sigmas
                .iter()
                .map(|x| ((x - sigma_mie) / sigma_mie).abs())
                .fold(0.0, f64::max),
        };
        info!(
            "kr={kr}: σ_SBR={:.6e} σ_Mie={:.6e} error {:+.2}% (subdivision {s}, Δs=λ/{:.2})",
            row.sigma_sbr,
            row.sigma_mie,
            100.0 * row.rel_error,
            wavelength / spacing
        );
        rows.push(row);
    }
    Ok(SphereReport { rows })
}

fn run<T: Real>(
    pool: &rayon::ThreadPool,
    mesh: &Mesh<T>,
    bvh: &Bvh<T>,
    setup: &Setup,
    dirs: &[(f64, f64)],
) -> Result<Vec<f64>> {
    Ok(evaluate_angles(pool, mesh, bvh, setup, dirs)?
        .into_iter()
        .map(|(c, _)| c.sigma)
        .collect())
}
