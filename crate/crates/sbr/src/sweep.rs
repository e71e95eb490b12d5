//! Angular sweeps: BVH built once, then aperture → trace → accumulate → RCS
//! for every incident direction.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use log::{debug, info};
use num_complex::Complex64;
use rayon::prelude::*;
use sbr_core::bvh::BuildStats;
use sbr_core::geometry::DegeneratePolicy;
use sbr_core::po::{accumulate_with, rcs, ComplexAmp, ScatterParams};
use sbr_core::transport::{
    build_aperture, build_fixed_aperture, sampling_check, trace_grid_with, ApertureGrid,
    Orientation, Sampling,
};
use sbr_core::{Aabb, Bvh, HitRecord, IncidentDirection, Join, Mesh, Real, Sequential, TraceParams, Vec3};
use sha2::{Digest, Sha256};

use crate::config::{Precision, SweepConfig};
use crate::error::{Error, Result};
use crate::obj::load_obj;
use crate::parallel::{default_workers, pool, RayonJoin};

static TRACED_ANGLES: AtomicU64 = AtomicU64::new(0);

/// Number of incident directions traced by this process so far.
pub fn traced_angle_count() -> u64 {
    TRACED_ANGLES.load(Ordering::Relaxed)
}

/// Everything an angle evaluation needs besides the geometry.
#[derive(Debug, Clone, Copy)]
pub struct Setup {
    pub wavelength: f64,
    pub spacing: f64,
    pub margin: f64,
    pub aperture_side: Option<f64>,
    pub max_bounces: u32,
    pub epsilon: f64,
    pub orientation: Orientation,
    pub reflection: f64,
    pub count_trapped: bool,
    pub keep_hits: bool,
}

impl Setup {
    pub fn from_config(cfg: &SweepConfig, diagonal: f64) -> Self {
        Self {
            wavelength: cfg.wavelength(),
            spacing: cfg.resolved_spacing(),
            margin: cfg.margin,
            aperture_side: cfg.aperture_side,
            max_bounces: cfg.max_bounces,
            epsilon: cfg.epsilon.resolve(diagonal),
            orientation: if cfg.strict_orientation {
                Orientation::Strict
            } else {
                Orientation::Flip
            },
            reflection: cfg.reflection,
            count_trapped: cfg.count_trapped,
            keep_hits: cfg.dump_hits,
        }
    }

    pub fn aperture<T: Real>(
        &self,
        mesh: &Mesh<T>,
        dir: &IncidentDirection,
    ) -> std::result::Result<ApertureGrid<T>, sbr_core::transport::ApertureError> {
        match self.aperture_side {
            Some(side) => build_fixed_aperture(mesh.aabb(), dir, T::of(self.spacing), T::of(side)),
            None => build_aperture(mesh.aabb(), dir, T::of(self.spacing), T::of(self.margin)),
        }
    }
}

/// Result for one incident direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub amplitude: ComplexAmp,
    pub sigma: f64,
    pub dbsm: f64,
    /// Rays launched.
    pub rays: usize,
    /// Rays that hit the target.
    pub valid_rays: u64,
    pub max_bounces_seen: u32,
    /// `bounce_histogram[n]` counts valid rays with `n` reflections.
    pub bounce_histogram: Vec<u64>,
    pub time_ms: f64,
}

/// Per-ray records of one direction, kept for `dump_hits`.
#[derive(Debug, Clone)]
pub struct AngleHits {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub n_v: usize,
    pub records: Vec<HitRecord<f64>>,
}

/// Traces and integrates one direction with kernels forked through `join`.
pub fn evaluate_direction<T: Real, J: Join>(
    join: &J,
    mesh: &Mesh<T>,
    bvh: &Bvh<T>,
    setup: &Setup,
    theta_deg: f64,
    phi_deg: f64,
) -> Result<(Cell, Option<AngleHits>)> {
    TRACED_ANGLES.fetch_add(1, Ordering::Relaxed);
    let start = Instant::now();
    let dir = IncidentDirection::from_degrees(theta_deg, phi_deg);
    let grid = setup.aperture(mesh, &dir).map_err(|source| Error::Aperture {
        theta_deg,
        phi_deg,
        source,
    })?;
    let trace = TraceParams {
        max_bounces: setup.max_bounces,
        epsilon: T::of(setup.epsilon),
        orientation: setup.orientation,
    };
    trace.validate()?;
    let records = trace_grid_with(join, bvh, mesh, &grid, &trace);
    let params = ScatterParams::from_wavelength(setup.wavelength, grid.tube_area().to_f64())
        .with_reflection(setup.reflection)
        .with_count_trapped(setup.count_trapped);
    let amplitude =
        accumulate_with(join, &records, grid.k, &params).map_err(|source| Error::Field {
            theta_deg,
            phi_deg,
            source,
        })?;

    let mut histogram = vec![0u64; setup.max_bounces as usize + 1];
    let mut valid = 0u64;
    let mut max_seen = 0u32;
    for r in records.iter().filter(|r| r.valid) {
        valid += 1;
        histogram[r.bounces as usize] += 1;
        max_seen = max_seen.max(r.bounces);
    }
    let value = rcs(amplitude);
    let hits = setup.keep_hits.then(|| AngleHits {
        theta_deg,
        phi_deg,
        n_v: grid.n_v,
        records: records
            .iter()
            .map(|r| HitRecord {
                valid: r.valid,
                normal: r.normal.cast(),
                path: r.path.to_f64(),
                bounces: r.bounces,
                return_path: r.return_path.to_f64(),
                escaped: r.escaped,
            })
            .collect(),
    });
    let cell = Cell {
        theta_deg,
        phi_deg,
        amplitude,
        sigma: value.sigma,
        dbsm: value.dbsm,
        rays: records.len(),
        valid_rays: valid,
        max_bounces_seen: max_seen,
        bounce_histogram: histogram,
        time_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    debug!(
        "θ={theta_deg}° φ={phi_deg}°: {} rays, {valid} valid, σ={:.6e} m² in {:.1} ms",
        cell.rays, cell.sigma, cell.time_ms
    );
    Ok((cell, hits))
}

/// Evaluates `angles` (degrees) on `pool`, parallel over angles when there
/// are at least as many angles as workers and over rays otherwise. Both
/// paths give bit-identical cells.
pub fn evaluate_angles<T: Real>(
    pool: &rayon::ThreadPool,
    mesh: &Mesh<T>,
    bvh: &Bvh<T>,
    setup: &Setup,
    angles: &[(f64, f64)],
) -> Result<Vec<(Cell, Option<AngleHits>)>> {
    let workers = pool.current_num_threads();
    pool.install(|| {
        if workers > 1 && angles.len() >= workers {
            angles
                .par_iter()
                .map(|&(t, p)| evaluate_direction(&Sequential, mesh, bvh, setup, t, p))
                .collect()
        } else {
            angles
                .iter()
                .map(|&(t, p)| evaluate_direction(&RayonJoin, mesh, bvh, setup, t, p))
                .collect()
        }
    })
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub theta_deg: Vec<f64>,
    pub phi_deg: Vec<f64>,
    /// θ-major: cell `(i, j)` is at `i * phi_deg.len() + j`.
    pub cells: Vec<Cell>,
    pub hits: Vec<AngleHits>,
    pub wavelength: f64,
    pub spacing: f64,
    pub sampling: Sampling,
    pub workers: usize,
    pub mesh_source: String,
    pub mesh_triangles: usize,
    pub mesh_checksum: String,
    pub bvh_stats: BuildStats,
    pub build_ms: f64,
    pub total_ms: f64,
}

impl SweepResult {
    pub fn cell(&self, i: usize, j: usize) -> &Cell {
        &self.cells[i * self.phi_deg.len() + j]
    }
}

/// SHA-256 of the triangle vertex coordinates as little-endian `f64`.
pub fn mesh_checksum(mesh: &Mesh) -> String {
    let mut h = Sha256::new();
    for t in mesh.triangles() {
        for p in [t.v0, t.v1, t.v2] {
            for c in p.to_array() {
                h.update(c.to_le_bytes());
            }
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn check_sampling(cfg: &SweepConfig) -> Result<Sampling> {
    let (spacing, wavelength) = (cfg.resolved_spacing(), cfg.wavelength());
    let s = sampling_check(spacing, wavelength, cfg.sampling_factor);
    if let Sampling::Violation { ratio } = s {
        if !cfg.allow_aliasing {
            return Err(Error::Sampling {
                spacing,
                wavelength,
                factor: cfg.sampling_factor,
                limit: wavelength / cfg.sampling_factor,
            });
        }
        log::warn!("ray spacing is {ratio:.3}× the sampling limit; expect aliasing");
    }
    Ok(s)
}

pub fn load_mesh(cfg: &SweepConfig) -> Result<Mesh> {
    let policy = if cfg.strict_mesh {
        DegeneratePolicy::Strict
    } else {
        DegeneratePolicy::Drop
    };
    Ok(load_obj(&cfg.mesh, policy)?.mesh)
}

/// Loads the configured mesh and runs the sweep.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    check_sampling(cfg)?;
    let mesh = load_mesh(cfg)?;
    run_sweep_on_mesh(cfg, &mesh)
}

/// Runs the sweep described by `cfg` on an already loaded mesh; the
/// configured mesh path is only echoed.
pub fn run_sweep_on_mesh(cfg: &SweepConfig, mesh: &Mesh) -> Result<SweepResult> {
    cfg.validate()?;
    let sampling = check_sampling(cfg)?;
    let workers = cfg.workers.unwrap_or_else(default_workers);
    let pool = pool(workers)?;
    match cfg.precision {
        Precision::Double => sweep_typed(cfg, mesh, mesh, &pool, sampling),
        Precision::Single => sweep_typed(cfg, mesh, &mesh.cast::<f32>(), &pool, sampling),
    }
}

fn sweep_typed<T: Real>(
    cfg: &SweepConfig,
    source: &Mesh,
    mesh: &Mesh<T>,
    pool: &rayon::ThreadPool,
    sampling: Sampling,
) -> Result<SweepResult> {
    let start = Instant::now();
    let params = cfg.bvh.params();
    let bvh = pool.install(|| Bvh::build_with(mesh, &params, &RayonJoin))?;
    let build_ms = start.elapsed().as_secs_f64() * 1e3;
    info!(
        "BVH over {} triangles: {} nodes, depth {}, {:.1} ms",
        mesh.len(),
        bvh.stats().node_count,
        bvh.stats().max_depth,
        build_ms
    );

    let theta = cfg.theta.values();
    let phi = cfg.phi.values();
    let angles: Vec<(f64, f64)> = theta
        .iter()
        .flat_map(|&t| phi.iter().map(move |&p| (t, p)))
        .collect();
    let setup = Setup::from_config(cfg, source.aabb().diagonal());
    let evaluated = evaluate_angles(pool, mesh, &bvh, &setup, &angles)?;
    let mut cells = Vec::with_capacity(evaluated.len());
    let mut hits = Vec::new();
    for (c, h) in evaluated {
        cells.push(c);
        hits.extend(h);
    }
    let total_ms = start.elapsed().as_secs_f64() * 1e3;
    info!("{} angles in {:.1} ms", cells.len(), total_ms);

    Ok(SweepResult {
        config: cfg.clone(),
        theta_deg: theta,
        phi_deg: phi,
        cells,
        hits,
        wavelength: cfg.wavelength(),
        spacing: setup.spacing,
        sampling,
        workers: pool.current_num_threads(),
        mesh_source: source.source.clone(),
        mesh_triangles: source.len(),
        mesh_checksum: mesh_checksum(source),
        bvh_stats: bvh.stats().clone(),
        build_ms,
        total_ms,
    })
}

/// What a sweep would do, computed without tracing anything.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepPlan {
    pub angles: usize,
    pub theta_samples: usize,
    pub phi_samples: usize,
    pub frequency_hz: f64,
    pub wavelength_m: f64,
    pub spacing_m: f64,
    pub sampling_limit_m: f64,
    pub sampling_ok: bool,
    pub mesh_triangles: Option<usize>,
    pub rays_per_angle_min: u64,
    pub rays_per_angle_max: u64,
    pub total_rays: u128,
    /// Hit-record storage for one angle at the configured precision.
    pub record_bytes_per_angle: u64,
    pub workers: usize,
}

/// Summarises a sweep. The mesh is only needed when the aperture follows
/// the target box; with a fixed aperture side it may be `None`.
pub fn plan_sweep(cfg: &SweepConfig, mesh: Option<&Mesh>) -> Result<SweepPlan> {
    cfg.validate()?;
    let setup = Setup::from_config(cfg, mesh.map_or(1.0, |m| m.aabb().diagonal()));
    let theta = cfg.theta.values();
    let phi = cfg.phi.values();
    let (mut lo, mut hi, mut total) = (u64::MAX, 0u64, 0u128);
    match (mesh, cfg.aperture_side) {
        (_, Some(side)) => {
            let point = Aabb::new(Vec3::zero(), Vec3::zero());
            let dir = IncidentDirection::new(0.0, 0.0);
            let g = build_fixed_aperture(&point, &dir, setup.spacing, side).map_err(|source| {
                Error::Aperture {
                    theta_deg: 0.0,
                    phi_deg: 0.0,
                    source,
                }
            })?;
            lo = g.ray_count() as u64;
            hi = lo;
            total = lo as u128 * (theta.len() * phi.len()) as u128;
        }
        (Some(mesh), None) => {
            for &t in &theta {
                for &p in &phi {
                    let dir = IncidentDirection::from_degrees(t, p);
                    let g = setup.aperture(mesh, &dir).map_err(|source| Error::Aperture {
                        theta_deg: t,
                        phi_deg: p,
                        source,
                    })?;
                    let n = g.ray_count() as u64;
                    lo = lo.min(n);
                    hi = hi.max(n);
                    total += n as u128;
                }
            }
        }
        (None, None) => {
            return Err(Error::Config(
                "a dry run without the mesh needs aperture_side".into(),
            ))
        }
    }
    let record = match cfg.precision {
        Precision::Double => std::mem::size_of::<HitRecord<f64>>(),
        Precision::Single => std::mem::size_of::<HitRecord<f32>>(),
    } as u64;
    let limit = cfg.wavelength() / cfg.sampling_factor;
    Ok(SweepPlan {
        angles: theta.len() * phi.len(),
        theta_samples: theta.len(),
        phi_samples: phi.len(),
        frequency_hz: cfg.frequency,
        wavelength_m: cfg.wavelength(),
        spacing_m: setup.spacing,
        sampling_limit_m: limit,
        sampling_ok: sampling_check(setup.spacing, cfg.wavelength(), cfg.sampling_factor).is_pass(),
        mesh_triangles: mesh.map(|m| m.len()),
        rays_per_angle_min: lo,
        rays_per_angle_max: hi,
        total_rays: total,
        record_bytes_per_angle: hi.saturating_mul(record),
        workers: cfg.workers.unwrap_or_else(default_workers),
    })
}

/// Convenience for callers that only want the amplitude of one direction.
pub fn direction_amplitude(mesh: &Mesh, bvh: &Bvh, setup: &Setup, theta_deg: f64, phi_deg: f64) -> Result<Complex64> {
    Ok(evaluate_direction(&Sequential, mesh, bvh, setup, theta_deg, phi_deg)?.0.amplitude)
}
