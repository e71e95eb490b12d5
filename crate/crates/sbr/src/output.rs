//! CSV tables, PPM heatmaps and run metadata.
//!
//! All floating-point columns use `{:.8e}` (nine significant digits), so a
//! deterministic result always produces the same bytes.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::json;

use crate::error::{Error, Result};
use crate::sphere::SphereReport;
use crate::sweep::SweepResult;

pub const CSV_HEADER: &str =
    "theta_deg,phi_deg,sigma_m2,sigma_dbsm,valid_rays,max_bounces_seen,time_ms";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, r: io::Result<()>) -> Result<()> {
    r.map_err(|e| Error::io(path, e))
}

/// One row per cell, θ outer and φ inner. `time_ms` is written as zero
/// when the config asks for stable output.
pub fn write_csv_to<W: Write>(result: &SweepResult, mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    let stable = result.config.stable_output;
    for c in &result.cells {
        writeln!(
            out,
            "{:.8e},{:.8e},{:.8e},{:.8e},{},{},{:.8e}",
            c.theta_deg,
            c.phi_deg,
            c.sigma,
            c.dbsm,
            c.valid_rays,
            c.max_bounces_seen,
            if stable { 0.0 } else { c.time_ms }
        )?;
    }
    out.flush()
}

pub fn write_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    finish(path, write_csv_to(result, create(path)?))
}

/// Colormap stops, dark blue at the floor through teal, green and orange to
/// light yellow at the ceiling. Colours between stops are linearly
/// interpolated in RGB.
pub const COLORMAP: [[u8; 3]; 5] = [
    [20, 12, 80],
    [32, 110, 160],
    [60, 180, 110],
    [235, 140, 40],
    [255, 250, 190],
];

/// Colour of `db` on the fixed colormap over `[floor, ceil]`. Values
/// outside the range clamp to the end colours; `-inf` and NaN map to the
/// floor colour.
pub fn colormap(db: f64, floor: f64, ceil: f64) -> [u8; 3] {
    let t = if db.is_nan() {
        0.0
    } else {
        ((db - floor) / (ceil - floor)).clamp(0.0, 1.0)
    };
    let x = t * (COLORMAP.len() - 1) as f64;
    let i = (x.floor() as usize).min(COLORMAP.len() - 2);
    let f = x - i as f64;
    let (a, b) = (COLORMAP[i], COLORMAP[i + 1]);
    let mut rgb = [0u8; 3];
    for k in 0..3 {
        rgb[k] = (a[k] as f64 + (b[k] as f64 - a[k] as f64) * f).round() as u8;
    }
    rgb
}

/// Finite dBsm range of the result, widened to ±1 dB if it is a single value.
pub fn db_range(result: &SweepResult) -> (f64, f64) {
    let (lo, hi) = result
        .cells
        .iter()
        .map(|c| c.dbsm)
        .filter(|d| d.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    if !lo.is_finite() {
        (-1.0, 1.0)
    } else if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

/// Binary PPM (P6), `N_φ` pixels wide and `N_θ` tall: φ runs left to right
/// from the first sample, θ top to bottom.
pub fn write_heatmap_to<W: Write>(
    result: &SweepResult,
    db_floor: f64,
    db_ceil: f64,
    mut out: W,
) -> io::Result<()> {
    let (w, h) = (result.phi_deg.len(), result.theta_deg.len());
    write!(out, "P6\n{w} {h}\n255\n")?;
    let mut row = Vec::with_capacity(3 * w);
    for i in 0..h {
        row.clear();
        for j in 0..w {
            row.extend_from_slice(&colormap(result.cell(i, j).dbsm, db_floor, db_ceil));
        }
        out.write_all(&row)?;
    }
    out.flush()
}

pub fn write_heatmap(
    result: &SweepResult,
    path: impl AsRef<Path>,
    db_floor: f64,
    db_ceil: f64,
) -> Result<()> {
    let path = path.as_ref();
    if !(db_floor < db_ceil) {
        return Err(Error::Config(format!(
            "heatmap floor {db_floor} dB must be below ceiling {db_ceil} dB"
        )));
    }
    finish(path, write_heatmap_to(result, db_floor, db_ceil, create(path)?))
}

pub fn metadata(result: &SweepResult) -> serde_json::Value {
    let times: Vec<f64> = result.cells.iter().map(|c| c.time_ms).collect();
    let n = times.len().max(1) as f64;
    let rays: usize = result.cells.iter().map(|c| c.rays).sum();
    let (floor, ceil) = db_range(result);
    json!({
        "program": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": result.config,
        "mesh": {
            "source": result.mesh_source,
            "triangles": result.mesh_triangles,
            "sha256": result.mesh_checksum,
        },
        "bvh": {
            "nodes": result.bvh_stats.node_count,
            "leaves": result.bvh_stats.leaf_count,
            "max_depth": result.bvh_stats.max_depth,
            "build_ms": result.build_ms,
        },
        "wavelength_m": result.wavelength,
        "spacing_m": result.spacing,
        "sampling_ok": result.sampling.is_pass(),
        "workers": result.workers,
        "angles": result.cells.len(),
        "rays_total": rays,
        "dbsm_range": [floor, ceil],
        "timing_ms": {
            "total": result.total_ms,
            "angle_mean": times.iter().sum::<f64>() / n,
            "angle_max": times.iter().copied().fold(0.0, f64::max),
        },
    })
}

pub fn write_metadata(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let r = serde_json::to_writer_pretty(&mut out, &metadata(result))
        .map_err(io::Error::from)
        .and_then(|_| writeln!(out))
        .and_then(|_| out.flush());
    finish(path, r)
}

/// Per-ray hit records of every dumped direction; `i`, `j` index the
/// aperture grid.
pub fn write_hits(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let r = (|| {
        writeln!(
            out,
            "theta_deg,phi_deg,i,j,valid,nx,ny,nz,path_m,return_path_m,bounces,escaped"
        )?;
        for a in &result.hits {
            for (idx, r) in a.records.iter().enumerate() {
                writeln!(
                    out,
                    "{:.8e},{:.8e},{},{},{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{},{}",
                    a.theta_deg,
                    a.phi_deg,
                    idx / a.n_v,
                    idx % a.n_v,
                    r.valid as u8,
                    r.normal.x,
                    r.normal.y,
                    r.normal.z,
                    r.path,
                    r.return_path,
                    r.bounces,
                    r.escaped as u8
                )?;
            }
        }
        out.flush()
    })();
    finish(path, r)
}

pub const SPHERE_HEADER: &str = "kr,wavelength_m,spacing_m,lambda_over_spacing,subdivisions,triangles,sagitta_m,sampling_ok,sigma_sbr_m2,sigma_mie_m2,rel_error,sigma_min_m2,sigma_max_m2,max_direction_error";

pub fn write_sphere_report_to<W: Write>(report: &SphereReport, mut out: W) -> io::Result<()> {
    writeln!(out, "{SPHERE_HEADER}")?;
    for r in &report.rows {
        writeln!(
            out,
            "{:.8e},{:.8e},{:.8e},{:.8e},{},{},{:.8e},{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
            r.kr,
            r.wavelength,
            r.spacing,
            r.wavelength / r.spacing,
            r.subdivisions,
            r.triangles,
            r.sagitta,
            r.sampling.is_pass(),
            r.sigma_sbr,
            r.sigma_mie,
            r.rel_error,
            r.sigma_min,
            r.sigma_max,
            r.max_direction_error
        )?;
    }
    out.flush()
}

pub fn write_sphere_report(report: &SphereReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    finish(path, write_sphere_report_to(report, create(path)?))
}

/// `kr,sigma_m2,sigma_over_pir2` rows.
pub fn write_mie_csv_to<W: Write>(rows: &[(f64, f64, f64)], mut out: W) -> io::Result<()> {
    writeln!(out, "kr,sigma_m2,sigma_over_pir2")?;
    for (kr, s, n) in rows {
        writeln!(out, "{kr:.8e},{s:.8e},{n:.8e}")?;
    }
    out.flush()
}

pub fn write_mie_csv(rows: &[(f64, f64, f64)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    finish(path, write_mie_csv_to(rows, create(path)?))
}
