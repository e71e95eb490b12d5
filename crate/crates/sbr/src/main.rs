use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use sbr::config::{Precision, Spacing, Split, SweepConfig};
use sbr::error::{Error, Result};
use sbr::obj::{load_obj, save_obj};
use sbr::output;
use sbr::sphere::{validate_sphere, SphereOptions, SphereSpacing};
use sbr::sweep::{plan_sweep, run_sweep};
use sbr_core::bvh::{BuildParams, Bvh};
use sbr_core::geometry::{generate_icosphere, DegeneratePolicy};
use sbr_core::mie::mie_backscatter_pec;
use sbr_core::transport::DEFAULT_SAMPLING_FACTOR;
use sbr_core::Vec3;

#[derive(Parser)]
#[command(name = "sbr", version, about = "Monostatic RCS by shooting and bouncing rays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an angular sweep described by a JSON config.
    Sweep(SweepArgs),
    /// Compare the solver with the Mie series for a PEC sphere.
    ValidateSphere(SphereArgs),
    /// Write an icosphere as OBJ.
    GenSphere(GenSphereArgs),
    /// Build a BVH over a mesh and print its statistics.
    BvhStats(BvhStatsArgs),
    /// Tabulate the Mie backscatter of a PEC sphere.
    Mie(MieArgs),
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Results CSV; printed to stdout when neither this nor the config names one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// dBsm heatmap (binary PPM).
    #[arg(long)]
    heatmap: Option<PathBuf>,
    /// Run metadata (JSON).
    #[arg(long)]
    metadata: Option<PathBuf>,
    /// Write per-ray hit records to this CSV.
    #[arg(long)]
    dump_hits: Option<PathBuf>,
    /// Print the run plan and exit without tracing.
    #[arg(long)]
    dry_run: bool,
    /// Worker threads (default: config, then SBR_WORKERS, then all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    allow_aliasing: bool,
    #[arg(long)]
    count_trapped: bool,
    #[arg(long)]
    strict_orientation: bool,
    /// Reject zero-area faces instead of dropping them.
    #[arg(long)]
    strict_mesh: bool,
    #[arg(long, value_enum)]
    precision: Option<Precision>,
    #[arg(long, value_enum)]
    split: Option<Split>,
    /// Ray spacing in metres, overriding the config.
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long)]
    db_floor: Option<f64>,
    #[arg(long)]
    db_ceil: Option<f64>,
    /// Write time_ms as 0 for byte-reproducible CSVs.
    #[arg(long)]
    stable: bool,
}

#[derive(Args)]
struct SphereArgs {
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, value_delimiter = ',', default_value = "30,50,100")]
    kr: Vec<f64>,
    /// Use this spacing (m) at every kr instead of λ/factor.
    #[arg(long)]
    fixed_spacing: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SAMPLING_FACTOR)]
    spacing_factor: f64,
    /// Icosphere subdivision; chosen from the sagitta rule when omitted.
    #[arg(long)]
    subdiv: Option<u32>,
    /// Automatic subdivision keeps the facet sagitta below this fraction of λ.
    #[arg(long, default_value_t = sbr::sphere::SAGITTA_FRACTION)]
    sagitta_fraction: f64,
    #[arg(long, default_value_t = 16)]
    directions: usize,
    #[arg(long, default_value_t = 10)]
    max_bounces: u32,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value_t = Precision::Double)]
    precision: Precision,
    #[arg(long, value_enum, default_value_t = Split::Sah)]
    split: Split,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenSphereArgs {
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long)]
    subdiv: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BvhStatsArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Sah)]
    split: Split,
    #[arg(long, default_value_t = 4)]
    leaf_size: usize,
    #[arg(long, default_value_t = 16)]
    bins: usize,
    /// Probe rays for the mean node-visit count.
    #[arg(long, default_value_t = 10_000)]
    rays: usize,
}

#[derive(Args)]
struct MieArgs {
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long)]
    kr_min: f64,
    #[arg(long)]
    kr_max: f64,
    #[arg(long, default_value_t = 500)]
    samples: usize,
    /// Space kr linearly instead of logarithmically.
    #[arg(long)]
    linear: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let r = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::ValidateSphere(a) => sphere(a),
        Command::GenSphere(a) => gen_sphere(a),
        Command::BvhStats(a) => bvh_stats(a),
        Command::Mie(a) => mie(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn stdout_err(e: io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut cfg = SweepConfig::load(&a.config)?;
    if let Some(w) = a.workers {
        cfg.workers = Some(w);
    }
    if let Some(p) = a.precision {
        cfg.precision = p;
    }
    if let Some(s) = a.split {
        cfg.bvh.split = s;
    }
    if let Some(s) = a.spacing {
        cfg.spacing = Spacing::Fixed(s);
    }
    cfg.allow_aliasing |= a.allow_aliasing;
    cfg.count_trapped |= a.count_trapped;
    cfg.strict_orientation |= a.strict_orientation;
    cfg.strict_mesh |= a.strict_mesh;
    cfg.stable_output |= a.stable;
    if let Some(p) = a.out {
        cfg.output.csv = Some(p);
    }
    if let Some(p) = a.heatmap {
        cfg.output.heatmap = Some(p);
    }
    if let Some(p) = a.metadata {
        cfg.output.metadata = Some(p);
    }
    if let Some(p) = a.dump_hits {
        cfg.output.hits = Some(p);
        cfg.dump_hits = true;
    }
    cfg.output.db_floor = a.db_floor.or(cfg.output.db_floor);
    cfg.output.db_ceil = a.db_ceil.or(cfg.output.db_ceil);
    cfg.validate()?;

    if a.dry_run {
        let mesh = if cfg.mesh.exists() {
            Some(sbr::sweep::load_mesh(&cfg)?)
        } else {
            warn!("{} not found; summarising without the mesh", cfg.mesh.display());
            None
        };
        let plan = plan_sweep(&cfg, mesh.as_ref())?;
        let doc = serde_json::json!({ "plan": plan, "config": cfg });
        let mut out = io::stdout().lock();
        serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| stdout_err(e.into()))?;
        writeln!(out).map_err(stdout_err)?;
        return Ok(());
    }

    let result = run_sweep(&cfg)?;
    match &cfg.output.csv {
        Some(p) => output::write_csv(&result, p)?,
        None => output::write_csv_to(&result, io::stdout().lock()).map_err(stdout_err)?,
    }
    if let Some(p) = &cfg.output.heatmap {
        let (lo, hi) = output::db_range(&result);
        output::write_heatmap(
            &result,
            p,
            cfg.output.db_floor.unwrap_or(lo),
            cfg.output.db_ceil.unwrap_or(hi),
        )?;
    }
    if let Some(p) = &cfg.output.metadata {
        output::write_metadata(&result, p)?;
    }
    if cfg.dump_hits {
        match &cfg.output.hits {
            Some(p) => output::write_hits(&result, p)?,
            None => warn!("dump_hits is set but output.hits names no file"),
        }
    }
    Ok(())
}

fn sphere(a: SphereArgs) -> Result<()> {
    let opts = SphereOptions {
        radius: a.radius,
        kr: a.kr,
        spacing: match a.fixed_spacing {
            Some(s) => SphereSpacing::Fixed(s),
            None => SphereSpacing::PerWavelength(a.spacing_factor),
        },
        subdivisions: a.subdiv,
        sagitta_fraction: a.sagitta_fraction,
        directions: a.directions,
        max_bounces: a.max_bounces,
        build: split_params(a.split),
        precision: a.precision,
        workers: a.workers,
        ..SphereOptions::default()
    };
    let report = validate_sphere(&opts)?;
    for r in &report.rows {
        if !r.sampling.is_pass() {
            warn!("kr={}: Δs = λ/{:.2} violates the sampling rule", r.kr, r.wavelength / r.spacing);
        }
    }
    info!(
        "mean |error| {:.2}%, max |error| {:.2}%",
        100.0 * report.mean_abs_error(),
        100.0 * report.max_abs_error()
    );
    match &a.out {
        Some(p) => output::write_sphere_report(&report, p),
        None => output::write_sphere_report_to(&report, io::stdout().lock()).map_err(stdout_err),
    }
}

fn split_params(split: Split) -> BuildParams {
    match split {
        Split::Median => BuildParams::median(),
        Split::Sah => BuildParams::sah(),
    }
}

fn gen_sphere(a: GenSphereArgs) -> Result<()> {
    let mesh = generate_icosphere(a.radius, a.subdiv)
        .map_err(|e| Error::Config(format!("sphere: {e}")))?;
    save_obj(&mesh, &a.out)?;
    info!("wrote {} triangles to {}", mesh.len(), a.out.display());
    Ok(())
}

fn bvh_stats(a: BvhStatsArgs) -> Result<()> {
    let mesh = load_obj(&a.mesh, DegeneratePolicy::Drop)?.mesh;
    let params = BuildParams {
        leaf_size: a.leaf_size,
        bins_per_axis: a.bins,
        ..split_params(a.split)
    };
    let start = std::time::Instant::now();
    let bvh = Bvh::build(&mesh, &params)?;
    let build_ms = start.elapsed().as_secs_f64() * 1e3;

    // Probe rays from a Fibonacci lattice on a sphere around the box,
    // aimed at points spread through the box.
    let aabb = *mesh.aabb();
    let (c, ext) = (aabb.center(), aabb.extent());
    let radius = aabb.diagonal().max(f64::MIN_POSITIVE);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let (mut visits, mut hits) = (0u64, 0usize);
    for i in 0..a.rays {
        let z = 1.0 - (2 * i + 1) as f64 / a.rays as f64;
        let r = (1.0 - z * z).max(0.0).sqrt();
        let ang = golden * i as f64;
        let from = c + Vec3::new(r * ang.cos(), r * ang.sin(), z) * radius;
        let frac = |k: u64| ((i as u64 * k) % 1000) as f64 / 1000.0 - 0.5;
        let to = c + Vec3::new(ext.x * frac(389), ext.y * frac(557), ext.z * frac(733)) * 0.9;
        let dir = (to - from).normalize();
        if bvh
            .closest_hit_counted(&mesh, from, dir, 0.0, f64::INFINITY, &mut visits)
            .is_some()
        {
            hits += 1;
        }
    }
    let s = bvh.stats();
    let doc = serde_json::json!({
        "mesh": a.mesh,
        "triangles": mesh.len(),
        "split": a.split,
        "nodes": s.node_count,
        "leaves": s.leaf_count,
        "max_depth": s.max_depth,
        "leaf_histogram": s.leaf_histogram,
        "build_ms": build_ms,
        "probe_rays": a.rays,
        "probe_hits": hits,
        "mean_node_visits": visits as f64 / a.rays.max(1) as f64,
    });
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| stdout_err(e.into()))?;
    writeln!(out).map_err(stdout_err)
}

fn mie(a: MieArgs) -> Result<()> {
    if !(a.kr_min > 0.0 && a.kr_min <= a.kr_max && a.samples >= 1) {
        return Err(Error::Config(format!(
            "need 0 < kr-min ≤ kr-max and samples ≥ 1, got {}..{} with {}",
            a.kr_min, a.kr_max, a.samples
        )));
    }
    let area = std::f64::consts::PI * a.radius * a.radius;
    let mut rows = Vec::with_capacity(a.samples);
    for i in 0..a.samples {
        let f = if a.samples == 1 {
            0.0
        } else {
            i as f64 / (a.samples - 1) as f64
        };
        let kr = if a.linear {
            a.kr_min + (a.kr_max - a.kr_min) * f
        } else {
            a.kr_min * (a.kr_max / a.kr_min).powf(f)
        };
        let sigma = mie_backscatter_pec(kr, a.radius)?;
        rows.push((kr, sigma, sigma / area));
    }
    match &a.out {
        Some(p) => output::write_mie_csv(&rows, p),
        None => output::write_mie_csv_to(&rows, io::stdout().lock()).map_err(stdout_err),
    }
}
