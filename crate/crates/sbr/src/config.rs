//! Sweep configuration, read from JSON and overridden from the command line.
//!
//! Angles are given in degrees. A minimal file only needs the mesh and the
//! frequency:
//!
//! ```json
//! { "mesh": "target.obj", "frequency": 3.0e9,
//!   "theta": { "start": 0, "stop": 90, "samples": 91 } }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sbr_core::bvh::{BuildParams, SplitRule};
use sbr_core::transport::{DEFAULT_RELATIVE_EPSILON, DEFAULT_SAMPLING_FACTOR};

use crate::error::{Error, Result};

/// Evenly spaced angles from `start` to `stop` inclusive, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleRange {
    pub start: f64,
    pub stop: f64,
    pub samples: usize,
}

impl AngleRange {
    pub fn single(deg: f64) -> Self {
        Self {
            start: deg,
            stop: deg,
            samples: 1,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.samples == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.samples - 1) as f64;
        (0..self.samples)
            .map(|i| {
                if i + 1 == self.samples {
                    self.stop
                } else {
                    self.start + step * i as f64
                }
            })
            .collect()
    }

    fn validate(&self, name: &str, max: f64) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config(format!("{name}.samples must be at least 1")));
        }
        for v in [self.start, self.stop] {
            if !(0.0..=max).contains(&v) {
                return Err(Error::Config(format!(
                    "{name} angles must lie in [0, {max}] degrees, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Ray spacing: `"auto"` picks λ/`sampling_factor`, a number is metres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "SpacingRepr", into = "SpacingRepr")]
pub enum Spacing {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SpacingRepr {
    Metres(f64),
    Text(String),
}

impl TryFrom<SpacingRepr> for Spacing {
    type Error = String;

    fn try_from(r: SpacingRepr) -> std::result::Result<Self, String> {
        match r {
            SpacingRepr::Metres(m) => Ok(Spacing::Fixed(m)),
            SpacingRepr::Text(t) if t == "auto" => Ok(Spacing::Auto),
            SpacingRepr::Text(t) => Err(format!(
                "expected \"auto\" or a spacing in metres, got \"{t}\""
            )),
        }
    }
}

impl From<Spacing> for SpacingRepr {
    fn from(s: Spacing) -> Self {
        match s {
            Spacing::Auto => SpacingRepr::Text("auto".into()),
            Spacing::Fixed(m) => SpacingRepr::Metres(m),
        }
    }
}

/// Self-intersection offset applied along the hit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonRule {
    /// Fraction of the mesh bounding-box diagonal.
    Relative(f64),
    /// Metres.
    Absolute(f64),
}

impl Default for EpsilonRule {
    fn default() -> Self {
        EpsilonRule::Relative(DEFAULT_RELATIVE_EPSILON)
    }
}

impl EpsilonRule {
    pub fn resolve(&self, diagonal: f64) -> f64 {
        match *self {
            EpsilonRule::Relative(f) => f * diagonal,
            EpsilonRule::Absolute(e) => e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Single,
    #[default]
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Median,
    #[default]
    Sah,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BvhConfig {
    pub split: Split,
    pub leaf_size: usize,
    pub bins: usize,
    pub traversal_cost: f64,
    pub intersection_cost: f64,
    pub max_depth: usize,
}

impl Default for BvhConfig {
    fn default() -> Self {
        let p = BuildParams::default();
        Self {
            split: Split::Sah,
            leaf_size: p.leaf_size,
            bins: p.bins_per_axis,
            traversal_cost: p.traversal_cost,
            intersection_cost: p.intersection_cost,
            max_depth: p.max_depth,
        }
    }
}

impl BvhConfig {
    pub fn params(&self) -> BuildParams {
        BuildParams {
            split_rule: match self.split {
                Split::Median => SplitRule::Median,
                Split::Sah => SplitRule::BinnedSah,
            },
            leaf_size: self.leaf_size,
            bins_per_axis: self.bins,
            traversal_cost: self.traversal_cost,
            intersection_cost: self.intersection_cost,
            max_depth: self.max_depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    pub heatmap: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    /// Per-ray hit records, written when `dump_hits` is set.
    pub hits: Option<PathBuf>,
    /// Heatmap colour range in dBsm; defaults to the data range.
    pub db_floor: Option<f64>,
    pub db_ceil: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub mesh: PathBuf,
    /// Hz.
    pub frequency: f64,
    pub theta: AngleRange,
    pub phi: AngleRange,
    pub spacing: Spacing,
    /// Rays per wavelength demanded by the sampling rule.
    pub sampling_factor: f64,
    /// Relative aperture padding η.
    pub margin: f64,
    /// Square aperture of this side (m) instead of the padded target box.
    pub aperture_side: Option<f64>,
    pub max_bounces: u32,
    pub epsilon: EpsilonRule,
    pub bvh: BvhConfig,
    /// Scalar reflection coefficient Γ.
    pub reflection: f64,
    pub precision: Precision,
    /// Worker threads; `None` uses `SBR_WORKERS` or the hardware count.
    pub workers: Option<usize>,
    pub output: OutputConfig,
    pub allow_aliasing: bool,
    pub count_trapped: bool,
    pub dump_hits: bool,
    pub strict_orientation: bool,
    /// Reject zero-area faces instead of dropping them.
    pub strict_mesh: bool,
    /// Write `time_ms` as 0 so repeated runs give byte-identical CSVs.
    pub stable_output: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            mesh: PathBuf::new(),
            frequency: 0.0,
            theta: AngleRange::single(0.0),
            phi: AngleRange::single(0.0),
            spacing: Spacing::Auto,
            sampling_factor: DEFAULT_SAMPLING_FACTOR,
            margin: 0.025,
            aperture_side: None,
            max_bounces: 10,
            epsilon: EpsilonRule::default(),
            bvh: BvhConfig::default(),
            reflection: -1.0,
            precision: Precision::Double,
            workers: None,
            output: OutputConfig::default(),
            allow_aliasing: false,
            count_trapped: false,
            dump_hits: false,
            strict_orientation: false,
            strict_mesh: false,
            stable_output: false,
        }
    }
}

impl SweepConfig {
    pub fn from_json_str(text: &str, path: &Path) -> Result<Self> {
        let mut cfg: SweepConfig = serde_json::from_str(text).map_err(|source| Error::ConfigParse {
            path: path.to_path_buf(),
            source,
        })?;
        // Relative mesh paths are taken relative to the config file.
        if cfg.mesh.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.mesh = dir.join(&cfg.mesh);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn wavelength(&self) -> f64 {
        sbr_core::po::SPEED_OF_LIGHT / self.frequency
    }

    pub fn resolved_spacing(&self) -> f64 {
        match self.spacing {
            Spacing::Auto => self.wavelength() / self.sampling_factor,
            Spacing::Fixed(s) => s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return bad(format!("frequency must be positive, got {}", self.frequency));
        }
        self.theta.validate("theta", 180.0)?;
        self.phi.validate("phi", 360.0)?;
        if !(self.sampling_factor > 0.0 && self.sampling_factor.is_finite()) {
            return bad(format!("sampling_factor must be positive, got {}", self.sampling_factor));
        }
        let s = self.resolved_spacing();
        if !(s > 0.0 && s.is_finite()) {
            return bad(format!("spacing must be positive, got {s}"));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad(format!("margin must be non-negative, got {}", self.margin));
        }
        if let Some(side) = self.aperture_side {
            if !(side > 0.0 && side.is_finite()) {
                return bad(format!("aperture_side must be positive, got {side}"));
            }
        }
        if self.max_bounces == 0 {
            return bad("max_bounces must be at least 1".into());
        }
        let eps = match self.epsilon {
            EpsilonRule::Relative(e) | EpsilonRule::Absolute(e) => e,
        };
        if !(eps > 0.0 && eps.is_finite()) {
            return bad(format!("epsilon must be positive, got {eps}"));
        }
        if !(self.reflection.abs() <= 1.0) {
            return bad(format!("reflection must lie in [-1, 1], got {}", self.reflection));
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if let (Some(lo), Some(hi)) = (self.output.db_floor, self.output.db_ceil) {
            if !(lo < hi) {
                return bad(format!("db_floor {lo} must be below db_ceil {hi}"));
            }
        }
        self.bvh.params().validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<SweepConfig> {
        SweepConfig::from_json_str(text, Path::new("/cfg/run.json"))
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let c = parse(r#"{"mesh": "a.obj", "frequency": 1e9}"#).unwrap();
        assert_eq!(c.mesh, PathBuf::from("/cfg/a.obj"));
        assert_eq!(c.spacing, Spacing::Auto);
        assert_eq!(c.margin, 0.025);
        assert_eq!(c.reflection, -1.0);
        assert_eq!(c.bvh.split, Split::Sah);
        c.validate().unwrap();
        assert!((c.resolved_spacing() - c.wavelength() / 5.0).abs() < 1e-15);
    }

    #[test]
    fn spacing_forms() {
        let c = parse(r#"{"mesh": "/a.obj", "frequency": 1e9, "spacing": 0.01}"#).unwrap();
        assert_eq!(c.spacing, Spacing::Fixed(0.01));
        assert_eq!(c.mesh, PathBuf::from("/a.obj"));
        let c = parse(r#"{"mesh": "a.obj", "frequency": 1e9, "spacing": "auto"}"#).unwrap();
        assert_eq!(c.spacing, Spacing::Auto);
        assert!(parse(r#"{"mesh": "a.obj", "frequency": 1e9, "spacing": "fine"}"#).is_err());
    }

    #[test]
    fn round_trip() {
        let mut c = parse(r#"{"mesh": "/a.obj", "frequency": 2e9}"#).unwrap();
        c.epsilon = EpsilonRule::Absolute(1e-7);
        c.precision = Precision::Single;
        c.output.csv = Some("/o.csv".into());
        let back = parse(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(parse(r#"{"mesh": "a.obj", "frequency": 1e9, "bogus": 1}"#).is_err());
        let base = parse(r#"{"mesh": "a.obj", "frequency": 1e9}"#).unwrap();
        let cases: Vec<Box<dyn Fn(&mut SweepConfig)>> = vec![
            Box::new(|c| c.frequency = 0.0),
            Box::new(|c| c.theta = AngleRange { start: 0.0, stop: 190.0, samples: 3 }),
            Box::new(|c| c.phi.samples = 0),
            Box::new(|c| c.spacing = Spacing::Fixed(-1.0)),
            Box::new(|c| c.max_bounces = 0),
            Box::new(|c| c.reflection = 2.0),
            Box::new(|c| c.epsilon = EpsilonRule::Absolute(0.0)),
            Box::new(|c| c.workers = Some(0)),
            Box::new(|c| c.bvh.leaf_size = 0),
            Box::new(|c| {
                c.output.db_floor = Some(0.0);
                c.output.db_ceil = Some(-1.0);
            }),
        ];
        for (i, f) in cases.iter().enumerate() {
            let mut c = base.clone();
            f(&mut c);
            assert!(c.validate().is_err(), "case {i} accepted");
        }
    }

    #[test]
    fn angle_values_are_inclusive() {
        let r = AngleRange { start: 0.0, stop: 360.0, samples: 5 };
        assert_eq!(r.values(), vec![0.0, 90.0, 180.0, 270.0, 360.0]);
        assert_eq!(AngleRange::single(12.5).values(), vec![12.5]);
    }
}
