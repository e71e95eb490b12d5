//! Physical-optics backscatter sum over hit records and the RCS conversion.
//!
//! For a PEC target each valid record contributes
//!
//! ```text
//! (j·k·ΔA / 4π) · 2(n̂·−k̂) · Γ^N · exp(−j·k·(R + R_ret))
//! ```
//!
//! where `R` is the record's optical path, `R_ret` its return leg to the
//! launch plane and `N` its bounce count. For a single reflection
//! `R_ret = R`, giving the familiar `exp(−j2kR)` phase. The sum is carried in
//! `f64` through a fixed pairwise tree, so it is bit-reproducible.

use core::f64::consts::PI;

use num_complex::Complex64;
use num_traits::Float;

use crate::join::{Join, Sequential};
use crate::real::Real;
use crate::transport::HitRecord;
use crate::vec3::Vec3;

/// Complex far-field amplitude `A`; `σ = 4π|A|²`.
pub type ComplexAmp = Complex64;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterParams {
    pub frequency: f64,
    pub wavelength: f64,
    /// Wavenumber `k = 2π/λ` (rad/m).
    pub wavenumber: f64,
    /// Scalar reflection coefficient Γ.
    pub reflection: f64,
    /// Ray tube area ΔA (m²).
    pub tube_area: f64,
    /// Keep rays that exhausted the bounce budget without escaping.
    pub count_trapped: bool,
}

impl ScatterParams {
    /// PEC defaults (Γ = −1, trapped rays dropped) at wavelength `λ`.
    pub fn from_wavelength(wavelength: f64, tube_area: f64) -> Self {
        Self {
            frequency: SPEED_OF_LIGHT / wavelength,
            wavelength,
            wavenumber: 2.0 * PI / wavelength,
            reflection: -1.0,
            tube_area,
            count_trapped: false,
        }
    }

    pub fn from_frequency(frequency: f64, tube_area: f64) -> Self {
        Self {
            frequency,
            ..Self::from_wavelength(SPEED_OF_LIGHT / frequency, tube_area)
        }
    }

    pub fn with_reflection(self, reflection: f64) -> Self {
        Self { reflection, ..self }
    }

    pub fn with_count_trapped(self, count_trapped: bool) -> Self {
        Self {
            count_trapped,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), PoError> {
        let ok = self.wavelength > 0.0
            && self.wavelength.is_finite()
            && Float::abs(self.wavenumber * self.wavelength - 2.0 * PI) <= 1e-12 * 2.0 * PI
            && Float::abs(self.reflection) <= 1.0
            && self.tube_area > 0.0
            && self.tube_area.is_finite();
        if ok {
            Ok(())
        } else {
            Err(PoError::InvalidParams)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum PoError {
    #[error("non-finite field contribution at record {index}")]
    NonFinite { index: usize },
    #[error("scatter parameters need λ > 0, k·λ = 2π, |Γ| ≤ 1 and ΔA > 0")]
    InvalidParams,
}

/// Field contribution of one record, or `None` when it is excluded: invalid,
/// facing away from the radar, or trapped while `count_trapped` is off.
#[inline]
pub fn contribution<T: Real>(
    record: &HitRecord<T>,
    k_inc: Vec3<f64>,
    params: &ScatterParams,
) -> Option<Complex64> {
    if !record.valid || (!record.escaped && !params.count_trapped) {
        return None;
    }
    let n = record.normal.cast::<f64>();
    let cos = -n.dot(k_inc);
    if !(cos > 0.0) {
        return None;
    }
    let k = params.wavenumber;
    let weight = k * params.tube_area / (4.0 * PI)
        * 2.0
        * cos
        * Float::powi(params.reflection, record.bounces as i32);
    let phase = -k * (record.path.to_f64() + record.return_path.to_f64());
    let (s, c) = Float::sin_cos(phase);
    // j·w·e^{jφ} = w·(−sin φ + j cos φ)
    Some(Complex64::new(-weight * s, weight * c))
}

/// Records summed sequentially at the leaves of the reduction tree.
const BLOCK: usize = 64;
/// Ranges shorter than this are reduced without forking.
const FORK_LEN: usize = 1 << 14;

/// Physical-optics amplitude `A` of a set of hit records.
pub fn accumulate<T: Real>(
    records: &[HitRecord<T>],
    k_inc: Vec3<T>,
    params: &ScatterParams,
) -> Result<ComplexAmp, PoError> {
    accumulate_with(&Sequential, records, k_inc, params)
}

/// [`accumulate`] with subtrees of the reduction forked through `join`.
/// The tree is fixed by the record count, so the result is bit-identical
/// for any scheduler.
pub fn accumulate_with<T: Real, J: Join>(
    join: &J,
    records: &[HitRecord<T>],
    k_inc: Vec3<T>,
    params: &ScatterParams,
) -> Result<ComplexAmp, PoError> {
    pairwise(join, records, 0, k_inc.cast(), params)
}

fn pairwise<T: Real, J: Join>(
    join: &J,
    records: &[HitRecord<T>],
    offset: usize,
    k_inc: Vec3<f64>,
    params: &ScatterParams,
) -> Result<Complex64, PoError> {
    if records.len() <= BLOCK {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, r) in records.iter().enumerate() {
            if let Some(c) = contribution(r, k_inc, params) {
                if !(c.re.is_finite() && c.im.is_finite()) {
                    return Err(PoError::NonFinite { index: offset + i });
                }
                acc += c;
            }
        }
        return Ok(acc);
    }
    let mid = records.len() / 2;
    let (lo, hi) = records.split_at(mid);
    let (a, b) = if records.len() >= FORK_LEN {
        join.join(
            || pairwise(join, lo, offset, k_inc, params),
            || pairwise(join, hi, offset + mid, k_inc, params),
        )
    } else {
        (
            pairwise(join, lo, offset, k_inc, params),
            pairwise(join, hi, offset + mid, k_inc, params),
        )
    };
    let sum = a? + b?;
    if !(sum.re.is_finite() && sum.im.is_finite()) {
        return Err(PoError::NonFinite { index: offset });
    }
    Ok(sum)
}

/// Monostatic radar cross section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcsValue {
    /// σ in m².
    pub sigma: f64,
    /// `10·log10(σ)`, or `-inf` when σ is zero.
    pub dbsm: f64,
}

pub fn rcs(amplitude: ComplexAmp) -> RcsValue {
    let sigma = 4.0 * PI * amplitude.norm_sqr();
    RcsValue {
        sigma,
        dbsm: to_dbsm(sigma),
    }
}

pub fn to_dbsm(sigma: f64) -> f64 {
    if sigma > 0.0 {
        10.0 * Float::log10(sigma)
    } else {
        f64::NEG_INFINITY
    }
}

/// Normal-incidence PO RCS of a square PEC plate of side `a`: `4π a⁴/λ²`.
pub fn plate_reference(side: f64, wavelength: f64) -> f64 {
    4.0 * PI * Float::powi(side, 4) / (wavelength * wavelength)
}
