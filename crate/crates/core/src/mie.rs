//! Exact monostatic RCS of a perfectly conducting sphere (Mie series).
//!
//! Time convention `e^{+jωt}`: outgoing waves use the spherical Hankel
//! function `h_n⁽²⁾ = j_n − j·y_n`. The PEC coefficients are
//!
//! ```text
//! a_n = j_n(x) / h_n⁽²⁾(x),   b_n = [x j_n(x)]′ / [x h_n⁽²⁾(x)]′
//! σ   = (λ²/4π) · |Σ (−1)ⁿ (2n+1)(b_n − a_n)|²
//! ```
//!
//! σ depends only on `|·|²`, so the result is the same under `e^{−iωt}`.
//! The Riccati-Bessel function `ψ_n = x j_n` comes from a downward ratio
//! recurrence, `χ_n = x y_n` from the (stable) upward recurrence.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use num_traits::Float;

/// Largest supported electrical size.
pub const MAX_SIZE_PARAMETER: f64 = 1e5;

/// Relative size of the last series term at which the sum counts as converged.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-12;

/// Extra orders allowed beyond the nominal truncation before giving up.
const MAX_EXTRA_ORDERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum MieError {
    #[error("size parameter kr = {0} outside (0, 1e5]")]
    SizeOutOfRange(f64),
    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("Mie series at kr = {x} not converged after {orders} orders (last term ratio {ratio:e})")]
    NotConverged { x: f64, orders: usize, ratio: f64 },
}

/// Wiscombe truncation `⌈x + 4x^{1/3} + 2⌉`.
pub fn truncation_order(x: f64) -> usize {
    Float::ceil(x + 4.0 * Float::cbrt(x) + 2.0) as usize
}

/// `ψ_n(x) = x·j_n(x)` for `n = 0..=n_max`.
pub fn riccati_psi(x: f64, n_max: usize) -> Vec<f64> {
    // ρ_n = ψ_n / ψ_{n−1} from ρ_n = 1 / ((2n+1)/x − ρ_{n+1}), seeded with
    // the large-order limit x / (2n+1) well past both n_max and the turning
    // point n ≈ x, where ψ_n is the minimal solution.
    let start = n_max.max(Float::ceil(x) as usize) + 16 + Float::ceil(4.0 * Float::cbrt(x)) as usize;
    let mut ratio = vec![0.0; start + 2];
    ratio[start + 1] = x / (2.0 * (start + 1) as f64 + 1.0);
    for n in (1..=start).rev() {
        ratio[n] = 1.0 / ((2 * n + 1) as f64 / x - ratio[n + 1]);
    }

    let (s, c) = Float::sin_cos(x);
    let mut psi = vec![0.0; n_max + 1];
    psi[0] = s;
    if n_max == 0 {
        return psi;
    }
    let psi1 = s / x - c;
    // Anchor on whichever of ψ_0, ψ_1 is better conditioned.
    let from = if Float::abs(s) >= Float::abs(psi1) { 1 } else { 2 };
    psi[1] = psi1;
    for n in from..=n_max {
        psi[n] = ratio[n] * psi[n - 1];
    }
    psi
}

/// `χ_n(x) = x·y_n(x)` for `n = 0..=n_max`.
pub fn riccati_chi(x: f64, n_max: usize) -> Vec<f64> {
    let (s, c) = Float::sin_cos(x);
    let mut chi = vec![0.0; n_max + 1];
    chi[0] = -c;
    if n_max == 0 {
        return chi;
    }
    chi[1] = -c / x - s;
    for n in 1..n_max {
        chi[n + 1] = (2 * n + 1) as f64 / x * chi[n] - chi[n - 1];
    }
    chi
}

/// Backscatter series `S = Σ_{n=1}^{n_max} (−1)ⁿ (2n+1)(b_n − a_n)`, and
/// the magnitude of the last term relative to `|S|`.
pub fn backscatter_series(x: f64, n_max: usize) -> (Complex64, f64) {
    let psi = riccati_psi(x, n_max);
    let chi = riccati_chi(x, n_max);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut last = 0.0;
    for n in 1..=n_max {
        let nf = n as f64;
        let dpsi = psi[n - 1] - nf * psi[n] / x;
        let dchi = chi[n - 1] - nf * chi[n] / x;
        let xi = Complex64::new(psi[n], -chi[n]);
        let dxi = Complex64::new(dpsi, -dchi);
        let a = Complex64::new(psi[n], 0.0) / xi;
        let b = Complex64::new(dpsi, 0.0) / dxi;
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let term = (b - a) * (sign * (2.0 * nf + 1.0));
        sum += term;
        last = term.norm();
    }
    let ratio = if sum.norm() > 0.0 { last / sum.norm() } else { f64::INFINITY };
    (sum, ratio)
}

/// Normalised backscatter `σ / (πr²)` at electrical size `x = kr`.
pub fn mie_backscatter_normalized(x: f64) -> Result<f64, MieError> {
    if !(x > 0.0 && x <= MAX_SIZE_PARAMETER) {
        return Err(MieError::SizeOutOfRange(x));
    }
    let nominal = truncation_order(x);
    let mut n_max = nominal;
    loop {
        let (sum, ratio) = backscatter_series(x, n_max);
        if ratio <= CONVERGENCE_TOLERANCE {
            // σ/(πr²) = (λ²/4π)|S|² / (πr²) = |S|²/x²
            return Ok(sum.norm_sqr() / (x * x));
        }
        if n_max >= nominal + MAX_EXTRA_ORDERS || !ratio.is_finite() {
            return Err(MieError::NotConverged {
                x,
                orders: n_max,
                ratio,
            });
        }
        n_max += 2;
    }
}

/// Monostatic RCS (m²) of a PEC sphere of `radius` at electrical size `x`.
pub fn mie_backscatter_pec(x: f64, radius: f64) -> Result<f64, MieError> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(MieError::InvalidRadius(radius));
    }
    Ok(mie_backscatter_normalized(x)? * PI * radius * radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    // σ/(πr²) from a 60-digit evaluation of the same series with
    // arbitrary-precision Bessel functions.
    const REFERENCE: [(f64, f64); 8] = [
        (0.05, 5.622397374146382e-5),
        (0.5, 0.52957627869631155),
        (1.0, 3.6375665428517032),
        (3.7, 1.454339906261517),
        (10.0, 0.92923021595128961),
        (30.0, 1.0161001706297062),
        (50.0, 0.99591767878443761),
        (100.0, 0.99902541524328478),
    ];

    #[test]
    fn matches_high_precision_reference() {
        for (x, want) in REFERENCE {
            let got = mie_backscatter_normalized(x).unwrap();
            assert!((got - want).abs() <= 1e-10 * want, "x = {x}: {got} vs {want}");
        }
    }

    #[test]
    fn rayleigh_limit() {
        let x = 0.05;
        let got = mie_backscatter_normalized(x).unwrap();
        let rayleigh = 9.0 * x.powi(4);
        assert!((got - rayleigh).abs() / rayleigh < 0.01);
    }

    #[test]
    fn optical_limit_mean() {
        let n = 400;
        let mean = (0..n)
            .map(|i| mie_backscatter_normalized(190.0 + 20.0 * i as f64 / (n - 1) as f64).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn psi_matches_closed_forms() {
        for x in [0.3, 2.0, 7.5, 40.0] {
            let psi = riccati_psi(x, 3);
            let (s, c) = (x.sin(), x.cos());
            let j2 = (3.0 / (x * x) - 1.0) * s / x - 3.0 * c / (x * x);
            assert!((psi[0] - s).abs() < 1e-14);
            assert!((psi[1] - (s / x - c)).abs() < 1e-13);
            assert!((psi[2] - x * j2).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn psi_anchor_near_zero_of_sine() {
        // sin(x) ≈ 0 forces the ψ_1 anchor.
        let x = core::f64::consts::PI * 7.0;
        let psi = riccati_psi(x, 4);
        let c = x.cos();
        let y1 = x.sin() / x - c;
        let want2 = 3.0 / x * y1 - x.sin();
        assert!((psi[2] - want2).abs() < 1e-12);
    }

    #[test]
    fn truncation_is_stable() {
        for x in [0.7, 5.0, 33.0, 120.0, 800.0] {
            let n = truncation_order(x) + 20;
            let (a, _) = backscatter_series(x, n);
            let (b, _) = backscatter_series(x, n + 10);
            let (sa, sb) = (a.norm_sqr(), b.norm_sqr());
            assert!((sa - sb).abs() <= 1e-9 * sa, "x = {x}");
        }
    }

    #[test]
    fn positive_over_a_scan() {
        let mut x = 0.1;
        while x < 1000.0 {
            assert!(mie_backscatter_normalized(x).unwrap() > 0.0);
            x *= 1.37;
        }
    }

    #[test]
    fn large_size_converges() {
        let v = mie_backscatter_normalized(1e5).unwrap();
        assert!((v - 1.0).abs() < 0.05);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(mie_backscatter_normalized(0.0), Err(MieError::SizeOutOfRange(_))));
        assert!(matches!(mie_backscatter_normalized(2e5), Err(MieError::SizeOutOfRange(_))));
        assert!(matches!(mie_backscatter_pec(1.0, -1.0), Err(MieError::InvalidRadius(_))));
    }

    #[test]
    fn scales_with_radius_squared() {
        let a = mie_backscatter_pec(20.0, 1.0).unwrap();
        let b = mie_backscatter_pec(20.0, 3.0).unwrap();
        assert!((b / a - 9.0).abs() < 1e-12);
    }
}
