//! Modified Bessel function of the first kind, evaluated in log space.
//!
//! Orders are restricted to non-negative multiples of one half, which covers
//! every `C/2 - 1` that appears in the vMF normalizer. Below the regime switch
//! at `x = 50 (order + 1)` the power series is summed with running rescaling;
//! above it an asymptotic expansion is used (Hankel when `4 order^2 < 4x`,
//! Debye's uniform expansion otherwise).

use crate::error::{Error, Result};

const SWITCH_FACTOR: f64 = 50.0;
const RESCALE_AT: f64 = 1e250;

/// `ln I_order(x)`.
///
/// Returns `-inf` for `x = 0` and `order > 0`, and `0` for `x = 0, order = 0`.
pub fn log_bessel_i(order: f64, x: f64) -> Result<f64> {
    check_order(order)?;
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Domain(format!(
            "bessel argument must be finite and >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(if order == 0.0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if x <= switch_point(order) {
        Ok(order * (0.5 * x).ln() + log_series_over_power(order, x))
    } else {
        Ok(log_asymptotic(order, x))
    }
}

/// `ln [ I_order(x) / (x/2)^order ]`, finite at `x = 0` where it equals
/// `-ln Gamma(order + 1)`. Used by the vMF normalizer to avoid the
/// `order * ln x` cancellation for small concentrations.
pub(crate) fn log_bessel_i_scaled(order: f64, x: f64) -> Result<f64> {
    check_order(order)?;
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Domain(format!(
            "bessel argument must be finite and >= 0, got {x}"
        )));
    }
    if x <= switch_point(order) {
        Ok(log_series_over_power(order, x))
    } else {
        Ok(log_asymptotic(order, x) - order * (0.5 * x).ln())
    }
}

/// Ratio `I_{order+1}(x) / I_order(x)`; this is `A_C(kappa)` for `order = C/2 - 1`.
pub fn bessel_ratio(order: f64, x: f64) -> Result<f64> {
    if x == 0.0 {
        check_order(order)?;
        return Ok(0.0);
    }
    Ok((log_bessel_i(order + 1.0, x)? - log_bessel_i(order, x)?).exp())
}

fn switch_point(order: f64) -> f64 {
    SWITCH_FACTOR * (order + 1.0)
}

fn check_order(order: f64) -> Result<()> {
    if !order.is_finite() || order < 0.0 {
        return Err(Error::Domain(format!(
            "bessel order must be >= 0, got {order}"
        )));
    }
    let twice = 2.0 * order;
    if twice.fract() != 0.0 {
        return Err(Error::Domain(format!(
            "bessel order must be a multiple of 1/2, got {order}"
        )));
    }
    Ok(())
}

/// `ln Gamma(a)` for `a > 0` with `2a` integral, by exact products.
pub(crate) fn ln_gamma_half_integer(a: f64) -> f64 {
    debug_assert!(a > 0.0 && (2.0 * a).fract() == 0.0);
    let twice = (2.0 * a).round() as u64;
    if twice.is_multiple_of(2) {
        let n = twice / 2;
        (2..n).map(|j| (j as f64).ln()).sum()
    } else {
        // Gamma(n + 1/2) = sqrt(pi) * prod_{j<n} (j + 1/2)
        let n = twice / 2;
        0.5 * std::f64::consts::PI.ln() + (0..n).map(|j| (j as f64 + 0.5).ln()).sum::<f64>()
    }
}

fn log_series_over_power(order: f64, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut log_offset = 0.0_f64;
    let mut m = 0.0_f64;
    loop {
        let denom = (m + 1.0) * (order + m + 1.0);
        term *= q / denom;
        sum += term;
        m += 1.0;
        if term > RESCALE_AT {
            term /= RESCALE_AT;
            sum /= RESCALE_AT;
            log_offset += RESCALE_AT.ln();
        }
        // terms are decreasing once denom exceeds q
        if denom > q && term <= sum * 1e-17 {
            break;
        }
    }
    sum.ln() + log_offset - ln_gamma_half_integer(order + 1.0)
}

fn log_asymptotic(order: f64, x: f64) -> f64 {
    let mu = 4.0 * order * order;
    if mu < 4.0 * x {
        log_hankel(mu, x)
    } else {
        log_debye(order, x)
    }
}

fn log_hankel(mu: f64, x: f64) -> f64 {
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut k = 1.0_f64;
    loop {
        let odd = 2.0 * k - 1.0;
        let next = -term * (mu - odd * odd) / (8.0 * k * x);
        if next == 0.0 || next.abs() >= term.abs() {
            break;
        }
        sum += next;
        term = next;
        if term.abs() <= sum.abs() * 1e-17 {
            break;
        }
        k += 1.0;
    }
    x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + sum.ln()
}

fn log_debye(order: f64, x: f64) -> f64 {
    let z = x / order;
    let root = (1.0 + z * z).sqrt();
    let p = 1.0 / root;
    let eta = root + (z / (1.0 + root)).ln();
    let p2 = p * p;
    let u1 = p * (3.0 - 5.0 * p2) / 24.0;
    let u2 = p2 * (81.0 - 462.0 * p2 + 385.0 * p2 * p2) / 1152.0;
    let u3 = p * p2 * (30375.0 - 369603.0 * p2 + 765765.0 * p2 * p2 - 425425.0 * p2 * p2 * p2)
        / 414720.0;
    let u4 = p2
        * p2
        * (4465125.0 - 94121676.0 * p2 + 349922430.0 * p2 * p2 - 446185740.0 * p2 * p2 * p2
            + 185910725.0 * p2 * p2 * p2 * p2)
        / 39813120.0;
    let inv = 1.0 / order;
    let series = 1.0 + inv * (u1 + inv * (u2 + inv * (u3 + inv * u4)));
    order * eta - 0.5 * (2.0 * std::f64::consts::PI * order).ln() - 0.25 * (1.0 + z * z).ln()
        + series.ln()
}
