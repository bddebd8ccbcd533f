//! Reference implementations shared by the integration tests and the
//! acceptance runner. The oracles in this file never call into the crate;
//! `checks` drives the crate against them.
#![allow(dead_code, clippy::excessive_precision)]

pub mod checks;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

/// `(order, x, ln I_order(x))`, evaluated with 40-digit arithmetic (mpmath).
pub const LOG_BESSEL_REFERENCE: &[(f64, f64, f64)] = &[
    (0.0, 0.001, 2.499999843750017361109e-7),
    (0.0, 0.1, 0.002498439233876243381264),
    (0.0, 0.5, 0.06154971918548130394128),
    (0.0, 1.0, 0.2359143585071786486894),
    (0.0, 2.0, 0.8239935414829562829313),
    (0.0, 3.7, 2.167751999143327904958),
    (0.0, 5.0, 3.304681775822533433846),
    (0.0, 9.99, 7.933486349961326227724),
    (0.0, 12.5, 10.32863551461712203631),
    (0.0, 20.0, 17.5896104282442742908),
    (0.0, 27.3, 24.73228412816606803842),
    (0.0, 33.0, 30.33665486002595919029),
    (0.0, 40.0, 37.23978686135235684926),
    (0.0, 49.5, 46.63262644657130310017),
    (0.0, 50.0, 47.12757550187180458416),
    (0.0, 75.0, 71.92399534542726979766),
    (0.0, 150.0, 146.5765799503518590872),
    (0.0, 500.0, 495.974007668106696461),
    (0.0, 2000.0, 1995.280672752657430453),
    (0.0, 10000.0, 9994.475903781432301005),
    (0.5, 0.001, -3.679668825469134847279),
    (0.5, 0.1, -1.375417787678169813861),
    (0.5, 0.5, -0.5310400883117819780934),
    (0.5, 1.0, -0.06435199107353179875298),
    (0.5, 2.0, 0.7160024296894680429821),
    (0.5, 3.7, 2.126283617317976950573),
    (0.5, 5.0, 3.27629710961790658171),
    (0.5, 9.99, 7.920269168362304493137),
    (0.5, 12.5, 10.31819714462731159446),
    (0.5, 20.0, 17.58319533001833175725),
    (0.5, 27.3, 24.72761811569987023395),
    (0.5, 33.0, 30.33280768606208714049),
    (0.5, 40.0, 37.23662173973835910679),
    (0.5, 49.5, 46.6300751320080049495),
    (0.5, 50.0, 47.12504996408125422891),
    (0.5, 75.0, 71.92231741002717203792),
    (0.5, 150.0, 146.5757438197471993832),
    (0.5, 500.0, 495.9737574175842313869),
    (0.5, 2000.0, 1995.280610237024286077),
    (0.5, 10000.0, 9994.47589128080723589),
    (1.0, 0.001, -7.600902334542084965638),
    (1.0, 0.1, -2.994482533862204939759),
    (1.0, 0.5, -1.355205447025334464488),
    (1.0, 1.0, -0.5706479874908312814232),
    (1.0, 2.0, 0.4641344735461597442559),
    (1.0, 3.7, 2.006298883763204972825),
    (1.0, 5.0, 3.191942030545675463437),
    (1.0, 9.99, 7.880662186733760447143),
    (1.0, 12.5, 10.28690299848557441868),
    (1.0, 20.0, 17.56395462251934430376),
    (1.0, 27.3, 24.71362180209092378253),
    (1.0, 33.0, 30.32126712004828627195),
    (1.0, 40.0, 37.22712690252048584524),
    (1.0, 49.5, 46.62242146250929985465),
    (1.0, 50.0, 47.1174736165871265235),
    (1.0, 75.0, 71.91728368097706026636),
    (1.0, 150.0, 146.5732354373811285203),
    (1.0, 500.0, 495.9730066662683444638),
    (1.0, 2000.0, 1995.28042269012876507),
    (1.0, 10000.0, 9994.475853778932071807),
    (7.0, 0.001, -61.73147854660999088472),
    (7.0, 0.1, -29.49497478136847243261),
    (7.0, 0.5, -18.22141277621933620629),
    (7.0, 1.0, -13.34599565362448024848),
    (7.0, 2.0, -8.40101525657259001611),
    (7.0, 3.7, -3.800677253335062519672),
    (7.0, 5.0, -1.360669727472670677858),
    (7.0, 9.99, 5.460499988080034839069),
    (7.0, 12.5, 8.342174747961871683317),
    (7.0, 20.0, 16.3462564895046507823),
    (7.0, 27.3, 23.8231172971431528871),
    (7.0, 33.0, 29.58560890817330520925),
    (7.0, 40.0, 36.62108709440315757542),
    (7.0, 49.5, 46.13343659892574653216),
    (7.0, 50.0, 46.63341169834607622518),
    (7.0, 75.0, 71.59536507152314065423),
    (7.0, 150.0, 146.412728423703864439),
    (7.0, 500.0, 495.9249593667109976116),
    (7.0, 2000.0, 1995.268419701021182063),
    (7.0, 10000.0, 9994.4734536590190997),
    (31.0, 0.001, -313.7201997913073638379),
    (31.0, 0.1, -170.9598459085815086541),
    (31.0, 0.5, -121.0653956808259367357),
    (31.0, 1.0, -99.57197457516550345649),
    (31.0, 2.0, -78.0609883316144609186),
    (31.0, 3.7, -58.91468821148567065943),
    (31.0, 5.0, -49.4924719687199663782),
    (31.0, 9.99, -27.45991596384516751944),
    (31.0, 12.5, -20.08305781627011855241),
    (31.0, 20.0, -3.719474286938347332396),
    (31.0, 27.3, 8.332787363840219885456),
    (31.0, 33.0, 16.47841956200879300661),
    (31.0, 40.0, 25.62241205151538790734),
    (31.0, 49.5, 37.12675316129942231864),
    (31.0, 50.0, 37.71226681660824178986),
    (31.0, 75.0, 65.56425082510127673686),
    (31.0, 150.0, 143.3739749867596945313),
    (31.0, 500.0, 495.0123539180847785065),
    (31.0, 2000.0, 1995.04036747448007271),
    (31.0, 10000.0, 9994.427851417163466106),
];

/// `ln I_nu(x)` from the defining power series, summed in log space so it
/// holds for any `x > 0` given enough terms.
pub fn series_log_bessel(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let q = 2.0 * (0.5 * x).ln();
    let mut logs = Vec::new();
    let (mut lt, mut max, mut k) = (0.0f64, 0.0f64, 0.0f64);
    loop {
        logs.push(lt);
        max = max.max(lt);
        k += 1.0;
        lt += q - k.ln() - (k + nu).ln();
        if k > 0.5 * x && lt < max - 45.0 {
            break;
        }
    }
    let sum: f64 = logs.iter().map(|t| (t - max).exp()).sum();
    nu * (0.5 * x).ln() - ln_gamma(nu + 1.0) + max + sum.ln()
}

/// `A_C(kappa) = I_{C/2}(kappa) / I_{C/2-1}(kappa)` from the series oracle.
pub fn resultant_ratio(dim: usize, kappa: f64) -> f64 {
    let nu = 0.5 * dim as f64 - 1.0;
    (series_log_bessel(nu + 1.0, kappa) - series_log_bessel(nu, kappa)).exp()
}

/// Root of `A_C(kappa) = r` by bisection.
pub fn bisection_kappa(r: f64, dim: usize) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while resultant_ratio(dim, hi) < r {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if resultant_ratio(dim, mid) < r {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Central differences of `f` at `x`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub fn random_unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn random_unit_rows<R: Rng>(rng: &mut R, rows: usize, dim: usize) -> Array2<f64> {
    let flat: Vec<f64> = (0..rows)
        .flat_map(|_| random_unit_vector(rng, dim))
        .collect();
    Array2::from_shape_vec((rows, dim), flat).expect("shape matches")
}

pub fn angle_degrees(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Pearson statistic of `counts` against `probs` for `n` draws.
pub fn chi_square_statistic(counts: &[usize], probs: &[f64], n: usize) -> f64 {
    counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum()
}

/// 99th percentile of the chi-square distribution.
pub fn chi_square_99(dof: usize) -> f64 {
    ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.99)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
