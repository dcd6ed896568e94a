//! Modified Bessel functions of the second kind for real order.
//!
//! `K_mu` and `K_{mu+1}` with `|mu| <= 1/2` come from Temme's series when
//! `z < 2` and from Steed's continued fraction otherwise, then upward
//! recurrence reaches the requested order. Half-integer orders use the
//! terminating closed form.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum BesselError {
    #[error("K_v(z) requires z > 0, got z = {0}")]
    Domain(f64),
    #[error("K_v(z) requires a finite order v, got {0}")]
    Order(f64),
    #[error("K_{v}({z}) overflows f64")]
    Overflow { v: f64, z: f64 },
    #[error("K_{v}({z}) underflows to zero")]
    Underflow { v: f64, z: f64 },
}

const EPS: f64 = 1e-16;
const MAX_TERMS: usize = 10_000;
const SERIES_LIMIT: f64 = 2.0;

/// Taylor coefficients of `1 / Gamma(1 + x)` around zero.
const RGAMMA: [f64; 29] = [
    1.0,
    5.772_156_649_015_328_66e-1,
    -6.558_780_715_202_539_02e-1,
    -4.200_263_503_409_523_70e-2,
    1.665_386_113_822_914_79e-1,
    -4.219_773_455_554_433_34e-2,
    -9.621_971_527_876_973_03e-3,
    7.218_943_246_663_099_90e-3,
    -1.165_167_591_859_065_17e-3,
    -2.152_416_741_149_509_75e-4,
    1.280_502_823_881_161_96e-4,
    -2.013_485_478_078_823_87e-5,
    -1.250_493_482_142_670_63e-6,
    1.133_027_231_981_695_93e-6,
    -2.056_338_416_977_607_07e-7,
    6.116_095_104_481_416_09e-9,
    5.002_007_644_469_222_95e-9,
    -1.181_274_570_487_020_04e-9,
    1.043_426_711_691_100_54e-10,
    7.782_263_439_905_070_81e-12,
    -3.696_805_618_642_205_98e-12,
    5.100_370_287_454_475_75e-13,
    -2.058_326_053_566_506_64e-14,
    -5.348_122_539_423_017_82e-15,
    1.226_778_628_238_260_84e-15,
    -1.181_259_301_697_458_83e-16,
    1.186_692_254_751_600_37e-18,
    1.412_380_655_318_031_86e-18,
    -2.298_745_684_435_370_22e-19,
];

/// `K_v(z)`.
pub fn bessel_k(v: f64, z: f64) -> Result<f64, BesselError> {
    let scaled = bessel_k_scaled(v, z)?;
    let k = scaled * (-z).exp();
    if k == 0.0 || k.is_subnormal() {
        return Err(BesselError::Underflow { v, z });
    }
    Ok(k)
}

/// `e^z K_v(z)`, finite for large `z`.
pub fn bessel_k_scaled(v: f64, z: f64) -> Result<f64, BesselError> {
    Ok(bessel_k_scaled_seq(v, z, 1)?[0])
}

/// `[e^z K_{v+k}(z) for k in 0..n]`, sharing one evaluation.
pub fn bessel_k_scaled_seq(v: f64, z: f64, n: usize) -> Result<Vec<f64>, BesselError> {
    check_args(v, z)?;
    let v = v.abs();
    let (mut k0, mut k1) = if is_half_integer(v) {
        (half_integer_scaled(v, z), half_integer_scaled(v + 1.0, z))
    } else {
        temme_or_steed_pair(v, z)
    };
    let mut out = Vec::with_capacity(n);
    let mut order = v;
    for _ in 0..n {
        if !k0.is_finite() {
            return Err(BesselError::Overflow { v: order, z });
        }
        out.push(k0);
        let next = k0 + 2.0 * (order + 1.0) / z * k1;
        k0 = k1;
        k1 = next;
        order += 1.0;
    }
    Ok(out)
}

fn check_args(v: f64, z: f64) -> Result<(), BesselError> {
    if !v.is_finite() {
        return Err(BesselError::Order(v));
    }
    if !(z > 0.0) || z.is_nan() {
        return Err(BesselError::Domain(z));
    }
    Ok(())
}

fn is_half_integer(v: f64) -> bool {
    v <= 1e6 && (v - 0.5).fract() == 0.0
}

/// Scaled `K_{n+1/2}(z) = sqrt(pi/(2z)) e^{-z} sum_k (n+k)!/(k!(n-k)!) (2z)^{-k}`.
fn half_integer_scaled(v: f64, z: f64) -> f64 {
    let n = (v - 0.5) as u64;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..n {
        // ratio of consecutive terms
        let kf = k as f64;
        let nf = n as f64;
        term *= (nf + kf + 1.0) * (nf - kf) / ((kf + 1.0) * 2.0 * z);
        sum += term;
    }
    (PI / (2.0 * z)).sqrt() * sum
}

/// Scaled `(K_v, K_{v+1})` for non-half-integer `v >= 0`.
pub(crate) fn temme_or_steed_pair(v: f64, z: f64) -> (f64, f64) {
    let nl = (v + 0.5).floor();
    let mu = v - nl;
    let (mut k_mu, mut k_mu1) = if z < SERIES_LIMIT {
        let (a, b) = temme(mu, z);
        let s = z.exp();
        (a * s, b * s)
    } else {
        steed(mu, z)
    };
    let mut order = mu;
    for _ in 0..nl as u64 {
        let next = k_mu + 2.0 * (order + 1.0) / z * k_mu1;
        k_mu = k_mu1;
        k_mu1 = next;
        order += 1.0;
    }
    (k_mu, k_mu1)
}

/// `1 / Gamma(1 + x)` split into even and odd parts, giving Temme's
/// auxiliaries without cancellation for `|x| <= 1/2`.
fn gamma_aux(x: f64) -> (f64, f64, f64, f64) {
    let x2 = x * x;
    let mut even = 0.0;
    let mut odd_reduced = 0.0;
    let mut p = 1.0;
    for pair in RGAMMA.chunks(2) {
        even += pair[0] * p;
        if let Some(c) = pair.get(1) {
            odd_reduced += c * p;
        }
        p *= x2;
    }
    let odd = x * odd_reduced;
    let gampl = even + odd; // 1 / Gamma(1 + x)
    let gammi = even - odd; // 1 / Gamma(1 - x)
    (-odd_reduced, even, gampl, gammi)
}

/// Unscaled `(K_mu(z), K_{mu+1}(z))`, `|mu| <= 1/2`, `z < 2`.
fn temme(mu: f64, z: f64) -> (f64, f64) {
    let x2 = 0.5 * z;
    let pimu = PI * mu;
    let fact = if pimu.abs() < EPS {
        1.0
    } else {
        pimu / pimu.sin()
    };
    let d = -x2.ln();
    let e = mu * d;
    let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
    let (gam1, gam2, gampl, gammi) = gamma_aux(mu);
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let ee = e.exp();
    let mut p = 0.5 * ee / gampl;
    let mut q = 0.5 / (ee * gammi);
    let mut c = 1.0;
    let dd = x2 * x2;
    let mut sum1 = p;
    let mu2 = mu * mu;
    for i in 1..MAX_TERMS {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu2);
        c *= dd / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - fi * ff);
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum, sum1 * 2.0 / z)
}

/// Scaled `(K_mu(z), K_{mu+1}(z))`, `|mu| <= 1/2`, `z >= 2`.
fn steed(mu: f64, z: f64) -> (f64, f64) {
    let mu2 = mu * mu;
    let mut b = 2.0 * (1.0 + z);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu2;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..MAX_TERMS {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    h *= a1;
    let k_mu = (PI / (2.0 * z)).sqrt() / s;
    let k_mu1 = k_mu * (mu + z + 0.5 - h) / z;
    (k_mu, k_mu1)
}
