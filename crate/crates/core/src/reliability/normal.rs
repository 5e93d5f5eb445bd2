//! Standard normal distribution with tail-accurate evaluation.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// `ln(sqrt(2 pi))`.
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalFn {
    Pdf,
    Cdf,
    InvCdf,
    Tail,
}

/// Dispatch form of the functions below.
pub fn std_normal(kind: NormalFn, x: f64) -> Result<f64> {
    match kind {
        NormalFn::Pdf => Ok(pdf(x)),
        NormalFn::Cdf => Ok(cdf(x)),
        NormalFn::Tail => Ok(tail(x)),
        NormalFn::InvCdf => inv_cdf(x),
    }
}

pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `Phi(-x)`.
pub fn tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// `ln Phi(-x)`, finite for all finite `x`.
pub fn ln_tail(x: f64) -> f64 {
    if x < 30.0 {
        return tail(x).ln();
    }
    // Asymptotic expansion of the Mills ratio.
    let r = 1.0 / (x * x);
    let series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r * (1.0 - 9.0 * r))));
    -0.5 * x * x - LN_SQRT_2PI - x.ln() + series.ln()
}

/// `Phi^{-1}(p)`.
pub fn inv_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "inverse normal CDF needs p in (0, 1), got {p}"
        )));
    }
    Ok(inv_cdf_unchecked(p))
}

/// Acklam's rational approximation followed by one Halley step.
pub(crate) fn inv_cdf_unchecked(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley refinement of cdf(x) - p; in the upper half the residual is
    // formed from the tail to keep relative accuracy.
    let e = if x > 0.0 { (1.0 - p) - tail(x) } else { cdf(x) - p };
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Solve `ln Phi(-t) = target` for `t >= lower`, given `ln Phi(-lower) >= target`.
///
/// Newton iteration in the log domain with a bisection safeguard; converges
/// to `1e-12` in log-probability.
pub fn inv_ln_tail(target: f64, lower: f64) -> f64 {
    let f = |t: f64| ln_tail(t) - target;
    if f(lower) <= 0.0 {
        return lower;
    }
    let mut lo = lower;
    let mut hi = lower.max(1.0);
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    let mut t = if target > -700.0 {
        let p = target.exp();
        if p < 0.5 {
            (-inv_cdf_unchecked(p)).clamp(lo, hi)
        } else {
            0.5 * (lo + hi)
        }
    } else {
        // ln Phi(-t) ~ -t^2 / 2 for large t.
        (-2.0 * target).sqrt().clamp(lo, hi)
    };
    for _ in 0..200 {
        let ft = f(t);
        if ft.abs() <= 1e-12 {
            break;
        }
        if ft > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        // d/dt ln Phi(-t) = -phi(t) / Phi(-t).
        let slope = -(-0.5 * t * t - LN_SQRT_2PI - ln_tail(t)).exp();
        let step = t - ft / slope;
        t = if step > lo && step < hi && step.is_finite() {
            step
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-15 * hi.abs() {
            break;
        }
    }
    t
}

/// Draw from the standard normal truncated to `[beta, inf)` given `v` in `(0, 1]`.
pub fn truncated_tail_quantile(beta: f64, v: f64) -> f64 {
    inv_ln_tail(v.ln() + ln_tail(beta), beta)
}
