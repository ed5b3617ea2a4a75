//! Normal distribution functions, bivariate normal probabilities and the
//! closed-form Gaussian expectations used by the drift functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal distribution function Φ.
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Inverse of [`std_normal_cdf`] on (0, 1).
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("quantile needs p in (0,1), got {p}")));
    }
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    while hi - lo > 1e-15 * hi.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if std_normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut q = 0.5 * (lo + hi);
    let dens = std_normal_pdf(q);
    if dens > 0.0 {
        let step = (std_normal_cdf(q) - p) / dens;
        if step.abs() < (hi - lo).max(1e-12) {
            q -= step;
        }
    }
    Ok(q)
}

/// Thresholds and correlation of a standard bivariate normal probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BvnQuery {
    pub a: f64,
    pub b: f64,
    pub rho: f64,
}

impl BvnQuery {
    pub fn new(a: f64, b: f64, rho: f64) -> Result<Self> {
        if a.is_nan() || b.is_nan() || !(-1.0..=1.0).contains(&rho) {
            return Err(Error::domain(format!(
                "invalid bivariate normal query a={a}, b={b}, rho={rho}"
            )));
        }
        Ok(Self { a, b, rho })
    }

    /// P(Z₁ ≤ a, Z₂ ≤ b).
    pub fn lower(&self) -> f64 {
        bvn_low(self.a, self.b, self.rho)
    }

    /// P(Z₁ > a, Z₂ > b).
    pub fn upper(&self) -> f64 {
        bvn_up(self.a, self.b, self.rho)
    }
}

/// P(Z₁ ≤ a, Z₂ ≤ b) for standard normals with correlation `rho`.
pub fn bvn_low(a: f64, b: f64, rho: f64) -> f64 {
    bvnu(-a, -b, rho)
}

/// P(Z₁ > a, Z₂ > b) for standard normals with correlation `rho`.
pub fn bvn_up(a: f64, b: f64, rho: f64) -> f64 {
    bvnu(a, b, rho)
}

// (weight, node) pairs of Gauss-Legendre rules on [-1, 1], positive half.
const GL6: [(f64, f64); 3] = [
    (0.171_324_492_379_170_5, 0.932_469_514_203_152_2),
    (0.360_761_573_048_138_4, 0.661_209_386_466_264_7),
    (0.467_913_934_572_690_4, 0.238_619_186_083_197_0),
];

const GL12: [(f64, f64); 6] = [
    (0.047_175_336_386_511_77, 0.981_560_634_246_719_1),
    (0.106_939_325_995_318_3, 0.904_117_256_370_475_0),
    (0.160_078_328_543_346_4, 0.769_902_674_194_305_0),
    (0.203_167_426_723_065_9, 0.587_317_954_286_617_1),
    (0.233_492_536_538_354_7, 0.367_831_498_998_180_2),
    (0.249_147_045_813_402_9, 0.125_233_408_511_469_2),
];

pub(crate) const GL20: [(f64, f64); 10] = [
    (0.017_614_007_139_152_12, 0.993_128_599_185_094_9),
    (0.040_601_429_800_386_94, 0.963_971_927_277_913_8),
    (0.062_672_048_334_109_06, 0.912_234_428_251_325_9),
    (0.083_276_741_576_704_75, 0.839_116_971_822_218_8),
    (0.101_930_119_817_240_4, 0.746_331_906_460_150_8),
    (0.118_194_531_961_518_4, 0.636_053_680_726_515_0),
    (0.131_688_638_449_176_6, 0.510_867_001_950_827_1),
    (0.142_096_109_318_382_1, 0.373_706_088_715_419_6),
    (0.149_172_986_472_603_7, 0.227_785_851_141_645_1),
    (0.152_753_387_130_725_9, 0.076_526_521_133_497_33),
];

// Upper orthant probability P(X > h, Y > k), after Drezner-Wesolowsky with
// Genz's double-precision modifications.
fn bvnu(h: f64, k: f64, r: f64) -> f64 {
    if h.is_nan() || k.is_nan() || r.is_nan() {
        return f64::NAN;
    }
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return std_normal_cdf(-k);
    }
    if k == f64::NEG_INFINITY {
        return std_normal_cdf(-h);
    }
    if r == 0.0 {
        return std_normal_cdf(-h) * std_normal_cdf(-k);
    }
    if r >= 1.0 {
        return std_normal_cdf(-h.max(k));
    }
    if r <= -1.0 {
        // P(X > h, X < -k)
        return (std_normal_cdf(-h) - std_normal_cdf(k)).max(0.0);
    }

    let rule: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL6
    } else if r.abs() < 0.75 {
        &GL12
    } else {
        &GL20
    };
    let two_pi = 2.0 * PI;
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;

    if r.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = 0.5 * r.asin();
        for &(w, x) in rule {
            for t in [1.0 - x, 1.0 + x] {
                let sn = (asr * t).sin();
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        bvn = bvn * asr / two_pi + std_normal_cdf(-h) * std_normal_cdf(-k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        let a_s = (1.0 - r) * (1.0 + r);
        let mut a = a_s.sqrt();
        let bs = (h - k) * (h - k);
        let asr = -0.5 * (bs / a_s + hk);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 80.0;
        if asr > -100.0 {
            bvn = a * asr.exp() * (1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0 + c * d * a_s * a_s);
        }
        if hk > -100.0 {
            let b = bs.sqrt();
            let sp = SQRT_2PI * std_normal_cdf(-b / a);
            bvn -= (-0.5 * hk).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
        }
        a *= 0.5;
        let mut sum = 0.0;
        for &(w, x) in rule {
            for t in [1.0 - x, 1.0 + x] {
                let xs = (a * t) * (a * t);
                let asr = -0.5 * (bs / xs + hk);
                if asr > -100.0 {
                    let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                    let rs = (1.0 - xs).sqrt();
                    let ep = (-0.5 * hk * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                    sum += w * asr.exp() * (sp - ep);
                }
            }
        }
        bvn = (a * sum - bvn) / two_pi;
        if r > 0.0 {
            bvn += std_normal_cdf(-h.max(k));
        } else if h >= k {
            bvn = -bvn;
        } else {
            let l = if h < 0.0 {
                std_normal_cdf(k) - std_normal_cdf(h)
            } else {
                std_normal_cdf(-h) - std_normal_cdf(-k)
            };
            bvn = l - bvn;
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// The two Gaussian expectations behind the drift of a single chain and the
/// GCRN cross term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianIntegrals {
    /// E[Z · (1 ∧ e^{−lαZ−l²/2})].
    pub first: f64,
    /// E[1 ∧ e^{−lαZ−l²/2} ∧ e^{−lβZ−l²/2}].
    pub second: f64,
}

/// e^{l²(x−1)/2} Φ(l/(2√x) − l√x), the accepted-move mass above the
/// acceptance boundary for a chain at scaled squared norm `x`.
pub(crate) fn tilted_tail(x: f64, l: f64) -> f64 {
    if x == 0.0 {
        return (-0.5 * l * l).exp();
    }
    let sx = x.sqrt();
    (0.5 * l * l * (x - 1.0)).exp() * std_normal_cdf(l / (2.0 * sx) - l * sx)
}

/// Closed forms of E[Z(1∧e^{−lαZ−l²/2})] and E[1∧e^{−lαZ−l²/2}∧e^{−lβZ−l²/2}].
pub fn gaussian_integrals(alpha: f64, beta: f64, l: f64) -> Result<GaussianIntegrals> {
    for (name, v) in [("alpha", alpha), ("beta", beta), ("l", l)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let first = -l * alpha * tilted_tail(alpha * alpha, l);
    let m = alpha.min(beta);
    let big = alpha.max(beta);
    let second = std_normal_cdf(-l / (2.0 * m))
        + (0.5 * l * l * (m * m - 1.0)).exp()
            * (std_normal_cdf(l / (2.0 * m) - l * m) - std_normal_cdf(-l * m))
        + (0.5 * l * l * (big * big - 1.0)).exp() * std_normal_cdf(-l * big);
    Ok(GaussianIntegrals { first, second })
}
