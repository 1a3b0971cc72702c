//! Bivariate normal CDF following Genz's double-precision refinement of the
//! Drezner-Wesolowsky method (Gauss-Legendre rules over the arcsine
//! parameterization, with an asymptotic expansion for |r| > 0.925).

use std::f64::consts::PI;

use super::normal::norm_cdf;

// (weight, abscissa) pairs on [-1, 1]; only the negative half is listed.
const GL6: [(f64, f64); 3] = [
    (0.171_324_492_379_170_5, -0.932_469_514_203_152_2),
    (0.360_761_573_048_138_4, -0.661_209_386_466_264_7),
    (0.467_913_934_572_690_4, -0.238_619_186_083_197),
];
const GL12: [(f64, f64); 6] = [
    (0.047_175_336_386_511_77, -0.981_560_634_246_719_1),
    (0.106_939_325_995_318_3, -0.904_117_256_370_475),
    (0.160_078_328_543_346_4, -0.769_902_674_194_305),
    (0.203_167_426_723_065_9, -0.587_317_954_286_617_1),
    (0.233_492_536_538_354_7, -0.367_831_498_998_180_2),
    (0.249_147_045_813_402_9, -0.125_233_408_511_469_2),
];
const GL20: [(f64, f64); 10] = [
    (0.017_614_007_139_152_12, -0.993_128_599_185_094_9),
    (0.040_601_429_800_386_94, -0.963_971_927_277_913_8),
    (0.062_672_048_334_109_06, -0.912_234_428_251_326),
    (0.083_276_741_576_704_75, -0.839_116_971_822_218_8),
    (0.101_930_119_817_240_4, -0.746_331_906_460_150_8),
    (0.118_194_531_961_518_4, -0.636_053_680_726_515),
    (0.131_688_638_449_176_6, -0.510_867_001_950_827_1),
    (0.142_096_109_318_382_1, -0.373_706_088_715_419_6),
    (0.149_172_986_472_603_7, -0.227_785_851_141_645_1),
    (0.152_753_387_130_725_9, -0.076_526_521_133_497_33),
];

const TWO_PI: f64 = 2.0 * PI;

/// Upper-orthant probability P(X > dh, Y > dk) for correlation `r`.
fn upper_orthant(dh: f64, dk: f64, r: f64) -> f64 {
    let rule: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL6
    } else if r.abs() < 0.75 {
        &GL12
    } else {
        &GL20
    };
    let h = dh;
    let k = dk;
    let hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        if r.abs() > 0.0 {
            let hs = 0.5 * (h * h + k * k);
            let asr = r.asin();
            for &(w, x) in rule {
                for s in [-1.0, 1.0] {
                    let sn = (asr * (s * x + 1.0) / 2.0).sin();
                    bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn *= asr / (2.0 * TWO_PI);
        }
        bvn + norm_cdf(-h) * norm_cdf(-k)
    } else {
        // r <= -0.925 is reflected onto positive r by `bvn_cdf`
        debug_assert!(r > 0.0);
        if r.abs() < 1.0 {
            let a_s = (1.0 - r) * (1.0 + r);
            let mut a = a_s.sqrt();
            let b_s = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            let asr = -0.5 * (b_s / a_s + hk);
            if asr > -100.0 {
                bvn = a * asr.exp() * (1.0 - c * (b_s - a_s) * (1.0 - d * b_s / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
            }
            if -hk < 100.0 {
                let b = b_s.sqrt();
                bvn -= (-hk / 2.0).exp()
                    * TWO_PI.sqrt()
                    * norm_cdf(-b / a)
                    * b
                    * (1.0 - c * b_s * (1.0 - d * b_s / 5.0) / 3.0);
            }
            a /= 2.0;
            for &(w, x) in rule {
                for s in [-1.0, 1.0] {
                    let xs0 = a * (s * x + 1.0);
                    let xs = xs0 * xs0;
                    let rs = (1.0 - xs).sqrt();
                    let asr = -0.5 * (b_s / xs + hk);
                    if asr > -100.0 {
                        bvn += a
                            * w
                            * asr.exp()
                            * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs - (1.0 + c * xs * (1.0 + d * xs)));
                    }
                }
            }
            bvn = -bvn / TWO_PI;
        }
        bvn + norm_cdf(-h.max(k))
    }
}

/// P(X <= h, Y <= k) for a standard bivariate normal with correlation `r`.
pub fn bvn_cdf(h: f64, k: f64, r: f64) -> f64 {
    if h.is_nan() || k.is_nan() {
        return f64::NAN;
    }
    if h <= -40.0 || k <= -40.0 {
        return 0.0;
    }
    if h >= 40.0 {
        return norm_cdf(k);
    }
    if k >= 40.0 {
        return norm_cdf(h);
    }
    if r >= 1.0 {
        return norm_cdf(h.min(k));
    }
    if r <= -1.0 {
        return (norm_cdf(h) + norm_cdf(k) - 1.0).max(0.0);
    }
    if r <= -0.925 {
        // P(X<=h, Y<=k; r) = P(X<=h) - P(X<=h, -Y<=-k; -r)
        return (norm_cdf(h) - bvn_cdf(h, -k, -r)).clamp(0.0, 1.0);
    }
    upper_orthant(-h, -k, r).clamp(0.0, 1.0)
}
