//! Numerical building blocks: Gaussian distribution functions, adaptive
//! quadrature and a Kolmogorov-Smirnov check.
//!
//! The bivariate normal CDF follows Genz's Gauss-Legendre scheme (accurate to
//! roughly 1e-15). Higher dimensional orthant probabilities use the
//! separation-of-variables transform with a randomized rank-1 lattice rule,
//! which returns an error estimate alongside the value.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal quantile function: Acklam's rational approximation
/// refined by a Halley step against the full-precision CDF.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
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
    let mut x = x;
    for _ in 0..2 {
        let e = if x < 0.0 { norm_cdf(x) - p } else { (1.0 - p) - norm_cdf(-x) };
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

// Gauss-Legendre half-nodes and weights for the three accuracy regimes.
const GL3_W: [f64; 3] = [0.171_324_492_379_170_5, 0.360_761_573_048_138_4, 0.467_913_934_572_690_4];
const GL3_X: [f64; 3] = [0.932_469_514_203_152_2, 0.661_209_386_466_264_7, 0.238_619_186_083_197_0];
const GL6_W: [f64; 6] = [
    0.047_175_336_386_511_77,
    0.106_939_325_995_318_3,
    0.160_078_328_543_346_4,
    0.203_167_426_723_065_9,
    0.233_492_536_538_354_7,
    0.249_147_045_813_402_9,
];
const GL6_X: [f64; 6] = [
    0.981_560_634_246_719_1,
    0.904_117_256_370_475_0,
    0.769_902_674_194_305_0,
    0.587_317_954_286_617_1,
    0.367_831_498_998_180_2,
    0.125_233_408_511_469_2,
];
const GL10_W: [f64; 10] = [
    0.017_614_007_139_152_12,
    0.040_601_429_800_386_94,
    0.062_672_048_334_109_06,
    0.083_276_741_576_704_75,
    0.101_930_119_817_240_4,
    0.118_194_531_961_518_4,
    0.131_688_638_449_176_6,
    0.142_096_109_318_382_1,
    0.149_172_986_472_603_7,
    0.152_753_387_130_725_9,
];
const GL10_X: [f64; 10] = [
    0.993_128_599_185_094_9,
    0.963_971_927_277_913_8,
    0.912_234_428_251_325_9,
    0.839_116_971_822_218_8,
    0.746_331_906_460_150_8,
    0.636_053_680_726_515_0,
    0.510_867_001_950_827_1,
    0.373_706_088_715_419_6,
    0.227_785_851_141_645_1,
    0.076_526_521_133_497_33,
];

/// Upper bivariate normal probability `P(X > h, Y > k)` for standard margins
/// and correlation `r`.
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY { 1.0 } else { norm_cdf(-k) };
    }
    if k == f64::NEG_INFINITY {
        return norm_cdf(-h);
    }
    let (w_half, x_half): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&GL3_W, &GL3_X)
    } else if r.abs() < 0.75 {
        (&GL6_W, &GL6_X)
    } else {
        (&GL10_W, &GL10_X)
    };

    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for (&w, &x) in w_half.iter().zip(x_half) {
            for node in [1.0 - x, 1.0 + x] {
                let sn = (asr * node / 2.0).sin();
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        bvn = bvn * asr / (4.0 * PI) + norm_cdf(-h) * norm_cdf(-k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let as_ = (1.0 - r) * (1.0 + r);
            let mut a = as_.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            bvn = a
                * (-(bs / as_ + hk) / 2.0).exp()
                * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
            if hk > -160.0 {
                let b = bs.sqrt();
                bvn -= (-hk / 2.0).exp()
                    * (2.0 * PI).sqrt()
                    * norm_cdf(-b / a)
                    * b
                    * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a /= 2.0;
            for (&w, &x) in w_half.iter().zip(x_half) {
                let xs = (a * (1.0 - x)).powi(2);
                let rs = (1.0 - xs).sqrt();
                bvn += a
                    * w
                    * ((-bs / (2.0 * xs) - hk / (1.0 + rs)).exp() / rs
                        - (-(bs / xs + hk) / 2.0).exp() * (1.0 + c * xs * (1.0 + d * xs)));
                let xs = as_ * (1.0 + x).powi(2) / 4.0;
                let rs = (1.0 - xs).sqrt();
                bvn += a
                    * w
                    * (-(bs / xs + hk) / 2.0).exp()
                    * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs - (1.0 + c * xs * (1.0 + d * xs)));
            }
            bvn = -bvn / (2.0 * PI);
        }
        if r > 0.0 {
            bvn += norm_cdf(-h.max(k));
        } else {
            bvn = -bvn + (norm_cdf(-h) - norm_cdf(-k)).max(0.0);
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// Bivariate normal distribution function `P(X <= h, Y <= k)`.
pub fn bvn_cdf(h: f64, k: f64, r: f64) -> f64 {
    bvn_upper(-h, -k, r)
}

/// Result of a numerical probability or integral together with its
/// estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Number of random lattice shifts used by [`mvn_cdf`].
const QMC_SHIFTS: usize = 12;
const QMC_POINTS: usize = 2_000;
const QMC_SEED: u64 = 0x5eed_0f_9a55;

/// Multivariate normal distribution function `P(X <= upper)` for a centered
/// Gaussian with covariance `cov`.
///
/// Dimensions one and two are evaluated deterministically; from three on the
/// separation-of-variables integrand is averaged over a randomized lattice
/// rule with a fixed internal seed, so repeated calls agree bit for bit.
pub fn mvn_cdf(upper: &[f64], cov: &DMatrix<f64>) -> Result<Estimate> {
    let m = upper.len();
    if cov.nrows() != m || cov.ncols() != m {
        return Err(Error::Numerical(format!(
            "covariance is {}x{} but the bound has length {m}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    match m {
        0 => Ok(Estimate { value: 1.0, error: 0.0 }),
        1 => {
            let s = cov[(0, 0)];
            if s <= 0.0 {
                return Err(Error::NotPositiveDefinite(format!("variance {s}")));
            }
            Ok(Estimate {
                value: norm_cdf(upper[0] / s.sqrt()),
                error: 0.0,
            })
        }
        2 => {
            let (s1, s2) = (cov[(0, 0)], cov[(1, 1)]);
            if s1 <= 0.0 || s2 <= 0.0 {
                return Err(Error::NotPositiveDefinite(format!("variances {s1}, {s2}")));
            }
            let (sd1, sd2) = (s1.sqrt(), s2.sqrt());
            let r = (cov[(0, 1)] / (sd1 * sd2)).clamp(-1.0, 1.0);
            Ok(Estimate {
                value: bvn_cdf(upper[0] / sd1, upper[1] / sd2, r),
                error: 0.0,
            })
        }
        _ => mvn_cdf_qmc(upper, cov, QMC_POINTS),
    }
}

fn mvn_cdf_qmc(upper: &[f64], cov: &DMatrix<f64>, points: usize) -> Result<Estimate> {
    let m = upper.len();
    if upper.iter().any(|b| *b == f64::NEG_INFINITY) {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("covariance in orthant probability".into()))?;
    let l = chol.l();
    let generators: Vec<f64> = PRIMES[..m - 1].iter().map(|p| (*p as f64).sqrt().fract()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(QMC_SEED);
    let mut means = Vec::with_capacity(QMC_SHIFTS);
    let mut y = vec![0.0; m];
    for _ in 0..QMC_SHIFTS {
        let shift: Vec<f64> = (0..m - 1).map(|_| rng.random::<f64>()).collect();
        let mut sum = 0.0;
        for j in 1..=points {
            // antithetic pair of baker-transformed lattice points
            for sign in [1.0, -1.0] {
                let e1 = norm_cdf(upper[0] / l[(0, 0)]);
                let mut e = e1;
                let mut f = e1;
                for i in 1..m {
                    let u = (j as f64 * generators[i - 1] + shift[i - 1]).fract();
                    let u = (2.0 * u - 1.0).abs();
                    let u = if sign > 0.0 { u } else { 1.0 - u };
                    let p = (u * e).clamp(1e-300, 1.0 - 1e-16);
                    y[i - 1] = norm_quantile(p);
                    let s: f64 = (0..i).map(|k| l[(i, k)] * y[k]).sum();
                    e = if upper[i] == f64::INFINITY {
                        1.0
                    } else {
                        norm_cdf((upper[i] - s) / l[(i, i)])
                    };
                    f *= e;
                    if f == 0.0 {
                        break;
                    }
                }
                sum += f;
            }
        }
        means.push(sum / (2 * points) as f64);
    }
    let mean = means.iter().sum::<f64>() / QMC_SHIFTS as f64;
    let var = means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (QMC_SHIFTS - 1) as f64;
    Ok(Estimate {
        value: mean.clamp(0.0, 1.0),
        error: 3.0 * (var / QMC_SHIFTS as f64).sqrt(),
    })
}

const PRIMES: [u64; 48] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103,
    107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223,
];

/// Maximum dimension supported by the lattice rule in [`mvn_cdf`].
pub const MAX_QMC_DIM: usize = PRIMES.len() + 1;

/// Log-density of a centered Gaussian with covariance factor `chol`
/// (lower-triangular) evaluated at `x`.
pub fn mvn_log_pdf(x: &[f64], chol_l: &DMatrix<f64>) -> f64 {
    let m = x.len();
    let mut z = vec![0.0; m];
    let mut log_det = 0.0;
    for i in 0..m {
        let s: f64 = (0..i).map(|k| chol_l[(i, k)] * z[k]).sum();
        z[i] = (x[i] - s) / chol_l[(i, i)];
        log_det += chol_l[(i, i)].ln();
    }
    let q: f64 = z.iter().map(|v| v * v).sum();
    -0.5 * q - log_det - 0.5 * m as f64 * (2.0 * PI).ln()
}

// Gauss-Kronrod 7/15 nodes on [-1, 1].
const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Newton on the Legendre
/// recurrence).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = GK_WK[7] * fc;
    let mut gauss = GK_WG[3] * fc;
    for i in 0..7 {
        let dx = h * GK_X[i];
        let s = f(c - dx) + f(c + dx);
        kron += GK_WK[i] * s;
        if i % 2 == 1 {
            gauss += GK_WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod integration of `f` over the finite interval
/// `[a, b]`, bisecting the worst subinterval until the summed error estimate
/// drops below `max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Estimate {
    const MAX_INTERVALS: usize = 2_000;
    let (v, e) = gk15(&f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    while err > abs_tol.max(rel_tol * total.abs()) && intervals.len() < MAX_INTERVALS {
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, v0, e0) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            intervals.push((lo, hi, v0, e0));
            break;
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        total += v1 + v2 - v0;
        err += e1 + e2 - e0;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
    // re-sum to limit drift from incremental updates
    let value: f64 = intervals.iter().map(|iv| iv.2).sum();
    let error: f64 = intervals.iter().map(|iv| iv.3).sum();
    Estimate { value, error }
}

/// Integral of `f` over `[a, ∞)` through the substitution `x = a + t/(1-t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, abs_tol: f64, rel_tol: f64) -> Estimate {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let one_minus = 1.0 - t;
            let x = a + t / one_minus;
            let v = f(x) / (one_minus * one_minus);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// One-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> (f64, f64) {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(((i + 1) as f64 / n - f).abs()).max((f - i as f64 / n).abs());
    }
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    (d, kolmogorov_survival(lambda))
}

fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for n in [1, 2, 5, 20, 400] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-12);
            // ∫ x^{2k} = 2/(2k+1) up to degree 2n-1
            for k in 0..n.min(10) {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(2 * k as i32)).sum();
                assert!((got - 2.0 / (2 * k + 1) as f64).abs() < 1e-12, "n={n} k={k}");
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    // P(X > h, Y > k) = ∫_h^∞ φ(x) Φ((ρx − k)/√(1−ρ²)) dx
    fn bvn_upper_by_quadrature(h: f64, k: f64, r: f64) -> f64 {
        let s = (1.0 - r * r).sqrt();
        integrate(|x| norm_pdf(x) * norm_cdf((r * x - k) / s), h, 40.0, 1e-15, 1e-13).value
    }

    #[test]
    fn bvn_matches_quadrature_oracle() {
        for &r in &[-0.95, -0.8, -0.5, -0.1, 0.0, 0.2, 0.5, 0.8, 0.93, 0.99] {
            for &(h, k) in &[(0.0, 0.0), (-1.0, 0.5), (1.3, -0.7), (2.0, 2.5), (-2.0, -1.5), (0.3, 0.3)] {
                let got = bvn_upper(h, k, r);
                let want = bvn_upper_by_quadrature(h, k, r);
                assert!((got - want).abs() < 1e-12, "h={h} k={k} r={r}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn bvn_independence_and_orthant() {
        assert!((bvn_cdf(0.0, 0.0, 0.0) - 0.25).abs() < 1e-15);
        // orthant probability 1/4 + asin(r)/(2π)
        let r: f64 = 0.6;
        assert!((bvn_cdf(0.0, 0.0, r) - (0.25 + r.asin() / (2.0 * PI))).abs() < 1e-14);
    }

    #[test]
    fn trivariate_orthant_matches_closed_form() {
        // P(X ≤ 0) for equicorrelated ρ: 1/8 + 3 asin(ρ)/(4π)
        let rho: f64 = 0.5;
        let cov = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { rho });
        let est = mvn_cdf(&[0.0, 0.0, 0.0], &cov).unwrap();
        let exact = 0.125 + 3.0 * rho.asin() / (4.0 * PI);
        assert!((est.value - exact).abs() < 1e-4, "{} vs {}", est.value, exact);
        assert!(est.error < 1e-3);
    }

    #[test]
    fn qmc_reduces_to_product_under_independence() {
        let cov = DMatrix::<f64>::identity(4, 4);
        let b = [0.3, -0.2, 1.0, 0.5];
        let exact: f64 = b.iter().map(|x| norm_cdf(*x)).product();
        let est = mvn_cdf(&b, &cov).unwrap();
        assert!((est.value - exact).abs() < 1e-6);
    }

    #[test]
    fn quadrature_handles_infinite_range() {
        let est = integrate_to_infinity(|x| (-x).exp(), 0.0, 1e-14, 1e-12);
        assert!((est.value - 1.0).abs() < 1e-11);
        let gauss = integrate_to_infinity(norm_pdf, 0.0, 1e-14, 1e-12);
        assert!((gauss.value - 0.5).abs() < 1e-11);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-10, 0.01, 0.3, 0.5, 0.77, 0.999] {
            let back = norm_cdf(norm_quantile(p));
            assert!((back - p).abs() < 1e-12 * p.max(1e-3), "{p} -> {back}");
        }
    }

    #[test]
    fn ks_accepts_uniform_grid() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let (d, p) = ks_test(&xs, |x| x);
        assert!(d < 1e-3 && p > 0.99);
    }
}
