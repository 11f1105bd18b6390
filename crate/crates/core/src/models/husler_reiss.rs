use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::{Cholesky, DMatrix, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix_serde;
use crate::rng;
use crate::stats::{integrate_to_infinity, mvn_cdf, mvn_log_pdf, Estimate};

/// Hüsler–Reiss model given by its variogram matrix `Γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HrRaw", into = "HrRaw")]
pub struct HuslerReissModel {
    gamma: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct HrRaw {
    #[serde(with = "matrix_serde::rows")]
    gamma: DMatrix<f64>,
}

impl TryFrom<HrRaw> for HuslerReissModel {
    type Error = Error;
    fn try_from(r: HrRaw) -> Result<Self> {
        HuslerReissModel::new(r.gamma)
    }
}

impl From<HuslerReissModel> for HrRaw {
    fn from(m: HuslerReissModel) -> Self {
        HrRaw { gamma: m.gamma }
    }
}

/// Smallest admissible eigenvalue of `Σ^(m)` at construction.
const PD_TOL: f64 = 1e-10;

/// `Σ^(m)_ij = (Γ_im + Γ_jm - Γ_ij) / 2` over `i, j ≠ m`.
pub fn sigma_from_gamma(gamma: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let d = gamma.nrows();
    let idx: Vec<usize> = (0..d).filter(|&i| i != m).collect();
    DMatrix::from_fn(d - 1, d - 1, |a, b| {
        let (i, j) = (idx[a], idx[b]);
        0.5 * (gamma[(i, m)] + gamma[(j, m)] - gamma[(i, j)])
    })
}

pub(crate) fn cholesky(sigma: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(sigma.clone()).ok_or_else(|| {
        let eig = sigma.clone().symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        Error::NotPositiveDefinite(format!("{what}: eigenvalues in [{lo:.3e}, {hi:.3e}], condition number {:.3e}", hi / lo))
    })
}

impl HuslerReissModel {
    /// Checks for a symmetric, nonnegative, zero-diagonal `Γ` whose `Σ^(1)`
    /// is positive definite (equivalently, `Γ` is conditionally negative
    /// definite).
    pub fn new(gamma: DMatrix<f64>) -> Result<Self> {
        let d = gamma.nrows();
        if d < 2 || gamma.ncols() != d {
            return Err(invalid("gamma", format!("shape {}x{}", d, gamma.ncols())));
        }
        for i in 0..d {
            if gamma[(i, i)] != 0.0 {
                return Err(invalid("gamma", format!("diagonal entry {i} is {}", gamma[(i, i)])));
            }
            for j in 0..d {
                let v = gamma[(i, j)];
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(invalid("gamma", format!("entry ({i}, {j}) = {v}")));
                }
                if (v - gamma[(j, i)]).abs() > 1e-12 * (1.0 + v.abs()) {
                    return Err(invalid("gamma", format!("not symmetric at ({i}, {j})")));
                }
            }
        }
        let gamma = (&gamma + gamma.transpose()) * 0.5;
        let sigma = sigma_from_gamma(&gamma, 0);
        let min_eig = sigma.clone().symmetric_eigenvalues().min();
        if !(min_eig > PD_TOL) {
            return Err(Error::NotPositiveDefinite(format!(
                "Σ^(1) has smallest eigenvalue {min_eig:.3e}; Γ is not conditionally negative definite"
            )));
        }
        Ok(HuslerReissModel { gamma })
    }

    /// Bivariate model with `Γ_12 = γ`.
    pub fn bivariate(gamma: f64) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(2, 2, &[0.0, gamma, gamma, 0.0]))
    }

    pub fn d(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn sigma(&self, m: usize) -> DMatrix<f64> {
        sigma_from_gamma(&self.gamma, m)
    }

    /// Sub-model on the variables in `subset`.
    pub fn marginal(&self, subset: &[usize]) -> Result<Self> {
        let k = subset.len();
        Self::new(DMatrix::from_fn(k, k, |a, b| self.gamma[(subset[a], subset[b])]))
    }

    /// `Λ(E \ [0, 1]^d) = Σ_m Φ_{d-1}(Γ_{-m,m}/2; Σ^(m))`, deterministic for
    /// `d <= 3` and by quasi-Monte Carlo above.
    pub fn exponent_measure_unit(&self) -> Result<Estimate> {
        let d = self.d();
        let mut total = Estimate { value: 0.0, error: 0.0 };
        for m in 0..d {
            let upper: Vec<f64> = (0..d).filter(|&i| i != m).map(|i| self.gamma[(i, m)] / 2.0).collect();
            let e = mvn_cdf(&upper, &self.sigma(m))?;
            total.value += e.value;
            total.error += e.error;
        }
        Ok(total)
    }
}

fn check_point(y: &[f64], d: usize) -> Result<()> {
    if y.len() != d {
        return Err(invalid("y", format!("length {} but d = {d}", y.len())));
    }
    if y.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(invalid("y", "entries must be positive and finite"));
    }
    Ok(())
}

pub(crate) fn log_density_with(gamma: &DMatrix<f64>, chol_l: &DMatrix<f64>, y: &[f64], m: usize) -> f64 {
    let d = y.len();
    let x: Vec<f64> = (0..d)
        .filter(|&i| i != m)
        .map(|i| (y[i] / y[m]).ln() + gamma[(i, m)] / 2.0)
        .collect();
    let log_prod: f64 = (0..d).filter(|&i| i != m).map(|i| y[i].ln()).sum();
    -2.0 * y[m].ln() - log_prod + mvn_log_pdf(&x, chol_l)
}

/// Log of the exponent measure density written with anchor `m`.
pub fn hr_log_exponent_density(model: &HuslerReissModel, y: &[f64], m: usize) -> Result<f64> {
    let d = model.d();
    check_point(y, d)?;
    if m >= d {
        return Err(invalid("m", format!("anchor {m} out of range for d = {d}")));
    }
    let chol = cholesky(&model.sigma(m), "Σ^(m)")?;
    Ok(log_density_with(&model.gamma, &chol.l(), y, m))
}

/// Exponent measure density
/// `y_m^{-2} Π_{i≠m} y_i^{-1} φ_{d-1}(log(y_{-m}/y_m) + Γ_{-m,m}/2; Σ^(m))`;
/// the value does not depend on `m`.
pub fn hr_exponent_density(model: &HuslerReissModel, y: &[f64], m: usize) -> Result<f64> {
    hr_log_exponent_density(model, y, m).map(f64::exp)
}

/// Density of the multivariate Pareto distribution on
/// `L = {y >= 0 : ‖y‖∞ > 1}`: `λ(y) / Λ(E \ [0,1]^d)`.
pub fn hr_pareto_density(model: &HuslerReissModel, y: &[f64]) -> Result<f64> {
    check_point(y, model.d())?;
    if y.iter().fold(0.0f64, |a, &b| a.max(b)) < 1.0 {
        return Err(invalid("y", "point lies inside the unit box"));
    }
    let lam = hr_exponent_density(model, y, 0)?;
    Ok(lam / model.exponent_measure_unit()?.value)
}

pub const MIN_ACCEPTANCE: f64 = 1e-3;

/// Exact draws from the Hüsler–Reiss Pareto distribution.
///
/// An anchor `m` is drawn uniformly and `Y = P exp(N - Γ_{·m}/2)` with `P`
/// standard Pareto and `N ~ N(0, Σ^(m))`, `N_m = 0`; this samples `Λ`
/// restricted to `{y_m > 1}`. Accepting with probability
/// `1 / #{i : Y_i > 1}` turns the uniform mixture over anchors into `Λ`
/// restricted to `L`, normalized. The expected acceptance rate is
/// `Λ(E \ [0,1]^d) / d >= 1/d`.
pub fn simulate_hr_pareto(model: &HuslerReissModel, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let d = model.d();
    let chols: Vec<DMatrix<f64>> = (0..d)
        .map(|m| cholesky(&model.sigma(m), "Σ^(m)").map(|c| c.l()))
        .collect::<Result<_>>()?;
    let gamma = &model.gamma;
    super::simulate_rows(n, d, seed, |g, row| {
        let mut attempts = 0usize;
        loop {
            attempts += 1;
            let m = g.random_range(0..d);
            let z: Vec<f64> = (0..d - 1).map(|_| g.sample::<f64, _>(StandardNormal)).collect();
            let l = &chols[m];
            let p = rng::pareto(g);
            let mut a = 0;
            for i in 0..d {
                let ni = if i == m {
                    0.0
                } else {
                    let r = if i < m { i } else { i - 1 };
                    (0..=r).map(|c| l[(r, c)] * z[c]).sum::<f64>()
                };
                row[i] = p * (ni - gamma[(i, m)] / 2.0).exp();
                if row[i] > 1.0 {
                    a += 1;
                }
            }
            if g.random::<f64>() * (a as f64) < 1.0 {
                return Ok(());
            }
            if attempts >= 10_000 && 1.0 / (attempts as f64) < MIN_ACCEPTANCE {
                return Err(Error::LowAcceptance {
                    rate: 1.0 / attempts as f64,
                    min: MIN_ACCEPTANCE,
                });
            }
        }
    })
}

fn chi_cache() -> &'static Mutex<HashMap<u64, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Bivariate `χ(Γ) = Λ({y_1 > 1, y_2 > 1})`, by integrating the density in
/// anchored coordinates: `∫_0^∞ e^{-s} (1 - Φ((Γ/2 - s)/√Γ)) ds`.
/// Equals `2 - 2Φ(√Γ/2)`; results are cached.
pub fn chi_oracle_hr(gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(invalid("gamma", format!("must be nonnegative, got {gamma}")));
    }
    if gamma == 0.0 {
        return Ok(1.0);
    }
    if gamma.is_infinite() {
        return Ok(0.0);
    }
    if let Some(&v) = chi_cache().lock().unwrap().get(&gamma.to_bits()) {
        return Ok(v);
    }
    let sd = gamma.sqrt();
    let f = |s: f64| (-s).exp() * crate::stats::norm_cdf((s - gamma / 2.0) / sd);
    // the integrand changes fastest around s = Γ/2
    let mid = gamma / 2.0;
    let v = crate::stats::integrate(f, 0.0, mid, 1e-14, 1e-12).value + integrate_to_infinity(f, mid, 1e-14, 1e-12).value;
    let v = v.clamp(0.0, 1.0);
    chi_cache().lock().unwrap().insert(gamma.to_bits(), v);
    Ok(v)
}
