use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix_serde;
use crate::models::husler_reiss::cholesky;
use crate::models::HuslerReissModel;
use crate::rng;
use crate::stats::{mvn_cdf, mvn_log_pdf, norm_quantile};

/// Search box for every free variogram entry.
pub const GAMMA_MIN: f64 = 1e-6;
pub const GAMMA_MAX: f64 = 50.0;
pub const MAX_ITERATIONS: usize = 500;
pub const REL_TOL: f64 = 1e-8;
const STARTS: u64 = 3;
/// Seed of the perturbed optimizer starts.
pub const FIT_SEED: u64 = 0xc11_9e5;

/// Clique observations `y = X_C / u` for the rows with `max_C X > u`.
#[derive(Debug, Clone)]
pub struct CliqueData {
    clique: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl CliqueData {
    pub fn new(pareto: &DMatrix<f64>, clique: &[usize], threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(invalid("threshold", format!("must be positive and finite, got {threshold}")));
        }
        let d = pareto.ncols();
        let mut c = clique.to_vec();
        c.sort_unstable();
        c.dedup();
        if c.len() != clique.len() || c.iter().any(|&i| i >= d) || !(2..=3).contains(&c.len()) {
            return Err(invalid("clique", format!("{clique:?} must hold 2 or 3 distinct indices below {d}")));
        }
        let rows = (0..pareto.nrows())
            .map(|r| c.iter().map(|&i| pareto[(r, i)] / threshold).collect::<Vec<f64>>())
            .filter(|y| y.iter().any(|&v| v > 1.0))
            .collect();
        Ok(CliqueData { clique: c, rows })
    }

    pub fn clique(&self) -> &[usize] {
        &self.clique
    }

    pub fn n_obs(&self) -> usize {
        self.rows.len()
    }
}

/// Gaussian pieces for one exceedance pattern: anchor `m` (first exceeding
/// coordinate), the other exceeding coordinates `a` and censored ones `b`.
struct Pattern {
    m: usize,
    a: Vec<usize>,
    b: Vec<usize>,
    /// Cholesky factor of `Σ_aa`.
    chol_a: DMatrix<f64>,
    /// `Σ_ba Σ_aa^{-1}`.
    regress: DMatrix<f64>,
    /// `Σ_bb - Σ_ba Σ_aa^{-1} Σ_ab`.
    cond_cov: DMatrix<f64>,
}

fn pattern(gamma: &DMatrix<f64>, above: &[bool]) -> Result<Pattern> {
    let k = gamma.nrows();
    let m = above.iter().position(|&x| x).expect("some coordinate exceeds");
    let others: Vec<usize> = (0..k).filter(|&i| i != m).collect();
    let sigma = DMatrix::from_fn(others.len(), others.len(), |x, y| {
        let (i, j) = (others[x], others[y]);
        0.5 * (gamma[(i, m)] + gamma[(j, m)] - gamma[(i, j)])
    });
    let pos_a: Vec<usize> = (0..others.len()).filter(|&x| above[others[x]]).collect();
    let pos_b: Vec<usize> = (0..others.len()).filter(|&x| !above[others[x]]).collect();
    let sub = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |x, y| sigma[(r[x], c[y])]);
    let s_aa = sub(&pos_a, &pos_a);
    let s_ba = sub(&pos_b, &pos_a);
    let s_bb = sub(&pos_b, &pos_b);
    let (chol_a, regress) = if pos_a.is_empty() {
        (DMatrix::zeros(0, 0), DMatrix::zeros(pos_b.len(), 0))
    } else {
        let ch = cholesky(&s_aa, "Σ_AA")?;
        let regress = ch.solve(&s_ba.transpose()).transpose();
        (ch.l(), regress)
    };
    let cond_cov = &s_bb - &regress * s_ba.transpose();
    Ok(Pattern {
        m,
        a: pos_a.iter().map(|&x| others[x]).collect(),
        b: pos_b.iter().map(|&x| others[x]).collect(),
        chol_a,
        regress,
        cond_cov,
    })
}

/// Censored log-likelihood of the Hüsler–Reiss Pareto model with variogram
/// `gamma_block` on the clique.
///
/// Writing the exponent density with anchor `m` (a coordinate above the
/// threshold) as `y_m^{-2} Π_{i≠m} y_i^{-1} φ(x; Σ^(m))` with
/// `x_i = log(y_i / y_m) + Γ_im / 2`, the coordinates `B` below the
/// threshold are integrated over `(0, 1]`, i.e. `x_B <= -log y_m + Γ_Bm / 2`.
/// An observation with exceeding set `A ∋ m` then contributes
///
/// `-2 log y_m - Σ_{A\m} log y_i + log φ(x_{A\m}; Σ_{AA})
///  + log Φ(b_B - Σ_BA Σ_AA^{-1} x_{A\m}; Σ_{B|A}) - log Λ_C(E \ [0,1]^C)`.
pub fn censored_clique_loglik(pareto: &DMatrix<f64>, clique: &[usize], gamma_block: &DMatrix<f64>, threshold: f64) -> Result<f64> {
    loglik(&CliqueData::new(pareto, clique, threshold)?, gamma_block)
}

/// [`censored_clique_loglik`] on pre-extracted observations.
pub fn loglik(data: &CliqueData, gamma_block: &DMatrix<f64>) -> Result<f64> {
    let k = data.clique.len();
    if gamma_block.nrows() != k || gamma_block.ncols() != k {
        return Err(invalid("gamma_block", format!("shape {}x{} for a clique of size {k}", gamma_block.nrows(), gamma_block.ncols())));
    }
    let model = HuslerReissModel::new(gamma_block.clone())?;
    let gamma = model.gamma();
    let log_norm = model.exponent_measure_unit()?.value.ln();
    let mut patterns: HashMap<u32, Pattern> = HashMap::new();
    let mut total = 0.0;
    for y in &data.rows {
        let above: Vec<bool> = y.iter().map(|&v| v > 1.0).collect();
        let key = above.iter().enumerate().fold(0u32, |acc, (i, &b)| acc | ((b as u32) << i));
        if !patterns.contains_key(&key) {
            patterns.insert(key, pattern(gamma, &above)?);
        }
        let p = &patterns[&key];
        let lm = y[p.m].ln();
        let mut v = -2.0 * lm - log_norm;
        let xa: Vec<f64> = p.a.iter().map(|&i| y[i].ln() - lm + gamma[(i, p.m)] / 2.0).collect();
        if !xa.is_empty() {
            v += mvn_log_pdf(&xa, &p.chol_a) - p.a.iter().map(|&i| y[i].ln()).sum::<f64>();
        }
        if !p.b.is_empty() {
            let shift = &p.regress * DMatrix::from_column_slice(xa.len(), 1, &xa);
            let upper: Vec<f64> = p
                .b
                .iter()
                .enumerate()
                .map(|(r, &i)| -lm + gamma[(i, p.m)] / 2.0 - if xa.is_empty() { 0.0 } else { shift[(r, 0)] })
                .collect();
            v += mvn_cdf(&upper, &p.cond_cov)?.value.ln();
        }
        total += v;
    }
    if !total.is_finite() {
        return Err(Error::Numerical(format!("censored log-likelihood is {total}")));
    }
    Ok(total)
}

/// Log-likelihood of the standard Pareto margin `v` over its exceedances,
/// `Σ -2 log(X_v / u)`; the separator term of the composite likelihood.
pub fn margin_loglik(pareto: &DMatrix<f64>, v: usize, threshold: f64) -> f64 {
    pareto
        .column(v)
        .iter()
        .filter(|&&x| x > threshold)
        .map(|&x| -2.0 * (x / threshold).ln())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliqueFit {
    pub clique: Vec<usize>,
    #[serde(with = "matrix_serde::rows")]
    pub gamma_block: DMatrix<f64>,
    pub loglik: f64,
    pub n_obs: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Some entry ended within 0.1% (relative) of the search box.
    pub at_bound: bool,
}

fn free_entries(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect()
}

fn block_from(k: usize, theta: &[f64]) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(k, k);
    for (&(i, j), t) in free_entries(k).iter().zip(theta) {
        g[(i, j)] = t.exp();
        g[(j, i)] = t.exp();
    }
    g
}

/// `Γ` matching an empirical `χ` through `χ = 2 - 2Φ(√Γ / 2)`.
fn gamma_from_chi(chi: f64) -> f64 {
    let chi = chi.clamp(0.01, 0.99);
    (2.0 * norm_quantile(1.0 - chi / 2.0)).powi(2)
}

fn default_init(data: &CliqueData) -> DMatrix<f64> {
    let k = data.clique.len();
    let mut g = DMatrix::zeros(k, k);
    for (i, j) in free_entries(k) {
        let ni = data.rows.iter().filter(|y| y[i] > 1.0).count().max(1);
        let nj = data.rows.iter().filter(|y| y[j] > 1.0).count().max(1);
        let both = data.rows.iter().filter(|y| y[i] > 1.0 && y[j] > 1.0).count();
        let v = gamma_from_chi(2.0 * both as f64 / (ni + nj) as f64);
        g[(i, j)] = v;
        g[(j, i)] = v;
    }
    if HuslerReissModel::new(g.clone()).is_err() {
        let mean = free_entries(k).iter().map(|&(i, j)| g[(i, j)].ln()).sum::<f64>() / free_entries(k).len() as f64;
        g = DMatrix::from_fn(k, k, |i, j| if i == j { 0.0 } else { mean.exp() });
    }
    g
}

/// Maximizes the censored log-likelihood over the free entries of the
/// clique variogram, parameterized by their logarithms and clamped to
/// `[GAMMA_MIN, GAMMA_MAX]`. Nelder–Mead is run from `init` (or a
/// moment-type guess from pairwise exceedance frequencies) and from two
/// seeded perturbations of it; the best iterate wins. If the winning run
/// hits [`MAX_ITERATIONS`] it is returned with `converged = false`.
pub fn fit_clique(pareto: &DMatrix<f64>, clique: &[usize], threshold: f64, init: Option<&DMatrix<f64>>) -> Result<CliqueFit> {
    let data = CliqueData::new(pareto, clique, threshold)?;
    fit_clique_data(&data, init)
}

pub fn fit_clique_data(data: &CliqueData, init: Option<&DMatrix<f64>>) -> Result<CliqueFit> {
    let k = data.clique.len();
    let init = match init {
        Some(g) => {
            if g.nrows() != k || g.ncols() != k {
                return Err(invalid("init", format!("shape {}x{} for a clique of size {k}", g.nrows(), g.ncols())));
            }
            HuslerReissModel::new(g.clone())?;
            g.clone()
        }
        None => default_init(data),
    };
    let x0: Vec<f64> = free_entries(k).iter().map(|&(i, j)| init[(i, j)].ln()).collect();
    fit_parameterized(data, &x0, |x| block_from(k, x))
}

/// Fit of a triangle restricted to the tree sub-model with path
/// `a - middle - b`: `Γ_ab = Γ_a,middle + Γ_middle,b` (local indices).
pub fn fit_clique_path(data: &CliqueData, middle: usize, init: Option<&DMatrix<f64>>) -> Result<CliqueFit> {
    if data.clique.len() != 3 || middle > 2 {
        return Err(invalid("middle", format!("needs a triangle and a local index below 3, got {middle}")));
    }
    let init = init.cloned().unwrap_or_else(|| default_init(data));
    let ends: Vec<usize> = (0..3).filter(|&i| i != middle).collect();
    let x0 = [init[(ends[0], middle)].ln(), init[(ends[1], middle)].ln()];
    fit_parameterized(data, &x0, |x| {
        let (ga, gb) = (x[0].exp(), x[1].exp());
        let mut g = DMatrix::zeros(3, 3);
        for (i, j, v) in [(ends[0], middle, ga), (ends[1], middle, gb), (ends[0], ends[1], ga + gb)] {
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
        g
    })
}

fn fit_parameterized(data: &CliqueData, x0: &[f64], build: impl Fn(&[f64]) -> DMatrix<f64>) -> Result<CliqueFit> {
    if data.rows.is_empty() {
        return Err(Error::InvalidData(format!("no exceedances on clique {:?}", data.clique)));
    }
    let (lo, hi) = (GAMMA_MIN.ln(), GAMMA_MAX.ln());
    let x0: Vec<f64> = x0.iter().map(|v| v.clamp(lo, hi)).collect();
    let objective = |x: &[f64]| -> f64 {
        match loglik(data, &build(x)) {
            Ok(v) => -v,
            Err(_) => f64::INFINITY,
        }
    };
    let mut best: Option<NmResult> = None;
    for s in 0..STARTS {
        let start: Vec<f64> = if s == 0 {
            x0.clone()
        } else {
            let mut g = rng::stream(FIT_SEED, s);
            x0.iter().map(|v| (v + g.random_range(-1.0..1.0)).clamp(lo, hi)).collect()
        };
        let r = nelder_mead(&objective, &start, lo, hi);
        if best.as_ref().is_none_or(|b| r.value < b.value) {
            best = Some(r);
        }
    }
    let best = best.expect("at least one start");
    if !best.value.is_finite() {
        return Err(Error::Numerical(format!("no valid variogram found for clique {:?}", data.clique)));
    }
    let at_bound = best.x.iter().any(|&t| t <= lo + 1e-3 || t >= hi - 1e-3);
    if !best.converged {
        log::warn!("clique {:?}: no convergence after {MAX_ITERATIONS} iterations", data.clique);
    }
    if best.x.iter().any(|&t| t >= hi - 1e-3) {
        log::warn!("clique {:?}: Γ estimate at the upper bound {GAMMA_MAX} (near independence)", data.clique);
    }
    Ok(CliqueFit {
        clique: data.clique.clone(),
        gamma_block: build(&best.x),
        loglik: -best.value,
        n_obs: data.rows.len(),
        iterations: best.iterations,
        converged: best.converged,
        at_bound,
    })
}

struct NmResult {
    x: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

/// Nelder–Mead minimization with every trial point clamped to `[lo, hi]`
/// coordinatewise. Stops when the spread of the simplex values is below
/// [`REL_TOL`] relative to the best value.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], lo: f64, hi: f64) -> NmResult {
    let n = x0.len();
    let clamp = |x: Vec<f64>| -> Vec<f64> { x.into_iter().map(|v| v.clamp(lo, hi)).collect() };
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f(x0))];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += if x[i] + 0.5 <= hi { 0.5 } else { -0.5 };
        let v = f(&x);
        simplex.push((x, v));
    }
    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + t * (q - p)).collect() };
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (fb, fw) = (simplex[0].1, simplex[n].1);
        if fb.is_finite() && (fw - fb).abs() <= REL_TOL * fb.abs().max(1e-300) {
            converged = true;
            break;
        }
        let collapsed = simplex.iter().all(|(x, _)| x.iter().zip(&simplex[0].0).all(|(a, b)| (a - b).abs() < 1e-12));
        if collapsed {
            converged = fb.is_finite();
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n).map(|c| simplex[..n].iter().map(|(x, _)| x[c]).sum::<f64>() / n as f64).collect();
        let worst = simplex[n].0.clone();
        let xr = clamp(combine(&centroid, &worst, -1.0));
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = clamp(combine(&centroid, &worst, -2.0));
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = clamp(combine(&centroid, &xr, 0.5));
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = clamp(combine(&centroid, &worst, 0.5));
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    let x = combine(&best, &p.0, 0.5);
                    p.1 = f(&x);
                    p.0 = x;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    NmResult {
        x,
        value,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::hr_pareto_density;
    use crate::stats::integrate_to_infinity;

    fn tri() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.5, 1.0, 0.0, 0.8, 1.5, 0.8, 0.0])
    }

    /// Pareto density that vanishes where a coordinate underflows to zero.
    fn dens(m: &HuslerReissModel, y: &[f64]) -> f64 {
        hr_pareto_density(m, y).unwrap_or(0.0)
    }

    fn one_row(y: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, y.len(), y)
    }

    #[test]
    fn uncensored_equals_pareto_density() {
        let g = tri();
        let model = HuslerReissModel::new(g.clone()).unwrap();
        let rows = [[2.0, 3.0, 1.5], [1.1, 7.0, 2.2], [4.0, 1.01, 1.3]];
        let u = 2.0;
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().map(|v| v * u)).collect();
        let data = DMatrix::from_row_slice(3, 3, &flat);
        let got = censored_clique_loglik(&data, &[0, 1, 2], &g, u).unwrap();
        let want: f64 = rows.iter().map(|y| hr_pareto_density(&model, y).unwrap().ln()).sum();
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn censoring_matches_quadrature() {
        // d = 2, second coordinate censored
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 1.3, 1.3, 0.0]);
        let model = HuslerReissModel::new(g.clone()).unwrap();
        let y1 = 2.5;
        let got = censored_clique_loglik(&one_row(&[y1, 0.4]), &[0, 1], &g, 1.0).unwrap();
        let want = integrate_to_infinity(|s| dens(&model, &[y1, (-s).exp()]) * (-s).exp(), 0.0, 1e-14, 1e-12);
        assert!((got - want.value.ln()).abs() < 1e-6);

        // d = 3 with one and with two censored coordinates
        let g = tri();
        let model = HuslerReissModel::new(g.clone()).unwrap();
        let got = censored_clique_loglik(&one_row(&[0.3, 1.7, 2.4]), &[0, 1, 2], &g, 1.0).unwrap();
        let want = integrate_to_infinity(|s| dens(&model, &[(-s).exp(), 1.7, 2.4]) * (-s).exp(), 0.0, 1e-14, 1e-12);
        assert!((got - want.value.ln()).abs() < 1e-6);

        let got = censored_clique_loglik(&one_row(&[0.3, 3.1, 0.9]), &[0, 1, 2], &g, 1.0).unwrap();
        let want = integrate_to_infinity(
            |s| {
                integrate_to_infinity(|t| dens(&model, &[(-s).exp(), 3.1, (-t).exp()]) * (-t).exp(), 0.0, 1e-15, 1e-11)
                    .value
                    * (-s).exp()
            },
            0.0,
            1e-14,
            1e-10,
        );
        assert!((got - want.value.ln()).abs() < 1e-6);
    }

    #[test]
    fn below_threshold_rows_are_dropped() {
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let data = DMatrix::from_row_slice(2, 2, &[3.0, 2.0, 0.5, 0.9]);
        let a = censored_clique_loglik(&data, &[0, 1], &g, 1.0).unwrap();
        let b = censored_clique_loglik(&one_row(&[3.0, 2.0]), &[0, 1], &g, 1.0).unwrap();
        assert_eq!(a, b);
        assert!(censored_clique_loglik(&data, &[0, 0], &g, 1.0).is_err());
        assert!(censored_clique_loglik(&data, &[0, 1], &g, 0.0).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        assert!(censored_clique_loglik(&data, &[0, 1], &bad, 1.0).is_err());
    }

    #[test]
    fn nelder_mead_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 0.5).powi(2) + 2.0;
        let r = nelder_mead(&f, &[0.0, 0.0], -5.0, 5.0);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] + 0.5).abs() < 1e-3);
        // minimum outside the box lands on the boundary
        let r = nelder_mead(&|x: &[f64]| (x[0] - 9.0).powi(2) + 1.0, &[0.0], -5.0, 5.0);
        assert!((r.x[0] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn comonotone_and_independent_limits() {
        let n = 400;
        let v: Vec<f64> = (1..=n).map(|r| (n + 1) as f64 / (n + 1 - r) as f64).collect();
        let co = DMatrix::from_fn(n, 2, |i, _| v[i]);
        let fit = fit_clique(&co, &[0, 1], 20.0, None).unwrap();
        assert!(fit.gamma_block[(0, 1)] < 1e-3 && fit.at_bound, "{}", fit.gamma_block[(0, 1)]);

        // one variable exceeds only where the other is at its smallest
        let ind = DMatrix::from_fn(n, 2, |i, j| if j == 0 { v[i] } else { v[n - 1 - i] });
        let fit = fit_clique(&ind, &[0, 1], 20.0, None).unwrap();
        assert!(fit.gamma_block[(0, 1)] > 40.0 && fit.at_bound, "{}", fit.gamma_block[(0, 1)]);
    }
}
