use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ingest::ObservationMatrix;
use crate::matrix_serde;
use crate::rng;

/// `Z_i = max_j a_ij ε_j` with independent standard Fréchet factors `ε_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MaxLinearRaw", into = "MaxLinearRaw")]
pub struct MaxLinearModel {
    a: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct MaxLinearRaw {
    #[serde(rename = "A", with = "matrix_serde::rows")]
    a: DMatrix<f64>,
}

impl TryFrom<MaxLinearRaw> for MaxLinearModel {
    type Error = crate::Error;
    fn try_from(r: MaxLinearRaw) -> Result<Self> {
        MaxLinearModel::normalized(r.a)
    }
}

impl From<MaxLinearModel> for MaxLinearRaw {
    fn from(m: MaxLinearModel) -> Self {
        MaxLinearRaw { a: m.a }
    }
}

const ROW_TOL: f64 = 1e-12;

impl MaxLinearModel {
    /// Requires nonnegative entries, unit row sums and no zero column.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let (d, p) = a.shape();
        if d < 2 || p == 0 {
            return Err(invalid("A", format!("shape {d}x{p}; need d >= 2, p >= 1")));
        }
        if a.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(invalid("A", "entries must be nonnegative and finite"));
        }
        for i in 0..d {
            let s = a.row(i).sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(invalid("A", format!("row {i} sums to {s}")));
            }
        }
        if let Some(j) = (0..p).find(|&j| a.column(j).iter().all(|&v| v == 0.0)) {
            return Err(invalid("A", format!("column {j} is zero")));
        }
        Ok(MaxLinearModel { a })
    }

    /// Rescales each row to sum to one first.
    pub fn normalized(mut a: DMatrix<f64>) -> Result<Self> {
        for mut row in a.row_iter_mut() {
            let s: f64 = row.sum();
            if s > 0.0 {
                row /= s;
            }
        }
        Self::new(a)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn d(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.a.ncols()
    }

    /// `χ_I = Σ_j min_{i∈I} a_ij`.
    pub fn chi(&self, subset: &[usize]) -> f64 {
        (0..self.p())
            .map(|j| subset.iter().map(|&i| self.a[(i, j)]).fold(f64::INFINITY, f64::min))
            .sum()
    }
}

/// `n` draws of the max-stable vector with standard Fréchet margins.
pub fn simulate_max_linear(model: &MaxLinearModel, n: usize, seed: u64) -> Result<ObservationMatrix> {
    let (d, p) = model.a.shape();
    let a = &model.a;
    let values = super::simulate_rows(n, d, seed, |g, row| {
        let eps: Vec<f64> = (0..p).map(|_| rng::frechet(g)).collect();
        for (i, z) in row.iter_mut().enumerate() {
            *z = (0..p).map(|j| a[(i, j)] * eps[j]).fold(0.0, f64::max);
        }
        Ok(())
    })?;
    ObservationMatrix::with_default_labels(values)
}

/// `n` draws from the limiting multivariate Pareto distribution of the model:
/// `Y = P a_J / ‖a_J‖∞` with `P` standard Pareto and column `J` picked with
/// probability proportional to `‖a_J‖∞`. The angles of `Y` take exactly the
/// `p` values of the columns, without the finite-threshold noise of
/// [`simulate_max_linear`].
pub fn simulate_max_linear_pareto(model: &MaxLinearModel, n: usize, seed: u64) -> Result<ObservationMatrix> {
    let (d, p) = model.a.shape();
    let a = &model.a;
    let col_max: Vec<f64> = (0..p).map(|j| a.column(j).max()).collect();
    let total: f64 = col_max.iter().sum();
    let values = super::simulate_rows(n, d, seed, |g, row| {
        let mut u = g.random::<f64>() * total;
        let mut j = p - 1;
        for (c, &m) in col_max.iter().enumerate() {
            if u < m {
                j = c;
                break;
            }
            u -= m;
        }
        let r = rng::pareto(g) / col_max[j];
        for (i, y) in row.iter_mut().enumerate() {
            *y = r * a[(i, j)];
        }
        Ok(())
    })?;
    ObservationMatrix::with_default_labels(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::{spherical_kmeans, AngularCloud};
    use crate::coefficients::chi_hat;
    use crate::ingest::{extract_exceedances, rank_transform, Norm};
    use crate::stats::ks_test;

    #[test]
    fn validation() {
        assert!(MaxLinearModel::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.4, 0.5])).is_err());
        assert!(MaxLinearModel::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0])).is_err());
        assert!(MaxLinearModel::new(DMatrix::from_row_slice(2, 2, &[1.0, -0.1, 0.9, 0.1])).is_err());
        let m = MaxLinearModel::normalized(DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 1.0, 3.0])).unwrap();
        assert_eq!(m.a()[(1, 1)], 0.75);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<MaxLinearModel>(&json).unwrap(), m);
    }

    #[test]
    fn deterministic_given_seed() {
        let m = MaxLinearModel::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.2, 0.8])).unwrap();
        let a = simulate_max_linear(&m, 5000, 3).unwrap();
        let b = simulate_max_linear(&m, 5000, 3).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), simulate_max_linear(&m, 5000, 4).unwrap().values());
    }

    #[test]
    fn identity_and_single_factor() {
        let ind = MaxLinearModel::new(DMatrix::identity(3, 3)).unwrap();
        let s = rank_transform(&simulate_max_linear(&ind, 50_000, 1).unwrap());
        assert!(chi_hat(&s, &[0, 1], 0.99).unwrap().value < 0.05);

        let one = MaxLinearModel::new(DMatrix::from_element(3, 1, 1.0)).unwrap();
        let z = simulate_max_linear(&one, 1000, 1).unwrap();
        let v = z.values();
        assert!((0..1000).all(|i| v[(i, 0)] == v[(i, 1)] && v[(i, 1)] == v[(i, 2)]));
    }

    #[test]
    fn frechet_margins() {
        let m = MaxLinearModel::normalized(DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 1.0])).unwrap();
        let z = simulate_max_linear(&m, 10_000, 9).unwrap();
        for j in 0..2 {
            let col: Vec<f64> = z.values().column(j).iter().copied().collect();
            let (_, p) = ks_test(&col, |x| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 });
            assert!(p > 0.01, "column {j}: p = {p}");
        }
    }

    #[test]
    fn angles_are_column_atoms() {
        // atoms a_j/‖a_j‖₁ with probabilities ∝ ‖a_j‖₁
        let a = DMatrix::from_row_slice(3, 2, &[0.8, 0.2, 0.1, 0.9, 0.5, 0.5]);
        let m = MaxLinearModel::new(a.clone()).unwrap();
        let s = rank_transform(&simulate_max_linear(&m, 50_000, 5).unwrap());
        let exc = extract_exceedances(&s, Norm::L1, 500).unwrap();
        let cloud = AngularCloud::from_exceedances(&exc).unwrap();
        let r = spherical_kmeans(&cloud, 2, 1, 10).unwrap();
        let norms: Vec<f64> = (0..2).map(|j| a.column(j).sum()).collect();
        let mut found = 0;
        for c in 0..2 {
            for j in 0..2 {
                let atom: Vec<f64> = a.column(j).iter().map(|v| v / norms[j]).collect();
                if (0..3).all(|i| (r.centers[(c, i)] - atom[i]).abs() < 0.05) {
                    found += 1;
                    let share = r.counts()[c] as f64 / 500.0;
                    assert!((share - norms[j] / 3.0).abs() < 0.08, "{share}");
                }
            }
        }
        assert_eq!(found, 2);
    }

    #[test]
    fn pareto_sampler_support_and_chi() {
        let a = DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.0, 1.0]);
        let m = MaxLinearModel::new(a).unwrap();
        let y = simulate_max_linear_pareto(&m, 20_000, 2).unwrap();
        let v = y.values();
        assert!((0..20_000).all(|i| v[(i, 0)].max(v[(i, 1)]) >= 1.0));
        // the sup norm of Y is standard Pareto
        let sup: Vec<f64> = (0..20_000).map(|i| v[(i, 0)].max(v[(i, 1)])).collect();
        let (_, p) = ks_test(&sup, |x| if x > 1.0 { 1.0 - 1.0 / x } else { 0.0 });
        assert!(p > 0.01);
        assert!((m.chi(&[0, 1]) - 0.4).abs() < 1e-15);
    }
}
