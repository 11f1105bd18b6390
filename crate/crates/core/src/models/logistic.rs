use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ingest::ObservationMatrix;
use crate::rng;

/// Symmetric logistic model; `θ → 0` is complete dependence, `θ → 1`
/// independence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LogisticRaw", into = "LogisticRaw")]
pub struct LogisticModel {
    d: usize,
    theta: f64,
}

#[derive(Serialize, Deserialize)]
struct LogisticRaw {
    d: usize,
    theta: f64,
}

impl TryFrom<LogisticRaw> for LogisticModel {
    type Error = crate::Error;
    fn try_from(r: LogisticRaw) -> Result<Self> {
        LogisticModel::new(r.d, r.theta)
    }
}

impl From<LogisticModel> for LogisticRaw {
    fn from(m: LogisticModel) -> Self {
        LogisticRaw { d: m.d, theta: m.theta }
    }
}

impl LogisticModel {
    pub fn new(d: usize, theta: f64) -> Result<Self> {
        if d < 2 {
            return Err(invalid("d", "need at least two variables"));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(invalid("theta", format!("must lie in (0, 1), got {theta}")));
        }
        Ok(LogisticModel { d, theta })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Bivariate `χ = 2 - 2^θ`.
    pub fn chi(&self) -> f64 {
        2.0 - 2f64.powf(self.theta)
    }
}

/// Exponent measure density
/// `(Σ y_i^{-1/θ})^{θ-d} Π_{i<d} (i/θ - 1) Π y_i^{-1/θ-1}`.
pub fn logistic_exponent_density(model: &LogisticModel, y: &[f64]) -> Result<f64> {
    let (d, th) = (model.d, model.theta);
    if y.len() != d {
        return Err(invalid("y", format!("length {} but d = {d}", y.len())));
    }
    if y.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(invalid("y", "entries must be positive"));
    }
    let s: f64 = y.iter().map(|v| v.powf(-1.0 / th)).sum();
    let c: f64 = (1..d).map(|i| i as f64 / th - 1.0).product();
    let log_prod: f64 = y.iter().map(|v| (-1.0 / th - 1.0) * v.ln()).sum();
    Ok((s.ln() * (th - d as f64) + log_prod).exp() * c)
}

/// Positive stable variate with Laplace transform `exp(-t^α)` (Kanter).
fn positive_stable<R: rand::Rng + ?Sized>(g: &mut R, alpha: f64) -> f64 {
    let u = PI * rng::open_unit(g);
    let e = -rng::open_unit(g).ln();
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = ((1.0 - alpha) * u).sin() / e;
    a * b.powf((1.0 - alpha) / alpha)
}

/// Max-stable logistic vectors with standard Fréchet margins:
/// `Z_i = (S / W_i)^θ`, `S` positive stable of index `θ`, `W_i` standard
/// exponential.
pub fn simulate_logistic(model: &LogisticModel, n: usize, seed: u64) -> Result<ObservationMatrix> {
    let th = model.theta;
    let values = super::simulate_rows(n, model.d, seed, |g, row| {
        let s = positive_stable(g, th);
        for z in row.iter_mut() {
            let w = -rng::open_unit(g).ln();
            *z = (s / w).powf(th);
        }
        Ok(())
    })?;
    ObservationMatrix::with_default_labels(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::chi_hat;
    use crate::ingest::rank_transform;
    use crate::stats::{integrate, ks_test};
    use proptest::prelude::{prop_assert, proptest};

    #[test]
    fn hand_value() {
        let m = LogisticModel::new(2, 0.5).unwrap();
        let v = logistic_exponent_density(&m, &[1.0, 1.0]).unwrap();
        assert!((v - 2f64.powf(-1.5)).abs() < 1e-15);
        assert!(LogisticModel::new(2, 1.0).is_err());
        assert!(logistic_exponent_density(&m, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn angular_mass_leaves_the_interior_as_theta_grows() {
        // Λ of {y1 + y2 > 1, both > 0} equals 2 for every θ (standard margins,
        // no mass on the axes); mass within the central part of the simplex
        // shrinks as θ → 1
        let central = |th: f64| {
            let m = LogisticModel::new(2, th).unwrap();
            // y = r (w, 1-w), dy = r dr dw, ∫_{r>1} r·r^{-3} dr = 1
            integrate(|w| logistic_exponent_density(&m, &[w, 1.0 - w]).unwrap(), 0.1, 0.9, 1e-12, 1e-10).value
        };
        let vals: Vec<f64> = [0.5, 0.8, 0.95, 0.99].iter().map(|&t| central(t)).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
        assert!(vals[3] < 0.05);
    }

    #[test]
    fn total_angular_mass_is_two() {
        let m = LogisticModel::new(2, 0.6).unwrap();
        let total = integrate(|w| logistic_exponent_density(&m, &[w, 1.0 - w]).unwrap(), 0.0, 1.0, 1e-12, 1e-10);
        assert!((total.value - 2.0).abs() < 1e-6, "{total:?}");
    }

    #[test]
    fn frechet_margins_and_chi_ordering() {
        let m = LogisticModel::new(3, 0.4).unwrap();
        let z = simulate_logistic(&m, 10_000, 1).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = z.values().column(j).iter().copied().collect();
            let (_, p) = ks_test(&col, |x| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 });
            assert!(p > 0.01, "{p}");
        }
        let chis: Vec<f64> = [0.3, 0.6, 0.9]
            .iter()
            .map(|&th| {
                let m = LogisticModel::new(2, th).unwrap();
                let s = rank_transform(&simulate_logistic(&m, 100_000, 7).unwrap());
                chi_hat(&s, &[0, 1], 0.99).unwrap().value
            })
            .collect();
        assert!(chis[0] > chis[1] && chis[1] > chis[2], "{chis:?}");
        assert!((chis[1] - LogisticModel::new(2, 0.6).unwrap().chi()).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn homogeneous(
            y in proptest::collection::vec(0.1f64..10.0, 3),
            c in 0.1f64..10.0,
            th in 0.05f64..0.95,
        ) {
            let m = LogisticModel::new(3, th).unwrap();
            let a = logistic_exponent_density(&m, &y).unwrap();
            let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
            let b = logistic_exponent_density(&m, &ys).unwrap() * c.powi(4);
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300));
        }
    }
}
