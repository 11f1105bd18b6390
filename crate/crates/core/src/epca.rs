//! Principal component analysis of the angular distribution: the
//! second-moment matrix `Σ = E(ΘΘᵀ)`, its eigenstructure, distances between
//! subspaces on the nonnegative sphere, and reconstruction in the positive
//! orthant.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::angular::AngularCloud;
use crate::error::{invalid, Result};
use crate::ingest::Norm;
use crate::matrix_serde;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalPCA {
    #[serde(with = "matrix_serde::rows")]
    pub sigma: DMatrix<f64>,
    /// Non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Column `i` belongs to `eigenvalues[i]`; the first nonzero entry of
    /// each column is positive.
    #[serde(with = "matrix_serde::rows")]
    pub eigenvectors: DMatrix<f64>,
    pub norm: Norm,
}

impl ExtremalPCA {
    pub fn d(&self) -> usize {
        self.sigma.nrows()
    }

    /// The first `p` eigenvectors as columns.
    pub fn basis(&self, p: usize) -> DMatrix<f64> {
        self.eigenvectors.columns(0, p).into_owned()
    }

    /// Fraction of `trace(Σ)` carried by each component.
    pub fn explained(&self) -> Vec<f64> {
        let tr: f64 = self.eigenvalues.iter().sum();
        self.eigenvalues.iter().map(|l| l / tr).collect()
    }
}

/// Eigenvectors with |entry| below this count as zero for the sign rule.
const SIGN_EPS: f64 = 1e-12;

/// Symmetric eigendecomposition sorted by decreasing eigenvalue, with the
/// first nonzero coordinate of every eigenvector made positive.
pub fn sorted_eigen(sym: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(sym.clone());
    let d = sym.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(d, d);
    for (c, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        if let Some(first) = v.iter().find(|x| x.abs() > SIGN_EPS) {
            if *first < 0.0 {
                v.neg_mut();
            }
        }
        vectors.set_column(c, &v);
    }
    (values, vectors)
}

/// `Σ = Σ_i w_i θ_i θ_iᵀ` and its eigenstructure.
pub fn estimate_sigma(cloud: &AngularCloud) -> ExtremalPCA {
    let a = cloud.angles();
    let w = DVector::from_column_slice(cloud.weights());
    // Aᵀ diag(w) A
    let mut weighted = a.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let mut sigma = a.transpose() * weighted;
    sigma = (&sigma + sigma.transpose()) * 0.5;
    let (mut eigenvalues, eigenvectors) = sorted_eigen(&sigma);
    // Σ is positive semidefinite; round-off can leave tiny negatives
    eigenvalues.iter_mut().for_each(|l| *l = l.max(0.0));
    ExtremalPCA {
        sigma,
        eigenvalues,
        eigenvectors,
        norm: cloud.norm(),
    }
}

/// Mean squared reconstruction error `E‖Π_S Θ - Θ‖²` of the span of the
/// first `p` eigenvectors: `trace(Σ) - Σ_{i<=p} λ_i`, which is
/// `1 - Σ_{i<=p} λ_i` for l2 angles.
pub fn pca_loss(pca: &ExtremalPCA, p: usize) -> Result<f64> {
    let d = pca.d();
    if p == 0 || p > d {
        return Err(invalid("p", format!("need 1 <= p <= {d}, got {p}")));
    }
    let tr = pca.sigma.trace();
    let kept: f64 = pca.eigenvalues[..p].iter().sum();
    Ok((tr - kept).max(0.0))
}

const ORTHO_TOL: f64 = 1e-8;

fn check_orthonormal(name: &'static str, b: &DMatrix<f64>) -> Result<()> {
    let g = b.transpose() * b;
    let id = DMatrix::<f64>::identity(b.ncols(), b.ncols());
    if (g - id).amax() > ORTHO_TOL {
        return Err(invalid(name, "columns are not orthonormal"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubspaceDistance {
    /// Best value found for `sup_θ ‖(Π_S - Π_S') θ‖₂` over unit `θ >= 0`.
    pub value: f64,
    /// Unrestricted operator norm `‖Π_S - Π_S'‖₂`.
    pub upper_bound: f64,
}

pub const DISTANCE_STARTS: usize = 50;
const DISTANCE_SEED: u64 = 0x00ec_a5ee_d;
const DISTANCE_ITERS: usize = 1000;

/// Distance between the subspaces spanned by the orthonormal columns of `s`
/// and `s2`, restricted to nonnegative unit directions.
///
/// The supremum has no closed form; it is approached by projected ascent on
/// `θᵀ(D² + I)θ`, `D = Π_S - Π_S'`, from every coordinate axis and
/// [`DISTANCE_STARTS`] random nonnegative starts with a fixed seed.
pub fn subspace_distance(s: &DMatrix<f64>, s2: &DMatrix<f64>) -> Result<SubspaceDistance> {
    if s.nrows() != s2.nrows() {
        return Err(invalid("s2", format!("ambient dimension {} vs {}", s2.nrows(), s.nrows())));
    }
    check_orthonormal("s", s)?;
    check_orthonormal("s2", s2)?;
    let d = s.nrows();
    let diff = s * s.transpose() - s2 * s2.transpose();
    let upper_bound = diff.clone().symmetric_eigenvalues().amax();
    let m = &diff * &diff + DMatrix::<f64>::identity(d, d);

    let mut starts: Vec<DVector<f64>> = (0..d)
        .map(|j| {
            let mut e = DVector::zeros(d);
            e[j] = 1.0;
            e
        })
        .collect();
    let mut g = rng::stream(DISTANCE_SEED, 0);
    for _ in 0..DISTANCE_STARTS {
        let v = DVector::from_fn(d, |_, _| {
            let z: f64 = StandardNormal.sample(&mut g);
            z.abs()
        });
        let n = v.norm();
        starts.push(v / n);
    }

    let mut best = 0.0f64;
    for mut theta in starts {
        let mut val = theta.dot(&(&m * &theta));
        for _ in 0..DISTANCE_ITERS {
            let next = (&m * &theta).map(|x| x.max(0.0));
            let n = next.norm();
            if n == 0.0 {
                break;
            }
            let next = next / n;
            let nv = next.dot(&(&m * &next));
            theta = next;
            if nv - val <= 1e-15 {
                val = val.max(nv);
                break;
            }
            val = nv;
        }
        best = best.max(val);
    }
    let value = (best - 1.0).max(0.0).sqrt().min(upper_bound);
    Ok(SubspaceDistance { value, upper_bound })
}

/// `t(x) = x` for `x >= x0`, `x0 exp(x/x0 - 1)` below: smooth, increasing,
/// onto `(0, ∞)`. Underflow is clamped to the smallest positive float.
pub fn bijection(x: f64, x0: f64) -> f64 {
    if x >= x0 {
        x
    } else {
        (x0 * (x / x0 - 1.0).exp()).max(f64::MIN_POSITIVE)
    }
}

/// Inverse of [`bijection`] on `(0, ∞)`.
pub fn bijection_inv(y: f64, x0: f64) -> f64 {
    if y >= x0 {
        y
    } else {
        x0 * (1.0 + (y / x0).ln())
    }
}

/// Maps positive rows through `t⁻¹`, projects them on the span of the first
/// `p` eigenvectors and maps back with `t`; rows are optionally rescaled to
/// unit l1 norm afterwards.
pub fn reconstruct(
    pca: &ExtremalPCA,
    rows: &DMatrix<f64>,
    p: usize,
    bijection_floor: f64,
    renormalize: bool,
) -> Result<DMatrix<f64>> {
    let d = pca.d();
    if p == 0 || p > d {
        return Err(invalid("p", format!("need 1 <= p <= {d}, got {p}")));
    }
    if !(bijection_floor > 0.0) {
        return Err(invalid("bijection_floor", "must be positive"));
    }
    if rows.ncols() != d {
        return Err(invalid("rows", format!("{} columns but d = {d}", rows.ncols())));
    }
    if rows.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(invalid("rows", "entries must be positive and finite"));
    }
    let v = pca.basis(p);
    let proj = &v * v.transpose();
    let u = rows.map(|y| bijection_inv(y, bijection_floor));
    let mut out = (u * proj).map(|x| bijection(x, bijection_floor));
    if renormalize {
        for mut row in out.row_iter_mut() {
            let s: f64 = row.sum();
            row /= s;
        }
    }
    Ok(out)
}
