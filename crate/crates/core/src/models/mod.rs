//! Parametric models for multivariate extremes: construction, densities,
//! exact simulation and closed-form dependence summaries.

pub mod husler_reiss;
pub mod logistic;
pub mod maxlinear;
pub mod recursive;

use nalgebra::DMatrix;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::rng;

pub use husler_reiss::{chi_oracle_hr, hr_exponent_density, hr_pareto_density, simulate_hr_pareto, HuslerReissModel};
pub use logistic::{logistic_exponent_density, simulate_logistic, LogisticModel};
pub use maxlinear::{simulate_max_linear, simulate_max_linear_pareto, MaxLinearModel};
pub use recursive::{recursive_to_max_linear, simulate_recursive_ml, Edge, RecursiveMLModel};

/// Fills an `n x d` matrix row by row, chunk `c` of [`rng::CHUNK_ROWS`] rows
/// drawing from sub-stream `c` of `seed`. The result does not depend on the
/// number of threads.
pub(crate) fn simulate_rows<F>(n: usize, d: usize, seed: u64, draw: F) -> Result<DMatrix<f64>>
where
    F: Fn(&mut ChaCha20Rng, &mut [f64]) -> Result<()> + Sync,
{
    let chunks: Vec<Vec<f64>> = (0..n.div_ceil(rng::CHUNK_ROWS))
        .into_par_iter()
        .map(|c| {
            let rows = rng::CHUNK_ROWS.min(n - c * rng::CHUNK_ROWS);
            let mut g = rng::stream(seed, c as u64);
            let mut buf = vec![0.0; rows * d];
            for r in buf.chunks_mut(d) {
                draw(&mut g, r)?;
            }
            Ok(buf)
        })
        .collect::<Result<_>>()?;
    let flat: Vec<f64> = chunks.concat();
    Ok(DMatrix::from_row_slice(n, d, &flat))
}
