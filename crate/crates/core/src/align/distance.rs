use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};

const NORM_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            _ => Err(invalid(format!("unknown metric `{s}` (cosine | euclidean)"))),
        }
    }
}

/// `T_x × T_y` matrix of frame distances between the columns of `zx` and `zy`.
///
/// Cosine distance is `1 - u·v / max(‖u‖‖v‖, 1e-12)`, clamped at 0 so rounding
/// never produces negative costs.
pub fn pairwise_distance(zx: &DMatrix<f64>, zy: &DMatrix<f64>, metric: Metric) -> Result<DMatrix<f64>> {
    if zx.nrows() != zy.nrows() {
        return Err(invalid(format!("latent dims differ: {} vs {}", zx.nrows(), zy.nrows())));
    }
    let (tx, ty) = (zx.ncols(), zy.ncols());
    match metric {
        Metric::Cosine => {
            let nx: Vec<f64> = zx.column_iter().map(|c| c.norm()).collect();
            let ny: Vec<f64> = zy.column_iter().map(|c| c.norm()).collect();
            let dots = zx.transpose() * zy;
            Ok(DMatrix::from_fn(tx, ty, |i, j| (1.0 - dots[(i, j)] / (nx[i] * ny[j]).max(NORM_GUARD)).max(0.0)))
        }
        Metric::Euclidean => Ok(DMatrix::from_fn(tx, ty, |i, j| {
            zx.column(i).iter().zip(zy.column(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        })),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_columns_zero_diagonal() {
        let z = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.5, 1.0, -1.0]);
        let d = pairwise_distance(&z, &z, Metric::Cosine).unwrap();
        for i in 0..3 {
            assert!(d[(i, i)].abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_units_distance_one() {
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(pairwise_distance(&a, &b, Metric::Cosine).unwrap()[(0, 0)], 1.0);
        assert_eq!(pairwise_distance(&a, &b, Metric::Euclidean).unwrap()[(0, 0)], 2f64.sqrt());
    }

    #[test]
    fn matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let zx = DMatrix::from_fn(4, 7, |_, _| rng.random::<f64>() - 0.5);
        let zy = DMatrix::from_fn(4, 5, |_, _| rng.random::<f64>() - 0.5);
        let cos = pairwise_distance(&zx, &zy, Metric::Cosine).unwrap();
        let euc = pairwise_distance(&zx, &zy, Metric::Euclidean).unwrap();
        for i in 0..7 {
            for j in 0..5 {
                let (mut dot, mut nu, mut nv, mut sq) = (0.0, 0.0, 0.0, 0.0);
                for k in 0..4 {
                    let (u, v) = (zx[(k, i)], zy[(k, j)]);
                    dot += u * v;
                    nu += u * u;
                    nv += v * v;
                    sq += (u - v) * (u - v);
                }
                assert!((cos[(i, j)] - (1.0 - dot / (nu.sqrt() * nv.sqrt()))).abs() < 1e-12);
                assert!((euc[(i, j)] - sq.sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_vector_guarded_and_dims_checked() {
        let a = DMatrix::zeros(2, 1);
        let b = DMatrix::from_element(2, 1, 1.0);
        assert_eq!(pairwise_distance(&a, &b, Metric::Cosine).unwrap()[(0, 0)], 1.0);
        assert!(pairwise_distance(&a, &DMatrix::zeros(3, 1), Metric::Cosine).is_err());
    }
}
