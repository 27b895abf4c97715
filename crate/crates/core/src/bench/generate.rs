use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid_arg, Result};
use crate::tensor::{reconstruct, DenseTensor, Matrix};

/// Stream separating generated data from the ALS initialization, which
/// uses stream 0 of the same seed.
const DATA_STREAM: u64 = 1;

fn data_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DATA_STREAM);
    rng
}

/// A synthetic tensor with its generating factors.
#[derive(Clone, Debug)]
pub struct CollinearTensor {
    pub tensor: DenseTensor,
    pub factors: Vec<Matrix>,
    /// Cosine shared by every pair of columns within each factor.
    pub collinearity: f64,
}

/// Tensor whose factors have unit-norm columns with a common pairwise
/// cosine `C` drawn uniformly from `[c_lo, c_hi)` (one `C` per tensor).
///
/// Each factor is `a_i = √C u + √(1−C) v_i` for an orthonormal set
/// `u, v_1, ..., v_R` taken from the QR factorization of a Gaussian
/// `s x (R+1)` matrix, so every dimension needs `s ≥ R + 1`.
pub fn gen_collinear(shape: &[usize], rank: usize, c_lo: f64, c_hi: f64, seed: u64) -> Result<CollinearTensor> {
    if !(0.0 <= c_lo && c_lo <= c_hi && c_hi <= 1.0 && c_lo < 1.0) {
        return Err(invalid_arg!("collinearity interval must satisfy 0 <= lo <= hi <= 1, lo < 1, got [{c_lo}, {c_hi})"));
    }
    if rank == 0 || shape.is_empty() {
        return Err(invalid_arg!("need a positive rank and a non-empty shape"));
    }
    if let Some(&s) = shape.iter().find(|&&s| s < rank + 1) {
        return Err(invalid_arg!("dimension {s} is too small for rank {rank} collinear factors (needs rank + 1)"));
    }
    let mut rng = data_rng(seed);
    let c = if c_hi > c_lo { rng.random_range(c_lo..c_hi) } else { c_lo };
    let (w_shared, w_own) = (c.sqrt(), (1.0 - c).sqrt());
    let factors: Vec<Matrix> = shape
        .iter()
        .map(|&s| {
            let g = DMatrix::<f64>::from_fn(s, rank + 1, |_, _| rng.sample(StandardNormal));
            let q = g.qr().q();
            Matrix::from_fn(s, rank, |i, j| w_shared * q[(i, 0)] + w_own * q[(i, j + 1)])
        })
        .collect();
    Ok(CollinearTensor { tensor: reconstruct(&factors)?, factors, collinearity: c })
}

/// Reconstruction of factors with i.i.d. uniform `[0, 1)` entries: a
/// tensor of CP rank at most `rank`.
pub fn gen_known_rank(shape: &[usize], rank: usize, seed: u64) -> Result<DenseTensor> {
    Ok(gen_known_rank_factors(shape, rank, seed)?.0)
}

/// [`gen_known_rank`] together with its factors.
pub fn gen_known_rank_factors(shape: &[usize], rank: usize, seed: u64) -> Result<(DenseTensor, Vec<Matrix>)> {
    if rank == 0 || shape.is_empty() {
        return Err(invalid_arg!("need a positive rank and a non-empty shape"));
    }
    let mut rng = data_rng(seed);
    let factors: Vec<Matrix> = shape
        .iter()
        .map(|&s| Matrix::from_fn(s, rank, |_, _| rng.random::<f64>()))
        .collect();
    Ok((reconstruct(&factors)?, factors))
}

/// Cosine between columns `i` and `j` of `a`.
pub fn column_cosine(a: &Matrix, i: usize, j: usize) -> f64 {
    let (mut dot, mut ni, mut nj) = (0.0, 0.0, 0.0);
    for k in 0..a.rows() {
        let (x, y) = (a.get(k, i), a.get(k, j));
        dot += x * y;
        ni += x * x;
        nj += y * y;
    }
    dot / (ni.sqrt() * nj.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::als::{residual_direct, KruskalModel};

    #[test]
    fn zero_collinearity_gives_orthonormal_columns() {
        let g = gen_collinear(&[6, 5, 7], 4, 0.0, 0.0, 3).unwrap();
        assert_eq!(g.collinearity, 0.0);
        for a in &g.factors {
            for i in 0..4 {
                assert!((column_cosine(a, i, i) - 1.0).abs() < 1e-12);
                let norm: f64 = (0..a.rows()).map(|k| a.get(k, i).powi(2)).sum();
                assert!((norm - 1.0).abs() < 1e-12);
                for j in 0..i {
                    let dot: f64 = (0..a.rows()).map(|k| a.get(k, i) * a.get(k, j)).sum();
                    assert!(dot.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn cosines_equal_the_drawn_collinearity() {
        for seed in 0..5 {
            let g = gen_collinear(&[8, 8, 8], 5, 0.4, 0.6, seed).unwrap();
            assert!((0.4..0.6).contains(&g.collinearity));
            for a in &g.factors {
                for i in 0..5 {
                    for j in 0..i {
                        assert!((column_cosine(a, i, j) - g.collinearity).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn collinear_rejects_bad_arguments() {
        assert!(gen_collinear(&[4, 8, 8], 4, 0.0, 0.1, 0).is_err());
        assert!(gen_collinear(&[8, 8], 2, 0.5, 0.4, 0).is_err());
        assert!(gen_collinear(&[8, 8], 2, 1.0, 1.0, 0).is_err());
        let g = gen_collinear(&[8, 8], 2, 0.8, 1.0, 0).unwrap();
        assert!((0.8..1.0).contains(&g.collinearity));
    }

    #[test]
    fn known_rank_matches_outer_products() {
        let (t, f) = gen_known_rank_factors(&[4, 4, 4], 2, 9).unwrap();
        assert_eq!(t.len(), 64);
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    let v: f64 = (0..2).map(|r| f[0].get(i, r) * f[1].get(j, r) * f[2].get(k, r)).sum();
                    assert!((t.get(&[i, j, k]) - v).abs() < 1e-14);
                }
            }
        }
        let model = KruskalModel::from_factors(f).unwrap();
        assert!(residual_direct(&t, &model).unwrap() < 1e-15);
        assert_ne!(t, gen_known_rank(&[4, 4, 4], 2, 10).unwrap());
        // data and the ALS initialization of the same seed differ
        let init = KruskalModel::random(&[4, 4, 4], 2, 9).unwrap();
        assert_ne!(init.factor(0), model.factor(0));
    }
}
