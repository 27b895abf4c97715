//! Dense tensors, matrices and the contraction kernels.

mod dense;
mod flops;
pub mod io;
mod kernels;
mod matrix;

pub use dense::DenseTensor;
pub(crate) use dense::increment;
pub use flops::{FlopCounter, FlopSnapshot, Phase};
pub use kernels::{
    fold, gram, hadamard, khatri_rao, matmul_counted, mttkrp_direct, multi_ttv, reconstruct, ttm,
    unfold,
};
pub(crate) use kernels::{contract_many_to_rank, contract_to_rank};
pub use matrix::{relative_max_diff, Matrix};

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Checks on a random 2x3x4 instance that the unfolding and Khatri-Rao
/// conventions combine into the elementwise MTTKRP for every mode.
pub fn self_test() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f);
    let shape = [2usize, 3, 4];
    let rank = 2;
    let t = DenseTensor::from_fn(shape.to_vec(), |_| rng.random::<f64>() - 0.5)?;
    let factors: Vec<Matrix> = shape
        .iter()
        .map(|&s| Matrix::from_fn(s, rank, |_, _| rng.random::<f64>() - 0.5))
        .collect();
    let counter = FlopCounter::new();
    for n in 0..3 {
        let m = mttkrp_direct(&t, &factors, n, &counter)?;
        let mut expect = Matrix::zeros(shape[n], rank);
        let mut idx = [0usize; 3];
        for &v in t.data() {
            for r in 0..rank {
                let mut p = v;
                for m in (0..3).filter(|&m| m != n) {
                    p *= factors[m].get(idx[m], r);
                }
                let cur = expect.get(idx[n], r);
                expect.set(idx[n], r, cur + p);
            }
            increment(&mut idx, &shape);
        }
        if relative_max_diff(&m, &expect) > 1e-12 {
            return Err(Error::InternalLogic(format!(
                "Khatri-Rao orientation does not match the unfolding for mode {n}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn seq_tensor(shape: Vec<usize>) -> DenseTensor {
        let mut k = 0.0;
        DenseTensor::from_fn(shape, |_| {
            k += 1.0;
            k
        })
        .unwrap()
    }

    fn random_tensor(shape: Vec<usize>, seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseTensor::from_fn(shape, |_| rng.random::<f64>() * 2.0 - 1.0).unwrap()
    }

    fn random_matrix(r: usize, c: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(r, c, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn startup_self_test_passes() {
        self_test().unwrap();
    }

    #[test]
    fn unfold_order3_example_maps_jkl_to_jlk() {
        let t = seq_tensor(vec![2, 3, 4]);
        let u = unfold(&t, &[0, 2]).unwrap();
        assert_eq!(u.shape(), &[2, 4, 3]);
        for j in 0..2 {
            for k in 0..3 {
                for l in 0..4 {
                    assert_eq!(u.get(&[j, l, k]), t.get(&[j, k, l]));
                }
            }
        }
    }

    #[test]
    fn unfold_order4_combined_index_smallest_removed_fastest() {
        // T(j,k,l,m) = T_(1,3)(j, l, k + m*s_2) with 0-based indices
        let t = seq_tensor(vec![2, 3, 2, 4]);
        let u = unfold(&t, &[0, 2]).unwrap();
        assert_eq!(u.shape(), &[2, 2, 12]);
        for j in 0..2 {
            for k in 0..3 {
                for l in 0..2 {
                    for m in 0..4 {
                        assert_eq!(u.get(&[j, l, k + m * 3]), t.get(&[j, k, l, m]));
                    }
                }
            }
        }
    }

    #[test]
    fn unfold_all_modes_is_identity() {
        let t = seq_tensor(vec![2, 3, 4]);
        let u = unfold(&t, &[0, 1, 2]).unwrap();
        assert_eq!(u.shape(), &[2, 3, 4, 1]);
        assert_eq!(u.data(), t.data());
    }

    #[test]
    fn unfold_matrix_transpose() {
        let t = DenseTensor::new(vec![2, 2], vec![1., 2., 3., 4.]).unwrap();
        let u = unfold(&t, &[1]).unwrap();
        assert_eq!(u.shape(), &[2, 2]);
        assert_eq!(u.data(), &[1., 3., 2., 4.]);
    }

    #[test]
    fn unfold_rejects_bad_modes() {
        let t = seq_tensor(vec![2, 2, 2]);
        assert!(matches!(unfold(&t, &[0, 0]), Err(Error::InvalidArgument(_))));
        assert!(matches!(unfold(&t, &[3]), Err(Error::InvalidArgument(_))));
        assert!(matches!(unfold(&t, &[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn ttm_examples() {
        let c = FlopCounter::new();
        let ones = DenseTensor::new(vec![2, 2, 2], vec![1.0; 8]).unwrap();
        let out = ttm(&ones, &Matrix::filled(1, 2, 1.0), 2, &c).unwrap();
        assert_eq!(out.shape(), &[2, 2, 1]);
        assert!(out.data().iter().all(|&v| v == 2.0));
        assert_eq!(c.snapshot().madds(Phase::Ttm), 8);

        let t = DenseTensor::new(vec![2, 2], vec![1., 2., 3., 4.]).unwrap();
        let out = ttm(&t, &Matrix::from_rows(&[[1.0, 1.0]]), 0, &c).unwrap();
        assert_eq!(out.shape(), &[1, 2]);
        assert_eq!(out.data(), &[4.0, 6.0]);

        let r = random_tensor(vec![3, 4, 2], 1);
        assert_eq!(ttm(&r, &Matrix::identity(4), 1, &c).unwrap(), r);
        assert!(ttm(&r, &Matrix::identity(3), 1, &c).is_err());
    }

    #[test]
    fn ttm_matches_direct_summation() {
        let c = FlopCounter::new();
        let t = random_tensor(vec![3, 4, 5], 2);
        let a = random_matrix(2, 4, 3);
        let out = ttm(&t, &a, 1, &c).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                for l in 0..5 {
                    let s: f64 = (0..4).map(|k| a.get(j, k) * t.get(&[i, k, l])).sum();
                    assert!((out.get(&[i, j, l]) - s).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn multi_ttv_examples() {
        let c = FlopCounter::new();
        let m = DenseTensor::new(vec![2, 2, 1], vec![1.0; 4]).unwrap();
        let out = multi_ttv(&m, &Matrix::filled(2, 1, 1.0), 1, &c).unwrap();
        assert_eq!(out.shape(), &[2, 1]);
        assert_eq!(out.data(), &[2.0, 2.0]);
        assert_eq!(c.snapshot().madds(Phase::Mttv), 4);

        // M(a,b,r) = a+b+r (1-based), v(b,r) = b
        let m = DenseTensor::from_fn(vec![2, 2, 2], |i| (i[0] + i[1] + i[2] + 3) as f64).unwrap();
        let v = Matrix::from_fn(2, 2, |b, _| (b + 1) as f64);
        let out = multi_ttv(&m, &v, 1, &c).unwrap();
        for a in 0..2 {
            for r in 0..2 {
                let expect: f64 = (1..=2)
                    .map(|b| (b * (a + 1 + b + r + 1)) as f64)
                    .sum();
                assert_eq!(out.get(&[a, r]), expect);
            }
        }
        assert_eq!(out.get(&[0, 0]), 11.0);

        // one-hot columns select a slice
        let m = random_tensor(vec![3, 4, 2, 3], 5);
        let sel = Matrix::from_fn(4, 3, |b, _| if b == 0 { 1.0 } else { 0.0 });
        let out = multi_ttv(&m, &sel, 1, &c).unwrap();
        for a in 0..3 {
            for d in 0..2 {
                for r in 0..3 {
                    assert_eq!(out.get(&[a, d, r]), m.get(&[a, 0, d, r]));
                }
            }
        }
        assert!(multi_ttv(&m, &Matrix::zeros(4, 2), 1, &c).is_err());
        assert!(multi_ttv(&m, &Matrix::zeros(3, 3), 1, &c).is_err());
    }

    #[test]
    fn khatri_rao_examples() {
        let c = FlopCounter::new();
        let i2 = Matrix::identity(2);
        let kr = khatri_rao(&i2, &i2, &c).unwrap();
        assert_eq!(
            kr,
            Matrix::from_rows(&[[1., 0.], [0., 0.], [0., 0.], [0., 1.]])
        );
        let kr = khatri_rao(
            &Matrix::from_rows(&[[1.], [2.]]),
            &Matrix::from_rows(&[[3.], [4.]]),
            &c,
        )
        .unwrap();
        assert_eq!(kr.data(), &[3., 4., 6., 8.]);
        let ones = Matrix::filled(2, 2, 1.0);
        assert_eq!(khatri_rao(&ones, &ones, &c).unwrap(), Matrix::filled(4, 2, 1.0));
        assert!(khatri_rao(&ones, &Matrix::zeros(2, 3), &c).is_err());
    }

    #[test]
    fn hadamard_and_gram_examples() {
        let c = FlopCounter::new();
        let a = Matrix::from_rows(&[[1., 2.], [3., 4.]]);
        let b = Matrix::from_rows(&[[2., 0.], [1., 1.]]);
        assert_eq!(
            hadamard(&a, &b, &c).unwrap(),
            Matrix::from_rows(&[[2., 0.], [3., 4.]])
        );
        assert_eq!(hadamard(&a, &Matrix::filled(2, 2, 1.0), &c).unwrap(), a);
        let two = Matrix::from_rows(&[[2.0]]);
        assert_eq!(hadamard(&two, &two, &c).unwrap().data(), &[4.0]);
        assert!(hadamard(&a, &Matrix::zeros(2, 3), &c).is_err());

        assert_eq!(gram(&Matrix::identity(3), &c), Matrix::identity(3));
        assert_eq!(gram(&Matrix::from_rows(&[[1.], [2.]]), &c).data(), &[5.0]);
        assert_eq!(gram(&Matrix::filled(3, 2, 1.0), &c), Matrix::filled(2, 2, 3.0));
        let g = gram(&random_matrix(7, 5, 9), &c);
        assert_eq!(g, g.transpose());
    }

    fn brute_mttkrp(t: &DenseTensor, factors: &[Matrix], n: usize) -> Matrix {
        let rank = factors[(n + 1) % t.order()].cols();
        let mut out = Matrix::zeros(t.shape()[n], rank);
        let mut idx = vec![0usize; t.order()];
        for &v in t.data() {
            for r in 0..rank {
                let mut p = v;
                for m in 0..t.order() {
                    if m != n {
                        p *= factors[m].get(idx[m], r);
                    }
                }
                let cur = out.get(idx[n], r);
                out.set(idx[n], r, cur + p);
            }
            increment(&mut idx, t.shape());
        }
        out
    }

    #[test]
    fn mttkrp_direct_examples() {
        let c = FlopCounter::new();
        let ones = DenseTensor::new(vec![2, 2, 2], vec![1.0; 8]).unwrap();
        let f = vec![Matrix::filled(2, 1, 1.0); 3];
        assert_eq!(mttkrp_direct(&ones, &f, 0, &c).unwrap().data(), &[4.0, 4.0]);

        // one-hot factors select a fiber
        let t = random_tensor(vec![3, 4, 5], 11);
        let e1 = |s| Matrix::from_fn(s, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let f = vec![e1(3), e1(4), e1(5)];
        let m = mttkrp_direct(&t, &f, 1, &c).unwrap();
        for k in 0..4 {
            assert_eq!(m.get(k, 0), t.get(&[0, k, 0]));
        }

        let t = random_tensor(vec![3, 3, 3], 12);
        let f: Vec<Matrix> = (0..3).map(|i| random_matrix(3, 2, 20 + i)).collect();
        let m = mttkrp_direct(&t, &f, 1, &c).unwrap();
        for k in 0..3 {
            for r in 0..2 {
                let mut s = 0.0;
                for j in 0..3 {
                    for l in 0..3 {
                        s += t.get(&[j, k, l]) * f[0].get(j, r) * f[2].get(l, r);
                    }
                }
                assert!((m.get(k, r) - s).abs() < 1e-13);
            }
        }
        let bad = vec![random_matrix(3, 2, 1), random_matrix(2, 2, 2), random_matrix(3, 2, 3)];
        assert!(mttkrp_direct(&t, &bad, 0, &c).is_err());
    }

    #[test]
    fn reconstruct_examples() {
        let i2 = Matrix::identity(2);
        let t = reconstruct(&[i2.clone(), i2]).unwrap();
        assert_eq!(t.data(), &[1., 0., 0., 1.]);
        let t = reconstruct(&[Matrix::filled(2, 1, 1.0), Matrix::filled(3, 1, 1.0)]).unwrap();
        assert!(t.data().iter().all(|&v| v == 1.0));

        // rank-1: MTTKRP of the reconstruction has the closed form
        // a_n * prod_{m != n} |a_m|^2
        let f: Vec<Matrix> = (0..3).map(|i| random_matrix(3 + i as usize, 1, 40 + i)).collect();
        let t = reconstruct(&f).unwrap();
        let c = FlopCounter::new();
        let m = mttkrp_direct(&t, &f, 2, &c).unwrap();
        let scale = f[0].frobenius_norm_sq() * f[1].frobenius_norm_sq();
        for i in 0..5 {
            assert!((m.get(i, 0) - f[2].get(i, 0) * scale).abs() < 1e-13);
        }
    }

    #[test]
    fn flop_counts_are_deterministic() {
        let run = || {
            let c = FlopCounter::new();
            let t = random_tensor(vec![4, 5, 6], 3);
            let f: Vec<Matrix> = [4, 5, 6].iter().map(|&s| random_matrix(s, 3, 7)).collect();
            for n in 0..3 {
                mttkrp_direct(&t, &f, n, &c).unwrap();
            }
            c.snapshot()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn contract_many_matches_sequential_contractions() {
        let c = FlopCounter::new();
        let t = random_tensor(vec![3, 4, 2, 5], 8);
        let a1 = random_matrix(4, 3, 1);
        let a3 = random_matrix(5, 3, 2);
        let fused = contract_many_to_rank(&t, &[3, 1], &[&a3, &a1], &c).unwrap();
        let step = contract_to_rank(&t, 3, &a3, &c).unwrap();
        let step = multi_ttv(&step, &a1, 1, &c).unwrap();
        assert_eq!(fused.shape(), step.shape());
        assert!(fused.max_abs_diff(&step) < 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn unfold_fold_roundtrip(dims in proptest::collection::vec(1usize..4, 1..5), seed: u64, pick: u64) {
            let t = random_tensor(dims.clone(), seed);
            let n = dims.len();
            // a non-empty ordered subset of the modes
            let mut kept: Vec<usize> = (0..n).filter(|m| (pick >> m) & 1 == 1).collect();
            if kept.is_empty() { kept.push((pick as usize) % n); }
            if pick & 0x100 != 0 { kept.reverse(); }
            let u = unfold(&t, &kept).unwrap();
            prop_assert_eq!(fold(&u, &kept, &dims).unwrap(), t);
        }

        #[test]
        fn ttm_commutes_on_distinct_modes(seed: u64, j in 1usize..4, k in 1usize..4) {
            let c = FlopCounter::new();
            let t = random_tensor(vec![3, 4, 2], seed);
            let a = random_matrix(j, 3, seed ^ 1);
            let b = random_matrix(k, 4, seed ^ 2);
            let x = ttm(&ttm(&t, &a, 0, &c).unwrap(), &b, 1, &c).unwrap();
            let y = ttm(&ttm(&t, &b, 1, &c).unwrap(), &a, 0, &c).unwrap();
            prop_assert!(x.max_abs_diff(&y) < 1e-13);
        }

        #[test]
        fn mttkrp_direct_matches_brute_force(dims in proptest::collection::vec(1usize..6, 2..5), rank in 1usize..4, seed: u64) {
            let c = FlopCounter::new();
            let t = random_tensor(dims.clone(), seed);
            let f: Vec<Matrix> = dims.iter().enumerate().map(|(i, &s)| random_matrix(s, rank, seed.wrapping_add(i as u64 + 1))).collect();
            for n in 0..dims.len() {
                let m = mttkrp_direct(&t, &f, n, &c).unwrap();
                let b = brute_mttkrp(&t, &f, n);
                prop_assert!(relative_max_diff(&m, &b) < 1e-12);
            }
        }
    }
}
