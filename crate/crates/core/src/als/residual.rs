use crate::error::{invalid_arg, Error, Result};
use crate::tensor::{reconstruct, DenseTensor, Matrix};

use super::KruskalModel;

/// `‖T − [[A^(1), ..., A^(N)]]‖_F / ‖T‖_F` from the explicitly
/// reconstructed tensor. Costs `O(s^N R)`; meant for checks and final
/// reporting.
pub fn residual_direct(t: &DenseTensor, model: &KruskalModel) -> Result<f64> {
    let norm = t.frobenius_norm();
    if norm == 0.0 {
        return Err(invalid_arg!("relative residual of a zero tensor"));
    }
    if model.shape() != t.shape() {
        return Err(invalid_arg!(
            "model shape {:?} does not match tensor {:?}",
            model.shape(),
            t.shape()
        ));
    }
    let approx = reconstruct(model.factors())?;
    let diff: f64 = t
        .data()
        .iter()
        .zip(approx.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(diff.sqrt() / norm)
}

/// Relative residual from quantities already available after updating the
/// last factor:
///
/// `r = sqrt(‖T‖² + ⟨Γ, S⟩ − 2⟨M, A⟩) / ‖T‖`
///
/// where `Γ`, `M` are the normal matrix and MTTKRP used for the last mode,
/// `A` the updated factor and `S = AᵀA`. A negative argument within
/// `1e-8 ‖T‖²` is rounding and clamps to zero; anything more negative means
/// `M` does not belong to the current factors.
pub fn residual_fast(norm_t_sq: f64, gamma: &Matrix, s: &Matrix, m: &Matrix, a: &Matrix) -> Result<f64> {
    let arg = fast_residual_arg(norm_t_sq, gamma, s, m, a)?;
    if arg < -1e-8 * norm_t_sq {
        return Err(Error::NumericalInconsistency(format!(
            "fast residual argument {arg:e} is negative; MTTKRP does not match the factors"
        )));
    }
    Ok(arg.max(0.0).sqrt() / norm_t_sq.sqrt())
}

/// Same as [`residual_fast`] but clamps instead of failing. Approximate
/// MTTKRPs legitimately push the argument below zero near convergence.
pub(crate) fn residual_fast_clamped(
    norm_t_sq: f64,
    gamma: &Matrix,
    s: &Matrix,
    m: &Matrix,
    a: &Matrix,
) -> Result<f64> {
    let arg = fast_residual_arg(norm_t_sq, gamma, s, m, a)?;
    Ok(arg.max(0.0).sqrt() / norm_t_sq.sqrt())
}

fn fast_residual_arg(norm_t_sq: f64, gamma: &Matrix, s: &Matrix, m: &Matrix, a: &Matrix) -> Result<f64> {
    residual_arg_from_parts(norm_t_sq, gamma.inner(s)?, m.inner(a)?)
}

/// The fast residual from its three scalars `‖T‖²`, `⟨Γ, S⟩`, `⟨M, A⟩`
/// (when they are assembled by reductions); `clamp` selects the behaviour
/// of [`residual_fast_clamped`] over [`residual_fast`].
pub(crate) fn residual_from_parts(norm_t_sq: f64, gamma_s: f64, m_a: f64, clamp: bool) -> Result<f64> {
    let arg = residual_arg_from_parts(norm_t_sq, gamma_s, m_a)?;
    if !clamp && arg < -1e-8 * norm_t_sq {
        return Err(Error::NumericalInconsistency(format!(
            "fast residual argument {arg:e} is negative; MTTKRP does not match the factors"
        )));
    }
    Ok(arg.max(0.0).sqrt() / norm_t_sq.sqrt())
}

fn residual_arg_from_parts(norm_t_sq: f64, gamma_s: f64, m_a: f64) -> Result<f64> {
    if !(norm_t_sq > 0.0) {
        return Err(invalid_arg!("relative residual of a zero tensor"));
    }
    Ok(norm_t_sq + gamma_s - 2.0 * m_a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::als::{gamma_from_grams, init_model};
    use crate::tensor::{gram, mttkrp_direct, FlopCounter};

    fn brute_residual(t: &DenseTensor, model: &KruskalModel) -> f64 {
        let shape = t.shape().to_vec();
        let mut idx = vec![0usize; shape.len()];
        let (mut num, mut den) = (0.0, 0.0);
        for &v in t.data() {
            let mut approx = 0.0;
            for r in 0..model.rank() {
                let mut p = 1.0;
                for (m, &i) in idx.iter().enumerate() {
                    p *= model.factor(m).get(i, r);
                }
                approx += p;
            }
            num += (v - approx) * (v - approx);
            den += v * v;
            crate::tensor::increment(&mut idx, &shape);
        }
        (num / den).sqrt()
    }

    #[test]
    fn exact_and_zero_models() {
        let m = init_model(&[3, 4, 2], 2, 1).unwrap();
        let t = reconstruct(m.factors()).unwrap();
        assert!(residual_direct(&t, &m).unwrap() < 1e-15);
        let z = KruskalModel::from_factors(vec![
            Matrix::zeros(3, 2),
            Matrix::zeros(4, 2),
            Matrix::zeros(2, 2),
        ])
        .unwrap();
        assert_eq!(residual_direct(&t, &z).unwrap(), 1.0);
        let zero = DenseTensor::zeros(vec![3, 4, 2]).unwrap();
        assert!(residual_direct(&zero, &m).is_err());
    }

    #[test]
    fn direct_matches_elementwise_sum() {
        let t = init_model(&[3, 3, 4], 3, 2).unwrap();
        let t = reconstruct(t.factors()).unwrap();
        let m = init_model(&[3, 3, 4], 2, 3).unwrap();
        let r = residual_direct(&t, &m).unwrap();
        assert!((r - brute_residual(&t, &m)).abs() < 1e-13 * r);
    }

    #[test]
    fn fast_matches_direct_after_update() {
        let c = FlopCounter::new();
        let target = init_model(&[4, 4, 4], 3, 4).unwrap();
        let t = reconstruct(target.factors()).unwrap();
        let mut m = init_model(&[4, 4, 4], 2, 5).unwrap();
        let mut last = None;
        for n in 0..3 {
            let g = m.gamma(n, &c);
            let mk = mttkrp_direct(&t, m.factors(), n, &c).unwrap();
            let a = crate::als::solve_subproblem(&mk, &g, 0.0).unwrap();
            m.set_factor(n, a, &c).unwrap();
            last = Some((g, mk));
        }
        let (g, mk) = last.unwrap();
        let fast = residual_fast(t.frobenius_norm_sq(), &g, m.gram(2), &mk, m.factor(2)).unwrap();
        let direct = residual_direct(&t, &m).unwrap();
        assert!((fast - direct).abs() <= 1e-10 * direct);
    }

    #[test]
    fn fast_limits() {
        let c = FlopCounter::new();
        let m = init_model(&[3, 3, 3], 2, 6).unwrap();
        let t = reconstruct(m.factors()).unwrap();
        let g = gamma_from_grams(m.grams(), 2, &c);
        let mk = mttkrp_direct(&t, m.factors(), 2, &c).unwrap();
        let r = residual_fast(t.frobenius_norm_sq(), &g, m.gram(2), &mk, m.factor(2)).unwrap();
        assert!(r < 1e-6);

        let z = Matrix::zeros(3, 2);
        let r = residual_fast(t.frobenius_norm_sq(), &g, &gram(&z, &c), &mk, &z).unwrap();
        assert_eq!(r, 1.0);

        // a wildly wrong MTTKRP drives the argument negative
        let mut big = mk.clone();
        big.scale(10.0);
        assert!(matches!(
            residual_fast(t.frobenius_norm_sq(), &g, m.gram(2), &big, m.factor(2)),
            Err(Error::NumericalInconsistency(_))
        ));
    }
}
