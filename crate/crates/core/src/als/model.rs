use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid_arg, Result};
use crate::tensor::{gram, hadamard, FlopCounter, Matrix};

/// Factor matrices `A^(i)` (`s_i x R`), their Gram matrices and a version
/// number per factor that is bumped on every update.
///
/// The versions let cached MTTKRP intermediates detect that a factor they
/// were contracted with has since changed.
#[derive(Clone, Debug, PartialEq)]
pub struct KruskalModel {
    factors: Vec<Matrix>,
    grams: Vec<Matrix>,
    versions: Vec<u64>,
    rank: usize,
}

impl KruskalModel {
    pub fn from_factors(factors: Vec<Matrix>) -> Result<Self> {
        let rank = factors
            .first()
            .map(|f| f.cols())
            .ok_or_else(|| invalid_arg!("a model needs at least one factor"))?;
        if rank == 0 {
            return Err(invalid_arg!("rank must be at least 1"));
        }
        if let Some(i) = factors.iter().position(|f| f.cols() != rank) {
            return Err(invalid_arg!(
                "factor {i} has {} columns, expected {rank}",
                factors[i].cols()
            ));
        }
        let scratch = FlopCounter::new();
        let grams = factors.iter().map(|f| gram(f, &scratch)).collect();
        let versions = vec![0; factors.len()];
        Ok(Self { factors, grams, versions, rank })
    }

    /// Factors with i.i.d. entries uniform in `[0, 1)` drawn from a
    /// ChaCha8 stream seeded with `seed`, filled mode by mode, row-major.
    pub fn random(shape: &[usize], rank: usize, seed: u64) -> Result<Self> {
        if rank == 0 {
            return Err(invalid_arg!("rank must be at least 1"));
        }
        if shape.is_empty() {
            return Err(invalid_arg!("empty shape"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let factors = shape
            .iter()
            .map(|&s| Matrix::from_fn(s, rank, |_, _| rng.random::<f64>()))
            .collect();
        Self::from_factors(factors)
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.rows()).collect()
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn factor(&self, i: usize) -> &Matrix {
        &self.factors[i]
    }

    pub fn grams(&self) -> &[Matrix] {
        &self.grams
    }

    pub fn gram(&self, i: usize) -> &Matrix {
        &self.grams[i]
    }

    pub fn versions(&self) -> &[u64] {
        &self.versions
    }

    pub fn into_factors(self) -> Vec<Matrix> {
        self.factors
    }

    /// Replaces `A^(i)`, recomputes `S^(i)` and bumps the version of mode `i`.
    pub fn set_factor(&mut self, i: usize, a: Matrix, counter: &FlopCounter) -> Result<()> {
        let old = &self.factors[i];
        if a.shape() != old.shape() {
            return Err(invalid_arg!(
                "factor {i} must stay {:?}, got {:?}",
                old.shape(),
                a.shape()
            ));
        }
        self.grams[i] = gram(&a, counter);
        self.factors[i] = a;
        self.versions[i] += 1;
        Ok(())
    }

    /// Replaces `A^(i)` together with a Gram matrix computed elsewhere (for
    /// instance summed across processors).
    pub(crate) fn set_factor_with_gram(&mut self, i: usize, a: Matrix, s: Matrix) {
        self.factors[i] = a;
        self.grams[i] = s;
        self.versions[i] += 1;
    }

    /// `Γ^(n)`: Hadamard product of every `S^(i)` with `i != n`.
    pub fn gamma(&self, n: usize, counter: &FlopCounter) -> Matrix {
        gamma_from_grams(&self.grams, n, counter)
    }

    /// Squared Frobenius norm of the represented tensor.
    pub fn norm_sq(&self) -> f64 {
        let scratch = FlopCounter::new();
        let mut g = self.grams[0].clone();
        for s in &self.grams[1..] {
            g = hadamard(&g, s, &scratch).expect("grams share the rank");
        }
        g.data().iter().sum()
    }
}

/// Random model as initialized by CP-ALS.
pub fn init_model(shape: &[usize], rank: usize, seed: u64) -> Result<KruskalModel> {
    KruskalModel::random(shape, rank, seed)
}

/// `Γ^(n)` from a list of Gram matrices.
pub fn gamma_from_grams(grams: &[Matrix], n: usize, counter: &FlopCounter) -> Matrix {
    let mut others = grams.iter().enumerate().filter(|&(i, _)| i != n).map(|(_, s)| s);
    let Some(first) = others.next() else {
        return Matrix::filled(grams[0].rows(), grams[0].cols(), 1.0);
    };
    let mut g = first.clone();
    for s in others {
        g = hadamard(&g, s, counter).expect("grams share the rank");
    }
    g
}
