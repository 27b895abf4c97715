//! Pairwise perturbation.
//!
//! While the factors stay close to a snapshot `A_p`, the MTTKRP is
//! approximated from operators built once from the snapshot:
//!
//! ```text
//! M̃^(n) = M_p^(n) + Σ_{i≠n} U^(n,i) + V^(n)
//! U^(n,i)(x,k) = Σ_y M_p^(n,i)(x,y,k) dA^(i)(y,k)
//! V^(n) = A^(n) Σ_{i<j; i,j≠n} dS^(i) ∗ dS^(j) ∗ (∗_{k≠i,j,n} S^(k))
//! dS^(i) = A^(i)ᵀ dA^(i),  dA^(i) = A^(i) − A_p^(i)
//! ```
//!
//! `M_p^(n,i)` is `T` contracted with every snapshot factor except modes `n`
//! and `i`. The operators are built with the PP dimension tree: level `l`
//! (the input tensor is level 1) holds the `C(l+1, 2)` intermediates keeping
//! modes `{i} ∪ {j, ..., j+N-l-1}` for `1 <= i < j <= l+1` (1-based), each
//! obtained from the first superset at the level above.

mod tree;

pub use tree::{pp_tree, PpTree, PpTreeNode};

use std::collections::BTreeMap;

use crate::dimtree::Intermediate;
use crate::error::{invalid_arg, Error, Result};
use crate::tensor::{
    contract_many_to_rank, hadamard, matmul_counted, multi_ttv, DenseTensor, FlopCounter, Matrix, Phase,
};

/// `M_p^(a,b)` stored once per unordered pair.
#[derive(Clone, Debug)]
pub struct PairOperator {
    /// Modes of the two leading axes, in storage order.
    pub axes: [usize; 2],
    /// Shape `s_axes[0] x s_axes[1] x R`.
    pub data: DenseTensor,
}

/// Snapshot factors and the PP operators built from them.
#[derive(Clone, Debug)]
pub struct PpState {
    snapshot: Vec<Matrix>,
    pairs: BTreeMap<(usize, usize), PairOperator>,
    zeroth: Vec<Matrix>,
    reused_first_level: bool,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl PpState {
    /// Builds all pair operators and `M_p^(n)` from `factors`.
    ///
    /// `reuse` may supply a still-valid contraction of `T` with a single
    /// factor (left over from the preceding exact sweep); the tree's labels
    /// are rotated so that it is one of the level-2 intermediates and it is
    /// not recomputed. `fuse_levels` computes level `2 + fuse_levels`
    /// directly from `T`, skipping the levels above it.
    pub fn initialize(
        t: &DenseTensor,
        factors: &[Matrix],
        versions: &[u64],
        reuse: Option<Intermediate>,
        fuse_levels: usize,
        counter: &FlopCounter,
    ) -> Result<Self> {
        let n = t.order();
        if n < 3 {
            return Err(invalid_arg!("pairwise perturbation needs order at least 3, got {n}"));
        }
        if factors.len() != n || versions.len() != n {
            return Err(invalid_arg!("expected {n} factors"));
        }
        for (i, f) in factors.iter().enumerate() {
            if f.rows() != t.shape()[i] || f.cols() != factors[0].cols() {
                return Err(invalid_arg!("factor {i} does not match the tensor"));
            }
        }
        if fuse_levels + 3 > n {
            return Err(invalid_arg!("at most {} fused levels for order {n}", n - 3));
        }
        let reuse = reuse.filter(|r| fuse_levels == 0 && r.stamps.len() == 1 && r.is_current(versions));
        let rotation = reuse.as_ref().map_or(0, |r| r.stamps[0].0);
        let tree = PpTree::build(n, rotation)?;
        let start = 2 + fuse_levels;

        let mut level: Vec<Intermediate> = Vec::new();
        let mut reused = false;
        for node in tree.level(start) {
            let missing: Vec<usize> = (0..n).filter(|m| !node.kept_modes.contains(m)).collect();
            if let Some(r) = reuse.as_ref().filter(|r| r.stamps[0].0 == missing[0] && missing.len() == 1) {
                level.push(r.clone());
                reused = true;
                continue;
            }
            let fs: Vec<&Matrix> = missing.iter().map(|&m| &factors[m]).collect();
            let data = contract_many_to_rank(t, &missing, &fs, counter)?;
            level.push(Intermediate {
                axes: node.kept_modes.clone(),
                data,
                stamps: missing.iter().map(|&m| (m, versions[m])).collect(),
            });
        }
        for l in start + 1..n {
            let nodes = tree.level(l);
            let mut next = Vec::with_capacity(nodes.len());
            for node in nodes {
                let parent = &level[node.parent_index];
                let m = *parent
                    .axes
                    .iter()
                    .find(|a| !node.kept_modes.contains(a))
                    .expect("parent is a strict superset");
                let pos = parent.position(m).expect("mode present");
                let data = multi_ttv(&parent.data, &factors[m], pos, counter)?;
                let mut axes = parent.axes.clone();
                axes.remove(pos);
                let mut stamps = parent.stamps.clone();
                stamps.push((m, versions[m]));
                next.push(Intermediate { axes, data, stamps });
            }
            level = next;
        }

        let mut pairs = BTreeMap::new();
        for x in level {
            debug_assert_eq!(x.axes.len(), 2);
            let axes = [x.axes[0], x.axes[1]];
            pairs.insert(key(axes[0], axes[1]), PairOperator { axes, data: x.data });
        }
        let mut zeroth = Vec::with_capacity(n);
        for m in 0..n {
            let i = if m == 0 { 1 } else { 0 };
            let op = &pairs[&key(m, i)];
            let pos = if op.axes[0] == i { 0 } else { 1 };
            let out = multi_ttv(&op.data, &factors[i], pos, counter)?;
            zeroth.push(Matrix::from_vec(t.shape()[m], factors[0].cols(), out.into_data())?);
        }
        Ok(Self { snapshot: factors.to_vec(), pairs, zeroth, reused_first_level: reused })
    }

    pub fn order(&self) -> usize {
        self.snapshot.len()
    }

    /// The factors the operators were built from (`A_p`).
    pub fn snapshot(&self) -> &[Matrix] {
        &self.snapshot
    }

    /// Whether initialization took over an intermediate from the exact engine.
    pub fn reused_first_level(&self) -> bool {
        self.reused_first_level
    }

    /// Stored operator for the unordered pair `{a, b}`.
    pub fn pair(&self, a: usize, b: usize) -> Option<&PairOperator> {
        self.pairs.get(&key(a, b))
    }

    /// `M_p^(n,i)` with axes ordered `(n, i, rank)`, materialized from the
    /// stored operator (transposing its two leading axes when needed).
    pub fn operator(&self, n: usize, i: usize) -> Result<DenseTensor> {
        let op = self.pair(n, i).ok_or_else(|| invalid_arg!("no operator for modes {n} and {i}"))?;
        if op.axes[0] == n {
            Ok(op.data.clone())
        } else {
            op.data.permute(&[1, 0, 2])
        }
    }

    /// `M_p^(n)`, the exact MTTKRP at the snapshot.
    pub fn zeroth_order(&self, n: usize) -> &Matrix {
        &self.zeroth[n]
    }

    /// `dA^(i) = A^(i) − A_p^(i)`.
    pub fn delta(&self, factors: &[Matrix], i: usize, counter: &FlopCounter) -> Result<Matrix> {
        let d = factors[i].sub(&self.snapshot[i])?;
        counter.add(Phase::Other, (d.rows() * d.cols()) as u64);
        Ok(d)
    }

    /// First-order correction `U^(n,i)`.
    pub fn first_order(&self, factors: &[Matrix], n: usize, i: usize, counter: &FlopCounter) -> Result<Matrix> {
        let op = self.pair(n, i).ok_or_else(|| invalid_arg!("no operator for modes {n} and {i}"))?;
        let pos = if op.axes[0] == i { 0 } else { 1 };
        let d = self.delta(factors, i, counter)?;
        let u = multi_ttv(&op.data, &d, pos, counter)?;
        Matrix::from_vec(self.snapshot[n].rows(), d.cols(), u.into_data())
    }

    /// `dS^(i)` for every mode except `n` (`None` at `n`).
    fn delta_grams(&self, factors: &[Matrix], n: usize, counter: &FlopCounter) -> Result<Vec<Option<Matrix>>> {
        (0..self.order())
            .map(|i| {
                if i == n {
                    return Ok(None);
                }
                let d = self.delta(factors, i, counter)?;
                Ok(Some(matmul_counted(&factors[i].transpose(), &d, counter, Phase::Other)?))
            })
            .collect()
    }

    /// The `R x R` matrix `Σ_{i<j; i,j≠n} dS^(i) ∗ dS^(j) ∗ (∗_{k≠i,j,n} S^(k))`.
    pub fn second_order_core(
        dgrams: &[Option<Matrix>],
        grams: &[Matrix],
        n: usize,
        counter: &FlopCounter,
    ) -> Result<Matrix> {
        let order = grams.len();
        let r = grams[0].rows();
        let mut w = Matrix::zeros(r, r);
        for i in 0..order {
            for j in i + 1..order {
                if i == n || j == n {
                    continue;
                }
                let (di, dj) = (dgrams[i].as_ref().expect("i != n"), dgrams[j].as_ref().expect("j != n"));
                let mut term = hadamard(di, dj, counter)?;
                for (k, s) in grams.iter().enumerate() {
                    if k != i && k != j && k != n {
                        term = hadamard(&term, s, counter)?;
                    }
                }
                w.add_assign(&term)?;
            }
        }
        Ok(w)
    }

    /// Second-order correction `V^(n)`; uses the current `A^(n)`.
    pub fn second_order(&self, factors: &[Matrix], grams: &[Matrix], n: usize, counter: &FlopCounter) -> Result<Matrix> {
        let dgrams = self.delta_grams(factors, n, counter)?;
        let w = Self::second_order_core(&dgrams, grams, n, counter)?;
        matmul_counted(&factors[n], &w, counter, Phase::Other)
    }

    /// The approximated MTTKRP `M̃^(n)`.
    pub fn approx_mttkrp(&self, factors: &[Matrix], grams: &[Matrix], n: usize, counter: &FlopCounter) -> Result<Matrix> {
        if factors.len() != self.order() || grams.len() != self.order() || n >= self.order() {
            return Err(Error::InvalidState(format!(
                "PP operators built for order {}; got {} factors and mode {n}",
                self.order(),
                factors.len()
            )));
        }
        let mut m = self.first_order_sum(factors, n, counter)?;
        m.add_assign(&self.second_order(factors, grams, n, counter)?)?;
        Ok(m)
    }

    /// `M_p^(n) + Σ_{i≠n} U^(n,i)`: the part of `M̃^(n)` that touches the
    /// operators.
    pub fn first_order_sum(&self, factors: &[Matrix], n: usize, counter: &FlopCounter) -> Result<Matrix> {
        let mut m = self.zeroth[n].clone();
        for i in (0..self.order()).filter(|&i| i != n) {
            m.add_assign(&self.first_order(factors, n, i, counter)?)?;
        }
        Ok(m)
    }
}
