//! Contraction kernels.
//!
//! Every kernel that does arithmetic proportional to a tensor size charges
//! its multiply-adds to a [`FlopCounter`] phase. Summation orders are fixed,
//! so two runs on the same inputs produce bitwise identical results.

use super::dense::{increment, strides_of};
use super::{DenseTensor, FlopCounter, Matrix, Phase};
use crate::error::{invalid_arg, Result};

/// Output strides for the generalized unfolding `T_(kept)`.
///
/// Kept modes become the leading axes in the given order; the removed modes
/// are merged into one trailing axis with the smallest removed mode varying
/// fastest.
fn unfold_layout(shape: &[usize], kept: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = shape.len();
    if kept.is_empty() {
        return Err(invalid_arg!("unfold needs at least one kept mode"));
    }
    let mut seen = vec![false; n];
    for &m in kept {
        if m >= n {
            return Err(invalid_arg!("mode {m} out of range for order {n}"));
        }
        if seen[m] {
            return Err(invalid_arg!("mode {m} listed twice"));
        }
        seen[m] = true;
    }
    let removed: Vec<usize> = (0..n).filter(|m| !seen[*m]).collect();
    let combined: usize = removed.iter().map(|&m| shape[m]).product();

    let mut out_shape: Vec<usize> = kept.iter().map(|&m| shape[m]).collect();
    out_shape.push(combined);
    let out_strides = strides_of(&out_shape);

    // stride in the output for each input axis
    let mut axis_stride = vec![0usize; n];
    for (p, &m) in kept.iter().enumerate() {
        axis_stride[m] = out_strides[p];
    }
    let mut step = 1;
    for &m in &removed {
        axis_stride[m] = step;
        step *= shape[m];
    }
    Ok((out_shape, axis_stride))
}

/// Generalized unfolding `T_(i1,...,iM)` of shape `s_i1 x ... x s_iM x K`.
///
/// `kept_modes` are 0-based. The removed modes are combined into the last
/// axis with the smallest removed mode varying fastest, so for an order-4
/// tensor `T(j,k,l,m) = T_(1,3)(j, l, k + m*s_2)` (1-based modes, 0-based
/// indices). Keeping every mode yields the input with a trailing axis of 1.
pub fn unfold(t: &DenseTensor, kept_modes: &[usize]) -> Result<DenseTensor> {
    let (out_shape, axis_stride) = unfold_layout(t.shape(), kept_modes)?;
    let mut out = vec![0.0; t.len()];
    let mut idx = vec![0usize; t.order()];
    for &v in t.data() {
        let off: usize = idx.iter().zip(&axis_stride).map(|(i, s)| i * s).sum();
        out[off] = v;
        increment(&mut idx, t.shape());
    }
    DenseTensor::new(out_shape, out)
}

/// Inverse of [`unfold`]: rebuilds the tensor of `shape` from `T_(kept)`.
pub fn fold(unfolded: &DenseTensor, kept_modes: &[usize], shape: &[usize]) -> Result<DenseTensor> {
    let (out_shape, axis_stride) = unfold_layout(shape, kept_modes)?;
    if unfolded.shape() != out_shape.as_slice() {
        return Err(invalid_arg!(
            "unfolded tensor has shape {:?}, expected {:?}",
            unfolded.shape(),
            out_shape
        ));
    }
    let len: usize = shape.iter().product();
    let mut data = Vec::with_capacity(len);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..len {
        let off: usize = idx.iter().zip(&axis_stride).map(|(i, s)| i * s).sum();
        data.push(unfolded.data()[off]);
        increment(&mut idx, shape);
    }
    DenseTensor::new(shape.to_vec(), data)
}

/// Mode-`mode` product `T x_mode A` with `A` of shape `J x s_mode`.
///
/// The output keeps the axis order of `T` with `s_mode` replaced by `J`.
pub fn ttm(t: &DenseTensor, a: &Matrix, mode: usize, counter: &FlopCounter) -> Result<DenseTensor> {
    let shape = t.shape();
    if mode >= shape.len() {
        return Err(invalid_arg!("mode {mode} out of range for order {}", shape.len()));
    }
    if a.cols() != shape[mode] {
        return Err(invalid_arg!(
            "ttm on mode {mode} of size {} with a {}x{} matrix",
            shape[mode],
            a.rows(),
            a.cols()
        ));
    }
    let pre: usize = shape[..mode].iter().product();
    let k = shape[mode];
    let post: usize = shape[mode + 1..].iter().product();
    let j = a.rows();
    let mut out_shape = shape.to_vec();
    out_shape[mode] = j;
    let mut out = vec![0.0; pre * j * post];
    let src = t.data();
    for p in 0..pre {
        for jj in 0..j {
            let orow = &mut out[(p * j + jj) * post..(p * j + jj + 1) * post];
            for kk in 0..k {
                let w = a.get(jj, kk);
                let srow = &src[(p * k + kk) * post..(p * k + kk + 1) * post];
                for (o, s) in orow.iter_mut().zip(srow) {
                    *o += w * s;
                }
            }
        }
    }
    counter.add(Phase::Ttm, (t.len() * j) as u64);
    DenseTensor::new(out_shape, out)
}

/// Batched tensor-times-vector.
///
/// `m` has shape `d_1 x ... x d_m x R`; for every `r` the slice `m(..., r)`
/// is contracted along axis `contract_pos` with column `v(:, r)`. The
/// trailing rank axis is kept.
pub fn multi_ttv(
    m: &DenseTensor,
    v: &Matrix,
    contract_pos: usize,
    counter: &FlopCounter,
) -> Result<DenseTensor> {
    let shape = m.shape();
    if shape.len() < 2 {
        return Err(invalid_arg!("multi_ttv needs at least one mode besides the rank axis"));
    }
    let rank = shape[shape.len() - 1];
    let modes = &shape[..shape.len() - 1];
    if contract_pos >= modes.len() {
        return Err(invalid_arg!(
            "contract position {contract_pos} out of range for {} modes",
            modes.len()
        ));
    }
    if v.rows() != modes[contract_pos] || v.cols() != rank {
        return Err(invalid_arg!(
            "multi_ttv over axis of size {} with rank {rank} given a {}x{} matrix",
            modes[contract_pos],
            v.rows(),
            v.cols()
        ));
    }
    let pre: usize = modes[..contract_pos].iter().product();
    let k = modes[contract_pos];
    let post: usize = modes[contract_pos + 1..].iter().product();
    let mut out = vec![0.0; pre * post * rank];
    let src = m.data();
    for p in 0..pre {
        let oblock = &mut out[p * post * rank..(p + 1) * post * rank];
        for kk in 0..k {
            let w = v.row(kk);
            let sblock = &src[(p * k + kk) * post * rank..(p * k + kk + 1) * post * rank];
            for (orow, srow) in oblock.chunks_exact_mut(rank).zip(sblock.chunks_exact(rank)) {
                for ((o, s), x) in orow.iter_mut().zip(srow).zip(w) {
                    *o += s * x;
                }
            }
        }
    }
    counter.add(Phase::Mttv, m.len() as u64);
    let mut out_shape: Vec<usize> = modes.to_vec();
    out_shape.remove(contract_pos);
    out_shape.push(rank);
    DenseTensor::new(out_shape, out)
}

/// Column-wise Kronecker product; row `i*J + j` of the result is
/// `A(i,:) .* B(j,:)` (second operand varies fastest).
pub fn khatri_rao(a: &Matrix, b: &Matrix, counter: &FlopCounter) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(invalid_arg!(
            "khatri_rao of {} and {} columns",
            a.cols(),
            b.cols()
        ));
    }
    let k = a.cols();
    let mut out = Matrix::zeros(a.rows() * b.rows(), k);
    for i in 0..a.rows() {
        let arow = a.row(i);
        for j in 0..b.rows() {
            let orow = out.row_mut(i * b.rows() + j);
            for ((o, x), y) in orow.iter_mut().zip(arow).zip(b.row(j)) {
                *o = x * y;
            }
        }
    }
    counter.add(Phase::KhatriRao, (a.rows() * b.rows() * k) as u64);
    Ok(out)
}

/// Elementwise product.
pub fn hadamard(a: &Matrix, b: &Matrix, counter: &FlopCounter) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(invalid_arg!(
            "hadamard of {:?} and {:?}",
            a.shape(),
            b.shape()
        ));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    counter.add(Phase::Hadamard, (a.rows() * a.cols()) as u64);
    Matrix::from_vec(a.rows(), a.cols(), data)
}

/// `A^T A`, computed on the upper triangle and mirrored so the result is
/// exactly symmetric.
pub fn gram(a: &Matrix, counter: &FlopCounter) -> Matrix {
    let r = a.cols();
    let mut g = Matrix::zeros(r, r);
    for i in 0..a.rows() {
        let row = a.row(i);
        for p in 0..r {
            let x = row[p];
            let grow = g.row_mut(p);
            for q in p..r {
                grow[q] += x * row[q];
            }
        }
    }
    for p in 0..r {
        for q in 0..p {
            let v = g.get(q, p);
            g.set(p, q, v);
        }
    }
    counter.add(Phase::Other, (a.rows() * r * (r + 1) / 2) as u64);
    g
}

/// Matrix product charged to `phase`.
pub fn matmul_counted(a: &Matrix, b: &Matrix, counter: &FlopCounter, phase: Phase) -> Result<Matrix> {
    let out = a.matmul(b)?;
    counter.add(phase, (a.rows() * a.cols() * b.cols()) as u64);
    Ok(out)
}

fn check_factors(shape: &[usize], factors: &[Matrix], skip: Option<usize>) -> Result<usize> {
    if factors.len() != shape.len() {
        return Err(invalid_arg!(
            "{} factor matrices for an order-{} tensor",
            factors.len(),
            shape.len()
        ));
    }
    let mut rank = None;
    for (i, f) in factors.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        if f.rows() != shape[i] {
            return Err(invalid_arg!(
                "factor {i} has {} rows, mode size is {}",
                f.rows(),
                shape[i]
            ));
        }
        match rank {
            None => rank = Some(f.cols()),
            Some(r) if r != f.cols() => {
                return Err(invalid_arg!("factor {i} has {} columns, expected {r}", f.cols()))
            }
            _ => {}
        }
    }
    rank.ok_or_else(|| invalid_arg!("no factor matrices to contract"))
}

/// Reference MTTKRP `M = T_(n) P` with
/// `P = A_{N-1} ⊙ ... ⊙ A_{n+1} ⊙ A_{n-1} ⊙ ... ⊙ A_0` (0-based modes).
///
/// Built literally from [`unfold`] and [`khatri_rao`]; it is the oracle the
/// amortized strategies are checked against. `factors[n]` is ignored.
pub fn mttkrp_direct(
    t: &DenseTensor,
    factors: &[Matrix],
    n: usize,
    counter: &FlopCounter,
) -> Result<Matrix> {
    let order = t.order();
    if order < 2 {
        return Err(invalid_arg!("MTTKRP needs a tensor of order at least 2"));
    }
    if n >= order {
        return Err(invalid_arg!("mode {n} out of range for order {order}"));
    }
    check_factors(t.shape(), factors, Some(n))?;
    let mut others = (0..order).rev().filter(|&m| m != n);
    let first = others.next().expect("order >= 2");
    let mut krp = factors[first].clone();
    for m in others {
        krp = khatri_rao(&krp, &factors[m], counter)?;
    }
    let unfolded = unfold(t, &[n])?;
    let k = unfolded.shape()[1];
    let tn = Matrix::from_vec(t.shape()[n], k, unfolded.into_data())?;
    matmul_counted(&tn, &krp, counter, Phase::Ttm)
}

/// Full tensor `sum_r A_0(:,r) ∘ ... ∘ A_{N-1}(:,r)`.
pub fn reconstruct(factors: &[Matrix]) -> Result<DenseTensor> {
    if factors.is_empty() {
        return Err(invalid_arg!("reconstruct needs at least one factor"));
    }
    let shape: Vec<usize> = factors.iter().map(|f| f.rows()).collect();
    check_factors(&shape, factors, None)?;
    let scratch = FlopCounter::new();
    let mut krp = factors[0].clone();
    for f in &factors[1..] {
        krp = khatri_rao(&krp, f, &scratch)?;
    }
    let data = (0..krp.rows()).map(|i| krp.row(i).iter().sum()).collect();
    DenseTensor::new(shape, data)
}

/// Contracts axis `pos` of a plain tensor (no rank axis) with `a`
/// (`s_pos x R`), moving the rank axis to the end:
/// `out(..., r) = sum_k T(.., k, ..) a(k, r)`.
pub(crate) fn contract_to_rank(
    t: &DenseTensor,
    pos: usize,
    a: &Matrix,
    counter: &FlopCounter,
) -> Result<DenseTensor> {
    let shape = t.shape();
    if pos >= shape.len() || a.rows() != shape[pos] {
        return Err(invalid_arg!(
            "first-level contraction of axis {pos} of {shape:?} with a {}x{} factor",
            a.rows(),
            a.cols()
        ));
    }
    let rank = a.cols();
    let pre: usize = shape[..pos].iter().product();
    let k = shape[pos];
    let post: usize = shape[pos + 1..].iter().product();
    let mut out = vec![0.0; pre * post * rank];
    let src = t.data();
    for p in 0..pre {
        let oblock = &mut out[p * post * rank..(p + 1) * post * rank];
        for kk in 0..k {
            let arow = a.row(kk);
            let srow = &src[(p * k + kk) * post..(p * k + kk + 1) * post];
            for (orow, &s) in oblock.chunks_exact_mut(rank).zip(srow) {
                for (o, x) in orow.iter_mut().zip(arow) {
                    *o += s * x;
                }
            }
        }
    }
    counter.add(Phase::Ttm, (t.len() * rank) as u64);
    let mut out_shape: Vec<usize> = shape.to_vec();
    out_shape.remove(pos);
    out_shape.push(rank);
    DenseTensor::new(out_shape, out)
}

/// Contracts several axes of a plain tensor at once with their factors
/// (one pass through the tensor against the Khatri-Rao product of the
/// factors). Remaining axes keep their order and the rank axis is appended.
pub(crate) fn contract_many_to_rank(
    t: &DenseTensor,
    positions: &[usize],
    factors: &[&Matrix],
    counter: &FlopCounter,
) -> Result<DenseTensor> {
    if positions.len() == 1 {
        return contract_to_rank(t, positions[0], factors[0], counter);
    }
    let shape = t.shape();
    let n = shape.len();
    if positions.is_empty() || positions.len() != factors.len() || positions.len() >= n {
        return Err(invalid_arg!("bad contraction set {positions:?} for order {n}"));
    }
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_by_key(|&i| positions[i]);
    let sorted: Vec<usize> = order.iter().map(|&i| positions[i]).collect();
    if sorted.windows(2).any(|w| w[0] == w[1]) || *sorted.last().unwrap() >= n {
        return Err(invalid_arg!("bad contraction set {positions:?} for order {n}"));
    }
    let rank = factors[0].cols();
    for (i, &p) in positions.iter().enumerate() {
        if factors[i].rows() != shape[p] || factors[i].cols() != rank {
            return Err(invalid_arg!("factor for axis {p} does not match"));
        }
    }
    // Khatri-Rao product over the contracted axes, later axes fastest.
    let mut krp = factors[order[0]].clone();
    for &i in &order[1..] {
        krp = khatri_rao(&krp, factors[i], counter)?;
    }
    let kept: Vec<usize> = (0..n).filter(|a| !sorted.contains(a)).collect();
    let kept_shape: Vec<usize> = kept.iter().map(|&a| shape[a]).collect();
    let kept_strides = strides_of(&kept_shape);
    let c_shape: Vec<usize> = sorted.iter().map(|&a| shape[a]).collect();
    let c_strides = strides_of(&c_shape);
    let mut out_stride = vec![0usize; n];
    let mut c_stride = vec![0usize; n];
    for (i, &a) in kept.iter().enumerate() {
        out_stride[a] = kept_strides[i];
    }
    for (i, &a) in sorted.iter().enumerate() {
        c_stride[a] = c_strides[i];
    }
    let kept_len: usize = kept_shape.iter().product();
    let mut out = vec![0.0; kept_len * rank];
    let mut idx = vec![0usize; n];
    for &v in t.data() {
        let mut o = 0;
        let mut c = 0;
        for a in 0..n {
            o += idx[a] * out_stride[a];
            c += idx[a] * c_stride[a];
        }
        let orow = &mut out[o * rank..(o + 1) * rank];
        for (x, k) in orow.iter_mut().zip(krp.row(c)) {
            *x += v * k;
        }
        increment(&mut idx, shape);
    }
    counter.add(Phase::Ttm, (t.len() * rank) as u64);
    let mut out_shape = kept_shape;
    out_shape.push(rank);
    DenseTensor::new(out_shape, out)
}
