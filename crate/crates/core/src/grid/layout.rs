use crate::error::{invalid_arg, Result};
use crate::tensor::{increment, DenseTensor, Matrix};

/// An `I_1 x ... x I_N` grid of virtual processors, each holding one
/// zero-padded block of the input tensor.
///
/// Processors are numbered row-major over their grid coordinates (last
/// coordinate fastest). Block `x` covers rows `x_i * b_i .. (x_i + 1) * b_i`
/// of mode `i`, with `b_i = ⌈s_i / I_i⌉`; rows past `s_i` are zeros.
#[derive(Clone, Debug)]
pub struct VirtualGrid {
    dims: Vec<usize>,
    shape: Vec<usize>,
    block: Vec<usize>,
    blocks: Vec<DenseTensor>,
}

impl VirtualGrid {
    pub fn distribute(t: &DenseTensor, dims: &[usize]) -> Result<Self> {
        if dims.len() != t.order() {
            return Err(invalid_arg!(
                "grid has {} dimensions, tensor has order {}",
                dims.len(),
                t.order()
            ));
        }
        if dims.contains(&0) {
            return Err(invalid_arg!("grid dimensions must be positive"));
        }
        let shape = t.shape().to_vec();
        let block: Vec<usize> = shape.iter().zip(dims).map(|(&s, &i)| s.div_ceil(i)).collect();
        let procs: usize = dims.iter().product();
        let mut blocks = Vec::with_capacity(procs);
        let mut coord = vec![0usize; dims.len()];
        for _ in 0..procs {
            let origin: Vec<usize> = coord.iter().zip(&block).map(|(&x, &b)| x * b).collect();
            let b = DenseTensor::from_fn(block.clone(), |idx| {
                let mut global = Vec::with_capacity(idx.len());
                for ((&i, &o), &s) in idx.iter().zip(&origin).zip(&shape) {
                    if i + o >= s {
                        return 0.0;
                    }
                    global.push(i + o);
                }
                t.get(&global)
            })?;
            blocks.push(b);
            increment(&mut coord, dims);
        }
        Ok(Self { dims: dims.to_vec(), shape, block, blocks })
    }

    /// Reassembles the global tensor, dropping the padding.
    pub fn reassemble(&self) -> Result<DenseTensor> {
        let mut out = DenseTensor::zeros(self.shape.clone())?;
        let mut idx = vec![0usize; self.shape.len()];
        for _ in 0..out.len() {
            let mut p = 0;
            let mut local = Vec::with_capacity(idx.len());
            for (m, &i) in idx.iter().enumerate() {
                p = p * self.dims[m] + i / self.block[m];
                local.push(i % self.block[m]);
            }
            out.set(&idx, self.blocks[p].get(&local));
            increment(&mut idx, &self.shape);
        }
        Ok(out)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Padded block extents `b_i`.
    pub fn block_shape(&self) -> &[usize] {
        &self.block
    }

    pub fn procs(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[DenseTensor] {
        &self.blocks
    }

    pub fn block(&self, p: usize) -> &DenseTensor {
        &self.blocks[p]
    }

    /// Grid coordinates of processor `p`.
    pub fn coords(&self, p: usize) -> Vec<usize> {
        let mut c = vec![0; self.dims.len()];
        let mut rest = p;
        for m in (0..self.dims.len()).rev() {
            c[m] = rest % self.dims[m];
            rest /= self.dims[m];
        }
        c
    }

    /// Processors sharing coordinate `x` in `mode`, ascending. These hold
    /// the same rows of `A^(mode)`.
    pub fn slice(&self, mode: usize, x: usize) -> Vec<usize> {
        (0..self.procs()).filter(|&p| self.coords(p)[mode] == x).collect()
    }

    /// All slices of `mode`, indexed by coordinate.
    pub fn slices(&self, mode: usize) -> Vec<Vec<usize>> {
        (0..self.dims[mode]).map(|x| self.slice(mode, x)).collect()
    }

    pub fn all_procs(&self) -> Vec<usize> {
        (0..self.procs()).collect()
    }

    /// Rows of the padded `A^(mode)` block owned by processor `p`.
    pub fn factor_block(&self, a: &Matrix, mode: usize, p: usize) -> Matrix {
        let b = self.block[mode];
        let start = self.coords(p)[mode] * b;
        Matrix::from_fn(b, a.cols(), |i, j| if start + i < a.rows() { a.get(start + i, j) } else { 0.0 })
    }

    /// Row range of the block `[0, b_mode)` that processor `p` owns after
    /// a reduce-scatter within its slice: chunks of `⌈b / group⌉` rows in
    /// slice order, the last one short (possibly empty).
    pub fn chunk_rows(&self, mode: usize, p: usize) -> (usize, usize) {
        let x = self.coords(p)[mode];
        let group = self.slice(mode, x);
        let k = group.iter().position(|&q| q == p).expect("p is in its own slice");
        chunk_range(self.block[mode], group.len(), k)
    }

    /// Assembles a global factor from per-slice blocks, dropping padding.
    pub fn assemble_factor(&self, mode: usize, blocks_by_coord: &[Matrix]) -> Matrix {
        let b = self.block[mode];
        let rows = self.shape[mode];
        let cols = blocks_by_coord[0].cols();
        Matrix::from_fn(rows, cols, |i, j| blocks_by_coord[i / b].get(i % b, j))
    }
}

/// `k`-th of `parts` contiguous chunks of `n` items, `⌈n/parts⌉` each with a
/// short tail.
pub(crate) fn chunk_range(n: usize, parts: usize, k: usize) -> (usize, usize) {
    let c = n.div_ceil(parts);
    let start = (k * c).min(n);
    let end = ((k + 1) * c).min(n);
    (start, end)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(shape: Vec<usize>) -> DenseTensor {
        let mut k = 0.0;
        DenseTensor::from_fn(shape, |_| {
            k += 1.0;
            k
        })
        .unwrap()
    }

    #[test]
    fn single_processor_holds_the_tensor() {
        let t = seq(vec![3, 4, 2]);
        let g = VirtualGrid::distribute(&t, &[1, 1, 1]).unwrap();
        assert_eq!(g.blocks(), &[t.clone()]);
        assert_eq!(g.reassemble().unwrap(), t);
    }

    #[test]
    fn even_and_padded_blocks() {
        let t = seq(vec![4, 4]);
        let g = VirtualGrid::distribute(&t, &[2, 2]).unwrap();
        assert_eq!(g.procs(), 4);
        assert_eq!(g.block(1).shape(), &[2, 2]);
        assert_eq!(g.block(1).data(), &[3.0, 4.0, 7.0, 8.0]);
        assert_eq!(g.reassemble().unwrap(), t);

        let t = seq(vec![5, 4]);
        let g = VirtualGrid::distribute(&t, &[2, 2]).unwrap();
        assert_eq!(g.block(2).shape(), &[3, 2]);
        // rows 3, 4 of the tensor then one row of padding
        assert_eq!(g.block(2).data(), &[13.0, 14.0, 17.0, 18.0, 0.0, 0.0]);
        assert_eq!(g.reassemble().unwrap(), t);
        assert!(VirtualGrid::distribute(&t, &[2]).is_err());
    }

    #[test]
    fn slices_and_chunks() {
        let t = seq(vec![8, 8, 8]);
        let g = VirtualGrid::distribute(&t, &[4, 2, 1]).unwrap();
        assert_eq!(g.coords(5), vec![2, 1, 0]);
        assert_eq!(g.slice(0, 2), vec![4, 5]);
        assert_eq!(g.slice(1, 0), vec![0, 2, 4, 6]);
        assert_eq!(g.chunk_rows(1, 4), (2, 3));
        assert_eq!(chunk_range(5, 4, 3), (5, 5));
        assert_eq!(chunk_range(5, 4, 2), (4, 5));
    }

    proptest::proptest! {
        #[test]
        fn round_trip(shape in proptest::collection::vec(1usize..6, 1..4), seed in 0usize..1000) {
            let dims: Vec<usize> = shape.iter().enumerate().map(|(i, &s)| 1 + (seed / (i + 1)) % s.max(1).min(3)).collect();
            let t = seq(shape);
            let g = VirtualGrid::distribute(&t, &dims).unwrap();
            proptest::prop_assert_eq!(g.reassemble().unwrap(), t);
        }
    }
}
