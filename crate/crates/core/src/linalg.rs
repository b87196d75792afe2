//! Small dense linear-algebra helpers on top of `nalgebra`.
//!
//! Every helper accepts zero-dimensional matrices so that models without side
//! information run through the same formulas as models with it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted ascending.
///
/// Column `i` of `vectors` is the unit eigenvector for `values[i]`, oriented
/// so that its first entry of non-negligible magnitude is positive.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SortedEigen {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        if n == 0 {
            return Self {
                values: DVector::zeros(0),
                vectors: DMatrix::zeros(0, 0),
            };
        }
        let eig = SymmetricEigen::new(symmetrize(a));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (col, &i) in order.iter().enumerate() {
            let mut v = eig.eigenvectors.column(i).into_owned();
            v /= v.norm();
            orient(&mut v);
            vectors.set_column(col, &v);
        }
        Self { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Rebuilds `V f(Λ) Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.values.len();
        let scaled = DMatrix::from_fn(n, n, |i, j| self.vectors[(i, j)] * f(self.values[j]));
        scaled * self.vectors.transpose()
    }
}

/// Flips `v` so that its first entry with magnitude above `1e-12·‖v‖∞` is positive.
pub fn orient(v: &mut DVector<f64>) {
    let scale = v.amax();
    if scale == 0.0 {
        return;
    }
    if let Some(first) = v.iter().copied().find(|x| x.abs() > 1e-12 * scale) {
        if first < 0.0 {
            v.neg_mut();
        }
    }
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest entrywise |a − aᵀ|.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    if a.nrows() != a.ncols() {
        return f64::INFINITY;
    }
    (a - a.transpose()).amax()
}

pub fn max_abs_diag(a: &DMatrix<f64>) -> f64 {
    a.diagonal().amax()
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    SortedEigen::new(a).min()
}

pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    SortedEigen::new(a).max()
}

/// Symmetric square root and inverse square root of a positive definite matrix.
pub fn spd_sqrt_pair(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let eig = SortedEigen::new(a);
    (eig.map(f64::sqrt), eig.map(|l| 1.0 / l.sqrt()))
}

/// Symmetric square root of a positive semidefinite matrix. Eigenvalues that
/// round to slightly negative values are clamped to zero.
pub fn psd_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    SortedEigen::new(a).map(|l| l.max(0.0).sqrt())
}

/// Inverse of a symmetric positive definite matrix; `None` if Cholesky fails.
pub fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    let chol = symmetrize(a).cholesky()?;
    Some(symmetrize(&chol.inverse()))
}

/// Solves `x a = b` for `x` with `a` symmetric positive definite.
pub fn spd_right_solve(b: &DMatrix<f64>, a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Some(DMatrix::zeros(b.nrows(), 0));
    }
    let chol = symmetrize(a).cholesky()?;
    Some(chol.solve(&b.transpose()).transpose())
}

/// Stacks `top` above `bottom`; both must have the same column count.
pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape())
        .copy_from(bottom);
    out
}

/// Places `left` beside `right`; both must have the same row count.
pub fn hstack(left: &DMatrix<f64>, right: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.view_mut((0, 0), left.shape()).copy_from(left);
    out.view_mut((0, left.ncols()), right.shape())
        .copy_from(right);
    out
}

/// Assembles a symmetric matrix from its upper-triangular blocks.
///
/// `blocks[i][j]` for `j ≥ i` is block `(i, j)`; the lower blocks are filled
/// with transposes. Block sizes are taken from the diagonal.
pub fn symmetric_blocks(blocks: &[Vec<&DMatrix<f64>>]) -> DMatrix<f64> {
    let sizes: Vec<usize> = blocks.iter().map(|row| row[0].nrows()).collect();
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, &s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    let n: usize = sizes.iter().sum();
    let mut out = DMatrix::zeros(n, n);
    for (i, row) in blocks.iter().enumerate() {
        for (k, block) in row.iter().enumerate() {
            let j = i + k;
            out.view_mut((offsets[i], offsets[j]), block.shape())
                .copy_from(*block);
            if i != j {
                out.view_mut((offsets[j], offsets[i]), (block.ncols(), block.nrows()))
                    .copy_from(&block.transpose());
            }
        }
    }
    out
}
