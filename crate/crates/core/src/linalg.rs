// SPDX-License-Identifier: MIT OR Apache-2.0

//! Small dense linear-algebra helpers on top of nalgebra, all in `f64`.

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

/// Relative singular-value cutoff used for numerical rank.
pub const RANK_CUTOFF: f64 = 1e-8;

pub fn to_dmatrix<T: Copy + Into<f64>>(a: &Array2<T>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]].into())
}

pub fn to_array(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Orthonormal basis of the row space of `m`, one basis vector per row,
/// keeping singular directions with `sigma > cutoff * sigma_max`.
/// Also returns all singular values in descending order.
pub fn row_space_basis(m: &DMatrix<f64>, cutoff: f64) -> (DMatrix<f64>, Vec<f64>) {
    let cols = m.ncols();
    if m.nrows() == 0 {
        return (DMatrix::zeros(0, cols), Vec::new());
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let max = sigma.first().copied().unwrap_or(0.0);
    let keep: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| max > 0.0 && svd.singular_values[i] > cutoff * max)
        .collect();
    let mut basis = DMatrix::zeros(keep.len(), cols);
    for (r, &i) in keep.iter().enumerate() {
        basis.set_row(r, &v_t.row(i));
    }
    (basis, sigma)
}

/// Numerical rank at the relative cutoff.
pub fn numerical_rank(m: &DMatrix<f64>, cutoff: f64) -> usize {
    row_space_basis(m, cutoff).0.nrows()
}

/// `rows x cols` matrix with orthonormal columns, from the QR
/// factorization of a Gaussian matrix.
pub fn random_orthonormal<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    assert!(cols <= rows, "cannot fit {cols} orthonormal columns in {rows} dims");
    let g = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q().columns(0, cols).into_owned()
}

/// Principal angles (radians, ascending) between the row spaces of `a`
/// and `b`, which must already be orthonormal bases.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Vec::new();
    }
    let cross = a * b.transpose();
    let mut cosines: Vec<f64> = cross.singular_values().iter().copied().collect();
    cosines.sort_by(|x, y| y.total_cmp(x));
    cosines.truncate(a.nrows().min(b.nrows()));
    cosines.iter().map(|c| c.clamp(-1.0, 1.0).acos()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn orthonormal_columns() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let q = random_orthonormal(&mut rng, 10, 4);
        let g = q.transpose() * &q;
        assert!((g - DMatrix::identity(4, 4)).abs().max() < 1e-12);
    }

    #[test]
    fn rank_of_deficient_matrix() {
        let m = DMatrix::from_row_slice(3, 4, &[1., 2., 3., 4., 2., 4., 6., 8., 0., 1., 0., 1.]);
        assert_eq!(numerical_rank(&m, RANK_CUTOFF), 2);
        let (basis, sigma) = row_space_basis(&m, RANK_CUTOFF);
        assert_eq!(sigma.len(), 3);
        assert!((&basis * basis.transpose() - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn identical_subspaces_have_zero_angles() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let q = random_orthonormal(&mut rng, 12, 3).transpose();
        for a in principal_angles(&q, &q) {
            assert!(a < 1e-6);
        }
    }
}
