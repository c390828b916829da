//! Small dense helpers on top of nalgebra. Every matrix in this crate is at
//! most 64x64 (h) or |S||A| square, so clarity wins over speed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Induced infinity norm: maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Numerical rank by Gaussian elimination with partial pivoting. A pivot is
/// treated as zero when it is at most `tol` times the largest entry.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let mut a = m.clone();
    let (rows, cols) = a.shape();
    let scale = a.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if scale == 0.0 {
        return 0;
    }
    let threshold = tol * scale;
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let (pivot_row, pivot_abs) = (rank..rows)
            .map(|r| (r, a[(r, col)].abs()))
            .fold((rank, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs <= threshold {
            continue;
        }
        a.swap_rows(rank, pivot_row);
        let pivot = a[(rank, col)];
        for r in (rank + 1)..rows {
            let factor = a[(r, col)] / pivot;
            if factor != 0.0 {
                for c in col..cols {
                    let delta = factor * a[(rank, c)];
                    a[(r, c)] -= delta;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Solves `m x = rhs` by LU with partial pivoting.
///
/// Fails when a pivot of U is below `1e-14` relative to the largest pivot.
pub fn solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if !m.is_square() || m.nrows() != rhs.len() {
        return Err(Error::InvalidInput(format!(
            "cannot solve a {}x{} system against a vector of length {}",
            m.nrows(),
            m.ncols(),
            rhs.len()
        )));
    }
    let lu = m.clone().lu();
    let u = lu.u();
    let diag_max = u.diagonal().iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let diag_min = u.diagonal().iter().fold(f64::INFINITY, |acc, x| acc.min(x.abs()));
    if diag_max == 0.0 || diag_min <= 1e-14 * diag_max {
        return Err(Error::Singular(format!(
            "pivot ratio {:e} below 1e-14",
            if diag_max == 0.0 { 0.0 } else { diag_min / diag_max }
        )));
    }
    lu.solve(rhs)
        .ok_or_else(|| Error::Singular("LU solve failed".into()))
}

pub fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        inv.set_column(j, &solve(m, &e)?);
    }
    Ok(inv)
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method, sorted
/// ascending. Sweeps stop once the off-diagonal Frobenius mass is below
/// `tol` times the Frobenius norm of the input.
pub fn jacobi_eigenvalues(sym: &DMatrix<f64>, tol: f64) -> Vec<f64> {
    let n = sym.nrows();
    let mut a = sym.clone();
    let total = a.norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= tol * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = a.diagonal().iter().copied().collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    eig
}

/// Lower end of the union of Gerschgorin discs: `min_i a_ii - sum_{j != i} |a_ij|`.
pub fn gershgorin_lower_bound(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| {
            let radius: f64 = (0..m.ncols())
                .filter(|&j| j != i)
                .map(|j| m[(i, j)].abs())
                .sum();
            m[(i, i)] - radius
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn inf_norm_is_max_row_sum() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 0.5]);
        assert_eq!(inf_norm(&m), 3.0);
        assert_eq!(inf_norm(&m.transpose()), 2.5);
    }

    #[test]
    fn rank_detects_duplicate_column() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
        assert_eq!(rank(&m, 1e-10), 1);
        assert_eq!(rank(&DMatrix::<f64>::identity(4, 4), 1e-10), 4);
        assert_eq!(rank(&DMatrix::<f64>::zeros(3, 3), 1e-10), 0);
    }

    #[test]
    fn solve_rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(solve(&m, &DVector::from_vec(vec![1.0, 1.0])), Err(Error::Singular(_))));
    }

    #[test]
    fn jacobi_on_known_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = jacobi_eigenvalues(&m, 1e-12);
        assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 3.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn jacobi_matches_nalgebra(n in 1usize..8, entries in proptest::collection::vec(-5.0f64..5.0, 64)) {
            let a = DMatrix::from_fn(n, n, |i, j| entries[i * 8 + j]);
            let sym = (&a + a.transpose()) * 0.5;
            let mine = jacobi_eigenvalues(&sym, 1e-13);
            let mut reference: Vec<f64> = sym.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            reference.sort_by(|x, y| x.total_cmp(y));
            for (x, y) in mine.iter().zip(&reference) {
                prop_assert!((x - y).abs() < 1e-9, "{mine:?} vs {reference:?}");
            }
        }

        #[test]
        fn gershgorin_bounds_smallest_eigenvalue(n in 1usize..8, entries in proptest::collection::vec(-5.0f64..5.0, 64)) {
            let a = DMatrix::from_fn(n, n, |i, j| entries[i * 8 + j]);
            let sym = (&a + a.transpose()) * 0.5;
            let lo = jacobi_eigenvalues(&sym, 1e-13)[0];
            prop_assert!(gershgorin_lower_bound(&sym) <= lo + 1e-9);
        }
    }
}
