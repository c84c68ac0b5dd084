//! Small dense linear algebra on flat `f64` slices.
//!
//! Frames are stored vector-major: a k-frame in R^n is a slice of length
//! `k * n` whose `i`-th chunk of `n` entries is the `i`-th vector.
use crate::prelude::*;
use nalgebra::{DMatrix, SymmetricEigen};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Binomial coefficient C(n, k); zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Modified Gram–Schmidt with one re-orthogonalisation pass, in place.
///
/// Orientation is preserved (the implicit triangular factor has a positive
/// diagonal). Returns `false` if the vectors are numerically dependent.
pub fn gram_schmidt(frame: &mut [f64], n: usize) -> bool {
    let k = frame.len() / n;
    for i in 0..k {
        let before = norm(&frame[i * n..(i + 1) * n]);
        for _pass in 0..2 {
            for j in 0..i {
                let (head, tail) = frame.split_at_mut(i * n);
                let prev = &head[j * n..(j + 1) * n];
                let cur = &mut tail[..n];
                let c = dot(prev, cur);
                axpy(-c, prev, cur);
            }
        }
        let v = &mut frame[i * n..(i + 1) * n];
        let len = norm(v);
        if !(len > 1e-12 * before) || !len.is_finite() {
            return false;
        }
        for x in v.iter_mut() {
            *x /= len;
        }
    }
    true
}

/// Determinant of a row-major `k x k` matrix.
///
/// Explicit cofactor expansion for `k <= 4`, partial-pivot LU above.
pub fn det(m: &[f64], k: usize) -> f64 {
    debug_assert_eq!(m.len(), k * k);
    match k {
        0 => 1.0,
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        3 => det3(m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8]),
        4 => det4(m),
        _ => det_lu(m, k),
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn det3(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64, g: f64, h: f64, i: f64) -> f64 {
    a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
}

fn det4(m: &[f64]) -> f64 {
    // expansion along the first row
    let r = |i: usize, j: usize| m[i * 4 + j];
    let minor = |skip: usize| {
        let cols: Vec<usize> = (0..4).filter(|&c| c != skip).collect();
        det3(
            r(1, cols[0]),
            r(1, cols[1]),
            r(1, cols[2]),
            r(2, cols[0]),
            r(2, cols[1]),
            r(2, cols[2]),
            r(3, cols[0]),
            r(3, cols[1]),
            r(3, cols[2]),
        )
    };
    r(0, 0) * minor(0) - r(0, 1) * minor(1) + r(0, 2) * minor(2) - r(0, 3) * minor(3)
}

fn det_lu(m: &[f64], k: usize) -> f64 {
    let mut a = m.to_vec();
    let mut sign = 1.0;
    for col in 0..k {
        let mut piv = col;
        let mut best = a[col * k + col].abs();
        for row in col + 1..k {
            let v = a[row * k + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for j in 0..k {
                a.swap(col * k + j, piv * k + j);
            }
            sign = -sign;
        }
        let p = a[col * k + col];
        for row in col + 1..k {
            let factor = a[row * k + col] / p;
            if factor != 0.0 {
                for j in col..k {
                    a[row * k + j] -= factor * a[col * k + j];
                }
            }
        }
    }
    let mut d = sign;
    for i in 0..k {
        d *= a[i * k + i];
    }
    d
}

/// Eigen-decomposition of a symmetric `n x n` row-major matrix.
///
/// Eigenvalues are sorted in decreasing order; eigenvectors are returned
/// vector-major in the same order.
pub fn symmetric_eigen(m: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mat = DMatrix::from_row_slice(n, n, m);
    let eig = SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &i in &order {
        vectors.extend(eig.eigenvectors.column(i).iter().copied());
    }
    (values, vectors)
}

/// Largest singular value of an `rows x cols` matrix given by its columns
/// (vector-major, each column of length `rows`).
pub fn spectral_norm_columns(cols: &[f64], rows: usize) -> f64 {
    let c = cols.len() / rows;
    let mut gram = vec![0.0; c * c];
    for i in 0..c {
        for j in i..c {
            let v = dot(&cols[i * rows..(i + 1) * rows], &cols[j * rows..(j + 1) * rows]);
            gram[i * c + j] = v;
            gram[j * c + i] = v;
        }
    }
    let (values, _) = symmetric_eigen(&gram, c);
    values.first().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Completes an orthonormal k-frame in R^n to an orthonormal basis of the
/// normal space, returned vector-major (`(n - k) * n` entries).
pub fn normal_complement(frame: &[f64], n: usize) -> Vec<f64> {
    let k = frame.len() / n;
    let mut out: Vec<f64> = Vec::with_capacity((n - k) * n);
    let mut basis: Vec<f64> = frame.to_vec();
    for axis in 0..n {
        if basis.len() / n == n {
            break;
        }
        let mut v = vec![0.0; n];
        v[axis] = 1.0;
        for _pass in 0..2 {
            for j in 0..basis.len() / n {
                let b = &basis[j * n..(j + 1) * n];
                let c = dot(b, &v);
                axpy(-c, b, &mut v);
            }
        }
        let len = norm(&v);
        if len > 1e-6 {
            for x in v.iter_mut() {
                *x /= len;
            }
            basis.extend_from_slice(&v);
            out.extend_from_slice(&v);
        }
    }
    out
}
