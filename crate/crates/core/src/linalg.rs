//! Dense vector helpers and pairwise accumulation over snapshots.

use alloc::vec;
use alloc::vec::Vec;

/// Leaf size below which sums run left to right.
const PAIRWISE_LEAF: usize = 8;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(norm_sq(a))
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |acc, v| f64::max(acc, libm::fabs(*v)))
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out = M v` for a row-major `rows x cols` matrix.
#[inline]
pub fn matvec(mat: &[f64], cols: usize, v: &[f64], out: &mut [f64]) {
    for (row, o) in mat.chunks_exact(cols).zip(out.iter_mut()) {
        *o = dot(row, v);
    }
}

/// `out += M^T w` for a row-major `rows x cols` matrix.
#[inline]
pub fn matvec_t_acc(mat: &[f64], cols: usize, w: &[f64], out: &mut [f64]) {
    for (row, &wi) in mat.chunks_exact(cols).zip(w) {
        if wi != 0.0 {
            axpy(wi, row, out);
        }
    }
}

/// Pairwise (tree) sum of a slice.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_LEAF {
        values.iter().sum()
    } else {
        let (lo, hi) = values.split_at(values.len() / 2);
        pairwise_sum(lo) + pairwise_sum(hi)
    }
}

/// Pairwise sum of `term(l)` for `l` in `0..count`.
pub fn pairwise_sum_by(count: usize, term: &mut impl FnMut(usize) -> f64) -> f64 {
    fn go(lo: usize, hi: usize, term: &mut impl FnMut(usize) -> f64) -> f64 {
        if hi - lo <= PAIRWISE_LEAF {
            (lo..hi).map(&mut *term).sum()
        } else {
            let mid = lo + (hi - lo) / 2;
            go(lo, mid, term) + go(mid, hi, term)
        }
    }
    go(0, count, term)
}

/// Pairwise sum of vector-valued terms. `add_term(l, acc)` adds the `l`-th
/// contribution into `acc`; leaves are merged in ascending index order.
pub fn pairwise_sum_vec(
    count: usize,
    len: usize,
    add_term: &mut impl FnMut(usize, &mut [f64]),
) -> Vec<f64> {
    fn go(lo: usize, hi: usize, acc: &mut [f64], add_term: &mut impl FnMut(usize, &mut [f64])) {
        if hi - lo <= PAIRWISE_LEAF {
            for l in lo..hi {
                add_term(l, acc);
            }
        } else {
            let mid = lo + (hi - lo) / 2;
            go(lo, mid, acc, add_term);
            let mut right = vec![0.0; acc.len()];
            go(mid, hi, &mut right, add_term);
            for (a, r) in acc.iter_mut().zip(&right) {
                *a += r;
            }
        }
    }
    let mut acc = vec![0.0; len];
    go(0, count, &mut acc, add_term);
    acc
}

pub fn scale(v: &mut [f64], s: f64) {
    for x in v {
        *x *= s;
    }
}

pub fn is_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}
