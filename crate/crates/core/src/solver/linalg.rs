//! Sparse symmetric positive-definite linear algebra for the tile systems.

use crate::scalar::Scalar;

/// Compressed sparse row matrix with sorted, de-duplicated columns.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds an `n × n` matrix, summing duplicate `(row, col)` entries.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn matvec(&self, x: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|i − j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }
}

pub fn norm2<T: Scalar>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum::<T>().sqrt()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// `‖A·x − b‖ / ‖b‖`, or `‖A·x‖` when `b` is zero.
pub fn relative_residual<T: Scalar>(a: &CsrMatrix<T>, x: &[T], b: &[T]) -> f64 {
    let mut ax = vec![T::zero(); a.n];
    a.matvec(x, &mut ax);
    let r: Vec<T> = ax.iter().zip(b).map(|(&p, &q)| p - q).collect();
    let nb = norm2(b).as_f64();
    let nr = norm2(&r).as_f64();
    if nb == 0.0 {
        nr
    } else {
        nr / nb
    }
}

/// Banded Cholesky factor `A = L·Lᵀ`. Row `i` of `L` is stored densely over
/// columns `i − bw ..= i`.
#[derive(Clone, Debug)]
pub struct BandCholesky<T> {
    n: usize,
    bw: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandCholesky<T> {
    /// Fails with the offending pivot row when `A` is not positive definite.
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self, usize> {
        let n = a.n;
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut data = vec![T::zero(); n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    data[i * w + (j + bw - i)] = v;
                }
            }
        }
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let mut s = data[i * w + (j + bw - i)];
                for k in lo..j {
                    s -= data[i * w + (k + bw - i)] * data[j * w + (k + bw - j)];
                }
                if i == j {
                    if !(s > T::zero()) || !s.is_finite() {
                        return Err(i);
                    }
                    data[i * w + bw] = s.sqrt();
                } else {
                    data[i * w + (j + bw - i)] = s / data[j * w + bw];
                }
            }
        }
        Ok(BandCholesky { n, bw, data })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.data[i * w + (k + bw - i)] * y[k];
            }
            y[i] = s / self.data[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.data[k * w + (i + bw - k)] * y[k];
            }
            y[i] = s / self.data[i * w + bw];
        }
        y
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradient from a zero initial guess.
/// Stops once `‖r‖/‖b‖ ≤ tol` or after `max_iter` iterations.
pub fn pcg<T: Scalar>(a: &CsrMatrix<T>, b: &[T], tol: f64, max_iter: usize) -> CgOutcome<T> {
    let n = a.n;
    let nb = norm2(b).as_f64();
    let mut x = vec![T::zero(); n];
    if nb == 0.0 {
        return CgOutcome { x, iterations: 0, converged: true, relative_residual: 0.0 };
    }
    let inv_diag: Vec<T> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > T::zero() { d.recip() } else { T::one() })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 0..max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return CgOutcome { x, iterations: it, converged: false, relative_residual: rel };
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm2(&r).as_f64() / nb;
        if rel <= tol {
            // confirm against the true residual, not the recurrence
            let true_rel = relative_residual(a, &x, b);
            if true_rel <= tol {
                return CgOutcome { x, iterations: it + 1, converged: true, relative_residual: true_rel };
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = relative_residual(a, &x, b);
    CgOutcome { x, iterations: max_iter, converged: rel <= tol, relative_residual: rel }
}
