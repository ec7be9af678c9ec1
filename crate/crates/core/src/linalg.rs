//! Dense complex matrix with split real/imaginary storage.
//!
//! Every solver in the crate touches the sensing matrix only through
//! `A x`, `A^H v`, or the fused row pass that does both in one sweep, so the
//! storage is laid out for streaming rows.

use crate::scalar::{Real, C};

/// Row-major dense complex matrix, real and imaginary parts stored apart.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    re: Vec<T>,
    im: Vec<T>,
}

struct Split<T> {
    re: Vec<T>,
    im: Vec<T>,
}

impl<T: Real> Split<T> {
    fn of(v: &[C<T>]) -> Self {
        Self {
            re: v.iter().map(|z| z.re).collect(),
            im: v.iter().map(|z| z.im).collect(),
        }
    }

    fn zeros(n: usize) -> Self {
        Self {
            re: vec![T::zero(); n],
            im: vec![T::zero(); n],
        }
    }

    fn join(self) -> Vec<C<T>> {
        self.re
            .into_iter()
            .zip(self.im)
            .map(|(r, i)| C::new(r, i))
            .collect()
    }
}

// four independent accumulators so the reduction vectorizes
#[inline(always)]
fn row_dot<T: Real>(ar: &[T], ai: &[T], xr: &[T], xi: &[T]) -> C<T> {
    const L: usize = 4;
    let z = T::zero();
    let mut sr = [z; L];
    let mut si = [z; L];
    let n = ar.len();
    let head = n - n % L;
    for (((a_r, a_i), x_r), x_i) in ar[..head]
        .chunks_exact(L)
        .zip(ai[..head].chunks_exact(L))
        .zip(xr[..head].chunks_exact(L))
        .zip(xi[..head].chunks_exact(L))
    {
        for k in 0..L {
            sr[k] = sr[k] + a_r[k] * x_r[k] - a_i[k] * x_i[k];
            si[k] = si[k] + a_r[k] * x_i[k] + a_i[k] * x_r[k];
        }
    }
    let mut re = (sr[0] + sr[1]) + (sr[2] + sr[3]);
    let mut im = (si[0] + si[1]) + (si[2] + si[3]);
    for j in head..n {
        re = re + ar[j] * xr[j] - ai[j] * xi[j];
        im = im + ar[j] * xi[j] + ai[j] * xr[j];
    }
    C::new(re, im)
}

// acc += conj(row) * g
#[inline(always)]
fn row_axpy_conj<T: Real>(ar: &[T], ai: &[T], g: C<T>, accr: &mut [T], acci: &mut [T]) {
    for (((a_r, a_i), o_r), o_i) in ar.iter().zip(ai).zip(accr.iter_mut()).zip(acci.iter_mut()) {
        *o_r = *o_r + *a_r * g.re + *a_i * g.im;
        *o_i = *o_i + *a_r * g.im - *a_i * g.re;
    }
}

impl<T: Real> CMatrix<T> {
    /// Builds a matrix from a function of `(row, col)`, filled row by row.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut re = Vec::with_capacity(rows * cols);
        let mut im = Vec::with_capacity(rows * cols);
        for a in 0..rows {
            for i in 0..cols {
                let z = f(a, i);
                re.push(z.re);
                im.push(z.im);
            }
        }
        Self { rows, cols, re, im }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> C<T> {
        let k = row * self.cols + col;
        C::new(self.re[k], self.im[k])
    }

    fn row(&self, a: usize) -> (&[T], &[T]) {
        let s = a * self.cols;
        (&self.re[s..s + self.cols], &self.im[s..s + self.cols])
    }

    /// Mean of `|A_ai|^2` over all entries.
    pub fn mean_abs_sqr(&self) -> f64 {
        let s: f64 = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| (*r * *r + *i * *i).as_f64())
            .sum();
        s / (self.rows * self.cols) as f64
    }

    /// `A x`.
    pub fn matvec(&self, x: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        let xs = Split::of(x);
        (0..self.rows)
            .map(|a| {
                let (ar, ai) = self.row(a);
                row_dot(ar, ai, &xs.re, &xs.im)
            })
            .collect()
    }

    /// `A^H v`.
    pub fn adjoint_matvec(&self, v: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(v.len(), self.rows, "adjoint_matvec dimension");
        let mut out = Split::zeros(self.cols);
        for (a, g) in v.iter().enumerate() {
            let (ar, ai) = self.row(a);
            row_axpy_conj(ar, ai, *g, &mut out.re, &mut out.im);
        }
        out.join()
    }

    /// One sweep over the rows computing `A^H f(A x)`, where `f(a, (A x)_a)`
    /// is applied row by row. Each row is read once while it is hot in cache.
    pub fn fused(&self, x: &[C<T>], mut f: impl FnMut(usize, C<T>) -> C<T>) -> Vec<C<T>> {
        assert_eq!(x.len(), self.cols, "fused dimension");
        let xs = Split::of(x);
        let mut out = Split::zeros(self.cols);
        for a in 0..self.rows {
            let (ar, ai) = self.row(a);
            let z = row_dot(ar, ai, &xs.re, &xs.im);
            let g = f(a, z);
            if g.re != T::zero() || g.im != T::zero() {
                row_axpy_conj(ar, ai, g, &mut out.re, &mut out.im);
            }
        }
        out.join()
    }
}
