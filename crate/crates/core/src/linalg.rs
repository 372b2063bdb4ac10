//! Small dense vectors and matrices, and the regularized mass-matrix solve.

use std::ops::{Deref, DerefMut, Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Determinant magnitude below which a (regularized) mass matrix is rejected.
pub const SINGULAR_DET: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Vector<T>(pub Vec<T>);

impl<T: Real> Vector<T> {
    pub fn zeros(n: usize) -> Self {
        Vector(vec![T::zero(); n])
    }

    pub fn from_f64(v: &[f64]) -> Self {
        Vector(v.iter().map(|&x| T::from_f64(x)).collect())
    }

    pub fn dot(&self, other: &Self) -> T {
        self.iter().zip(other.iter()).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
    }

    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.iter().map(|x| x.value()).collect()
    }
}

impl<T> Deref for Vector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for Vector<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

impl<T> From<Vec<T>> for Vector<T> {
    fn from(v: Vec<T>) -> Self {
        Vector(v)
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[&[T]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Matrix { rows: r, cols: c, data: rows.iter().flat_map(|row| row.iter().copied()).collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrized(&self) -> Self {
        assert_eq!(self.rows, self.cols);
        let half = T::from_f64(0.5);
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in 0..i {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    pub fn mul_vec(&self, v: &[T]) -> Vector<T> {
        assert_eq!(self.cols, v.len());
        Vector(
            (0..self.rows)
                .map(|i| {
                    self.data[i * self.cols..(i + 1) * self.cols]
                        .iter()
                        .zip(v)
                        .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
                })
                .collect(),
        )
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Solves `(M + ridge·I) x = b`.
///
/// Dimensions 1 and 2 use the closed form; larger systems use Gaussian
/// elimination with partial pivoting. The determinant of the regularized
/// matrix is checked against [`SINGULAR_DET`] in every branch.
pub fn solve_spd<T: Real>(m: &Matrix<T>, b: &[T], ridge: T) -> Result<Vector<T>> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::Dimension { what: "mass matrix columns", expected: n, got: m.cols() });
    }
    if b.len() != n {
        return Err(Error::Dimension { what: "right-hand side", expected: n, got: b.len() });
    }
    let a = |i: usize, j: usize| if i == j { m[(i, j)] + ridge } else { m[(i, j)] };
    match n {
        1 => {
            let det = a(0, 0);
            check_det(det)?;
            Ok(Vector(vec![b[0] / det]))
        }
        2 => {
            let (a00, a01, a10, a11) = (a(0, 0), a(0, 1), a(1, 0), a(1, 1));
            let det = a00 * a11 - a01 * a10;
            check_det(det)?;
            Ok(Vector(vec![(a11 * b[0] - a01 * b[1]) / det, (a00 * b[1] - a10 * b[0]) / det]))
        }
        _ => {
            let mut w: Vec<Vec<T>> = (0..n)
                .map(|i| {
                    let mut row: Vec<T> = (0..n).map(|j| a(i, j)).collect();
                    row.push(b[i]);
                    row
                })
                .collect();
            let mut det = T::one();
            for col in 0..n {
                let pivot = (col..n)
                    .max_by(|&r, &s| w[r][col].value().abs().total_cmp(&w[s][col].value().abs()))
                    .unwrap();
                if pivot != col {
                    w.swap(pivot, col);
                    det = -det;
                }
                let p = w[col][col];
                det *= p;
                if p.value() == 0.0 {
                    break;
                }
                for r in col + 1..n {
                    let f = w[r][col] / p;
                    for c in col..=n {
                        let v = w[col][c];
                        w[r][c] -= f * v;
                    }
                }
            }
            check_det(det)?;
            let mut x = vec![T::zero(); n];
            for i in (0..n).rev() {
                let mut s = w[i][n];
                for j in i + 1..n {
                    s -= w[i][j] * x[j];
                }
                x[i] = s / w[i][i];
            }
            Ok(Vector(x))
        }
    }
}

fn check_det<T: Real>(det: T) -> Result<()> {
    let d = det.value();
    if !d.is_finite() {
        return Err(Error::NumericOverflow("mass matrix determinant".into()));
    }
    if d.abs() < SINGULAR_DET {
        return Err(Error::SingularMassMatrix { det: d });
    }
    Ok(())
}
