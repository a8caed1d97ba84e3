//! Sparse row-compressed operators on a lattice box.

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;

use crate::lattice::{sup_norm, LatticeBox};

/// Scalar types an operator may carry (`f64` or `Complex64`).
pub trait Scalar: ComplexField<RealField = f64> + Copy + Send + Sync {}

impl<T: ComplexField<RealField = f64> + Copy + Send + Sync> Scalar for T {}

/// Matrix indexed by the sites of a [`LatticeBox`], stored as sorted sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeMatrix<T> {
    lattice: LatticeBox,
    rows: Vec<Vec<(usize, T)>>,
}

/// Real symmetric operator (H, Δ, V and real quantizations).
pub type SymmetricOperator = LatticeMatrix<f64>;
/// Complex operator; Hermitian when produced by symmetrized quantization.
pub type ComplexOperator = LatticeMatrix<Complex64>;

impl<T: Scalar> LatticeMatrix<T> {
    pub fn zeros(lattice: LatticeBox) -> Self {
        let n = lattice.len();
        LatticeMatrix {
            lattice,
            rows: vec![Vec::new(); n],
        }
    }

    pub fn identity(lattice: LatticeBox) -> Self {
        let n = lattice.len();
        LatticeMatrix {
            lattice,
            rows: (0..n).map(|i| vec![(i, T::one())]).collect(),
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(lattice: LatticeBox, triplets: Vec<(usize, usize, T)>) -> Self {
        let n = lattice.len();
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside a {n}-site box");
            rows[i].push((j, v));
        }
        for row in &mut rows {
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, T)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            merged.retain(|e| e.1 != T::zero());
            *row = merged;
        }
        LatticeMatrix { lattice, rows }
    }

    pub fn from_dense(lattice: LatticeBox, dense: &DMatrix<T>) -> Self {
        let n = lattice.len();
        assert_eq!(dense.nrows(), n);
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter_map(|j| {
                        let v = dense[(i, j)];
                        (v != T::zero()).then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        LatticeMatrix { lattice, rows }
    }

    pub fn lattice(&self) -> &LatticeBox {
        &self.lattice
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, T)] {
        &self.rows[i]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let row = &self.rows[i];
        match row.binary_search_by_key(&j, |e| e.0) {
            Ok(p) => row[p].1,
            Err(_) => T::zero(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&(j, v)| (i, j, v)))
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|m - n|_∞` over stored entries.
    pub fn bandwidth(&self) -> u64 {
        self.iter()
            .map(|(i, j, _)| {
                let (a, b) = (self.lattice.site(i), self.lattice.site(j));
                let diff: Vec<i64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
                sup_norm(&diff)
            })
            .max()
            .unwrap_or(0)
    }

    /// Largest `|i - j|` in index space.
    pub fn index_bandwidth(&self) -> usize {
        self.iter().map(|(i, j, _)| i.abs_diff(j)).max().unwrap_or(0)
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().map(|(_, _, v)| v.modulus()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|(_, _, v)| v.is_finite())
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (i, j, v) in self.iter() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let t = self.iter().map(|(i, j, v)| (j, i, v.conjugate())).collect();
        LatticeMatrix::from_triplets(self.lattice.clone(), t)
    }

    /// `entries(m, n) == conj(entries(n, m))` bit for bit.
    pub fn is_exactly_hermitian(&self) -> bool {
        self.iter().all(|(i, j, v)| self.get(j, i).conjugate() == v)
    }

    /// `(A + A*) / 2`, which is exactly Hermitian in floating point.
    pub fn hermitian_part(&self) -> Self {
        let half = T::from_real(0.5);
        let mut t: Vec<(usize, usize, T)> = Vec::with_capacity(2 * self.nnz());
        for (i, j, v) in self.iter() {
            if i <= j {
                let w = self.get(j, i);
                let upper = (v + w.conjugate()) * half;
                t.push((i, j, upper));
                if i != j {
                    t.push((j, i, upper.conjugate()));
                }
            } else if self.get(j, i) == T::zero() {
                let upper = v.conjugate() * half;
                t.push((j, i, upper));
                t.push((i, j, upper.conjugate()));
            }
        }
        LatticeMatrix::from_triplets(self.lattice.clone(), t)
    }

    pub fn scale(&self, c: T) -> Self {
        let mut out = self.clone();
        for row in &mut out.rows {
            for e in row.iter_mut() {
                e.1 *= c;
            }
        }
        out.rows.iter_mut().for_each(|r| r.retain(|e| e.1 != T::zero()));
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.lattice, other.lattice, "operators live on different boxes");
        let t = self.iter().chain(other.iter()).collect();
        LatticeMatrix::from_triplets(self.lattice.clone(), t)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-T::one()))
    }

    /// Sparse product. Each entry sums its products in sorted order, so it
    /// depends only on the multiset of products (`AB` and `BA` of commuting
    /// banded Toeplitz pieces agree bitwise).
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.lattice, other.lattice, "operators live on different boxes");
        let n = self.dim();
        let mut terms: Vec<Vec<T>> = vec![Vec::new(); n];
        let mut touched: Vec<usize> = Vec::new();
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            for &(k, a) in &self.rows[i] {
                for &(j, b) in &other.rows[k] {
                    if terms[j].is_empty() {
                        touched.push(j);
                    }
                    terms[j].push(a * b);
                }
            }
            touched.sort_unstable();
            let mut row = Vec::with_capacity(touched.len());
            for &j in &touched {
                let t = &mut terms[j];
                t.sort_unstable_by(|x, y| {
                    x.real()
                        .total_cmp(&y.real())
                        .then(x.imaginary().total_cmp(&y.imaginary()))
                });
                let sum = t.iter().fold(T::zero(), |acc, &v| acc + v);
                if sum != T::zero() {
                    row.push((j, sum));
                }
                t.clear();
            }
            touched.clear();
            rows.push(row);
        }
        LatticeMatrix {
            lattice: self.lattice.clone(),
            rows,
        }
    }

    /// `AB - BA`.
    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).sub(&other.matmul(self))
    }

    /// Restriction to a sub-box (rows and columns of sites inside `inner`).
    pub fn restrict(&self, inner: &LatticeBox) -> Self {
        assert!(self.lattice.contains_box(inner), "restriction box not contained");
        let map: Vec<Option<usize>> = self
            .lattice
            .sites()
            .map(|s| inner.index_of(&s))
            .collect();
        let t = self
            .iter()
            .filter_map(|(i, j, v)| Some((map[i]?, map[j]?, v)))
            .collect();
        LatticeMatrix::from_triplets(inner.clone(), t)
    }

    /// `A * Q` for a dense real matrix `Q` with `dim()` rows.
    pub fn mul_real_dense(&self, q: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        assert_eq!(q.nrows(), self.dim());
        let (n, p) = (self.dim(), q.ncols());
        let mut re = DMatrix::zeros(n, p);
        let mut im = DMatrix::zeros(n, p);
        for c in 0..p {
            let col = q.column(c);
            for (i, row) in self.rows.iter().enumerate() {
                let mut s_re = 0.0;
                let mut s_im = 0.0;
                for &(j, v) in row {
                    s_re += v.real() * col[j];
                    s_im += v.imaginary() * col[j];
                }
                re[(i, c)] = s_re;
                im[(i, c)] = s_im;
            }
        }
        (re, im)
    }
}

impl LatticeMatrix<f64> {
    pub fn to_complex(&self) -> ComplexOperator {
        LatticeMatrix {
            lattice: self.lattice.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|&(j, v)| (j, Complex64::new(v, 0.0))).collect())
                .collect(),
        }
    }
}

impl LatticeMatrix<Complex64> {
    pub fn is_real(&self) -> bool {
        self.iter().all(|(_, _, v)| v.im == 0.0)
    }

    pub fn real_part(&self) -> SymmetricOperator {
        let t = self.iter().map(|(i, j, v)| (i, j, v.re)).collect();
        LatticeMatrix::from_triplets(self.lattice.clone(), t)
    }

    /// Polynomial `Σ c_j A^j` by Horner's rule in sparse arithmetic.
    pub fn polynomial(&self, coefficients: &[f64]) -> Self {
        let id = LatticeMatrix::identity(self.lattice.clone());
        let mut acc = LatticeMatrix::zeros(self.lattice.clone());
        for &c in coefficients.iter().rev() {
            acc = acc.matmul(self).add(&id.scale(Complex64::new(c, 0.0)));
        }
        acc
    }
}
