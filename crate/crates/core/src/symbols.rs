//! Toroidal symbols `σ(x, n)` on `𝕋^d × ℤ^d`, their quantization to lattice
//! operators and the finite-difference symbol calculus.
//!
//! Matrix elements follow `B(m, n) = σ̂_n(m - n)`, the `(m - n)`-th Fourier
//! coefficient of `σ(·, n)`, so that `σ(x, n) = Σ_m B(m, n) e^{i(m-n)·x}`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::fit::{log_log_fit, LinearFit};
use crate::lattice::{japanese_bracket, sup_norm, LatticeBox, Site};
use crate::matrix::ComplexOperator;
use crate::parallel::Execution;

pub const DEFAULT_CUTOFF: f64 = 1e-12;

/// Default grid points per axis: 256 in one dimension, 32 otherwise.
pub fn default_grid_points(dim: usize) -> usize {
    if dim <= 1 {
        256
    } else {
        32
    }
}

/// Uniform grid `x_j = 2πj/N` on each axis of `𝕋^d`, with cached FFT plans.
#[derive(Clone)]
pub struct TorusGrid {
    dim: usize,
    points: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("dim", &self.dim)
            .field("points", &self.points)
            .finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.points == other.points
    }
}

impl TorusGrid {
    pub fn new(dim: usize, points: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("d", "dimension must be positive"));
        }
        if points < 4 || !points.is_power_of_two() {
            return Err(Error::config("x_grid", format!("{points} is not a power of two >= 4")));
        }
        let mut planner = FftPlanner::new();
        Ok(TorusGrid {
            dim,
            points,
            forward: planner.plan_fft_forward(points),
            inverse: planner.plan_fft_inverse(points),
        })
    }

    pub fn with_default_points(dim: usize) -> Result<Self> {
        TorusGrid::new(dim, default_grid_points(dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Total number of grid nodes, `N^d`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinates of node `j` (first axis most significant).
    pub fn node(&self, mut j: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for a in (0..self.dim).rev() {
            x[a] = 2.0 * PI * (j % self.points) as f64 / self.points as f64;
            j /= self.points;
        }
        x
    }

    /// Frequency multi-index stored at flat coefficient position `j`.
    pub fn frequency(&self, mut j: usize) -> Vec<i64> {
        let n = self.points;
        let mut k = vec![0i64; self.dim];
        for a in (0..self.dim).rev() {
            let idx = j % n;
            k[a] = if idx < n / 2 { idx as i64 } else { idx as i64 - n as i64 };
            j /= n;
        }
        k
    }

    /// Flat coefficient position of frequency `k`, if representable.
    pub fn frequency_slot(&self, k: &[i64]) -> Option<usize> {
        let half = (self.points / 2) as i64;
        let mut j = 0usize;
        for &ka in k {
            if ka < -half || ka >= half {
                return None;
            }
            let idx = if ka >= 0 { ka } else { ka + self.points as i64 };
            j = j * self.points + idx as usize;
        }
        Some(j)
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.points;
        let plan = if inverse { &self.inverse } else { &self.forward };
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for a in 0..self.dim {
            let stride = n.pow((self.dim - 1 - a) as u32);
            let block = stride * n;
            for start in (0..data.len()).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for (t, v) in line.iter_mut().enumerate() {
                        *v = data[base + t * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (t, v) in line.iter().enumerate() {
                        data[base + t * stride] = *v;
                    }
                }
            }
        }
    }

    /// Fourier coefficients `(2π)^{-d} ∫ σ e^{-ik·x} dx` by the trapezoidal rule.
    pub fn coefficients(&self, samples: &[Complex64]) -> Vec<Complex64> {
        let mut c = samples.to_vec();
        self.transform(&mut c, false);
        let scale = 1.0 / self.len() as f64;
        c.iter_mut().for_each(|v| *v *= scale);
        if samples.iter().all(|z| z.im == 0.0) {
            // real input: make c_{-k} = conj(c_k) hold exactly
            for j in 0..c.len() {
                let mj = self.mirror_slot(j);
                if mj > j {
                    let v = (c[j] + c[mj].conj()) * 0.5;
                    c[j] = v;
                    c[mj] = v.conj();
                } else if mj == j {
                    c[j].im = 0.0;
                }
            }
        }
        c
    }

    /// Slot of frequency `-k` (modulo the grid) for the frequency stored at `j`.
    pub fn mirror_slot(&self, mut j: usize) -> usize {
        let n = self.points;
        let mut out = 0usize;
        let mut weight = 1usize;
        for _ in 0..self.dim {
            let idx = j % n;
            out += ((n - idx) % n) * weight;
            weight *= n;
            j /= n;
        }
        out
    }

    /// Whether `c_{-k} = conj(c_k)` holds exactly, i.e. the synthesis is real.
    pub fn is_conjugate_symmetric(&self, coefficients: &[Complex64]) -> bool {
        (0..coefficients.len()).all(|j| coefficients[self.mirror_slot(j)] == coefficients[j].conj())
    }

    /// Samples `Σ_k c_k e^{ik·x}` of a coefficient array.
    pub fn synthesize(&self, coefficients: &[Complex64]) -> Vec<Complex64> {
        let mut s = coefficients.to_vec();
        self.transform(&mut s, true);
        s
    }

    /// Largest coefficient with some `|k_a| > N/4`: a resolution diagnostic.
    pub fn tail(&self, coefficients: &[Complex64]) -> f64 {
        let quarter = (self.points / 4) as i64;
        coefficients
            .iter()
            .enumerate()
            .filter(|(j, _)| self.frequency(*j).iter().any(|k| k.abs() > quarter))
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max)
    }

    /// Normalized torus integral `(2π)^{-d} ∫ g(σ(x)) dx` of one column.
    pub fn mean<F: Fn(Complex64) -> f64>(&self, column: &[Complex64], g: F) -> f64 {
        column.iter().map(|&z| g(z)).sum::<f64>() / self.len() as f64
    }
}

/// Samples of `σ(x_j, n)` on a torus grid times a lattice box of `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToroidalSymbol {
    grid: TorusGrid,
    n_box: LatticeBox,
    samples: Vec<Complex64>,
    x_independent: bool,
    n_independent: bool,
    bandwidth_hint: u64,
}

impl ToroidalSymbol {
    /// Assembles a symbol from column-major samples (`grid.len()` values per site).
    pub fn from_samples(grid: TorusGrid, n_box: LatticeBox, samples: Vec<Complex64>) -> Result<Self> {
        if grid.dim() != n_box.dim() {
            return Err(Error::IncompatibleSymbols("grid and box dimensions differ".into()));
        }
        if samples.len() != grid.len() * n_box.len() {
            return Err(Error::IncompatibleSymbols(format!(
                "expected {} samples, got {}",
                grid.len() * n_box.len(),
                samples.len()
            )));
        }
        if samples.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite symbol sample".into()));
        }
        let g = grid.len();
        let first = &samples[..g];
        let n_independent = samples.chunks(g).all(|c| c == first);
        let x_independent = samples.chunks(g).all(|c| c.iter().all(|z| *z == c[0]));
        let mut sym = ToroidalSymbol {
            grid,
            n_box,
            samples,
            x_independent,
            n_independent,
            bandwidth_hint: 0,
        };
        sym.bandwidth_hint = sym.measured_bandwidth();
        Ok(sym)
    }

    pub fn from_fn<F>(grid: TorusGrid, n_box: LatticeBox, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &[i64]) -> Complex64,
    {
        let nodes: Vec<Vec<f64>> = (0..grid.len()).map(|j| grid.node(j)).collect();
        let mut samples = Vec::with_capacity(grid.len() * n_box.len());
        for n in n_box.sites() {
            samples.extend(nodes.iter().map(|x| f(x, &n)));
        }
        ToroidalSymbol::from_samples(grid, n_box, samples)
    }

    pub fn from_real_fn<F>(grid: TorusGrid, n_box: LatticeBox, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &[i64]) -> f64,
    {
        ToroidalSymbol::from_fn(grid, n_box, |x, n| Complex64::new(f(x, n), 0.0))
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn n_box(&self) -> &LatticeBox {
        &self.n_box
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn x_independent(&self) -> bool {
        self.x_independent
    }

    pub fn n_independent(&self) -> bool {
        self.n_independent
    }

    /// Largest `|k|_∞` with a coefficient above [`DEFAULT_CUTOFF`] (relative).
    pub fn bandwidth_hint(&self) -> u64 {
        self.bandwidth_hint
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    /// Samples of `σ(·, n)` for the site with box index `idx`.
    pub fn column(&self, idx: usize) -> &[Complex64] {
        let g = self.grid.len();
        &self.samples[idx * g..(idx + 1) * g]
    }

    pub fn column_at(&self, site: &[i64]) -> Option<&[Complex64]> {
        self.n_box.index_of(site).map(|i| self.column(i))
    }

    pub fn is_real(&self) -> bool {
        self.samples.iter().all(|z| z.im == 0.0)
    }

    /// `sup_{x,n} |σ|`.
    pub fn sup(&self) -> f64 {
        self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `sup_x |σ(x, n)|` for every site of the box, in box order.
    pub fn sup_profile(&self) -> Vec<f64> {
        (0..self.n_box.len())
            .map(|i| self.column(i).iter().map(|z| z.norm()).fold(0.0, f64::max))
            .collect()
    }

    fn measured_bandwidth(&self) -> u64 {
        let scale = self.sup().max(1.0);
        let mut seen = vec![false; self.grid.len()];
        let mut columns: Vec<usize> = vec![0];
        if !self.n_independent {
            columns = (0..self.n_box.len()).collect();
        }
        if self.x_independent {
            return 0;
        }
        for i in columns {
            let c = self.grid.coefficients(self.column(i));
            for (j, v) in c.iter().enumerate() {
                if v.norm() > DEFAULT_CUTOFF * scale {
                    seen[j] = true;
                }
            }
        }
        seen.iter()
            .enumerate()
            .filter(|(_, s)| **s)
            .map(|(j, _)| sup_norm(&self.grid.frequency(j)))
            .max()
            .unwrap_or(0)
    }

    /// Restriction to a sub-box of `n` values.
    pub fn restrict(&self, inner: &LatticeBox) -> Result<Self> {
        if !self.n_box.contains_box(inner) {
            return Err(Error::NRange("restriction box exceeds the symbol box".into()));
        }
        let g = self.grid.len();
        let mut samples = Vec::with_capacity(g * inner.len());
        for n in inner.sites() {
            let i = self.n_box.index_of(&n).expect("contained");
            samples.extend_from_slice(&self.samples[i * g..(i + 1) * g]);
        }
        ToroidalSymbol::from_samples(self.grid.clone(), inner.clone(), samples)
    }

    /// Pointwise map of the samples.
    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Result<Self> {
        ToroidalSymbol::from_samples(
            self.grid.clone(),
            self.n_box.clone(),
            self.samples.iter().map(|&z| f(z)).collect(),
        )
    }

    /// Pointwise combination on the common `n` box.
    pub fn zip_with<F>(&self, other: &Self, f: F) -> Result<Self>
    where
        F: Fn(Complex64, Complex64) -> Complex64,
    {
        if self.grid != other.grid {
            return Err(Error::IncompatibleSymbols("different x-grids".into()));
        }
        let common = self
            .n_box
            .intersect(&other.n_box)
            .map_err(|_| Error::IncompatibleSymbols("disjoint n boxes".into()))?;
        let a = self.restrict(&common)?;
        let b = other.restrict(&common)?;
        let samples = a.samples.iter().zip(&b.samples).map(|(&u, &v)| f(u, v)).collect();
        ToroidalSymbol::from_samples(self.grid.clone(), common, samples)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |u, v| u - v)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |u, v| u * v)
    }

    /// Largest `|σ - τ|` over the common box.
    pub fn max_difference(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.sup())
    }

    fn zeros_like(&self, n_box: LatticeBox) -> Result<Self> {
        let len = self.grid.len() * n_box.len();
        ToroidalSymbol::from_samples(self.grid.clone(), n_box, vec![Complex64::new(0.0, 0.0); len])
    }

    /// Coefficient-wise multiplier in frequency space, applied per column.
    /// `keeps_real`: the multiplier maps real symbols to real symbols.
    fn fourier_multiplier<M>(&self, multiplier: M, keeps_real: bool) -> Result<Self>
    where
        M: Fn(&[i64]) -> Complex64,
    {
        let g = self.grid.len();
        let weights: Vec<Complex64> = (0..g).map(|j| multiplier(&self.grid.frequency(j))).collect();
        let scale = self.sup().max(1.0);
        let real = keeps_real && self.is_real();
        let mut samples = Vec::with_capacity(self.samples.len());
        for i in 0..self.n_box.len() {
            let mut c = self.grid.coefficients(self.column(i));
            let tail = self.grid.tail(&c);
            if tail > DEFAULT_CUTOFF * scale {
                return Err(Error::UnderResolvedSymbol {
                    tail,
                    cutoff: DEFAULT_CUTOFF * scale,
                });
            }
            c.iter_mut().zip(&weights).for_each(|(v, w)| *v *= w);
            let mut s = self.grid.synthesize(&c);
            if real {
                s.iter_mut().for_each(|z| z.im = 0.0);
            }
            samples.extend(s);
        }
        ToroidalSymbol::from_samples(self.grid.clone(), self.n_box.clone(), samples)
    }
}

/// Forward differences `Δ_n^α σ`; the box loses `α_a` sites at the top of axis `a`.
pub fn difference_op(sigma: &ToroidalSymbol, alpha: &[u32]) -> Result<ToroidalSymbol> {
    if alpha.len() != sigma.dim() {
        return Err(Error::IncompatibleSymbols("multi-index has the wrong length".into()));
    }
    let mut current = sigma.clone();
    for (axis, &order) in alpha.iter().enumerate() {
        for _ in 0..order {
            current = forward_difference(&current, axis)?;
        }
    }
    Ok(current)
}

fn forward_difference(sigma: &ToroidalSymbol, axis: usize) -> Result<ToroidalSymbol> {
    let b = sigma.n_box();
    let mut hi = b.upper().to_vec();
    hi[axis] -= 1;
    let out_box = LatticeBox::from_bounds(b.lower().to_vec(), hi)
        .map_err(|_| Error::NRange("box exhausted by differences".into()))?;
    let g = sigma.grid.len();
    let mut samples = Vec::with_capacity(g * out_box.len());
    for n in out_box.sites() {
        let here = sigma.column_at(&n).expect("inside");
        let mut up = n.clone();
        up[axis] += 1;
        let next = sigma.column_at(&up).expect("inside");
        samples.extend(next.iter().zip(here).map(|(u, v)| u - v));
    }
    ToroidalSymbol::from_samples(sigma.grid.clone(), out_box, samples)
}

/// Spectral derivative `D_x^β σ`, multiplying coefficient `k` by `Π (i k_a)^{β_a}`.
pub fn x_derivative(sigma: &ToroidalSymbol, beta: &[u32]) -> Result<ToroidalSymbol> {
    if beta.len() != sigma.dim() {
        return Err(Error::IncompatibleSymbols("multi-index has the wrong length".into()));
    }
    if beta.iter().all(|&b| b == 0) {
        return Ok(sigma.clone());
    }
    let nyquist = -((sigma.grid.points() / 2) as i64);
    sigma.fourier_multiplier(|k| {
        if k.iter().zip(beta).any(|(&ka, &b)| ka == nyquist && b % 2 == 1) {
            return Complex64::new(0.0, 0.0);
        }
        k.iter().zip(beta).fold(Complex64::new(1.0, 0.0), |acc, (&ka, &b)| {
            acc * Complex64::new(0.0, ka as f64).powu(b)
        })
    }, true)
}

/// Difference-calculus derivative `D_x^{(α)}`: coefficient `k` is multiplied
/// by the falling factorials `Π k_a (k_a - 1) ⋯ (k_a - α_a + 1)`.
pub fn falling_derivative(sigma: &ToroidalSymbol, alpha: &[u32]) -> Result<ToroidalSymbol> {
    if alpha.len() != sigma.dim() {
        return Err(Error::IncompatibleSymbols("multi-index has the wrong length".into()));
    }
    if alpha.iter().all(|&a| a == 0) {
        return Ok(sigma.clone());
    }
    sigma.fourier_multiplier(|k| {
        let w: f64 = k
            .iter()
            .zip(alpha)
            .map(|(&ka, &a)| (0..a as i64).map(|j| (ka - j) as f64).product::<f64>())
            .product();
        Complex64::new(w, 0.0)
    }, false)
}

/// Multi-indices of `dim` components with `|α| <= order`, ascending in `|α|`.
pub fn multi_indices(dim: usize, order: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=order {
        let mut current = vec![0u32; dim];
        fill_indices(&mut out, &mut current, 0, total);
    }
    out
}

fn fill_indices(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, axis: usize, remaining: u32) {
    if axis + 1 == current.len() {
        current[axis] = remaining;
        out.push(current.clone());
        return;
    }
    for v in (0..=remaining).rev() {
        current[axis] = v;
        fill_indices(out, current, axis + 1, remaining - v);
    }
}

fn factorial(alpha: &[u32]) -> f64 {
    alpha
        .iter()
        .map(|&a| (1..=a).map(f64::from).product::<f64>())
        .product()
}

/// Truncated composition `Σ_{|α| <= M} (1/α!) Δ_n^α a · D_x^{(α)} b`.
pub fn compose(a: &ToroidalSymbol, b: &ToroidalSymbol, order: u32) -> Result<ToroidalSymbol> {
    if a.grid != b.grid {
        return Err(Error::IncompatibleSymbols("different x-grids".into()));
    }
    let mut hi = a.n_box.upper().to_vec();
    hi.iter_mut().for_each(|h| *h -= order as i64);
    let target = LatticeBox::from_bounds(a.n_box.lower().to_vec(), hi)
        .and_then(|t| t.intersect(b.n_box()))
        .map_err(|_| Error::IncompatibleSymbols("n boxes too small for the requested order".into()))?;
    let mut acc = a.zeros_like(target.clone())?;
    for alpha in multi_indices(a.dim(), order) {
        let da = difference_op(a, &alpha)?.restrict(&target)?;
        let db = falling_derivative(b, &alpha)?.restrict(&target)?;
        let w = 1.0 / factorial(&alpha);
        acc = acc.zip_with(&da.mul(&db)?, |s, t| s + t * w)?;
    }
    Ok(acc)
}

/// Output of [`quantize`]: the Hermitian operator used downstream plus the raw
/// quantization and its departure from self-adjointness.
#[derive(Debug, Clone)]
pub struct Quantization {
    pub operator: ComplexOperator,
    pub raw: ComplexOperator,
    pub symmetry_defect: f64,
}

/// Raw quantization `B(m, n) = σ̂_n(m - n)` on `lattice`, coefficients below
/// `cutoff` dropped.
pub fn quantize_raw(
    sigma: &ToroidalSymbol,
    lattice: &LatticeBox,
    cutoff: f64,
    exec: Execution,
) -> Result<ComplexOperator> {
    if !sigma.n_box.contains_box(lattice) {
        return Err(Error::NRange("symbol box does not cover the operator box".into()));
    }
    if !(cutoff >= 0.0) {
        return Err(Error::config("cutoff", "must be nonnegative"));
    }
    let grid = &sigma.grid;
    let tolerance = cutoff.max(DEFAULT_CUTOFF) * sigma.sup().max(1.0);
    let sites: Vec<Site> = lattice.sites().collect();
    let shared = sigma.n_independent.then(|| grid.coefficients(sigma.column(0)));
    let columns = exec.try_map(sites.len(), |col| -> Result<Vec<(usize, usize, Complex64)>> {
        let n = &sites[col];
        let coefficients = match &shared {
            Some(c) => c.clone(),
            None => grid.coefficients(sigma.column_at(n).expect("covered")),
        };
        let tail = grid.tail(&coefficients);
        if tail > tolerance {
            return Err(Error::UnderResolvedSymbol { tail, cutoff: tolerance });
        }
        let mut entries = Vec::new();
        for (j, c) in coefficients.iter().enumerate() {
            if c.norm() < cutoff || *c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let chop = |v: f64| if v.abs() < cutoff { 0.0 } else { v };
            let c = &Complex64::new(chop(c.re), chop(c.im));
            let m: Site = n.iter().zip(grid.frequency(j)).map(|(a, k)| a + k).collect();
            if let Some(row) = lattice.index_of(&m) {
                entries.push((row, col, *c));
            }
        }
        Ok(entries)
    })?;
    Ok(ComplexOperator::from_triplets(
        lattice.clone(),
        columns.into_iter().flatten().collect(),
    ))
}

/// Quantization followed by Hermitian symmetrization `(B + B*)/2`.
pub fn quantize(sigma: &ToroidalSymbol, lattice: &LatticeBox, cutoff: f64, exec: Execution) -> Result<Quantization> {
    let raw = quantize_raw(sigma, lattice, cutoff, exec)?;
    let symmetry_defect = symmetry_defect(&raw, 0);
    let operator = if raw.is_exactly_hermitian() {
        raw.clone()
    } else {
        raw.hermitian_part()
    };
    Ok(Quantization {
        operator,
        raw,
        symmetry_defect,
    })
}

/// Symbol of a matrix on its own box: `σ(x, n) = Σ_m B(m, n) e^{i(m-n)·x}`.
pub fn dequantize(b: &ComplexOperator, grid: &TorusGrid) -> Result<ToroidalSymbol> {
    let lattice = b.lattice();
    if grid.dim() != lattice.dim() {
        return Err(Error::IncompatibleSymbols("grid and box dimensions differ".into()));
    }
    let g = grid.len();
    let mut coefficients = vec![Complex64::new(0.0, 0.0); g * lattice.len()];
    for (i, j, v) in b.iter() {
        let m = lattice.site(i);
        let n = lattice.site(j);
        let k: Vec<i64> = m.iter().zip(&n).map(|(a, c)| a - c).collect();
        let slot = grid.frequency_slot(&k).ok_or_else(|| Error::UnderResolvedSymbol {
            tail: v.norm(),
            cutoff: 0.0,
        })?;
        coefficients[j * g + slot] += v;
    }
    let mut samples = Vec::with_capacity(g * lattice.len());
    for col in coefficients.chunks(g) {
        let mut s = grid.synthesize(col);
        if grid.is_conjugate_symmetric(col) {
            s.iter_mut().for_each(|z| z.im = 0.0);
        }
        samples.extend(s);
    }
    ToroidalSymbol::from_samples(grid.clone(), lattice.clone(), samples)
}

/// `max |B(m, n) - conj B(n, m)|` over entries whose sites both lie at depth
/// `>= margin` in the box.
pub fn symmetry_defect(raw: &ComplexOperator, margin: i64) -> f64 {
    let lattice = raw.lattice();
    let deep: Vec<bool> = lattice.sites().map(|s| lattice.depth(&s) >= margin).collect();
    raw.iter()
        .filter(|&(i, j, _)| deep[i] && deep[j])
        .map(|(i, j, v)| (v - raw.get(j, i).conj()).norm())
        .fold(0.0, f64::max)
}

/// Per-column symmetry defect `max_m |B(m, n) - conj B(n, m)|`, in box order.
pub fn symmetry_defect_profile(raw: &ComplexOperator) -> Vec<f64> {
    let mut out = vec![0.0f64; raw.dim()];
    for (i, j, v) in raw.iter() {
        let d = (v - raw.get(j, i).conj()).norm();
        out[j] = out[j].max(d);
    }
    // entries present only above the diagonal mirror
    let adj = raw.adjoint();
    for (i, j, v) in adj.iter() {
        if raw.get(i, j) == Complex64::new(0.0, 0.0) {
            out[j] = out[j].max(v.norm());
        }
    }
    out
}

/// Maximum of `values` over each sup-norm shell `|n|_∞ = r` of the box.
pub fn shell_envelope(lattice: &LatticeBox, values: &[f64]) -> BTreeMap<u64, f64> {
    let mut env = BTreeMap::new();
    for (site, &v) in lattice.sites().zip(values) {
        let e = env.entry(sup_norm(&site)).or_insert(0.0f64);
        *e = e.max(v);
    }
    env
}

/// Log-log fit of a shell envelope against `⟨r⟩` for `r_min <= r <= r_max`.
pub fn envelope_fit(env: &BTreeMap<u64, f64>, r_min: u64, r_max: u64) -> Option<LinearFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = env
        .range(r_min..=r_max)
        .map(|(&r, &v)| (japanese_bracket(&[r as i64]), v))
        .unzip();
    log_log_fit(&xs, &ys)
}

/// Decay fit of `sup_x |σ(x, n)|` over shells `r_min <= |n|_∞ <= r_max`.
pub fn decay_fit(sigma: &ToroidalSymbol, r_min: u64, r_max: u64) -> Option<LinearFit> {
    envelope_fit(&shell_envelope(sigma.n_box(), &sigma.sup_profile()), r_min, r_max)
}

/// `a^k` pointwise and the error symbol `E_k = σ_{A^k} - a^k`.
#[derive(Debug, Clone)]
pub struct PowerExpansion {
    pub main: ToroidalSymbol,
    /// Supported on the sites whose `A^k` column is unaffected by truncation.
    pub error: ToroidalSymbol,
    /// Fit of `sup_x |E_k|` against `⟨n⟩` over the interior shells `>= 4`.
    pub decay: Option<LinearFit>,
}

pub fn power_symbol_expansion(a: &ToroidalSymbol, k: u32, exec: Execution) -> Result<PowerExpansion> {
    if k == 0 {
        return Err(Error::config("k", "power must be positive"));
    }
    let main = a.map(|z| z.powu(k))?;
    if k == 1 {
        let error = a.zeros_like(a.n_box.clone())?;
        return Ok(PowerExpansion { main, error, decay: None });
    }
    let lattice = a.n_box.clone();
    let op = quantize_raw(a, &lattice, DEFAULT_CUTOFF, exec)?;
    let mut power = op.clone();
    for _ in 1..k {
        power = power.matmul(&op);
    }
    let margin = k as u64 * op.bandwidth();
    let interior = lattice
        .shrink(margin)
        .map_err(|_| Error::NRange("box too small for the power's bandwidth".into()))?;
    let exact = dequantize(&power.restrict(&lattice), a.grid())?.restrict(&interior)?;
    let error = exact.sub(&main)?;
    let hi = interior.upper().iter().map(|h| h.unsigned_abs()).min().unwrap_or(0);
    let decay = decay_fit(&error, 4, hi);
    Ok(PowerExpansion { main, error, decay })
}

/// One `(α, β)` seminorm estimate of a class probe.
#[derive(Debug, Clone, PartialEq)]
pub struct SeminormFit {
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    /// Fitted exponent of `sup_x |Δ^α D^β σ|` in `⟨n⟩`; `-∞` when identically zero.
    pub exponent: f64,
    pub residual: f64,
    /// `max sup_x |Δ^α D^β σ| / ⟨n⟩^{m - |α|}` over the fitted shells.
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolClassReport {
    pub order: f64,
    pub fits: Vec<SeminormFit>,
    pub member: bool,
}

pub const CLASS_SLACK: f64 = 0.2;
const CLASS_MIN_SHELL: u64 = 4;
const CLASS_MIN_SAMPLES: usize = 6;

/// Probes membership of `σ` in `S^m_{1,0,∞}` up to `|α| <= alpha_max`, `|β| <= beta_max`.
pub fn class_probe(sigma: &ToroidalSymbol, m: f64, alpha_max: u32, beta_max: u32) -> Result<SymbolClassReport> {
    let dim = sigma.dim();
    let mut fits = Vec::new();
    for alpha in multi_indices(dim, alpha_max) {
        let diff = difference_op(sigma, &alpha)?;
        let order_a: u32 = alpha.iter().sum();
        for beta in multi_indices(dim, beta_max) {
            let tau = x_derivative(&diff, &beta)?;
            let env = shell_envelope(tau.n_box(), &tau.sup_profile());
            let shells: Vec<(u64, f64)> = env
                .range(CLASS_MIN_SHELL..)
                .filter(|(&r, _)| {
                    // keep complete shells only
                    tau.n_box().lower().iter().all(|&l| l <= -(r as i64))
                        && tau.n_box().upper().iter().all(|&h| h >= r as i64)
                })
                .map(|(&r, &v)| (r, v))
                .collect();
            if shells.len() < CLASS_MIN_SAMPLES {
                return Err(Error::NRange(format!(
                    "{} complete shells beyond radius {CLASS_MIN_SHELL}, need {CLASS_MIN_SAMPLES}",
                    shells.len()
                )));
            }
            let scale = sigma.sup().max(1.0);
            let target = m - order_a as f64;
            let constant = shells
                .iter()
                .map(|&(r, v)| v / japanese_bracket(&[r as i64]).powf(target))
                .fold(0.0, f64::max);
            let negligible = shells.iter().all(|&(_, v)| v <= 1e-10 * scale);
            let (exponent, residual) = if negligible {
                (f64::NEG_INFINITY, 0.0)
            } else {
                let xs: Vec<f64> = shells.iter().map(|&(r, _)| japanese_bracket(&[r as i64])).collect();
                let ys: Vec<f64> = shells.iter().map(|&(_, v)| v).collect();
                log_log_fit(&xs, &ys).map_or((f64::INFINITY, f64::INFINITY), |f| (f.slope, f.residual))
            };
            fits.push(SeminormFit {
                alpha: alpha.clone(),
                beta,
                exponent,
                residual,
                constant,
            });
        }
    }
    let rates_ok = fits.iter().all(|f| {
        let order_a: u32 = f.alpha.iter().sum();
        f.exponent <= m - order_a as f64 + CLASS_SLACK
    });
    let beta_uniform = fits.iter().all(|f| {
        let base = fits
            .iter()
            .find(|g| g.alpha == f.alpha && g.beta.iter().all(|&b| b == 0))
            .map_or(0.0, |g| g.constant);
        f.constant <= 1.2 * base + 1e-10
    });
    Ok(SymbolClassReport {
        order: m,
        fits,
        member: rates_ok && beta_uniform,
    })
}

/// Built-in symbols addressable by name.
#[derive(Debug, Clone, PartialEq)]
pub enum NamedSymbol {
    /// `c_0 + Σ_{j>=1} c_j Σ_a cos(j x_a)`.
    TrigPoly { coefficients: Vec<f64> },
    /// `c_0 + cos(x_1 + γ ⟨n⟩^{-1})`.
    ShiftedCosine { c0: f64, gamma: f64 },
    /// `⟨n⟩^{-s}`.
    Diagonal { s: f64 },
}

impl NamedSymbol {
    pub fn name(&self) -> &'static str {
        match self {
            NamedSymbol::TrigPoly { .. } => "trig-poly",
            NamedSymbol::ShiftedCosine { .. } => "shifted-cosine",
            NamedSymbol::Diagonal { .. } => "diagonal",
        }
    }

    /// Parses a name plus `key=value` parameters. `trig-poly` takes
    /// `coeffs=c0,c1,...`; `shifted-cosine` takes `c0`, `gamma`; `diagonal` takes `s`.
    pub fn parse(name: &str, params: &[(String, String)]) -> Result<Self> {
        let num = |key: &str, default: f64| -> Result<f64> {
            match params.iter().rev().find(|(k, _)| k == key) {
                None => Ok(default),
                Some((_, v)) => v
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::config("symbol_param", format!("{key}={v} is not a finite number"))),
            }
        };
        let allowed: &[&str] = match name {
            "trig-poly" => &["coeffs"],
            "shifted-cosine" => &["c0", "gamma"],
            "diagonal" => &["s"],
            other => return Err(Error::config("symbol", format!("unknown symbol '{other}'"))),
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(Error::config("symbol_param", format!("'{k}' is not a parameter of {name}")));
        }
        Ok(match name {
            "trig-poly" => {
                let coefficients = match params.iter().rev().find(|(k, _)| k == "coeffs") {
                    None => vec![2.0, 1.0],
                    Some((_, v)) => parse_list(v).ok_or_else(|| {
                        Error::config("symbol_param", format!("coeffs={v} is not a list of numbers"))
                    })?,
                };
                NamedSymbol::TrigPoly { coefficients }
            }
            "shifted-cosine" => NamedSymbol::ShiftedCosine {
                c0: num("c0", 2.0)?,
                gamma: num("gamma", 1.0)?,
            },
            _ => NamedSymbol::Diagonal { s: num("s", 1.0)? },
        })
    }

    pub fn build(&self, grid: &TorusGrid, n_box: &LatticeBox) -> Result<ToroidalSymbol> {
        let grid = grid.clone();
        let n_box = n_box.clone();
        match self {
            NamedSymbol::TrigPoly { coefficients } => ToroidalSymbol::from_real_fn(grid, n_box, |x, _| {
                let mut v = coefficients.first().copied().unwrap_or(0.0);
                for (j, c) in coefficients.iter().enumerate().skip(1) {
                    v += c * x.iter().map(|xa| (j as f64 * xa).cos()).sum::<f64>();
                }
                v
            }),
            NamedSymbol::ShiftedCosine { c0, gamma } => ToroidalSymbol::from_real_fn(grid, n_box, |x, n| {
                c0 + (x[0] + gamma / japanese_bracket(n)).cos()
            }),
            NamedSymbol::Diagonal { s } => {
                ToroidalSymbol::from_real_fn(grid, n_box, |_, n| japanese_bracket(n).powf(-s))
            }
        }
    }
}

pub(crate) fn parse_list(s: &str) -> Option<Vec<f64>> {
    let v: Option<Vec<f64>> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect();
    v.filter(|v| !v.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid1() -> TorusGrid {
        TorusGrid::new(1, 64).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(TorusGrid::new(1, 48).is_err());
        assert!(TorusGrid::new(0, 64).is_err());
        assert_eq!(TorusGrid::with_default_points(1).unwrap().points(), 256);
        assert_eq!(TorusGrid::with_default_points(2).unwrap().points(), 32);
    }

    #[test]
    fn frequencies_round_trip() {
        let g = TorusGrid::new(2, 8).unwrap();
        for j in 0..g.len() {
            assert_eq!(g.frequency_slot(&g.frequency(j)), Some(j));
        }
        assert_eq!(g.frequency_slot(&[4, 0]), None);
        assert_eq!(g.frequency_slot(&[-4, 0]), Some(4 * 8));
    }

    #[test]
    fn coefficients_of_two_dimensional_cosines() {
        let g = TorusGrid::new(2, 16).unwrap();
        let samples: Vec<Complex64> = (0..g.len())
            .map(|j| {
                let x = g.node(j);
                c(1.0 + x[0].cos() + 0.5 * (2.0 * x[1]).sin(), 0.0)
            })
            .collect();
        let co = g.coefficients(&samples);
        let at = |k: [i64; 2]| co[g.frequency_slot(&k).unwrap()];
        assert_abs_diff_eq!(at([0, 0]).re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(at([1, 0]).re, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(at([0, 2]).im, -0.25, epsilon = 1e-14);
        let back = g.synthesize(&co);
        for (u, v) in back.iter().zip(&samples) {
            assert!((u - v).norm() < 1e-13);
        }
    }

    #[test]
    fn quantize_two_plus_cosine() {
        let b = LatticeBox::cube(1, 5);
        let s = NamedSymbol::parse("trig-poly", &[]).unwrap().build(&grid1(), &b).unwrap();
        assert!(s.n_independent() && !s.x_independent());
        assert_eq!(s.bandwidth_hint(), 1);
        let q = quantize(&s, &b, DEFAULT_CUTOFF, Execution::Sequential).unwrap();
        assert_eq!(q.symmetry_defect, 0.0);
        let op = q.operator;
        for i in 0..b.len() {
            for j in 0..b.len() {
                let want = match i.abs_diff(j) {
                    0 => 2.0,
                    1 => 0.5,
                    _ => 0.0,
                };
                assert!((op.get(i, j) - c(want, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn x_independent_symbol_is_diagonal() {
        let b = LatticeBox::cube(1, 6);
        let s = NamedSymbol::Diagonal { s: 1.0 }.build(&grid1(), &b).unwrap();
        assert!(s.x_independent());
        let op = quantize(&s, &b, DEFAULT_CUTOFF, Execution::Sequential).unwrap().operator;
        assert_eq!(op.index_bandwidth(), 0);
        for (i, site) in b.sites().enumerate() {
            assert!((op.get(i, i).re - 1.0 / japanese_bracket(&site)).abs() < 1e-15);
        }
    }

    #[test]
    fn under_resolved_symbol_is_rejected() {
        let b = LatticeBox::cube(1, 2);
        let g = TorusGrid::new(1, 8).unwrap();
        let s = ToroidalSymbol::from_real_fn(g, b.clone(), |x, _| (3.0 * x[0]).cos()).unwrap();
        assert!(matches!(
            quantize(&s, &b, DEFAULT_CUTOFF, Execution::Sequential),
            Err(Error::UnderResolvedSymbol { .. })
        ));
    }

    #[test]
    fn shifted_cosine_defect_is_hermitian_mismatch() {
        let b = LatticeBox::cube(1, 10);
        let s = NamedSymbol::ShiftedCosine { c0: 2.0, gamma: 1.0 }.build(&grid1(), &b).unwrap();
        let q = quantize(&s, &b, DEFAULT_CUTOFF, Execution::Parallel).unwrap();
        assert!(q.symmetry_defect > 1e-3);
        assert!(q.operator.is_exactly_hermitian());
        assert!(!q.raw.is_exactly_hermitian());
    }

    #[test]
    fn dequantize_inverts_quantize_on_interior() {
        let b = LatticeBox::cube(1, 12);
        let s = NamedSymbol::ShiftedCosine { c0: 1.0, gamma: 1.0 }.build(&grid1(), &b).unwrap();
        let raw = quantize_raw(&s, &b, DEFAULT_CUTOFF, Execution::Sequential).unwrap();
        let back = dequantize(&raw, &grid1()).unwrap();
        let inner = b.shrink(1).unwrap();
        let err = back.restrict(&inner).unwrap().max_difference(&s).unwrap();
        assert!(err < 1e-12, "{err}");
        assert!(back.restrict(&inner).unwrap().is_real());
        assert!(!back.is_real());
    }

    #[test]
    fn identity_dequantizes_to_one() {
        let b = LatticeBox::cube(2, 2);
        let g = TorusGrid::new(2, 8).unwrap();
        let s = dequantize(&ComplexOperator::identity(b), &g).unwrap();
        assert!(s.samples().iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn differences_of_linear_symbol() {
        let b = LatticeBox::cube(1, 5);
        let s = ToroidalSymbol::from_real_fn(grid1(), b, |_, n| n[0] as f64).unwrap();
        let d = difference_op(&s, &[1]).unwrap();
        assert_eq!(d.n_box().upper(), &[4]);
        assert!(d.samples().iter().all(|z| *z == c(1.0, 0.0)));
        assert!(matches!(difference_op(&s, &[11]), Err(Error::NRange(_))));
        let t = NamedSymbol::TrigPoly { coefficients: vec![1.0, 2.0] }
            .build(&grid1(), &LatticeBox::cube(1, 3))
            .unwrap();
        assert_eq!(difference_op(&t, &[2]).unwrap().sup(), 0.0);
    }

    #[test]
    fn derivatives() {
        let b = LatticeBox::cube(1, 1);
        let s = ToroidalSymbol::from_real_fn(grid1(), b.clone(), |x, _| x[0].cos()).unwrap();
        let d = x_derivative(&s, &[1]).unwrap();
        let want = ToroidalSymbol::from_real_fn(grid1(), b.clone(), |x, _| -x[0].sin()).unwrap();
        assert!(d.max_difference(&want).unwrap() < 1e-12);
        let k = ToroidalSymbol::from_real_fn(grid1(), b.clone(), |_, _| 3.0).unwrap();
        assert!(x_derivative(&k, &[2]).unwrap().sup() < 1e-15);
        // falling factorial: e^{2ix} picks up 2·1, e^{-ix} picks up (-1)(-2)
        let e = ToroidalSymbol::from_fn(grid1(), b, |x, _| {
            Complex64::from_polar(1.0, 2.0 * x[0]) + Complex64::from_polar(1.0, -x[0])
        })
        .unwrap();
        let f = falling_derivative(&e, &[2]).unwrap();
        let want = e.map(|z| z * 2.0).unwrap();
        assert!(f.max_difference(&want).unwrap() < 1e-12);
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(multi_indices(1, 2), vec![vec![0], vec![1], vec![2]]);
        let m = multi_indices(2, 1);
        assert_eq!(m, vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
        assert_eq!(multi_indices(3, 2).len(), 10);
    }

    #[test]
    fn compose_matches_product_for_polynomial_weights() {
        let b = LatticeBox::cube(1, 12);
        let a = ToroidalSymbol::from_real_fn(grid1(), b.clone(), |_, n| (n[0] * n[0]) as f64).unwrap();
        let bb = NamedSymbol::TrigPoly { coefficients: vec![0.5, 1.0, 0.25] }.build(&grid1(), &b).unwrap();
        let qa = quantize_raw(&a, &b, DEFAULT_CUTOFF, Execution::Sequential).unwrap();
        let qb = quantize_raw(&bb, &b, DEFAULT_CUTOFF, Execution::Sequential).unwrap();
        let oracle = dequantize(&qa.matmul(&qb), &grid1()).unwrap();
        let inner = b.shrink(4).unwrap();
        let expansion = compose(&a, &bb, 2).unwrap();
        let err = expansion.restrict(&inner).unwrap().max_difference(&oracle).unwrap();
        assert!(err < 1e-9 * a.sup(), "{err}");
        let partial = compose(&a, &bb, 1).unwrap();
        assert!(partial.restrict(&inner).unwrap().max_difference(&oracle).unwrap() > 1e-3);
    }

    #[test]
    fn class_probe_verdicts() {
        let b = LatticeBox::cube(1, 40);
        let cosine = NamedSymbol::ShiftedCosine { c0: 0.0, gamma: 1.0 }.build(&grid1(), &b).unwrap();
        let r = class_probe(&cosine, 0.0, 2, 2).unwrap();
        assert!(r.member, "{r:?}");
        let bracket = ToroidalSymbol::from_real_fn(grid1(), b.clone(), |_, n| japanese_bracket(n)).unwrap();
        let r0 = class_probe(&bracket, 0.0, 1, 1).unwrap();
        assert!(!r0.member);
        assert!((r0.fits[0].exponent - 1.0).abs() < 0.05);
        assert!(class_probe(&bracket, 1.0, 1, 1).unwrap().member);
        let constant = ToroidalSymbol::from_real_fn(grid1(), b, |_, _| 2.0).unwrap();
        let rc = class_probe(&constant, 0.0, 2, 2).unwrap();
        assert!(rc.member);
        assert!(rc.fits.iter().skip(1).filter(|f| f.beta[0] > 0 || f.alpha[0] > 0).all(|f| f.constant == 0.0));
        let small = LatticeBox::cube(1, 6);
        let tiny = NamedSymbol::ShiftedCosine { c0: 0.0, gamma: 1.0 }.build(&grid1(), &small).unwrap();
        assert!(matches!(class_probe(&tiny, 0.0, 1, 1), Err(Error::NRange(_))));
    }

    #[test]
    fn named_symbol_parsing() {
        let p = |k: &str, v: &str| (k.to_string(), v.to_string());
        assert_eq!(
            NamedSymbol::parse("trig-poly", &[p("coeffs", "1,0.5")]).unwrap(),
            NamedSymbol::TrigPoly { coefficients: vec![1.0, 0.5] }
        );
        assert_eq!(
            NamedSymbol::parse("shifted-cosine", &[p("gamma", "0.5")]).unwrap(),
            NamedSymbol::ShiftedCosine { c0: 2.0, gamma: 0.5 }
        );
        assert!(NamedSymbol::parse("diagonal", &[p("gamma", "1")]).is_err());
        assert!(NamedSymbol::parse("nope", &[]).is_err());
        assert!(NamedSymbol::parse("diagonal", &[p("s", "x")]).is_err());
    }
}
