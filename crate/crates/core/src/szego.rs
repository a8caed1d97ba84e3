//! Both sides of the Szegő-type limit formulas, the commutator hypothesis
//! `‖H^{-κ}[H, B]‖ < ∞` and the Laptev–Safarov error bound.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{LatticeBox, Potential};
use crate::matrix::{ComplexOperator, SymmetricOperator};
use crate::parallel::Execution;
use crate::spectral::{self, counting, gap_count, largest_hermitian_eigenvalue, SpectralData};
use crate::symbols::{parse_list, ToroidalSymbol};

pub const MAX_POLY_DEGREE: usize = 8;
/// Absolute slack allowed for roundoff in the Laptev–Safarov comparison.
pub const LS_SLACK: f64 = 1e-9;
const CHEBYSHEV_TOLERANCE: f64 = 1e-8;
const CHEBYSHEV_MAX_DEGREE: usize = 64;

/// Test function `f` applied to the compressed operator.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// `Σ c_j t^j`, degree at most [`MAX_POLY_DEGREE`].
    Polynomial(Vec<f64>),
    Exp,
    Cos,
    Sin,
}

impl TestFunction {
    pub fn polynomial(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("f", "polynomial needs finite coefficients"));
        }
        let mut c = coefficients;
        while c.len() > 1 && c.last() == Some(&0.0) {
            c.pop();
        }
        if c.len() > MAX_POLY_DEGREE + 1 {
            return Err(Error::config(
                "f",
                format!("degree {} exceeds {MAX_POLY_DEGREE}", c.len() - 1),
            ));
        }
        Ok(TestFunction::Polynomial(c))
    }

    /// Parses `poly:c0,c1,...`, `exp`, `cos` or `sin`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "exp" => Ok(TestFunction::Exp),
            "cos" => Ok(TestFunction::Cos),
            "sin" => Ok(TestFunction::Sin),
            _ => {
                let list = s
                    .strip_prefix("poly:")
                    .ok_or_else(|| Error::config("f", format!("'{s}' is not poly:c0,c1,... or exp/cos/sin")))?;
                let c = parse_list(list)
                    .ok_or_else(|| Error::config("f", format!("'{list}' is not a coefficient list")))?;
                TestFunction::polynomial(c)
            }
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TestFunction::Polynomial(c) => horner(c, t),
            TestFunction::Exp => t.exp(),
            TestFunction::Cos => t.cos(),
            TestFunction::Sin => t.sin(),
        }
    }

    pub fn degree(&self) -> Option<usize> {
        match self {
            TestFunction::Polynomial(c) => Some(c.len() - 1),
            _ => None,
        }
    }

    /// Same function with its affine part `c_0 + c_1 t` removed (polynomials only).
    /// Traces over `range(π_λ)` are linear in `B`, so the affine part cancels
    /// from the Laptev–Safarov difference.
    pub fn without_affine_part(&self) -> TestFunction {
        match self {
            TestFunction::Polynomial(c) => {
                let mut c = c.clone();
                c.iter_mut().take(2).for_each(|v| *v = 0.0);
                c.truncate(c.len().max(1));
                TestFunction::Polynomial(c)
            }
            other => other.clone(),
        }
    }

    /// `sup |f''|` on `[lo, hi]`.
    pub fn second_derivative_sup(&self, lo: f64, hi: f64) -> f64 {
        match self {
            TestFunction::Polynomial(c) => {
                let f2 = derivative(&derivative(c));
                let f3 = derivative(&f2);
                let mut best = horner(&f2, lo).abs().max(horner(&f2, hi).abs());
                for t in real_roots(&f3) {
                    if t > lo && t < hi {
                        best = best.max(horner(&f2, t).abs());
                    }
                }
                best
            }
            TestFunction::Exp => hi.exp(),
            TestFunction::Cos | TestFunction::Sin => {
                let g = |t: f64| {
                    if *self == TestFunction::Cos {
                        t.cos().abs()
                    } else {
                        t.sin().abs()
                    }
                };
                // extrema of |f''| = |f| sit at multiples of π/2
                let mut best = g(lo).max(g(hi));
                let step = std::f64::consts::FRAC_PI_2;
                let mut t = (lo / step).ceil() * step;
                while t < hi {
                    best = best.max(g(t));
                    t += step;
                }
                best
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            TestFunction::Polynomial(c) => {
                let parts: Vec<String> = c.iter().map(|v| format!("{v}")).collect();
                format!("poly:{}", parts.join(","))
            }
            TestFunction::Exp => "exp".into(),
            TestFunction::Cos => "cos".into(),
            TestFunction::Sin => "sin".into(),
        }
    }
}

fn horner(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * t + v)
}

fn derivative(c: &[f64]) -> Vec<f64> {
    if c.len() <= 1 {
        return vec![0.0];
    }
    c.iter().enumerate().skip(1).map(|(j, v)| j as f64 * v).collect()
}

/// Real roots of `Σ c_j t^j` from the companion matrix.
fn real_roots(c: &[f64]) -> Vec<f64> {
    let mut c = c.to_vec();
    while c.len() > 1 && c.last() == Some(&0.0) {
        c.pop();
    }
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = c[n];
    let companion = DMatrix::from_fn(n, n, |i, j| {
        if i == 0 {
            -c[n - 1 - j] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let scale = 1.0 + c.iter().map(|v| (v / lead).abs()).fold(0.0, f64::max);
    companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-9 * scale)
        .map(|z| z.re)
        .collect()
}

/// `Tr f(π_λ B π_λ) / Tr π_λ`.
pub fn lhs_ratio(spec: &SpectralData, b: &ComplexOperator, f: &TestFunction, lambda: f64) -> Result<f64> {
    let m = spectral::compress_below(spec, b, lambda)?;
    let p = m.nrows();
    if p == 0 {
        return Err(Error::EmptyProjection(lambda));
    }
    Ok(spectral::trace_function(&m, |t| f.eval(t))? / p as f64)
}

/// `(2π)^{-d} ∫ f(b(x)) dx` for an `n`-independent symbol.
pub fn rhs_multiplication(b: &ToroidalSymbol, f: &TestFunction) -> Result<f64> {
    if !b.n_independent() {
        return Err(Error::IncompatibleSymbols("symbol depends on n".into()));
    }
    Ok(b.grid().mean(b.column(0), |z| f.eval(z.re)))
}

/// Average over `{V(n) <= λ}` of the normalized torus integrals of `f∘b(·, n)`.
pub fn rhs_symbol_average(b: &ToroidalSymbol, f: &TestFunction, lambda: f64, pot: &Potential) -> Result<f64> {
    if lambda < 1.0 {
        return Err(Error::EmptyThreshold(lambda));
    }
    if b.n_independent() {
        return rhs_multiplication(b, f);
    }
    let radius = pot.shell_radius_below(lambda);
    let sublevel = LatticeBox::cube(b.dim(), radius);
    if !b.n_box().contains_box(&sublevel) {
        return Err(Error::NRange(format!(
            "sublevel set of radius {radius} exceeds the symbol box"
        )));
    }
    let grid = b.grid();
    let mut total = 0.0;
    for n in sublevel.sites() {
        total += grid.mean(b.column_at(&n).expect("covered"), |z| f.eval(z.re));
    }
    Ok(total / sublevel.len() as f64)
}

/// Default commutator exponent `max(0.5, (k-1)/k + 0.05)`, capped at 0.95.
pub fn default_kappa(k: f64) -> f64 {
    ((k - 1.0) / k + 0.05).max(0.5).min(0.95)
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::BadKappa(kappa));
    }
    Ok(())
}

fn check_shared(spec: &SpectralData, ops: &[&LatticeBox]) -> Result<()> {
    if ops.iter().any(|b| *b != spec.lattice()) {
        return Err(Error::IncompatibleOperators(
            "operators and spectral data live on different boxes".into(),
        ));
    }
    Ok(())
}

/// `‖Λ^{-κ} Qᵀ C‖₂` for eigenpairs `(Λ, Q)` of `H`.
fn weighted_norm(q: &DMatrix<f64>, eigenvalues: &[f64], c: &ComplexOperator, kappa: f64) -> f64 {
    if q.ncols() == 0 {
        return 0.0;
    }
    // X = C* Q, so that Qᵀ C = X*
    let (re, im) = c.adjoint().mul_real_dense(q);
    let w = DVector::from_iterator(eigenvalues.len(), eigenvalues.iter().map(|e| e.powf(-kappa)));
    let re = re * DMatrix::from_diagonal(&w);
    let im = im * DMatrix::from_diagonal(&w);
    // (X Λ^{-κ})* (X Λ^{-κ}) = reᵀre + imᵀim + i(reᵀim - imᵀre)
    let g_re = re.transpose() * &re + im.transpose() * &im;
    let g_im = re.transpose() * &im - im.transpose() * &re;
    largest_hermitian_eigenvalue(&g_re, &g_im).max(0.0).sqrt()
}

/// Operator 2-norm of `H^{-κ}[H, B]` on the box.
pub fn commutator_condition_norm(
    spec: &SpectralData,
    h: &SymmetricOperator,
    b: &ComplexOperator,
    kappa: f64,
) -> Result<f64> {
    check_kappa(kappa)?;
    check_shared(spec, &[h.lattice(), b.lattice()])?;
    let c = h.to_complex().commutator(b);
    Ok(weighted_norm(spec.eigenvectors(), spec.eigenvalues(), &c, kappa))
}

/// `f(B)` for a polynomial by sparse Horner evaluation, otherwise by a
/// Chebyshev expansion on `[lo, hi]`. Returns the operator and the degree used.
pub fn operator_function(
    b: &ComplexOperator,
    f: &TestFunction,
    lo: f64,
    hi: f64,
) -> Result<(ComplexOperator, usize)> {
    if let TestFunction::Polynomial(c) = f {
        return Ok((b.polynomial(c), c.len() - 1));
    }
    let coefficients = chebyshev_fit(|t| f.eval(t), lo, hi)?;
    let degree = coefficients.len() - 1;
    let lattice = b.lattice().clone();
    let id = ComplexOperator::identity(lattice.clone());
    let (mid, half) = (0.5 * (hi + lo), 0.5 * (hi - lo).max(f64::EPSILON));
    let x = b
        .sub(&id.scale(Complex64::new(mid, 0.0)))
        .scale(Complex64::new(1.0 / half, 0.0));
    let mut prev = id.clone();
    let mut curr = x.clone();
    let mut acc = id.scale(Complex64::new(coefficients[0], 0.0));
    if degree >= 1 {
        acc = acc.add(&x.scale(Complex64::new(coefficients[1], 0.0)));
    }
    for &ck in coefficients.iter().skip(2) {
        let next = x.matmul(&curr).scale(Complex64::new(2.0, 0.0)).sub(&prev);
        acc = acc.add(&next.scale(Complex64::new(ck, 0.0)));
        prev = curr;
        curr = next;
    }
    Ok((acc, degree))
}

/// Chebyshev coefficients of `f` on `[lo, hi]`, degree raised until the
/// coefficient tail bounds the uniform error by `1e-8`.
fn chebyshev_fit<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> Result<Vec<f64>> {
    let (mid, half) = (0.5 * (hi + lo), 0.5 * (hi - lo));
    let mut n = 8usize;
    loop {
        let nodes: Vec<f64> = (0..=n)
            .map(|j| (std::f64::consts::PI * (j as f64 + 0.5) / (n as f64 + 1.0)).cos())
            .collect();
        let values: Vec<f64> = nodes.iter().map(|&u| f(mid + half * u)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::FDomain(mid));
        }
        let coefficients: Vec<f64> = (0..=n)
            .map(|k| {
                let s: f64 = nodes
                    .iter()
                    .zip(&values)
                    .map(|(&u, &v)| v * (k as f64 * u.acos()).cos())
                    .sum();
                let w = if k == 0 { 1.0 } else { 2.0 };
                w * s / (n as f64 + 1.0)
            })
            .collect();
        let tail: f64 = coefficients[n - 2..].iter().map(|c| c.abs()).sum();
        if tail <= CHEBYSHEV_TOLERANCE {
            return Ok(coefficients);
        }
        if n >= CHEBYSHEV_MAX_DEGREE {
            return Err(Error::NoConvergence("Chebyshev expansion of f".into()));
        }
        n *= 2;
    }
}

/// One evaluation of the Laptev–Safarov inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsBound {
    pub lambda: f64,
    pub r: f64,
    pub n_r: usize,
    pub lhs_diff: f64,
    pub rhs_bound: f64,
    pub f2_norm: f64,
    pub projected_norm: f64,
    pub commutator_norm: f64,
}

impl LsBound {
    pub fn holds(&self) -> bool {
        self.lhs_diff <= self.rhs_bound + LS_SLACK
    }
}

/// Largest and smallest eigenvalue of a Hermitian sparse operator.
fn spectral_range(b: &ComplexOperator) -> (f64, f64) {
    let vals = if b.is_real() {
        let mut v: Vec<f64> = b.real_part().to_dense().symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    } else {
        spectral::hermitian_eigenvalues(&b.to_dense())
    };
    (vals.first().copied().unwrap_or(0.0), vals.last().copied().unwrap_or(0.0))
}

/// Compares `|Tr(π_λ f(B) π_λ) - Tr f(π_λ B π_λ)|` with
/// `½‖f''‖ N_r(λ) (‖π_{λ-r}B‖² + π²λ^{2κ}/(6r²) ‖H^{-κ}π_{λ-r}[H, B]‖²)`.
///
/// `b_wide` is `B` on a box enclosing the spectral box by at least
/// `degree(f) · bandwidth(B)` sites, so that `f(B)` is exact on the inner box.
pub fn ls_bound_check(
    spec: &SpectralData,
    h: &SymmetricOperator,
    b_wide: &ComplexOperator,
    f: &TestFunction,
    lambda: f64,
    r: f64,
    kappa: f64,
) -> Result<LsBound> {
    check_kappa(kappa)?;
    check_shared(spec, &[h.lattice()])?;
    if !(r > 0.0) {
        return Err(Error::BadWindow(r));
    }
    if !(lambda - r > 0.0) {
        return Err(Error::BadWindow(r));
    }
    let inner = spec.lattice();
    let (b_min, b_max) = spectral_range(b_wide);
    let (k_lo, k_hi) = (b_min.min(0.0), b_max);
    let g = f.without_affine_part();
    let (g_of_b, degree) = operator_function(b_wide, &g, k_lo, k_hi)?;
    let margin = degree as u64 * b_wide.bandwidth();
    if !b_wide.lattice().contains_box(&inner.grow(margin)) {
        return Err(Error::InsufficientMargin(format!(
            "f(B) needs {margin} sites of margin around the spectral box"
        )));
    }
    let b = b_wide.restrict(inner);
    let g_of_b = g_of_b.restrict(inner);

    let q = spec.projector_basis(lambda)?;
    let m = spectral::compress(&q, &b);
    let outer = spectral::compress(&q, &g_of_b);
    let outer_trace: f64 = (0..outer.nrows()).map(|i| outer[(i, i)].re).sum();
    let inner_trace = spectral::trace_function(&m, |t| g.eval(t))?;
    let lhs_diff = (outer_trace - inner_trace).abs();

    let f2_norm = f.second_derivative_sup(k_lo, k_hi);
    let n_r = gap_count(spec, lambda, r)?;
    let below = spec.indices_below(lambda - r);
    let q_low = spec.eigenvectors().columns(below.start, below.len()).into_owned();
    let projected_norm = {
        // ‖Qᵀ B‖ = ‖B Q‖ for Hermitian B
        let (re, im) = b.mul_real_dense(&q_low);
        let g_re = re.transpose() * &re + im.transpose() * &im;
        let g_im = re.transpose() * &im - im.transpose() * &re;
        largest_hermitian_eigenvalue(&g_re, &g_im).max(0.0).sqrt()
    };
    let c = h.to_complex().commutator(&b);
    let commutator_norm = weighted_norm(&q_low, &spec.eigenvalues()[below], &c, kappa);
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    let rhs_bound = 0.5
        * f2_norm
        * n_r as f64
        * (projected_norm * projected_norm
            + pi2 * lambda.powf(2.0 * kappa) / (6.0 * r * r) * commutator_norm * commutator_norm);
    Ok(LsBound {
        lambda,
        r,
        n_r,
        lhs_diff,
        rhs_bound,
        f2_norm,
        projected_norm,
        commutator_norm,
    })
}

/// One row of a convergence sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SzegoSample {
    pub lambda: f64,
    pub rank: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    /// `λ^κ / λ`, the proxy for the error decay in the proof.
    pub decay_proxy: f64,
}

impl SzegoSample {
    pub fn new(lambda: f64, rank: usize, lhs: f64, rhs: f64, kappa: f64) -> Self {
        let abs_err = (lhs - rhs).abs();
        SzegoSample {
            lambda,
            rank,
            lhs,
            rhs,
            abs_err,
            rel_err: abs_err / rhs.abs().max(1e-12),
            decay_proxy: lambda.powf(kappa) / lambda,
        }
    }
}

/// Evaluates `lhs_ratio` against `rhs(λ)` along `lambdas` (ascending output).
pub fn convergence_sweep<R>(
    spec: &SpectralData,
    b: &ComplexOperator,
    f: &TestFunction,
    lambdas: &[f64],
    kappa: f64,
    rhs: R,
    exec: Execution,
) -> Result<Vec<SzegoSample>>
where
    R: Fn(f64) -> Result<f64> + Send + Sync,
{
    check_kappa(kappa)?;
    let mut grid = lambdas.to_vec();
    grid.sort_by(f64::total_cmp);
    exec.try_map(grid.len(), |i| {
        let lambda = grid[i];
        let rank = counting(spec, lambda)?;
        let lhs = lhs_ratio(spec, b, f, lambda)?;
        Ok(SzegoSample::new(lambda, rank, lhs, rhs(lambda)?, kappa))
    })
}
