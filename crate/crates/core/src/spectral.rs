//! Eigen-decompositions, spectral projections and trace functionals.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{self, LatticeBox, Potential};
use crate::matrix::{ComplexOperator, SymmetricOperator};
use crate::tridiagonal::tridiagonal_eigen;

/// Ascending eigenvalues with orthonormal eigenvectors (columns).
///
/// `trust_limit` is the largest spectral threshold at which the truncated
/// operator is a faithful stand-in for the infinite-lattice one.
#[derive(Debug, Clone)]
pub struct SpectralData {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    source_box: LatticeBox,
    trust_limit: f64,
}

impl SpectralData {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn lattice(&self) -> &LatticeBox {
        &self.source_box
    }

    pub fn trust_limit(&self) -> f64 {
        self.trust_limit
    }

    pub fn with_trust_limit(mut self, limit: f64) -> Self {
        self.trust_limit = limit;
        self
    }

    pub fn check_window(&self, lambda: f64) -> Result<()> {
        if lambda > self.trust_limit {
            return Err(Error::UntrustedWindow {
                lambda,
                limit: self.trust_limit,
            });
        }
        Ok(())
    }

    /// Indices of the eigenvalues in `(0, lambda]`, without the window check.
    pub fn indices_below(&self, lambda: f64) -> std::ops::Range<usize> {
        let start = self.eigenvalues.partition_point(|&e| e <= 0.0);
        let end = self.eigenvalues.partition_point(|&e| e <= lambda).max(start);
        start..end
    }

    /// Orthonormal basis of `range(π_λ)`.
    pub fn projector_basis(&self, lambda: f64) -> Result<DMatrix<f64>> {
        self.check_window(lambda)?;
        let idx = self.indices_below(lambda);
        Ok(self.eigenvectors.columns(idx.start, idx.len()).into_owned())
    }

    /// Largest entry of `|QᵀQ - I|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let q = &self.eigenvectors;
        let n = q.ncols();
        (q.transpose() * q - DMatrix::<f64>::identity(n, n)).amax()
    }

    /// Largest entry of `|A - QΛQᵀ|`.
    pub fn reconstruction_defect(&self, a: &SymmetricOperator) -> f64 {
        let q = &self.eigenvectors;
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.eigenvalues.clone()));
        (a.to_dense() - q * lam * q.transpose()).amax()
    }
}

/// Full eigen-decomposition. Tridiagonal input (every `d = 1` Hamiltonian)
/// goes through implicit QL, anything else through the dense solver.
pub fn eigendecompose(a: &SymmetricOperator) -> Result<SpectralData> {
    if !a.is_finite() {
        return Err(Error::InvalidMatrix("non-finite entries".into()));
    }
    let n = a.dim();
    let (values, vectors) = if a.index_bandwidth() <= 1 {
        let diag = a.diagonal();
        let off: Vec<f64> = (0..n.saturating_sub(1)).map(|i| a.get(i + 1, i)).collect();
        tridiagonal_eigen(&diag, &off)?
    } else {
        let eig = SymmetricEigen::try_new(a.to_dense(), f64::EPSILON, 0)
            .ok_or_else(|| Error::NoConvergence("dense symmetric eigensolver".into()))?;
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut eigenvectors = DMatrix::<f64>::zeros(n, n);
    for (c, &src) in order.iter().enumerate() {
        let col = vectors.column(src);
        let sign = col
            .iter()
            .find(|v| v.abs() > 1e-12)
            .map_or(1.0, |v| v.signum());
        eigenvectors.set_column(c, &(col * sign));
    }
    Ok(SpectralData {
        eigenvalues,
        eigenvectors,
        source_box: a.lattice().clone(),
        trust_limit: f64::INFINITY,
    })
}

/// `φ_H(λ) = Tr π_λ`, the number of eigenvalues in `(0, λ]`.
pub fn counting(spec: &SpectralData, lambda: f64) -> Result<usize> {
    spec.check_window(lambda)?;
    Ok(spec.indices_below(lambda).len())
}

/// `N_r(λ)`: the largest number of eigenvalues in a window `(μ, μ + r]` with `μ <= λ`.
pub fn gap_count(spec: &SpectralData, lambda: f64, r: f64) -> Result<usize> {
    if !(r > 0.0) {
        return Err(Error::BadWindow(r));
    }
    spec.check_window(lambda + r)?;
    let ev = spec.eigenvalues();
    let count_in = |lo: f64, hi: f64| {
        let lo = lo.max(0.0);
        ev.partition_point(|&e| e <= hi) - ev.partition_point(|&e| e <= lo)
    };
    let best = ev
        .iter()
        .filter(|&&e| e > 0.0 && e <= lambda + r)
        .map(|&e| {
            let mu = (e - r).min(lambda);
            count_in(mu, mu + r)
        })
        .max()
        .unwrap_or(0);
    Ok(best)
}

/// Compression `QᵀBQ` of `B` to `range(π_λ)`.
pub fn compress_below(spec: &SpectralData, b: &ComplexOperator, lambda: f64) -> Result<DMatrix<Complex64>> {
    if b.lattice() != spec.lattice() {
        return Err(Error::IncompatibleOperators(
            "operator and spectral data live on different boxes".into(),
        ));
    }
    let q = spec.projector_basis(lambda)?;
    Ok(compress(&q, b))
}

pub(crate) fn compress(q: &DMatrix<f64>, b: &ComplexOperator) -> DMatrix<Complex64> {
    let (re, im) = b.mul_real_dense(q);
    let qt = q.transpose();
    let m_re = &qt * re;
    let m_im = &qt * im;
    let p = q.ncols();
    let mut m = DMatrix::from_fn(p, p, |i, j| Complex64::new(m_re[(i, j)], m_im[(i, j)]));
    // enforce exact Hermitian symmetry of the rounded product
    for i in 0..p {
        m[(i, i)].im = 0.0;
        for j in 0..i {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
    m
}

/// Ascending eigenvalues of a Hermitian matrix; real input uses the real solver.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut vals: Vec<f64> = if m.iter().all(|z| z.im == 0.0) {
        m.map(|z| z.re).symmetric_eigenvalues().iter().copied().collect()
    } else {
        m.symmetric_eigenvalues().iter().copied().collect()
    };
    vals.sort_by(f64::total_cmp);
    vals
}

/// Largest eigenvalue of the Hermitian matrix `re + i·im`.
pub(crate) fn largest_hermitian_eigenvalue(re: &DMatrix<f64>, im: &DMatrix<f64>) -> f64 {
    if re.is_empty() {
        return 0.0;
    }
    let vals: Vec<f64> = if im.iter().all(|&x| x == 0.0) {
        re.symmetric_eigenvalues().iter().copied().collect()
    } else {
        let m = DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| Complex64::new(re[(i, j)], im[(i, j)]));
        m.symmetric_eigenvalues().iter().copied().collect()
    };
    vals.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// `f(M)` through the eigen-decomposition of the Hermitian matrix `M`.
pub fn matrix_function<F: Fn(f64) -> f64>(m: &DMatrix<Complex64>, f: F) -> Result<DMatrix<Complex64>> {
    if m.is_empty() {
        return Ok(m.clone());
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut fv = Vec::with_capacity(eig.eigenvalues.len());
    for &mu in eig.eigenvalues.iter() {
        let v = f(mu);
        if !v.is_finite() {
            return Err(Error::FDomain(mu));
        }
        fv.push(Complex64::new(v, 0.0));
    }
    let u = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(fv));
    Ok(u * d * u.adjoint())
}

/// `Tr f(M) = Σ f(μ_i)`, summed over ascending eigenvalues.
pub fn trace_function<F: Fn(f64) -> f64>(m: &DMatrix<Complex64>, f: F) -> Result<f64> {
    trace_over(&hermitian_eigenvalues(m), f)
}

pub(crate) fn trace_over<F: Fn(f64) -> f64>(eigenvalues: &[f64], f: F) -> Result<f64> {
    let mut total = 0.0;
    for &mu in eigenvalues {
        let v = f(mu);
        if !v.is_finite() {
            return Err(Error::FDomain(mu));
        }
        total += v;
    }
    Ok(total)
}

/// `Tr (A + λ)^{-m}` over the spectrum of a (truncated) operator.
pub fn resolvent_power_trace(spec: &SpectralData, lambda: f64, m: u32) -> Result<f64> {
    let min = spec.eigenvalues().first().copied().unwrap_or(f64::INFINITY);
    if lambda <= -min {
        return Err(Error::NotPositive(format!("A + {lambda} is not positive definite")));
    }
    Ok(spec
        .eigenvalues()
        .iter()
        .map(|&e| (e + lambda).powi(-(m as i32)))
        .sum())
}

/// `Σ_{n ∈ box} (V(n) + λ)^{-m}`, summed over ascending potential values.
pub fn box_potential_resolvent_trace(lattice: &LatticeBox, pot: &Potential, lambda: f64, m: u32) -> f64 {
    let mut values: Vec<f64> = lattice.sites().map(|n| pot.value(&n)).collect();
    values.sort_by(f64::total_cmp);
    values.iter().map(|&v| (v + lambda).powi(-(m as i32))).sum()
}

/// Infinite-lattice trace `Σ_{n ∈ ℤ^d} (V(n) + λ)^{-m}` with a certified tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailCorrectedTrace {
    pub value: f64,
    /// Bound on `|value - exact|` from the tail bracket.
    pub error_bound: f64,
    /// Shells summed explicitly.
    pub shells: u64,
}

const TAIL_RELATIVE_TARGET: f64 = 1e-10;
const MAX_SHELLS: u64 = 1 << 27;

pub fn potential_resolvent_trace(pot: &Potential, dim: usize, lambda: f64, m: u32) -> Result<TailCorrectedTrace> {
    let k = pot.exponent();
    let mk = m as f64 * k;
    if mk <= dim as f64 {
        return Err(Error::NotTraceClass { mk, d: dim });
    }
    if lambda <= -1.0 {
        return Err(Error::NotPositive(format!("V + {lambda} is not positive definite")));
    }
    let shell_count = |j: u64| -> f64 {
        if j == 0 {
            1.0
        } else {
            let j = j as f64;
            (2.0 * j + 1.0).powi(dim as i32) - (2.0 * j - 1.0).powi(dim as i32)
        }
    };
    let term = |j: u64| shell_count(j) * (pot.shell_value(j) + lambda).powi(-(m as i32));

    // Shell multiplicity (2t+1)^d - (2t-1)^d as a polynomial Σ c_i t^i.
    let coeffs: Vec<(i32, f64)> = (0..dim)
        .filter(|i| (dim - i) % 2 == 1)
        .map(|i| (i as i32, 2.0 * binomial(dim, i) * 2f64.powi(i as i32)))
        .collect();
    // ∫_a^∞ t^{i - e} dt for e > i + 1
    let power_tail = |a: f64, e: f64| -> f64 {
        coeffs
            .iter()
            .map(|&(i, c)| c * a.powf(i as f64 - e + 1.0) / (e - i as f64 - 1.0))
            .sum()
    };
    let lam = lambda.max(0.0);
    // the summand decreases in t once t^k (mk - d + 1) > (d - 1) λ
    let monotone_from = if dim > 1 {
        ((dim as f64 - 1.0) * lam / (mk - dim as f64 + 1.0)).powf(1.0 / k)
    } else {
        0.0
    };
    let mut cutoff = (monotone_from.max(lam.powf(1.0 / k)).ceil() as u64 + 1).max(16);

    let mut partial = 0.0;
    let mut next = 0u64;
    loop {
        while next <= cutoff {
            partial += term(next);
            next += 1;
        }
        let j = cutoff as f64;
        // upper: ∫_J^∞ s(t) t^{-mk}; lower: ∫_{J+1}^∞ s(t) t^{-mk} (1 - m λ t^{-k})
        let upper = power_tail(j, mk);
        let lower = (power_tail(j + 1.0, mk) - m as f64 * lam * power_tail(j + 1.0, mk + k)).max(0.0);
        let tail = 0.5 * (upper + lower);
        let half_width = 0.5 * (upper - lower);
        let value = partial + tail;
        if half_width <= TAIL_RELATIVE_TARGET * value || cutoff >= MAX_SHELLS {
            return Ok(TailCorrectedTrace {
                value,
                error_bound: half_width,
                shells: cutoff,
            });
        }
        cutoff *= 2;
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Truncated `H = Δ + V` together with its spectrum and trust window `θ L^k`.
#[derive(Debug, Clone)]
pub struct HamiltonianModel {
    pub potential: Potential,
    pub theta: f64,
    pub hamiltonian: SymmetricOperator,
    pub spectrum: SpectralData,
}

impl HamiltonianModel {
    pub fn new(dim: usize, radius: u64, k: f64, theta: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("d", "dimension must be positive"));
        }
        if radius == 0 {
            return Err(Error::config("L", "box radius must be positive"));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::config("theta", "safety fraction must lie in (0, 1)"));
        }
        let potential = Potential::new(k)?;
        let lattice = LatticeBox::cube(dim, radius);
        let hamiltonian = lattice::assemble_hamiltonian(&lattice, &potential);
        let spectrum = eigendecompose(&hamiltonian)?
            .with_trust_limit(lattice::trust_limit(radius, k, theta));
        Ok(HamiltonianModel {
            potential,
            theta,
            hamiltonian,
            spectrum,
        })
    }

    pub fn lattice(&self) -> &LatticeBox {
        self.spectrum.lattice()
    }

    pub fn dim(&self) -> usize {
        self.lattice().dim()
    }
}
