//! Pure-jump counting functions, their kernel transforms
//! `Φ(r) = ∫_0^∞ φ(ru) (1+u)^{-(m+1)} du`, growth indices, and the resolvent
//! trace ratios comparing `H = Δ + V` with `V`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fit::{log_log_fit, LinearFit};
use crate::lattice::{sup_norm, Potential};
use crate::matrix::ComplexOperator;
use crate::spectral::{self, box_potential_resolvent_trace, potential_resolvent_trace, SpectralData};

/// `φ(t) = Σ_{u_i <= t} c_i` with ascending distinct jumps `u_i >= 0` and `c_i > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    jumps: Vec<f64>,
    increments: Vec<f64>,
    cumulative: Vec<f64>,
}

impl StepFunction {
    /// Jumps are sorted and coincident jumps merged.
    pub fn new(jumps: Vec<f64>, increments: Vec<f64>) -> Result<Self> {
        if jumps.len() != increments.len() {
            return Err(Error::config("jumps", "jumps and increments differ in length"));
        }
        if jumps.iter().any(|u| !(u.is_finite() && *u >= 0.0)) {
            return Err(Error::config("jumps", "jump points must be finite and nonnegative"));
        }
        if increments.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::config("increments", "increments must be finite and positive"));
        }
        let mut pairs: Vec<(f64, f64)> = jumps.into_iter().zip(increments).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut u: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut c: Vec<f64> = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            if u.last() == Some(&x) {
                *c.last_mut().expect("nonempty") += w;
            } else {
                u.push(x);
                c.push(w);
            }
        }
        let mut total = 0.0;
        let cumulative = c
            .iter()
            .map(|w| {
                total += w;
                total
            })
            .collect();
        Ok(StepFunction {
            jumps: u,
            increments: c,
            cumulative,
        })
    }

    /// `φ_H(t) = #{eigenvalues in (0, t]}`.
    pub fn from_eigenvalues(eigenvalues: &[f64]) -> Result<Self> {
        let jumps: Vec<f64> = eigenvalues.iter().copied().filter(|&e| e > 0.0).collect();
        let ones = vec![1.0; jumps.len()];
        StepFunction::new(jumps, ones)
    }

    /// `φ_V(t) = #{n : V(n) <= t}` with shells up to `|n|_∞ <= max_radius`.
    pub fn potential_counting(pot: &Potential, dim: usize, max_radius: u64) -> Result<Self> {
        let mut jumps = Vec::with_capacity(max_radius as usize + 1);
        let mut increments = Vec::with_capacity(max_radius as usize + 1);
        for r in 0..=max_radius {
            let count = if r == 0 {
                1.0
            } else {
                let r = r as f64;
                (2.0 * r + 1.0).powi(dim as i32) - (2.0 * r - 1.0).powi(dim as i32)
            };
            jumps.push(pot.shell_value(r));
            increments.push(count);
        }
        StepFunction::new(jumps, increments)
    }

    /// Step function through the values `g(u_j)` at ascending nodes `u_j`.
    pub fn sampled<G: Fn(f64) -> f64>(nodes: &[f64], g: G) -> Result<Self> {
        let mut previous = 0.0;
        let mut jumps = Vec::with_capacity(nodes.len());
        let mut increments = Vec::with_capacity(nodes.len());
        for &u in nodes {
            let v = g(u);
            if v > previous {
                jumps.push(u);
                increments.push(v - previous);
                previous = v;
            }
        }
        StepFunction::new(jumps, increments)
    }

    /// `t^α` sampled on geometric nodes `q^j` in `[1, t_max]`.
    pub fn power_law(alpha: f64, t_max: f64, ratio: f64) -> Result<Self> {
        if !(ratio > 1.0) || !(t_max >= 1.0) {
            return Err(Error::config("ratio", "need ratio > 1 and t_max >= 1"));
        }
        let count = (t_max.ln() / ratio.ln()).floor() as usize + 1;
        let nodes: Vec<f64> = (0..count).map(|j| ratio.powi(j as i32)).collect();
        StepFunction::sampled(&nodes, |t| t.powf(alpha))
    }

    pub fn jumps(&self) -> &[f64] {
        &self.jumps
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn len(&self) -> usize {
        self.jumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.jumps.partition_point(|&u| u <= t);
        if i == 0 {
            0.0
        } else {
            self.cumulative[i - 1]
        }
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// `Φ(r) = (1/m) Σ c_i (1 + u_i/r)^{-m}`, summed in ascending jump order.
pub fn kernel_transform(phi: &StepFunction, r: f64, m: f64) -> Result<f64> {
    if !(m > 0.0) {
        return Err(Error::DivergentKernel(m));
    }
    if !(r > 0.0) {
        return Err(Error::NotPositive(format!("transform variable r = {r}")));
    }
    let s: f64 = phi
        .jumps
        .iter()
        .zip(&phi.increments)
        .map(|(u, c)| c * (1.0 + u / r).powf(-m))
        .sum();
    Ok(s / m)
}

/// 16 geometric points in `[1, 8]`.
pub fn default_t_grid() -> Vec<f64> {
    geometric(1.0, 8.0, 16)
}

/// 11 geometric points in `[0.8, 1.25]` (includes 1).
pub fn default_tau_grid() -> Vec<f64> {
    geometric(0.8, 1.25, 11)
}

pub fn geometric(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let q = (hi / lo).ln() / (count - 1) as f64;
    (0..count)
        .map(|j| if j + 1 == count { hi } else { lo * (q * j as f64).exp() })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEstimate {
    /// Upper index: largest fitted slope over the `r` grid.
    pub alpha_hat: f64,
    /// Lower index: smallest fitted slope.
    pub beta_hat: f64,
    /// Fit of `log φ(tr)` against `log t` for each `r`.
    pub fits: Vec<(f64, LinearFit)>,
}

impl IndexEstimate {
    /// Hypotheses of the same-growth theorem: `β > -1` and `α < m`.
    pub fn satisfies_growth_hypotheses(&self, m: f64) -> bool {
        self.beta_hat > -1.0 && self.alpha_hat < m
    }
}

/// Least-squares growth exponents of `t ↦ φ(tr)` for `t` in `t_grid`.
pub fn matushevskaya_indices(phi: &StepFunction, r_grid: &[f64], t_grid: &[f64]) -> Result<IndexEstimate> {
    if t_grid.len() < 2 || r_grid.is_empty() {
        return Err(Error::Degenerate("need at least two t samples and one r".into()));
    }
    let mut fits = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let values: Vec<f64> = t_grid.iter().map(|t| phi.eval(t * r)).collect();
        if values.iter().any(|&v| v <= 0.0) {
            return Err(Error::Degenerate(format!("φ vanishes on the sampled range at r = {r}")));
        }
        let fit = log_log_fit(t_grid, &values)
            .ok_or_else(|| Error::Degenerate("t grid has no spread".into()))?;
        fits.push((r, fit));
    }
    let alpha_hat = fits.iter().map(|(_, f)| f.slope).fold(f64::NEG_INFINITY, f64::max);
    let beta_hat = fits.iter().map(|(_, f)| f.slope).fold(f64::INFINITY, f64::min);
    Ok(IndexEstimate {
        alpha_hat,
        beta_hat,
        fits,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityProbe {
    /// `(r, τ, φ(τr)/φ(r))` in `r`-major order.
    pub ratios: Vec<(f64, f64, f64)>,
    /// `(r, sup_τ |φ(τr)/φ(r) - 1|)`.
    pub deviation: Vec<(f64, f64)>,
}

impl ContinuityProbe {
    pub fn deviation_at(&self, r: f64) -> Option<f64> {
        self.deviation.iter().find(|(x, _)| *x == r).map(|(_, d)| *d)
    }
}

pub fn mult_continuity_probe(phi: &StepFunction, tau_grid: &[f64], r_grid: &[f64]) -> Result<ContinuityProbe> {
    if let Some(t) = tau_grid.iter().find(|t| !(**t >= 0.8 && **t <= 1.25)) {
        return Err(Error::config("tau", format!("{t} lies outside [0.8, 1.25]")));
    }
    let mut ratios = Vec::with_capacity(tau_grid.len() * r_grid.len());
    let mut deviation = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let base = phi.eval(r);
        let mut worst: f64 = 0.0;
        for &tau in tau_grid {
            let ratio = phi.eval(tau * r) / base;
            worst = worst.max((ratio - 1.0).abs());
            ratios.push((r, tau, ratio));
        }
        deviation.push((r, worst));
    }
    Ok(ContinuityProbe { ratios, deviation })
}

/// Pointwise ratio of two step functions together with their continuity deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferRow {
    pub r: f64,
    pub ratio: f64,
    pub deviation_a: f64,
    pub deviation_b: f64,
}

pub fn ratio_transfer(a: &StepFunction, b: &StepFunction, tau_grid: &[f64], r_grid: &[f64]) -> Result<Vec<TransferRow>> {
    let pa = mult_continuity_probe(a, tau_grid, r_grid)?;
    let pb = mult_continuity_probe(b, tau_grid, r_grid)?;
    Ok(r_grid
        .iter()
        .zip(pa.deviation.iter().zip(&pb.deviation))
        .map(|(&r, (da, db))| TransferRow {
            r,
            ratio: a.eval(r) / b.eval(r),
            deviation_a: da.1,
            deviation_b: db.1,
        })
        .collect())
}

/// `(r, Φ(r)/φ(r))`: bounded above and below when `Φ` and `φ` grow alike.
pub fn transform_growth(phi: &StepFunction, r_grid: &[f64], m: f64) -> Result<Vec<(f64, f64)>> {
    r_grid
        .iter()
        .map(|&r| Ok((r, kernel_transform(phi, r, m)? / phi.eval(r))))
        .collect()
}

/// A resolvent-trace ratio with its theoretical bound on `|ratio - 1|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRatio {
    pub lambda: f64,
    pub ratio: f64,
    pub bound: f64,
}

impl TraceRatio {
    pub fn deviation(&self) -> f64 {
        (self.ratio - 1.0).abs()
    }
}

fn check_trace_class(pot: &Potential, dim: usize, m: u32) -> Result<()> {
    let mk = m as f64 * pot.exponent();
    if mk <= dim as f64 {
        return Err(Error::NotTraceClass { mk, d: dim });
    }
    Ok(())
}

fn resolvent_bound(dim: usize, m: u32, lambda: f64) -> f64 {
    4.0 * dim as f64 * m as f64 / (1.0 + lambda).powi(m as i32)
}

/// `Tr((H+λ)^{-m}) / Tr((V+λ)^{-m})` as `1 + D/T`, `T` tail-corrected over `ℤ^d`
/// and `D` the box difference; bound `4dm/(1+λ)^m`.
pub fn lemma1_ratio(spec: &SpectralData, pot: &Potential, lambda: f64, m: u32) -> Result<TraceRatio> {
    let dim = spec.lattice().dim();
    check_trace_class(pot, dim, m)?;
    let total = potential_resolvent_trace(pot, dim, lambda, m)?.value;
    let h_box = spectral::resolvent_power_trace(spec, lambda, m)?;
    let v_box = box_potential_resolvent_trace(spec.lattice(), pot, lambda, m);
    Ok(TraceRatio {
        lambda,
        ratio: 1.0 + (h_box - v_box) / total,
        bound: resolvent_bound(dim, m, lambda),
    })
}

/// Weighted traces `Tr(B(H+λ)^{-m})`, `Tr(B(V+λ)^{-m})` and the unweighted
/// ones, each completed beyond the box with the diagonal of `B` on the outer shell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedTraces {
    pub lambda: f64,
    pub b_h: f64,
    pub b_v: f64,
    pub h: f64,
    pub v: f64,
}

/// Reusable `diag(QᵀBQ)` for repeated weighted traces.
#[derive(Debug, Clone)]
pub struct WeightedTraceContext {
    dim: usize,
    eigen_weights: Vec<f64>,
    site_weights: Vec<(f64, f64)>,
    far_diagonal: f64,
}

impl WeightedTraceContext {
    pub fn new(spec: &SpectralData, pot: &Potential, b: &ComplexOperator) -> Result<Self> {
        let lattice = spec.lattice();
        if b.lattice() != lattice {
            return Err(Error::IncompatibleOperators(
                "operator and spectral data live on different boxes".into(),
            ));
        }
        let eigen_weights = compressed_diagonal(spec, b);
        let diagonal: Vec<f64> = b.diagonal().iter().map(|z| z.re).collect();
        let radius = lattice.upper().iter().map(|h| h.unsigned_abs()).min().unwrap_or(0);
        let mut site_weights: Vec<(f64, f64)> = lattice
            .sites()
            .zip(&diagonal)
            .map(|(n, &w)| (pot.value(&n), w))
            .collect();
        site_weights.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let outer: Vec<f64> = lattice
            .sites()
            .zip(&diagonal)
            .filter(|(n, _)| sup_norm(n) == radius)
            .map(|(_, &w)| w)
            .collect();
        let far_diagonal = outer.iter().sum::<f64>() / outer.len().max(1) as f64;
        Ok(WeightedTraceContext {
            dim: lattice.dim(),
            eigen_weights,
            site_weights,
            far_diagonal,
        })
    }

    pub fn traces(&self, spec: &SpectralData, pot: &Potential, lambda: f64, m: u32) -> Result<WeightedTraces> {
        check_trace_class(pot, self.dim, m)?;
        let full = potential_resolvent_trace(pot, self.dim, lambda, m)?.value;
        let v_box: f64 = self
            .site_weights
            .iter()
            .map(|(v, _)| (v + lambda).powi(-(m as i32)))
            .sum();
        let h_box = spectral::resolvent_power_trace(spec, lambda, m)?;
        let tail = full - v_box;
        let bv_box: f64 = self
            .site_weights
            .iter()
            .map(|(v, w)| w * (v + lambda).powi(-(m as i32)))
            .sum();
        let bh_box: f64 = spec
            .eigenvalues()
            .iter()
            .zip(&self.eigen_weights)
            .map(|(e, w)| w * (e + lambda).powi(-(m as i32)))
            .sum();
        Ok(WeightedTraces {
            lambda,
            b_h: bh_box + self.far_diagonal * tail,
            b_v: bv_box + self.far_diagonal * tail,
            h: h_box + tail,
            v: full,
        })
    }
}

fn check_positive(b: &ComplexOperator) -> Result<()> {
    let dense = b.to_dense();
    let min = if b.is_real() {
        dense.map(|z| z.re).symmetric_eigenvalues().min()
    } else {
        spectral::hermitian_eigenvalues(&dense).first().copied().unwrap_or(0.0)
    };
    if min < -1e-10 {
        return Err(Error::NotPositive(format!("B has eigenvalue {min}")));
    }
    Ok(())
}

/// `Tr(B(H+λ)^{-m}) / Tr(B(V+λ)^{-m})` for positive `B`; bound `4dm/(1+λ)^m`.
pub fn lemma2_ratio(
    spec: &SpectralData,
    pot: &Potential,
    b: &ComplexOperator,
    lambda: f64,
    m: u32,
) -> Result<TraceRatio> {
    check_positive(b)?;
    let ctx = WeightedTraceContext::new(spec, pot, b)?;
    let t = ctx.traces(spec, pot, lambda, m)?;
    Ok(TraceRatio {
        lambda,
        ratio: 1.0 + (t.b_h - t.b_v) / t.b_v,
        bound: resolvent_bound(spec.lattice().dim(), m, lambda),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedTraceRow {
    pub lambda: f64,
    /// `Tr(B(H+λ)^{-m}) / Tr((H+λ)^{-m})`
    pub h_side: f64,
    /// `Tr(B(V+λ)^{-m}) / Tr((V+λ)^{-m})`
    pub v_side: f64,
}

impl NormalizedTraceRow {
    pub fn difference(&self) -> f64 {
        (self.h_side - self.v_side).abs()
    }
}

/// Normalized weighted traces for the `H` and `V` sides along `lambdas` (ascending).
pub fn proposition1_check(
    spec: &SpectralData,
    pot: &Potential,
    b: &ComplexOperator,
    m: u32,
    lambdas: &[f64],
) -> Result<Vec<NormalizedTraceRow>> {
    check_positive(b)?;
    let ctx = WeightedTraceContext::new(spec, pot, b)?;
    let mut grid = lambdas.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.iter()
        .map(|&lambda| {
            let t = ctx.traces(spec, pot, lambda, m)?;
            Ok(NormalizedTraceRow {
                lambda,
                h_side: t.b_h / t.h,
                v_side: t.b_v / t.v,
            })
        })
        .collect()
}

/// `q_iᵀ B q_i` for every eigenvector; real for Hermitian `B`.
pub fn compressed_diagonal(spec: &SpectralData, b: &ComplexOperator) -> Vec<f64> {
    let q: &DMatrix<f64> = spec.eigenvectors();
    let (re, _) = b.mul_real_dense(q);
    (0..q.ncols()).map(|i| q.column(i).dot(&re.column(i))).collect()
}
