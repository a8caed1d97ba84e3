use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};
use crate::lattice::{count_below, trust_limit, LatticeBox};
use crate::matrix::ComplexOperator;
use crate::parallel::{num_threads, Execution};
use crate::spectral::{counting, HamiltonianModel};
use crate::symbols::{
    class_probe, compose, dequantize, envelope_fit, power_symbol_expansion, quantize, quantize_raw,
    shell_envelope, NamedSymbol, ToroidalSymbol, DEFAULT_CUTOFF,
};
use crate::szego::{convergence_sweep, ls_bound_check, rhs_multiplication, rhs_symbol_average, TestFunction};
use crate::tauberian::{lemma1_ratio, proposition1_check, WeightedTraceContext};

use super::config::{ExperimentConfig, Family, SymbolOp};
use super::report::{Metadata, Report};

pub const WEYL_COLUMNS: &[&str] = &["lambda", "count", "weyl", "ratio"];
pub const SZEGO_COLUMNS: &[&str] = &["lambda", "rank", "lhs", "rhs", "abs_err", "rel_err"];
pub const LS_COLUMNS: &[&str] = &["lambda", "r", "n_r", "lhs_diff", "rhs_bound", "holds"];
pub const TAUBERIAN_COLUMNS: &[&str] = &[
    "lambda",
    "phi_h",
    "phi_v",
    "transform_h",
    "transform_v",
    "lemma1_dev",
    "lemma1_bound",
    "lemma2_dev",
    "h_side",
    "v_side",
];
pub const SHELL_COLUMNS: &[&str] = &["shell", "sup_error"];
pub const CLASS_COLUMNS: &[&str] = &["alpha_total", "beta_total", "exponent", "residual", "constant"];

pub fn columns(family: Family, op: SymbolOp) -> &'static [&'static str] {
    match family {
        Family::Weyl => WEYL_COLUMNS,
        Family::Szego | Family::Szego2 => SZEGO_COLUMNS,
        Family::LsBound => LS_COLUMNS,
        Family::Tauberian => TAUBERIAN_COLUMNS,
        Family::Symbol => match op {
            SymbolOp::ClassProbe => CLASS_COLUMNS,
            _ => SHELL_COLUMNS,
        },
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    run_experiment_with(config, Execution::default())
}

pub fn run_experiment_with(config: &ExperimentConfig, exec: Execution) -> Result<Report> {
    let radius = config.box_radius()?;
    let trust = match config.family {
        Family::Symbol => f64::NAN,
        _ => trust_limit(radius, config.k, config.theta),
    };
    let metadata = Metadata {
        family: config.family.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        generated_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        threads: match exec {
            Execution::Sequential => 1,
            Execution::Parallel => num_threads(),
        },
        box_radius: Some(radius),
        trust_limit: trust,
        config: config.echo.clone(),
    };
    let mut report = Report::new(metadata, columns(config.family, config.op));
    match config.family {
        Family::Weyl => weyl(config, radius, &mut report)?,
        Family::Szego | Family::Szego2 => szego(config, radius, exec, &mut report)?,
        Family::LsBound => ls(config, radius, exec, &mut report)?,
        Family::Tauberian => tauberian(config, radius, &mut report)?,
        Family::Symbol => symbol(config, radius, exec, &mut report)?,
    }
    Ok(report)
}

fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

fn model(config: &ExperimentConfig, radius: u64) -> Result<HamiltonianModel> {
    HamiltonianModel::new(config.d, radius, config.k, config.theta)
}

fn build_operator(config: &ExperimentConfig, lattice: &LatticeBox, exec: Execution) -> Result<(ToroidalSymbol, ComplexOperator)> {
    let sigma = config.symbol.build(&config.grid()?, lattice)?;
    let op = quantize(&sigma, lattice, DEFAULT_CUTOFF, exec)?.operator;
    Ok((sigma, op))
}

fn weyl(config: &ExperimentConfig, radius: u64, report: &mut Report) -> Result<()> {
    let m = model(config, radius)?;
    let mut deviations = Vec::new();
    for lambda in config.lambda.points() {
        let count = counting(&m.spectrum, lambda)? as f64;
        let w = 2f64.powi(config.d as i32) * lambda.powf(config.d as f64 / config.k);
        let ratio = count / w;
        deviations.push((ratio - 1.0).abs());
        report.push_row(vec![lambda, count, w, ratio]);
    }
    report.push_verdict("deviation_decreasing", strictly_decreasing(&deviations));
    Ok(())
}

fn szego(config: &ExperimentConfig, radius: u64, exec: Execution, report: &mut Report) -> Result<()> {
    let m = model(config, radius)?;
    let (sigma, b) = build_operator(config, m.lattice(), exec)?;
    let f = &config.f;
    let rhs = |lambda: f64| -> Result<f64> {
        if sigma.n_independent() {
            rhs_multiplication(&sigma, f)
        } else {
            rhs_symbol_average(&sigma, f, lambda, &m.potential)
        }
    };
    let rows = convergence_sweep(&m.spectrum, &b, f, &config.lambda.points(), config.kappa, rhs, exec)?;
    for s in &rows {
        report.push_row(vec![s.lambda, s.rank as f64, s.lhs, s.rhs, s.abs_err, s.rel_err]);
    }
    let errors: Vec<f64> = rows.iter().map(|s| s.rel_err).collect();
    let exact = errors.iter().all(|&e| e == 0.0);
    report.push_verdict("rel_err_decreasing", exact || strictly_decreasing(&errors));
    Ok(())
}

/// `B` quantized on the spectral box grown by enough sites for `f(B)` to be
/// exact inside; the margin doubles while the Chebyshev degree outgrows it.
fn ls(config: &ExperimentConfig, radius: u64, exec: Execution, report: &mut Report) -> Result<()> {
    let m = model(config, radius)?;
    let inner = m.lattice().clone();
    let grid = config.grid()?;
    let probe = config.symbol.build(&grid, &inner)?;
    let bandwidth = probe.bandwidth_hint().max(1);
    let mut degree = match &config.f {
        TestFunction::Polynomial(c) => c.len().saturating_sub(1).max(1) as u64,
        _ => 16,
    };
    let mut pairs = Vec::new();
    for lambda in config.lambda.points() {
        let mut rs: Vec<f64> = config.r_exponents.iter().map(|e| lambda.powf(*e)).collect();
        rs.sort_by(f64::total_cmp);
        pairs.extend(rs.into_iter().map(|r| (lambda, r)));
    }
    loop {
        let wide = inner.grow(degree * bandwidth);
        let sigma = config.symbol.build(&grid, &wide)?;
        let b_wide = quantize(&sigma, &wide, DEFAULT_CUTOFF, exec)?.operator;
        let result = exec.try_map(pairs.len(), |i| {
            let (lambda, r) = pairs[i];
            ls_bound_check(&m.spectrum, &m.hamiltonian, &b_wide, &config.f, lambda, r, config.kappa)
        });
        match result {
            Err(Error::InsufficientMargin(_)) if degree < 128 => degree *= 2,
            Err(e) => return Err(e),
            Ok(rows) => {
                for row in &rows {
                    let holds = if row.holds() { 1.0 } else { 0.0 };
                    report.push_row(vec![row.lambda, row.r, row.n_r as f64, row.lhs_diff, row.rhs_bound, holds]);
                }
                report.push_verdict("bound_holds", rows.iter().all(|r| r.holds()));
                return Ok(());
            }
        }
    }
}

fn tauberian(config: &ExperimentConfig, radius: u64, report: &mut Report) -> Result<()> {
    let m = model(config, radius)?;
    let (_, b) = build_operator(config, m.lattice(), Execution::Sequential)?;
    let lambdas = config.lambda.points();
    let normalized = proposition1_check(&m.spectrum, &m.potential, &b, config.m, &lambdas)?;
    let ctx = WeightedTraceContext::new(&m.spectrum, &m.potential, &b)?;
    let mut within = true;
    for (lambda, row) in lambdas.iter().copied().zip(&normalized) {
        let phi_h = counting(&m.spectrum, lambda)? as f64;
        let phi_v = count_below(&m.potential, config.d, lambda)?.exact as f64;
        let l1 = lemma1_ratio(&m.spectrum, &m.potential, lambda, config.m)?;
        let t = ctx.traces(&m.spectrum, &m.potential, lambda, config.m)?;
        // Φ(r) = (r^m / m) Tr (V + r)^{-m}
        let scale = lambda.powi(config.m as i32) / config.m as f64;
        let transform_v = scale * t.v;
        let transform_h = transform_v * l1.ratio;
        let lemma2_dev = (t.b_h / t.b_v - 1.0).abs();
        within &= l1.deviation() <= 1.1 * l1.bound;
        report.push_row(vec![
            lambda,
            phi_h,
            phi_v,
            transform_h,
            transform_v,
            l1.deviation(),
            l1.bound,
            lemma2_dev,
            row.h_side,
            row.v_side,
        ]);
    }
    report.push_verdict("lemma1_within_bound", within);
    Ok(())
}

fn push_shells(report: &mut Report, lattice: &LatticeBox, profile: &[f64]) {
    for (r, v) in shell_envelope(lattice, profile) {
        report.push_row(vec![r as f64, v]);
    }
}

fn symbol(config: &ExperimentConfig, radius: u64, exec: Execution, report: &mut Report) -> Result<()> {
    let lattice = LatticeBox::cube(config.d, radius);
    let grid = config.grid()?;
    let a = config.symbol.build(&grid, &lattice)?;
    match config.op {
        SymbolOp::Compose => {
            let b = NamedSymbol::TrigPoly { coefficients: vec![0.0, 1.0] }.build(&grid, &lattice)?;
            let qa = quantize_raw(&a, &lattice, DEFAULT_CUTOFF, exec)?;
            let qb = quantize_raw(&b, &lattice, DEFAULT_CUTOFF, exec)?;
            let interior = lattice
                .shrink(qa.bandwidth() + qb.bandwidth() + config.order as u64)
                .map_err(|_| Error::config("L", "box too small for the composition"))?;
            let exact = dequantize(&qa.matmul(&qb), &grid)?.restrict(&interior)?;
            let approx = compose(&a, &b, config.order)?.restrict(&interior)?;
            let diff = exact.sub(&approx)?;
            let profile = diff.sup_profile();
            push_shells(report, &interior, &profile);
            let max = profile.iter().copied().fold(0.0, f64::max);
            let env = shell_envelope(&interior, &profile);
            let hi = env.keys().last().copied().unwrap_or(0);
            let decays = envelope_fit(&env, 4, hi).is_some_and(|f| f.slope < 0.0);
            report.push_verdict("error_negligible_or_decaying", max <= 1e-12 || decays);
        }
        SymbolOp::Power => {
            let expansion = power_symbol_expansion(&a, config.order, exec)?;
            let profile = expansion.error.sup_profile();
            push_shells(report, expansion.error.n_box(), &profile);
            let max = profile.iter().copied().fold(0.0, f64::max);
            let decays = expansion.decay.is_some_and(|f| f.slope < 0.0);
            report.push_verdict("error_negligible_or_decaying", max <= 1e-12 || decays);
        }
        SymbolOp::ClassProbe => {
            let probe = class_probe(&a, config.class_order, config.order, config.order)?;
            for fit in &probe.fits {
                let at: u32 = fit.alpha.iter().sum();
                let bt: u32 = fit.beta.iter().sum();
                report.push_row(vec![at as f64, bt as f64, fit.exponent, fit.residual, fit.constant]);
            }
            report.push_verdict("member", probe.member);
        }
    }
    Ok(())
}
