//! Calibration of `theta`: the box optimizer, one-step and two-step
//! calibration, and the learning-curve experiment on nested samples.

use std::io::Write;

use serde::Serialize;

use crate::contract::{PayoffFamily, ThetaBox};
use crate::dists::{fit_mle, CovariateSample, LossSample, TailKind, TailLinkModel, ThresholdPolicy};
use crate::objective::{ApproxObjective, EmpiricalObjective, MetricConfig};
use crate::optim::{golden_section_max, nelder_mead_max, Evaluated};
use crate::{Error, Result};

const GRID_1D: usize = 64;
const GRID_PER_AXIS: usize = 16;
const REL_TOL: f64 = 1e-5;
const NM_MAX_ITER: usize = 2000;

/// Outcome of [`optimize_theta`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum {
    pub theta: Vec<f64>,
    pub value: f64,
    /// The coarse grid was constant; `theta` is the box midpoint.
    pub flat: bool,
    pub trace: Vec<Evaluated>,
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return x < y;
        }
    }
    false
}

/// Regular grid with `per_axis` points per coordinate, first coordinate
/// varying slowest.
pub fn box_grid(domain: &ThetaBox, per_axis: usize) -> Vec<Vec<f64>> {
    let dim = domain.dim();
    let per_axis = per_axis.max(1);
    let axis = |k: usize, i: usize| {
        if per_axis == 1 {
            0.5 * (domain.lower[k] + domain.upper[k])
        } else {
            domain.lower[k] + domain.width(k) * i as f64 / (per_axis - 1) as f64
        }
    };
    let total = per_axis.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut point = vec![0.0; dim];
            for k in (0..dim).rev() {
                point[k] = axis(k, idx % per_axis);
                idx /= per_axis;
            }
            point
        })
        .collect()
}

/// Grid of about `points` points: `round(points^(1/dim))` per coordinate.
pub fn theta_grid(domain: &ThetaBox, points: usize) -> Vec<Vec<f64>> {
    let per_axis = (points as f64).powf(1.0 / domain.dim() as f64).round() as usize;
    box_grid(domain, per_axis)
}

/// Maximizes `objective` over the box: a coarse grid (64 points in 1D,
/// 16 per axis otherwise) followed by golden-section search (1D) or
/// Nelder–Mead (2D and up) from the best grid point. Returns the best point
/// evaluated; ties go to the lexicographically lowest `theta`.
pub fn optimize_theta<F>(mut objective: F, domain: &ThetaBox) -> Result<Optimum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let dim = domain.dim();
    let grid = if dim == 1 {
        box_grid(domain, GRID_1D)
    } else {
        box_grid(domain, GRID_PER_AXIS)
    };
    let mut trace = Vec::with_capacity(grid.len() + 64);
    let mut bad = Vec::new();
    for theta in &grid {
        let value = objective(theta)?;
        if !value.is_finite() {
            bad.push(theta.clone());
        }
        trace.push(Evaluated {
            x: theta.clone(),
            value,
        });
    }
    if !bad.is_empty() {
        return Err(Error::NonFiniteObjective { thetas: bad });
    }

    let (lo, hi) = trace.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
        (lo.min(e.value), hi.max(e.value))
    });
    if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()) {
        let mid = domain.midpoint();
        let value = objective(&mid)?;
        trace.push(Evaluated { x: mid.clone(), value });
        return Ok(Optimum {
            theta: mid,
            value,
            flat: true,
            trace,
        });
    }

    // grid order is lexicographic, so a strict comparison keeps the lowest tie
    let mut best_idx = 0;
    for (i, e) in trace.iter().enumerate() {
        if e.value > trace[best_idx].value {
            best_idx = i;
        }
    }

    let mut failure: Option<Error> = None;
    {
        let mut eval = |x: &[f64]| -> f64 {
            if failure.is_some() {
                return f64::NAN;
            }
            match objective(x) {
                Ok(v) => v,
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            }
        };
        if dim == 1 {
            let step = domain.width(0) / (GRID_1D - 1) as f64;
            let centre = trace[best_idx].x[0];
            let lo = (centre - step).max(domain.lower[0]);
            let hi = (centre + step).min(domain.upper[0]);
            golden_section_max(
                |t| eval(&[t]),
                lo,
                hi,
                REL_TOL * domain.width(0),
                |t, v| trace.push(Evaluated { x: vec![t], value: v }),
            );
        } else {
            let start = trace[best_idx].x.clone();
            let step: Vec<f64> = (0..dim).map(|k| domain.width(k) / (GRID_PER_AXIS - 1) as f64).collect();
            nelder_mead_max(
                |x| eval(x),
                &start,
                &step,
                &domain.lower,
                &domain.upper,
                REL_TOL,
                NM_MAX_ITER,
                |x, v| {
                    trace.push(Evaluated {
                        x: x.to_vec(),
                        value: v,
                    })
                },
            );
        }
    }
    if let Some(e) = failure {
        return Err(e);
    }

    let mut best = &trace[best_idx];
    for e in &trace {
        if e.value.is_finite() && (e.value > best.value || (e.value == best.value && lex_less(&e.x, &best.x))) {
            best = e;
        }
    }
    Ok(Optimum {
        theta: best.x.clone(),
        value: best.value,
        flat: false,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    OneStep,
    TwoStep,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub theta_hat: Vec<f64>,
    pub objective_at_opt: f64,
    pub method: Method,
    pub fitted_model: Option<TailLinkModel>,
    pub premium_at_opt: f64,
    pub flat: bool,
    pub optimizer_trace: Vec<Evaluated>,
}

/// Maximizes the exact empirical objective.
pub fn one_step_calibrate(
    sample: &LossSample,
    family: &PayoffFamily,
    config: &MetricConfig,
) -> Result<CalibrationResult> {
    let exact = EmpiricalObjective::new(sample, family, *config)?;
    let opt = optimize_theta(|t| Ok(exact.evaluate(t)?.value), &family.theta_domain)?;
    let premium_at_opt = exact.premium(&opt.theta)?;
    Ok(CalibrationResult {
        theta_hat: opt.theta,
        objective_at_opt: opt.value,
        method: Method::OneStep,
        fitted_model: None,
        premium_at_opt,
        flat: opt.flat,
        optimizer_trace: opt.trace,
    })
}

/// Maximizes the tail approximation built from a given tail model; the
/// premium inside it comes from the joint sample.
pub fn approx_calibrate(
    joint: &LossSample,
    cov: &CovariateSample,
    tail_model: &TailLinkModel,
    family: &PayoffFamily,
    config: &MetricConfig,
) -> Result<CalibrationResult> {
    let exact = EmpiricalObjective::new(joint, family, *config)?;
    let approx = ApproxObjective::new(tail_model, cov, family, *config)?;
    let opt = optimize_theta(|t| approx.evaluate(t, exact.premium(t)?), &family.theta_domain)?;
    let premium_at_opt = exact.premium(&opt.theta)?;
    Ok(CalibrationResult {
        theta_hat: opt.theta,
        objective_at_opt: opt.value,
        method: Method::TwoStep,
        fitted_model: Some(tail_model.clone()),
        premium_at_opt,
        flat: opt.flat,
        optimizer_trace: opt.trace,
    })
}

/// Fits the tail model on the joint sample, then maximizes the tail
/// approximation averaged over `cov`.
pub fn two_step_calibrate(
    joint: &LossSample,
    cov: &CovariateSample,
    family: &PayoffFamily,
    config: &MetricConfig,
    policy: ThresholdPolicy,
) -> Result<CalibrationResult> {
    let fit = fit_mle(joint, family.model.kind(), policy)?;
    approx_calibrate(joint, cov, &fit.model, family, config)
}

/// Largest absolute difference between two curves on the same grid.
pub fn sup_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Index of the largest value; the first one on ties.
pub fn grid_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Settings of the learning-curve experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSettings {
    pub n_start: usize,
    pub increment: usize,
    pub grid_points: usize,
    pub fit_kind: TailKind,
    pub policy: ThresholdPolicy,
}

impl Default for CurveSettings {
    fn default() -> Self {
        Self {
            n_start: 250,
            increment: 250,
            grid_points: 256,
            fit_kind: TailKind::ParetoUnit,
            policy: ThresholdPolicy::FullSample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningCurveRow {
    pub n: usize,
    pub error_one_step: f64,
    pub error_two_step: f64,
    /// Link coefficients, then `sigma` for GPD fits.
    pub fitted_params: Vec<f64>,
    pub theta_one: Vec<f64>,
    pub theta_two: Vec<f64>,
    pub opt_one: f64,
    pub opt_two: f64,
    /// Set when the fit failed; two-step fields are then NaN.
    pub fit_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningCurve {
    pub grid: Vec<Vec<f64>>,
    pub reference: Vec<f64>,
    pub opt_ref: f64,
    pub theta_ref: Vec<f64>,
    pub rows: Vec<LearningCurveRow>,
}

/// Objective values on a grid, with the premium at each point.
pub fn exact_curve(exact: &EmpiricalObjective<'_>, grid: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut values = Vec::with_capacity(grid.len());
    let mut premiums = Vec::with_capacity(grid.len());
    for theta in grid {
        let e = exact.evaluate(theta)?;
        values.push(e.value);
        premiums.push(e.premium);
    }
    Ok((values, premiums))
}

pub fn approx_curve(approx: &ApproxObjective<'_>, grid: &[Vec<f64>], premiums: &[f64]) -> Result<Vec<f64>> {
    grid.iter().zip(premiums).map(|(t, &p)| approx.evaluate(t, p)).collect()
}

/// Sample sizes `n_start, n_start + increment, ...`, ending at `m`.
pub fn curve_sizes(n_start: usize, increment: usize, m: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = (0..).map(|k| n_start + k * increment).take_while(|&n| n < m).collect();
    sizes.push(m);
    sizes
}

/// The learning-curve experiment: reference objective on the full sample;
/// for each `n`, the exact objective on the first `n` rows, a tail fit on the
/// same rows and the approximation averaged over every covariate row; sup
/// errors against the reference on a fixed grid.
pub fn learning_curve(
    full: &LossSample,
    family: &PayoffFamily,
    config: &MetricConfig,
    settings: &CurveSettings,
) -> Result<LearningCurve> {
    if settings.increment == 0 {
        return Err(Error::InvalidArgument("increment must be at least 1".into()));
    }
    let min_fit = 10 * (full.dim() + 1);
    if settings.n_start < min_fit || settings.n_start > full.len() {
        return Err(Error::InvalidArgument(format!(
            "n_start = {} must lie in [{min_fit}, {}]",
            settings.n_start,
            full.len()
        )));
    }
    let grid = theta_grid(&family.theta_domain, settings.grid_points);
    let (reference, _) = exact_curve(&EmpiricalObjective::new(full, family, *config)?, &grid)?;
    let ref_idx = grid_argmax(&reference);

    let mut rows = Vec::new();
    for n in curve_sizes(settings.n_start, settings.increment, full.len()) {
        let head = full.head(n);
        let (one, premiums) = exact_curve(&EmpiricalObjective::new(&head, family, *config)?, &grid)?;
        let one_idx = grid_argmax(&one);
        let mut row = LearningCurveRow {
            n,
            error_one_step: sup_error(&one, &reference),
            error_two_step: f64::NAN,
            fitted_params: Vec::new(),
            theta_one: grid[one_idx].clone(),
            theta_two: Vec::new(),
            opt_one: one[one_idx],
            opt_two: f64::NAN,
            fit_error: None,
        };
        match fit_mle(&head, settings.fit_kind, settings.policy) {
            Ok(fit) => {
                let approx = ApproxObjective::new(&fit.model, full.covariates(), family, *config)?;
                let two = approx_curve(&approx, &grid, &premiums)?;
                let two_idx = grid_argmax(&two);
                row.error_two_step = sup_error(&two, &reference);
                row.theta_two = grid[two_idx].clone();
                row.opt_two = two[two_idx];
                row.fitted_params = fit.model.link_coeffs().to_vec();
                if fit.model.kind() == TailKind::Gpd {
                    row.fitted_params.push(fit.model.sigma());
                }
            }
            Err(e) => row.fit_error = Some(e.to_string()),
        }
        rows.push(row);
    }
    Ok(LearningCurve {
        opt_ref: reference[ref_idx],
        theta_ref: grid[ref_idx].clone(),
        grid,
        reference,
        rows,
    })
}

/// Writes `(n, a_hat, b_hat[, c_hat..][, sigma_hat], error_one, error_two,
/// opt_one, opt_two)` rows; `dim` is the covariate dimension.
pub fn write_learning_curve<W: Write>(out: W, rows: &[LearningCurveRow], dim: usize, with_sigma: bool) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["n".to_string()];
    let letters = ["a_hat", "b_hat", "c_hat"];
    for k in 0..=dim {
        header.push(letters.get(k).map_or_else(|| format!("coef{k}_hat"), |s| s.to_string()));
    }
    if with_sigma {
        header.push("sigma_hat".into());
    }
    header.extend(["error_one", "error_two", "opt_one", "opt_two"].map(String::from));
    writer.write_record(&header)?;
    let width = dim + 1 + usize::from(with_sigma);
    for r in rows {
        let mut rec = vec![r.n.to_string()];
        for k in 0..width {
            rec.push(r.fitted_params.get(k).map_or_else(|| "NaN".to_string(), f64::to_string));
        }
        rec.extend([r.error_one_step, r.error_two_step, r.opt_one, r.opt_two].map(|v| v.to_string()));
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}
