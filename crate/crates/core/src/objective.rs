//! The decision metric `E[L(X/Y - f(pi))]`, its limit functions, the special
//! functions `Phi0`/`Phi1`, and the exact and tail-approximated objectives.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::contract::{compensation_ratio, hybrid_x, PayoffFamily};
use crate::dists::{CovariateSample, LossSample, TailLinkModel};
use crate::quad::integrate_with_breaks;
use crate::stats::pairwise_sum;
use crate::{Error, Result};

/// Utility applied to the compensation ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Utility {
    Identity,
    ExpUtility { mu: f64 },
}

/// Price-aversion function of the premium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PriceAversion {
    /// `kappa / (1 + exp(-beta * pi))`
    Logistic { kappa: f64, beta: f64 },
    /// `kappa * pi^beta / (1 + pi^beta)`
    Rational { kappa: f64, beta: f64 },
}

/// Which variant of `Phi1` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Phi1Form {
    /// `x^(-1/gamma) * int_0^x v^(1/gamma) phi1(v) dv`
    #[default]
    WithPrefactor,
    /// `int_0^x v^(1/gamma) phi1(v) dv`, without the prefactor.
    NoPrefactor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub utility: Utility,
    pub aversion: PriceAversion,
    /// Premium at which `phi0`/`phi1` are evaluated; `None` uses the current
    /// empirical premium.
    pub pi_plus: Option<f64>,
    /// Loading factor.
    pub tau: f64,
    pub phi1_form: Phi1Form,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            utility: Utility::ExpUtility { mu: 1.5 },
            aversion: PriceAversion::Rational {
                kappa: 1.415,
                beta: 1.65,
            },
            pi_plus: None,
            tau: 0.10,
            phi1_form: Phi1Form::WithPrefactor,
        }
    }
}

const QUAD_TOL: f64 = 1e-10;
// above this value of mu*x the incomplete-gamma series gets long
const SERIES_LIMIT: f64 = 40.0;

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if let Utility::ExpUtility { mu } = self.utility {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::InvalidConfig(format!("mu = {mu} must be positive")));
            }
        }
        let (PriceAversion::Logistic { kappa, beta } | PriceAversion::Rational { kappa, beta }) = self.aversion;
        if !(kappa >= 0.0 && kappa.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "price aversion needs kappa >= 0 and beta > 0, got kappa = {kappa}, beta = {beta}"
            )));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!("loading tau = {} must be >= 0", self.tau)));
        }
        if let Some(p) = self.pi_plus {
            if !(p >= 0.0) {
                return Err(Error::InvalidConfig(format!("pi_plus = {p} must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn metric_l(&self, x: f64) -> f64 {
        match self.utility {
            Utility::Identity => x,
            Utility::ExpUtility { mu } => -(-mu * x).exp(),
        }
    }

    pub fn price_f(&self, pi: f64) -> Result<f64> {
        if !(pi >= 0.0) {
            return Err(Error::InvalidArgument(format!("premium {pi} must be non-negative")));
        }
        Ok(self.price_f_unchecked(pi))
    }

    fn price_f_unchecked(&self, pi: f64) -> f64 {
        match self.aversion {
            PriceAversion::Logistic { kappa, beta } => kappa / (1.0 + (-beta * pi).exp()),
            PriceAversion::Rational { kappa, beta } => {
                if pi == 0.0 {
                    0.0
                } else {
                    kappa / (1.0 + pi.powf(-beta))
                }
            }
        }
    }

    fn aversion_at_limit(&self, pi_current: f64) -> Result<f64> {
        self.price_f(self.pi_plus.unwrap_or(pi_current))
    }

    fn identity_scale(&self, pi_current: f64) -> Result<f64> {
        let f = self.aversion_at_limit(pi_current)?;
        if f >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "identity utility needs f(pi+) < 1, got {f}"
            )));
        }
        Ok(f)
    }

    /// `phi0(t) = lim L(t - f) / L(1 - f)`; `pi_current` stands in for
    /// `pi_plus` when that is unset.
    pub fn phi0(&self, t: f64, pi_current: f64) -> Result<f64> {
        match self.utility {
            Utility::ExpUtility { mu } => Ok((-mu * (t - 1.0)).exp()),
            Utility::Identity => {
                let f = self.identity_scale(pi_current)?;
                Ok((t - f) / (1.0 - f))
            }
        }
    }

    /// Derivative of `phi0`.
    pub fn phi1(&self, t: f64, pi_current: f64) -> Result<f64> {
        match self.utility {
            Utility::ExpUtility { mu } => Ok(-mu * (-mu * (t - 1.0)).exp()),
            Utility::Identity => {
                let f = self.identity_scale(pi_current)?;
                Ok(1.0 / (1.0 - f))
            }
        }
    }

    fn check_phi_args(x: f64, gamma: f64) -> Result<()> {
        if !(x > 0.0 && x.is_finite() && gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Phi needs x > 0 and gamma > 0, got x = {x}, gamma = {gamma}"
            )));
        }
        Ok(())
    }

    /// `Phi1(x, gamma)` in closed form.
    pub fn big_phi1(&self, x: f64, gamma: f64, pi_current: f64) -> Result<f64> {
        Self::check_phi_args(x, gamma)?;
        let prefactor = match self.phi1_form {
            Phi1Form::WithPrefactor => 1.0,
            Phi1Form::NoPrefactor => (x.ln() / gamma).exp(),
        };
        let base = match self.utility {
            Utility::Identity => {
                let f = self.identity_scale(pi_current)?;
                x / ((1.0 + 1.0 / gamma) * (1.0 - f))
            }
            Utility::ExpUtility { mu } => exp_utility_phi1(mu, x, gamma),
        };
        Ok(base * prefactor)
    }

    /// `Phi1(x, gamma)` by adaptive quadrature, split at `v = 1`.
    pub fn big_phi1_quadrature(&self, x: f64, gamma: f64, pi_current: f64) -> Result<f64> {
        Self::check_phi_args(x, gamma)?;
        // fail early on invalid identity configurations
        self.phi1(1.0, pi_current)?;
        let scale = match self.phi1_form {
            Phi1Form::WithPrefactor => x,
            Phi1Form::NoPrefactor => 1.0,
        };
        let integrand = |v: f64| {
            let weight = if v == 0.0 { 0.0 } else { (v / scale).powf(1.0 / gamma) };
            weight * self.phi1(v, pi_current).unwrap_or(f64::NAN)
        };
        Ok(integrate_with_breaks(integrand, 0.0, x, &[1.0], QUAD_TOL).value)
    }

    /// `Phi0(x, gamma) = 1 - phi0(x) + Phi1(x, gamma)`.
    pub fn big_phi0(&self, x: f64, gamma: f64, pi_current: f64) -> Result<f64> {
        Ok(1.0 - self.phi0(x, pi_current)? + self.big_phi1(x, gamma, pi_current)?)
    }

    /// `L(1 - f(pi)) * (1 - S * Phi0(phi, gamma))`.
    pub fn psi(&self, pi: f64, phi_val: f64, survival: f64, gamma: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&survival) {
            return Err(Error::InvalidArgument(format!("survival {survival} outside [0, 1]")));
        }
        let base = self.metric_l(1.0 - self.price_f(pi)?);
        if survival == 0.0 {
            return Ok(base);
        }
        Ok(base * (1.0 - survival * self.big_phi0(phi_val, gamma, pi)?))
    }
}

/// `-mu e^mu x^(-1/g) mu^-(1+1/g) gamma_lower(1 + 1/g, mu x)`.
fn exp_utility_phi1(mu: f64, x: f64, gamma: f64) -> f64 {
    if mu * x <= SERIES_LIMIT {
        exp_utility_phi1_series(mu, x, gamma)
    } else {
        exp_utility_phi1_regularized(mu, x, gamma)
    }
}

// gamma_lower(a, z) = z^a e^-z sum_k z^k / (a (a+1) ... (a+k)), which cancels
// the powers of x and mu in front
fn exp_utility_phi1_series(mu: f64, x: f64, gamma: f64) -> f64 {
    let a = 1.0 + 1.0 / gamma;
    let z = mu * x;
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= z / (a + k);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    -mu * x * (mu * (1.0 - x)).exp() * sum
}

fn exp_utility_phi1_regularized(mu: f64, x: f64, gamma: f64) -> f64 {
    let a = 1.0 + 1.0 / gamma;
    let log_mag = mu - x.ln() / gamma - a * mu.ln() + ln_gamma(a);
    -mu * log_mag.exp() * gamma_lr(a, mu * x)
}

fn check_sample(sample: &LossSample, family: &PayoffFamily) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if sample.dim() != family.model.covariate_dim() {
        return Err(Error::DimensionMismatch {
            expected: family.model.covariate_dim(),
            got: sample.dim(),
        });
    }
    Ok(())
}

/// Value of an objective together with the premium used inside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub value: f64,
    pub premium: f64,
}

/// Exact empirical objective on a joint sample, with the clamp statistic of
/// every exceedance cached.
#[derive(Debug, Clone)]
pub struct EmpiricalObjective<'a> {
    sample: &'a LossSample,
    family: &'a PayoffFamily,
    config: MetricConfig,
    caps: Vec<f64>,
    traditional_sum: f64,
}

impl<'a> EmpiricalObjective<'a> {
    pub fn new(sample: &'a LossSample, family: &'a PayoffFamily, config: MetricConfig) -> Result<Self> {
        check_sample(sample, family)?;
        config.validate()?;
        let mut caps = Vec::with_capacity(sample.len());
        let mut trad = Vec::with_capacity(sample.len());
        for (y, w) in sample.iter() {
            if y <= family.s {
                caps.push(f64::NAN);
                trad.push(y);
            } else {
                caps.push(family.upper_stat_at(w)?);
                trad.push(0.0);
            }
        }
        Ok(Self {
            sample,
            family,
            config,
            caps,
            traditional_sum: pairwise_sum(&trad),
        })
    }

    pub fn sample(&self) -> &LossSample {
        self.sample
    }

    fn index_payouts(&self, theta: &[f64]) -> Vec<f64> {
        let s = self.family.s;
        self.sample
            .iter()
            .zip(&self.caps)
            .map(|((y, w), &cap)| {
                if y <= s {
                    0.0
                } else {
                    s * self.family.phi_with_cap(theta, w, cap)
                }
            })
            .collect()
    }

    /// `(1 + tau) * mean(X_theta)`.
    pub fn premium(&self, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(self.premium_from(&self.index_payouts(theta)))
    }

    fn premium_from(&self, index: &[f64]) -> f64 {
        let n = self.sample.len() as f64;
        let tau = self.config.tau;
        (1.0 + tau) * self.traditional_sum / n + (1.0 + tau) * pairwise_sum(index) / n
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if !self.family.theta_domain.contains(theta) {
            return Err(Error::ThetaOutOfDomain { theta: theta.to_vec() });
        }
        Ok(())
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<Evaluation> {
        self.check_theta(theta)?;
        let index = self.index_payouts(theta);
        let premium = self.premium_from(&index);
        let f = self.config.price_f(premium)?;
        let s = self.family.s;
        let base = self.config.metric_l(1.0 - f);
        let terms: Vec<f64> = self
            .sample
            .losses()
            .iter()
            .zip(&index)
            .map(|(&y, &x)| {
                if y <= s {
                    base
                } else {
                    self.config.metric_l(compensation_ratio(x, y) - f)
                }
            })
            .collect();
        Ok(Evaluation {
            value: pairwise_sum(&terms) / self.sample.len() as f64,
            premium,
        })
    }
}

/// `(1/n) sum L(X_i / Y_i - f(pi_hat))` with `pi_hat` from the same sample.
pub fn empirical_objective(
    sample: &LossSample,
    family: &PayoffFamily,
    theta: &[f64],
    config: &MetricConfig,
) -> Result<f64> {
    check_sample(sample, family)?;
    let premium = crate::contract::empirical_premium(sample, family, theta, config.tau)?;
    let f = config.price_f(premium)?;
    let terms = sample
        .iter()
        .map(|(y, w)| {
            let cap = if y <= family.s {
                f64::NAN
            } else {
                family.upper_stat_at(w)?
            };
            let x = hybrid_x(y, family.s, family.s * family.phi_with_cap(theta, w, cap));
            Ok(config.metric_l(compensation_ratio(x, y) - f))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&terms) / sample.len() as f64)
}

/// Empirical objective of an arbitrary payout vector, with the premium
/// `(1 + tau) * mean(x)` taken from the same payouts.
pub fn objective_from_payouts(payouts: &[f64], losses: &[f64], config: &MetricConfig) -> Result<Evaluation> {
    if payouts.is_empty() {
        return Err(Error::EmptySample);
    }
    if payouts.len() != losses.len() {
        return Err(Error::InvalidArgument(format!(
            "{} payouts for {} losses",
            payouts.len(),
            losses.len()
        )));
    }
    let n = payouts.len() as f64;
    let premium = (1.0 + config.tau) * pairwise_sum(payouts) / n;
    let f = config.price_f(premium)?;
    let terms: Vec<f64> = payouts
        .iter()
        .zip(losses)
        .map(|(&x, &y)| config.metric_l(compensation_ratio(x, y) - f))
        .collect();
    Ok(Evaluation {
        value: pairwise_sum(&terms) / n,
        premium,
    })
}

fn check_cov(fitted: &TailLinkModel, cov: &CovariateSample, family: &PayoffFamily) -> Result<()> {
    if cov.is_empty() {
        return Err(Error::EmptySample);
    }
    for dim in [fitted.covariate_dim(), family.model.covariate_dim()] {
        if dim != cov.dim() {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: cov.dim(),
            });
        }
    }
    Ok(())
}

/// Tail approximation as the average of `Psi` over the covariate sample.
pub fn approx_objective(
    fitted: &TailLinkModel,
    cov: &CovariateSample,
    family: &PayoffFamily,
    theta: &[f64],
    config: &MetricConfig,
    pi_hat: f64,
) -> Result<f64> {
    check_cov(fitted, cov, family)?;
    let terms = cov
        .rows()
        .map(|w| {
            let phi = family.payoff_phi(theta, w)?;
            let survival = fitted.survival(family.s, w)?;
            config.psi(pi_hat, phi, survival, fitted.tail_index(w)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&terms) / cov.len() as f64)
}

/// Same quantity with the constant `L(1 - f(pi_hat))` pulled out of the sum.
pub fn approx_objective_factored(
    fitted: &TailLinkModel,
    cov: &CovariateSample,
    family: &PayoffFamily,
    theta: &[f64],
    config: &MetricConfig,
    pi_hat: f64,
) -> Result<f64> {
    check_cov(fitted, cov, family)?;
    let inner = cov
        .rows()
        .map(|w| {
            let phi = family.payoff_phi(theta, w)?;
            let survival = fitted.survival(family.s, w)?;
            Ok(1.0 - survival * config.big_phi0(phi, fitted.tail_index(w)?, pi_hat)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(config.metric_l(1.0 - config.price_f(pi_hat)?) * pairwise_sum(&inner) / cov.len() as f64)
}

#[derive(Debug, Clone, Copy)]
struct TailRow {
    gamma: f64,
    survival: f64,
    cap: f64,
    // Phi0 at the floor and at the cap; only cached when it does not depend
    // on the premium
    phi0_floor: f64,
    phi0_cap: f64,
}

/// Tail approximation over a fixed covariate sample with per-row tail
/// quantities cached; evaluates the factored form.
#[derive(Debug, Clone)]
pub struct ApproxObjective<'a> {
    cov: &'a CovariateSample,
    family: &'a PayoffFamily,
    config: MetricConfig,
    rows: Vec<TailRow>,
}

impl<'a> ApproxObjective<'a> {
    pub fn new(
        fitted: &TailLinkModel,
        cov: &'a CovariateSample,
        family: &'a PayoffFamily,
        config: MetricConfig,
    ) -> Result<Self> {
        check_cov(fitted, cov, family)?;
        config.validate()?;
        let premium_free = matches!(config.utility, Utility::ExpUtility { .. });
        let s = family.s;
        let rows = cov
            .rows()
            .map(|w| {
                let gamma = fitted.tail_index(w)?;
                let cap = family.upper_stat_at(w)?;
                let (phi0_floor, phi0_cap) = if premium_free {
                    let top = cap.max(s) / s;
                    (config.big_phi0(1.0, gamma, 0.0)?, config.big_phi0(top, gamma, 0.0)?)
                } else {
                    (f64::NAN, f64::NAN)
                };
                Ok(TailRow {
                    gamma,
                    survival: fitted.survival(s, w)?,
                    cap,
                    phi0_floor,
                    phi0_cap,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cov,
            family,
            config,
            rows,
        })
    }

    pub fn evaluate(&self, theta: &[f64], pi_hat: f64) -> Result<f64> {
        if !self.family.theta_domain.contains(theta) {
            return Err(Error::ThetaOutOfDomain { theta: theta.to_vec() });
        }
        let s = self.family.s;
        let cached = matches!(self.config.utility, Utility::ExpUtility { .. });
        let inner = self
            .cov
            .rows()
            .zip(&self.rows)
            .map(|(w, row)| {
                if row.survival == 0.0 {
                    return Ok(1.0);
                }
                let v = self.family.variable_part(theta, w);
                let phi0 = if cached && v <= s {
                    row.phi0_floor
                } else if cached && v >= row.cap {
                    row.phi0_cap
                } else {
                    let phi = self.family.phi_with_cap(theta, w, row.cap);
                    self.config.big_phi0(phi, row.gamma, pi_hat)?
                };
                Ok(1.0 - row.survival * phi0)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(self.config.metric_l(1.0 - self.config.price_f(pi_hat)?) * pairwise_sum(&inner) / self.cov.len() as f64)
    }
}

/// Objective of the partial cover `min(Y, s)` for each `s` in the grid.
pub fn partial_cover_curve(losses: &[f64], s_grid: &[f64], config: &MetricConfig) -> Result<Vec<(f64, f64)>> {
    if losses.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = losses.len() as f64;
    s_grid
        .iter()
        .map(|&s| {
            let paid: Vec<f64> = losses.iter().map(|&y| y.min(s)).collect();
            let premium = (1.0 + config.tau) * pairwise_sum(&paid) / n;
            let f = config.price_f(premium)?;
            let terms: Vec<f64> = paid
                .iter()
                .zip(losses)
                .map(|(&x, &y)| config.metric_l(compensation_ratio(x, y) - f))
                .collect();
            Ok((s, pairwise_sum(&terms) / n))
        })
        .collect()
}

/// One point of an objective curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub theta: Vec<f64>,
    pub l_hat: f64,
    pub l_star_hat: f64,
    pub premium: f64,
}

/// Writes `(theta_1.., L_hat, L_star_hat, premium)` rows.
pub fn write_objective_curve<W: Write>(out: W, points: &[CurvePoint]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let dim = points.first().map_or(1, |p| p.theta.len());
    let mut header: Vec<String> = (1..=dim).map(|k| format!("theta{k}")).collect();
    header.extend(["L_hat", "L_star_hat", "premium"].map(String::from));
    writer.write_record(&header)?;
    for p in points {
        let mut rec: Vec<String> = p.theta.iter().map(f64::to_string).collect();
        rec.extend([p.l_hat, p.l_star_hat, p.premium].map(|v| v.to_string()));
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}
