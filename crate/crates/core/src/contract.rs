//! Contract payoffs: the hybrid contract (indemnity up to `s`, index payout
//! above), its covariate-triggered variant, the capped indemnity contract, and
//! premiums.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dists::{CovariateSample, LossSample, TailLinkModel};
use crate::stats::pairwise_sum;
use crate::{Error, Result};

/// Shape of the unclamped index payout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariablePart {
    /// `exp(<theta, w>)`
    ExpLink1D,
    /// `<theta, w>`
    Linear2D,
}

/// Statistic capping the index payout from above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpperStat {
    MeanExcess,
    MedianExcess,
}

/// Which model backs the clamp statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClampModel {
    /// Estimated from data.
    Fitted,
    /// The data-generating model (simulation oracle runs).
    True,
}

/// Axis-aligned box of admissible `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ThetaBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidArgument(
                "theta box bounds must have equal, positive length".into(),
            ));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "empty theta box {lower:?} .. {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (l, u))| *l <= *t && *t <= *u)
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    /// Box for a linear variable part: axis `j` spans from 0 to
    /// `2 * cap / mean(w_j)`, so that at the box corners the coordinate-wise
    /// payout `theta_j * mean(w_j)` ranges over `[0, 2 * cap]`.
    pub fn scaled_to(cov: &CovariateSample, cap: f64) -> Result<Self> {
        if cov.is_empty() || !(cap > 0.0) || !cap.is_finite() {
            return Err(Error::InvalidArgument(format!("cannot scale a theta box to cap {cap}")));
        }
        let mut lower = Vec::with_capacity(cov.dim());
        let mut upper = Vec::with_capacity(cov.dim());
        for j in 0..cov.dim() {
            let column: Vec<f64> = cov.rows().map(|w| w[j]).collect();
            let m = crate::stats::mean(&column)?;
            if m == 0.0 {
                return Err(Error::InvalidArgument(format!("covariate {} has zero mean", j + 1)));
            }
            let end = 2.0 * cap / m;
            lower.push(end.min(0.0));
            upper.push(end.max(0.0));
        }
        Self::new(lower, upper)
    }
}

/// The parametric family `phi_theta(w) = max(min(stat(s, w), v_theta(w)), s) / s`.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffFamily {
    pub variable: VariablePart,
    pub upper_stat: UpperStat,
    pub s: f64,
    pub model: TailLinkModel,
    pub clamp_model: ClampModel,
    pub theta_domain: ThetaBox,
}

impl PayoffFamily {
    pub fn new(
        variable: VariablePart,
        upper_stat: UpperStat,
        s: f64,
        model: TailLinkModel,
        clamp_model: ClampModel,
        theta_domain: ThetaBox,
    ) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("threshold s = {s} must be positive")));
        }
        if s < model.support_start() {
            return Err(Error::OutsideSupport {
                value: s,
                start: model.support_start(),
            });
        }
        if theta_domain.dim() != model.covariate_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.covariate_dim(),
                got: theta_domain.dim(),
            });
        }
        Ok(Self {
            variable,
            upper_stat,
            s,
            model,
            clamp_model,
            theta_domain,
        })
    }

    /// Linear family with a median-excess clamp from `model`, on the box
    /// [`ThetaBox::scaled_to`] the median clamp over `cov`.
    pub fn linear_scaled(cov: &CovariateSample, model: TailLinkModel, clamp_model: ClampModel, s: f64) -> Result<Self> {
        let open = ThetaBox::new(vec![f64::MIN; cov.dim()], vec![f64::MAX; cov.dim()])?;
        let probe = Self::new(
            VariablePart::Linear2D,
            UpperStat::MedianExcess,
            s,
            model,
            clamp_model,
            open,
        )?;
        let cap = crate::stats::median(&probe.caps(cov)?)?;
        Ok(Self {
            theta_domain: ThetaBox::scaled_to(cov, cap)?,
            ..probe
        })
    }

    /// Same family at another threshold.
    pub fn with_threshold(&self, s: f64) -> Result<Self> {
        Self::new(
            self.variable,
            self.upper_stat,
            s,
            self.model.clone(),
            self.clamp_model,
            self.theta_domain.clone(),
        )
    }

    /// Same family with another clamp model.
    pub fn with_model(&self, model: TailLinkModel, clamp_model: ClampModel) -> Result<Self> {
        Self::new(
            self.variable,
            self.upper_stat,
            self.s,
            model,
            clamp_model,
            self.theta_domain.clone(),
        )
    }

    pub fn variable_part(&self, theta: &[f64], w: &[f64]) -> f64 {
        let inner: f64 = theta.iter().zip(w).map(|(t, x)| t * x).sum();
        match self.variable {
            VariablePart::ExpLink1D => inner.exp(),
            VariablePart::Linear2D => inner,
        }
    }

    /// The clamp statistic at `w`.
    pub fn upper_stat_at(&self, w: &[f64]) -> Result<f64> {
        match self.upper_stat {
            UpperStat::MeanExcess => self.model.mean_excess(self.s, w),
            UpperStat::MedianExcess => self.model.median_excess(self.s, w),
        }
    }

    /// Clamp statistic for every row of `cov`.
    pub fn caps(&self, cov: &CovariateSample) -> Result<Vec<f64>> {
        cov.rows().map(|w| self.upper_stat_at(w)).collect()
    }

    /// `phi_theta(w)` given a precomputed clamp statistic.
    pub fn phi_with_cap(&self, theta: &[f64], w: &[f64], cap: f64) -> f64 {
        self.variable_part(theta, w).min(cap).max(self.s) / self.s
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if !self.theta_domain.contains(theta) {
            return Err(Error::ThetaOutOfDomain { theta: theta.to_vec() });
        }
        Ok(())
    }

    /// `phi_theta(w) >= 1`.
    pub fn payoff_phi(&self, theta: &[f64], w: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        let cap = self.upper_stat_at(w)?;
        Ok(self.phi_with_cap(theta, w, cap))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Traditional,
    Index,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractPayout {
    pub x: f64,
    pub branch: Branch,
}

/// `X = y` if `y <= s`, `s * phi_theta(w)` otherwise.
pub fn hybrid_payout(y: f64, w: &[f64], family: &PayoffFamily, theta: &[f64]) -> Result<ContractPayout> {
    if !(y >= 0.0) {
        return Err(Error::InvalidArgument(format!("loss {y} must be non-negative")));
    }
    if y <= family.s {
        family.check_theta(theta)?;
        return Ok(ContractPayout {
            x: y,
            branch: Branch::Traditional,
        });
    }
    Ok(ContractPayout {
        x: family.s * family.payoff_phi(theta, w)?,
        branch: Branch::Index,
    })
}

#[inline]
pub(crate) fn hybrid_x(y: f64, s: f64, index_pay: f64) -> f64 {
    if y <= s {
        y
    } else {
        index_pay
    }
}

/// Covariate-triggered variant: the index payout fires when
/// `s * phi_theta(w) > s_tilde`, whatever the loss.
pub fn trigger_payout(y: f64, w: &[f64], family: &PayoffFamily, theta: &[f64], s_tilde: f64) -> Result<ContractPayout> {
    if !(y >= 0.0) {
        return Err(Error::InvalidArgument(format!("loss {y} must be non-negative")));
    }
    if !(s_tilde > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "trigger level {s_tilde} must be positive"
        )));
    }
    let index = family.s * family.payoff_phi(theta, w)?;
    Ok(if index > s_tilde {
        ContractPayout {
            x: index,
            branch: Branch::Index,
        }
    } else {
        ContractPayout {
            x: y,
            branch: Branch::Traditional,
        }
    })
}

/// `min(y, m)`; an infinite cap returns `y`.
pub fn capped_payout(y: f64, m: f64) -> f64 {
    y.min(m)
}

/// `x / y` with `0 / 0 = 1`.
pub fn compensation_ratio(x: f64, y: f64) -> f64 {
    if y == 0.0 {
        if x == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        x / y
    }
}

fn index_payouts(sample: &LossSample, family: &PayoffFamily, theta: &[f64]) -> Result<Vec<f64>> {
    family.check_theta(theta)?;
    if sample.dim() != family.model.covariate_dim() {
        return Err(Error::DimensionMismatch {
            expected: family.model.covariate_dim(),
            got: sample.dim(),
        });
    }
    // the clamp is only needed (and only has to exist) above s
    sample
        .iter()
        .map(|(y, w)| {
            if y <= family.s {
                Ok(0.0)
            } else {
                Ok(family.s * family.phi_with_cap(theta, w, family.upper_stat_at(w)?))
            }
        })
        .collect()
}

/// `(1 + tau) * mean(X_theta,i)`.
pub fn empirical_premium(sample: &LossSample, family: &PayoffFamily, theta: &[f64], tau: f64) -> Result<f64> {
    split_premium(sample, family, theta, tau, tau)
}

/// Premium with separate loadings on the indemnity part and the index part.
pub fn split_premium(
    sample: &LossSample,
    family: &PayoffFamily,
    theta: &[f64],
    tau_trad: f64,
    tau_index: f64,
) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let index = index_payouts(sample, family, theta)?;
    let n = sample.len() as f64;
    let (trad, idx): (Vec<f64>, Vec<f64>) = sample
        .losses()
        .iter()
        .zip(&index)
        .map(|(&y, &ix)| if y <= family.s { (y, 0.0) } else { (0.0, ix) })
        .unzip();
    Ok((1.0 + tau_trad) * pairwise_sum(&trad) / n + (1.0 + tau_index) * pairwise_sum(&idx) / n)
}

/// Hybrid payouts for every row.
pub fn hybrid_payouts(sample: &LossSample, family: &PayoffFamily, theta: &[f64]) -> Result<Vec<ContractPayout>> {
    sample.iter().map(|(y, w)| hybrid_payout(y, w, family, theta)).collect()
}

/// Mismatch and overcompensation statistics of the covariate trigger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TriggerDiagnostics {
    /// Share of rows with `y <= s` where the trigger fires.
    pub p_minus: f64,
    /// Share of rows with `y > s` where the trigger does not fire.
    pub p_plus: f64,
    /// Rows in the first group paid more than their loss.
    pub overcompensated: usize,
    /// Mean of `(s * phi - y)_+` over the first group (scaled by `1/n`).
    pub delta: f64,
}

pub fn trigger_diagnostics(
    sample: &LossSample,
    family: &PayoffFamily,
    theta: &[f64],
    s_tilde: f64,
) -> Result<TriggerDiagnostics> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut minus = 0usize;
    let mut plus = 0usize;
    let mut over = 0usize;
    let mut excess = Vec::new();
    for (y, w) in sample.iter() {
        let index = family.s * family.payoff_phi(theta, w)?;
        let fires = index > s_tilde;
        if y <= family.s && fires {
            minus += 1;
            if index > y {
                over += 1;
                excess.push(index - y);
            }
        } else if y > family.s && !fires {
            plus += 1;
        }
    }
    let n = sample.len() as f64;
    Ok(TriggerDiagnostics {
        p_minus: minus as f64 / n,
        p_plus: plus as f64 / n,
        overcompensated: over,
        delta: pairwise_sum(&excess) / n,
    })
}

/// Picks the trigger level among `candidates` minimizing the empirical
/// mismatch `P(E-) + P(E+)`; ties go to the larger level.
pub fn tune_trigger_level(
    sample: &LossSample,
    family: &PayoffFamily,
    theta: &[f64],
    candidates: &[f64],
) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &c in candidates {
        let d = trigger_diagnostics(sample, family, theta, c)?;
        let miss = d.p_minus + d.p_plus;
        if best.is_none_or(|(bm, bc)| miss < bm || (miss == bm && c > bc)) {
            best = Some((miss, c));
        }
    }
    best.map(|(_, c)| c)
        .ok_or_else(|| Error::InvalidArgument("no candidate trigger levels".into()))
}

/// Writes `(y, w_1.., branch, x)` rows.
pub fn write_payout_trace<W: Write>(out: W, sample: &LossSample, family: &PayoffFamily, theta: &[f64]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["y".to_string()];
    header.extend((1..=sample.dim()).map(|k| format!("w{k}")));
    header.push("branch".into());
    header.push("x".into());
    writer.write_record(&header)?;
    for (y, w) in sample.iter() {
        let p = hybrid_payout(y, w, family, theta)?;
        let mut rec = vec![y.to_string()];
        rec.extend(w.iter().map(f64::to_string));
        rec.push(format!("{:?}", p.branch));
        rec.push(p.x.to_string());
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}
