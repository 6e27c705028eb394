//! Equal-price comparison of the hybrid contract with a capped indemnity
//! contract `min(Y, m)`.

use std::io::Write;

use serde::Serialize;

use crate::calibrate::one_step_calibrate;
use crate::contract::{capped_payout, compensation_ratio, hybrid_payouts, split_premium, PayoffFamily};
use crate::dists::LossSample;
use crate::objective::MetricConfig;
use crate::stats::pairwise_sum;
use crate::{Error, Result};

/// `(1 + tau_trad) * mean(min(y, m))`.
pub fn capped_premium(losses: &[f64], m: f64, tau_trad: f64) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(m >= 0.0) {
        return Err(Error::InvalidArgument(format!("cap {m} must be non-negative")));
    }
    let paid: Vec<f64> = losses.iter().map(|&y| capped_payout(y, m)).collect();
    Ok((1.0 + tau_trad) * pairwise_sum(&paid) / losses.len() as f64)
}

/// Smallest cap `m` whose capped premium reaches `target`, by bisection on
/// `[0, max(y)]` down to floating-point resolution.
pub fn solve_cap(losses: &[f64], target: f64, tau_trad: f64) -> Result<f64> {
    let top = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let saturation = capped_premium(losses, top.max(0.0), tau_trad)?;
    if !(target > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target premium {target} must be positive"
        )));
    }
    if target > saturation * (1.0 + 1e-12) {
        return Err(Error::NoSolution { target, saturation });
    }
    let (mut lo, mut hi) = (0.0, top);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if capped_premium(losses, mid, tau_trad)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub s: f64,
    pub tau_index: f64,
    pub theta: Vec<f64>,
    pub premium_hybrid: f64,
    pub m_of_s: f64,
    /// Mean of `X_HB / Y`.
    pub ratio_hybrid: f64,
    /// Mean of `min(Y, m) / Y`.
    pub ratio_capped: f64,
    /// The capped premium could not reach the hybrid premium; `m_of_s` is
    /// then `max(y)`.
    pub saturated: bool,
}

/// Where `theta` comes from at each threshold of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaSource {
    /// One calibrated value reused at every `s`.
    Fixed(Vec<f64>),
    /// One-step recalibration at every `s`.
    Recalibrate(MetricConfig),
}

fn mean_ratio(paid: impl Iterator<Item = f64>, losses: &[f64]) -> f64 {
    let ratios: Vec<f64> = paid.zip(losses).map(|(x, &y)| compensation_ratio(x, y)).collect();
    pairwise_sum(&ratios) / losses.len() as f64
}

/// Equal-price comparison over every `(s, tau_index)` pair.
pub fn comparison_sweep(
    sample: &LossSample,
    family: &PayoffFamily,
    theta: &ThetaSource,
    s_grid: &[f64],
    tau_index_list: &[f64],
    tau_trad: f64,
) -> Result<Vec<ComparisonRow>> {
    let losses = sample.losses();
    let top = losses.iter().copied().fold(0.0, f64::max);
    let mut rows = Vec::with_capacity(s_grid.len() * tau_index_list.len());
    for &s in s_grid {
        let fam = family.with_threshold(s)?;
        let theta_s = match theta {
            ThetaSource::Fixed(t) => t.clone(),
            ThetaSource::Recalibrate(config) => one_step_calibrate(sample, &fam, config)?.theta_hat,
        };
        let hybrid = hybrid_payouts(sample, &fam, &theta_s)?;
        let ratio_hybrid = mean_ratio(hybrid.iter().map(|p| p.x), losses);
        for &tau_index in tau_index_list {
            let premium_hybrid = split_premium(sample, &fam, &theta_s, tau_trad, tau_index)?;
            let (m_of_s, saturated) = match solve_cap(losses, premium_hybrid, tau_trad) {
                Ok(m) => (m, false),
                Err(Error::NoSolution { .. }) => (top, true),
                Err(e) => return Err(e),
            };
            rows.push(ComparisonRow {
                s,
                tau_index,
                theta: theta_s.clone(),
                premium_hybrid,
                m_of_s,
                ratio_hybrid,
                ratio_capped: mean_ratio(losses.iter().map(|&y| capped_payout(y, m_of_s)), losses),
                saturated,
            });
        }
    }
    Ok(rows)
}

/// Writes the sweep as CSV.
pub fn write_comparison<W: Write>(out: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "s",
        "tau_index",
        "premium_hybrid",
        "m_of_s",
        "ratio_hybrid",
        "ratio_capped",
        "saturated",
    ])?;
    for r in rows {
        writer.write_record([
            r.s.to_string(),
            r.tau_index.to_string(),
            r.premium_hybrid.to_string(),
            r.m_of_s.to_string(),
            r.ratio_hybrid.to_string(),
            r.ratio_capped.to_string(),
            r.saturated.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
