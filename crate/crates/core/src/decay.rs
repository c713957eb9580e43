//! Impact decay after the last informed trade.
//!
//! After a meta-order of volume `L` peaks at `p_max = C·L^δ`, the market
//! maker cannot tell whether the informed trader is still active. With
//! `P1 = P(1|t)` the probability that it is, minimizing expected losses
//! gives `p_t/p_max = max(1/(δ+1), P1^(−δ) − ((1−P1)/P1)^δ)`. Prices are
//! continuous in this module.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::csv::{fmt_sig, write_rows};
use crate::error::{Error, Result};
use crate::numerics::solve_root;

/// `P(1|t)`, the probability that the informed trader is still active `t`
/// trades after its last trade, for a meta-order that lasted `t_max`.
pub trait SurvivalEstimator {
    fn p1(&self, t: f64, t_max: f64) -> f64;
}

/// `P(1|t) = (1 − 1/t_max)^t`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometric;

impl SurvivalEstimator for Geometric {
    fn p1(&self, t: f64, t_max: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        if t_max <= 1.0 {
            return 0.0;
        }
        (t * (-1.0 / t_max).ln_1p()).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Geometric,
}

impl SurvivalEstimator for EstimatorKind {
    fn p1(&self, t: f64, t_max: f64) -> f64 {
        match self {
            EstimatorKind::Geometric => Geometric.p1(t, t_max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayParams {
    pub delta: f64,
    pub t_max: f64,
    pub volume: f64,
    pub estimator: EstimatorKind,
}

impl DecayParams {
    pub fn new(delta: f64, t_max: f64, volume: f64) -> Result<Self> {
        check_delta(delta)?;
        if !(t_max >= 1.0) {
            return Err(Error::Parameter(format!(
                "t_max must be at least 1, got {t_max}"
            )));
        }
        if !(volume > 0.0) {
            return Err(Error::Parameter(format!(
                "volume must be positive, got {volume}"
            )));
        }
        Ok(Self {
            delta,
            t_max,
            volume,
            estimator: EstimatorKind::Geometric,
        })
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )))
    }
}

/// Unclamped `P1^(−δ) − ((1−P1)/P1)^δ`; `P1 > 0`.
fn raw_ratio(p1: f64, delta: f64) -> f64 {
    p1.powf(-delta) - ((1.0 - p1) / p1).powf(delta)
}

/// `p_t/p_max`, clamped to `[1/(δ+1), 1]`. `P1 = 0` gives the floor.
pub fn decay_ratio(p1: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(0.0..=1.0).contains(&p1) {
        return Err(Error::Domain(format!("P1 must lie in [0, 1], got {p1}")));
    }
    let floor = 1.0 / (delta + 1.0);
    if p1 == 0.0 {
        return Ok(floor);
    }
    Ok(raw_ratio(p1, delta).clamp(floor, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    /// `(t, p_t/p_max)`.
    pub points: Vec<(f64, f64)>,
    pub t_max: f64,
}

pub fn decay_curve(params: &DecayParams, t_grid: &[f64]) -> Result<DecayCurve> {
    decay_curve_with(params, &params.estimator, t_grid)
}

/// Curve under any survival estimator.
pub fn decay_curve_with(
    params: &DecayParams,
    estimator: &dyn SurvivalEstimator,
    t_grid: &[f64],
) -> Result<DecayCurve> {
    check_delta(params.delta)?;
    let points = t_grid
        .iter()
        .map(|&t| {
            let p1 = estimator.p1(t, params.t_max).clamp(0.0, 1.0);
            decay_ratio(p1, params.delta).map(|r| (t, r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DecayCurve {
        points,
        t_max: params.t_max,
    })
}

impl DecayCurve {
    /// `t_over_tmax,ratio`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let rows: Vec<Vec<String>> = self
            .points
            .iter()
            .map(|&(t, r)| vec![fmt_sig(t / self.t_max, 12), fmt_sig(r, 12)])
            .collect();
        write_rows(out, "t_over_tmax,ratio", &rows)
    }
}

/// Time to full decay in units of `t_max`: the first `t` at which the
/// ratio reaches `1/(δ+1)`.
pub fn full_decay_lambda(delta: f64, estimator: &dyn SurvivalEstimator, t_max: f64) -> Result<f64> {
    check_delta(delta)?;
    let floor = 1.0 / (delta + 1.0);
    let gap = |u: f64| {
        let p1 = estimator.p1(u * t_max, t_max);
        if p1 <= 0.0 {
            -floor
        } else {
            raw_ratio(p1, delta) - floor
        }
    };
    let mut lo = 0.0;
    let mut hi = 1e-4;
    while gap(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Bracket {
                a: 0.0,
                b: hi,
                fa: gap(0.0),
                fb: gap(hi),
            });
        }
    }
    solve_root(gap, lo, hi, 1e-15)
}

/// Objective pieces for a candidate price `p_t` after a meta-order of
/// volume `L`, with `I(l) = C·l^δ`:
///
/// * `Δ₁`: loss conceded if the informed trader resumes, the volume
///   `L_eq` it would then buy solving `p_t + I(L_eq) = I(L + L_eq)`;
/// * `Δ₂`: loss if it has stopped, `L·p_t − ∫₀^L I`.
pub fn decay_losses(params: &DecayParams, scale_c: f64, p_t: f64) -> Result<(f64, f64)> {
    let l_eq = equivalent_volume(params, scale_c, p_t)?;
    let d = params.delta;
    let l = params.volume;
    let c1 = scale_c / (d + 1.0);
    let delta1 =
        c1 * ((l + l_eq).powf(d + 1.0) - l.powf(d + 1.0) - l_eq.powf(d + 1.0)) - p_t * l_eq;
    let delta2 = l * p_t - c1 * l.powf(d + 1.0);
    Ok((delta1, delta2))
}

/// `L_eq` with `C·((L + L_eq)^δ − L_eq^δ) = p_t`.
pub fn equivalent_volume(params: &DecayParams, scale_c: f64, p_t: f64) -> Result<f64> {
    check_delta(params.delta)?;
    let d = params.delta;
    let l = params.volume;
    let p_max = scale_c * l.powf(d);
    let p_fair = p_max / (d + 1.0);
    let slack = 1e-12 * p_max;
    if !(p_t >= p_fair - slack && p_t <= p_max + slack) {
        return Err(Error::Range(format!(
            "price {p_t} outside [{p_fair}, {p_max}]"
        )));
    }
    if p_t >= p_max {
        return Ok(0.0);
    }
    // in units of L: (1+x)^δ − x^δ = p_t/p_max, decreasing in x
    let target = p_t / p_max;
    let g = |x: f64| (1.0 + x).powf(d) - x.powf(d) - target;
    let mut hi = 1.0;
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    Ok(l * solve_root(g, 0.0, hi, 1e-15)?)
}

/// `P1·Δ₁ + (1 − P1)·Δ₂`.
pub fn decay_objective(params: &DecayParams, scale_c: f64, p1: f64, p_t: f64) -> Result<f64> {
    let (d1, d2) = decay_losses(params, scale_c, p_t)?;
    Ok(p1 * d1 + (1.0 - p1) * d2)
}
