//! Execution-cost analytics.
//!
//! Fast trading exploits impact decay: trade, wait for the reversion to
//! `p_max/(δ+1)`, then trade again up to the previous peak. Slow trading at
//! a constant participation rate inside background trends is costed by
//! Monte Carlo.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::csv::{fmt_sig, write_rows};
use crate::decay::{full_decay_lambda, Geometric};
use crate::dist::TailDistribution;
use crate::error::{Error, Result};
use crate::impact::ImpactLaw;
use crate::montecarlo::run_replicas;
use crate::numerics::{fit_loglog_slope, solve_root, Accumulator, LinearFit};
use crate::rng::RandomSource;

/// Meta-order duration used when deriving the decay time; large enough
/// for the continuous limit.
const LAMBDA_T_MAX: f64 = 1e12;

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )))
    }
}

/// Positive root of `(1+x)^δ − x^δ = 1/(δ+1)`.
pub fn f_delta(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let target = 1.0 / (delta + 1.0);
    // decreasing from 1 at x = 0 to 0 as x → ∞
    let h = |x: f64| (1.0 + x).powf(delta) - x.powf(delta) - target;
    let mut hi = 1.0;
    while h(hi) > 0.0 {
        hi *= 2.0;
    }
    solve_root(h, 0.0, hi, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FastTradeAnalytics {
    pub delta: f64,
    /// `L_eq/L`.
    pub f: f64,
    pub g: f64,
    #[serde(rename = "G")]
    pub gain: f64,
    #[serde(rename = "G_max")]
    pub gain_max: f64,
    /// Full-decay time in units of the meta-order duration.
    pub lambda: f64,
}

pub fn gain_analytics(delta: f64) -> Result<FastTradeAnalytics> {
    let f = f_delta(delta)?;
    let e = delta + 1.0;
    let grow = (1.0 + f).powf(e);
    let g = grow - 1.0 - f - f.powf(e);
    let gain = g / grow;
    let gain_max = gain / (1.0 - 1.0 / grow);
    let lambda = full_decay_lambda(delta, &Geometric, LAMBDA_T_MAX)?;
    Ok(FastTradeAnalytics {
        delta,
        f,
        g,
        gain,
        gain_max,
        lambda,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub n: usize,
    /// Bucket size `l_n`.
    pub size: f64,
    /// Volume executed after this bucket, `L_n`.
    pub cumulative: f64,
    /// Elapsed time when this bucket completes, `T_n`.
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySchedule {
    pub buckets: Vec<Bucket>,
    pub total_volume: f64,
    /// Cost of executing `L_N` in one go, `C·L_N^(δ+1)/(δ+1)`.
    pub naive_cost: f64,
    pub saving: f64,
    pub relative_saving: f64,
    pub predicted_cost: f64,
    pub completion_time: f64,
    /// `(1+f)/(1+f−λ)·L_N`; `None` when `λ ≥ 1+f`.
    pub linear_time_estimate: Option<f64>,
}

/// Bucketed schedule: `l_0 = L0`, then `l_n = f·L_{n−1}` after each decay,
/// for `N` steps. Elapsed time follows `T_n = λ·T_{n−1} + L_n`.
pub fn bucket_strategy(
    l0: f64,
    steps: usize,
    delta: f64,
    scale_c: f64,
    lambda: f64,
) -> Result<StrategySchedule> {
    if steps == 0 {
        return Err(Error::Parameter("need at least one step".into()));
    }
    if !(l0 > 0.0 && scale_c > 0.0 && lambda >= 0.0) {
        return Err(Error::Parameter(
            "L0 and C must be positive and lambda non-negative".into(),
        ));
    }
    let f = f_delta(delta)?;
    let a = gain_analytics_with_f(delta, f);
    let mut buckets = vec![Bucket {
        n: 0,
        size: l0,
        cumulative: l0,
        time: l0,
    }];
    for n in 1..=steps {
        let prev = buckets[n - 1];
        let size = f * prev.cumulative;
        buckets.push(Bucket {
            n,
            size,
            cumulative: prev.cumulative + size,
            // T_n = λ·T_{n−1} + L_n
            time: lambda * prev.time + prev.cumulative + size,
        });
    }
    let last = *buckets.last().expect("non-empty");
    let e = delta + 1.0;
    let naive_cost = scale_c * last.cumulative.powf(e) / e;
    let shrink = (1.0 + f).powf(-e);
    let relative_saving = a.0 * (1.0 - shrink.powi(steps as i32)) / (1.0 - shrink);
    let saving = relative_saving * naive_cost;
    let linear_time_estimate = if lambda < 1.0 + f {
        Some((1.0 + f) / (1.0 + f - lambda) * last.cumulative)
    } else {
        log::warn!("lambda {lambda} >= 1 + f: completion time grows faster than linearly");
        None
    };
    Ok(StrategySchedule {
        total_volume: last.cumulative,
        naive_cost,
        saving,
        relative_saving,
        predicted_cost: naive_cost - saving,
        completion_time: last.time,
        linear_time_estimate,
        buckets,
    })
}

/// `(𝒢, 𝒢_max)` from a known `f`.
fn gain_analytics_with_f(delta: f64, f: f64) -> (f64, f64) {
    let grow = (1.0 + f).powf(delta + 1.0);
    let gain = (grow - 1.0 - f - f.powf(delta + 1.0)) / grow;
    (gain, gain / (1.0 - 1.0 / grow))
}

/// One trade at a time with full decay in between: saving fraction
/// `δ/(δ+1)` and completion time `λ·L²/2`.
pub fn trivial_strategy_bounds(delta: f64, volume: f64, lambda: f64) -> Result<(f64, f64)> {
    check_delta(delta)?;
    Ok((delta / (delta + 1.0), lambda * volume * volume / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Premium {
    /// Per unit volume.
    pub per_unit: f64,
    /// `l` times the per-unit premium.
    pub total: f64,
}

/// `δ·σ_T·(√(1−μ)/μ)·l^(δ−1/2)/E(l^(2δ−1))`.
pub fn asymmetry_premium(
    volume: f64,
    mu: f64,
    sigma_t: f64,
    delta: f64,
    dist: &TailDistribution,
) -> Result<Premium> {
    check_delta(delta)?;
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::Parameter(format!("mu must lie in (0, 1], got {mu}")));
    }
    if !(volume > 0.0 && sigma_t >= 0.0) {
        return Err(Error::Parameter(
            "volume must be positive and sigma_T non-negative".into(),
        ));
    }
    if mu == 1.0 {
        return Ok(Premium {
            per_unit: 0.0,
            total: 0.0,
        });
    }
    let per_unit = delta * sigma_t * (1.0 - mu).sqrt() / mu * volume.powf(delta - 0.5)
        / dist.moment(2.0 * delta - 1.0)?;
    Ok(Premium {
        per_unit,
        total: per_unit * volume,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignMode {
    /// Trend signs integrated out analytically per path.
    #[default]
    Conditional,
    /// Trend signs drawn explicitly.
    Sampled,
}

#[derive(Debug, Clone)]
pub struct VwapConfig {
    pub l_a: f64,
    pub mu_tilde: Vec<f64>,
    pub mu: f64,
    pub dist: TailDistribution,
    pub law: ImpactLaw,
    pub replicas: usize,
    pub seed: u64,
    pub sign_mode: SignMode,
    pub lambda_risk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateCost {
    pub mu_tilde: f64,
    pub mean_cost: f64,
    pub var_cost: f64,
    /// Standard error of `mean_cost`.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VwapCostReport {
    pub l_a: f64,
    pub rates: Vec<RateCost>,
    pub beta: Option<f64>,
    pub beta_stderr: Option<f64>,
    pub lambda_risk: f64,
    /// Grid rate maximizing `−E(𝒞) − λ_risk·Var(𝒞)`.
    pub optimal_rate: f64,
}

impl VwapCostReport {
    /// Grid argmax of `−E(𝒞) − λ_risk·Var(𝒞)`.
    pub fn optimal_rate_for(&self, lambda_risk: f64) -> f64 {
        self.rates
            .iter()
            .map(|r| (r.mu_tilde, -r.mean_cost - lambda_risk * r.var_cost))
            .fold((f64::NAN, f64::NEG_INFINITY), |best, c| {
                if c.1 > best.1 {
                    c
                } else {
                    best
                }
            })
            .0
    }

    /// `mu_tilde,mean_cost,var_cost,stderr`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let rows: Vec<Vec<String>> = self
            .rates
            .iter()
            .map(|r| {
                vec![
                    fmt_sig(r.mu_tilde, 12),
                    fmt_sig(r.mean_cost, 12),
                    fmt_sig(r.var_cost, 12),
                    fmt_sig(r.stderr, 12),
                ]
            })
            .collect();
        write_rows(out, "mu_tilde,mean_cost,var_cost,stderr", &rows)
    }
}

/// Background trends covering `volume`: `(start, size)`, last one cut.
fn trends_until(
    dist: &TailDistribution,
    volume: f64,
    rng: &mut RandomSource,
) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    let mut done = 0.0;
    while done < volume {
        let l = dist.sample_volume(rng);
        let s = f64::from(rng.sign());
        out.push((done, l.min(volume - done), s));
        done += l;
    }
    out
}

/// Cost at participation ratio `r` over background volume `v`:
/// `C/(δ+1)·r·Σ_k ε_k(1+ε_k r)^δ l_k^δ W_k`, `W_k` the background volume
/// from the start of trend `k` to the end. Returns the conditional mean
/// and variance given the sizes, or a sampled value with zero variance.
fn path_cost(
    trends: &[(f64, f64, f64)],
    v: f64,
    r: f64,
    law: &ImpactLaw,
    mode: SignMode,
) -> (f64, f64) {
    let d = law.delta();
    let k = law.scale_c / (d + 1.0) * r;
    let (up, down) = ((1.0 + r).powf(d), (1.0 - r).powf(d));
    let m = 0.5 * (up - down);
    let s2 = 0.25 * (up + down) * (up + down);
    let (mut mean, mut var) = (0.0, 0.0);
    for &(start, size, sign) in trends {
        if start >= v {
            break;
        }
        let size = size.min(v - start);
        let term = size.powf(d) * (v - start);
        match mode {
            SignMode::Conditional => {
                mean += m * term;
                var += s2 * term * term;
            }
            SignMode::Sampled => {
                mean += sign * if sign > 0.0 { up } else { down } * term;
            }
        }
    }
    (k * mean, k * k * var)
}

/// Cost of trading `l_A` at each constant rate in the grid, all rates
/// sharing one background path per replica.
pub fn vwap_cost_mc(config: &VwapConfig) -> Result<VwapCostReport> {
    if config.mu_tilde.is_empty() {
        return Err(Error::Parameter("empty mu_tilde grid".into()));
    }
    if let Some(&bad) = config
        .mu_tilde
        .iter()
        .find(|&&m| !(m > 0.0 && m <= config.mu))
    {
        return Err(Error::Parameter(format!(
            "mu_tilde {bad} outside (0, mu = {}]",
            config.mu
        )));
    }
    if !(config.mu > 0.0 && config.mu <= 1.0) || !(config.l_a > 0.0) || config.replicas < 2 {
        return Err(Error::Parameter(
            "need 0 < mu <= 1, positive l_a and at least two replicas".into(),
        ));
    }
    let ratios: Vec<f64> = config.mu_tilde.iter().map(|m| m / config.mu).collect();
    let v_max = ratios.iter().map(|r| config.l_a / r).fold(0.0, f64::max);
    let rows = run_replicas(config.seed, config.replicas, |_, rng| {
        let trends = trends_until(&config.dist, v_max, rng);
        ratios
            .iter()
            .map(|&r| path_cost(&trends, config.l_a / r, r, &config.law, config.sign_mode))
            .collect::<Vec<(f64, f64)>>()
    });
    let rates: Vec<RateCost> = config
        .mu_tilde
        .iter()
        .enumerate()
        .map(|(j, &mu_tilde)| {
            let mut means = Accumulator::default();
            let mut inner = Accumulator::default();
            for row in &rows {
                means.push(row[j].0);
                inner.push(row[j].1);
            }
            let (sm, si) = (means.summary(), inner.summary());
            RateCost {
                mu_tilde,
                mean_cost: sm.mean,
                var_cost: si.mean + sm.variance,
                stderr: sm.stderr,
            }
        })
        .collect();
    let fit: Option<LinearFit> = {
        let (xs, ys): (Vec<f64>, Vec<f64>) = rates
            .iter()
            .filter(|r| r.mean_cost > 0.0)
            .map(|r| (r.mu_tilde, r.mean_cost))
            .unzip();
        fit_loglog_slope(&xs, &ys, 0..xs.len()).ok()
    };
    let mut report = VwapCostReport {
        l_a: config.l_a,
        rates,
        beta: fit.map(|f| f.slope),
        beta_stderr: fit.map(|f| f.stderr),
        lambda_risk: config.lambda_risk,
        optimal_rate: f64::NAN,
    };
    report.optimal_rate = report.optimal_rate_for(config.lambda_risk);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_closed_form_and_residual() {
        assert!((f_delta(0.5).unwrap() - 25.0 / 144.0).abs() < 1e-14);
        for d in [0.3, 0.7] {
            let f = f_delta(d).unwrap();
            assert!(((1.0 + f).powf(d) - f.powf(d) - 1.0 / (d + 1.0)).abs() < 1e-12);
        }
        assert!(matches!(f_delta(1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn gains_exact_arithmetic() {
        let a = gain_analytics(0.5).unwrap();
        // (1+f)^(3/2) = (13/12)^3, f^(3/2) = (5/12)^3
        let g = 2197.0 / 1728.0 - 1.0 - 25.0 / 144.0 - 125.0 / 1728.0;
        assert!((a.g - g).abs() < 1e-13);
        assert!((a.gain - g * 1728.0 / 2197.0).abs() < 1e-13);
        assert!((a.gain_max - g / (2197.0 - 1728.0) * 1728.0).abs() < 1e-12);
        assert!((a.lambda - (169.0f64 / 144.0).ln()).abs() < 1e-6);
    }

    #[test]
    fn bucket_limits() {
        let a = gain_analytics(0.5).unwrap();
        let one = bucket_strategy(1.0, 1, 0.5, 1.0, 1.0).unwrap();
        assert!((one.relative_saving - a.gain).abs() < 1e-15);
        let many = bucket_strategy(1.0, 400, 0.5, 1.0, 1.0).unwrap();
        assert!((many.relative_saving - a.gain_max).abs() < 1e-12);
        let ratio = many.completion_time / many.total_volume;
        assert!((ratio - (1.0 + a.f) / a.f).abs() < 1e-9);
        assert!(bucket_strategy(1.0, 3, 0.5, 1.0, 2.0)
            .unwrap()
            .linear_time_estimate
            .is_none());
    }

    #[test]
    fn bucket_saving_matches_stepwise_sum() {
        // Σ Δ₁(L_n) with Δ₁(L) = g·C·L^(δ+1)/(δ+1)
        let (d, c) = (0.4, 1.7);
        let a = gain_analytics(d).unwrap();
        let s = bucket_strategy(2.0, 6, d, c, 0.5).unwrap();
        let direct: f64 = s.buckets[..6]
            .iter()
            .map(|b| a.g * c * b.cumulative.powf(d + 1.0) / (d + 1.0))
            .sum();
        assert!((direct - s.saving).abs() < 1e-10 * direct);
    }

    #[test]
    fn trivial_bounds() {
        assert!((trivial_strategy_bounds(0.6, 1.0, 1.0).unwrap().0 - 0.375).abs() < 1e-15);
        let (_, t1) = trivial_strategy_bounds(0.5, 10.0, 0.3).unwrap();
        let (_, t2) = trivial_strategy_bounds(0.5, 20.0, 0.3).unwrap();
        assert!((t2 / t1 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn premium_cases() {
        let d = TailDistribution::truncated_power_law(1.5, 1.0, 1000.0).unwrap();
        assert_eq!(
            asymmetry_premium(5.0, 1.0, 1.0, 0.5, &d).unwrap().total,
            0.0
        );
        let a = asymmetry_premium(5.0, 0.5, 1.0, 0.5, &d).unwrap();
        let b = asymmetry_premium(500.0, 0.5, 1.0, 0.5, &d).unwrap();
        assert!((a.per_unit - b.per_unit).abs() < 1e-14);
        assert!((a.per_unit - 0.5 * 0.5f64.sqrt() / 0.5).abs() < 1e-14);
    }

    #[test]
    fn single_period_cost_exact() {
        // trends longer than the background volume: one cut trend
        let law = ImpactLaw::new(1.0, 1.5).unwrap();
        let cfg = VwapConfig {
            l_a: 1.0,
            mu_tilde: vec![0.5, 0.25],
            mu: 1.0,
            dist: TailDistribution::power_law(1.5, 10.0).unwrap(),
            law,
            replicas: 50,
            seed: 4,
            sign_mode: SignMode::Conditional,
            lambda_risk: 0.0,
        };
        let rep = vwap_cost_mc(&cfg).unwrap();
        for rc in &rep.rates {
            let r = rc.mu_tilde;
            let v: f64 = 1.0 / r;
            let m = 0.5 * ((1.0 + r).sqrt() - (1.0 - r).sqrt());
            let expected = r / 1.5 * m * v.sqrt() * v;
            assert!((rc.mean_cost - expected).abs() < 1e-12);
            assert!(rc.var_cost >= 0.0);
        }
    }

    #[test]
    fn sampled_signs_agree_with_conditional() {
        let law = ImpactLaw::new(1.0, 1.5).unwrap();
        let mut cfg = VwapConfig {
            l_a: 2.0,
            mu_tilde: vec![0.2],
            mu: 1.0,
            dist: TailDistribution::truncated_power_law(1.5, 1.0, 100.0).unwrap(),
            law,
            replicas: 40_000,
            seed: 9,
            sign_mode: SignMode::Conditional,
            lambda_risk: 0.0,
        };
        let a = vwap_cost_mc(&cfg).unwrap().rates[0];
        cfg.sign_mode = SignMode::Sampled;
        let b = vwap_cost_mc(&cfg).unwrap().rates[0];
        assert!((a.mean_cost - b.mean_cost).abs() < 4.0 * b.stderr);
        assert!((a.var_cost / b.var_cost - 1.0).abs() < 0.1);
    }
}
