//! Monte Carlo estimators of renormalized and aggregate impact.
//!
//! Background order flow is a back-to-back sequence of trends with sizes
//! drawn from the meta-order law and independent equiprobable signs. A
//! trend that has executed volume `x` carries permanent impact
//! `I(x) = C·x^δ/(δ+1)`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::csv::{fmt_sig, write_rows};
use crate::dist::TailDistribution;
use crate::error::{Error, Result};
use crate::montecarlo::run_replicas;
use crate::numerics::{fit_loglog_slope, linear_fit, weighted_linear_fit, Accumulator, LinearFit};
use crate::rng::RandomSource;

/// Impact scale `C` and tail exponent `γ`, with `δ = γ − 1 ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactLaw {
    pub scale_c: f64,
    pub gamma_tail: f64,
}

impl ImpactLaw {
    pub fn new(scale_c: f64, gamma_tail: f64) -> Result<Self> {
        if !(scale_c > 0.0) || !scale_c.is_finite() {
            return Err(Error::Parameter(format!(
                "C must be positive, got {scale_c}"
            )));
        }
        if !(gamma_tail > 1.0 && gamma_tail < 2.0) {
            return Err(Error::Parameter(format!(
                "gamma must lie in (1, 2) so that delta lies in (0, 1), got {gamma_tail}"
            )));
        }
        Ok(Self {
            scale_c,
            gamma_tail,
        })
    }

    #[inline]
    pub fn delta(&self) -> f64 {
        self.gamma_tail - 1.0
    }

    /// `C·l^δ`.
    #[inline]
    pub fn transient(&self, l: f64) -> f64 {
        self.scale_c * l.powf(self.delta())
    }

    /// `C·l^δ/(δ+1)`.
    #[inline]
    pub fn permanent(&self, l: f64) -> f64 {
        self.transient(l) / self.gamma_tail
    }
}

/// Mean impact at one abscissa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub stderr: f64,
    /// 95% band.
    pub ci_low: f64,
    pub ci_high: f64,
}

impl From<LinearFit> for ExponentFit {
    fn from(f: LinearFit) -> Self {
        Self {
            exponent: f.slope,
            stderr: f.stderr,
            ci_low: f.slope - 1.96 * f.stderr,
            ci_high: f.slope + 1.96 * f.stderr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactCurve {
    pub points: Vec<CurvePoint>,
    pub fit: Option<ExponentFit>,
    /// Bin edges for imbalance curves; empty otherwise.
    pub bin_edges: Vec<f64>,
}

impl ImpactCurve {
    /// Log-log exponent over points with `lo ≤ x ≤ hi` and positive mean.
    pub fn exponent_between(&self, lo: f64, hi: f64) -> Result<ExponentFit> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .points
            .iter()
            .filter(|p| p.x >= lo && p.x <= hi && p.mean > 0.0)
            .map(|p| (p.x, p.mean))
            .unzip();
        Ok(fit_loglog_slope(&xs, &ys, 0..xs.len())?.into())
    }

    /// Log-log exponent over `lo ≤ x ≤ hi` with each point weighted by
    /// `(mean/stderr)²`, the inverse variance of `ln mean`.
    pub fn weighted_exponent_between(&self, lo: f64, hi: f64) -> Result<ExponentFit> {
        let sel: Vec<&CurvePoint> = self
            .points
            .iter()
            .filter(|p| p.x >= lo && p.x <= hi && p.mean > 0.0 && p.stderr > 0.0)
            .collect();
        if sel.len() < 3 {
            return Err(Error::Parameter(format!(
                "weighted log-log fit needs at least 3 points with positive mean and stderr, got {}",
                sel.len()
            )));
        }
        let xs: Vec<f64> = sel.iter().map(|p| p.x.ln()).collect();
        let ys: Vec<f64> = sel.iter().map(|p| p.mean.ln()).collect();
        let ws: Vec<f64> = sel.iter().map(|p| (p.mean / p.stderr).powi(2)).collect();
        Ok(weighted_linear_fit(&xs, &ys, &ws)?.into())
    }

    /// `x,mean,stderr,n`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let rows: Vec<Vec<String>> = self
            .points
            .iter()
            .map(|p| {
                vec![
                    fmt_sig(p.x, 12),
                    fmt_sig(p.mean, 12),
                    fmt_sig(p.stderr, 12),
                    p.n.to_string(),
                ]
            })
            .collect();
        write_rows(out, "x,mean,stderr,n", &rows)
    }
}

fn fit_all(points: &[CurvePoint]) -> Option<ExponentFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.x > 0.0 && p.mean > 0.0)
        .map(|p| (p.x, p.mean))
        .unzip();
    fit_loglog_slope(&xs, &ys, 0..xs.len()).ok().map(Into::into)
}

#[derive(Debug, Clone)]
pub struct RenormConfig {
    /// Trader-A volumes at which the curve is evaluated.
    pub l_a: Vec<f64>,
    pub mu_tilde: f64,
    pub mu: f64,
    pub dist: TailDistribution,
    pub law: ImpactLaw,
    pub replicas: usize,
    pub seed: u64,
}

impl RenormConfig {
    fn validate(&self) -> Result<()> {
        if !(self.mu_tilde > 0.0 && self.mu_tilde <= self.mu && self.mu <= 1.0) {
            return Err(Error::Parameter(format!(
                "need 0 < mu_tilde <= mu <= 1, got mu_tilde = {}, mu = {}",
                self.mu_tilde, self.mu
            )));
        }
        if self.replicas == 0 {
            return Err(Error::Parameter("replicas must be at least 1".into()));
        }
        if self.l_a.is_empty() || self.l_a.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Parameter("l_a values must be positive".into()));
        }
        Ok(())
    }
}

/// Per-replica `Σ l_i^δ` over background volume thresholds `volumes`
/// (ascending), the trend straddling each threshold cut at it.
fn trend_power_sums(
    dist: &TailDistribution,
    delta: f64,
    volumes: &[f64],
    rng: &mut RandomSource,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(volumes.len());
    let mut done = 0.0;
    let mut sum = 0.0;
    let mut next = volumes.iter().peekable();
    while next.peek().is_some() {
        let l = dist.sample_volume(rng);
        while let Some(&&v_cut) = next.peek() {
            if done + l >= v_cut {
                out.push(sum + (v_cut - done).powf(delta));
                next.next();
            } else {
                break;
            }
        }
        sum += l.powf(delta);
        done += l;
    }
    out
}

/// Raw per-replica renormalized impacts, one row per replica with one
/// entry per `l_A` (sorted ascending).
fn renormalized_samples(config: &RenormConfig) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    config.validate()?;
    let mut l_a = config.l_a.clone();
    l_a.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let ratio = config.mu_tilde / config.mu;
    let volumes: Vec<f64> = l_a.iter().map(|&x| x / ratio).collect();
    let delta = config.law.delta();
    let k = ratio * config.law.scale_c * delta / (delta + 1.0);
    let rows = run_replicas(config.seed, config.replicas, |_, rng| {
        trend_power_sums(&config.dist, delta, &volumes, rng)
            .into_iter()
            .map(|s| k * s)
            .collect::<Vec<f64>>()
    });
    Ok((l_a, rows))
}

/// `Ī(l_A) = (μ̃/μ)·Cδ/(δ+1)·E[Σ l_i^δ | Σ l_i = (μ/μ̃)·l_A]` at each
/// `l_A`, the last trend cut so that the sum is exact.
pub fn renormalized_impact_curve(config: &RenormConfig) -> Result<ImpactCurve> {
    let (l_a, rows) = renormalized_samples(config)?;
    Ok(curve_from_rows(&l_a, &rows))
}

fn curve_from_rows(l_a: &[f64], rows: &[Vec<f64>]) -> ImpactCurve {
    let mut acc = vec![Accumulator::default(); l_a.len()];
    for row in rows {
        for (a, &v) in acc.iter_mut().zip(row) {
            a.push(v);
        }
    }
    let points: Vec<CurvePoint> = l_a
        .iter()
        .zip(&acc)
        .map(|(&x, a)| {
            let s = a.summary();
            CurvePoint {
                x,
                mean: s.mean,
                stderr: s.stderr,
                n: s.n,
            }
        })
        .collect();
    ImpactCurve {
        fit: fit_all(&points),
        points,
        bin_edges: Vec::new(),
    }
}

/// Single-volume estimate; `config.l_a` must hold one value.
pub fn renormalized_impact_mc(config: &RenormConfig) -> Result<CurvePoint> {
    if config.l_a.len() != 1 {
        return Err(Error::Parameter(format!(
            "expected one l_a value, got {}",
            config.l_a.len()
        )));
    }
    Ok(renormalized_impact_curve(config)?.points[0])
}

/// Curve plus the mean and standard error of `(Ī(l₂) − Ī(l₁))/(l₂ − l₁)`
/// for the two largest volumes `l₁ < l₂`, each replica contributing one
/// increment along its own trend path.
pub fn renormalized_curve_and_increment(
    config: &RenormConfig,
) -> Result<(ImpactCurve, CurvePoint)> {
    let (l_a, rows) = renormalized_samples(config)?;
    let n = l_a.len();
    if n < 2 || !(l_a[n - 1] > l_a[n - 2]) {
        return Err(Error::Parameter("need two distinct l_a values".into()));
    }
    let width = l_a[n - 1] - l_a[n - 2];
    let mut inc = Accumulator::default();
    for row in &rows {
        inc.push((row[n - 1] - row[n - 2]) / width);
    }
    let s = inc.summary();
    let increment = CurvePoint {
        x: 0.5 * (l_a[n - 2] + l_a[n - 1]),
        mean: s.mean,
        stderr: s.stderr,
        n: s.n,
    };
    Ok((curve_from_rows(&l_a, &rows), increment))
}

/// Increment slope between `config.l_a = [l₁, l₂]`.
pub fn renormalized_increment_slope(config: &RenormConfig) -> Result<CurvePoint> {
    if config.l_a.len() != 2 {
        return Err(Error::Parameter("expected exactly two l_a values".into()));
    }
    Ok(renormalized_curve_and_increment(config)?.1)
}

/// Closed-form linear coefficient `(μ̃/μ)·(Cδ/(δ+1))·E(l^δ)/E(l)`.
pub fn renormalized_asymptote(
    mu_tilde: f64,
    mu: f64,
    dist: &TailDistribution,
    law: &ImpactLaw,
) -> Result<f64> {
    if !(mu_tilde > 0.0 && mu > 0.0) {
        return Err(Error::Parameter(
            "participation rates must be positive".into(),
        ));
    }
    let delta = law.delta();
    let ratio = dist.moment(delta)? / dist.mean()?;
    Ok(mu_tilde / mu * law.scale_c * delta / (delta + 1.0) * ratio)
}

#[derive(Debug, Clone)]
pub struct AggregateConfig {
    /// Window length in trades.
    pub window: u64,
    pub dist: TailDistribution,
    pub law: ImpactLaw,
    pub replicas: usize,
    /// Length of the trend sequence simulated per replica.
    pub sequence_len: u64,
    pub windows_per_replica: usize,
    /// Equal-count bins on each side of zero.
    pub bins: usize,
    pub seed: u64,
}

/// Trend sequence with cumulative signed volume and permanent impact at
/// each trend start.
struct TrendPath {
    starts: Vec<u64>,
    sizes: Vec<u64>,
    signs: Vec<f64>,
    flow_before: Vec<f64>,
    impact_before: Vec<f64>,
}

impl TrendPath {
    fn generate(
        dist: &TailDistribution,
        law: &ImpactLaw,
        len: u64,
        rng: &mut RandomSource,
    ) -> Self {
        let mut p = TrendPath {
            starts: Vec::new(),
            sizes: Vec::new(),
            signs: Vec::new(),
            flow_before: Vec::new(),
            impact_before: Vec::new(),
        };
        let (mut t, mut flow, mut imp) = (0u64, 0.0, 0.0);
        while t < len {
            let l = dist.sample_size(rng);
            let s = f64::from(rng.sign());
            p.starts.push(t);
            p.sizes.push(l);
            p.signs.push(s);
            p.flow_before.push(flow);
            p.impact_before.push(imp);
            t = t.saturating_add(l);
            flow += s * l as f64;
            imp += s * law.permanent(l as f64);
        }
        p
    }

    /// Signed volume and price after `x` trades.
    fn state(&self, law: &ImpactLaw, x: u64) -> (f64, f64) {
        let j = self.starts.partition_point(|&s| s <= x) - 1;
        let into = (x - self.starts[j]) as f64;
        let part = if into > 0.0 { law.permanent(into) } else { 0.0 };
        (
            self.flow_before[j] + self.signs[j] * into,
            self.impact_before[j] + self.signs[j] * part,
        )
    }
}

/// Price change against order-flow imbalance `Q` over windows of
/// `window` consecutive trades placed uniformly in each replica's sequence.
pub fn aggregate_impact_mc(config: &AggregateConfig) -> Result<ImpactCurve> {
    if config.window == 0 {
        return Err(Error::Parameter("window must be at least 1 trade".into()));
    }
    if config.window >= config.sequence_len {
        return Err(Error::Parameter(format!(
            "window {} not shorter than the simulated sequence {}",
            config.window, config.sequence_len
        )));
    }
    if config.replicas == 0 || config.windows_per_replica == 0 || config.bins == 0 {
        return Err(Error::Parameter(
            "replicas, windows per replica and bins must be positive".into(),
        ));
    }
    let law = config.law;
    let span = config.sequence_len - config.window;
    let samples: Vec<Vec<(f64, f64)>> = run_replicas(config.seed, config.replicas, |_, rng| {
        let path = TrendPath::generate(&config.dist, &law, config.sequence_len, rng);
        (0..config.windows_per_replica)
            .map(|_| {
                let s = rng.below(span + 1);
                let (q0, p0) = path.state(&law, s);
                let (q1, p1) = path.state(&law, s + config.window);
                (q1 - q0, p1 - p0)
            })
            .collect()
    });
    let all: Vec<(f64, f64)> = samples.into_iter().flatten().collect();
    Ok(bin_symmetric(&all, config.bins))
}

/// Equal-count bins on `|Q|`, mirrored to both signs; `Q = 0` pooled.
fn bin_symmetric(samples: &[(f64, f64)], bins: usize) -> ImpactCurve {
    let mut mags: Vec<f64> = samples
        .iter()
        .map(|s| s.0.abs())
        .filter(|&q| q > 0.0)
        .collect();
    mags.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mut edges = vec![0.0];
    for b in 1..bins {
        if let Some(&q) = mags.get(b * mags.len() / bins) {
            if q > *edges.last().unwrap() {
                edges.push(q);
            }
        }
    }
    edges.push(f64::INFINITY);
    let nb = edges.len() - 1;
    let mut pos = vec![(Accumulator::default(), Accumulator::default()); nb];
    let mut neg = vec![(Accumulator::default(), Accumulator::default()); nb];
    let mut zero = (Accumulator::default(), Accumulator::default());
    for &(q, dp) in samples {
        if q == 0.0 {
            zero.0.push(q);
            zero.1.push(dp);
            continue;
        }
        let m = q.abs();
        let b = edges
            .partition_point(|&e| e < m)
            .saturating_sub(1)
            .min(nb - 1);
        let slot = if q > 0.0 { &mut pos[b] } else { &mut neg[b] };
        slot.0.push(q);
        slot.1.push(dp);
    }
    let point = |(xq, yp): &(Accumulator, Accumulator)| {
        let (sx, sy) = (xq.summary(), yp.summary());
        CurvePoint {
            x: sx.mean,
            mean: sy.mean,
            stderr: sy.stderr,
            n: sy.n,
        }
    };
    let mut points: Vec<CurvePoint> = neg
        .iter()
        .rev()
        .filter(|a| a.0.count() > 0)
        .map(point)
        .collect();
    if zero.0.count() > 0 {
        points.push(point(&zero));
    }
    points.extend(pos.iter().filter(|a| a.0.count() > 0).map(point));
    let fit = fit_all(&points);
    let mut bin_edges: Vec<f64> = edges.iter().rev().map(|e| -e).collect();
    bin_edges.pop();
    bin_edges.extend(edges);
    ImpactCurve {
        points,
        fit,
        bin_edges,
    }
}

/// Mean price change over windows of `L` trades lying inside one trend,
/// against `L`. A trend of size `l ≥ L` holds `l − L + 1` such windows,
/// so trends are drawn from the law conditioned on `l ≥ L` and weighted by
/// `l − L + 1`; the offset inside the trend is uniform.
pub fn single_trade_curve_mc(
    dist: &TailDistribution,
    law: &ImpactLaw,
    ls: &[u64],
    samples: usize,
    seed: u64,
) -> Result<ImpactCurve> {
    if samples == 0 || ls.is_empty() || ls.contains(&0) {
        return Err(Error::Parameter(
            "need positive window lengths and at least one sample".into(),
        ));
    }
    let rows = run_replicas(seed, ls.len(), |i, rng| {
        let big_l = ls[i];
        let tail = dist.tail(big_l as f64).unwrap_or(0.0);
        if tail <= 0.0 {
            return None;
        }
        let (mut sw, mut swy, mut sw2, mut sw2y, mut sw2y2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..samples {
            let x = dist.invert(rng.uniform_open_closed() * tail);
            let l = (x.floor() as u64).max(big_l);
            let span = l - big_l + 1;
            let k = rng.below(span);
            let y = law.permanent((k + big_l) as f64)
                - if k > 0 { law.permanent(k as f64) } else { 0.0 };
            let w = span as f64;
            sw += w;
            swy += w * y;
            sw2 += w * w;
            sw2y += w * w * y;
            sw2y2 += w * w * y * y;
        }
        let mean = swy / sw;
        // ratio-estimator variance
        let var = (sw2y2 - 2.0 * mean * sw2y + mean * mean * sw2) / (sw * sw);
        Some(CurvePoint {
            x: big_l as f64,
            mean,
            stderr: var.max(0.0).sqrt(),
            n: samples,
        })
    });
    let points: Vec<CurvePoint> = rows.into_iter().flatten().collect();
    if points.len() < ls.len() {
        log::warn!("window lengths beyond the largest trend size were dropped");
    }
    Ok(ImpactCurve {
        fit: fit_all(&points),
        points,
        bin_edges: Vec::new(),
    })
}

/// Constants of `I(L) ≈ cte·L^δ·(1 − cte′·L/l_max)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffFit {
    pub cte: f64,
    pub cte_prime: f64,
    pub l_max: f64,
    pub delta: f64,
    /// Closed form evaluated at the input lengths, with the Monte Carlo
    /// stderr carried along.
    pub curve: ImpactCurve,
    pub monte_carlo: ImpactCurve,
}

impl CutoffFit {
    pub fn value(&self, l: f64) -> f64 {
        self.cte * l.powf(self.delta) * (1.0 - self.cte_prime * l / self.l_max)
    }
}

/// Fits the cutoff form to the single-trade Monte Carlo curve by
/// regressing `I(L)/L^δ` on `L/l_max`.
pub fn single_trade_cutoff_curve(
    dist: &TailDistribution,
    law: &ImpactLaw,
    ls: &[u64],
    samples: usize,
    seed: u64,
) -> Result<CutoffFit> {
    let l_max = dist.l_max();
    if !l_max.is_finite() {
        return Err(Error::Parameter(
            "the cutoff form needs a finite l_max".into(),
        ));
    }
    let mc = single_trade_curve_mc(dist, law, ls, samples, seed)?;
    let delta = law.delta();
    let xs: Vec<f64> = mc.points.iter().map(|p| p.x / l_max).collect();
    let ys: Vec<f64> = mc.points.iter().map(|p| p.mean / p.x.powf(delta)).collect();
    let line = linear_fit(&xs, &ys)?;
    let cte = line.intercept;
    let cte_prime = -line.slope / line.intercept;
    let mut fit = CutoffFit {
        cte,
        cte_prime,
        l_max,
        delta,
        curve: ImpactCurve {
            points: Vec::new(),
            fit: None,
            bin_edges: Vec::new(),
        },
        monte_carlo: mc,
    };
    let points: Vec<CurvePoint> = fit
        .monte_carlo
        .points
        .iter()
        .map(|p| CurvePoint {
            x: p.x,
            mean: fit.value(p.x),
            stderr: p.stderr,
            n: p.n,
        })
        .collect();
    fit.curve = ImpactCurve {
        fit: fit_all(&points),
        points,
        bin_edges: Vec::new(),
    };
    Ok(fit)
}
