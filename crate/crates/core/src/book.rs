//! The competitive market maker's latent order book.
//!
//! Level `p` holds volume `v_p` at price `p` ticks; `L_p` is the cumulative
//! volume through level `p`. A meta-order that completes inside level `p`
//! sends the price back to `p∞ = p − Δ(p)`. Two conditions pin the book:
//!
//! * martingale: `Δ(p) = F̃(L_p) / (F̃(L_{p−1}) − F̃(L_p))`
//! * zero profit: `Δ(p)·L_p = Σ_{k<p} L_k`
//!
//! Each level is solved for the `L_p` making both hold.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::csv::{fmt_sig, write_rows};
use crate::dist::TailDistribution;
use crate::error::{Error, Result};
use crate::numerics::{fit_loglog_slope, solve_root, LinearFit};

/// Per-level record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub p: usize,
    pub v_p: f64,
    pub l_p: f64,
    pub delta_p: f64,
    /// `Δ(p)/p`; zero at `p = 0`.
    pub alpha_p: f64,
}

/// Why a solve stopped before `p_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truncation {
    /// No meta-order survives beyond the last level.
    SupportExhausted,
    /// The level equation had no root.
    NoRoot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentBook {
    l0: f64,
    levels: Vec<Level>,
    scale_c: Option<f64>,
    gamma_tail: Option<f64>,
    truncation: Option<(usize, Truncation)>,
}

/// Ratios `α(1..=p_max)` for a pure power-law tail `F̃(L) ∝ L^(−γ)`.
///
/// Uses `S(1) = 1`, `S(p+1) = 1 + S(p)·(1 + 1/(α(p)·p))^(−1/γ)` and
/// `α(p) = S(p)/p`, which is the nested-product recursion in linear time.
pub fn solve_alpha_powerlaw(gamma_tail: f64, p_max: usize) -> Result<Vec<f64>> {
    check_gamma(gamma_tail)?;
    if p_max < 2 {
        return Err(Error::Parameter(format!(
            "p_max must be at least 2, got {p_max}"
        )));
    }
    let mut alpha = Vec::with_capacity(p_max);
    let mut s = 1.0;
    for p in 1..=p_max {
        let a = s / p as f64;
        alpha.push(a);
        let shrink = (-(1.0 / (a * p as f64)).ln_1p() / gamma_tail).exp();
        s = 1.0 + s * shrink;
    }
    Ok(alpha)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 1.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "gamma must exceed 1 (finite mean), got {gamma}"
        )))
    }
}

/// Solves the book level by level from `L_0 = l0` up to `p_max`.
pub fn solve_book_general(dist: &TailDistribution, l0: f64, p_max: usize) -> Result<LatentBook> {
    if !(l0 > 0.0) || !l0.is_finite() {
        return Err(Error::Parameter(format!("l0 must be positive, got {l0}")));
    }
    if p_max < 1 {
        return Err(Error::Parameter("p_max must be at least 1".into()));
    }
    dist.mean()
        .map_err(|e| Error::Parameter(format!("distribution must have a finite mean: {e}")))?;

    solve_levels(dist, l0, p_max)
}

fn solve_levels(dist: &TailDistribution, l0: f64, p_max: usize) -> Result<LatentBook> {
    let mut levels = vec![Level {
        p: 0,
        v_p: l0,
        l_p: l0,
        delta_p: 0.0,
        alpha_p: 0.0,
    }];
    let mut cum_sum = l0;
    let mut truncation = None;
    let empirical = dist.empirical_table();
    if dist.survival(l0) <= 0.0 {
        truncation = Some((0, Truncation::SupportExhausted));
    }
    while truncation.is_none() && levels.len() <= p_max {
        let p = levels.len();
        let prev = levels[p - 1].l_p;
        let step = match empirical {
            Some((sizes, tails)) => discrete_level(sizes, tails, prev, cum_sum),
            None => continuous_level(dist, prev, cum_sum)?,
        };
        let (l_p, terminal) = match step {
            Some(v) => v,
            None => {
                log::warn!("level equation has no root at p = {p}; book truncated");
                truncation = Some((p - 1, Truncation::NoRoot));
                break;
            }
        };
        let delta = cum_sum / l_p;
        levels.push(Level {
            p,
            v_p: l_p - prev,
            l_p,
            delta_p: delta,
            alpha_p: delta / p as f64,
        });
        cum_sum += l_p;
        if terminal {
            truncation = Some((p, Truncation::SupportExhausted));
        }
    }
    if let Some((p, reason)) = truncation {
        if p < p_max {
            log::info!("book stops at p = {p} ({reason:?})");
        } else {
            truncation = None;
        }
    }
    let gamma_tail = dist.tail_exponent();
    Ok(LatentBook::assemble(l0, levels, gamma_tail, truncation))
}

/// Returns `(L_p, terminal)`.
fn continuous_level(
    dist: &TailDistribution,
    prev: f64,
    cum_sum: f64,
) -> Result<Option<(f64, bool)>> {
    let ratio = cum_sum / prev;
    let h = |x: f64| {
        let (rho, comp) = dist.tail_ratio(prev, prev * (1.0 + x));
        rho * (1.0 + x) - ratio * comp
    };
    let l_max = dist.l_max();
    let x_cap = if l_max.is_finite() {
        l_max / prev - 1.0
    } else {
        f64::INFINITY
    };
    if x_cap <= 0.0 {
        return Ok(Some((prev, true)));
    }
    let mut hi = 1.0_f64.min(x_cap);
    while h(hi) > 0.0 {
        if hi >= x_cap {
            // survivors all sit on the atom at l_max
            return Ok(Some((l_max, true)));
        }
        hi = (hi * 2.0).min(x_cap);
        if hi > 1e300 {
            return Ok(None);
        }
    }
    let x = solve_root(h, 0.0, hi, 0.0)?;
    Ok(Some((prev * (1.0 + x), false)))
}

/// Level boundary for an integer-support law.
///
/// `P(l > L)` is flat between support points, where the level equation
/// `G(L)·L − S·(G_prev − G(L))` is increasing in `L`. A sign change can
/// therefore only occur at a jump, so boundaries sit on support points.
/// The boundary is exact when the equation vanishes there.
fn discrete_level(sizes: &[u64], tails: &[f64], prev: f64, cum_sum: f64) -> Option<(f64, bool)> {
    // survival on [sizes[j-1], sizes[j]) is tails[j]
    let first = sizes.partition_point(|&s| (s as f64) <= prev);
    let g_prev = tails.get(first).copied().unwrap_or(0.0);
    if g_prev <= 0.0 {
        return None;
    }
    let tol = 1e-12 * cum_sum * g_prev;
    for (j, &size) in sizes.iter().enumerate().skip(first) {
        let a = size as f64;
        let g = tails.get(j + 1).copied().unwrap_or(0.0);
        if g <= 0.0 {
            return Some((a, true));
        }
        if g * a - cum_sum * (g_prev - g) <= tol {
            return Some((a, false));
        }
    }
    None
}

impl LatentBook {
    fn assemble(
        l0: f64,
        levels: Vec<Level>,
        gamma_tail: Option<f64>,
        truncation: Option<(usize, Truncation)>,
    ) -> Self {
        let mut book = Self {
            l0,
            levels,
            scale_c: None,
            gamma_tail,
            truncation,
        };
        book.scale_c = book.fitted_scale();
        book
    }

    /// `p_top / L_top^δ`, the scale implied by the top level.
    fn fitted_scale(&self) -> Option<f64> {
        let gamma = self.gamma_tail?;
        let top = self.levels.last()?;
        if top.p == 0 {
            return None;
        }
        Some(top.p as f64 / top.l_p.powf(gamma - 1.0))
    }

    pub fn l0(&self) -> f64 {
        self.l0
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, p: usize) -> Option<&Level> {
        self.levels.get(p)
    }

    pub fn p_max(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn l_top(&self) -> f64 {
        self.levels.last().expect("level 0 always present").l_p
    }

    pub fn scale_c(&self) -> Option<f64> {
        self.scale_c
    }

    pub fn gamma_tail(&self) -> Option<f64> {
        self.gamma_tail
    }

    /// Level at which the solve stopped early, and why.
    pub fn truncation(&self) -> Option<(usize, Truncation)> {
        self.truncation
    }

    /// Whether no meta-order survives beyond the top level.
    pub fn is_terminal(&self) -> bool {
        matches!(self.truncation, Some((_, Truncation::SupportExhausted)))
    }

    /// `q(p) = 1/(1 + Δ(p))`, the probability that a meta-order alive at
    /// level `p − 1` completes inside level `p`.
    pub fn completion_probability(&self, p: usize) -> Option<f64> {
        let lvl = self.levels.get(p)?;
        (p >= 1).then(|| 1.0 / (1.0 + lvl.delta_p))
    }

    /// Reversion price `p∞ = p − Δ(p)` at integer level `p`.
    pub fn reversion_level(&self, p: usize) -> Option<f64> {
        self.levels.get(p).map(|l| p as f64 - l.delta_p)
    }

    /// Index of the level containing cumulative volume `volume`, that is
    /// the smallest `p` with `L_p ≥ volume`.
    pub fn level_index(&self, volume: f64) -> Result<usize> {
        if !(volume > 0.0) {
            return Err(Error::Domain(format!(
                "volume must be positive, got {volume}"
            )));
        }
        if volume > self.l_top() {
            return Err(Error::Range(format!(
                "volume {volume} beyond book depth {}",
                self.l_top()
            )));
        }
        Ok(self.levels.partition_point(|l| l.l_p < volume))
    }

    /// Transient price `p(L)` in ticks; linear in volume inside a level.
    pub fn impact_at(&self, volume: f64) -> Result<f64> {
        let p = self.level_index(volume)?;
        if p == 0 {
            return Ok(0.0);
        }
        let lvl = &self.levels[p];
        let prev = self.levels[p - 1].l_p;
        Ok((p - 1) as f64 + (volume - prev) / lvl.v_p)
    }

    /// Post-completion price `p∞(L)`, interpolated the same way as
    /// [`impact_at`](Self::impact_at).
    pub fn reversion_at(&self, volume: f64) -> Result<f64> {
        let p = self.level_index(volume)?;
        if p == 0 {
            return Ok(0.0);
        }
        let lvl = &self.levels[p];
        let prev = &self.levels[p - 1];
        let w = (volume - prev.l_p) / lvl.v_p;
        let lo = (p - 1) as f64 - prev.delta_p;
        let hi = p as f64 - lvl.delta_p;
        Ok(lo + w * (hi - lo))
    }

    /// Copy with `v_p` scaled by `factor`; later `L_k` shift, stored
    /// `Δ` and `α` are kept.
    pub fn with_perturbed_volume(&self, p: usize, factor: f64) -> Result<Self> {
        if p >= self.levels.len() {
            return Err(Error::Range(format!(
                "level {p} beyond book top {}",
                self.p_max()
            )));
        }
        if !(factor > 0.0) {
            return Err(Error::Parameter(format!(
                "perturbation factor must be positive, got {factor}"
            )));
        }
        let mut out = self.clone();
        let shift = out.levels[p].v_p * (factor - 1.0);
        out.levels[p].v_p *= factor;
        for lvl in &mut out.levels[p..] {
            lvl.l_p += shift;
        }
        if p == 0 {
            out.l0 = out.levels[0].l_p;
        }
        Ok(out)
    }

    /// Writes `p,v_p,L_p,delta_p,alpha_p` with 12 significant digits.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let rows: Vec<Vec<String>> = self
            .levels
            .iter()
            .map(|l| {
                vec![
                    l.p.to_string(),
                    fmt_sig(l.v_p, 12),
                    fmt_sig(l.l_p, 12),
                    fmt_sig(l.delta_p, 12),
                    fmt_sig(l.alpha_p, 12),
                ]
            })
            .collect();
        write_rows(out, "p,v_p,L_p,delta_p,alpha_p", &rows)
    }

    /// Log-log slope of `p` against `L_p` over `p ∈ [p_max/10, p_max]`.
    pub fn impact_exponent(&self) -> Result<LinearFit> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self.top_decade().map(|l| (l.l_p, l.p as f64)).unzip();
        fit_loglog_slope(&xs, &ys, 0..xs.len())
    }

    fn top_decade(&self) -> impl Iterator<Item = &Level> {
        let lo = (self.p_max() / 10).max(1);
        self.levels[lo..].iter()
    }
}

/// Scale `C = (δ+1)·σ·√(E(l)/(μ·E(l^{2δ})))` with `δ = γ − 1`.
///
/// The tail exponent is explicit so that empirical laws can be calibrated
/// against an assumed impact exponent.
pub fn calibrate_scale(
    sigma: f64,
    mu: f64,
    dist: &TailDistribution,
    gamma_tail: f64,
) -> Result<f64> {
    check_gamma(gamma_tail)?;
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::Parameter(format!("mu must lie in (0, 1], got {mu}")));
    }
    let delta = gamma_tail - 1.0;
    let m1 = dist.mean()?;
    let m2d = dist.moment(2.0 * delta)?;
    Ok((delta + 1.0) * sigma * (m1 / (mu * m2d)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub p: usize,
    pub v_p: f64,
    /// `v_{p+1} − v_p`; absent at the top level.
    pub d_p: Option<f64>,
}

pub fn latent_volume_profile(book: &LatentBook) -> Vec<ProfilePoint> {
    let lv = book.levels();
    lv.iter()
        .enumerate()
        .map(|(i, l)| ProfilePoint {
            p: l.p,
            v_p: l.v_p,
            d_p: lv.get(i + 1).map(|n| n.v_p - l.v_p),
        })
        .collect()
}

/// Log-log slope of `v_p` against `p` over the top decade of levels.
pub fn volume_profile_slope(book: &LatentBook) -> Result<LinearFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = book.top_decade().map(|l| (l.p as f64, l.v_p)).unzip();
    fit_loglog_slope(&xs, &ys, 0..xs.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    /// `max |q·(p+1) + (1−q)·p∞ − p|` over non-terminal levels reached with
    /// positive probability, `q` the exact survival probability.
    pub max_martingale_residual: f64,
    /// `max |Σ_{k≤p} k·v_k − p∞(p)·L_p|` over levels reached with positive
    /// probability.
    pub max_fair_price_residual: f64,
    /// `(size, P&L)`: cash received by the market maker minus the cost of
    /// buying back at the reversion price.
    pub per_size_mm_profit: Vec<(u64, f64)>,
}

/// Exhaustive check of a book against a discrete law.
pub fn verify_book_small(dist: &TailDistribution, book: &LatentBook) -> Result<OracleReport> {
    let support = dist.support().ok_or_else(|| {
        Error::Parameter("verify_book_small needs an empirical-discrete distribution".into())
    })?;
    if support.len() > 50 {
        return Err(Error::Parameter(format!(
            "support has {} sizes; at most 50 are enumerated",
            support.len()
        )));
    }
    let largest = support.last().expect("non-empty").0 as f64;
    if largest > book.l_top() * (1.0 + 1e-12) {
        return Err(Error::Range(format!(
            "largest size {largest} exceeds book depth {}",
            book.l_top()
        )));
    }
    let lv = book.levels();

    let mut per_size = Vec::with_capacity(support.len());
    let mut reached = vec![false; lv.len()];
    for &(size, _) in &support {
        let s = size as f64;
        let top = lv
            .partition_point(|l| l.l_p < s * (1.0 - 1e-12))
            .min(lv.len() - 1);
        let mut cash = 0.0;
        let mut done = 0.0;
        for lvl in &lv[..=top] {
            let take = (lvl.l_p.min(s) - done).max(0.0);
            cash += lvl.p as f64 * take;
            done += take;
        }
        let p_inf = top as f64 - lv[top].delta_p;
        per_size.push((size, cash - s * p_inf));
        for r in &mut reached[..=top] {
            *r = true;
        }
    }

    let mut fair = 0.0_f64;
    let mut cash = 0.0;
    for lvl in lv {
        cash += lvl.p as f64 * lvl.v_p;
        if reached[lvl.p] && lvl.p >= 1 {
            let r = (cash - (lvl.p as f64 - lvl.delta_p) * lvl.l_p).abs();
            fair = fair.max(r);
        }
    }

    let mut mart = 0.0_f64;
    for (p, lvl) in lv.iter().enumerate().skip(1) {
        let g_prev = dist.survival(lv[p - 1].l_p);
        let g = dist.survival(lvl.l_p);
        if !reached[p] || g_prev <= 0.0 || g <= 0.0 {
            continue;
        }
        let q = g / g_prev;
        let expected = q * (p as f64 + 1.0) + (1.0 - q) * (p as f64 - lvl.delta_p);
        mart = mart.max((expected - p as f64).abs());
    }

    Ok(OracleReport {
        max_martingale_residual: mart,
        max_fair_price_residual: fair,
        per_size_mm_profit: per_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_limits() {
        for gamma in [1.3, 1.5, 1.7] {
            let a = solve_alpha_powerlaw(gamma, 2000).unwrap();
            let limit = (gamma - 1.0) / gamma;
            assert!((a[1999] - limit).abs() < 0.02, "gamma {gamma}: {}", a[1999]);
            assert!(a.iter().all(|&x| x > 0.0 && x <= 1.0));
        }
        assert_eq!(solve_alpha_powerlaw(1.5, 10).unwrap()[0], 1.0);
    }

    #[test]
    fn alpha_rejects_infinite_mean() {
        assert!(matches!(
            solve_alpha_powerlaw(1.0, 10),
            Err(Error::Parameter(_))
        ));
        assert!(solve_alpha_powerlaw(1.5, 1).is_err());
    }

    #[test]
    fn alpha_matches_nested_product() {
        // direct O(p²) evaluation of the nested product
        let gamma = 1.5;
        let fast = solve_alpha_powerlaw(gamma, 60).unwrap();
        let mut slow: Vec<f64> = Vec::new();
        for p in 1..=60usize {
            let mut total = 0.0;
            for k in 0..p {
                let mut prod = 1.0;
                for i in (k + 1)..p {
                    let ai = slow[i - 1];
                    prod *= (1.0 + 1.0 / (ai * i as f64)).powf(-1.0 / gamma);
                }
                total += prod;
            }
            slow.push(total / p as f64);
        }
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn first_gap_is_volume_ratio() {
        let d = TailDistribution::power_law(1.5, 1.0).unwrap();
        let b = solve_book_general(&d, 1.0, 20).unwrap();
        let l1 = b.level(1).unwrap();
        assert!((l1.delta_p - 1.0 / l1.l_p).abs() < 1e-14);
    }

    #[test]
    fn book_ratios_approach_recursion_limit() {
        let d = TailDistribution::power_law(1.5, 1.0).unwrap();
        let b = solve_book_general(&d, 1.0, 2000).unwrap();
        let rec = solve_alpha_powerlaw(1.5, 2000).unwrap();
        let top = b.level(2000).unwrap().alpha_p;
        assert!((top - rec[1999]).abs() < 0.01);
        assert!((top - 1.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn book_invariants() {
        let d = TailDistribution::power_law(1.7, 1.0).unwrap();
        let b = solve_book_general(&d, 1.0, 400).unwrap();
        let mut cum = 0.0;
        let mut telescope = 1.0;
        for l in b.levels() {
            if l.p >= 1 {
                assert!(l.delta_p >= 0.0 && l.delta_p <= l.p as f64);
                assert!(l.alpha_p > 0.0 && l.alpha_p <= 1.0);
                assert!((l.delta_p * l.l_p - cum).abs() <= 1e-8 * cum);
                telescope *= 1.0 + 1.0 / l.delta_p;
                let lhs = d.tail(l.l_p).unwrap() * telescope;
                assert!((lhs - d.tail(b.l0()).unwrap()).abs() < 1e-6, "p = {}", l.p);
                let q = b.completion_probability(l.p).unwrap();
                let recon = q * (l.p as f64 - l.delta_p) + (1.0 - q) * (l.p as f64 + 1.0);
                assert!((recon - l.p as f64).abs() < 1e-9);
            }
            cum += l.l_p;
        }
    }

    #[test]
    fn impact_lookup() {
        let d = TailDistribution::power_law(1.5, 1.0).unwrap();
        let b = solve_book_general(&d, 1.0, 50).unwrap();
        for p in [1usize, 7, 50] {
            let lp = b.level(p).unwrap().l_p;
            assert!((b.impact_at(lp).unwrap() - p as f64).abs() < 1e-12);
            let r = b.reversion_at(lp).unwrap();
            assert!((r - b.reversion_level(p).unwrap()).abs() < 1e-12);
        }
        assert!(matches!(b.impact_at(b.l_top() * 2.0), Err(Error::Range(_))));
        assert!(matches!(b.impact_at(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn scale_calibration() {
        let d = TailDistribution::degenerate(1).unwrap();
        assert!((calibrate_scale(2.0, 1.0, &d, 1.5).unwrap() - 3.0).abs() < 1e-15);
        let p = TailDistribution::truncated_power_law(1.5, 1.0, 1e4).unwrap();
        let c1 = calibrate_scale(1.0, 0.3, &p, 1.5).unwrap();
        let c2 = calibrate_scale(2.0, 0.3, &p, 1.5).unwrap();
        assert!((c2 - 2.0 * c1).abs() < 1e-12);
        assert!((c1 - 1.5 / 0.3f64.sqrt()).abs() < 1e-12);
        // E(l^{2δ}) diverges once 2δ ≥ γ
        let inf = TailDistribution::power_law(2.5, 1.0).unwrap();
        assert!(matches!(
            calibrate_scale(1.0, 0.5, &inf, 2.5),
            Err(Error::Divergent { .. })
        ));
    }

    #[test]
    fn single_size_book_is_one_level() {
        let d = TailDistribution::degenerate(1).unwrap();
        let b = solve_book_general(&d, 1.0, 10).unwrap();
        assert_eq!(b.p_max(), 0);
        let r = verify_book_small(&d, &b).unwrap();
        assert_eq!(r.max_martingale_residual, 0.0);
        assert_eq!(r.max_fair_price_residual, 0.0);
        assert_eq!(r.per_size_mm_profit, vec![(1, 0.0)]);
    }

    #[test]
    fn csv_header_and_rows() {
        let d = TailDistribution::power_law(1.5, 1.0).unwrap();
        let b = solve_book_general(&d, 1.0, 3).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "p,v_p,L_p,delta_p,alpha_p");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "0,1,1,0,0");
    }
}
