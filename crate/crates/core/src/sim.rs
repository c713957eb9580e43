//! Event-driven simulation of informed, noise and market-maker flow.
//!
//! Time is counted in trades; each event moves one unit of volume (the last
//! unit of a meta-order may be fractional). Meta-orders run back to back,
//! each with an independent equiprobable sign.
//!
//! Under the adaptive policy a meta-order of drawn volume `l` runs to the
//! boundary `L_p` of the level containing `l`. While it runs the quote sits
//! at `base ± p` for the level being consumed; on completion it jumps to
//! `base ± p∞(p)`, which becomes the new base. Noise trades fill at the
//! quote and leave it unchanged. Under the passive-refill policy every trade
//! moves the quote one tick in its own direction.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::book::{LatentBook, Level};
use crate::csv::{fmt_sig, write_rows};
use crate::dist::TailDistribution;
use crate::error::{Error, Result};
use crate::numerics::{fit_loglog_between, Accumulator, LinearFit, Summary};
use crate::rng::RandomSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MmPolicy {
    AdaptiveCompetitive,
    PassiveRefill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Owner {
    Informed,
    Noise,
    TraderA,
}

impl Owner {
    pub fn as_str(self) -> &'static str {
        match self {
            Owner::Informed => "informed",
            Owner::Noise => "noise",
            Owner::TraderA => "trader-A",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeEvent {
    pub index: u64,
    pub sign: i8,
    pub owner: Owner,
    pub price_before: f64,
    pub price_after: f64,
}

/// Market-maker cash and inventory after an event.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub cash: f64,
    pub inventory: f64,
}

/// A meta-order as executed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaOrder {
    pub sign: i8,
    /// Settled volume: `L_p` under the adaptive policy, the integer draw
    /// under the passive one.
    pub volume: f64,
    /// Completion level; zero under the passive policy.
    pub level: usize,
    pub start: u64,
    /// Trade index of the final unit, if the order completed.
    pub end: Option<u64>,
    /// Market-maker P&L from start to completion with all inventory closed
    /// at the reversion price; adaptive policy only.
    pub mm_pnl: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dist: TailDistribution,
    pub mu: f64,
    pub horizon: u64,
    pub policy: MmPolicy,
    pub book: Option<LatentBook>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub events: Vec<TradeEvent>,
    /// Price before the first event, then after each event.
    pub price_path: Vec<f64>,
    pub mm_ledger: Vec<LedgerEntry>,
    pub meta_orders: Vec<MetaOrder>,
    /// Price increments at level exits `p ≥ 1`, oriented along the
    /// meta-order sign.
    pub martingale: Summary,
    /// Draws rejected for exceeding the book depth.
    pub resampled: u64,
    pub config: SimConfig,
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Parameter("horizon must be at least 1".into()));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(Error::Parameter(format!(
                "mu must lie in (0, 1], got {}",
                self.mu
            )));
        }
        if self.policy == MmPolicy::AdaptiveCompetitive {
            let book = self.book.as_ref().ok_or_else(|| {
                Error::Parameter("the adaptive policy needs a latent book".into())
            })?;
            if book.l_top() < self.dist.l_min() {
                return Err(Error::Range(format!(
                    "book depth {} below the smallest meta-order {}",
                    book.l_top(),
                    self.dist.l_min()
                )));
            }
        }
        Ok(())
    }
}

/// Walks one meta-order through the book, one unit per step.
struct Walker<'a> {
    lv: &'a [Level],
    base: f64,
    sign: f64,
    level_end: usize,
    done: f64,
    /// Level holding the next unit of volume.
    cursor: usize,
}

struct Step {
    volume: f64,
    /// `Σ k·(volume taken at level k)`.
    level_cash: f64,
    completed: bool,
    price: f64,
}

impl<'a> Walker<'a> {
    fn new(lv: &'a [Level]) -> Self {
        Self {
            lv,
            base: 0.0,
            sign: 1.0,
            level_end: 0,
            done: 0.0,
            cursor: 0,
        }
    }

    fn start(&mut self, sign: i8, level_end: usize) {
        self.sign = f64::from(sign);
        self.level_end = level_end;
        self.done = 0.0;
        self.cursor = 0;
    }

    fn step(&mut self, mut on_exit: impl FnMut(f64)) -> Step {
        let lv = self.lv;
        let volume_end = lv[self.level_end].l_p;
        let start = self.done;
        let target = (self.done + 1.0).min(volume_end);
        let mut level_cash = 0.0;
        while self.done < target {
            let k = self.cursor;
            let upper = lv[k].l_p.min(target);
            level_cash += k as f64 * (upper - self.done);
            self.done = upper;
            if self.done >= lv[k].l_p && k < self.level_end {
                if k >= 1 {
                    on_exit(1.0);
                }
                self.cursor += 1;
            }
        }
        let completed = self.done >= volume_end;
        let price = if completed {
            let k = self.level_end;
            if k >= 1 {
                on_exit(-lv[k].delta_p);
            }
            self.base += self.sign * (k as f64 - lv[k].delta_p);
            self.base
        } else {
            self.base + self.sign * self.cursor as f64
        };
        Step {
            volume: target - start,
            level_cash,
            completed,
            price,
        }
    }
}

pub fn run_simulation(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let mut rng = RandomSource::new(config.seed, 0);
    Ok(match config.policy {
        MmPolicy::AdaptiveCompetitive => run_adaptive(config, &mut rng),
        MmPolicy::PassiveRefill => run_passive(config, &mut rng),
    })
}

fn run_adaptive(config: &SimConfig, rng: &mut RandomSource) -> SimResult {
    let book = config.book.as_ref().expect("validated");
    let lv = book.levels();
    let l_top = book.l_top();
    let n = config.horizon as usize;

    let mut events = Vec::with_capacity(n);
    let mut price_path = Vec::with_capacity(n + 1);
    let mut ledger = Vec::with_capacity(n);
    let mut orders: Vec<MetaOrder> = Vec::new();
    let mut martingale = Accumulator::default();
    let mut resampled = 0u64;

    let mut walker = Walker::new(lv);
    let mut running = false;
    let mut price = 0.0;
    let mut cash = 0.0;
    let mut inventory = 0.0;
    let mut cash_at_start = 0.0;
    price_path.push(price);

    for t in 0..config.horizon {
        if !running {
            let mut l = config.dist.sample_volume(rng);
            while l > l_top {
                resampled += 1;
                l = config.dist.sample_volume(rng);
            }
            let level_end = lv.partition_point(|x| x.l_p < l);
            let sign = rng.sign();
            walker.start(sign, level_end);
            orders.push(MetaOrder {
                sign,
                volume: lv[level_end].l_p,
                level: level_end,
                start: t,
                end: None,
                mm_pnl: None,
            });
            cash_at_start = cash;
            running = true;
        }
        let before = price;
        let informed = config.mu >= 1.0 || rng.bernoulli(config.mu);
        let (sign, owner) = if informed {
            let base = walker.base;
            let s = walker.sign;
            let step = walker.step(|inc| martingale.push(inc));
            cash += s * base * step.volume + step.level_cash;
            inventory -= s * step.volume;
            price = step.price;
            if step.completed {
                cash += inventory * price;
                inventory = 0.0;
                let order = orders.last_mut().expect("active order");
                order.end = Some(t);
                order.mm_pnl = Some(cash - cash_at_start);
                running = false;
            }
            (orders.last().expect("active order").sign, Owner::Informed)
        } else {
            let s = rng.sign();
            cash += f64::from(s) * price;
            inventory -= f64::from(s);
            (s, Owner::Noise)
        };
        events.push(TradeEvent {
            index: t,
            sign,
            owner,
            price_before: before,
            price_after: price,
        });
        price_path.push(price);
        ledger.push(LedgerEntry { cash, inventory });
    }
    if resampled > 0 {
        log::info!("{resampled} meta-order draws beyond book depth {l_top} were redrawn");
    }
    SimResult {
        events,
        price_path,
        mm_ledger: ledger,
        meta_orders: orders,
        martingale: martingale.summary(),
        resampled,
        config: config.clone(),
    }
}

fn run_passive(config: &SimConfig, rng: &mut RandomSource) -> SimResult {
    let n = config.horizon as usize;
    let mut events = Vec::with_capacity(n);
    let mut price_path = Vec::with_capacity(n + 1);
    let mut ledger = Vec::with_capacity(n);
    let mut orders: Vec<MetaOrder> = Vec::new();
    let mut remaining = 0u64;
    let mut price = 0.0;
    let mut cash = 0.0;
    let mut inventory = 0.0;
    price_path.push(price);

    for t in 0..config.horizon {
        if remaining == 0 {
            remaining = config.dist.sample_size(rng);
            orders.push(MetaOrder {
                sign: rng.sign(),
                volume: remaining as f64,
                level: 0,
                start: t,
                end: None,
                mm_pnl: None,
            });
        }
        let informed = config.mu >= 1.0 || rng.bernoulli(config.mu);
        let (sign, owner) = if informed {
            remaining -= 1;
            let order = orders.last_mut().expect("active order");
            if remaining == 0 {
                order.end = Some(t);
            }
            (order.sign, Owner::Informed)
        } else {
            (rng.sign(), Owner::Noise)
        };
        let before = price;
        price += f64::from(sign);
        cash += f64::from(sign) * price;
        inventory -= f64::from(sign);
        events.push(TradeEvent {
            index: t,
            sign,
            owner,
            price_before: before,
            price_after: price,
        });
        price_path.push(price);
        ledger.push(LedgerEntry { cash, inventory });
    }
    SimResult {
        events,
        price_path,
        mm_ledger: ledger,
        meta_orders: orders,
        martingale: Summary::default(),
        resampled: 0,
        config: config.clone(),
    }
}

/// Recomputes the price path from the event log and meta-order list.
pub fn replay(result: &SimResult) -> Result<Vec<f64>> {
    let mut path = Vec::with_capacity(result.events.len() + 1);
    path.push(0.0);
    match result.config.policy {
        MmPolicy::PassiveRefill => {
            let mut price = 0.0;
            for e in &result.events {
                price += f64::from(e.sign);
                path.push(price);
            }
        }
        MmPolicy::AdaptiveCompetitive => {
            let book = result
                .config
                .book
                .as_ref()
                .ok_or_else(|| Error::Parameter("adaptive replay needs the book".into()))?;
            let mut walker = Walker::new(book.levels());
            let mut orders = result.meta_orders.iter();
            let mut running = false;
            let mut price = 0.0;
            for e in &result.events {
                if !running {
                    let o = orders.next().ok_or_else(|| {
                        Error::Range("event log outlives the meta-order list".into())
                    })?;
                    walker.start(o.sign, o.level);
                    running = true;
                }
                if e.owner == Owner::Informed {
                    let step = walker.step(|_| {});
                    price = step.price;
                    running = !step.completed;
                }
                path.push(price);
            }
        }
    }
    Ok(path)
}

/// Per-lag variance of price differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignaturePoint {
    pub lag: usize,
    /// `Var(p_{s+t} − p_s)`.
    pub variance: f64,
    /// `variance / t`.
    pub sigma2: f64,
    /// Standard error of `sigma2` from the number of non-overlapping windows.
    pub stderr: f64,
}

/// Signature over overlapping windows. Lags above a tenth of the path
/// length are omitted and returned separately.
pub fn volatility_signature_path(
    path: &[f64],
    lags: &[usize],
) -> (Vec<SignaturePoint>, Vec<usize>) {
    let horizon = path.len().saturating_sub(1);
    let mut points = Vec::new();
    let mut omitted = Vec::new();
    for &lag in lags {
        if lag == 0 || lag > horizon / 10 {
            omitted.push(lag);
            continue;
        }
        let mut acc = Accumulator::default();
        for s in 0..=(horizon - lag) {
            acc.push(path[s + lag] - path[s]);
        }
        let variance = acc.summary().variance;
        let blocks = (horizon / lag) as f64;
        let sigma2 = variance / lag as f64;
        points.push(SignaturePoint {
            lag,
            variance,
            sigma2,
            stderr: sigma2 * (2.0 / blocks).sqrt(),
        });
    }
    if !omitted.is_empty() {
        log::warn!("signature lags {omitted:?} omitted: fewer than 10 windows");
    }
    (points, omitted)
}

pub fn volatility_signature(
    result: &SimResult,
    lags: &[usize],
) -> (Vec<SignaturePoint>, Vec<usize>) {
    volatility_signature_path(&result.price_path, lags)
}

/// Slope of `ln Var(t)` against `ln t` over `lo ≤ t ≤ hi`.
pub fn variance_growth_exponent(
    points: &[SignaturePoint],
    lo: usize,
    hi: usize,
) -> Result<LinearFit> {
    let xs: Vec<f64> = points.iter().map(|p| p.lag as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.variance).collect();
    fit_loglog_between(&xs, &ys, lo as f64, hi as f64)
}

/// Sample autocorrelation of trade signs at each lag.
pub fn sign_autocorrelation(signs: &[i8], lags: &[usize]) -> Vec<(usize, f64)> {
    let n = signs.len();
    let mean = signs.iter().map(|&s| f64::from(s)).sum::<f64>() / n as f64;
    let var = signs
        .iter()
        .map(|&s| (f64::from(s) - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    lags.iter()
        .filter(|&&lag| lag < n)
        .map(|&lag| {
            let cov = (0..n - lag)
                .map(|i| (f64::from(signs[i]) - mean) * (f64::from(signs[i + lag]) - mean))
                .sum::<f64>()
                / (n - lag) as f64;
            (lag, cov / var)
        })
        .collect()
}

/// Sign autocorrelation taking the mean sign as zero; unbiased for
/// symmetric flow where the demeaned estimate is not.
pub fn sign_autocorrelation_zero_mean(signs: &[i8], lags: &[usize]) -> Vec<(usize, f64)> {
    let n = signs.len();
    lags.iter()
        .filter(|&&lag| lag < n)
        .map(|&lag| {
            let cov = signs[..n - lag]
                .iter()
                .zip(&signs[lag..])
                .map(|(&a, &b)| f64::from(a * b))
                .sum::<f64>()
                / (n - lag) as f64;
            (lag, cov)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PnlBucket {
    pub level_lo: usize,
    pub level_hi: usize,
    pub volume_lo: f64,
    pub volume_hi: f64,
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// Completed meta-order P&L grouped by completion level `p` with
/// `⌊log₂(p+1)⌋` as bucket key.
pub fn mm_pnl_by_size(result: &SimResult) -> Vec<PnlBucket> {
    let mut buckets: Vec<(Accumulator, usize, usize, f64, f64)> = Vec::new();
    for o in &result.meta_orders {
        let Some(pnl) = o.mm_pnl else { continue };
        let key = (usize::BITS - 1 - (o.level + 1).leading_zeros()) as usize;
        if buckets.len() <= key {
            buckets.resize(
                key + 1,
                (Accumulator::default(), usize::MAX, 0, f64::INFINITY, 0.0),
            );
        }
        let b = &mut buckets[key];
        b.0.push(pnl);
        b.1 = b.1.min(o.level);
        b.2 = b.2.max(o.level);
        b.3 = b.3.min(o.volume);
        b.4 = b.4.max(o.volume);
    }
    let out: Vec<PnlBucket> = buckets
        .into_iter()
        .filter(|b| b.0.count() > 0)
        .map(|(acc, lo, hi, vlo, vhi)| {
            let s = acc.summary();
            PnlBucket {
                level_lo: lo,
                level_hi: hi,
                volume_lo: vlo,
                volume_hi: vhi,
                n: s.n,
                mean: s.mean,
                stderr: s.stderr,
            }
        })
        .collect();
    if out.is_empty() {
        log::warn!("no completed meta-orders to attribute P&L to");
    }
    out
}

/// Mark-to-market P&L change of the market maker at each event.
pub fn mm_event_pnl(result: &SimResult) -> Vec<f64> {
    let mut prev = LedgerEntry::default();
    let mut prev_price = result.price_path[0];
    result
        .mm_ledger
        .iter()
        .zip(&result.price_path[1..])
        .map(|(e, &price)| {
            let d = (e.cash + e.inventory * price) - (prev.cash + prev.inventory * prev_price);
            prev = *e;
            prev_price = price;
            d
        })
        .collect()
}

impl SimResult {
    /// `index,sign,owner,price_before,price_after`.
    pub fn write_events_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let rows: Vec<Vec<String>> = self
            .events
            .iter()
            .map(|e| {
                vec![
                    e.index.to_string(),
                    e.sign.to_string(),
                    e.owner.as_str().to_string(),
                    fmt_sig(e.price_before, 12),
                    fmt_sig(e.price_after, 12),
                ]
            })
            .collect();
        write_rows(out, "index,sign,owner,price_before,price_after", &rows)
    }

    pub fn signs(&self) -> Vec<i8> {
        self.events.iter().map(|e| e.sign).collect()
    }
}

/// `lag,sigma2,stderr`.
pub fn write_signature_csv<W: Write>(points: &[SignaturePoint], out: &mut W) -> io::Result<()> {
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                p.lag.to_string(),
                fmt_sig(p.sigma2, 12),
                fmt_sig(p.stderr, 12),
            ]
        })
        .collect();
    write_rows(out, "lag,sigma2,stderr", &rows)
}
