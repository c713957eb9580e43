//! Meta-order size distributions.
//!
//! A [`TailDistribution`] is described by its tail function
//! `F̃(L) = P(l ≥ L)`. Two kinds exist: a power law `(L/l_min)^(-γ)`
//! optionally cut off at `l_max` (the mass beyond the cutoff sits on
//! `l_max` itself), and an empirical table of integer sizes with their
//! tail probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistKind {
    PowerLawTruncated,
    EmpiricalDiscrete,
}

#[derive(Debug, Clone, PartialEq)]
enum Law {
    PowerLaw { gamma: f64, l_min: f64, l_max: f64 },
    Empirical { sizes: Vec<u64>, tails: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailDistribution {
    law: Law,
}

impl TailDistribution {
    /// Untruncated power law with tail exponent `gamma > 1`.
    pub fn power_law(gamma: f64, l_min: f64) -> Result<Self> {
        Self::truncated_power_law(gamma, l_min, f64::INFINITY)
    }

    pub fn truncated_power_law(gamma: f64, l_min: f64, l_max: f64) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::Parameter(format!(
                "gamma must exceed 1 (finite mean), got {gamma}"
            )));
        }
        if !(l_min > 0.0) || !l_min.is_finite() {
            return Err(Error::Parameter(format!(
                "l_min must be positive, got {l_min}"
            )));
        }
        if !(l_max >= l_min) {
            return Err(Error::Parameter(format!(
                "l_max ({l_max}) must be at least l_min ({l_min})"
            )));
        }
        Ok(Self {
            law: Law::PowerLaw {
                gamma,
                l_min,
                l_max,
            },
        })
    }

    /// Empirical law from `(size, P(l ≥ size))` rows.
    ///
    /// Sizes must be strictly increasing and positive; the first tail
    /// probability must be 1 and the sequence non-increasing and positive.
    pub fn empirical(table: &[(u64, f64)]) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::Parameter("empirical table is empty".into()));
        }
        let (first_size, first_tail) = table[0];
        if first_size == 0 {
            return Err(Error::Parameter("sizes must be positive".into()));
        }
        if (first_tail - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!(
                "tail probability of the smallest size must be 1, got {first_tail}"
            )));
        }
        for w in table.windows(2) {
            let ((s0, t0), (s1, t1)) = (w[0], w[1]);
            if s1 <= s0 {
                return Err(Error::Parameter(format!(
                    "sizes must be strictly increasing ({s0} then {s1})"
                )));
            }
            if !(t1 > 0.0) || t1 > t0 {
                return Err(Error::Parameter(format!(
                    "tail probabilities must be positive and non-increasing ({t0} then {t1})"
                )));
            }
        }
        let sizes = table.iter().map(|&(s, _)| s).collect();
        let mut tails: Vec<f64> = table.iter().map(|&(_, t)| t).collect();
        tails[0] = 1.0;
        Ok(Self {
            law: Law::Empirical { sizes, tails },
        })
    }

    /// Point mass at `size`.
    pub fn degenerate(size: u64) -> Result<Self> {
        Self::empirical(&[(size, 1.0)])
    }

    pub fn kind(&self) -> DistKind {
        match self.law {
            Law::PowerLaw { .. } => DistKind::PowerLawTruncated,
            Law::Empirical { .. } => DistKind::EmpiricalDiscrete,
        }
    }

    /// Tail exponent γ for the power-law kind.
    pub fn tail_exponent(&self) -> Option<f64> {
        match self.law {
            Law::PowerLaw { gamma, .. } => Some(gamma),
            Law::Empirical { .. } => None,
        }
    }

    pub fn l_min(&self) -> f64 {
        match &self.law {
            Law::PowerLaw { l_min, .. } => *l_min,
            Law::Empirical { sizes, .. } => sizes[0] as f64,
        }
    }

    /// Largest attainable size (`+∞` for an untruncated power law).
    pub fn l_max(&self) -> f64 {
        match &self.law {
            Law::PowerLaw { l_max, .. } => *l_max,
            Law::Empirical { sizes, .. } => *sizes.last().unwrap() as f64,
        }
    }

    /// `(size, P(l = size))` for the empirical kind.
    pub fn support(&self) -> Option<Vec<(u64, f64)>> {
        match &self.law {
            Law::PowerLaw { .. } => None,
            Law::Empirical { sizes, tails } => Some(
                sizes
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| {
                        let next = tails.get(i + 1).copied().unwrap_or(0.0);
                        (s, tails[i] - next)
                    })
                    .collect(),
            ),
        }
    }

    /// Sizes and tail probabilities of the empirical kind.
    pub(crate) fn empirical_table(&self) -> Option<(&[u64], &[f64])> {
        match &self.law {
            Law::PowerLaw { .. } => None,
            Law::Empirical { sizes, tails } => Some((sizes, tails)),
        }
    }

    /// `F̃(L) = P(l ≥ L)`.
    pub fn tail(&self, volume: f64) -> Result<f64> {
        if !(volume > 0.0) {
            return Err(Error::Domain(format!(
                "tail evaluated at non-positive volume {volume}"
            )));
        }
        Ok(match &self.law {
            Law::PowerLaw {
                gamma,
                l_min,
                l_max,
            } => {
                if volume <= *l_min {
                    1.0
                } else if volume > *l_max {
                    0.0
                } else {
                    (volume / l_min).powf(-gamma)
                }
            }
            Law::Empirical { sizes, tails } => {
                // smallest size ≥ volume
                let idx = sizes.partition_point(|&s| (s as f64) < volume);
                tails.get(idx).copied().unwrap_or(0.0)
            }
        })
    }

    /// `P(l > L)`; differs from [`tail`](Self::tail) only on atoms.
    pub fn survival(&self, volume: f64) -> f64 {
        match &self.law {
            Law::PowerLaw {
                gamma,
                l_min,
                l_max,
            } => {
                if volume < *l_min {
                    1.0
                } else if volume >= *l_max {
                    0.0
                } else {
                    (volume / l_min).powf(-gamma)
                }
            }
            Law::Empirical { sizes, tails } => {
                let idx = sizes.partition_point(|&s| (s as f64) <= volume);
                tails.get(idx).copied().unwrap_or(0.0)
            }
        }
    }

    /// Tail ratio `F̃(to)/F̃(from)` and its complement, computed without
    /// cancellation on the continuous part of a power law. `F̃(from)` must be
    /// positive.
    pub(crate) fn tail_ratio(&self, from: f64, to: f64) -> (f64, f64) {
        if let Law::PowerLaw {
            gamma,
            l_min,
            l_max,
        } = &self.law
        {
            if from >= *l_min && to <= *l_max && to >= from {
                let log_ratio = -gamma * ((to - from) / from).ln_1p();
                return (log_ratio.exp(), -log_ratio.exp_m1());
            }
        }
        let t_from = self.tail(from).unwrap_or(1.0);
        if t_from <= 0.0 {
            return (0.0, 1.0);
        }
        let t_to = self.tail(to).unwrap_or(1.0);
        (t_to / t_from, (t_from - t_to) / t_from)
    }

    /// Continuous draw with `P(l ≥ L) = F̃(L)` by inverse transform.
    #[inline]
    pub fn sample_volume(&self, rng: &mut RandomSource) -> f64 {
        let u = rng.uniform_open_closed();
        self.invert(u)
    }

    /// Integer unit-volume draw: the continuous draw rounded down, so that
    /// `P(l ≥ n) = F̃(n)` holds exactly at every integer `n`.
    #[inline]
    pub fn sample_size(&self, rng: &mut RandomSource) -> u64 {
        (self.sample_volume(rng).floor() as u64).max(1)
    }

    /// Inverse of the tail function on (0, 1]: the largest `L` with `F̃(L) ≥ u`.
    #[inline]
    pub fn invert(&self, u: f64) -> f64 {
        match &self.law {
            Law::PowerLaw {
                gamma,
                l_min,
                l_max,
            } => (l_min * u.powf(-1.0 / gamma)).min(*l_max),
            Law::Empirical { sizes, tails } => {
                let idx = tails.partition_point(|&t| t >= u);
                sizes[idx.saturating_sub(1)] as f64
            }
        }
    }

    /// `E(l^a)`.
    pub fn moment(&self, a: f64) -> Result<f64> {
        if a == 0.0 {
            return Ok(1.0);
        }
        match &self.law {
            Law::PowerLaw {
                gamma,
                l_min,
                l_max,
            } => {
                if l_max.is_infinite() {
                    if a >= *gamma {
                        return Err(Error::Divergent {
                            exponent: a,
                            gamma: *gamma,
                        });
                    }
                    return Ok(gamma / (gamma - a) * l_min.powf(a));
                }
                let ratio = l_max / l_min;
                let atom = l_max.powf(a) * ratio.powf(-gamma);
                let body = if (a - gamma).abs() < 1e-12 {
                    gamma * l_min.powf(a) * ratio.ln()
                } else {
                    gamma / (gamma - a) * l_min.powf(a) * (1.0 - ratio.powf(a - gamma))
                };
                Ok(body + atom)
            }
            Law::Empirical { .. } => Ok(self
                .support()
                .unwrap()
                .iter()
                .map(|&(s, p)| p * (s as f64).powf(a))
                .sum()),
        }
    }

    pub fn mean(&self) -> Result<f64> {
        self.moment(1.0)
    }
}
