//! Closed-form detection statistics of the entangled-pair channels.
//!
//! Every dealer–player pair is described by its coincidence gain and the
//! per-basis error rate. The pair-source expressions are the standard
//! two-mode squeezed vacuum results; the perfect source emits exactly one pair
//! per pulse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::LinkParams;

/// Error rate of uncorrelated noise.
pub const E0: f64 = 0.5;

/// Below this gain a link is treated as pure noise and reports [`E0`].
pub const VACUUM_GAIN_FLOOR: f64 = 1e-15;

/// Largest participant count for which the binomial sum form is available.
pub const SUM_FORM_MAX_N: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceModel {
    /// One pure Bell pair per pulse.
    Perfect,
    /// Probabilistic pair source with mean pair number `mu` per pulse.
    PairSource { mu: f64 },
}

impl SourceModel {
    pub fn mu(&self) -> Option<f64> {
        match self {
            SourceModel::Perfect => None,
            SourceModel::PairSource { mu } => Some(*mu),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SourceModel::Perfect => Ok(()),
            SourceModel::PairSource { mu } if mu.is_finite() && mu > 0.0 => Ok(()),
            SourceModel::PairSource { mu } => Err(Error::Domain {
                what: "mu",
                value: mu,
                domain: "(0, inf)",
            }),
        }
    }
}

/// Per-pulse statistics of one dealer–player pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BipartiteStats {
    /// Probability that both sides click.
    pub gain: f64,
    pub error_x: f64,
    pub error_z: f64,
    /// Probability that the dealer's detector clicks, regardless of the player.
    pub click_dealer: f64,
    /// Probability that the player's detector clicks, regardless of the dealer.
    pub click_player: f64,
}

impl BipartiteStats {
    pub fn error(&self, basis: crate::sim::Basis) -> f64 {
        match basis {
            crate::sim::Basis::X => self.error_x,
            crate::sim::Basis::Z => self.error_z,
        }
    }
}

/// Gain and error rates between the dealer (`dealer`) and one player
/// (`player`). The misalignment of the pair is taken from the player's link.
pub fn bipartite_stats(
    source: &SourceModel,
    dealer: &LinkParams,
    player: &LinkParams,
) -> Result<BipartiteStats> {
    source.validate()?;
    dealer.validate()?;
    player.validate()?;
    let eta_a = dealer.efficiency();
    let eta_b = player.efficiency();
    let y0_a = dealer.background();
    let y0_b = player.background();
    let ed_x = player.misalignment_x.value();
    let ed_z = player.misalignment_z.value();

    let stats = match *source {
        SourceModel::PairSource { mu } => {
            let half = mu / 2.0;
            let da = 1.0 + eta_a * half;
            let db = 1.0 + eta_b * half;
            let dab = 1.0 + eta_a * half + eta_b * half - eta_a * eta_b * half;
            let silent_a = (1.0 - y0_a) / (da * da);
            let silent_b = (1.0 - y0_b) / (db * db);
            let silent_both = (1.0 - y0_a) * (1.0 - y0_b) / (dab * dab);
            let gain = (1.0 - silent_a - silent_b + silent_both).clamp(0.0, 1.0);
            let correlated = 2.0 * eta_a * eta_b * half * (1.0 + half) / (da * db * dab);
            let error = |ed: f64| {
                if gain < VACUUM_GAIN_FLOOR {
                    E0
                } else {
                    ((E0 * gain - (E0 - ed) * correlated) / gain).clamp(0.0, E0)
                }
            };
            BipartiteStats {
                gain,
                error_x: error(ed_x),
                error_z: error(ed_z),
                click_dealer: 1.0 - silent_a,
                click_player: 1.0 - silent_b,
            }
        }
        SourceModel::Perfect => {
            let click_dealer = 1.0 - (1.0 - y0_a) * (1.0 - eta_a);
            let click_player = 1.0 - (1.0 - y0_b) * (1.0 - eta_b);
            let yield1 = click_dealer * click_player;
            let error = |ed: f64| {
                if yield1 < VACUUM_GAIN_FLOOR {
                    E0
                } else {
                    (E0 - (E0 - ed) * eta_a * eta_b / yield1).clamp(0.0, E0)
                }
            };
            BipartiteStats {
                gain: yield1,
                error_x: error(ed_x),
                error_z: error(ed_z),
                click_dealer,
                click_player,
            }
        }
    };
    Ok(stats)
}

/// Gain of a protocol that distributes one perfect n-party GHZ state per
/// pulse: every participant (dealer included) must click.
pub fn ghz_source_gain(links: &[LinkParams]) -> Result<f64> {
    if links.len() < 2 {
        return Err(Error::TooFewParticipants {
            min: 2,
            got: links.len(),
        });
    }
    let mut gain = 1.0;
    for link in links {
        link.validate()?;
        gain *= 1.0 - (1.0 - link.background()) * (1.0 - link.efficiency());
    }
    Ok(gain)
}

fn check_pair_error(e_pair: f64) -> Result<()> {
    if (0.0..=E0).contains(&e_pair) {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "pair error rate",
            value: e_pair,
            domain: "[0, 0.5]",
        })
    }
}

/// X-basis error of the n-party correlation: the probability that an odd
/// number of the n−1 independent pairs flipped.
pub fn x_total_error(e_pair: f64, n: usize) -> Result<f64> {
    check_pair_error(e_pair)?;
    if n < 2 {
        return Err(Error::TooFewParticipants { min: 2, got: n });
    }
    let exponent = i32::try_from(n - 1)
        .map_err(|_| Error::invalid("n", format!("{n} participants is too many")))?;
    Ok(0.5 * (1.0 - (1.0 - 2.0 * e_pair).powi(exponent)))
}

/// [`x_total_error`] for pairs with individual error rates.
pub fn x_total_error_links(e_pairs: &[f64]) -> Result<f64> {
    if e_pairs.is_empty() {
        return Err(Error::TooFewParticipants { min: 2, got: 1 });
    }
    let mut parity = 1.0;
    for &e in e_pairs {
        check_pair_error(e)?;
        parity *= 1.0 - 2.0 * e;
    }
    Ok(0.5 * (1.0 - parity))
}

/// Sum over odd-size subsets of flipped pairs,
/// `Σ_j C(n−1, 2j+1) e^(2j+1) (1−e)^(n−2j−2)`.
///
/// Kept alongside the closed form as its independent check; exact integer
/// binomials limit it to `n ≤ 64`.
pub fn x_total_error_sum(e_pair: f64, n: usize) -> Result<f64> {
    check_pair_error(e_pair)?;
    if n < 2 {
        return Err(Error::TooFewParticipants { min: 2, got: n });
    }
    if n > SUM_FORM_MAX_N {
        return Err(Error::invalid(
            "n",
            format!("sum form supports at most {SUM_FORM_MAX_N} participants"),
        ));
    }
    let players = (n - 1) as u32;
    let mut total = 0.0;
    for flips in (1..=players).step_by(2) {
        let weight = binomial(players, flips) as f64;
        total += weight * e_pair.powi(flips as i32) * (1.0 - e_pair).powi((players - flips) as i32);
    }
    Ok(total)
}

fn binomial(n: u32, k: u32) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * u128::from(n - i) / u128::from(i + 1))
}

/// Marginal Z-basis error between the dealer and one player after the XOR
/// step. The XOR post-processing is error-free, so this is the pair error
/// itself for every participant count.
pub fn z_marginal_error(e_pair: f64) -> Result<f64> {
    check_pair_error(e_pair)?;
    Ok(e_pair)
}
