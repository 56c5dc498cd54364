//! Event-level Monte-Carlo run of the measurement, post-matching, XOR and
//! parameter-estimation steps.
//!
//! Detection statistics are sampled after the detectors: each link draws a
//! joint click pattern from its [`BipartiteStats`], independent basis choices
//! for the dealer and the player, and a conditional bit flip when both picked
//! the same basis. Randomness is counter-based: the stream for link `i` is a
//! ChaCha8 keystream keyed by the seed with stream id `i`, and round `r`
//! always consumes words `10r .. 10r + 10`, so any pulse range can be
//! regenerated independently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ProtocolConfig;
use crate::error::{Error, Result};
use crate::keyrate::{self, FiniteBudget, RateReport};
use crate::photonics::{self, BipartiteStats};

/// ChaCha words consumed per pulse: five `f64` draws of two words each.
const WORDS_PER_ROUND: u128 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    X,
    Z,
}

impl Basis {
    pub const BOTH: [Basis; 2] = [Basis::X, Basis::Z];
}

/// One pulse on which at least one side of a link detected a photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub round: u64,
    /// Set only for coincidences in which both sides chose the same basis.
    pub basis: Option<Basis>,
    pub dealer_bit: Option<bool>,
    pub player_bit: Option<bool>,
}

impl Event {
    fn matching(&self, basis: Basis) -> Option<(bool, bool)> {
        match (self.basis, self.dealer_bit, self.player_bit) {
            (Some(b), Some(a), Some(p)) if b == basis => Some((a, p)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventStream {
    /// Zero-based player index: stream `i` belongs to player B_{i+1}.
    pub link_index: usize,
    pub events: Vec<Event>,
}

/// The j-th post-matched n-party round of one basis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedRound {
    pub basis: Basis,
    pub j: u64,
    /// Pulse index of the matching event used from each link.
    pub rounds: Vec<u64>,
    pub dealer_bits: Vec<bool>,
    pub player_bits: Vec<bool>,
}

/// Bits after the XOR post-processing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelatedRound {
    pub basis: Basis,
    pub j: u64,
    /// ã_1 for X, a_1 for Z.
    pub dealer_key_bit: bool,
    /// c_2 … c_{n−1}, broadcast by the dealer; empty for X.
    pub broadcast_bits: Vec<bool>,
    /// b_i for X, b̃_i for Z.
    pub player_key_bits: Vec<bool>,
}

impl CorrelatedRound {
    /// Whether the round shows the ideal GHZ correlation of its basis.
    pub fn is_ghz_consistent(&self) -> bool {
        match self.basis {
            Basis::Z => self
                .player_key_bits
                .iter()
                .all(|&b| b == self.dealer_key_bit),
            Basis::X => xor_all(&self.player_key_bits) == self.dealer_key_bit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimates {
    /// Matched X rounds per pulse.
    pub gain_est: f64,
    pub e_z_marginal_est: Vec<f64>,
    pub e_x_est: f64,
    pub rounds_x: u64,
    pub rounds_z: u64,
}

impl SimEstimates {
    pub fn e_z_max(&self) -> f64 {
        self.e_z_marginal_est.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Proceed,
    Abort,
}

fn xor_all(bits: &[bool]) -> bool {
    bits.iter().fold(false, |acc, &b| acc ^ b)
}

fn link_rng(seed: u64, link: usize, first_round: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(link as u64);
    rng.set_word_pos(u128::from(first_round) * WORDS_PER_ROUND);
    rng
}

/// Samples pulses `rounds` of one link.
pub fn generate_link_range(
    stats: &BipartiteStats,
    p_x: f64,
    seed: u64,
    link_index: usize,
    rounds: std::ops::Range<u64>,
) -> Vec<Event> {
    let mut rng = link_rng(seed, link_index, rounds.start);
    let both = stats.gain;
    let dealer_only = (stats.click_dealer - stats.gain).max(0.0);
    let player_only = (stats.click_player - stats.gain).max(0.0);
    let mut events = Vec::new();
    for round in rounds {
        let click: f64 = rng.random();
        let dealer_basis = if rng.random::<f64>() < p_x {
            Basis::X
        } else {
            Basis::Z
        };
        let player_basis = if rng.random::<f64>() < p_x {
            Basis::X
        } else {
            Basis::Z
        };
        let dealer_bit = rng.random::<f64>() < 0.5;
        let aux: f64 = rng.random();

        let (dealer_clicks, player_clicks) = if click < both {
            (true, true)
        } else if click < both + dealer_only {
            (true, false)
        } else if click < both + dealer_only + player_only {
            (false, true)
        } else {
            (false, false)
        };
        if !dealer_clicks && !player_clicks {
            continue;
        }
        let player_bit = if dealer_clicks && player_clicks && dealer_basis == player_basis {
            dealer_bit ^ (aux < stats.error(dealer_basis))
        } else {
            aux < 0.5
        };
        let basis = (dealer_clicks && player_clicks && dealer_basis == player_basis)
            .then_some(dealer_basis);
        events.push(Event {
            round,
            basis,
            dealer_bit: dealer_clicks.then_some(dealer_bit),
            player_bit: player_clicks.then_some(player_bit),
        });
    }
    events
}

/// Samples `config.n_signals` pulses on every dealer–player link. `stats`
/// holds one entry per player.
pub fn generate_events(
    config: &ProtocolConfig,
    stats: &[BipartiteStats],
    seed: u64,
) -> Result<Vec<EventStream>> {
    if stats.len() != config.player_links.len() {
        return Err(Error::invalid(
            "stats",
            format!(
                "{} link statistics for {} players",
                stats.len(),
                config.player_links.len()
            ),
        ));
    }
    let p_x = config.p_x.value();
    let n_signals = config.n_signals;
    Ok(stats
        .par_iter()
        .enumerate()
        .map(|(link_index, s)| EventStream {
            link_index,
            events: generate_link_range(s, p_x, seed, link_index, 0..n_signals),
        })
        .collect())
}

/// Pairs the j-th same-basis matching event of every link into the j-th
/// n-party round. X rounds come first, then Z rounds, each in order of j.
pub fn post_match(streams: &[EventStream]) -> Vec<MatchedRound> {
    let mut ordered: Vec<&EventStream> = streams.iter().collect();
    ordered.sort_by_key(|s| s.link_index);
    let mut out = Vec::new();
    if ordered.is_empty() {
        return out;
    }
    for basis in Basis::BOTH {
        let per_link: Vec<Vec<(u64, bool, bool)>> = ordered
            .iter()
            .map(|s| {
                s.events
                    .iter()
                    .filter_map(|e| e.matching(basis).map(|(a, b)| (e.round, a, b)))
                    .collect()
            })
            .collect();
        let count = per_link.iter().map(Vec::len).min().unwrap_or(0);
        out.reserve(count);
        for j in 0..count {
            out.push(MatchedRound {
                basis,
                j: j as u64,
                rounds: per_link.iter().map(|l| l[j].0).collect(),
                dealer_bits: per_link.iter().map(|l| l[j].1).collect(),
                player_bits: per_link.iter().map(|l| l[j].2).collect(),
            });
        }
    }
    out
}

/// Dealer and player XOR post-processing of one matched round.
pub fn apply_xor(round: &MatchedRound) -> CorrelatedRound {
    match round.basis {
        Basis::Z => {
            let a1 = round.dealer_bits.first().copied().unwrap_or(false);
            let broadcast: Vec<bool> = round.dealer_bits.iter().skip(1).map(|&a| a1 ^ a).collect();
            // c_1 = a_1 ⊕ a_1 = 0, so B_1 keeps its bit.
            let players = round
                .player_bits
                .iter()
                .enumerate()
                .map(|(i, &b)| if i == 0 { b } else { broadcast[i - 1] ^ b })
                .collect();
            CorrelatedRound {
                basis: Basis::Z,
                j: round.j,
                dealer_key_bit: a1,
                broadcast_bits: broadcast,
                player_key_bits: players,
            }
        }
        Basis::X => CorrelatedRound {
            basis: Basis::X,
            j: round.j,
            dealer_key_bit: xor_all(&round.dealer_bits),
            broadcast_bits: Vec::new(),
            player_key_bits: round.player_bits.clone(),
        },
    }
}

/// Error-rate and gain estimates from the correlated rounds of a run of
/// `n_signals` pulses per link.
pub fn estimate_statistics(rounds: &[CorrelatedRound], n_signals: u64) -> Result<SimEstimates> {
    if n_signals == 0 {
        return Err(Error::invalid("n_signals", "must be positive"));
    }
    let players = rounds.first().map_or(0, |r| r.player_key_bits.len());
    let mut z_errors = vec![0u64; players];
    let (mut rounds_x, mut rounds_z, mut x_errors) = (0u64, 0u64, 0u64);
    for r in rounds {
        if r.player_key_bits.len() != players {
            return Err(Error::invalid(
                "rounds",
                "correlated rounds disagree on the number of players",
            ));
        }
        match r.basis {
            Basis::X => {
                rounds_x += 1;
                if xor_all(&r.player_key_bits) != r.dealer_key_bit {
                    x_errors += 1;
                }
            }
            Basis::Z => {
                rounds_z += 1;
                for (count, &b) in z_errors.iter_mut().zip(&r.player_key_bits) {
                    if b != r.dealer_key_bit {
                        *count += 1;
                    }
                }
            }
        }
    }
    if rounds_x == 0 || rounds_z == 0 {
        return Err(Error::InsufficientData(format!(
            "need both X and Z rounds for estimation (X = {rounds_x}, Z = {rounds_z})"
        )));
    }
    Ok(SimEstimates {
        gain_est: rounds_x as f64 / n_signals as f64,
        e_z_marginal_est: z_errors
            .iter()
            .map(|&e| e as f64 / rounds_z as f64)
            .collect(),
        e_x_est: x_errors as f64 / rounds_x as f64,
        rounds_x,
        rounds_z,
    })
}

/// Aborts iff some dealer–player marginal error strictly exceeds `threshold`.
pub fn correlation_test(est: &SimEstimates, threshold: f64) -> Decision {
    if est.e_z_marginal_est.iter().any(|&e| e > threshold) {
        Decision::Abort
    } else {
        Decision::Proceed
    }
}

/// Everything produced by one simulated protocol execution.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub matched: Vec<MatchedRound>,
    pub correlated: Vec<CorrelatedRound>,
    pub estimates: SimEstimates,
    pub decision: Decision,
    pub budget: FiniteBudget,
    /// Finite-size report from the simulated counts; zero key if aborted.
    pub report: RateReport,
}

/// Runs the simulated protocol with the config's seed. The X error used for
/// the error-correction leakage is the analytic one.
pub fn simulate(config: &ProtocolConfig) -> Result<SimulationRun> {
    config.validate()?;
    let stats = keyrate::link_stats(config)?;
    let streams = generate_events(config, &stats, config.seed)?;
    let matched = post_match(&streams);
    let correlated: Vec<CorrelatedRound> = matched.iter().map(apply_xor).collect();
    let estimates = estimate_statistics(&correlated, config.n_signals)?;
    let decision = correlation_test(&estimates, config.abort_threshold.value());

    let e_x_pairs: Vec<f64> = stats.iter().map(|s| s.error_x).collect();
    let e_x = photonics::x_total_error_links(&e_x_pairs)?;
    let budget = FiniteBudget {
        n_signals: config.n_signals,
        m: estimates.rounds_x,
        k: estimates.rounds_z,
        k_i: estimates.rounds_z,
    };
    let key_length = match decision {
        Decision::Abort => 0,
        Decision::Proceed => {
            keyrate::finite_key_length(&budget, &config.security, &estimates.e_z_marginal_est, e_x)?
        }
    };
    let report = RateReport {
        gain: estimates.gain_est,
        e_x_total: estimates.e_x_est,
        e_z_marginals: estimates.e_z_marginal_est.clone(),
        rate_per_pulse: key_length as f64 / config.n_signals as f64,
        key_length: Some(key_length),
        leak_ec_bits: keyrate::leak_ec(budget.m, config.security.f_e, e_x)?,
    };
    Ok(SimulationRun {
        matched,
        correlated,
        estimates,
        decision,
        budget,
        report,
    })
}
