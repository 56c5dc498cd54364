//! Secret-key rate engines: the asymptotic rate, the finite key length with
//! the sampling fluctuation term, and the GHZ-distribution baseline.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::config::ProtocolConfig;
use crate::error::{Error, Result};
use crate::math::{binary_entropy, check_unit, LinkParams, Probability};
use crate::photonics::{self, BipartiteStats, SourceModel, E0};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityParams {
    /// ε_c, correctness failure probability.
    pub eps_correct: f64,
    /// ε, sampling failure probability inside λ.
    pub eps_sample: f64,
    /// ε′, privacy-amplification smoothing parameter.
    pub eps_prime: f64,
    /// Basis complementarity q.
    pub q_complementarity: f64,
    /// Error-correction inefficiency f_e.
    pub f_e: f64,
}

impl Default for SecurityParams {
    fn default() -> Self {
        SecurityParams {
            eps_correct: 1e-10,
            eps_sample: 1e-10 / 3.0,
            eps_prime: 1e-10 / 3.0,
            q_complementarity: 1.0,
            f_e: 1.12,
        }
    }
}

impl SecurityParams {
    pub fn validate(&self) -> Result<()> {
        for (name, eps) in [
            ("security.eps_correct", self.eps_correct),
            ("security.eps_sample", self.eps_sample),
            ("security.eps_prime", self.eps_prime),
        ] {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::invalid(name, format!("{eps} must lie in (0, 1)")));
            }
        }
        let q = self.q_complementarity;
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::invalid(
                "security.q_complementarity",
                format!("{q} must lie in (0, 1]"),
            ));
        }
        if !(self.f_e.is_finite() && self.f_e >= 1.0) {
            return Err(Error::invalid(
                "security.f_e",
                format!("{} must be at least 1", self.f_e),
            ));
        }
        Ok(())
    }
}

/// Round counts available to the finite-key analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteBudget {
    /// Pulses sent over each dealer–player link.
    pub n_signals: u64,
    /// Key-generation rounds.
    pub m: u64,
    /// Parameter-estimation rounds.
    pub k: u64,
    /// Test rounds shared by the dealer and each single player.
    pub k_i: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub gain: f64,
    pub e_x_total: f64,
    pub e_z_marginals: Vec<f64>,
    pub rate_per_pulse: f64,
    /// Only set by finite-size analyses.
    pub key_length: Option<u64>,
    pub leak_ec_bits: f64,
}

impl RateReport {
    pub fn e_z_max(&self) -> f64 {
        self.e_z_marginals.iter().copied().fold(0.0, f64::max)
    }
}

fn max_marginal_entropy(e_z_marginals: &[f64]) -> Result<f64> {
    if e_z_marginals.is_empty() {
        return Err(Error::InsufficientData(
            "at least one marginal error rate is required".into(),
        ));
    }
    e_z_marginals
        .iter()
        .try_fold(0.0f64, |acc, &e| Ok(acc.max(binary_entropy(e)?)))
}

/// `max(0, Q · [1 − max_i h(E^Z_i) − f_e · h(E^X)])`.
pub fn asymptotic_rate(gain: f64, e_z_marginals: &[f64], e_x: f64, f_e: f64) -> Result<f64> {
    check_unit("gain", gain)?;
    let hz = max_marginal_entropy(e_z_marginals)?;
    let rate = gain * (1.0 - hz - f_e * binary_entropy(e_x)?);
    Ok(rate.max(0.0))
}

/// Lower and upper clamp of an observed error rate with `k_i` test rounds.
fn clamp_observed(e_obs: f64, k_i: u64) -> f64 {
    let floor = 1.0 / (2.0 * k_i as f64);
    e_obs.min(0.5 - floor).max(floor)
}

/// Fluctuation term λ(E, ε) for sampling `k_i` test rounds out of `m + k_i`.
///
/// The observed rate is clamped into `[1/(2k_i), 1/2 − 1/(2k_i)]` before
/// evaluation since `G` diverges at `E(1−E) = 0`.
pub fn fluctuation_lambda(e_obs: f64, m: u64, k_i: u64, eps: f64) -> Result<f64> {
    check_unit("observed error rate", e_obs)?;
    if m == 0 || k_i == 0 {
        return Err(Error::InsufficientData(format!(
            "fluctuation term needs m, k_i >= 1 (m = {m}, k_i = {k_i})"
        )));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain {
            what: "eps",
            value: eps,
            domain: "(0, 1)",
        });
    }
    let e = clamp_observed(e_obs, k_i);
    let (mf, kf) = (m as f64, k_i as f64);
    let total = mf + kf;
    let a = mf.max(kf);
    let g = total / (mf * kf) * (total / (2.0 * PI * mf * kf * e * (1.0 - e) * eps * eps)).ln();
    // ln argument below 1 only happens for absurd eps; λ is zero there.
    let g = g.max(0.0);
    let ag = a * g / total;
    let numerator = (1.0 - 2.0 * e) * ag + (ag * ag + 4.0 * e * (1.0 - e) * g).sqrt();
    let denominator = 2.0 + 2.0 * a * a * g / (total * total);
    Ok((numerator / denominator).max(0.0))
}

/// Bits revealed by error correction, `m · f_e · h(E^X)`.
pub fn leak_ec(m: u64, f_e: f64, e_x: f64) -> Result<f64> {
    Ok(m as f64 * f_e * binary_entropy(e_x)?)
}

/// Secure key length after privacy amplification, clamped at zero.
pub fn finite_key_length(
    budget: &FiniteBudget,
    sec: &SecurityParams,
    e_z_marginals: &[f64],
    e_x: f64,
) -> Result<u64> {
    sec.validate()?;
    if e_z_marginals.is_empty() {
        return Err(Error::InsufficientData(
            "at least one marginal error rate is required".into(),
        ));
    }
    let mut worst = 0.0f64;
    for &e in e_z_marginals {
        check_unit("marginal error rate", e)?;
        let lambda = fluctuation_lambda(e, budget.m, budget.k_i, sec.eps_sample)?;
        let shifted = (clamp_observed(e, budget.k_i) + lambda).min(0.5);
        worst = worst.max(binary_entropy(shifted)?);
    }
    let m = budget.m as f64;
    let pa_cost = (1.0 / (4.0 * sec.eps_correct * sec.eps_prime * sec.eps_prime)).log2();
    let length = m * (sec.q_complementarity - worst) - leak_ec(budget.m, sec.f_e, e_x)? - pa_cost;
    if length.is_finite() && length > 0.0 {
        Ok(length.floor() as u64)
    } else {
        Ok(0)
    }
}

/// Expected round counts for `n_signals` pulses per link and a per-pulse
/// coincidence gain `gain`.
pub fn budget_for(n_signals: u64, p_x: f64, gain: f64) -> Result<FiniteBudget> {
    check_unit("p_x", p_x)?;
    check_unit("gain", gain)?;
    let ns = n_signals as f64;
    let p_z = 1.0 - p_x;
    let m = (ns * (p_x * p_x) * gain).floor() as u64;
    let k = (ns * (p_z * p_z) * gain).floor() as u64;
    if m == 0 || k == 0 {
        return Err(Error::InsufficientData(format!(
            "expected budget has m = {m}, k = {k}; both must be positive"
        )));
    }
    Ok(FiniteBudget {
        n_signals,
        m,
        k,
        k_i: k,
    })
}

/// Budget of a configured run. Matched rounds are limited by the weakest
/// link, so the smallest gain over the supplied link statistics is used.
pub fn derive_budget(config: &ProtocolConfig, stats: &[BipartiteStats]) -> Result<FiniteBudget> {
    let gain = stats
        .iter()
        .map(|s| s.gain)
        .reduce(f64::min)
        .ok_or_else(|| Error::InsufficientData("no link statistics".into()))?;
    budget_for(config.n_signals, config.p_x.value(), gain)
}

/// Asymptotic rate of the baseline protocol that distributes perfect GHZ
/// states. `links[0]` is the dealer. Error rates use the perfect-source pair
/// model with misalignment `e_d`, aggregated exactly as for the pair network.
pub fn ghz_protocol_rate(
    links: &[LinkParams],
    e_d: Probability,
    f_e: f64,
    n: usize,
) -> Result<f64> {
    Ok(ghz_protocol_report(links, e_d, f_e, n)?.rate_per_pulse)
}

pub fn ghz_protocol_report(
    links: &[LinkParams],
    e_d: Probability,
    f_e: f64,
    n: usize,
) -> Result<RateReport> {
    if n < 3 {
        return Err(Error::TooFewParticipants { min: 3, got: n });
    }
    if links.len() != n {
        return Err(Error::invalid(
            "links",
            format!("expected {n} links (dealer first), got {}", links.len()),
        ));
    }
    let gain = photonics::ghz_source_gain(links)?;
    let with_ed = |l: &LinkParams| LinkParams {
        misalignment_x: e_d,
        misalignment_z: e_d,
        ..*l
    };
    let dealer = with_ed(&links[0]);
    let mut e_z = Vec::with_capacity(n - 1);
    let mut e_x_pairs = Vec::with_capacity(n - 1);
    for player in &links[1..] {
        let s = photonics::bipartite_stats(&SourceModel::Perfect, &dealer, &with_ed(player))?;
        e_z.push(photonics::z_marginal_error(s.error_z)?);
        e_x_pairs.push(s.error_x);
    }
    let e_x = photonics::x_total_error_links(&e_x_pairs)?;
    Ok(RateReport {
        gain,
        e_x_total: e_x,
        rate_per_pulse: asymptotic_rate(gain, &e_z, e_x, f_e)?,
        e_z_marginals: e_z,
        key_length: None,
        leak_ec_bits: 0.0,
    })
}

/// Per-link statistics of a configured network, one entry per player.
pub fn link_stats(config: &ProtocolConfig) -> Result<Vec<BipartiteStats>> {
    config
        .player_links
        .iter()
        .map(|p| photonics::bipartite_stats(&config.source, &config.dealer_link, p))
        .collect()
}

struct Aggregate {
    gain: f64,
    e_x: f64,
    e_z: Vec<f64>,
}

fn aggregate(stats: &[BipartiteStats]) -> Result<Aggregate> {
    let gain = stats
        .iter()
        .map(|s| s.gain)
        .reduce(f64::min)
        .ok_or_else(|| Error::InsufficientData("no link statistics".into()))?;
    let e_x_pairs: Vec<f64> = stats.iter().map(|s| s.error_x.min(E0)).collect();
    let e_z = stats
        .iter()
        .map(|s| photonics::z_marginal_error(s.error_z.min(E0)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Aggregate {
        gain,
        e_x: photonics::x_total_error_links(&e_x_pairs)?,
        e_z,
    })
}

/// Asymptotic analysis of the configured network.
pub fn asymptotic_report(config: &ProtocolConfig) -> Result<RateReport> {
    config.validate()?;
    let agg = aggregate(&link_stats(config)?)?;
    Ok(RateReport {
        gain: agg.gain,
        e_x_total: agg.e_x,
        rate_per_pulse: asymptotic_rate(agg.gain, &agg.e_z, agg.e_x, config.security.f_e)?,
        e_z_marginals: agg.e_z,
        key_length: None,
        leak_ec_bits: 0.0,
    })
}

/// Finite-size analysis with the expected (noise-free) round budget.
pub fn finite_report(config: &ProtocolConfig) -> Result<RateReport> {
    config.validate()?;
    let stats = link_stats(config)?;
    let agg = aggregate(&stats)?;
    let budget = derive_budget(config, &stats)?;
    let key_length = finite_key_length(&budget, &config.security, &agg.e_z, agg.e_x)?;
    Ok(RateReport {
        gain: config.p_x.value().powi(2) * agg.gain,
        e_x_total: agg.e_x,
        rate_per_pulse: key_length as f64 / config.n_signals as f64,
        leak_ec_bits: leak_ec(budget.m, config.security.f_e, agg.e_x)?,
        e_z_marginals: agg.e_z,
        key_length: Some(key_length),
    })
}

/// Asymptotic rate of the GHZ-distribution baseline over the same links.
pub fn ghz_report(config: &ProtocolConfig) -> Result<RateReport> {
    config.validate()?;
    let mut links = Vec::with_capacity(config.n_participants);
    links.push(config.dealer_link);
    links.extend_from_slice(&config.player_links);
    ghz_protocol_report(
        &links,
        config.dealer_link.misalignment_z,
        config.security.f_e,
        config.n_participants,
    )
}
