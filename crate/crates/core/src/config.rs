//! Protocol configuration: JSON loading, parameter presets and validation.
//!
//! A config document is a JSON object whose every key is optional. Missing
//! values come from the selected preset (`"table1"` unless `"preset"` says
//! otherwise). Shared detector/fiber parameters live under `"link"`; the
//! `"distance_km"` shorthand places every participant at the same distance
//! from the network provider. Explicit `"dealer_link"` and `"player_links"`
//! entries override the shorthand field by field.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::keyrate::SecurityParams;
use crate::math::{LinkParams, Probability};
use crate::photonics::SourceModel;

pub const DEFAULT_ABORT_THRESHOLD: f64 = 0.11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Supplementary parameter table: e_d = 0.01, η_d = 0.78, p_d = 1e-7,
    /// α = 0.16, f_e = 1.12.
    Table1,
    /// Main-text parameters: e_d = 0.01, η_d = 0.9, p_d = 1e-5, α = 0.2,
    /// f_e = 1.22.
    MainText,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "table1" => Ok(Preset::Table1),
            "maintext" => Ok(Preset::MainText),
            other => Err(Error::invalid(
                "preset",
                format!("unknown preset `{other}` (expected table1 or maintext)"),
            )),
        }
    }

    pub fn link(self) -> LinkParams {
        let (eta_d, p_d, alpha) = match self {
            Preset::Table1 => (0.78, 1e-7, 0.16),
            Preset::MainText => (0.9, 1e-5, 0.2),
        };
        LinkParams {
            distance_km: 0.0,
            detector_efficiency: Probability::new(eta_d).unwrap(),
            dark_count: Probability::new(p_d).unwrap(),
            misalignment_x: Probability::new(0.01).unwrap(),
            misalignment_z: Probability::new(0.01).unwrap(),
            attenuation_db_per_km: alpha,
        }
    }

    pub fn f_e(self) -> f64 {
        match self {
            Preset::Table1 => 1.12,
            Preset::MainText => 1.22,
        }
    }
}

/// Fully resolved and validated protocol configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolConfig {
    pub n_participants: usize,
    pub dealer_link: LinkParams,
    /// One entry per player B_1 … B_{n−1}.
    pub player_links: Vec<LinkParams>,
    pub source: SourceModel,
    pub p_x: Probability,
    pub security: SecurityParams,
    pub n_signals: u64,
    pub abort_threshold: Probability,
    pub seed: u64,
}

impl ProtocolConfig {
    /// Symmetric network with every participant at distance 0.
    pub fn preset(preset: Preset, n_participants: usize) -> Self {
        let link = preset.link();
        ProtocolConfig {
            n_participants,
            dealer_link: link,
            player_links: vec![link; n_participants.saturating_sub(1)],
            source: SourceModel::PairSource { mu: 0.04 },
            p_x: Probability::new(0.9).unwrap(),
            security: SecurityParams {
                f_e: preset.f_e(),
                ..SecurityParams::default()
            },
            n_signals: 1_000_000_000_000,
            abort_threshold: Probability::new(DEFAULT_ABORT_THRESHOLD).unwrap(),
            seed: 0,
        }
    }

    /// Places every participant at `distance_km` from the provider.
    pub fn set_distance(&mut self, distance_km: f64) {
        self.dealer_link.distance_km = distance_km;
        for link in &mut self.player_links {
            link.distance_km = distance_km;
        }
    }

    /// Changes the participant count, replicating the first player's link.
    pub fn set_participants(&mut self, n: usize) {
        let template = self
            .player_links
            .first()
            .copied()
            .unwrap_or(self.dealer_link);
        self.player_links.resize(n.saturating_sub(1), template);
        self.n_participants = n;
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_participants < 3 {
            return Err(Error::TooFewParticipants {
                min: 3,
                got: self.n_participants,
            });
        }
        if self.player_links.len() != self.n_participants - 1 {
            return Err(Error::invalid(
                "player_links",
                format!(
                    "{} participants need {} player links, got {}",
                    self.n_participants,
                    self.n_participants - 1,
                    self.player_links.len()
                ),
            ));
        }
        self.dealer_link
            .validate()
            .map_err(|e| prefix_field("dealer_link", e))?;
        for (i, link) in self.player_links.iter().enumerate() {
            link.validate()
                .map_err(|e| prefix_field(&format!("player_links[{i}]"), e))?;
        }
        self.source
            .validate()
            .map_err(|e| Error::invalid("source.mu", e.to_string()))?;
        self.security.validate()?;
        if self.n_signals == 0 {
            return Err(Error::invalid("n_signals", "must be positive"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn prefix_field(prefix: &str, err: Error) -> Error {
    match err {
        Error::Invalid { field, reason } => Error::Invalid {
            field: format!("{prefix}.{field}"),
            reason,
        },
        other => other,
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    distance_km: Option<f64>,
    detector_efficiency: Option<f64>,
    dark_count: Option<f64>,
    /// Sets both bases at once.
    misalignment: Option<f64>,
    misalignment_x: Option<f64>,
    misalignment_z: Option<f64>,
    attenuation_db_per_km: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSecurity {
    eps_correct: Option<f64>,
    eps_sample: Option<f64>,
    eps_prime: Option<f64>,
    q_complementarity: Option<f64>,
    f_e: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    kind: Option<String>,
    mu: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    n_participants: Option<usize>,
    distance_km: Option<f64>,
    link: Option<RawLink>,
    dealer_link: Option<RawLink>,
    player_links: Option<Vec<RawLink>>,
    source: Option<RawSource>,
    p_x: Option<f64>,
    security: Option<RawSecurity>,
    #[serde(default, deserialize_with = "de_count")]
    n_signals: Option<u64>,
    abort_threshold: Option<f64>,
    #[serde(default, deserialize_with = "de_count")]
    seed: Option<u64>,
}

/// Accepts non-negative integers written either as JSON integers or as
/// integral floats such as `1e13`.
fn de_count<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<u64>, D::Error> {
    use serde::de::Error as _;
    let Some(n) = Option::<serde_json::Number>::deserialize(d)? else {
        return Ok(None);
    };
    if let Some(v) = n.as_u64() {
        return Ok(Some(v));
    }
    match n.as_f64() {
        Some(f) if f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 => Ok(Some(f as u64)),
        _ => Err(D::Error::custom(format!(
            "{n} is not a non-negative integer count"
        ))),
    }
}

fn probability(field: &str, value: f64) -> Result<Probability> {
    Probability::new(value)
        .map_err(|_| Error::invalid(field, format!("{value} is not a probability in [0, 1]")))
}

fn merge_link(field: &str, base: LinkParams, raw: &RawLink) -> Result<LinkParams> {
    let mut link = base;
    if let Some(d) = raw.distance_km {
        link.distance_km = d;
    }
    if let Some(v) = raw.detector_efficiency {
        link.detector_efficiency = probability(&format!("{field}.detector_efficiency"), v)?;
    }
    if let Some(v) = raw.dark_count {
        link.dark_count = probability(&format!("{field}.dark_count"), v)?;
    }
    if let Some(v) = raw.misalignment {
        let p = probability(&format!("{field}.misalignment"), v)?;
        link.misalignment_x = p;
        link.misalignment_z = p;
    }
    if let Some(v) = raw.misalignment_x {
        link.misalignment_x = probability(&format!("{field}.misalignment_x"), v)?;
    }
    if let Some(v) = raw.misalignment_z {
        link.misalignment_z = probability(&format!("{field}.misalignment_z"), v)?;
    }
    if let Some(v) = raw.attenuation_db_per_km {
        link.attenuation_db_per_km = v;
    }
    link.validate().map_err(|e| prefix_field(field, e))?;
    Ok(link)
}

fn resolve(raw: RawConfig) -> Result<ProtocolConfig> {
    let preset = match raw.preset.as_deref() {
        Some(name) => Preset::parse(name)?,
        None => Preset::Table1,
    };
    let mut shared = preset.link();
    if let Some(d) = raw.distance_km {
        shared.distance_km = d;
    }
    if let Some(link) = &raw.link {
        shared = merge_link("link", shared, link)?;
    }
    let dealer_link = match &raw.dealer_link {
        Some(l) => merge_link("dealer_link", shared, l)?,
        None => shared,
    };

    let player_links = match &raw.player_links {
        Some(list) => list
            .iter()
            .enumerate()
            .map(|(i, l)| merge_link(&format!("player_links[{i}]"), shared, l))
            .collect::<Result<Vec<_>>>()?,
        None => {
            let n = raw.n_participants.unwrap_or(3);
            vec![shared; n.saturating_sub(1)]
        }
    };
    let n_participants = raw.n_participants.unwrap_or(player_links.len() + 1);

    let source = match &raw.source {
        None => SourceModel::PairSource { mu: 0.04 },
        Some(s) => match s.kind.as_deref().unwrap_or("pair_source") {
            "perfect" => SourceModel::Perfect,
            "pair_source" => SourceModel::PairSource {
                mu: s.mu.unwrap_or(0.04),
            },
            other => {
                return Err(Error::invalid(
                    "source.kind",
                    format!("unknown source `{other}` (expected perfect or pair_source)"),
                ))
            }
        },
    };

    let mut security = SecurityParams {
        f_e: preset.f_e(),
        ..SecurityParams::default()
    };
    if let Some(s) = &raw.security {
        security.eps_correct = s.eps_correct.unwrap_or(security.eps_correct);
        security.eps_sample = s.eps_sample.unwrap_or(security.eps_sample);
        security.eps_prime = s.eps_prime.unwrap_or(security.eps_prime);
        security.q_complementarity = s.q_complementarity.unwrap_or(security.q_complementarity);
        security.f_e = s.f_e.unwrap_or(security.f_e);
    }

    let config = ProtocolConfig {
        n_participants,
        dealer_link,
        player_links,
        source,
        p_x: probability("p_x", raw.p_x.unwrap_or(0.9))?,
        security,
        n_signals: raw.n_signals.unwrap_or(1_000_000_000_000),
        abort_threshold: probability(
            "abort_threshold",
            raw.abort_threshold.unwrap_or(DEFAULT_ABORT_THRESHOLD),
        )?,
        seed: raw.seed.unwrap_or(0),
    };
    config.validate()?;
    Ok(config)
}

/// Parses and validates a JSON config document.
pub fn parse_config(bytes: &[u8]) -> Result<ProtocolConfig> {
    let raw: RawConfig = serde_json::from_slice(bytes)?;
    resolve(raw)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ProtocolConfig> {
    let bytes = std::fs::read(path)?;
    parse_config(&bytes)
}
