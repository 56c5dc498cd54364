//! Parameter sweeps over distance, participant count, μ or signal budget, and
//! the fixed CSV/JSON row format shared by every subcommand.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::config::{Preset, ProtocolConfig};
use crate::error::{Error, Result};
use crate::keyrate::{self, RateReport};
use crate::photonics::SourceModel;
use crate::sim;

/// Upper limit on simulated pulses per link.
pub const SIM_MAX_SIGNALS: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Distance,
    N,
    Mu,
    NSignals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Asymptotic,
    Finite,
    GhzCompare,
    Simulate,
}

impl Mode {
    fn uses_signal_budget(self) -> bool {
        matches!(self, Mode::Finite | Mode::Simulate)
    }
}

/// Extra axes crossed with the swept variable. Series combinations are
/// enumerated with `n` outermost, then `n_signals`, `mu`, `distance`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Series {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        deserialize_with = "de_counts"
    )]
    pub n_signals: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    #[serde(alias = "mode", deserialize_with = "one_or_many")]
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub series: Series,
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Mode>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(Mode),
        Many(Vec<Mode>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(m) => vec![m],
        OneOrMany::Many(v) => v,
    })
}

fn de_counts<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<u64>>, D::Error> {
    let Some(values) = Option::<Vec<f64>>::deserialize(d)? else {
        return Ok(None);
    };
    values
        .into_iter()
        .map(|v| {
            if v >= 1.0 && v.fract() == 0.0 && v < 1.8e19 {
                Ok(v as u64)
            } else {
                Err(serde::de::Error::custom(format!(
                    "{v} is not a positive integer signal count"
                )))
            }
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(Some)
}

fn count_value(field: &str, v: f64, min: f64) -> Result<u64> {
    if v.is_finite() && v >= min && v.fract() == 0.0 && v < 1.8e19 {
        Ok(v as u64)
    } else {
        Err(Error::invalid(
            field,
            format!("{v} must be an integer >= {min}"),
        ))
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::invalid("values", "sweep needs at least one value"));
        }
        if self.modes.is_empty() {
            return Err(Error::invalid("modes", "sweep needs at least one mode"));
        }
        for &v in &self.values {
            match self.variable {
                SweepVariable::Distance => {
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(Error::invalid(
                            "values",
                            format!("distance {v} is negative"),
                        ));
                    }
                }
                SweepVariable::N => {
                    count_value("values", v, 3.0)?;
                }
                SweepVariable::NSignals => {
                    count_value("values", v, 1.0)?;
                }
                SweepVariable::Mu => {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(Error::invalid("values", format!("mu {v} must be positive")));
                    }
                }
            }
        }
        let s = &self.series;
        let axes = [
            (SweepVariable::N, s.n.as_ref().map(Vec::len)),
            (SweepVariable::NSignals, s.n_signals.as_ref().map(Vec::len)),
            (SweepVariable::Mu, s.mu.as_ref().map(Vec::len)),
            (SweepVariable::Distance, s.distance.as_ref().map(Vec::len)),
        ];
        for (axis, len) in axes {
            match len {
                Some(0) => {
                    return Err(Error::invalid(
                        "series",
                        format!("series {axis:?} has no values"),
                    ))
                }
                Some(_) if axis == self.variable => {
                    return Err(Error::invalid(
                        "series",
                        format!("{axis:?} is both the sweep variable and a series"),
                    ))
                }
                _ => {}
            }
        }
        if s.n.iter().flatten().any(|&n| n < 3) {
            return Err(Error::invalid(
                "series.n",
                "participant counts must be >= 3",
            ));
        }
        if s.mu.iter().flatten().any(|&m| !(m.is_finite() && m > 0.0)) {
            return Err(Error::invalid("series.mu", "mu must be positive"));
        }
        if s.distance
            .iter()
            .flatten()
            .any(|&d| !(d.is_finite() && d >= 0.0))
        {
            return Err(Error::invalid(
                "series.distance",
                "distances must be non-negative",
            ));
        }

        let sweeps_budget = self.variable == SweepVariable::NSignals || s.n_signals.is_some();
        let sweeps_mu = self.variable == SweepVariable::Mu || s.mu.is_some();
        for &mode in &self.modes {
            if sweeps_budget && !mode.uses_signal_budget() {
                return Err(Error::invalid(
                    "modes",
                    format!("{mode:?} mode does not depend on the signal budget"),
                ));
            }
            if sweeps_mu && mode == Mode::GhzCompare {
                return Err(Error::invalid(
                    "modes",
                    "ghz_compare uses a perfect GHZ source and has no mu",
                ));
            }
        }
        Ok(())
    }
}

pub fn parse_sweep_spec(bytes: &[u8]) -> Result<SweepSpec> {
    let spec: SweepSpec = serde_json::from_slice(bytes)?;
    spec.validate()?;
    Ok(spec)
}

/// One output line. Column names are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub mode: Mode,
    pub n: usize,
    #[serde(rename = "N_s")]
    pub n_signals: u64,
    pub mu: Option<f64>,
    #[serde(rename = "L_km")]
    pub distance_km: f64,
    pub gain: f64,
    pub e_x: Option<f64>,
    pub e_z_max: Option<f64>,
    pub rate_per_pulse: f64,
    pub key_length: Option<u64>,
}

pub const CSV_COLUMNS: [&str; 10] = [
    "mode",
    "n",
    "N_s",
    "mu",
    "L_km",
    "gain",
    "e_x",
    "e_z_max",
    "rate_per_pulse",
    "key_length",
];

impl Row {
    pub fn from_report(mode: Mode, config: &ProtocolConfig, report: &RateReport) -> Self {
        Row {
            mode,
            n: config.n_participants,
            n_signals: config.n_signals,
            mu: match mode {
                Mode::GhzCompare => None,
                _ => config.source.mu(),
            },
            distance_km: config
                .player_links
                .first()
                .map_or(config.dealer_link.distance_km, |l| l.distance_km),
            gain: report.gain,
            e_x: Some(report.e_x_total),
            e_z_max: Some(report.e_z_max()),
            rate_per_pulse: report.rate_per_pulse,
            key_length: report.key_length,
        }
    }

    fn empty(mode: Mode, config: &ProtocolConfig) -> Self {
        let mut row = Row::from_report(
            mode,
            config,
            &RateReport {
                gain: 0.0,
                e_x_total: 0.0,
                e_z_marginals: Vec::new(),
                rate_per_pulse: 0.0,
                key_length: Some(0),
                leak_ec_bits: 0.0,
            },
        );
        row.e_x = None;
        row.e_z_max = None;
        row
    }
}

/// Evaluates one configuration in `mode`.
pub fn evaluate(mode: Mode, config: &ProtocolConfig) -> Result<Row> {
    let outcome = match mode {
        Mode::Asymptotic => keyrate::asymptotic_report(config),
        Mode::Finite => keyrate::finite_report(config),
        Mode::GhzCompare => keyrate::ghz_report(config),
        Mode::Simulate => {
            if config.n_signals > SIM_MAX_SIGNALS {
                return Err(Error::invalid(
                    "n_signals",
                    format!("simulation is limited to {SIM_MAX_SIGNALS} pulses per link"),
                ));
            }
            sim::simulate(config).map(|run| run.report)
        }
    };
    match outcome {
        Ok(report) => Ok(Row::from_report(mode, config, &report)),
        // Too few rounds for a finite-size key: no key, but keep the row.
        Err(Error::InsufficientData(msg)) if mode.uses_signal_budget() => {
            log::debug!("{mode:?} point without key: {msg}");
            Ok(Row::empty(mode, config))
        }
        Err(e) => Err(e),
    }
}

fn apply(config: &mut ProtocolConfig, axis: SweepVariable, value: f64) {
    match axis {
        SweepVariable::Distance => config.set_distance(value),
        SweepVariable::N => config.set_participants(value as usize),
        SweepVariable::Mu => config.source = SourceModel::PairSource { mu: value },
        SweepVariable::NSignals => config.n_signals = value as u64,
    }
}

fn series_points(series: &Series) -> Vec<Vec<(SweepVariable, f64)>> {
    let axes: Vec<(SweepVariable, Vec<f64>)> = [
        (
            SweepVariable::N,
            series
                .n
                .as_ref()
                .map(|v| v.iter().map(|&n| n as f64).collect()),
        ),
        (
            SweepVariable::NSignals,
            series
                .n_signals
                .as_ref()
                .map(|v| v.iter().map(|&n| n as f64).collect()),
        ),
        (SweepVariable::Mu, series.mu.clone()),
        (SweepVariable::Distance, series.distance.clone()),
    ]
    .into_iter()
    .filter_map(|(axis, values)| values.map(|v| (axis, v)))
    .collect();

    let mut combos = vec![Vec::new()];
    for (axis, values) in axes {
        combos = combos
            .into_iter()
            .flat_map(|prefix: Vec<(SweepVariable, f64)>| {
                values.iter().map(move |&v| {
                    let mut next = prefix.clone();
                    next.push((axis, v));
                    next
                })
            })
            .collect();
    }
    combos
}

/// Rows for every mode × series combination × swept value, in that nesting
/// order. Points are evaluated in parallel; output order is fixed.
pub fn run_sweep(config: &ProtocolConfig, spec: &SweepSpec) -> Result<Vec<Row>> {
    spec.validate()?;
    let mut points = Vec::new();
    for &mode in &spec.modes {
        for combo in series_points(&spec.series) {
            for &value in &spec.values {
                let mut c = config.clone();
                for &(axis, v) in &combo {
                    apply(&mut c, axis, v);
                }
                apply(&mut c, spec.variable, value);
                points.push((mode, c));
            }
        }
    }
    points
        .par_iter()
        .map(|(mode, c)| evaluate(*mode, c))
        .collect()
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    writer.write_record(CSV_COLUMNS)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(rows: &[Row], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, rows)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step).round() as usize;
    (0..=count).map(|i| start + i as f64 * step).collect()
}

/// Built-in rate-versus-distance sweeps.
pub fn figure(name: &str) -> Result<(ProtocolConfig, SweepSpec)> {
    let (preset, source, spec) = match name {
        "fig2" | "fig6" => (
            if name == "fig2" {
                Preset::MainText
            } else {
                Preset::Table1
            },
            SourceModel::Perfect,
            SweepSpec {
                variable: SweepVariable::Distance,
                values: grid(0.0, 300.0, 5.0),
                modes: vec![Mode::Asymptotic, Mode::GhzCompare],
                series: Series {
                    n: Some(vec![3, 4, 5]),
                    ..Series::default()
                },
            },
        ),
        "fig3" => (
            Preset::MainText,
            SourceModel::PairSource { mu: 0.04 },
            SweepSpec {
                variable: SweepVariable::Distance,
                values: grid(0.0, 200.0, 2.0),
                modes: vec![Mode::Finite],
                series: Series {
                    n: Some(vec![4, 6, 8]),
                    n_signals: Some(vec![1_000_000_000_000, 10_000_000_000_000]),
                    ..Series::default()
                },
            },
        ),
        "fig7" => (
            Preset::Table1,
            SourceModel::PairSource { mu: 0.04 },
            SweepSpec {
                variable: SweepVariable::Distance,
                values: grid(0.0, 260.0, 5.0),
                modes: vec![Mode::Finite],
                series: Series {
                    n: Some(vec![4, 6, 8]),
                    n_signals: Some(vec![1_000_000_000_000, 10_000_000_000_000]),
                    mu: Some(vec![0.03, 0.04, 0.045, 0.05]),
                    ..Series::default()
                },
            },
        ),
        other => {
            return Err(Error::invalid(
                "figure",
                format!("unknown figure `{other}` (expected fig2, fig3, fig6 or fig7)"),
            ))
        }
    };
    let mut config = ProtocolConfig::preset(preset, 3);
    config.source = source;
    Ok((config, spec))
}
