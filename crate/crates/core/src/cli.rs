//! Command-line front end. `run` returns the process exit code:
//! 0 success, 1 invalid input, 2 verification failure, 3 runtime error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{self, Preset, ProtocolConfig};
use crate::error::{Error, Result};
use crate::math::Probability;
use crate::photonics::SourceModel;
use crate::sweep::{self, Mode, Row};
use crate::transcript;
use crate::verifier::{self, CircuitVariant, VerificationRecord, MAX_PARTIES, MIN_PARTIES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_VERIFY_FAILED: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "qss",
    version,
    about = "Quantum secret sharing key rates and simulation"
)]
pub struct Cli {
    /// JSON protocol configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Parameter preset used when no config file is given.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<PresetArg>,

    /// Overrides the configured RNG seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Write results here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Output format; rows default to CSV, verification reports to JSON.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Table1,
    Maintext,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Table1 => Preset::Table1,
            PresetArg::Maintext => Preset::MainText,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Asymptotic key rate per pulse.
    Rate(PointArgs),
    /// Finite-size key length.
    Finite(PointArgs),
    /// This protocol against a GHZ-source protocol on the same network.
    CompareGhz(PointArgs),
    /// Monte-Carlo run of the full protocol.
    Simulate {
        #[command(flatten)]
        point: PointArgs,
        /// Write matched rounds as newline-delimited JSON.
        #[arg(long, value_name = "PATH")]
        transcript: Option<PathBuf>,
    },
    /// State-vector check that the XOR pipeline reproduces GHZ correlations.
    Verify {
        /// Participant count; checks the whole range when omitted.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = MIN_PARTIES)]
        n_min: usize,
        #[arg(long, default_value_t = MAX_PARTIES)]
        n_max: usize,
        #[arg(long, hide = true)]
        skip_nonlocal: bool,
    },
    /// Parameter sweep from a spec file or a built-in figure.
    Sweep {
        #[arg(
            long,
            value_name = "PATH",
            conflicts_with = "figure",
            required_unless_present = "figure"
        )]
        spec: Option<PathBuf>,
        /// One of fig2, fig3, fig6, fig7.
        #[arg(long)]
        figure: Option<String>,
    },
}

/// Overrides applied on top of the loaded configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct PointArgs {
    /// Number of participants, dealer included.
    #[arg(long)]
    pub n: Option<usize>,
    /// Provider-to-participant distance in km.
    #[arg(long)]
    pub distance: Option<f64>,
    /// Mean photon-pair number of the pair source.
    #[arg(long, conflicts_with = "perfect")]
    pub mu: Option<f64>,
    /// Use an ideal single-pair source.
    #[arg(long)]
    pub perfect: bool,
    /// Pulses sent on each link.
    #[arg(long)]
    pub n_signals: Option<f64>,
    /// Probability of choosing the X basis.
    #[arg(long)]
    pub p_x: Option<f64>,
}

impl PointArgs {
    fn apply(&self, config: &mut ProtocolConfig) -> Result<()> {
        if let Some(n) = self.n {
            config.set_participants(n);
        }
        if let Some(d) = self.distance {
            config.set_distance(d);
        }
        if let Some(mu) = self.mu {
            config.source = SourceModel::PairSource { mu };
        }
        if self.perfect {
            config.source = SourceModel::Perfect;
        }
        if let Some(v) = self.n_signals {
            if !(v >= 1.0 && v.fract() == 0.0 && v < 1.8e19) {
                return Err(Error::invalid(
                    "--n-signals",
                    format!("{v} is not a positive integer"),
                ));
            }
            config.n_signals = v as u64;
        }
        if let Some(p) = self.p_x {
            config.p_x = Probability::new(p)
                .map_err(|_| Error::invalid("--p-x", format!("{p} is not a probability")))?;
        }
        config.validate()
    }
}

enum Failure {
    Error(Error),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Error(e.into())
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        EXIT_INVALID
    } else {
        EXIT_RUNTIME
    }
}

/// Parses `args` (program name first) and runs the command, writing results
/// to `--out` or `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(Failure::Verification) => EXIT_VERIFY_FAILED,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn base_config(cli: &Cli) -> Result<ProtocolConfig> {
    let mut config = match &cli.config {
        Some(path) => load(path)?,
        None => ProtocolConfig::preset(cli.preset.map_or(Preset::Table1, Preset::from), 3),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn load(path: &Path) -> Result<ProtocolConfig> {
    config::load_config(path).map_err(|e| match e {
        Error::Io(io) => Error::invalid("--config", format!("{}: {io}", path.display())),
        other => other,
    })
}

fn read_input(flag: &str, path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::invalid(flag, format!("{}: {e}", path.display())))
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    match &cli.command {
        Command::Rate(point) => {
            emit_rows(cli, stdout, &point_rows(cli, point, &[Mode::Asymptotic])?)
        }
        Command::Finite(point) => emit_rows(cli, stdout, &point_rows(cli, point, &[Mode::Finite])?),
        Command::CompareGhz(point) => emit_rows(
            cli,
            stdout,
            &point_rows(cli, point, &[Mode::Asymptotic, Mode::GhzCompare])?,
        ),
        Command::Simulate {
            point,
            transcript: path,
        } => {
            let mut config = base_config(cli)?;
            point.apply(&mut config)?;
            if config.n_signals > sweep::SIM_MAX_SIGNALS {
                return Err(Error::invalid(
                    "n_signals",
                    format!(
                        "simulation is limited to {} pulses per link",
                        sweep::SIM_MAX_SIGNALS
                    ),
                )
                .into());
            }
            let run = crate::sim::simulate(&config)?;
            log::info!(
                "{} matched rounds ({} X, {} Z); decision {:?}",
                run.matched.len(),
                run.estimates.rounds_x,
                run.estimates.rounds_z,
                run.decision
            );
            if let Some(path) = path {
                let file = BufWriter::new(File::create(path)?);
                transcript::write_transcript(file, &run.matched, &run.correlated)?;
            }
            let row = Row::from_report(Mode::Simulate, &config, &run.report);
            emit_rows(cli, stdout, &[row])
        }
        Command::Verify {
            n,
            n_min,
            n_max,
            skip_nonlocal,
        } => {
            let range = match n {
                Some(n) => *n..=*n,
                None => *n_min..=*n_max,
            };
            for bound in [*range.start(), *range.end()] {
                if !(MIN_PARTIES..=MAX_PARTIES).contains(&bound) {
                    return Err(Error::invalid(
                        "--n",
                        format!(
                            "{bound} is outside the supported range {MIN_PARTIES}..={MAX_PARTIES}"
                        ),
                    )
                    .into());
                }
            }
            let variant = if *skip_nonlocal {
                CircuitVariant::SkipNonLocal
            } else {
                CircuitVariant::Full
            };
            let mut records = Vec::new();
            for n in range {
                records.extend(verifier::check_equivalence_with(n, variant)?);
            }
            for r in records.iter().filter(|r| !r.passed()) {
                log::error!(
                    "n = {} {:?} basis: GHZ correlations not reproduced",
                    r.n,
                    r.basis
                );
            }
            emit_verification(cli, stdout, &records)?;
            if records.iter().all(VerificationRecord::passed) {
                Ok(())
            } else {
                Err(Failure::Verification)
            }
        }
        Command::Sweep { spec, figure } => {
            let (config, spec) = match (spec, figure) {
                (Some(path), _) => {
                    let spec = sweep::parse_sweep_spec(&read_input("--spec", path)?)?;
                    (base_config(cli)?, spec)
                }
                (None, Some(name)) => {
                    let (mut config, spec) = sweep::figure(name)?;
                    if cli.config.is_some() || cli.preset.is_some() {
                        let source = config.source;
                        config = base_config(cli)?;
                        config.source = source;
                    } else if let Some(seed) = cli.seed {
                        config.seed = seed;
                    }
                    (config, spec)
                }
                (None, None) => unreachable!("clap requires --spec or --figure"),
            };
            config.validate()?;
            let rows = sweep::run_sweep(&config, &spec)?;
            emit_rows(cli, stdout, &rows)
        }
    }
}

fn point_rows(cli: &Cli, point: &PointArgs, modes: &[Mode]) -> Result<Vec<Row>> {
    let mut config = base_config(cli)?;
    point.apply(&mut config)?;
    modes.iter().map(|&m| sweep::evaluate(m, &config)).collect()
}

fn with_output(
    cli: &Cli,
    stdout: &mut dyn Write,
    body: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match &cli.out {
        Some(path) => {
            let mut file = BufWriter::new(File::create(path)?);
            body(&mut file)?;
            file.flush()?;
            Ok(())
        }
        None => body(stdout),
    }
}

fn emit_rows(cli: &Cli, stdout: &mut dyn Write, rows: &[Row]) -> std::result::Result<(), Failure> {
    with_output(cli, stdout, |w| match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => sweep::write_csv(rows, w),
        Format::Json => sweep::write_json(rows, w),
    })?;
    Ok(())
}

fn emit_verification(
    cli: &Cli,
    stdout: &mut dyn Write,
    records: &[VerificationRecord],
) -> Result<()> {
    with_output(cli, stdout, |w| {
        match cli.format.unwrap_or(Format::Json) {
            Format::Json => {
                serde_json::to_writer_pretty(&mut *w, records)?;
                w.write_all(b"\n")?;
            }
            Format::Csv => {
                let mut out = csv::Writer::from_writer(w);
                out.write_record(["n", "basis", "fidelity", "support_match", "counterexample"])?;
                for r in records {
                    let ce = r.counterexample.as_ref().map_or(String::new(), |c| {
                        c.outcome.iter().map(|b| char::from(b'0' + b)).collect()
                    });
                    out.write_record([
                        r.n.to_string(),
                        format!("{:?}", r.basis),
                        r.fidelity.to_string(),
                        r.support_match.to_string(),
                        ce,
                    ])?;
                }
                out.flush()?;
            }
        }
        Ok(())
    })
}
