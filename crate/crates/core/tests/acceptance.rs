//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use qss::config::{Preset, ProtocolConfig};
use qss::keyrate::{self, FiniteBudget, SecurityParams};
use qss::math::binary_entropy;
use qss::photonics::{self, SourceModel};
use qss::sim::{self, apply_xor, Basis, MatchedRound};
use qss::verifier::{self, CircuitVariant};

type Outcome = Result<String, String>;

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Option<Duration>,
    check: fn() -> Outcome,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// 1
fn formula_identity() -> Outcome {
    let mut worst = 0.0f64;
    for n in 2..=12 {
        for step in 0..=500 {
            let e = step as f64 * 0.001;
            let closed = photonics::x_total_error(e, n).map_err(err)?;
            let sum = photonics::x_total_error_sum(e, n).map_err(err)?;
            worst = worst.max((closed - sum).abs());
        }
    }
    ensure(worst <= 1e-12, || {
        format!("max |sum - closed| = {worst:e} > 1e-12")
    })?;
    Ok(format!("11 x 501 grid, max |sum - closed| = {worst:.1e}"))
}

// 2
fn circuit_fidelity() -> Outcome {
    let mut min_fid = 1.0f64;
    let mut worst_norm = 0.0f64;
    for n in 2..=8 {
        let run = verifier::run_ghz_circuit_with(n, CircuitVariant::Full).map_err(err)?;
        let fid = run
            .state
            .fidelity(&verifier::ghz_reference(n).map_err(err)?);
        min_fid = min_fid.min(fid);
        ensure(run.gate_norms.len() == 2 * n.saturating_sub(2), || {
            format!("n = {n}: {} gates recorded", run.gate_norms.len())
        })?;
        for norm in run.gate_norms.iter().chain([&run.state.norm()]) {
            worst_norm = worst_norm.max((norm - 1.0).abs());
        }
        ensure(fid >= 1.0 - 1e-10, || format!("n = {n}: fidelity {fid}"))?;
    }
    ensure(worst_norm <= 1e-12, || {
        format!("norm drifted by {worst_norm:e}")
    })?;
    Ok(format!(
        "n = 2..8, min fidelity 1 - {:.1e}, max norm drift {worst_norm:.1e}",
        1.0 - min_fid
    ))
}

fn table(
    state: &verifier::StateVector,
    basis: Basis,
    qubits: &[usize],
) -> Result<BTreeMap<Vec<bool>, f64>, String> {
    let t = verifier::measure_statistics(state, basis, qubits).map_err(err)?;
    Ok(t.rows
        .into_iter()
        .filter(|r| r.probability > 1e-12)
        .map(|r| (r.outcome, r.probability))
        .collect())
}

fn bits(s: &str) -> Vec<bool> {
    s.bytes().map(|b| b == b'1').collect()
}

// 3
fn xor_cnot_equivalence() -> Outcome {
    for n in 2..=8 {
        for record in verifier::check_equivalence(n).map_err(err)? {
            ensure(record.passed(), || {
                format!(
                    "n = {n} {:?}: supports differ ({:?})",
                    record.basis, record.counterexample
                )
            })?;
        }
    }

    let state = verifier::run_ghz_circuit(3).map_err(err)?;
    let tol = 1e-12;
    let close = |t: &BTreeMap<Vec<bool>, f64>, expect: &[(&str, f64)]| {
        t.len() == expect.len()
            && expect
                .iter()
                .all(|(o, p)| t.get(&bits(o)).is_some_and(|q| (q - p).abs() < tol))
    };

    // GHZ parties (a1, b1, b2).
    let parties = verifier::ghz_parties(3);
    let z = table(&state, Basis::Z, &parties)?;
    ensure(close(&z, &[("000", 0.5), ("111", 0.5)]), || {
        format!("Z table {z:?}")
    })?;
    let x = table(&state, Basis::X, &parties)?;
    ensure(
        close(
            &x,
            &[("000", 0.25), ("011", 0.25), ("101", 0.25), ("110", 0.25)],
        ),
        || format!("X table {x:?}"),
    )?;

    // Full Z register (a1, a2, b1, b2) against the classical rows: the measured
    // a2 is the broadcast bit c2 and b1, b2 are the players' corrected bits.
    let all = [
        verifier::dealer_qubit(1),
        verifier::dealer_qubit(2),
        verifier::player_qubit(1),
        verifier::player_qubit(2),
    ];
    let full = table(&state, Basis::Z, &all)?;
    let mut classical = BTreeMap::new();
    for s in 0..4u8 {
        let a = vec![s & 1 == 1, s & 2 == 2];
        let c = apply_xor(&MatchedRound {
            basis: Basis::Z,
            j: 0,
            rounds: vec![0, 0],
            dealer_bits: a.clone(),
            player_bits: a,
        });
        ensure(c.is_ghz_consistent(), || {
            format!("Z row {s} not GHZ-consistent")
        })?;
        let outcome = vec![
            c.dealer_key_bit,
            c.broadcast_bits[0],
            c.player_key_bits[0],
            c.player_key_bits[1],
        ];
        *classical.entry(outcome).or_insert(0.0) += 0.25;
    }
    ensure(
        full.len() == 4
            && classical.len() == 4
            && full.iter().all(|(o, p)| {
                classical
                    .get(o)
                    .is_some_and(|q| (p - q).abs() < tol && (p - 0.25).abs() < tol)
            }),
        || format!("Z register {full:?} vs classical {classical:?}"),
    )?;

    // Classical X rows: all 16 dealer/player combinations, consistent exactly
    // when the parities agree.
    let mut consistent = 0;
    for a in 0..4u8 {
        for b in 0..4u8 {
            let c = apply_xor(&MatchedRound {
                basis: Basis::X,
                j: 0,
                rounds: vec![0, 0],
                dealer_bits: vec![a & 1 == 1, a & 2 == 2],
                player_bits: vec![b & 1 == 1, b & 2 == 2],
            });
            let even = a.count_ones() % 2 == b.count_ones() % 2;
            ensure(c.is_ghz_consistent() == even, || {
                format!("X row a={a} b={b}")
            })?;
            consistent += usize::from(even);
        }
    }
    ensure(consistent == 8, || {
        format!("{consistent} consistent X rows")
    })?;
    Ok("n = 2..8 both bases; n=3 Z {000,111} x 1/2, X even parity x 1/4, 4 Z rows x 1/4, 8/16 X rows".into())
}

fn perfect_source(n: usize, distance: f64) -> ProtocolConfig {
    let mut c = ProtocolConfig::preset(Preset::MainText, n);
    c.source = SourceModel::Perfect;
    c.set_distance(distance);
    c
}

// 4
fn n_independence() -> Outcome {
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for distance in [10.0, 50.0, 100.0] {
        let mut rates = Vec::new();
        for n in 3..=5 {
            let config = perfect_source(n, distance);
            let ours = keyrate::asymptotic_report(&config)
                .map_err(err)?
                .rate_per_pulse;
            let ghz = keyrate::ghz_report(&config).map_err(err)?.rate_per_pulse;
            let eta = config.dealer_link.efficiency();
            let bound = ours * eta.powi(n as i32 - 2) / 0.5;
            if ghz > bound {
                failures.push(format!(
                    "L={distance} n={n}: GHZ rate {ghz:.3e} > {bound:.3e}"
                ));
            }
            rates.push(ours);
        }
        let max = rates.iter().cloned().fold(f64::MIN, f64::max);
        let min = rates.iter().cloned().fold(f64::MAX, f64::min);
        let spread = (max - min) / max;
        summary.push(format!("L={distance}: spread {:.1}%", 100.0 * spread));
        if spread > 0.05 {
            failures.push(format!(
                "L={distance}: rates {} differ by {:.1}% > 5%",
                rates
                    .iter()
                    .map(|r| format!("{r:.4e}"))
                    .collect::<Vec<_>>()
                    .join("/"),
                100.0 * spread
            ));
        }
    }
    if failures.is_empty() {
        Ok(summary.join(", "))
    } else {
        Err(failures.join("; "))
    }
}

fn max_positive_distance(n: usize) -> Result<Option<u32>, String> {
    let mut config = ProtocolConfig::preset(Preset::MainText, n);
    config.source = SourceModel::PairSource { mu: 0.04 };
    config.p_x = qss::math::Probability::new(0.9).map_err(err)?;
    config.n_signals = 10_000_000_000_000;
    let mut best = None;
    for km in 0..=300u32 {
        config.set_distance(f64::from(km));
        let l = match keyrate::finite_report(&config) {
            Ok(r) => r.key_length.unwrap_or(0),
            Err(qss::Error::InsufficientData(_)) => 0,
            Err(e) => return Err(e.to_string()),
        };
        if l > 0 {
            best = Some(km);
        }
    }
    Ok(best)
}

// 5
fn finite_key_distances() -> Outcome {
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for (n, target) in [(4, 130), (6, 110), (8, 80)] {
        let reach = max_positive_distance(n)?;
        summary.push(format!("n={n}: {reach:?} km"));
        match reach {
            Some(km) if km >= target && km <= target + 25 => {}
            other => failures.push(format!(
                "n={n}: reach {other:?} km outside [{target}, {}]",
                target + 25
            )),
        }
    }
    if failures.is_empty() {
        Ok(summary.join(", "))
    } else {
        Err(failures.join("; "))
    }
}

fn within_se(observed: f64, expected: f64, trials: u64) -> bool {
    let se = (expected * (1.0 - expected) / trials as f64).sqrt();
    (observed - expected).abs() <= 5.0 * se
}

// 6
fn monte_carlo_consistency() -> Outcome {
    let mut config = ProtocolConfig::preset(Preset::MainText, 3);
    config.source = SourceModel::PairSource { mu: 0.04 };
    config.set_distance(10.0);
    config.p_x = qss::math::Probability::new(0.5).map_err(err)?;
    config.n_signals = 1_000_000;
    let stats = keyrate::link_stats(&config).map_err(err)?;
    let p_x = config.p_x.value();
    let gain = p_x * p_x * stats.iter().map(|s| s.gain).fold(f64::MAX, f64::min);
    let e_x = photonics::x_total_error_links(&stats.iter().map(|s| s.error_x).collect::<Vec<_>>())
        .map_err(err)?;

    let mut summary = Vec::new();
    for seed in [1, 2, 3] {
        config.seed = seed;
        let run = sim::simulate(&config).map_err(err)?;
        let est = &run.estimates;
        ensure(within_se(est.gain_est, gain, config.n_signals), || {
            format!("seed {seed}: gain {} vs {gain}", est.gain_est)
        })?;
        for (i, (&obs, s)) in est.e_z_marginal_est.iter().zip(&stats).enumerate() {
            ensure(within_se(obs, s.error_z, est.rounds_z), || {
                format!("seed {seed}: E^Z[{i}] {obs} vs {}", s.error_z)
            })?;
        }
        ensure(within_se(est.e_x_est, e_x, est.rounds_x), || {
            format!("seed {seed}: E^X {} vs {e_x}", est.e_x_est)
        })?;
        summary.push(format!(
            "seed {seed}: gain {:.4e}/{gain:.4e} E^X {:.4}/{e_x:.4}",
            est.gain_est, est.e_x_est
        ));
    }
    Ok(summary.join(", "))
}

// 7
fn lambda_behaviour() -> Outcome {
    let eps = SecurityParams::default().eps_sample;
    let errors = [
        0.0, 0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.49, 0.5,
    ];
    let mut points = 0;
    for &e in &errors {
        for exp in 3..=11 {
            let m = 10u64.pow(exp);
            for k in [m, m / 10, m * 10] {
                let lam = keyrate::fluctuation_lambda(e, m, k, eps).map_err(err)?;
                let scaled = keyrate::fluctuation_lambda(e, m * 10, k * 10, eps).map_err(err)?;
                ensure(lam >= 0.0 && lam.is_finite(), || {
                    format!("lambda({e}, {m}, {k}) = {lam}")
                })?;
                ensure(scaled < lam, || {
                    format!("lambda({e}, {m}, {k}) = {lam} not above x10 value {scaled}")
                })?;
                points += 1;
            }
        }
    }

    let sec = SecurityParams::default();
    let mut worst = 0.0f64;
    for e in [0.005, 0.01, 0.02] {
        let e_x = photonics::x_total_error(e, 3).map_err(err)?;
        let m = 10_000_000_000u64;
        let budget = FiniteBudget {
            n_signals: m,
            m,
            k: m,
            k_i: m,
        };
        let l = keyrate::finite_key_length(&budget, &sec, &[e, e], e_x).map_err(err)?;
        let asym = sec.q_complementarity
            - binary_entropy(e).map_err(err)?
            - sec.f_e * binary_entropy(e_x).map_err(err)?;
        let gap = (l as f64 / m as f64 - asym).abs();
        ensure(gap <= 1e-3, || format!("E={e}: l/m - asymptotic = {gap:e}"))?;
        worst = worst.max(gap);
    }
    Ok(format!(
        "{points} grid points monotone and non-negative; max |l/m - R| = {worst:.1e} at 1e10"
    ))
}

fn simulate_once(dir: &Path, tag: &str) -> Result<(Vec<u8>, Vec<u8>), String> {
    let transcript = dir.join(format!("transcript-{tag}.ndjson"));
    let csv = dir.join(format!("rows-{tag}.csv"));
    let status = Command::new(env!("CARGO_BIN_EXE_qss"))
        .args(["--preset", "maintext", "--seed", "42", "--out"])
        .arg(&csv)
        .args([
            "simulate",
            "--n",
            "4",
            "--distance",
            "10",
            "--n-signals",
            "200000",
            "--p-x",
            "0.5",
            "--transcript",
        ])
        .arg(&transcript)
        .status()
        .map_err(err)?;
    ensure(status.success(), || {
        format!("qss simulate exited with {status}")
    })?;
    Ok((
        std::fs::read(&transcript).map_err(err)?,
        std::fs::read(&csv).map_err(err)?,
    ))
}

// 8
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let (t1, c1) = simulate_once(dir.path(), "a")?;
    let (t2, c2) = simulate_once(dir.path(), "b")?;
    ensure(!t1.is_empty(), || "empty transcript".into())?;
    ensure(t1 == t2, || "transcripts differ".into())?;
    ensure(c1 == c2, || "CSV outputs differ".into())?;
    Ok(format!(
        "{} transcript lines and {} CSV bytes identical across runs",
        t1.iter().filter(|&&b| b == b'\n').count(),
        c1.len()
    ))
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "E^X sum form equals closed form",
            limit: Some(Duration::from_secs(1)),
            check: formula_identity,
        },
        Criterion {
            id: 2,
            name: "virtual circuit reaches the GHZ reference",
            limit: Some(Duration::from_secs(5)),
            check: circuit_fidelity,
        },
        Criterion {
            id: 3,
            name: "XOR pipeline matches CNOT circuit",
            limit: Some(Duration::from_secs(5)),
            check: xor_cnot_equivalence,
        },
        Criterion {
            id: 4,
            name: "rate nearly independent of n, GHZ source lower",
            limit: Some(Duration::from_secs(1)),
            check: n_independence,
        },
        Criterion {
            id: 5,
            name: "finite-key reach for n = 4, 6, 8",
            limit: Some(Duration::from_secs(10)),
            check: finite_key_distances,
        },
        Criterion {
            id: 6,
            name: "Monte-Carlo estimates within 5 SE",
            limit: Some(Duration::from_secs(30)),
            check: monte_carlo_consistency,
        },
        Criterion {
            id: 7,
            name: "fluctuation term and asymptotic limit",
            limit: Some(Duration::from_secs(1)),
            check: lambda_behaviour,
        },
        Criterion {
            id: 8,
            name: "seeded simulation is byte-identical",
            limit: None,
            check: determinism,
        },
    ];

    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.check)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => {
                Err(format!("took {elapsed:.2?}, limit {limit:?}"))
            }
            (o, _) => o,
        };
        let limit = c.limit.map_or(String::new(), |l| format!(" / {l:?}"));
        match outcome {
            Ok(detail) => println!(
                "[PASS] {}. {} ({elapsed:.2?}{limit}): {detail}",
                c.id, c.name
            ),
            Err(detail) => {
                failed += 1;
                println!(
                    "[FAIL] {}. {} ({elapsed:.2?}{limit}): {detail}",
                    c.id, c.name
                );
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
