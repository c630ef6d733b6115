mod args;
mod output;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use bellpost::causal::{self, BatteryConfig, CausalDag, DiagramKind, DsepQuery, LocalLink};
use bellpost::classical_bounds::{hlnhv_bound, lhv_bound};
use bellpost::hvmodels::{
    loophole_search, verify_conservation, verify_fair_sampling, verify_hlnhv_sharpening,
    verify_lhv_sharpening,
};
use bellpost::quantum::{
    ghz_state, optimize_settings, quantum_behavior, Bloch, MeasurementSettings, OptimizerConfig,
};
use bellpost::sharpening::{sharpen, threshold_eta_c};
use bellpost::yurke_stoler::{
    eta_c_analytic, eta_c_monte_carlo, p_coin, threshold_eta_det, threshold_table, DetectionFamily,
    YsConfig, YsFamily,
};
use bellpost::{BellFunctional, Catalog, CatalogRecord, DetectorModel, Error, ModelClass};
use clap::Parser;
use serde_json::{json, Value};

use args::*;
use output::{to_csv, RunReport};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid input: {0}")]
    Input(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_no_solution() => 3,
            _ => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Outcome of a subcommand: inputs echoed back, results, and whether a
/// verification check passed.
struct Outcome {
    inputs: Value,
    results: Value,
    passed: bool,
}

impl Outcome {
    fn ok(inputs: Value, results: Value) -> Self {
        Self {
            inputs,
            results,
            passed: true,
        }
    }
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_catalog(path: Option<&Path>) -> CliResult<Catalog<f64>> {
    let mut cat = Catalog::builtin();
    if let Some(p) = path {
        let records: Vec<CatalogRecord<f64>> = serde_json::from_str(&read(p)?)
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        for r in records {
            cat.register(r)?;
        }
    }
    Ok(cat)
}

fn class_of(arg: Option<ClassArg>, f: &BellFunctional<f64>) -> ModelClass {
    match arg {
        Some(ClassArg::Lhv) => ModelClass::Lhv,
        Some(ClassArg::Hlnhv) => ModelClass::Hlnhv,
        None => f.model_class(),
    }
}

fn detector(
    parties: usize,
    eta_det: f64,
    eta_tra: f64,
    eta_1of2: Option<f64>,
    on_off: bool,
) -> CliResult<YsConfig> {
    let det = match (eta_1of2, on_off) {
        (_, true) => DetectorModel::on_off(eta_det, eta_tra)?,
        (Some(e), false) => DetectorModel::new(eta_det, eta_tra, e, true)?,
        (None, false) => DetectorModel::independent(eta_det, eta_tra)?,
    };
    Ok(YsConfig::homogeneous(parties, det)?)
}

fn family(parties: usize, eta_tra: f64, eta_1of2: Option<f64>, on_off: bool) -> YsFamily {
    let detection = match (eta_1of2, on_off) {
        (_, true) => DetectionFamily::OnOff,
        (Some(e), false) => DetectionFamily::Fixed(e),
        (None, false) => DetectionFamily::Independent,
    };
    YsFamily {
        parties,
        eta_tra,
        detection,
    }
}

fn run_command(cli: &Cli) -> CliResult<Outcome> {
    let cat = load_catalog(cli.catalog.as_deref())?;
    let get = |a: &InequalityArgs| -> CliResult<BellFunctional<f64>> {
        Ok(cat.get(&a.inequality, a.parties())?)
    };
    match &cli.command {
        Command::Catalog => {
            let rows = cat
                .records()
                .iter()
                .map(|r| {
                    let f = r.to_functional()?;
                    let (c_opt, reference) = f.constant_c_opt();
                    Ok(json!({
                        "name": r.name,
                        "parties": r.parties,
                        "settings": r.settings,
                        "model_class": r.model_class,
                        "classical_bound": r.classical_bound,
                        "quantum_value": r.quantum_value,
                        "c": f.constant_c(),
                        "c_opt": c_opt,
                        "c_opt_reference": reference.0,
                    }))
                })
                .collect::<CliResult<Vec<_>>>()?;
            Ok(Outcome::ok(json!({}), Value::Array(rows)))
        }
        Command::Bound(a) => {
            let f = get(&a.ineq)?;
            let class = class_of(a.class, &f);
            let (bound, witness) = match class {
                ModelClass::Lhv => {
                    let b = lhv_bound(&f)?;
                    (
                        b.value,
                        json!({"strategy": b.strategy, "strategies_checked": b.strategies_checked.to_string()}),
                    )
                }
                ModelClass::Hlnhv => {
                    let b = hlnhv_bound(&f)?;
                    (
                        b.value,
                        serde_json::to_value(&b.witness).expect("serializable"),
                    )
                }
            };
            Ok(Outcome::ok(
                json!({"inequality": f.name(), "parties": f.num_parties(), "model_class": class}),
                json!({"inequality": f.name(), "model_class": class, "bound": bound, "witness": witness,
                       "catalog_bound": f.classical_bound()}),
            ))
        }
        Command::Quantum(a) => {
            let f = get(&a.ineq)?;
            let state = ghz_state(f.num_parties())?;
            let inputs = json!({"inequality": f.name(), "parties": f.num_parties(), "state": "ghz",
                                "angles": a.angles, "seed": a.seed, "restarts": a.restarts});
            let (value, settings, extra) = match &a.angles {
                Some(p) => {
                    let raw: Vec<Vec<(f64, f64)>> = serde_json::from_str(&read(p)?)
                        .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
                    let settings = MeasurementSettings::new(
                        raw.into_iter()
                            .map(|party| {
                                party.into_iter().map(|(t, ph)| Bloch::new(t, ph)).collect()
                            })
                            .collect(),
                    )?;
                    let b = quantum_behavior(&state, &settings)?;
                    (f.evaluate(&b)?, settings, json!({}))
                }
                None => {
                    let cfg = OptimizerConfig {
                        restarts: a.restarts,
                        seed: a.seed,
                        ..OptimizerConfig::default()
                    };
                    let o = optimize_settings(&f, &state, &cfg)?;
                    let extra = json!({"best_restart": o.best_restart, "evaluations": o.evaluations,
                                       "restarts": o.restarts, "seed": o.seed});
                    (o.value, o.settings, extra)
                }
            };
            Ok(Outcome::ok(
                inputs,
                json!({"inequality": f.name(), "value": value, "classical_bound": f.classical_bound(),
                       "algebraic_max": f.constant_c(), "settings": settings, "optimizer": extra}),
            ))
        }
        Command::Sharpen(a) => {
            let f = get(&a.ineq)?;
            let class = class_of(a.class, &f);
            let use_c_opt = a.constant == ConstantArg::COpt;
            let rows = a
                .eta_c
                .iter()
                .map(|&eta| {
                    Ok(serde_json::to_value(sharpen(&f, eta, class, use_c_opt)?)
                        .expect("serializable"))
                })
                .collect::<CliResult<Vec<_>>>()?;
            Ok(Outcome::ok(
                json!({"inequality": f.name(), "parties": f.num_parties(), "model_class": class,
                       "use_c_opt": use_c_opt, "eta_c": a.eta_c}),
                Value::Array(rows),
            ))
        }
        Command::Threshold(a) => {
            let f = get(&a.ineq)?;
            let class = class_of(a.class, &f);
            let use_c_opt = a.constant == ConstantArg::COpt;
            let q = a.quantum_value.or(f.quantum_value()).ok_or_else(|| {
                CliError::Input(format!(
                    "{} has no catalog quantum value; pass --quantum-value",
                    f.name()
                ))
            })?;
            let t = threshold_eta_c(&f, q, class, use_c_opt)?;
            Ok(Outcome::ok(
                json!({"inequality": f.name(), "parties": f.num_parties(), "model_class": class,
                       "use_c_opt": use_c_opt, "quantum_value": q}),
                serde_json::to_value(t).expect("serializable"),
            ))
        }
        Command::Ys(YsCommand::Analytic(d)) => {
            let cfg = detector(d.parties, d.eta_det, d.eta_tra, d.eta_1of2, d.on_off)?;
            let eta_c = eta_c_analytic(&cfg)?;
            Ok(Outcome::ok(
                json!({"parties": d.parties, "detector": cfg.detectors[0]}),
                json!({"eta_c": eta_c, "p_coin": p_coin::<f64>(d.parties)?,
                       "effective_eta_1of2": cfg.detectors[0].effective_eta_1of2()}),
            ))
        }
        Command::Ys(YsCommand::Simulate(s)) => {
            let d = &s.detector;
            let cfg = detector(d.parties, d.eta_det, d.eta_tra, d.eta_1of2, d.on_off)?;
            let mc = eta_c_monte_carlo(&cfg, s.samples, s.seed, s.shards)?;
            let analytic = eta_c_analytic(&cfg)?;
            let dev = (mc.estimate - analytic).abs();
            let tol = (3.0 * mc.std_error).max(1e-3);
            Ok(Outcome {
                inputs: json!({"parties": d.parties, "detector": cfg.detectors[0], "samples": s.samples,
                               "seed": s.seed, "shards": s.shards}),
                results: json!({"monte_carlo": mc, "analytic": analytic, "deviation": dev,
                                "tolerance": tol, "agrees": dev <= tol}),
                passed: true,
            })
        }
        Command::Ys(YsCommand::Threshold(t)) => {
            let target = match (&t.eta_c_star, &t.inequality) {
                (Some(e), _) => *e,
                (None, Some(name)) => {
                    let f = cat.get(name, t.parties)?;
                    let q = f.quantum_value().ok_or_else(|| {
                        CliError::Input(format!("{name} has no catalog quantum value"))
                    })?;
                    threshold_eta_c(&f, q, f.model_class(), true)?.eta_c_star
                }
                (None, None) => {
                    return Err(CliError::Input("pass --eta-c-star or --inequality".into()))
                }
            };
            let fam = family(t.parties, t.eta_tra, t.eta_1of2, t.on_off);
            let eta_det = threshold_eta_det(&fam, target)?;
            Ok(Outcome::ok(
                json!({"family": fam, "eta_c_star": target, "inequality": t.inequality}),
                json!({"eta_det_star": eta_det, "eta_c_at_threshold": fam.eta_c(eta_det)?}),
            ))
        }
        Command::Dsep(a) => {
            let (g, source) = match (&a.graph, a.diagram) {
                (Some(p), _) => (CausalDag::from_json(&read(p)?)?, json!(p)),
                (None, d) => {
                    let kind = match d.unwrap_or(DiagramArg::Lhv) {
                        DiagramArg::Lhv => DiagramKind::Lhv,
                        DiagramArg::AllPairs => DiagramKind::AllPairs,
                        DiagramArg::Bipartition => {
                            DiagramKind::Bipartition(parse_groups(a.groups.as_deref())?)
                        }
                    };
                    let link = match a.link {
                        LinkArg::Confounded => LocalLink::Confounded,
                        LinkArg::AToD => LocalLink::OutcomeToDetection,
                        LinkArg::DToA => LocalLink::DetectionToOutcome,
                    };
                    let g = causal::bell_diagram(a.parties, &kind, link)?;
                    (g, json!({"parties": a.parties, "kind": kind, "link": link}))
                }
            };
            let q = DsepQuery {
                from: a.from.clone(),
                to: a.to.clone(),
                given: a.given.clone(),
            };
            let r = causal::d_separated(&g, &q)?;
            let ci = match a.ci_restarts {
                Some(n) => Some(causal::ci_search(&g, &q, n, a.seed)?),
                None => None,
            };
            Ok(Outcome::ok(
                json!({"graph": source, "query": q, "ci_restarts": a.ci_restarts, "seed": a.seed}),
                json!({"separated": r.separated, "witness": r.witness_text, "path": r.witness, "ci": ci}),
            ))
        }
        Command::Verify(v) => verify(v, &cat),
        Command::Table1 => {
            let rows: Vec<Value> = threshold_table::<f64>()?
                .into_iter()
                .map(|r| json!({"inequality": r.inequality, "eta_c_star": r.eta_c_star, "eta_det_star_ys": r.eta_det_star_ys}))
                .collect();
            Ok(Outcome::ok(
                json!({"detection": "independent", "eta_tra": 1.0}),
                Value::Array(rows),
            ))
        }
    }
}

fn verify(v: &VerifyCommand, cat: &Catalog<f64>) -> CliResult<Outcome> {
    let suite = |name: &str, a: &SuiteArgs, r: bellpost::hvmodels::SuiteReport| Outcome {
        inputs: json!({"check": name, "trials": a.trials, "seed": a.seed}),
        passed: r.passed,
        results: serde_json::to_value(r).expect("serializable"),
    };
    Ok(match v {
        VerifyCommand::AppendixB(a) => {
            suite("appendix-b", a, verify_lhv_sharpening(a.trials, a.seed)?)
        }
        VerifyCommand::AppendixC(a) => {
            suite("appendix-c", a, verify_hlnhv_sharpening(a.trials, a.seed)?)
        }
        VerifyCommand::FairSampling(a) => {
            suite("fair-sampling", a, verify_fair_sampling(a.trials, a.seed)?)
        }
        VerifyCommand::Conservation(a) => {
            let r = verify_conservation(a.trials, a.seed, a.tolerance)?;
            Outcome {
                inputs: json!({"check": "conservation", "trials": a.trials, "seed": a.seed, "tolerance": a.tolerance}),
                passed: r.passed,
                results: serde_json::to_value(r).expect("serializable"),
            }
        }
        VerifyCommand::Causal(a) => {
            let cfg = BatteryConfig {
                seed: a.seed,
                conservation: !a.no_conservation,
                ..BatteryConfig::default()
            };
            let r = causal::verify_postselection_claims(&cfg)?;
            Outcome {
                inputs: serde_json::to_value(&cfg).expect("serializable"),
                passed: r.all_passed,
                results: serde_json::to_value(r).expect("serializable"),
            }
        }
        VerifyCommand::Loophole(a) => {
            let f = cat.get(&a.ineq.inequality, a.ineq.parties())?;
            let r = loophole_search(&f, f.classical_bound(), a.seed, a.iterations, a.support)?;
            Outcome {
                inputs: json!({"inequality": f.name(), "parties": f.num_parties(), "iterations": a.iterations,
                               "support": a.support, "seed": a.seed}),
                passed: r.found && r.satisfies_sharpened_bound,
                results: serde_json::to_value(r).expect("serializable"),
            }
        }
    })
}

/// Parses `1/23` into `[[0], [1, 2]]`.
fn parse_groups(s: Option<&str>) -> CliResult<Vec<Vec<usize>>> {
    let s =
        s.ok_or_else(|| CliError::Input("--diagram bipartition needs --groups, e.g. 1/23".into()))?;
    s.split('/')
        .map(|g| {
            g.chars()
                .map(|c| {
                    c.to_digit(10)
                        .filter(|&d| d >= 1)
                        .map(|d| d as usize - 1)
                        .ok_or_else(|| CliError::Input(format!("bad party `{c}` in --groups")))
                })
                .collect()
        })
        .collect()
}

fn command_name(c: &Command) -> String {
    match c {
        Command::Catalog => "catalog".into(),
        Command::Bound(_) => "bound".into(),
        Command::Quantum(_) => "quantum".into(),
        Command::Sharpen(_) => "sharpen".into(),
        Command::Threshold(_) => "threshold".into(),
        Command::Ys(YsCommand::Analytic(_)) => "ys analytic".into(),
        Command::Ys(YsCommand::Simulate(_)) => "ys simulate".into(),
        Command::Ys(YsCommand::Threshold(_)) => "ys threshold".into(),
        Command::Dsep(_) => "dsep".into(),
        Command::Verify(v) => format!(
            "verify {}",
            match v {
                VerifyCommand::AppendixB(_) => "appendix-b",
                VerifyCommand::AppendixC(_) => "appendix-c",
                VerifyCommand::FairSampling(_) => "fair-sampling",
                VerifyCommand::Conservation(_) => "conservation",
                VerifyCommand::Causal(_) => "causal",
                VerifyCommand::Loophole(_) => "loophole",
            }
        ),
        Command::Table1 => "table1".into(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let start = Instant::now();
    let name = command_name(&cli.command);
    let format = cli
        .format
        .unwrap_or(if matches!(cli.command, Command::Table1) {
            Format::Csv
        } else {
            Format::Json
        });
    match run_command(&cli) {
        Ok(out) => {
            match format {
                Format::Csv => print!("{}", to_csv(&out.results)),
                Format::Json => {
                    let report = RunReport {
                        command: name,
                        inputs: out.inputs,
                        results: out.results,
                        version: env!("CARGO_PKG_VERSION"),
                        wall_time: start.elapsed().as_secs_f64(),
                    };
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&report).expect("serializable")
                    );
                }
            }
            ExitCode::from(if out.passed { 0 } else { 1 })
        }
        Err(e) => {
            let code = e.exit_code();
            let status = if code == 3 { "no-solution" } else { "error" };
            if code == 3 {
                let report = RunReport {
                    command: name,
                    inputs: Value::Null,
                    results: json!({"status": status, "message": e.to_string()}),
                    version: env!("CARGO_PKG_VERSION"),
                    wall_time: start.elapsed().as_secs_f64(),
                };
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("serializable")
                );
            }
            eprintln!("bellpost: {e}");
            ExitCode::from(code)
        }
    }
}
