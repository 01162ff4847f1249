//! Experiment specification and runner behind the `idnc` binary.
//!
//! Options come from a flat `key = value` file and from command-line flags
//! using the same key names; flags win.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, ensure, Context, Result};
use idnc_core::metrics::{write_per_slot_csv, write_summary_csv, AggregateMetrics, RunSummary};
use idnc_core::sim::{trace_label, write_trace_csv};
use idnc_core::ssp::{reachable_state_count, DEFAULT_STATE_CAP};
use idnc_core::{
    aggregate_summaries, build_graph, export_policy, policy_iteration, run_batch, run_batch_map, value_iteration,
    FeedbackMatrix, PolicyTable, Scheduler, SchedulerKind, SessionConfig, SspModel, TransmissionSetting,
};
use log::{info, warn};

/// Every recognised option key.
pub const KEYS: &[&str] = &[
    "M",
    "N",
    "eps",
    "alpha",
    "runs",
    "seed",
    "setting",
    "algorithm",
    "sweep",
    "sweep-values",
    "out",
    "solver",
    "state-cap",
    "policy-out",
    "policy-in",
    "trace",
    "dump-graph",
    "initial-sfm",
];

/// Half-width of the interval a mean erasure probability is spread over.
pub const EPS_SPREAD: f64 = 0.2;
/// Largest erasure probability produced by spreading a mean.
pub const EPS_MAX: f64 = 0.99;
/// Value-iteration stopping tolerance.
pub const VI_TOLERANCE: f64 = 1e-10;

pub type Options = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Receivers,
    Packets,
    Erasure,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Receivers => "receivers",
            SweepAxis::Packets => "packets",
            SweepAxis::Erasure => "erasure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Pi,
    Vi,
}

/// Per-receiver erasure probabilities, or a mean to spread over the receivers.
#[derive(Debug, Clone, PartialEq)]
pub enum ErasureSpec {
    Mean(f64),
    List(Vec<f64>),
}

impl ErasureSpec {
    pub fn for_receivers(&self, m: usize) -> Result<Vec<f64>> {
        match self {
            ErasureSpec::Mean(mean) => Ok(spread_erasures(*mean, m)),
            ErasureSpec::List(list) => {
                ensure!(list.len() == m, "{} erasure probabilities given for {m} receivers", list.len());
                Ok(list.clone())
            }
        }
    }
}

/// Evenly spaced values over `[mean - 0.2, mean + 0.2]` in receiver order,
/// clamped to `[0, 0.99]`.
pub fn spread_erasures(mean: f64, m: usize) -> Vec<f64> {
    (0..m)
        .map(|i| {
            let e = if m == 1 { mean } else { mean - EPS_SPREAD + 2.0 * EPS_SPREAD * i as f64 / (m - 1) as f64 };
            e.clamp(0.0, EPS_MAX)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Configuration of the unswept point; sweeps override one field of it.
    pub base: SessionConfig,
    pub eps: ErasureSpec,
    pub sweep: Option<Sweep>,
    pub schedulers: Vec<SchedulerKind>,
    pub out: PathBuf,
    pub solver: Solver,
    pub state_cap: u64,
    pub policy_out: Option<PathBuf>,
    pub policy_in: Option<PathBuf>,
    pub trace: bool,
    pub dump_graph: bool,
}

/// Parses a flat `key = value` file. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Options> {
    let mut out = Options::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected `key = value`", lineno + 1))?;
        let key = normalise_key(key.trim());
        check_key(&key)?;
        ensure!(
            out.insert(key.clone(), value.trim().to_string()).is_none(),
            "config line {}: `{key}` given twice",
            lineno + 1
        );
    }
    Ok(out)
}

fn normalise_key(key: &str) -> String {
    match key {
        "m" => "M".into(),
        "n" => "N".into(),
        k => k.replace('_', "-"),
    }
}

fn check_key(key: &str) -> Result<()> {
    ensure!(KEYS.contains(&key), "unknown option `{key}`");
    Ok(())
}

/// Merges file options with flag options (flags win) and builds the spec.
pub fn parse_config(file: Option<&Path>, flags: &Options) -> Result<ExperimentSpec> {
    let mut options = match file {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_config_text(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => Options::new(),
    };
    for (k, v) in flags {
        let k = normalise_key(k);
        check_key(&k)?;
        options.insert(k, v.clone());
    }
    ExperimentSpec::from_options(&options)
}

fn get<T: std::str::FromStr>(options: &Options, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    options
        .get(key)
        .map(|v| v.parse::<T>().map_err(|e| anyhow!("bad value `{v}` for `{key}`: {e}")))
        .transpose()
}

fn get_bool(options: &Options, key: &str) -> Result<bool> {
    match options.get(key).map(|s| s.as_str()) {
        None | Some("false") | Some("0") | Some("no") => Ok(false),
        Some("true") | Some("1") | Some("yes") | Some("") => Ok(true),
        Some(other) => bail!("bad value `{other}` for `{key}`: expected true or false"),
    }
}

fn parse_list(text: &str, key: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| anyhow!("bad value `{t}` in `{key}`: {e}")))
        .collect()
}

/// Scheduler list; `all` expands to every kind.
pub fn parse_schedulers(text: &str) -> Result<Vec<SchedulerKind>> {
    let mut out = Vec::new();
    for name in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if name == "all" {
            out.extend(SchedulerKind::ALL);
        } else {
            out.push(name.parse()?);
        }
    }
    let mut seen = Vec::new();
    out.retain(|k| {
        let fresh = !seen.contains(k);
        seen.push(*k);
        fresh
    });
    Ok(out)
}

impl ExperimentSpec {
    pub fn from_options(options: &Options) -> Result<Self> {
        let initial: Option<FeedbackMatrix> = match options.get("initial-sfm") {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
                Some(text.parse().with_context(|| format!("parsing {path}"))?)
            }
            None => None,
        };
        let m: usize = match (get(options, "M")?, &initial) {
            (Some(m), _) => m,
            (None, Some(f)) => f.num_receivers(),
            (None, None) => bail!("`M` is required"),
        };
        let n: usize = match (get(options, "N")?, &initial) {
            (Some(n), _) => n,
            (None, Some(f)) => f.num_packets(),
            (None, None) => bail!("`N` is required"),
        };
        ensure!(m > 0 && n > 0, "`M` and `N` must be positive");

        let eps = match options.get("eps") {
            None => bail!("`eps` is required"),
            Some(text) => {
                let list = parse_list(text, "eps")?;
                for &e in &list {
                    ensure!((0.0..1.0).contains(&e), "erasure probability {e} outside [0, 1)");
                }
                if list.len() == 1 && m != 1 {
                    ErasureSpec::Mean(list[0])
                } else {
                    ErasureSpec::List(list)
                }
            }
        };

        let sweep = match (options.get("sweep"), options.get("sweep-values")) {
            (None, None) => None,
            (Some(_), None) => bail!("`sweep` needs `sweep-values`"),
            (None, Some(_)) => bail!("`sweep-values` needs `sweep`"),
            (Some(axis), Some(values)) => {
                let axis = match axis.as_str() {
                    "receivers" | "M" => SweepAxis::Receivers,
                    "packets" | "N" => SweepAxis::Packets,
                    "erasure" | "eps" => SweepAxis::Erasure,
                    other => bail!("unknown sweep axis `{other}`"),
                };
                let values = parse_list(values, "sweep-values")?;
                ensure!(!values.is_empty(), "`sweep-values` is empty");
                for &v in &values {
                    match axis {
                        SweepAxis::Receivers | SweepAxis::Packets => {
                            ensure!(v >= 1.0 && v.fract() == 0.0, "sweep value {v} is not a positive integer")
                        }
                        SweepAxis::Erasure => ensure!((0.0..1.0).contains(&v), "mean erasure {v} outside [0, 1)"),
                    }
                }
                Some(Sweep { axis, values })
            }
        };

        let schedulers = parse_schedulers(options.get("algorithm").map_or("all", |s| s.as_str()))?;
        ensure!(!schedulers.is_empty(), "no schedulers given");

        let solver = match options.get("solver").map(|s| s.as_str()) {
            None | Some("pi") => Solver::Pi,
            Some("vi") => Solver::Vi,
            Some(other) => bail!("unknown solver `{other}`, expected pi or vi"),
        };

        let policy_out: Option<PathBuf> = options.get("policy-out").map(PathBuf::from);
        let policy_in: Option<PathBuf> = options.get("policy-in").map(PathBuf::from);

        if let Some(s) = &sweep {
            ensure!(policy_in.is_none() && policy_out.is_none(), "policy files cannot be combined with a sweep");
            match s.axis {
                SweepAxis::Receivers => ensure!(
                    matches!(eps, ErasureSpec::Mean(_)) || m == 1,
                    "a receiver sweep needs a mean `eps`, not a list"
                ),
                SweepAxis::Erasure => {
                    ensure!(matches!(eps, ErasureSpec::Mean(_)) || m == 1, "an erasure sweep needs a mean `eps`")
                }
                SweepAxis::Packets => {}
            }
            ensure!(
                initial.is_none() || s.axis == SweepAxis::Erasure,
                "`initial-sfm` fixes M and N and cannot be swept"
            );
        }
        ensure!(policy_in.is_none() || policy_out.is_none(), "`policy-in` and `policy-out` conflict");
        if policy_in.is_some() || policy_out.is_some() {
            ensure!(
                schedulers.contains(&SchedulerKind::SspPolicyReplay),
                "policy files need the ssp-policy-replay scheduler"
            );
        }

        let mut base = SessionConfig::new(m, n, eps.for_receivers(m)?);
        base.alpha = get(options, "alpha")?.unwrap_or(SessionConfig::DEFAULT_ALPHA);
        base.num_runs = get(options, "runs")?.unwrap_or(2000);
        base.master_seed = get(options, "seed")?.unwrap_or(0);
        base.setting = get::<TransmissionSetting>(options, "setting")?.unwrap_or_default();
        base.initial = initial;
        base.validate()?;

        Ok(ExperimentSpec {
            base,
            eps,
            sweep,
            schedulers,
            out: options.get("out").map_or_else(|| PathBuf::from("results"), PathBuf::from),
            solver,
            state_cap: get(options, "state-cap")?.unwrap_or(DEFAULT_STATE_CAP),
            policy_out,
            policy_in,
            trace: get_bool(options, "trace")?,
            dump_graph: get_bool(options, "dump-graph")?,
        })
    }

    /// Configuration per sweep point, with the swept value.
    pub fn points(&self) -> Result<Vec<(Option<f64>, SessionConfig)>> {
        let Some(sweep) = &self.sweep else {
            return Ok(vec![(None, self.base.clone())]);
        };
        sweep
            .values
            .iter()
            .map(|&v| {
                let mut c = self.base.clone();
                match sweep.axis {
                    SweepAxis::Receivers => {
                        c.num_receivers = v as usize;
                        c.erasure_probs = self.eps.for_receivers(c.num_receivers)?;
                    }
                    SweepAxis::Packets => c.num_packets = v as usize,
                    SweepAxis::Erasure => c.erasure_probs = spread_erasures(v, c.num_receivers),
                }
                c.validate()?;
                Ok((Some(v), c))
            })
            .collect()
    }
}

/// What a run produced.
#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub aggregates: Vec<AggregateMetrics>,
    /// `V*(s0)` per sweep point where the exact policy was solved.
    pub optimal_values: Vec<(Option<f64>, f64)>,
    /// Sweep points where policy replay was skipped for exceeding the state cap.
    pub skipped: Vec<Option<f64>>,
    pub files: Vec<PathBuf>,
}

fn point_suffix(sweep: &Option<Sweep>, value: Option<f64>) -> String {
    match (sweep, value) {
        (Some(s), Some(v)) => format!("_{}{}", s.axis.name(), v),
        _ => String::new(),
    }
}

fn solve_policy(spec: &ExperimentSpec, config: &SessionConfig) -> Result<(PolicyTable, f64)> {
    let f0 = config.initial_matrix();
    let start = Instant::now();
    let model = SspModel::build(&f0, &config.erasure_probs, spec.state_cap)?;
    let pv = match spec.solver {
        Solver::Pi => policy_iteration(&model)?,
        Solver::Vi => value_iteration(&model, VI_TOLERANCE)?,
    };
    let v0 = pv.initial_value(&model);
    info!(
        "solved {} states in {:.2?}: V*(s0) = {v0:.6}, residual {:e}",
        model.num_states(),
        start.elapsed(),
        pv.residual
    );
    Ok((export_policy(&pv, &model)?, v0))
}

fn load_policy(path: &Path, config: &SessionConfig) -> Result<PolicyTable> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let table = PolicyTable::read_from(BufReader::new(file))?;
    ensure!(
        table.num_receivers == config.num_receivers
            && table.num_packets == config.num_packets
            && table.erasure_probs.len() == config.erasure_probs.len()
            && table.erasure_probs.iter().zip(&config.erasure_probs).all(|(a, b)| (a - b).abs() < 1e-12),
        "policy in {} was solved for different M, N or eps",
        path.display()
    );
    Ok(table)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// Runs every (sweep point, scheduler) cell and writes `per_slot.csv` and
/// `summary.csv` into the output directory. Graph dumps go to `graph_out`.
pub fn run_experiment(spec: &ExperimentSpec, graph_out: &mut dyn Write) -> Result<ExperimentReport> {
    ensure!(!spec.schedulers.is_empty(), "no schedulers given");
    let points = spec.points()?;
    fs::create_dir_all(&spec.out).with_context(|| format!("creating {}", spec.out.display()))?;
    let mut report = ExperimentReport::default();

    for (value, config) in &points {
        let suffix = point_suffix(&spec.sweep, *value);
        if spec.dump_graph {
            let g = build_graph(&config.initial_matrix());
            writeln!(graph_out, "# M={} N={}{}", config.num_receivers, config.num_packets, suffix.replace('_', " "))?;
            write!(graph_out, "{}", g.edge_list())?;
        }
        for &kind in &spec.schedulers {
            let table = if kind == SchedulerKind::SspPolicyReplay {
                if let Some(path) = &spec.policy_in {
                    Some(load_policy(path, config)?)
                } else {
                    let f0 = config.initial_matrix();
                    if let Err(e) = reachable_state_count(&f0, spec.state_cap) {
                        if spec.sweep.is_none() {
                            return Err(e.into());
                        }
                        warn!("skipping {kind}{suffix}: {e}");
                        report.skipped.push(*value);
                        continue;
                    }
                    let (table, v0) = solve_policy(spec, config)?;
                    report.optimal_values.push((*value, v0));
                    if let Some(path) = &spec.policy_out {
                        table.write_to(create(path)?)?;
                        report.files.push(path.clone());
                    }
                    Some(table)
                }
            } else {
                None
            };
            let scheduler = match &table {
                Some(t) => Scheduler::Replay(t),
                None => Scheduler::Heuristic(kind),
            };
            let start = Instant::now();
            let summaries = if spec.trace {
                let traces = run_batch(config, scheduler)?;
                let path = spec.out.join(format!("trace_{kind}{suffix}.csv"));
                write_trace_csv(create(&path)?, &traces)?;
                report.files.push(path);
                traces.iter().map(RunSummary::from_trace).collect()
            } else {
                run_batch_map(config, scheduler, |t| RunSummary::from_trace(&t))?
            };
            let agg = aggregate_summaries(&trace_label(config, kind), &summaries)?;
            info!(
                "{kind}{suffix}: {} runs in {:.2?}, completion {:.3}, cumulative {:.3}",
                agg.runs,
                start.elapsed(),
                agg.completion_time.mean,
                agg.cum_mean_undelivered.mean
            );
            report.aggregates.push(agg);
        }
    }

    let per_slot = spec.out.join("per_slot.csv");
    write_per_slot_csv(create(&per_slot)?, &report.aggregates)?;
    let summary = spec.out.join("summary.csv");
    write_summary_csv(create(&summary)?, &report.aggregates)?;
    report.files.push(per_slot);
    report.files.push(summary);
    Ok(report)
}
