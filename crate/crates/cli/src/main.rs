//! Command-line front end.
//!
//! Subcommands: `thin`, `simulate-bc`, `schedule`, `simulate-smallmax`.
//! Every run is configured by flags, optionally layered over a JSON
//! config file (flags win), and embeds the resolved semantic
//! configuration in its output header. Re-running with the same flags
//! produces byte-identical payloads; worker count never affects them.

mod emit;
mod scenario_json;

use std::fs;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use bclab::bcsim::{self, TrialConfig, TrialSummary};
use bclab::scenarios::Scenario;
use bclab::smallmax::{DistParams, MaximaConfig};
use bclab::thinning::{build_plan, ThinningInput, ThinningPlan};

use emit::{fmt_f64, json_doc, write_output, CsvDoc};

#[derive(Parser)]
#[command(
    name = "bclab",
    version,
    about = "Contaminated-event Monte Carlo laboratory",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Thin a weight sequence through the dyadic bucket construction
    Thin(ThinArgs),
    /// Run contaminated-event trials over a horizon
    SimulateBc(SimulateBcArgs),
    /// Emit the small-maxima checkpoint schedule
    Schedule(ScheduleArgs),
    /// Run small-maxima block trials over a checkpoint range
    SimulateSmallmax(SimulateSmallmaxArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct ThinArgs {
    /// input CSV with header `p,a` and one pair per row
    #[arg(long)]
    input: PathBuf,
    /// output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateBcArgs {
    /// scenario JSON file
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// JSON config file; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads (results never depend on this)
    #[arg(long)]
    workers: Option<usize>,
    /// also run the retention coupling with a plan thinned from the
    /// scenario's own margins
    #[arg(long)]
    couple: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long = "n-min")]
    n_min: Option<usize>,
    #[arg(long = "n-max")]
    n_max: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct SimulateSmallmaxArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long = "n-min")]
    n_min: Option<usize>,
    #[arg(long = "n-max")]
    n_max: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads (results never depend on this)
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

/// Optional JSON config file shared by the simulation subcommands.
#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    scenario: Option<serde_json::Value>,
    horizon: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
    couple: Option<bool>,
    format: Option<Format>,
    theta: Option<f64>,
    n_min: Option<usize>,
    n_max: Option<usize>,
}

fn load_file_config(path: Option<&PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading config file {}", p.display()))?;
            let mut de = serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(&mut de).map_err(|e| {
                anyhow!(
                    "invalid config file {} at field path '{}': {}",
                    p.display(),
                    e.path(),
                    e.inner()
                )
            })
        }
    }
}

fn load_scenario_file(path: &PathBuf) -> Result<Scenario> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading scenario file {}", path.display()))?;
    scenario_json::parse_scenario(&text)
        .with_context(|| format!("in scenario file {}", path.display()))
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Thin(args) => cmd_thin(args),
        Command::SimulateBc(args) => cmd_simulate_bc(args),
        Command::Schedule(args) => cmd_schedule(args),
        Command::SimulateSmallmax(args) => cmd_simulate_smallmax(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- thin

#[derive(Serialize)]
struct ThinEcho {
    input: String,
    rows: usize,
}

fn cmd_thin(args: ThinArgs) -> Result<()> {
    let (p, a) = read_weight_csv(&args.input)?;
    let input = ThinningInput::new(p, a).map_err(|e| anyhow!("invalid input: {e}"))?;
    let plan = build_plan(&input);
    let bound = plan.weighted_bound();

    let echo = ThinEcho {
        input: args.input.display().to_string(),
        rows: plan.len(),
    };
    let mut doc = CsvDoc::new("thin", &echo)?;
    doc.comment(&format!("sum_p_thinned_a_prime: {}", fmt_f64(bound)));
    doc.columns(&["n", "p", "a", "level_k", "a_prime", "p_prime", "q"]);
    for i in 0..plan.len() {
        let level = plan.levels()[i];
        doc.row(&[
            (i + 1).to_string(),
            fmt_f64(input.p()[i]),
            fmt_f64(input.a()[i]),
            level.to_string(),
            fmt_f64(level.a_prime()),
            fmt_f64(plan.p_thinned()[i]),
            fmt_f64(plan.q()[i]),
        ]);
    }
    write_output(args.out.as_deref(), &doc.finish())?;
    eprintln!(
        "thin: {} rows, sum p'_n a'_n = {}",
        plan.len(),
        fmt_f64(bound)
    );
    Ok(())
}

/// Reads the `p,a` table; the header row is required unless the file is
/// entirely empty, and blank or `#` comment lines are skipped.
/// Malformed rows are reported with their line number.
fn read_weight_csv(path: &PathBuf) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading input file {}", path.display()))?;
    let mut p = Vec::new();
    let mut a = Vec::new();
    let mut saw_header = false;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if !saw_header {
            if cols == ["p", "a"] {
                saw_header = true;
                continue;
            }
            bail!("line {lineno}: expected header 'p,a', found '{line}'");
        }
        if cols.len() != 2 {
            bail!(
                "line {lineno}: expected two comma-separated values, found {}",
                cols.len()
            );
        }
        let pv: f64 = cols[0]
            .parse()
            .map_err(|_| anyhow!("line {lineno}: cannot parse p value '{}'", cols[0]))?;
        let av: f64 = cols[1]
            .parse()
            .map_err(|_| anyhow!("line {lineno}: cannot parse a value '{}'", cols[1]))?;
        if !(0.0..=1.0).contains(&pv) {
            bail!("line {lineno}: p = {pv} is not in [0, 1]");
        }
        if av.is_nan() || av < 0.0 {
            bail!("line {lineno}: a = {av} must be non-negative");
        }
        p.push(pv);
        a.push(av);
    }
    Ok((p, a))
}

// --------------------------------------------------------- simulate-bc

#[derive(Serialize)]
struct BcEcho<'a> {
    scenario: &'a Scenario,
    horizon: usize,
    trials: usize,
    seed: u64,
    couple: bool,
}

fn cmd_simulate_bc(args: SimulateBcArgs) -> Result<()> {
    let file = load_file_config(args.config.as_ref())?;
    let scenario = match (&args.scenario, file.scenario) {
        (Some(path), _) => load_scenario_file(path)?,
        (None, Some(v)) => scenario_json::scenario_from_value(v)?,
        (None, None) => bail!("no scenario given: pass --scenario or a config file with one"),
    };

    let horizon = args.horizon.or(file.horizon).unwrap_or(1000);
    let trials = args.trials.or(file.trials).unwrap_or(1000);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let workers = args
        .workers
        .or(file.workers)
        .unwrap_or_else(default_workers);
    let couple = args.couple || file.couple.unwrap_or(false);
    let format = args.format.or(file.format).unwrap_or(Format::Csv);

    let config = TrialConfig {
        horizon,
        trials,
        seed,
        workers,
    };

    let summary = if couple {
        let plan = plan_from_scenario(&scenario, horizon)?;
        bcsim::run_with_coupling(&scenario, &plan, &config)?
    } else {
        bcsim::run(&scenario, &config)?
    };

    let echo = BcEcho {
        scenario: &scenario,
        horizon,
        trials,
        seed,
        couple,
    };
    let payload = match format {
        Format::Json => json_doc("simulate-bc", &echo, &summary)?,
        Format::Csv => bc_csv(&echo, &summary)?,
    };
    write_output(args.out.as_deref(), &payload)
}

/// Thinning plan over the scenario's own margins: weights `p_n = P(A_n)`
/// and contamination coefficients `e_n = P(E_n ∩ A_n) / P(A_n)`.
fn plan_from_scenario(scenario: &Scenario, horizon: usize) -> Result<ThinningPlan> {
    let mut p = Vec::with_capacity(horizon);
    let mut e = Vec::with_capacity(horizon);
    for n in 1..=horizon {
        let pa = scenario.analytic_pa(n)?;
        let joint = scenario.analytic_joint(n)?;
        p.push(pa);
        e.push(if pa > 0.0 { joint / pa } else { 0.0 });
    }
    Ok(build_plan(&ThinningInput::new(p, e)?))
}

fn bc_csv(echo: &BcEcho, summary: &TrialSummary) -> Result<String> {
    let mut doc = CsvDoc::new("simulate-bc", echo)?;
    let c = &summary.cumulative;
    doc.comment(&format!(
        "cumulative_b: mean={} variance={} min={} max={}",
        fmt_f64(c.mean),
        fmt_f64(c.variance),
        c.min,
        c.max
    ));
    if let Some(cond) = &summary.conditional {
        doc.comment(&format!(
            "conditional_on_e: trials_with_e={} mean_b_given_e={} max_b_given_e={} \
             trials_without_e={} mean_b_given_not_e={}",
            cond.trials_with_e,
            fmt_f64(cond.mean_b_given_e),
            cond.max_b_given_e,
            cond.trials_without_e,
            fmt_f64(cond.mean_b_given_not_e)
        ));
    }
    if let Some(primed) = &summary.primed {
        doc.comment(&format!(
            "primed_counts: mean_a_primed={} mean_d_primed={} mean_b_primed={}",
            fmt_f64(primed.counts_a_primed.mean),
            fmt_f64(primed.counts_d_primed.mean),
            fmt_f64(primed.counts_b_primed.mean)
        ));
    }
    doc.comment(&format!(
        "last_a: p50={} p99={} max={}",
        summary.last_a.p50, summary.last_a.p99, summary.last_a.max
    ));

    if summary.primed.is_some() {
        doc.columns(&[
            "n",
            "freqA",
            "freqE",
            "freqB",
            "freqAprime",
            "freqDprime",
            "freqBprime",
        ]);
    } else {
        doc.columns(&["n", "freqA", "freqE", "freqB"]);
    }
    for (i, &n) in summary.grid.iter().enumerate() {
        let mut row = vec![
            n.to_string(),
            fmt_f64(summary.freq_a[i]),
            fmt_f64(summary.freq_e[i]),
            fmt_f64(summary.freq_b[i]),
        ];
        if let Some(primed) = &summary.primed {
            row.push(fmt_f64(primed.freq_a_primed[i]));
            row.push(fmt_f64(primed.freq_d_primed[i]));
            row.push(fmt_f64(primed.freq_b_primed[i]));
        }
        doc.row(&row);
    }
    Ok(doc.finish())
}

// ------------------------------------------------------------ schedule

#[derive(Serialize)]
struct ScheduleEcho {
    theta: f64,
    n_min: usize,
    n_max: usize,
}

fn cmd_schedule(args: ScheduleArgs) -> Result<()> {
    let file = load_file_config(args.config.as_ref())?;
    let theta = args
        .theta
        .or(file.theta)
        .unwrap_or(bclab::smallmax::DEFAULT_THETA);
    let n_min = args.n_min.or(file.n_min).unwrap_or(16);
    let n_max = args.n_max.or(file.n_max).unwrap_or(100);
    let format = args.format.or(file.format).unwrap_or(Format::Csv);

    let params = DistParams::new(theta)?;
    let rows = params.schedule(n_min, n_max)?;

    let echo = ScheduleEcho {
        theta,
        n_min,
        n_max,
    };
    let payload = match format {
        Format::Json => json_doc("schedule", &echo, &rows)?,
        Format::Csv => {
            let mut doc = CsvDoc::new("schedule", &echo)?;
            doc.comment("a_mn = e^t and x_n = e^t_prime are printed only while |t| < 700");
            doc.columns(&[
                "n",
                "s",
                "sigma",
                "log_mprime",
                "t",
                "t_prime",
                "pi",
                "log_pb",
                "pe_bound",
                "a_mn",
                "x_n",
            ]);
            for row in &rows {
                doc.row(&[
                    row.n.to_string(),
                    fmt_f64(row.s),
                    fmt_f64(row.sigma),
                    fmt_f64(row.log_mprime),
                    fmt_f64(row.t),
                    fmt_f64(row.t_prime),
                    fmt_f64(row.pi),
                    fmt_f64(row.log_pb.log()),
                    fmt_f64(row.pe_bound),
                    fmt_exp(row.t),
                    fmt_exp(row.t_prime),
                ]);
            }
            doc.finish()
        }
    };
    write_output(args.out.as_deref(), &payload)
}

/// Raw scale `e^t`, printed only while it is representable.
fn fmt_exp(t: f64) -> String {
    if t.abs() < 700.0 {
        fmt_f64(t.exp())
    } else {
        String::new()
    }
}

// --------------------------------------------------- simulate-smallmax

#[derive(Serialize)]
struct SmallmaxEcho {
    theta: f64,
    n_min: usize,
    n_max: usize,
    trials: usize,
    seed: u64,
}

fn cmd_simulate_smallmax(args: SimulateSmallmaxArgs) -> Result<()> {
    let file = load_file_config(args.config.as_ref())?;
    let theta = args
        .theta
        .or(file.theta)
        .unwrap_or(bclab::smallmax::DEFAULT_THETA);
    let n_min = args.n_min.or(file.n_min).unwrap_or(16);
    let n_max = args.n_max.or(file.n_max).unwrap_or(200);
    let trials = args.trials.or(file.trials).unwrap_or(10_000);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let workers = args
        .workers
        .or(file.workers)
        .unwrap_or_else(default_workers);
    let format = args.format.or(file.format).unwrap_or(Format::Csv);

    let params = DistParams::new(theta)?;
    let summary = params.run_maxima(&MaximaConfig {
        n_min,
        n_max,
        trials,
        seed,
        workers,
    })?;

    let echo = SmallmaxEcho {
        theta,
        n_min,
        n_max,
        trials,
        seed,
    };
    let payload = match format {
        Format::Json => json_doc("simulate-smallmax", &echo, &summary)?,
        Format::Csv => {
            let mut doc = CsvDoc::new("simulate-smallmax", &echo)?;
            doc.comment(&format!("e1_reference: {}", fmt_f64(summary.e1_reference)));
            doc.columns(&[
                "n",
                "s",
                "t",
                "t_prime",
                "pe_bound",
                "analytic_pA",
                "analytic_pE",
                "analytic_pB",
                "freqA",
                "freqE",
                "freqB",
                "freq_below_scale",
                "mean_gap",
                "gap_p10",
                "gap_p50",
                "gap_p90",
                "cum_mean_b",
                "cum_analytic_pb",
            ]);
            for r in &summary.rows {
                doc.row(&[
                    r.n.to_string(),
                    fmt_f64(r.s),
                    fmt_f64(r.t),
                    fmt_f64(r.t_prime),
                    fmt_f64(r.pe_bound),
                    fmt_f64(r.analytic_pa),
                    fmt_f64(r.analytic_pe),
                    fmt_f64(r.analytic_pb),
                    fmt_f64(r.freq_a),
                    fmt_f64(r.freq_e),
                    fmt_f64(r.freq_b),
                    fmt_f64(r.freq_below_scale),
                    fmt_f64(r.mean_gap),
                    fmt_f64(r.gap_p10),
                    fmt_f64(r.gap_p50),
                    fmt_f64(r.gap_p90),
                    fmt_f64(r.cum_mean_b),
                    fmt_f64(r.cum_analytic_pb),
                ]);
            }
            doc.finish()
        }
    };
    write_output(args.out.as_deref(), &payload)
}
