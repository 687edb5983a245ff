//! Command-line front end: ingest a JSON job config, run the requested
//! computation (index, entropies, renyi-curve, check), and emit one
//! fixed-schema CSV/JSON row per reported quantity. Logs go to stderr, data
//! to stdout or --out; output is byte-identical for a fixed (config, seed).

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use chanent::chan::{self, AlgebraMap, ChannelSampler};
use chanent::entropy::{self, HarnessConfig, Mutation, Suite};
use chanent::inclusion::{build_inclusion, Inclusion, TraceSpec};
use chanent::mmalg::{self, AlgebraElement};
use chanent::tower::{self, Tower};

const SCHEMA_VERSION: &str = "1";

#[derive(Parser)]
#[command(name = "chanent", about = "Inclusion indices, bimodule channel entropies, Renyi curves, and property-check suites")]
struct Cli {
    /// JSON job configuration.
    #[arg(long, global = true)]
    config: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<u64>,
    #[arg(long, global = true)]
    budget: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Comma-separated Renyi orders; use `inf` for infinity.
    #[arg(long, global = true)]
    pgrid: Option<String>,
    /// Write data here instead of stdout.
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true, value_parser = ["csv", "json"])]
    format: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Jones index δ², δ and the downward-construction criterion.
    Index,
    /// Entropy quantities and their cross-check margins for a channel pair.
    Entropies,
    /// Sandwiched Renyi curve over a p-grid (raw, δ-prefixed, normalized).
    RenyiCurve,
    /// Seeded theorem-check suites; exit 1 on any violation beyond slack.
    Check,
}

// ---------------------------------------------------------------------------
// config schema

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JobConfig {
    inclusion: Option<InclusionSpec>,
    phi: Option<ChannelSpec>,
    psi: Option<ChannelSpec>,
    pgrid: Option<Vec<NumberOrString>>,
    seed: Option<u64>,
    trials: Option<u64>,
    budget: Option<usize>,
    tol: Option<f64>,
    suites: Option<Vec<String>>,
    /// Test fixture: corrupt one quantity to confirm harness sensitivity.
    mutation: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InclusionSpec {
    dims_small: Vec<usize>,
    adjacency: Vec<Vec<usize>>,
    trace: TraceValue,
    #[serde(default = "default_true")]
    normalize: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TraceValue {
    Token(String),
    Weights(Vec<NumberOrString>),
}

/// Numbers may come as JSON numbers or as decimal/rational strings
/// ("0.5", "1/3"); strings sidestep locale and float-literal issues.
#[derive(Debug, Deserialize, Clone)]
#[serde(untagged)]
enum NumberOrString {
    Num(f64),
    Str(String),
}

impl NumberOrString {
    fn value(&self) -> Result<f64, String> {
        match self {
            NumberOrString::Num(x) => Ok(*x),
            NumberOrString::Str(s) => parse_number(s),
        }
    }
}

fn parse_number(s: &str) -> Result<f64, String> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    if let Some((a, b)) = t.split_once('/') {
        let num: f64 = a.trim().parse().map_err(|_| format!("bad rational numerator in {s:?}"))?;
        let den: f64 = b.trim().parse().map_err(|_| format!("bad rational denominator in {s:?}"))?;
        if den == 0.0 {
            return Err(format!("zero denominator in {s:?}"));
        }
        return Ok(num / den);
    }
    t.parse().map_err(|_| format!("cannot parse number {s:?}"))
}

#[derive(Debug, Deserialize, Clone)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ChannelSpec {
    Identity,
    CondExp,
    FromMultiplierRandom { seed: u64 },
    Convex { parts: Vec<ChannelSpec>, weights: Vec<NumberOrString> },
    Compose { parts: Vec<ChannelSpec> },
}

// ---------------------------------------------------------------------------
// output rows

struct Row {
    command: &'static str,
    instance: String,
    quantity: String,
    method: String,
    p: String,
    value: f64,
    margin: Option<f64>,
    seed: u64,
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.12e}")
    }
}

fn write_rows(rows: &[Row], format: &str, out: &mut dyn Write) -> std::io::Result<()> {
    if format == "json" {
        let items: Vec<String> = rows
            .iter()
            .map(|r| {
                format!(
                    "{{\"schema_version\":{SCHEMA_VERSION},\"command\":\"{}\",\"instance_digest\":\"{}\",\"quantity\":\"{}\",\"method\":\"{}\",\"p\":\"{}\",\"value\":\"{}\",\"margin\":\"{}\",\"seed\":{}}}",
                    r.command,
                    r.instance,
                    r.quantity,
                    r.method,
                    r.p,
                    fmt_value(r.value),
                    r.margin.map(fmt_value).unwrap_or_default(),
                    r.seed
                )
            })
            .collect();
        writeln!(out, "[{}]", items.join(","))?;
    } else {
        writeln!(out, "schema_version,command,instance_digest,quantity,method,p,value,margin,seed")?;
        for r in rows {
            writeln!(
                out,
                "{SCHEMA_VERSION},{},{},{},{},{},{},{},{}",
                r.command,
                r.instance,
                r.quantity,
                r.method,
                r.p,
                fmt_value(r.value),
                r.margin.map(fmt_value).unwrap_or_default(),
                r.seed
            )?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------

enum CmdError {
    Config(String),
    Numerical(String),
}

impl From<chanent::Error> for CmdError {
    fn from(e: chanent::Error) -> Self {
        CmdError::Numerical(format!("{e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(CmdError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CmdError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, CmdError> {
    let config = load_config(cli)?;
    let seed = cli.seed.or(config.seed).unwrap_or(1);
    let format = cli.format.clone().unwrap_or_else(|| "csv".into());

    let (rows, exit) = match cli.command {
        Command::Index => (cmd_index(&config, seed)?, ExitCode::SUCCESS),
        Command::Entropies => (cmd_entropies(cli, &config, seed)?, ExitCode::SUCCESS),
        Command::RenyiCurve => (cmd_renyi_curve(cli, &config, seed)?, ExitCode::SUCCESS),
        Command::Check => cmd_check(cli, &config, seed)?,
    };

    let output: Box<dyn Write> = match &cli.out {
        Some(path) => Box::new(
            std::fs::File::create(path).map_err(|e| CmdError::Config(format!("cannot open {path}: {e}")))?,
        ),
        None => Box::new(std::io::stdout()),
    };
    let mut output = std::io::BufWriter::new(output);
    write_rows(&rows, &format, &mut output).map_err(|e| CmdError::Numerical(format!("write failed: {e}")))?;
    Ok(exit)
}

fn load_config(cli: &Cli) -> Result<JobConfig, CmdError> {
    match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CmdError::Config(format!("cannot read {path}: {e}")))?;
            serde_json::from_str::<JobConfig>(&text).map_err(|e| CmdError::Config(format!("{e}")))
        }
        None => Ok(JobConfig {
            inclusion: None,
            phi: None,
            psi: None,
            pgrid: None,
            seed: None,
            trials: None,
            budget: None,
            tol: None,
            suites: None,
            mutation: None,
        }),
    }
}

fn build_from_spec(spec: &InclusionSpec) -> Result<(Inclusion, String), CmdError> {
    let trace = match &spec.trace {
        TraceValue::Token(t) if t == "markov" => TraceSpec::Markov,
        TraceValue::Token(t) => {
            return Err(CmdError::Config(format!("unknown trace token {t:?} (field `trace`)")));
        }
        TraceValue::Weights(ws) => {
            let weights = ws
                .iter()
                .map(|w| w.value())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CmdError::Config(format!("field `trace`: {e}")))?;
            TraceSpec::Explicit { weights, normalize: spec.normalize }
        }
    };
    if spec.adjacency.len() != spec.dims_small.len() {
        return Err(CmdError::Config("field `adjacency`: one row per entry of `dims_small`".into()));
    }
    let inc = build_inclusion(&spec.dims_small, &spec.adjacency, trace)
        .map_err(|e| CmdError::Config(format!("fields `dims_small`/`adjacency`/`trace`: {e}")))?;
    let digest = instance_digest(&inc);
    eprintln!(
        "instance {digest}: N = {:?}, M = {:?}, trace = {:?} (normalize = {})",
        inc.small.dims(),
        inc.big.dims(),
        inc.trace_big.weights,
        spec.normalize,
    );
    Ok((inc, digest))
}

fn instance_digest(inc: &Inclusion) -> String {
    let mut canon = String::new();
    canon.push_str(&format!("dims={:?};adj={:?};t=", inc.small.dims(), inc.adjacency));
    for w in &inc.trace_big.weights {
        canon.push_str(&format!("{w:.17e},"));
    }
    let hash = Sha256::digest(canon.as_bytes());
    hex::encode(&hash[..6])
}

fn require_inclusion(config: &JobConfig) -> Result<&InclusionSpec, CmdError> {
    config
        .inclusion
        .as_ref()
        .ok_or_else(|| CmdError::Config("missing required field `inclusion`".into()))
}

fn build_channel(spec: &ChannelSpec, tower: &Tower) -> Result<AlgebraMap, CmdError> {
    let inc = &tower.inclusion;
    Ok(match spec {
        ChannelSpec::Identity => AlgebraMap::identity(&inc.big),
        ChannelSpec::CondExp => AlgebraMap::cond_exp_channel(inc),
        ChannelSpec::FromMultiplierRandom { seed } => {
            let sampler = ChannelSampler { tower };
            let mut rng = mmalg::rng_from_seed(*seed);
            sampler.random_cp_multiplier(&mut rng, true)?
        }
        ChannelSpec::Convex { parts, weights } => {
            let built = parts
                .iter()
                .map(|p| build_channel(p, tower))
                .collect::<Result<Vec<_>, _>>()?;
            let ws = weights
                .iter()
                .map(|w| w.value())
                .collect::<Result<Vec<_>, _>>()
                .map_err(CmdError::Config)?;
            AlgebraMap::convex(&built, &ws)?
        }
        ChannelSpec::Compose { parts } => {
            if parts.is_empty() {
                return Err(CmdError::Config("compose needs at least one part".into()));
            }
            let mut built = parts
                .iter()
                .map(|p| build_channel(p, tower))
                .collect::<Result<Vec<_>, _>>()?;
            let mut acc = built.remove(0);
            for next in built {
                acc = acc.compose(&next)?;
            }
            acc
        }
    })
}

fn cmd_index(config: &JobConfig, seed: u64) -> Result<Vec<Row>, CmdError> {
    let spec = require_inclusion(config)?;
    let (inc, digest) = build_from_spec(spec)?;
    let (crit, witness) = tower::downward_criterion(&inc);
    let mut rows = Vec::new();
    let mut push = |quantity: String, value: f64| {
        rows.push(Row {
            command: "index",
            instance: digest.clone(),
            quantity,
            method: "pp_basis".into(),
            p: String::new(),
            value,
            margin: None,
            seed,
        });
    };
    push("delta_sq".into(), inc.delta_sq());
    push("delta".into(), inc.delta());
    push("downward_criterion".into(), if crit { 1.0 } else { 0.0 });
    for (k, l) in witness {
        push(format!("criterion_violation(k={k};l={l})"), 1.0);
    }
    Ok(rows)
}

struct Pair {
    tower: Tower,
    digest: String,
    phi: AlgebraMap,
    psi: AlgebraMap,
}

fn build_pair(config: &JobConfig) -> Result<Pair, CmdError> {
    let spec = require_inclusion(config)?;
    let (inc, digest) = build_from_spec(spec)?;
    let tower = Tower::build(inc)?;
    let phi_spec = config.phi.clone().unwrap_or(ChannelSpec::Identity);
    let psi_spec = config.psi.clone().unwrap_or(ChannelSpec::CondExp);
    eprintln!("phi = {phi_spec:?}, psi = {psi_spec:?} (defaults: identity, cond_exp)");
    let phi = build_channel(&phi_spec, &tower)?;
    let psi = build_channel(&psi_spec, &tower)?;
    Ok(Pair { tower, digest, phi, psi })
}

fn cmd_entropies(cli: &Cli, config: &JobConfig, seed: u64) -> Result<Vec<Row>, CmdError> {
    let pair = build_pair(config)?;
    let t = &pair.tower;
    let budget = cli.budget.or(config.budget).unwrap_or(10_000);
    let digest = pair.digest.clone();
    let mut rows = Vec::new();
    let mut push = |quantity: &str, method: &str, value: f64, margin: Option<f64>| {
        rows.push(Row {
            command: "entropies",
            instance: digest.clone(),
            quantity: quantity.into(),
            method: method.into(),
            p: String::new(),
            value,
            margin,
            seed,
        });
    };

    let h_closed = entropy::h_closed_form_subalgebra(&t.inclusion);
    let upper = entropy::upper_bound_value(t)?;
    let gap = entropy::equality_gap(&t.inclusion);
    push("h_closed_form", "closed_form", h_closed, None);
    push("upper_bound", "closed_form", upper, Some((upper - h_closed - gap).abs()));
    push("gap", "closed_form", gap, None);

    let phi_hat = chan::fourier_multiplier(t, &pair.phi)?;
    let psi_hat = chan::fourier_multiplier(t, &pair.psi)?;
    let st = entropy::s_tau(t, &phi_hat, &psi_hat)?;
    push("s_tau", "multiplier", st.value, None);

    let one = AlgebraElement::identity(&t.inclusion.big);
    let ar = entropy::araki(&pair.phi, &pair.psi, &t.inclusion.trace_big, &one)?;
    push("araki", "correspondence", ar.value, Some((ar.value - st.value).abs()));

    // exact downward value when the inclusion is a recognizable
    // basic-construction floor
    let downward = tower::reconstruct_downward(&t.inclusion);
    if let Some(dt) = &downward {
        let hd = entropy::h_downward(dt, &pair.phi, &pair.psi)?;
        push("h_downward", "downward", hd.value, Some((hd.value - st.value).abs()));
    }

    let search = entropy::h_partition_search(t, downward.as_ref(), &pair.phi, &pair.psi, budget, seed)?;
    push("h_lower_bound", "search", search.best, Some(st.value - search.best));

    Ok(rows)
}

fn parse_pgrid(cli: &Cli, config: &JobConfig) -> Result<Vec<f64>, CmdError> {
    if let Some(raw) = &cli.pgrid {
        return raw
            .split(',')
            .map(parse_number)
            .collect::<Result<Vec<_>, _>>()
            .map_err(CmdError::Config);
    }
    if let Some(grid) = &config.pgrid {
        return grid
            .iter()
            .map(|x| x.value())
            .collect::<Result<Vec<_>, _>>()
            .map_err(CmdError::Config);
    }
    Ok(vec![1.0, 1.5, 2.0, 4.0, f64::INFINITY])
}

fn fmt_p(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p}")
    }
}

fn cmd_renyi_curve(cli: &Cli, config: &JobConfig, seed: u64) -> Result<Vec<Row>, CmdError> {
    let grid = parse_pgrid(cli, config)?;
    for &p in &grid {
        if !(p >= 0.5) {
            return Err(CmdError::Config(format!("pgrid entry {p} outside [1/2, inf]")));
        }
    }
    let pair = build_pair(config)?;
    let t = &pair.tower;
    let digest = pair.digest.clone();
    let phi_hat = chan::fourier_multiplier(t, &pair.phi)?;
    let psi_hat = chan::fourier_multiplier(t, &pair.psi)?;

    let mut rows = Vec::new();
    let mut prev_norm = f64::NEG_INFINITY;
    let mut monotone = true;
    let mut min_step = f64::INFINITY;
    for &p in &grid {
        let v = entropy::s_p(t, &phi_hat, &psi_hat, p)?;
        for (method, value) in [
            ("renyi_raw", v.raw),
            ("renyi_delta", v.delta),
            ("renyi_normalized", v.normalized),
        ] {
            rows.push(Row {
                command: "renyi_curve",
                instance: digest.clone(),
                quantity: "s_p".into(),
                method: method.into(),
                p: fmt_p(p),
                value,
                margin: None,
                seed,
            });
        }
        if v.normalized.is_finite() {
            if prev_norm.is_finite() {
                min_step = min_step.min(v.normalized - prev_norm);
            }
            if v.normalized < prev_norm - 1e-8 {
                monotone = false;
            }
            prev_norm = v.normalized;
        }
    }

    let lam = chan::lambda_bimodule(&phi_hat, &psi_hat, 1e-9)?;
    let neg_log_lambda = if lam.paper_convention_infinite { f64::INFINITY } else { -lam.value.ln() };
    rows.push(Row {
        command: "renyi_curve",
        instance: digest.clone(),
        quantity: "neg_log_lambda".into(),
        method: if lam.paper_convention_infinite {
            "flagged_majorization_failure".into()
        } else {
            "multiplier".into()
        },
        p: "inf".into(),
        value: neg_log_lambda,
        margin: None,
        seed,
    });
    let st = entropy::s_tau(t, &phi_hat, &psi_hat)?;
    rows.push(Row {
        command: "renyi_curve",
        instance: digest.clone(),
        quantity: "s_tau".into(),
        method: "multiplier".into(),
        p: "1".into(),
        value: st.value,
        margin: None,
        seed,
    });
    if let Some(dt) = tower::reconstruct_downward(&t.inclusion) {
        let hd = entropy::h_downward(&dt, &pair.phi, &pair.psi)?;
        rows.push(Row {
            command: "renyi_curve",
            instance: digest.clone(),
            quantity: "h_exact".into(),
            method: "downward".into(),
            p: "1".into(),
            value: hd.value,
            margin: Some((hd.value - st.value).abs()),
            seed,
        });
    }
    rows.push(Row {
        command: "renyi_curve",
        instance: digest.clone(),
        quantity: "monotone_in_p".into(),
        method: "renyi_normalized".into(),
        p: String::new(),
        value: if monotone { 1.0 } else { 0.0 },
        margin: if min_step.is_finite() { Some(min_step) } else { None },
        seed,
    });
    Ok(rows)
}

fn cmd_check(cli: &Cli, config: &JobConfig, seed: u64) -> Result<(Vec<Row>, ExitCode), CmdError> {
    let suites = match &config.suites {
        None => Suite::all(),
        Some(names) => names
            .iter()
            .map(|n| Suite::parse(n).ok_or_else(|| CmdError::Config(format!("unknown suite {n:?} (field `suites`)"))))
            .collect::<Result<Vec<_>, _>>()?,
    };
    let mutation = match config.mutation.as_deref() {
        None => None,
        Some("umegaki_sign_flip") => Some(Mutation::UmegakiSignFlip),
        Some(other) => {
            return Err(CmdError::Config(format!("unknown mutation {other:?} (field `mutation`)")));
        }
    };
    let harness_config = HarnessConfig {
        suites,
        trials: cli.trials.or(config.trials).unwrap_or(100),
        seed,
        slack: cli.tol.or(config.tol).unwrap_or(1e-8),
        mutation,
    };
    eprintln!(
        "check: suites = {:?}, trials = {}, seed = {}, slack = {:.1e}",
        harness_config.suites.iter().map(|s| s.name()).collect::<Vec<_>>(),
        harness_config.trials,
        harness_config.seed,
        harness_config.slack
    );
    let report = entropy::theorem_harness(&harness_config)?;
    let rows: Vec<Row> = report
        .rows
        .iter()
        .map(|r| Row {
            command: "check",
            instance: r.instance.clone(),
            quantity: format!("{}/{}#{}", r.suite, r.quantity, r.trial),
            method: if r.pass { "pass".into() } else { "VIOLATION".into() },
            p: String::new(),
            value: r.lhs,
            margin: Some(r.margin),
            seed: r.seed,
        })
        .collect();
    eprintln!("check: {} rows, {} violations", rows.len(), report.violations);
    let exit = if report.violations > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS };
    Ok((rows, exit))
}
