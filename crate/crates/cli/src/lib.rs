//! Deterministic JSON reporting layer for the `padicvol` binary.
//!
//! Every subcommand assembles a report with a fixed shape: the command
//! name, a digest of each input file, the flag values in play, exact
//! rational results serialized as `"num/den"` strings, the ledger of
//! excluded primes affecting validity, and a one-line method note.  JSON
//! maps are ordered, so identical inputs and seeds produce byte-identical
//! reports; wall-clock timings are opt-in because they break exactly that
//! guarantee.
//!
//! Exit codes: `0` success, `1` domain error (parse failure, unbounded
//! support, exhausted budget, failed fit validation, ...), `2` usage error
//! (handled by the argument parser).  Domain-error diagnostics go to
//! standard error; reports go to standard output or `--out`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use padicvol_core::group::{
    cartan_decompose, coset_index, coset_index_bruteforce, GroupContext,
};
use padicvol_core::measure::{
    stability_level_with_budget, volume_exact_with_budget, volume_monte_carlo, DefinableSet,
    Method, DEFAULT_EXACT_BUDGET,
};
use padicvol_core::model::{eval_valued, ModelTag, TriBool, TruncatedElement};
use padicvol_core::orbital::{
    coset_support, orbital_integral_with_support, OrbitalEvaluation, OrbitalProblem,
};
use padicvol_core::parser;
use padicvol_core::presburger::{
    eliminate_quantifiers, uniform_bound_sampled, DisjunctFate, DEFAULT_SAMPLE_PRIMES,
};
use padicvol_core::qpoly::fit_laurent;
use padicvol_core::separation::{separate, ExclusionLedger};
use padicvol_core::{Error, Formula, Result, Sort};

#[derive(Parser, Debug)]
#[command(name = "padicvol", version, about = "Workbench for definable sets over p-adic fields")]
pub struct Cli {
    /// Worker threads (fallback: the WORKBENCH_THREADS variable, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Write the report to this path instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Include wall-clock timings (makes reports non-reproducible).
    #[arg(long, global = true)]
    pub timings: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    /// Truncated p-adic integers.
    Padic,
    /// Truncated Laurent series over F_p.
    Laurent,
}

impl From<ModelArg> for ModelTag {
    fn from(m: ModelArg) -> ModelTag {
        match m {
            ModelArg::Padic => ModelTag::Padic,
            ModelArg::Laurent => ModelTag::Laurent,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a formula file and echo its canonical form.
    Parse { file: PathBuf },

    /// Eliminate the value-group quantifiers of a formula.
    Qe { file: PathBuf },

    /// Uniform covering set of a value-group solution family.
    Bound {
        file: PathBuf,
        /// Residue-guard sampling primes.
        #[arg(long, value_delimiter = ',')]
        primes: Option<Vec<u64>>,
    },

    /// Split a formula into residue-sort and value-group parts.
    Separate { file: PathBuf },

    /// Evaluate a closed formula in a truncated model.
    Eval {
        file: PathBuf,
        #[arg(long)]
        prime: u64,
        #[arg(long, value_enum, default_value_t = ModelArg::Padic)]
        model: ModelArg,
        /// Digits carried per valued-field quantifier.
        #[arg(long, default_value_t = 4)]
        precision: u8,
    },

    /// Certified stability level of a definable set.
    Stability {
        file: PathBuf,
        #[arg(long)]
        prime: u64,
        #[arg(long, value_enum, default_value_t = ModelArg::Padic)]
        model: ModelArg,
        #[arg(long, default_value_t = 8)]
        max_level: u32,
        #[arg(long, default_value_t = DEFAULT_EXACT_BUDGET)]
        budget: u128,
    },

    /// Exact (or Monte Carlo, with --samples) volume of a definable set.
    Volume {
        file: PathBuf,
        #[arg(long)]
        prime: u64,
        #[arg(long, value_enum, default_value_t = ModelArg::Padic)]
        model: ModelArg,
        /// Counting level; computed from the stability certificate when omitted.
        #[arg(long)]
        level: Option<u32>,
        #[arg(long, default_value_t = DEFAULT_EXACT_BUDGET)]
        budget: u128,
        /// Monte Carlo sample count; switches the estimator on.
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },

    /// Cartan valuation tuple of an explicit square matrix.
    Cartan {
        /// Rows separated by ';', entries by ',', as rationals: "5,0;0,1".
        #[arg(long)]
        entries: String,
        #[arg(long)]
        prime: u64,
        #[arg(long, value_enum, default_value_t = ModelArg::Padic)]
        model: ModelArg,
    },

    /// Double-coset index: closed form in q, with an optional explicit count.
    Cosets {
        /// Descending valuation tuple, e.g. "2,0".
        #[arg(long)]
        m: String,
        /// Also enumerate representatives at this prime.
        #[arg(long)]
        prime: Option<u64>,
    },

    /// Orbital sum of a problem file over its sampled primes.
    Orbital {
        file: PathBuf,
        /// Evaluation primes (default: the problem's own list).
        #[arg(long, value_delimiter = ',')]
        primes: Option<Vec<u64>>,
        #[arg(long)]
        budget: Option<u128>,
        #[arg(long)]
        disc_cap: Option<i64>,
    },

    /// Laurent fit of the orbital series with held-out validation.
    Fit {
        file: PathBuf,
        /// Held-out validation prime.
        #[arg(long, default_value_t = 13)]
        validate: u64,
        /// Fit window "lo,hi" of q-exponents after structural normalization.
        #[arg(long, default_value = "-2,1")]
        window: String,
        #[arg(long)]
        budget: Option<u128>,
    },
}

/// Applies `--threads` / `WORKBENCH_THREADS`; silently keeps the default
/// pool when called twice.
pub fn configure_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("WORKBENCH_THREADS").ok().and_then(|s| s.parse().ok())
    });
    if let Some(n) = n.filter(|&n| n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Runs a parsed invocation to completion and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    configure_threads(cli.threads);
    let started = std::time::Instant::now();
    let mut report = match execute(&cli.command) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if cli.timings {
        report["timings_ms"] = json!({ "total": started.elapsed().as_millis() as u64 });
    }
    let mut text = serde_json::to_string_pretty(&report).expect("reports are plain JSON trees");
    text.push('\n');
    match &cli.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return 1;
            }
        }
        None => print!("{text}"),
    }
    0
}

/// Exact rational serialized without precision loss.
pub fn rat_str(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        let _ = write!(out, "{byte:02x}");
    }
    out
}

fn read_input(path: &Path) -> Result<(String, Value)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let meta = json!({
        "path": path.display().to_string(),
        "sha256": sha256_hex(text.as_bytes()),
    });
    Ok((text, meta))
}

fn parse_file(path: &Path) -> Result<(Formula, Value)> {
    let (text, meta) = read_input(path)?;
    Ok((parser::parse(&text)?, meta))
}

/// Builds a definable set from a formula file; the signature is the sorted
/// list of free valued-field variables.
pub fn set_from_file(path: &Path) -> Result<(DefinableSet, Value)> {
    let (formula, meta) = parse_file(path)?;
    let signature: Vec<String> = formula
        .free_variables()
        .into_iter()
        .filter(|(_, sort)| *sort == Sort::ValuedField)
        .map(|(name, _)| name)
        .collect();
    Ok((DefinableSet::new(formula, signature)?, meta))
}

fn ledger_json(ledger: &ExclusionLedger) -> Value {
    let mut map = serde_json::Map::new();
    for (p, reasons) in ledger.iter() {
        map.insert(
            p.to_string(),
            Value::Array(reasons.iter().map(|r| Value::String(r.clone())).collect()),
        );
    }
    Value::Object(map)
}

fn report(
    command: &str,
    inputs: Value,
    parameters: Value,
    results: Value,
    ledger: Value,
    method: &str,
) -> Value {
    json!({
        "command": command,
        "inputs": inputs,
        "parameters": parameters,
        "results": results,
        "ledger": ledger,
        "method": method,
    })
}

fn free_variables_json(f: &Formula) -> Value {
    Value::Array(
        f.free_variables()
            .into_iter()
            .map(|(name, sort)| json!({ "name": name, "sort": sort.keyword() }))
            .collect(),
    )
}

fn parse_tuple_arg(text: &str) -> Result<Vec<i64>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<i64>()
                .map_err(|_| Error::invalid(format!("not an integer: `{}`", part.trim())))
        })
        .collect()
}

fn execute(command: &Command) -> Result<Value> {
    match command {
        Command::Parse { file } => cmd_parse(file),
        Command::Qe { file } => cmd_qe(file),
        Command::Bound { file, primes } => cmd_bound(file, primes.as_deref()),
        Command::Separate { file } => cmd_separate(file),
        Command::Eval { file, prime, model, precision } => {
            cmd_eval(file, *prime, (*model).into(), *precision)
        }
        Command::Stability { file, prime, model, max_level, budget } => {
            cmd_stability(file, *prime, (*model).into(), *max_level, *budget)
        }
        Command::Volume { file, prime, model, level, budget, samples, seed } => {
            cmd_volume(file, *prime, (*model).into(), *level, *budget, *samples, *seed)
        }
        Command::Cartan { entries, prime, model } => cmd_cartan(entries, *prime, (*model).into()),
        Command::Cosets { m, prime } => cmd_cosets(m, *prime),
        Command::Orbital { file, primes, budget, disc_cap } => {
            cmd_orbital(file, primes.as_deref(), *budget, *disc_cap)
        }
        Command::Fit { file, validate, window, budget } => {
            cmd_fit(file, *validate, window, *budget)
        }
    }
}

fn cmd_parse(file: &Path) -> Result<Value> {
    let (formula, meta) = parse_file(file)?;
    Ok(report(
        "parse",
        json!({ "file": meta }),
        json!({}),
        json!({
            "canonical": parser::serialize(&formula),
            "free_variables": free_variables_json(&formula),
            "quantified": formula.has_quantifier(),
            "size": formula.size(),
        }),
        json!({}),
        "recursive-descent parse; canonical serialization round-trips",
    ))
}

fn cmd_qe(file: &Path) -> Result<Value> {
    let (formula, meta) = parse_file(file)?;
    let eliminated = eliminate_quantifiers(&formula)?;
    Ok(report(
        "qe",
        json!({ "file": meta }),
        json!({}),
        json!({
            "input": parser::serialize_body(&formula),
            "eliminated": parser::serialize_body(&eliminated),
            "quantifier_free": !eliminated.has_quantifier(),
        }),
        json!({}),
        "Cooper elimination over the value group; divisibility witnesses kept exact",
    ))
}

fn cmd_bound(file: &Path, primes: Option<&[u64]>) -> Result<Value> {
    let (formula, meta) = parse_file(file)?;
    let sample = primes.unwrap_or(&DEFAULT_SAMPLE_PRIMES);
    let bound = uniform_bound_sampled(&formula, sample)?;
    let fates: Vec<Value> = bound
        .fates
        .iter()
        .map(|fate| match fate {
            DisjunctFate::Counted { guard, solutions } => {
                json!({ "guard": guard.to_string(), "solutions": solutions })
            }
            DisjunctFate::GuardFalse => json!({ "guard": "false", "solutions": 0 }),
        })
        .collect();
    Ok(report(
        "bound",
        json!({ "file": meta }),
        json!({ "sample_primes": sample }),
        json!({
            "variables": bound.vars,
            "tuples": bound.tuples,
            "disjuncts": fates,
        }),
        ledger_json(&bound.ledger),
        "sort separation, then per-disjunct Presburger bounding with residue guards \
         decided by sampling",
    ))
}

fn cmd_separate(file: &Path) -> Result<Value> {
    let (formula, meta) = parse_file(file)?;
    let (form, ledger) = separate(&formula)?;
    let disjuncts: Vec<Value> = form
        .disjuncts
        .iter()
        .map(|(psi, lambda)| {
            json!({
                "residue": parser::serialize_body(psi),
                "value_group": parser::serialize_body(lambda),
            })
        })
        .collect();
    Ok(report(
        "separate",
        json!({ "file": meta }),
        json!({}),
        json!({ "disjuncts": disjuncts }),
        ledger_json(&ledger),
        "disjunctive normal form split into residue-sort and value-group parts; \
         constants rewritten through ord and ac",
    ))
}

fn cmd_eval(file: &Path, prime: u64, model: ModelTag, precision: u8) -> Result<Value> {
    let (formula, meta) = parse_file(file)?;
    if !formula.free_variables().is_empty() {
        return Err(Error::invalid(
            "eval needs a closed formula; bind or substitute the free variables",
        ));
    }
    let verdict = eval_valued(&formula, model, prime, precision, &BTreeMap::new())?;
    let text = match verdict {
        TriBool::True => "true",
        TriBool::False => "false",
        TriBool::Unknown => "unknown",
    };
    Ok(report(
        "eval",
        json!({ "file": meta }),
        json!({ "prime": prime, "model": model.to_string(), "precision": precision }),
        json!({ "verdict": text }),
        json!({}),
        "three-valued truncated evaluation; unknown is reported, never guessed",
    ))
}

fn cmd_stability(
    file: &Path,
    prime: u64,
    model: ModelTag,
    max_level: u32,
    budget: u128,
) -> Result<Value> {
    let (set, meta) = set_from_file(file)?;
    let level = stability_level_with_budget(&set, model, prime, max_level, budget)?;
    Ok(report(
        "stability",
        json!({ "file": meta }),
        json!({
            "prime": prime,
            "model": model.to_string(),
            "max_level": max_level,
            "budget": budget.to_string(),
        }),
        json!({ "level": level, "signature": set.signature() }),
        json!({}),
        "least level whose residue classes decide membership, certified by \
         exhaustive refinement",
    ))
}

fn cmd_volume(
    file: &Path,
    prime: u64,
    model: ModelTag,
    level: Option<u32>,
    budget: u128,
    samples: Option<u64>,
    seed: u64,
) -> Result<Value> {
    let (set, meta) = set_from_file(file)?;
    let level = match level {
        Some(n) => n,
        None => stability_level_with_budget(&set, model, prime, 8, budget)?,
    };
    let result = match samples {
        Some(samples) => volume_monte_carlo(&set, model, prime, level, samples, seed)?,
        None => volume_exact_with_budget(&set, model, prime, level, budget)?,
    };
    let method_json = match result.method {
        Method::ExactCount => json!({ "kind": "exact_count" }),
        Method::MonteCarlo { samples, stderr } => {
            json!({ "kind": "monte_carlo", "samples": samples, "stderr": stderr })
        }
    };
    Ok(report(
        "volume",
        json!({ "file": meta }),
        json!({
            "prime": prime,
            "model": model.to_string(),
            "level": level,
            "budget": budget.to_string(),
            "samples": samples,
            "seed": seed,
        }),
        json!({
            "volume": rat_str(&result.value),
            "level": result.level,
            "estimator": method_json,
        }),
        json!({}),
        "residue-class count at the stated level scaled by q^{-(level+1)·dim}",
    ))
}

fn cmd_cartan(entries: &str, prime: u64, model: ModelTag) -> Result<Value> {
    let rows: Vec<&str> = entries.split(';').collect();
    let mut matrix = Vec::with_capacity(rows.len());
    for row in &rows {
        let mut out = Vec::new();
        for cell in row.split(',') {
            let r = BigRational::from_str(cell.trim())
                .map_err(|_| Error::invalid(format!("not a rational: `{}`", cell.trim())))?;
            out.push(TruncatedElement::from_rational(model, prime, &r)?);
        }
        matrix.push(out);
    }
    let m = cartan_decompose(&matrix)?;
    Ok(report(
        "cartan",
        json!({ "entries": entries }),
        json!({ "prime": prime, "model": model.to_string() }),
        json!({ "m": m }),
        json!({}),
        "elementary-divisor valuations from minor minima (Smith form over O)",
    ))
}

fn cmd_cosets(m_text: &str, prime: Option<u64>) -> Result<Value> {
    let m = parse_tuple_arg(m_text)?;
    let index = coset_index(&m)?;
    let mut results = serde_json::Map::new();
    results.insert("m".into(), json!(index.m));
    results.insert("index_polynomial".into(), json!(index.index.to_string()));
    if let Some(p) = prime {
        let value = index.index.eval_at(p)?;
        let count = coset_index_bruteforce(&m, p)?;
        results.insert(
            "at_prime".into(),
            json!({
                "prime": p,
                "closed_form": rat_str(&value),
                "representative_count": count,
            }),
        );
    }
    Ok(report(
        "cosets",
        json!({}),
        json!({ "m": m_text, "prime": prime }),
        Value::Object(results),
        json!({}),
        "closed-form left-coset index, cross-checked by Hermite-form enumeration",
    ))
}

/// A problem file is `key = value` lines with `#` comments.  Keys: `model`,
/// `primes`, `support`, `orbit_locus` (formula paths resolve relative to the
/// problem file), optional `disc_cap` and `budget`.
pub fn load_problem(path: &Path) -> Result<(OrbitalProblem, Value)> {
    let (text, meta) = read_input(path)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut fields: BTreeMap<String, String> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::invalid(format!("{}:{}: expected `key = value`", path.display(), idx + 1))
        })?;
        if fields.insert(key.trim().to_string(), value.trim().to_string()).is_some() {
            return Err(Error::invalid(format!(
                "{}: duplicate key `{}`",
                path.display(),
                key.trim()
            )));
        }
    }
    let take = |key: &str| -> Result<String> {
        fields
            .get(key)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("{}: missing key `{key}`", path.display())))
    };
    for key in fields.keys() {
        if !matches!(key.as_str(), "model" | "primes" | "support" | "orbit_locus" | "disc_cap" | "budget")
        {
            return Err(Error::invalid(format!("{}: unknown key `{key}`", path.display())));
        }
    }
    let model = match take("model")?.as_str() {
        "padic" => ModelTag::Padic,
        "laurent" => ModelTag::Laurent,
        other => return Err(Error::invalid(format!("unknown model `{other}`"))),
    };
    let primes = take("primes")?
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<u64>()
                .map_err(|_| Error::invalid(format!("not a prime: `{}`", part.trim())))
        })
        .collect::<Result<Vec<u64>>>()?;
    let (support, support_meta) = set_from_file(&dir.join(take("support")?))?;
    let (locus, locus_meta) = set_from_file(&dir.join(take("orbit_locus")?))?;
    let mut problem = OrbitalProblem::new(support, locus, GroupContext::gl(2)?, &primes, model)?;
    if let Some(cap) = fields.get("disc_cap") {
        let cap = cap.parse::<i64>().map_err(|_| Error::invalid("disc_cap must be an integer"))?;
        problem = problem.with_disc_cap(cap);
    }
    if let Some(budget) = fields.get("budget") {
        let budget =
            budget.parse::<u128>().map_err(|_| Error::invalid("budget must be an integer"))?;
        problem = problem.with_budget(budget);
    }
    let inputs = json!({
        "problem": meta,
        "support": support_meta,
        "orbit_locus": locus_meta,
    });
    Ok((problem, inputs))
}

fn evaluation_json(eval: &OrbitalEvaluation) -> Value {
    json!({
        "prime": eval.prime,
        "value": eval.value.as_ref().map(rat_str),
        "terms": eval.terms.iter().map(|term| json!({
            "m": term.m,
            "index": rat_str(&term.index),
            "volume": term.volume.as_ref().map(rat_str),
            "status": term.status,
        })).collect::<Vec<Value>>(),
    })
}

fn cmd_orbital(
    file: &Path,
    primes: Option<&[u64]>,
    budget: Option<u128>,
    disc_cap: Option<i64>,
) -> Result<Value> {
    let (mut problem, inputs) = load_problem(file)?;
    if let Some(budget) = budget {
        problem = problem.with_budget(budget);
    }
    if let Some(cap) = disc_cap {
        problem = problem.with_disc_cap(cap);
    }
    let support = coset_support(&problem)?;
    let eval_primes: Vec<u64> =
        primes.map(|p| p.to_vec()).unwrap_or_else(|| problem.primes().to_vec());
    let mut evaluations = Vec::new();
    let mut failures = Vec::new();
    for &q in &eval_primes {
        let eval = orbital_integral_with_support(&problem, &support, q)?;
        if eval.value.is_none() {
            for term in &eval.terms {
                if term.volume.is_none() {
                    failures.push(format!("q = {q}, m = {:?}: {}", term.m, term.status));
                }
            }
        }
        evaluations.push(evaluation_json(&eval));
    }
    if !failures.is_empty() {
        return Err(Error::invalid(format!("incomplete orbital sum: {}", failures.join("; "))));
    }
    Ok(report(
        "orbital",
        inputs,
        json!({
            "primes": eval_primes,
            "budget": budget.map(|b| b.to_string()),
            "disc_cap": disc_cap,
        }),
        json!({
            "support": support.support,
            "disc_bounds": support.disc_bounds.iter()
                .map(|(p, b)| (p.to_string(), json!(b)))
                .collect::<serde_json::Map<String, Value>>(),
            "evaluations": evaluations,
        }),
        ledger_json(&support.ledger),
        support.method,
    ))
}

fn cmd_fit(file: &Path, validate: u64, window_text: &str, budget: Option<u128>) -> Result<Value> {
    let window = {
        let parts = parse_tuple_arg(window_text)?;
        if parts.len() != 2 || parts[0] > parts[1] {
            return Err(Error::invalid("window must be `lo,hi` with lo <= hi"));
        }
        (parts[0], parts[1])
    };
    let (mut problem, inputs) = load_problem(file)?;
    if let Some(budget) = budget {
        problem = problem.with_budget(budget);
    }
    let support = coset_support(&problem)?;
    let normalization = problem.context().normalization().clone();

    let mut points = Vec::new();
    let mut points_json = Vec::new();
    for &q in problem.primes() {
        let eval = orbital_integral_with_support(&problem, &support, q)?;
        let value = eval
            .value
            .ok_or_else(|| Error::invalid(format!("incomplete orbital sum at q = {q}")))?;
        let unit = normalization.eval_at(q)?;
        let normalized = value.clone() / (unit.clone() * unit);
        points_json.push(json!({
            "prime": q,
            "value": rat_str(&value),
            "normalized": rat_str(&normalized),
        }));
        points.push((q, normalized));
    }
    if points.len() < 2 {
        return Err(Error::invalid("a fit needs at least two sampled primes"));
    }
    let poly = fit_laurent(&points, window)?;

    let direct = orbital_integral_with_support(&problem, &support, validate)?
        .value
        .ok_or_else(|| Error::invalid(format!("incomplete orbital sum at q = {validate}")))?;
    let unit = normalization.eval_at(validate)?;
    let predicted = poly.eval_at(validate)? * unit.clone() * unit;
    if predicted != direct {
        return Err(Error::FitFailed(format!(
            "held-out validation at q = {validate}: predicted {}, computed {}",
            rat_str(&predicted),
            rat_str(&direct)
        )));
    }
    Ok(report(
        "fit",
        inputs,
        json!({
            "window": [window.0, window.1],
            "validate": validate,
            "budget": budget.map(|b| b.to_string()),
        }),
        json!({
            "normalized_polynomial": poly.to_string(),
            "normalization": "squared unit-group volume",
            "points": points_json,
            "validation": {
                "prime": validate,
                "predicted": rat_str(&predicted),
                "direct": rat_str(&direct),
                "agrees": true,
            },
        }),
        ledger_json(&support.ledger),
        "exact Laurent interpolation of the structurally normalized series, \
         validated on a held-out prime",
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    #[test]
    fn rationals_serialize_without_loss() {
        let r = BigRational::new(BigInt::from(512), BigInt::from(6561));
        assert_eq!(rat_str(&r), "512/6561");
        let neg = BigRational::new(BigInt::from(-1), BigInt::from(2));
        assert_eq!(rat_str(&neg), "-1/2");
    }

    #[test]
    fn tuple_arguments_reject_garbage() {
        assert_eq!(parse_tuple_arg("2, 0").unwrap(), vec![2, 0]);
        assert!(parse_tuple_arg("2; 0").is_err());
    }
}
