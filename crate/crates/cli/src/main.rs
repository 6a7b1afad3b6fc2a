use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use flowfacets::conditions::{
    all_relations, check_epistemic, check_fixed_policy_ni, check_flowspecs, check_forgetful, check_gradual_release,
    check_paralocks, check_paralocks_for, check_rx, check_strong_bisimulation, check_two_run_ni_oracle,
    default_flowspecs, reachable_relations,
};
use flowfacets::facets::{self, Facet, Table};
use flowfacets::lang::Domain;
use flowfacets::scheme::{self, Embedding, Formula, PolicyScheme};
use flowfacets::transform::{declassify_form, lock_form};
use flowfacets::{
    corpus, parse, print, Attacker, FlowRelation, ForgetfulAutomaton, Limits, ObservationModel, Program, ReleasePolicy,
    Status, Verdict,
};

const EXIT_USAGE: u8 = 64;
/// A check or analysis could not run (caps, malformed inputs).
const EXIT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(
    name = "flowfacets",
    version,
    about = "Check programs with dynamic information-flow policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one security condition on a program.
    Check(CheckArgs),
    /// Classify every condition along the facets and compare with the golden table.
    Table(TableArgs),
    /// Check invariants of a policy scheme, or an embedding into it.
    Scheme(SchemeArgs),
    /// List the bundled corpus.
    CorpusList(CorpusArgs),
}

#[derive(Args)]
struct Common {
    /// Small-step budget per run.
    #[arg(long, default_value_t = 1000)]
    budget: usize,
    /// Also write the JSON report to this path.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Print the JSON report instead of the human summary.
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Relations {
    /// Relations reachable through the program's policy commands.
    Reachable,
    /// Every relation over the declared labels.
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Model {
    Assign,
    Store,
}

#[derive(Args)]
struct CheckArgs {
    /// Program file (`.dpol`); bundled corpus paths such as `corpus/replay.dpol` also resolve.
    program: String,
    /// rx, hicks, bisim (nondisclosure, flowlocks), gradual, flowspecs, balliu,
    /// askarov-chong, paralocks, oracle.
    #[arg(long)]
    condition: String,
    /// Observer label; defaults to the first declared label.
    #[arg(long)]
    attacker: Option<String>,
    /// Paralocks capabilities of the attacker, comma separated.
    #[arg(long)]
    caps: Option<String>,
    /// Forgetful-attacker automaton for askarov-chong.
    #[arg(long)]
    automaton: Option<String>,
    /// Release policy for balliu: equiv, timetrans or direct.
    #[arg(long, default_value = "equiv")]
    release_policy: String,
    /// Relations hicks quantifies over.
    #[arg(long, value_enum, default_value_t = Relations::Reachable)]
    relations: Relations,
    /// Observation model for balliu.
    #[arg(long, value_enum, default_value_t = Model::Assign)]
    model: Model,
    /// Override the program's value domain, `LO..HI`.
    #[arg(long)]
    domain: Option<String>,
    /// Run on the program as written, without rewriting it into the condition's idiom.
    #[arg(long)]
    raw: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TableArgs {
    /// Restrict to a group (ni, bi, epistemic) or a single condition.
    #[arg(long)]
    only: Option<String>,
    /// Compare against this golden file instead of the bundled one.
    #[arg(long)]
    golden: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SchemeArgs {
    /// Scheme file (JSON).
    scheme: String,
    /// Global invariant: a formula, or a file holding one.
    #[arg(long, group = "op")]
    global: Option<String>,
    /// Filter for a conditional invariant; combine with `--global`.
    #[arg(long, requires = "global")]
    when: Option<String>,
    /// Sequence invariant: a formula, or a file holding one.
    #[arg(long, group = "op")]
    seq: Option<String>,
    /// Scheme to embed into SCHEME.
    #[arg(long, group = "op", requires = "map")]
    embed: Option<String>,
    /// Label map of the embedding, `Embedded=Host,...`.
    #[arg(long)]
    map: Option<String>,
    /// State map of the embedding; inferred from the relations when absent.
    #[arg(long)]
    state_map: Option<String>,
    /// List the reachable discriminator sequences.
    #[arg(long, group = "op")]
    sequences: bool,
    /// Longest discriminator sequence explored.
    #[arg(long, default_value_t = 8)]
    depth: usize,
    /// Also write the JSON report to this path.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Print the JSON report instead of the human summary.
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
}

#[derive(Args)]
struct CorpusArgs {
    /// Print one file instead of the listing.
    #[arg(long)]
    show: Option<String>,
}

/// Reads a file, falling back to the bundled corpus for paths under `corpus/`.
fn read(path: &str) -> anyhow::Result<String> {
    if Path::new(path).exists() {
        return std::fs::read_to_string(path).with_context(|| format!("reading {path}"));
    }
    let rel = path.trim_start_matches("./");
    let rel = rel.strip_prefix("corpus/").unwrap_or(rel);
    let rel = rel.strip_prefix(&format!("{}/", corpus::VERSION)).unwrap_or(rel);
    corpus::source(rel)
        .map(str::to_string)
        .ok_or_else(|| usage(format!("no such file: {path}")))
}

/// A formula given inline or as a file.
fn formula(arg: &str) -> anyhow::Result<Formula> {
    let text = if Path::new(arg).exists() || corpus::source(arg).is_some() {
        read(arg)?
    } else {
        arg.to_string()
    };
    Ok(Formula::parse(&text)?)
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn emit<T: Serialize>(report: &T, started: Instant, json: &Option<PathBuf>, format: Format) -> anyhow::Result<()> {
    let doc = json!({
        "report": report,
        "timing_ms": started.elapsed().as_millis() as u64,
    });
    let text = serde_json::to_string_pretty(&doc)?;
    if let Some(path) = json {
        std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
    }
    if format == Format::Json {
        println!("{text}");
    }
    Ok(())
}

fn load_program(args: &CheckArgs) -> anyhow::Result<Program> {
    let src = read(&args.program)?;
    let mut program = parse(&src).map_err(|e| usage(format!("{}: {e}", args.program)))?;
    if let Some(d) = &args.domain {
        let (lo, hi) = d
            .split_once("..")
            .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
            .ok_or_else(|| usage(format!("--domain expects LO..HI, got `{d}`")))?;
        program.domain = Domain::new(lo, hi).ok_or_else(|| usage(format!("empty domain {d}")))?;
        // Reparse so constants are checked against the new domain.
        program = parse(&print(&program)).map_err(|e| usage(format!("{}: {e}", args.program)))?;
    }
    Ok(program)
}

#[derive(Serialize)]
struct CheckReport {
    command: &'static str,
    program: String,
    condition: String,
    attacker: Option<String>,
    /// Rewrite applied before checking, if any.
    encoding: Option<&'static str>,
    verdict: Verdict,
}

fn cmd_check(args: CheckArgs) -> anyhow::Result<u8> {
    let started = Instant::now();
    let program = load_program(&args)?;
    let limits = Limits::with_budget(args.common.budget);
    let level = match &args.attacker {
        Some(name) => program
            .label_id(name)
            .ok_or_else(|| usage(format!("unknown attacker label `{name}`")))?,
        None => program
            .label_ids()
            .next()
            .ok_or_else(|| usage("program declares no labels"))?,
    };
    let mut attacker = Attacker::at(level);
    if let Some(caps) = &args.caps {
        let locks = caps
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|l| {
                program
                    .lock_id(l.trim())
                    .ok_or_else(|| usage(format!("unknown lock `{}`", l.trim())))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        attacker = attacker.with_capabilities(locks);
    }
    let model = match args.model {
        Model::Assign => ObservationModel::AssignEvents,
        Model::Store => ObservationModel::StoreProjection,
    };
    let release = ReleasePolicy::from_short_name(&args.release_policy)
        .ok_or_else(|| usage(format!("unknown release policy `{}`", args.release_policy)))?;
    let changes_policy = program.body.contains_policy_change();

    let mut encoding = None;
    let mut shown_attacker = Some(program.label_name(level).to_string());
    let verdict = match args.condition.as_str() {
        "rx" => check_rx(&program, &attacker, limits)?,
        "hicks" => {
            let rels: Vec<FlowRelation> = match args.relations {
                Relations::Reachable => reachable_relations(&program).into_iter().collect(),
                Relations::All => all_relations(&program)?,
            };
            check_fixed_policy_ni(&program, &attacker, &rels, limits)?
        }
        "bisim" | "nondisclosure" | "flowlocks" => check_strong_bisimulation(&program, &attacker, limits)?,
        "gradual" | "flowspecs" => {
            let two_level =
                program.labels.len() == 2 && program.label_id("Low").is_some() && program.label_id("High").is_some();
            let p = if !two_level && !args.raw {
                encoding = Some("declassify-form");
                declassify_form(&program, level)?
            } else {
                shown_attacker = Some("Low".into());
                program.clone()
            };
            if args.condition == "gradual" {
                check_gradual_release(&p, limits)?
            } else {
                check_flowspecs(&p, &default_flowspecs(&p), limits)?
            }
        }
        "balliu" | "epistemic" => check_epistemic(&program, &attacker, model, release, limits)?,
        "askarov-chong" | "forgetful" => {
            let mut attackers = vec![attacker.clone()];
            if let Some(path) = &args.automaton {
                let aut = ForgetfulAutomaton::parse(&read(path)?)?;
                attackers.push(attacker.clone().with_automaton(aut));
            }
            check_forgetful(&program, &attackers, limits)?
        }
        "paralocks" => {
            let p = if program.locks.is_empty() && changes_policy && !args.raw {
                encoding = Some("lock-form");
                lock_form(&program)?
            } else {
                program.clone()
            };
            if args.attacker.is_some() || args.caps.is_some() {
                check_paralocks_for(&p, &[attacker], limits)?
            } else {
                shown_attacker = None;
                check_paralocks(&p, limits)?
            }
        }
        "oracle" => check_two_run_ni_oracle(&program, &attacker, &FlowRelation::new(), limits)?,
        other => return Err(usage(format!("unknown condition `{other}`"))),
    };
    let verdict = verdict.named(args.program.clone());
    let status = verdict.status;
    if args.common.format == Format::Human {
        println!(
            "{}: {} under {} is {:?}",
            args.program,
            args.condition,
            shown_attacker.as_deref().unwrap_or("every actor"),
            status
        );
        if let Some(e) = encoding {
            println!("  checked in {e}");
        }
        if let Some(w) = &verdict.witness {
            println!("  witness: {}", serde_json::to_string(w)?);
        }
        if verdict.budget_tainted {
            println!("  some runs hit the step budget");
        }
    }
    let report = CheckReport {
        command: "check",
        program: args.program.clone(),
        condition: args.condition.clone(),
        attacker: shown_attacker,
        encoding,
        verdict,
    };
    emit(&report, started, &args.common.json, args.common.format)?;
    Ok(match status {
        Status::Secure => 0,
        Status::Insecure => 1,
        Status::Unknown => 2,
    })
}

fn render_table(table: &Table) -> String {
    let mut out = format!("{:<10} {:<22}", "Group", "Condition");
    for f in Facet::TABLE {
        out.push_str(&format!(" {:<4}", f.name()));
    }
    out.truncate(out.trim_end().len());
    out.push('\n');
    let mut last = None;
    for row in &table.rows {
        let group = if last == Some(row.group) { "" } else { row.group.name() };
        last = Some(row.group);
        out.push_str(&format!("{:<10} {:<22}", group, row.title));
        for f in Facet::TABLE {
            out.push_str(&format!(" {:<4}", row.cells[&f].mark.symbol()));
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
    }
    out
}

fn cmd_table(args: TableArgs) -> anyhow::Result<u8> {
    let started = Instant::now();
    let rows = facets::select(args.only.as_deref()).map_err(|e| usage(e.to_string()))?;
    let table = facets::reproduce_table(Limits::with_budget(args.common.budget), &rows)?;
    let golden = match &args.golden {
        Some(path) => serde_json::from_str(&read(path)?).with_context(|| format!("parsing {path}"))?,
        None => facets::golden()?,
    };
    let mismatches = facets::diff(&table, &golden);
    if args.common.format == Format::Human {
        print!("{}", render_table(&table));
        for m in &mismatches {
            println!(
                "MISMATCH {} {}: expected {}, got {} (secure under {:?}, insecure under {:?})",
                m.condition, m.facet, m.expected, m.actual.mark, m.actual.secure, m.actual.insecure
            );
        }
    }
    let report = json!({ "command": "table", "table": table, "mismatches": mismatches });
    emit(&report, started, &args.common.json, args.common.format)?;
    Ok(if mismatches.is_empty() { 0 } else { 1 })
}

fn cmd_scheme(args: SchemeArgs) -> anyhow::Result<u8> {
    let started = Instant::now();
    let host = PolicyScheme::from_json(&read(&args.scheme)?)?;
    let human = args.format == Format::Human;
    let (report, holds) = if let Some(g) = &args.global {
        let phi = formula(g)?;
        let (kind, o) = match &args.when {
            Some(w) => (
                "conditional",
                scheme::check_conditional_invariant(&host, &formula(w)?, &phi, args.depth)?,
            ),
            None => ("global", scheme::check_global_invariant(&host, &phi, args.depth)?),
        };
        (
            json!({ "command": "scheme", "check": kind, "formula": phi.to_string(), "outcome": o }),
            o.holds,
        )
    } else if let Some(s) = &args.seq {
        let phi = formula(s)?;
        let o = scheme::check_sequence_invariant(&host, &phi, args.depth)?;
        (
            json!({ "command": "scheme", "check": "sequence", "formula": phi.to_string(), "outcome": o }),
            o.holds,
        )
    } else if let Some(e) = &args.embed {
        let embedded = PolicyScheme::from_json(&read(e)?)?;
        let label_map = Embedding::parse_map(args.map.as_deref().unwrap_or_default())?;
        let state_map = match &args.state_map {
            Some(m) => Embedding::parse_map(m)?,
            None => scheme::infer_state_map(&embedded, &host, &label_map)?,
        };
        let emb = Embedding { label_map, state_map };
        let o = scheme::check_embedding(&embedded, &host, &emb, args.depth)?;
        let report = json!({
            "command": "scheme",
            "check": "embedding",
            "labelMap": emb.label_map,
            "stateMap": emb.state_map,
            "outcome": o,
        });
        (report, o.holds)
    } else if args.sequences {
        let seqs: Vec<Vec<&str>> = scheme::reachable_sequences(&host, args.depth)?
            .into_iter()
            .map(|s| s.into_iter().map(|i| host.states[i].as_str()).collect())
            .collect();
        if human {
            for s in &seqs {
                println!("{}", s.join(" . "));
            }
        }
        (
            json!({ "command": "scheme", "check": "sequences", "sequences": seqs }),
            true,
        )
    } else {
        return Err(usage("scheme needs one of --global, --seq, --embed or --sequences"));
    };
    if human && !args.sequences {
        let o = &report["outcome"];
        println!(
            "{} {}: {} (depth {}, {})",
            args.scheme,
            report["check"].as_str().unwrap_or_default(),
            if holds { "holds" } else { "fails" },
            args.depth,
            if o["saturated"].as_bool() == Some(true) {
                "saturated"
            } else {
                "depth-limited"
            }
        );
        if let Some(c) = o["clause"].as_u64() {
            println!("  clause {c}: {}", o["reason"].as_str().unwrap_or_default());
        }
        for key in ["counterexample", "witness"] {
            if let Some(path) = o[key].as_array() {
                let steps: Vec<String> = path
                    .iter()
                    .map(|p| {
                        let rel: Vec<&str> = p["relation"]
                            .as_array()
                            .into_iter()
                            .flatten()
                            .filter_map(|r| r.as_str())
                            .collect();
                        format!("{} {{{}}}", p["state"].as_str().unwrap_or_default(), rel.join(", "))
                    })
                    .collect();
                println!("  {key}: {}", steps.join(" . "));
            }
        }
    }
    emit(&report, started, &args.json, args.format)?;
    Ok(if holds { 0 } else { 1 })
}

fn cmd_corpus(args: CorpusArgs) -> anyhow::Result<u8> {
    if let Some(name) = &args.show {
        print!("{}", read(name)?);
        return Ok(0);
    }
    let mut out = String::new();
    for (name, text) in corpus::FILES {
        let detail = if name.ends_with(".dpol") {
            let p = parse(text)?;
            let facet = Facet::ALL
                .into_iter()
                .find(|f| facets::canonical_program(*f).is_ok_and(|fp| fp.program == p))
                .map(|f| format!(" facet {f}"))
                .unwrap_or_default();
            format!("labels {}{facet}", p.labels.join(","))
        } else {
            String::new()
        };
        out.push_str(&format!("{}/{name}\t{detail}\n", corpus::VERSION));
    }
    // A closed pipe (`| head`) is not an error.
    let _ = std::io::stdout().write_all(out.as_bytes());
    Ok(0)
}

fn run() -> anyhow::Result<u8> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return Ok(code);
        }
    };
    match cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Table(a) => cmd_table(a),
        Command::Scheme(a) => cmd_scheme(a),
        Command::CorpusList(a) => cmd_corpus(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = if e.downcast_ref::<Usage>().is_some()
                || matches!(
                    e.downcast_ref::<flowfacets::Error>(),
                    Some(flowfacets::Error::Syntax { .. } | flowfacets::Error::Undeclared { .. })
                ) {
                EXIT_USAGE
            } else {
                EXIT_ERROR
            };
            ExitCode::from(code)
        }
    }
}
