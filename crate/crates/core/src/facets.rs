//! Facet programs and the classification of conditions along them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::conditions::{
    check_epistemic, check_fixed_policy_ni, check_flowspecs, check_forgetful, check_gradual_release, check_paralocks,
    check_rx, check_strong_bisimulation, default_flowspecs, reachable_relations, Limits, ReleasePolicy, Status,
    Verdict,
};
use crate::corpus;
use crate::error::{Error, Result};
use crate::knowledge::{ObservationModel, Universe};
use crate::lang::{parse, Interpreter, LabelId, LockId, Program, VarId};
use crate::policy::{Attacker, ForgetfulAutomaton};
use crate::transform::{declassify_form, guard_form, lock_form};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Facet {
    T,
    R,
    WR,
    D,
    W,
}

impl Facet {
    pub const ALL: [Facet; 5] = [Facet::T, Facet::R, Facet::WR, Facet::D, Facet::W];
    /// The facets the table classifies; weak replay is corpus-only.
    pub const TABLE: [Facet; 4] = [Facet::T, Facet::R, Facet::D, Facet::W];

    pub fn name(self) -> &'static str {
        match self {
            Facet::T => "T",
            Facet::R => "R",
            Facet::WR => "WR",
            Facet::D => "D",
            Facet::W => "W",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Facet::T => "time-transitive flow",
            Facet::R => "replaying flow",
            Facet::WR => "weak replay",
            Facet::D => "direct release",
            Facet::W => "whitelisting",
        }
    }

    fn file(self) -> &'static str {
        match self {
            Facet::T => "time_transitive.dpol",
            Facet::R => "replay.dpol",
            Facet::WR => "weak_replay.dpol",
            Facet::D => "direct_release.dpol",
            Facet::W => "whitelisting.dpol",
        }
    }

    fn observer(self) -> &'static str {
        match self {
            Facet::W => "P",
            _ => "A",
        }
    }
}

impl fmt::Display for Facet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Facet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Facet::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownFacet(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    NI,
    BI,
    Epistemic,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::NI => "NI",
            Group::BI => "BI",
            Group::Epistemic => "Epistemic",
        }
    }
}

/// A row of the table: a condition together with its fixed parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    Rx,
    Hicks,
    NonDisclosure,
    FlowLocks,
    GradualRelease,
    Flowspecs,
    /// All three release policies; parameter-dependent cells are `+/-`.
    Balliu,
    BalliuWith(ReleasePolicy),
    AskarovChong,
    Paralocks,
}

impl Condition {
    pub const ALL: [Condition; 12] = [
        Condition::Rx,
        Condition::Hicks,
        Condition::NonDisclosure,
        Condition::FlowLocks,
        Condition::GradualRelease,
        Condition::Flowspecs,
        Condition::Balliu,
        Condition::BalliuWith(ReleasePolicy::EquivalenceNow),
        Condition::BalliuWith(ReleasePolicy::TimeTransitiveAllowing),
        Condition::BalliuWith(ReleasePolicy::DirectReleaseAllowing),
        Condition::AskarovChong,
        Condition::Paralocks,
    ];

    pub fn name(self) -> String {
        match self {
            Condition::Rx => "rx".into(),
            Condition::Hicks => "hicks".into(),
            Condition::NonDisclosure => "nondisclosure".into(),
            Condition::FlowLocks => "flowlocks".into(),
            Condition::GradualRelease => "gradual".into(),
            Condition::Flowspecs => "flowspecs".into(),
            Condition::Balliu => "balliu".into(),
            Condition::BalliuWith(p) => format!("balliu-{p}"),
            Condition::AskarovChong => "askarov-chong".into(),
            Condition::Paralocks => "paralocks".into(),
        }
    }

    pub fn title(self) -> String {
        match self {
            Condition::Rx => "Rx".into(),
            Condition::Hicks => "Hicks et al.".into(),
            Condition::NonDisclosure => "Non-disclosure".into(),
            Condition::FlowLocks => "Flow Locks".into(),
            Condition::GradualRelease => "Gradual Release".into(),
            Condition::Flowspecs => "Flowspecs".into(),
            Condition::Balliu => "Balliu".into(),
            Condition::BalliuWith(p) => format!("  release: {p}"),
            Condition::AskarovChong => "Askarov-Chong".into(),
            Condition::Paralocks => "Paralocks".into(),
        }
    }

    pub fn group(self) -> Group {
        match self {
            Condition::Rx | Condition::Hicks => Group::NI,
            Condition::NonDisclosure | Condition::FlowLocks => Group::BI,
            _ => Group::Epistemic,
        }
    }

    pub fn from_name(name: &str) -> Option<Condition> {
        Condition::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Key into [`FacetProgram::variants`] for conditions that read a rewritten program.
    fn variant_key(self) -> Option<&'static str> {
        match self {
            Condition::Rx => Some("restart"),
            Condition::Hicks => Some("guard-form"),
            Condition::GradualRelease | Condition::Flowspecs => Some("declassify-form"),
            Condition::Paralocks => Some("lock-form"),
            _ => None,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mark {
    Plus,
    Minus,
    /// Depends on the parameterisation.
    Mixed,
    NotApplicable,
}

impl Mark {
    pub fn symbol(self) -> &'static str {
        match self {
            Mark::Plus => "+",
            Mark::Minus => "-",
            Mark::Mixed => "+/-",
            Mark::NotApplicable => "N/A",
        }
    }
}

impl fmt::Display for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Mark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" => Ok(Mark::Plus),
            "-" => Ok(Mark::Minus),
            "+/-" => Ok(Mark::Mixed),
            "N/A" => Ok(Mark::NotApplicable),
            _ => Err(Error::Transform(format!("unknown mark `{s}`"))),
        }
    }
}

impl Serialize for Mark {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.symbol())
    }
}

/// One classified cell, with the parameterisations behind each verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cell {
    pub mark: Mark,
    pub secure: Vec<String>,
    pub insecure: Vec<String>,
}

impl Cell {
    fn not_applicable() -> Self {
        Cell {
            mark: Mark::NotApplicable,
            secure: vec![],
            insecure: vec![],
        }
    }

    fn from_runs(runs: &[(String, Status)]) -> Self {
        let pick = |st: Status| {
            runs.iter()
                .filter(|(_, s)| *s == st)
                .map(|(n, _)| n.clone())
                .collect::<Vec<_>>()
        };
        let (secure, insecure) = (pick(Status::Secure), pick(Status::Insecure));
        let mark = match (secure.is_empty(), insecure.is_empty()) {
            (false, true) => Mark::Plus,
            (true, false) => Mark::Minus,
            _ => Mark::Mixed,
        };
        Cell { mark, secure, insecure }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Row {
    pub condition: String,
    pub title: String,
    pub group: Group,
    pub cells: BTreeMap<Facet, Cell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Table {
    pub rows: Vec<Row>,
}

/// A facet's canonical program with the rewrites some conditions read instead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FacetProgram {
    pub facet: Facet,
    pub program: Program,
    /// Rewritten encodings keyed by idiom: `guard-form`, `lock-form`,
    /// `declassify-form`, and `restart` for restart-based conditions.
    pub variants: BTreeMap<String, Program>,
    /// Expected mark per condition name, from the golden table.
    pub expected: BTreeMap<String, Mark>,
    /// Label of the observer the verdicts are about.
    pub observer: LabelId,
}

impl FacetProgram {
    /// The program `condition` is run on.
    pub fn program_for(&self, condition: Condition) -> &Program {
        condition
            .variant_key()
            .and_then(|k| self.variants.get(k))
            .unwrap_or(&self.program)
    }
}

fn load(name: &str) -> Result<Program> {
    parse(corpus::source(name).ok_or_else(|| Error::Transform(format!("missing corpus file {name}")))?)
}

/// The corpus entry for `facet`.
pub fn canonical_program(facet: Facet) -> Result<FacetProgram> {
    let program = load(facet.file())?;
    let observer = program
        .label_id(facet.observer())
        .ok_or_else(|| Error::UnknownLabel(facet.observer().into()))?;
    let mut variants = BTreeMap::new();
    variants.insert("guard-form".to_string(), guard_form(&program)?);
    variants.insert("lock-form".to_string(), lock_form(&program)?);
    variants.insert("declassify-form".to_string(), declassify_form(&program, observer)?);
    if facet == Facet::R {
        variants.insert("restart".to_string(), load("replay_rx.dpol")?);
    }
    let expected = golden()?
        .rows
        .iter()
        .filter_map(|r| r.cells.get(facet.name()).map(|m| (r.condition.clone(), *m)))
        .collect();
    Ok(FacetProgram {
        facet,
        program,
        variants,
        expected,
        observer,
    })
}

/// Parameterisations of `condition`, each run on the facet program.
fn runs(condition: Condition, fp: &FacetProgram, limits: Limits) -> Result<Option<Vec<(String, Verdict)>>> {
    let program = fp.program_for(condition);
    let attacker = Attacker::at(fp.observer);
    let one = |v: Verdict| Ok(Some(vec![(condition.name(), v)]));
    match condition {
        Condition::Rx => one(check_rx(program, &attacker, limits)?),
        Condition::Hicks => {
            let rels: Vec<_> = reachable_relations(program).into_iter().collect();
            one(check_fixed_policy_ni(program, &attacker, &rels, limits)?)
        }
        Condition::NonDisclosure | Condition::FlowLocks => one(check_strong_bisimulation(program, &attacker, limits)?),
        // Two levels only: a third level cannot be expressed.
        Condition::GradualRelease | Condition::Flowspecs if fp.facet == Facet::T => Ok(None),
        Condition::GradualRelease => one(check_gradual_release(program, limits)?),
        Condition::Flowspecs => one(check_flowspecs(program, &default_flowspecs(program), limits)?),
        Condition::Balliu => ReleasePolicy::ALL
            .into_iter()
            .map(|p| {
                let v = check_epistemic(program, &attacker, ObservationModel::AssignEvents, p, limits)?;
                Ok((p.short_name().to_string(), v))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some),
        Condition::BalliuWith(p) => one(check_epistemic(
            program,
            &attacker,
            ObservationModel::AssignEvents,
            p,
            limits,
        )?),
        Condition::AskarovChong => {
            let alphabet: Vec<i64> = program.domain.values().collect();
            let forgetful = attacker
                .clone()
                .with_automaton(ForgetfulAutomaton::forget_first(&alphabet, 4));
            Ok(Some(vec![
                (
                    "perfect-recall".into(),
                    check_forgetful(program, std::slice::from_ref(&attacker), limits)?,
                ),
                (
                    "perfect-recall+forget-first".into(),
                    check_forgetful(program, &[attacker.clone(), forgetful], limits)?,
                ),
            ]))
        }
        Condition::Paralocks => one(check_paralocks(program, limits)?),
    }
}

/// Classifies `condition` on every table facet. An Unknown verdict is an error.
pub fn classify(condition: Condition, limits: Limits) -> Result<Row> {
    let mut cells = BTreeMap::new();
    for facet in Facet::TABLE {
        let fp = canonical_program(facet)?;
        let cell = match runs(condition, &fp, limits)? {
            None => Cell::not_applicable(),
            Some(runs) => {
                if runs.iter().any(|(_, v)| v.status == Status::Unknown) {
                    return Err(Error::Classification {
                        condition: condition.name(),
                        facet: facet.name().into(),
                    });
                }
                let statuses: Vec<_> = runs.into_iter().map(|(n, v)| (n, v.status)).collect();
                Cell::from_runs(&statuses)
            }
        };
        cells.insert(facet, cell);
    }
    Ok(Row {
        condition: condition.name(),
        title: condition.title(),
        group: condition.group(),
        cells,
    })
}

/// Selects rows by group (`ni`, `bi`, `epistemic`) or condition name.
pub fn select(only: Option<&str>) -> Result<Vec<Condition>> {
    let Some(only) = only else {
        return Ok(Condition::ALL.to_vec());
    };
    let rows: Vec<_> = Condition::ALL
        .into_iter()
        .filter(|c| c.group().name().eq_ignore_ascii_case(only) || c.name() == only)
        .collect();
    if rows.is_empty() {
        return Err(Error::Transform(format!("no table rows match `{only}`")));
    }
    Ok(rows)
}

/// Classifies every selected row; rows run in parallel and are assembled in table order.
pub fn reproduce_table(limits: Limits, conditions: &[Condition]) -> Result<Table> {
    let rows = std::thread::scope(|s| {
        let handles: Vec<_> = conditions
            .iter()
            .map(|c| s.spawn(move || classify(*c, limits)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("classification thread panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(Table { rows })
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct GoldenRow {
    pub group: Group,
    pub condition: String,
    pub title: String,
    #[serde(deserialize_with = "marks")]
    pub cells: BTreeMap<String, Mark>,
}

fn marks<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<String, Mark>, D::Error> {
    let raw = BTreeMap::<String, String>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| v.parse().map(|m| (k, m)).map_err(serde::de::Error::custom))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Golden {
    pub facets: Vec<String>,
    pub rows: Vec<GoldenRow>,
}

/// The expected table shipped with the corpus.
pub fn golden() -> Result<Golden> {
    let text = corpus::source("table1.json").expect("golden table is bundled");
    serde_json::from_str(text).map_err(|e| Error::Transform(format!("golden table: {e}")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub condition: String,
    pub facet: Facet,
    pub expected: Mark,
    pub actual: Cell,
}

/// Cells of `table` that disagree with `golden`. Rows absent from `golden` are skipped.
pub fn diff(table: &Table, golden: &Golden) -> Vec<Mismatch> {
    let mut out = Vec::new();
    for row in &table.rows {
        let Some(g) = golden.rows.iter().find(|g| g.condition == row.condition) else {
            continue;
        };
        for (facet, cell) in &row.cells {
            if let Some(expected) = g.cells.get(facet.name()) {
                if *expected != cell.mark {
                    out.push(Mismatch {
                        condition: row.condition.clone(),
                        facet: *facet,
                        expected: *expected,
                        actual: cell.clone(),
                    });
                }
            }
        }
    }
    out
}

/// The policy-relevant shape of one event: who is written, under which
/// relation and locks, and whether it is a release.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventShape {
    pub target: VarId,
    pub relation: Vec<(LabelId, LabelId)>,
    pub open_locks: BTreeSet<LockId>,
    pub release: bool,
}

/// Event shapes of the run from every initial store, by index.
pub fn skeleton(program: &Program, limits: Limits) -> Result<Vec<Vec<EventShape>>> {
    let interp = Interpreter::new(program);
    let universe = Universe::enumerate(program, limits.universe_cap)?;
    Ok(universe
        .iter()
        .map(|s| {
            interp
                .run(interp.initial_store(s.to_vec()), limits.budget)
                .events
                .iter()
                .map(|e| EventShape {
                    target: e.target,
                    relation: e.policy.relation.pairs().collect(),
                    open_locks: e.policy.open_locks.clone(),
                    release: e.release,
                })
                .collect()
        })
        .collect())
}

/// The two application contexts given for each facet: the same code under
/// different names, one where the flow is wanted and one where it is not.
pub const CONTEXT_PAIRS: [(Facet, &str, &str); 5] = [
    (Facet::T, "contexts/t_sanitiser.dpol", "contexts/t_hospital.dpol"),
    (Facet::R, "contexts/r_nsa.dpol", "contexts/r_creditcard.dpol"),
    (Facet::WR, "contexts/wr_log.dpol", "contexts/wr_ezine.dpol"),
    (Facet::D, "contexts/d_app.dpol", "contexts/d_salary.dpol"),
    (Facet::W, "contexts/w_key.dpol", "contexts/w_report.dpol"),
];

/// Whether the two contexts of a facet have identical event skeletons.
pub fn contexts_agree(facet: Facet, limits: Limits) -> Result<bool> {
    let (_, a, b) = CONTEXT_PAIRS
        .iter()
        .find(|(f, _, _)| *f == facet)
        .expect("every facet has a context pair");
    Ok(skeleton(&load(a)?, limits)? == skeleton(&load(b)?, limits)?)
}
