//! Security conditions for dynamic policies, each producing a [`Verdict`].

mod bisim;
mod epistemic;
mod forgetful;
mod gradual;
mod hicks;
mod oracle;
mod paralocks;
mod rx;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::lang::Program;

pub use bisim::check_strong_bisimulation;
pub use epistemic::{check_epistemic, check_epistemic_with, release_set, ReleasePolicy};
pub use forgetful::check_forgetful;
pub use gradual::{check_flowspecs, check_gradual_release, default_flowspecs, Flowspec};
pub use hicks::{all_relations, check_fixed_policy_ni, reachable_relations};
pub use oracle::check_two_run_ni_oracle;
pub use paralocks::{check_paralocks, check_paralocks_for};
pub use rx::check_rx;

/// Resource bounds shared by every checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    /// Maximum small steps per run.
    pub budget: usize,
    /// Maximum number of enumerated initial stores.
    pub universe_cap: u64,
    /// Maximum number of locks whose powerset is enumerated.
    pub lock_cap: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            budget: 1000,
            universe_cap: crate::knowledge::DEFAULT_UNIVERSE_CAP,
            lock_cap: 6,
        }
    }
}

impl Limits {
    pub fn with_budget(budget: usize) -> Self {
        Limits {
            budget,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Secure,
    Insecure,
    Unknown,
}

/// Variable values in declaration order, serialised as a JSON object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreView(pub Vec<(String, i64)>);

impl StoreView {
    pub fn new(program: &Program, values: &[i64]) -> Self {
        StoreView(
            program
                .vars
                .iter()
                .zip(values)
                .map(|(d, v)| (d.name.clone(), *v))
                .collect(),
        )
    }

    pub fn values(&self) -> Vec<i64> {
        self.0.iter().map(|(_, v)| *v).collect()
    }
}

impl Serialize for StoreView {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind")]
pub enum Witness {
    /// The run from `initial` teaches `attacker` more than allowed at event `event_index`.
    KnowledgeIncrease {
        attacker: String,
        initial: StoreView,
        event_index: usize,
        /// Initial stores newly excluded but not released.
        increase: Vec<StoreView>,
    },
    /// Two stores the attacker cannot tell apart that lead to different observations.
    DistinguishingPair {
        attacker: String,
        left_program: String,
        right_program: String,
        policy: String,
        left: StoreView,
        right: StoreView,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub condition: String,
    pub program: String,
    pub status: Status,
    pub witness: Option<Witness>,
    #[serde(rename = "budgetTainted")]
    pub budget_tainted: bool,
}

impl Verdict {
    pub fn named(mut self, program: impl Into<String>) -> Self {
        self.program = program.into();
        self
    }

    pub fn is_secure(&self) -> bool {
        self.status == Status::Secure
    }
}

/// Tracks truncation and tentative witnesses while a checker searches for a violation.
pub(crate) struct Search {
    condition: String,
    tainted: bool,
    tentative: Option<Witness>,
}

impl Search {
    pub(crate) fn new(condition: impl Into<String>) -> Self {
        Search {
            condition: condition.into(),
            tainted: false,
            tentative: None,
        }
    }

    pub(crate) fn taint(&mut self, truncated: bool) {
        self.tainted |= truncated;
    }

    /// Records a violation. Returns the final verdict if it does not depend
    /// on any truncated run.
    pub(crate) fn violation(&mut self, witness: Witness, tainted: bool) -> Option<Verdict> {
        if tainted {
            self.tainted = true;
            self.tentative.get_or_insert(witness);
            None
        } else {
            Some(self.verdict(Status::Insecure, Some(witness)))
        }
    }

    pub(crate) fn finish(mut self) -> Verdict {
        if self.tainted {
            let w = self.tentative.take();
            self.verdict(Status::Unknown, w)
        } else {
            self.verdict(Status::Secure, None)
        }
    }

    fn verdict(&self, status: Status, witness: Option<Witness>) -> Verdict {
        Verdict {
            condition: self.condition.clone(),
            program: String::new(),
            status,
            witness,
            budget_tainted: self.tainted,
        }
    }
}
