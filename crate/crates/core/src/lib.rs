pub mod conditions;
pub mod corpus;
pub mod error;
pub mod facets;
pub mod knowledge;
pub mod lang;
pub mod policy;
pub mod scheme;
pub mod transform;

pub use conditions::{Limits, ReleasePolicy, Status, Verdict, Witness};
pub use error::{Error, Result};
pub use knowledge::{KnowledgeSet, ObservationModel, Universe};
pub use lang::{parse, print, Program};
pub use policy::{Attacker, FlowRelation, ForgetfulAutomaton, ParalocksLabel, PolicyComponent};
