use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },

    #[error("{line}:{col}: undeclared {kind} `{name}`")]
    Undeclared {
        kind: &'static str,
        name: String,
        line: usize,
        col: usize,
    },

    #[error("{line}:{col}: duplicate {kind} `{name}`")]
    Duplicate {
        kind: &'static str,
        name: String,
        line: usize,
        col: usize,
    },

    #[error("{line}:{col}: constant {value} is outside the domain {domain}")]
    ConstantOutOfDomain {
        value: i64,
        domain: String,
        line: usize,
        col: usize,
    },

    #[error("{line}:{col}: declassify may not be nested")]
    NestedDeclassify { line: usize, col: usize },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("store universe has {size} stores, above the cap of {cap}")]
    UniverseTooLarge { size: u128, cap: u64 },

    #[error("{locks} locks give {size} capability sets, above the cap of {cap} locks")]
    LockPowersetTooLarge { locks: usize, size: u128, cap: usize },

    #[error("condition requires exactly the two labels Low and High, found {0:?}")]
    NotTwoLevel(Vec<String>),

    #[error("program must not change the policy: {0}")]
    PolicyChange(String),

    #[error("policy is not statically determined at `{0}`")]
    DynamicPolicy(String),

    #[error("transform: {0}")]
    Transform(String),

    #[error("automaton: {0}")]
    Automaton(String),

    #[error("observed value {0} is outside the automaton alphabet")]
    OutsideAlphabet(i64),

    #[error("attacker requires a forgetful automaton")]
    MissingAutomaton,

    #[error("scheme: {0}")]
    Scheme(String),

    #[error("formula: {0}")]
    Formula(String),

    #[error("enumeration of {size} paths exceeds the cap of {cap}")]
    Explosion { size: u128, cap: u64 },

    #[error("embedding: {0}")]
    Embedding(String),

    #[error("unknown facet `{0}`")]
    UnknownFacet(String),

    #[error("facet classification failed for {condition} on {facet}: verdict Unknown (raise the budget)")]
    Classification { condition: String, facet: String },
}
