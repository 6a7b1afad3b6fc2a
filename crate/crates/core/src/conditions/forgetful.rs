use super::epistemic::check_epistemic_with;
use super::{Limits, Status, Verdict};
use crate::error::Result;
use crate::knowledge::ObservationModel;
use crate::lang::Program;
use crate::policy::Attacker;
use crate::ReleasePolicy;

/// Every supplied attacker, perfect-recall or forgetful, may only learn what
/// the current relation lets it see. The first insecure attacker decides.
pub fn check_forgetful(program: &Program, attackers: &[Attacker], limits: Limits) -> Result<Verdict> {
    let mut result: Option<Verdict> = None;
    for attacker in attackers {
        let v = check_epistemic_with(
            program,
            attacker,
            ObservationModel::AssignEvents,
            ReleasePolicy::EquivalenceNow,
            limits,
            "askarov-chong",
        )?;
        match v.status {
            Status::Insecure => return Ok(v),
            Status::Unknown => {
                result.get_or_insert(v);
            }
            Status::Secure => {
                if result.is_none() {
                    result = Some(v);
                }
            }
        }
    }
    Ok(result.unwrap_or_else(|| super::Search::new("askarov-chong").finish()))
}
