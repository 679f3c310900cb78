//! Command-line front end: instance files, subcommands and reports.
//!
//! Exit codes are stable:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | usage error, malformed JSON or invalid instance |
//! | 3 | mechanism error (stuck TTC, rule violation, infeasible constraints) |
//! | 4 | a requested rule or policy property fails |
//! | 5 | the diversity condition fails at the given alpha |
//! | 6 | audit finding |
//! | 7 | budget exceeded before a verdict was reached |

pub mod commands;
pub mod report;
pub mod schema;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub enum Exit {
    #[default]
    Ok,
    Input,
    Mechanism,
    PropertyFails,
    ConditionFails,
    Finding,
    Budget,
}

impl Exit {
    pub fn code(self) -> u8 {
        match self {
            Exit::Ok => 0,
            Exit::Input => 2,
            Exit::Mechanism => 3,
            Exit::PropertyFails => 4,
            Exit::ConditionFails => 5,
            Exit::Finding => 6,
            Exit::Budget => 7,
        }
    }
}
