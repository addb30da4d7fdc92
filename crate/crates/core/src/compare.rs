//! Solver against oracle, one instance or a batch.

use std::fmt;

use crate::affine::{solve, AffineError, Algebras, Outcome, SolveOptions};
use crate::oracle::{brute_force_solve, Mode};
use crate::structures::{evaluate_assignment, Instance};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Agree { sat: bool },
    Disagree { solver: bool, oracle: bool },
    /// The oracle hit its cap; the solver's decision is still reported.
    OracleSkipped { solver: bool },
    /// The instance or algebra does not meet the solver's requirements.
    PreconditionFailed(String),
    /// The solver failed on an instance it accepted.
    SolverError(String),
}

impl Verdict {
    pub fn is_agree(&self) -> bool {
        matches!(self, Verdict::Agree { .. })
    }
}

fn word(sat: bool) -> &'static str {
    if sat {
        "SAT"
    } else {
        "UNSAT"
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Agree { sat } => write!(f, "AGREE (both {})", word(*sat)),
            Verdict::Disagree { solver, oracle } => {
                write!(f, "DISAGREE (solver {}, oracle {})", word(*solver), word(*oracle))
            }
            Verdict::OracleSkipped { solver } => write!(f, "oracle skipped (solver {})", word(*solver)),
            Verdict::PreconditionFailed(m) => write!(f, "precondition failed: {m}"),
            Verdict::SolverError(m) => write!(f, "ERROR: {m}"),
        }
    }
}

/// Runs both deciders. A SAT answer from the solver counts only if its
/// assignment satisfies the instance.
pub fn compare(instance: &Instance, algebras: &Algebras, options: &SolveOptions, oracle_cap: u64) -> Verdict {
    let solver = match solve(instance, algebras, options) {
        Ok(Outcome::Sat(a)) => match evaluate_assignment(instance, &a) {
            Ok(true) => true,
            _ => return Verdict::SolverError("assignment fails verification".into()),
        },
        Ok(Outcome::Unsat(_)) => false,
        Err(e @ (AffineError::Incomplete(_) | AffineError::VerificationFailed)) => {
            return Verdict::SolverError(e.to_string())
        }
        Err(e) => return Verdict::PreconditionFailed(e.to_string()),
    };
    let oracle = match brute_force_solve(instance, Mode::First, oracle_cap) {
        Ok(s) => s.is_satisfiable(),
        Err(_) => return Verdict::OracleSkipped { solver },
    };
    if solver == oracle {
        Verdict::Agree { sat: solver }
    } else {
        Verdict::Disagree { solver, oracle }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BatchSummary {
    pub total: usize,
    pub agree: usize,
    pub disagree: usize,
    pub skipped: usize,
    pub precondition: usize,
    pub errors: usize,
}

impl BatchSummary {
    pub fn add(&mut self, v: &Verdict) {
        self.total += 1;
        match v {
            Verdict::Agree { .. } => self.agree += 1,
            Verdict::Disagree { .. } => self.disagree += 1,
            Verdict::OracleSkipped { .. } => self.skipped += 1,
            Verdict::PreconditionFailed(_) => self.precondition += 1,
            Verdict::SolverError(_) => self.errors += 1,
        }
    }

    pub fn all_agree(&self) -> bool {
        self.agree == self.total
    }
}

impl fmt::Display for BatchSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "agreement {}/{} (disagree {}, oracle skipped {}, precondition failed {}, errors {})",
            self.agree, self.total, self.disagree, self.skipped, self.precondition, self.errors
        )
    }
}
