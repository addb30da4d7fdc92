//! (1,2)-consistency: the canonical symmetric Datalog program over the unary
//! domain predicates, evaluated as support-based pruning to a fixpoint.
//!
//! A value `a` leaves `P_x` exactly when some rule instance
//! `R_x(a) <- E_{y,x}(b, a), R_y(b)` can no longer fire for any `b`; the
//! removal log records the neighbour `y` that witnessed the lost support.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::structures::{check_syntactic_simplicity, BinaryInstance, PairSet, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PropagateError {
    #[error("malformed binary instance: {0}")]
    Malformed(String),
    #[error("scan order must be a permutation of the variables")]
    BadOrder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    SatPossible,
    Empty,
}

/// One derived fact: `value` was removed from `var` because `E_{var,support}`
/// offers it no partner in `P_support`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Removal {
    pub var: usize,
    pub value: Value,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropagationResult {
    pub status: Status,
    pub reduced: BinaryInstance,
    pub removal_log: Vec<Removal>,
}

impl PropagationResult {
    pub fn is_empty(&self) -> bool {
        self.status == Status::Empty
    }
}

/// Runs the fixpoint with the canonical scan order (ascending variables).
pub fn run_12_consistency(graph: &BinaryInstance) -> Result<PropagationResult, PropagateError> {
    let order: Vec<usize> = (0..graph.num_vars()).collect();
    run_with_order(graph, &order)
}

/// Runs the fixpoint scanning variables (and neighbours) in `order`; values
/// are always scanned in ascending order.
pub fn run_with_order(graph: &BinaryInstance, order: &[usize]) -> Result<PropagationResult, PropagateError> {
    let report = check_syntactic_simplicity(graph);
    if !report.is_empty() {
        let text: Vec<String> = report.iter().map(ToString::to_string).collect();
        return Err(PropagateError::Malformed(text.join("; ")));
    }
    let n = graph.num_vars();
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(PropagateError::BadOrder);
    }
    Ok(propagate_unchecked(graph.clone(), order))
}

/// The fixpoint loop without input validation; used internally on instances
/// that are syntactically simple by construction.
pub(crate) fn propagate_unchecked(mut graph: BinaryInstance, order: &[usize]) -> PropagationResult {
    let n = graph.num_vars();
    let mut domains: Vec<BTreeSet<Value>> = graph.domains().to_vec();
    let mut log = Vec::new();
    let mut empty = domains.iter().any(BTreeSet::is_empty);
    let mut changed = true;
    while changed && !empty {
        changed = false;
        for &x in order {
            let values: Vec<Value> = domains[x].iter().copied().collect();
            for a in values {
                let lost = order
                    .iter()
                    .copied()
                    .filter(|&y| y != x)
                    .find(|&y| !has_support(graph.constraint(x, y), a, &domains[y]));
                if let Some(y) = lost {
                    domains[x].remove(&a);
                    log.push(Removal { var: x, value: a, support: y });
                    changed = true;
                }
            }
            if domains[x].is_empty() {
                empty = true;
                break;
            }
        }
    }
    for (x, d) in domains.iter().enumerate() {
        if d.len() != graph.domain(x).len() {
            graph.restrict_domain(x, d);
        }
    }
    debug_assert!(n == graph.num_vars());
    PropagationResult {
        status: if empty { Status::Empty } else { Status::SatPossible },
        reduced: graph,
        removal_log: log,
    }
}

fn has_support(constraint: &PairSet, a: Value, target: &BTreeSet<Value>) -> bool {
    constraint.range((a, 0)..=(a, Value::MAX)).any(|(_, b)| target.contains(b))
}

/// Both projections of `constraint` equal the given domains.
pub fn is_subdirect(constraint: &PairSet, left: &BTreeSet<Value>, right: &BTreeSet<Value>) -> bool {
    let l: BTreeSet<Value> = constraint.iter().map(|&(a, _)| a).collect();
    let r: BTreeSet<Value> = constraint.iter().map(|&(_, b)| b).collect();
    &l == left && &r == right
}

/// True iff every constraint of the instance is subdirect.
pub fn all_subdirect(graph: &BinaryInstance) -> bool {
    let n = graph.num_vars();
    (0..n).all(|x| (0..n).all(|y| is_subdirect(graph.constraint(x, y), graph.domain(x), graph.domain(y))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[Value]) -> BTreeSet<Value> {
        v.iter().copied().collect()
    }

    fn pairs(v: &[(Value, Value)]) -> PairSet {
        v.iter().copied().collect()
    }

    #[test]
    fn single_pair_constraint() {
        let mut g = BinaryInstance::unconstrained(2, vec![set(&[0, 1]); 2]);
        g.set_constraint(0, 1, pairs(&[(0, 1)]));
        let r = run_12_consistency(&g).unwrap();
        assert_eq!(r.status, Status::SatPossible);
        assert_eq!(r.reduced.domain(0), &set(&[0]));
        assert_eq!(r.reduced.domain(1), &set(&[1]));
        assert_eq!(r.reduced.constraint(0, 1), &pairs(&[(0, 1)]));
        assert!(all_subdirect(&r.reduced));
    }

    #[test]
    fn chain_of_removals() {
        let mut g = BinaryInstance::unconstrained(2, vec![set(&[0, 1]); 3]);
        g.set_constraint(0, 1, pairs(&[(0, 1), (1, 0)]));
        g.set_constraint(1, 2, pairs(&[(0, 0)]));
        let r = run_12_consistency(&g).unwrap();
        assert_eq!(r.status, Status::SatPossible);
        assert_eq!(r.reduced.domain(0), &set(&[1]));
        assert_eq!(r.reduced.domain(1), &set(&[0]));
        assert_eq!(r.reduced.domain(2), &set(&[0]));
        // value 1 of P_2 loses its support in E_{2,3} before P_1 shrinks
        assert_eq!(r.removal_log[0], Removal { var: 1, value: 1, support: 2 });
    }

    #[test]
    fn empty_constraint_empties_domains() {
        let mut g = BinaryInstance::unconstrained(2, vec![set(&[0, 1]); 2]);
        g.set_constraint(0, 1, PairSet::new());
        let r = run_12_consistency(&g).unwrap();
        assert_eq!(r.status, Status::Empty);
        assert!(r.reduced.has_empty_domain());
    }

    #[test]
    fn malformed_input() {
        let g = BinaryInstance::from_raw(2, vec![set(&[0, 1])], vec![pairs(&[(0, 1)])]);
        assert!(matches!(run_12_consistency(&g), Err(PropagateError::Malformed(_))));
        let ok = BinaryInstance::unconstrained(2, vec![set(&[0, 1]); 2]);
        assert_eq!(run_with_order(&ok, &[0, 0]), Err(PropagateError::BadOrder));
    }

    #[test]
    fn subdirect_checks() {
        let full = set(&[0, 1]);
        assert!(is_subdirect(&pairs(&[(0, 1), (1, 0)]), &full, &full));
        assert!(!is_subdirect(&pairs(&[(0, 1)]), &full, &full));
        assert!(is_subdirect(&PairSet::new(), &set(&[]), &set(&[])));
    }
}
