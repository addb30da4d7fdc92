//! Type reduction through the coloured graph of each domain algebra.
//!
//! In a multisorted core no solution passes through a proper absorbing
//! subuniverse. Yellow edges make both endpoint blocks absorbing, red edges
//! make everything below a `≻`-maximal element absorbing, and a domain with
//! several `≻`-maxima is shrunk through a non-permuting polynomial. What is
//! left after the loop has only blue (affine) edges.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::algebra::{AlgebraError, Colour, FiniteAlgebra};
use crate::context::DomainAlgebras;
use crate::propagate::{propagate_unchecked, Status};
use crate::structures::{BinaryInstance, PairSet, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReduceError {
    #[error("invalid Bulatov operation {op}: {detail}")]
    InvalidBulatovOperation { op: String, detail: String },
    #[error("domain of variable {0} has red edges but its algebra names no red operation (flag redop)")]
    MissingRedOperation(usize),
    #[error("shrink inapplicable: f({c}, -) permutes the domain of variable {var}")]
    ShrinkInapplicable { var: usize, c: Value },
    #[error("shrink leaves the domain of variable {0}")]
    ShrinkNotClosed(usize),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Why a value left a domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Reason {
    /// No partner in the named neighbour.
    Propagation { support: usize },
    /// Endpoint block of the yellow edge `{a, b}`.
    Yellow { a: Value, b: Value },
    /// Lies in a `≻`-component that is not maximal.
    RedNotMaximal,
    /// Lies in a maximal `≻`-component with more than one element.
    RedLargeComponent,
    /// Outside the image of `f(c, -)` iterated to idempotence.
    Shrink { c: Value },
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reason::Propagation { support } => write!(f, "no support in variable {}", support + 1),
            Reason::Yellow { a, b } => write!(f, "endpoint block of yellow edge {{{a},{b}}}"),
            Reason::RedNotMaximal => write!(f, "below a maximal red component"),
            Reason::RedLargeComponent => write!(f, "in a maximal red component of size > 1"),
            Reason::Shrink { c } => write!(f, "outside the image of f({c}, -)"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReduceEvent {
    pub var: usize,
    pub value: Value,
    pub reason: Reason,
}

/// Removes both endpoint blocks of every yellow edge inside each domain.
pub fn eliminate_yellow(
    graph: &BinaryInstance,
    algebras: &DomainAlgebras,
) -> Result<(BinaryInstance, Vec<ReduceEvent>), ReduceError> {
    let mut out = graph.clone();
    let mut events = Vec::new();
    for x in 0..graph.num_vars() {
        let alg = algebras.for_var(x);
        let domain: Vec<Value> = graph.domain(x).iter().copied().collect();
        let mut doomed: BTreeMap<Value, (Value, Value)> = BTreeMap::new();
        for (i, &a) in domain.iter().enumerate() {
            for &b in &domain[i + 1..] {
                let edge = alg.colour(a, b)?;
                if edge.colour == Colour::Yellow {
                    for &v in edge.block_of(a).iter().chain(edge.block_of(b)) {
                        if graph.domain(x).contains(&v) {
                            doomed.entry(v).or_insert((a, b));
                        }
                    }
                }
            }
        }
        if !doomed.is_empty() {
            let keep: BTreeSet<Value> = domain.iter().copied().filter(|v| !doomed.contains_key(v)).collect();
            out.restrict_domain(x, &keep);
            events.extend(
                doomed.into_iter().map(|(value, (a, b))| ReduceEvent { var: x, value, reason: Reason::Yellow { a, b } }),
            );
        }
    }
    Ok((out, events))
}

/// The directed graph `a → b` iff `f(a,b) = f(b,a) = b`, with its strong
/// components.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RedOrientation {
    pub elements: Vec<Value>,
    pub edges: Vec<(Value, Value)>,
    /// Strong components, each sorted, listed by least element.
    pub components: Vec<Vec<Value>>,
    /// Indices into `components` of those with no incoming edge from outside.
    pub maximal: Vec<usize>,
}

impl RedOrientation {
    /// Elements forming a maximal component on their own.
    pub fn singleton_maxima(&self) -> Vec<Value> {
        self.maximal.iter().filter(|&&c| self.components[c].len() == 1).map(|&c| self.components[c][0]).collect()
    }

    fn component_of(&self, v: Value) -> usize {
        self.components.iter().position(|c| c.contains(&v)).expect("element has a component")
    }
}

/// Orients `domain` by the binary operation `f`, after checking
/// `f(x,x) = x` and `f(x, f(x,y)) = f(f(x,y), x) = f(x,y)` on it.
pub fn orient_red(algebra: &FiniteAlgebra, f: &str, domain: &BTreeSet<Value>) -> Result<RedOrientation, ReduceError> {
    let op = algebra.operation(f).ok_or_else(|| AlgebraError::UnknownOperation(f.into()))?;
    if op.arity != 2 {
        return Err(ReduceError::InvalidBulatovOperation { op: f.into(), detail: "not binary".into() });
    }
    let ap = |a: Value, b: Value| algebra.apply(f, &[a, b]);
    for &x in domain {
        if ap(x, x)? != x {
            return Err(ReduceError::InvalidBulatovOperation { op: f.into(), detail: format!("f({x},{x}) != {x}") });
        }
        for &y in domain {
            let xy = ap(x, y)?;
            if ap(x, xy)? != xy || ap(xy, x)? != xy {
                return Err(ReduceError::InvalidBulatovOperation {
                    op: f.into(),
                    detail: format!("f(x,f(x,y)) = f(f(x,y),x) = f(x,y) fails at x={x}, y={y}"),
                });
            }
        }
    }
    let elements: Vec<Value> = domain.iter().copied().collect();
    let mut edges = Vec::new();
    for &a in &elements {
        for &b in &elements {
            if a != b && ap(a, b)? == b && ap(b, a)? == b {
                edges.push((a, b));
            }
        }
    }
    // reachability closure; domains are small
    let k = elements.len();
    let pos = |v: Value| elements.binary_search(&v).expect("element of domain");
    let mut reach = vec![vec![false; k]; k];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(a, b) in &edges {
        reach[pos(a)][pos(b)] = true;
    }
    for m in 0..k {
        for i in 0..k {
            if reach[i][m] {
                for j in 0..k {
                    if reach[m][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut assigned = vec![false; k];
    let mut components = Vec::new();
    for i in 0..k {
        if assigned[i] {
            continue;
        }
        let comp: Vec<Value> = (0..k).filter(|&j| reach[i][j] && reach[j][i]).map(|j| elements[j]).collect();
        for &v in &comp {
            assigned[pos(v)] = true;
        }
        components.push(comp);
    }
    let mut orientation = RedOrientation { elements, edges, components, maximal: Vec::new() };
    let mut has_incoming = vec![false; orientation.components.len()];
    for &(a, b) in &orientation.edges {
        let (ca, cb) = (orientation.component_of(a), orientation.component_of(b));
        if ca != cb {
            has_incoming[cb] = true;
        }
    }
    orientation.maximal = (0..has_incoming.len()).filter(|&c| !has_incoming[c]).collect();
    Ok(orientation)
}

/// Keeps only the singleton maximal components of each oriented domain.
pub fn prune_red(
    graph: &BinaryInstance,
    orientations: &[Option<RedOrientation>],
) -> (BinaryInstance, Vec<ReduceEvent>) {
    let mut out = graph.clone();
    let mut events = Vec::new();
    for (x, o) in orientations.iter().enumerate() {
        let Some(o) = o else { continue };
        let keep: BTreeSet<Value> = o.singleton_maxima().into_iter().collect();
        for &v in graph.domain(x) {
            if !keep.contains(&v) {
                let reason = if o.maximal.contains(&o.component_of(v)) {
                    Reason::RedLargeComponent
                } else {
                    Reason::RedNotMaximal
                };
                events.push(ReduceEvent { var: x, value: v, reason });
            }
        }
        if keep.len() != graph.domain(x).len() {
            out.restrict_domain(x, &keep);
        }
    }
    (out, events)
}

/// Replaces `P_x` by the image of `p = f(c, -)` iterated to idempotence and
/// maps every constraint at `x` through it.
pub fn shrink_non_permutation(
    graph: &BinaryInstance,
    x: usize,
    algebra: &FiniteAlgebra,
    f: &str,
    c: Value,
) -> Result<(BinaryInstance, Vec<ReduceEvent>), ReduceError> {
    let domain = graph.domain(x);
    let p = |v: Value| algebra.apply(f, &[c, v]);
    let image: BTreeSet<Value> = domain.iter().map(|&v| p(v)).collect::<Result<_, _>>()?;
    if !image.is_subset(domain) {
        return Err(ReduceError::ShrinkNotClosed(x + 1));
    }
    if image.len() == domain.len() {
        return Err(ReduceError::ShrinkInapplicable { var: x + 1, c });
    }
    // q = p^k for the first k with q∘q = q
    let mut q: BTreeMap<Value, Value> = domain.iter().map(|&v| Ok((v, p(v)?))).collect::<Result<_, AlgebraError>>()?;
    while q.iter().any(|(_, &w)| q[&q[&w]] != q[&w]) {
        q = q.iter().map(|(&v, &w)| Ok((v, p(w)?))).collect::<Result<_, AlgebraError>>()?;
    }
    let new_domain: BTreeSet<Value> = q.values().copied().collect();
    let n = graph.num_vars();
    let rows: Vec<PairSet> = (0..n)
        .map(|y| {
            if y == x {
                PairSet::new()
            } else {
                graph.constraint(x, y).iter().map(|&(a, b)| (q[&a], b)).collect()
            }
        })
        .collect();
    let mut out = graph.clone();
    out.replace_variable(x, new_domain.clone(), rows);
    let events = domain
        .iter()
        .filter(|v| !new_domain.contains(v))
        .map(|&value| ReduceEvent { var: x, value, reason: Reason::Shrink { c } })
        .collect();
    Ok((out, events))
}

/// Removal counts for one pass of the reduction loop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PassStats {
    pub propagation: usize,
    pub yellow: usize,
    pub red: usize,
    pub shrink: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeReduction {
    pub graph: BinaryInstance,
    pub unsat: bool,
    pub passes: Vec<PassStats>,
    pub log: Vec<ReduceEvent>,
}

impl TypeReduction {
    /// The removal reasons recorded for `(var, value)`, in order.
    pub fn explain(&self, var: usize, value: Value) -> Vec<&ReduceEvent> {
        self.log.iter().filter(|e| e.var == var && e.value == value).collect()
    }
}

/// Repeats propagation, yellow elimination, red pruning and shrinking until
/// nothing changes or a domain empties.
pub fn type_reduce(graph: &BinaryInstance, algebras: &DomainAlgebras) -> Result<TypeReduction, ReduceError> {
    let order: Vec<usize> = (0..graph.num_vars()).collect();
    let mut current = graph.clone();
    let mut passes = Vec::new();
    let mut log = Vec::new();
    let bound = graph.total_domain_size() + 1;
    for _ in 0..=bound {
        let mut stats = PassStats::default();
        let before = current.clone();

        let prop = propagate_unchecked(current, &order);
        stats.propagation = prop.removal_log.len();
        log.extend(prop.removal_log.iter().map(|r| ReduceEvent {
            var: r.var,
            value: r.value,
            reason: Reason::Propagation { support: r.support },
        }));
        current = prop.reduced;
        if prop.status == Status::Empty {
            passes.push(stats);
            return Ok(TypeReduction { graph: current, unsat: true, passes, log });
        }

        let (g, events) = eliminate_yellow(&current, algebras)?;
        stats.yellow = events.len();
        log.extend(events);
        current = g;
        if current.has_empty_domain() {
            passes.push(stats);
            return Ok(TypeReduction { graph: current, unsat: true, passes, log });
        }

        for x in 0..current.num_vars() {
            let Some(o) = red_orientation(&current, algebras, x)? else { continue };
            let alg = &algebras.for_var(x).algebra;
            let f = alg.redop.clone().expect("orientation implies a red operation");
            let maxima = o.singleton_maxima();
            let (g, events) = if maxima.len() >= 2 {
                shrink_non_permutation(&current, x, alg, &f, maxima[0])?
            } else {
                let mut per_var = vec![None; current.num_vars()];
                per_var[x] = Some(o);
                prune_red(&current, &per_var)
            };
            for e in &events {
                if matches!(e.reason, Reason::Shrink { .. }) {
                    stats.shrink += 1;
                } else {
                    stats.red += 1;
                }
            }
            log.extend(events);
            current = g;
        }
        passes.push(stats);
        if current.has_empty_domain() {
            return Ok(TypeReduction { graph: current, unsat: true, passes, log });
        }
        if current == before {
            return Ok(TypeReduction { graph: current, unsat: false, passes, log });
        }
    }
    unreachable!("every pass that changes the instance shrinks a domain")
}

/// The orientation of `P_x` when it contains a red edge, `None` otherwise.
fn red_orientation(
    graph: &BinaryInstance,
    algebras: &DomainAlgebras,
    x: usize,
) -> Result<Option<RedOrientation>, ReduceError> {
    let alg = algebras.for_var(x);
    let domain: Vec<Value> = graph.domain(x).iter().copied().collect();
    let mut has_red = false;
    'outer: for (i, &a) in domain.iter().enumerate() {
        for &b in &domain[i + 1..] {
            if alg.colour(a, b)?.colour == Colour::Red {
                has_red = true;
                break 'outer;
            }
        }
    }
    if !has_red {
        return Ok(None);
    }
    let f = alg.algebra.redop.as_deref().ok_or(ReduceError::MissingRedOperation(x + 1))?;
    Ok(Some(orient_red(&alg.algebra, f, graph.domain(x))?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Operation;
    use crate::context::{Limits, PreparedAlgebra};
    use std::sync::Arc;

    fn set(v: &[Value]) -> BTreeSet<Value> {
        v.iter().copied().collect()
    }

    fn shared(alg: FiniteAlgebra, n: usize) -> DomainAlgebras {
        DomainAlgebras::shared(Arc::new(PreparedAlgebra::new(alg, Limits::default())), n)
    }

    /// Meet semilattice on {0,1,2} with 0 below the incomparable 1 and 2.
    fn meet3() -> FiniteAlgebra {
        let f = Operation::from_fn("f", 2, 3, |a| if a[0] == a[1] { a[0] } else { 0 });
        let mut alg = FiniteAlgebra::new(3, vec![f]).unwrap();
        alg.redop = Some("f".into());
        alg
    }

    /// {0,1,2}: majority on {0,1} where `f` is the first projection, and 2
    /// joined to both by `f` acting as a semilattice with 2 on top.
    fn yellow_pair_algebra() -> FiniteAlgebra {
        let g = Operation::from_fn("g", 3, 3, |a| {
            if a[0] == a[1] || a[0] == a[2] {
                a[0]
            } else if a[1] == a[2] {
                a[1]
            } else {
                a[0].min(a[1]).min(a[2])
            }
        });
        let f = Operation::from_fn("f", 2, 3, |a| if a[0] == a[1] { a[0] } else if a[0] == 2 { a[1] } else { a[0] });
        let mut alg = FiniteAlgebra::new(3, vec![g, f]).unwrap();
        alg.redop = Some("f".into());
        alg
    }

    #[test]
    fn yellow_empties_majority_domain() {
        let g = BinaryInstance::unconstrained(2, vec![set(&[0, 1])]);
        let (out, events) = eliminate_yellow(&g, &shared(FiniteAlgebra::majority(2), 1)).unwrap();
        assert!(out.domain(0).is_empty());
        assert_eq!(events.len(), 2);
    }

    #[test]
    fn yellow_leaves_affine_domain() {
        let g = BinaryInstance::unconstrained(3, vec![set(&[0, 1, 2])]);
        let (out, events) = eliminate_yellow(&g, &shared(FiniteAlgebra::cyclic_affine(3), 1)).unwrap();
        assert_eq!(out, g);
        assert!(events.is_empty());
    }

    #[test]
    fn yellow_pair_only() {
        let alg = yellow_pair_algebra();
        let prepared = PreparedAlgebra::new(alg.clone(), Limits::default());
        assert_eq!(prepared.colour(0, 1).unwrap().colour, Colour::Yellow);
        assert_ne!(prepared.colour(0, 2).unwrap().colour, Colour::Yellow);
        assert_ne!(prepared.colour(1, 2).unwrap().colour, Colour::Yellow);
        let g = BinaryInstance::unconstrained(3, vec![set(&[0, 1, 2])]);
        let (out, _) = eliminate_yellow(&g, &shared(alg, 1)).unwrap();
        assert_eq!(out.domain(0), &set(&[2]));
    }

    #[test]
    fn orientations() {
        let min = FiniteAlgebra::min_semilattice(2);
        let o = orient_red(&min, "min", &set(&[0, 1])).unwrap();
        assert_eq!(o.edges, vec![(1, 0)]);
        assert_eq!(o.singleton_maxima(), vec![1]);

        let o = orient_red(&meet3(), "f", &set(&[0, 1, 2])).unwrap();
        assert_eq!(o.edges, vec![(1, 0), (2, 0)]);
        assert_eq!(o.singleton_maxima(), vec![1, 2]);

        let z3 = FiniteAlgebra::cyclic_affine(3);
        let proj = Operation::from_fn("p", 2, 3, |a| a[0]);
        let alg = FiniteAlgebra::new(3, vec![z3.operations()[0].clone(), proj]).unwrap();
        let o = orient_red(&alg, "p", &set(&[0, 1, 2])).unwrap();
        assert!(o.edges.is_empty());
    }

    #[test]
    fn invalid_bulatov_operation() {
        let minus = Operation::from_fn("s", 2, 3, |a| (a[0] + 3 - a[1]) % 3);
        let alg = FiniteAlgebra::new(3, vec![minus]).unwrap();
        let err = orient_red(&alg, "s", &set(&[0, 1, 2])).unwrap_err();
        assert!(err.to_string().contains("invalid Bulatov operation"));
    }

    #[test]
    fn pruning() {
        let min = FiniteAlgebra::min_semilattice(2);
        let g = BinaryInstance::unconstrained(2, vec![set(&[0, 1])]);
        let o = orient_red(&min, "min", g.domain(0)).unwrap();
        let (out, events) = prune_red(&g, &[Some(o)]);
        assert_eq!(out.domain(0), &set(&[1]));
        assert_eq!(events[0].reason, Reason::RedNotMaximal);

        let chain = FiniteAlgebra::min_semilattice(3);
        let g = BinaryInstance::unconstrained(3, vec![set(&[0, 1, 2])]);
        let o = orient_red(&chain, "min", g.domain(0)).unwrap();
        assert_eq!(prune_red(&g, &[Some(o)]).0.domain(0), &set(&[2]));

        let o = orient_red(&meet3(), "f", g.domain(0)).unwrap();
        assert_eq!(prune_red(&g, &[Some(o)]).0.domain(0), &set(&[1, 2]));
    }

    #[test]
    fn red_cycle_is_pruned_entirely() {
        // rock-paper-scissors tournament: every element is beaten, one big component
        let f = Operation::from_fn("f", 2, 3, |a| {
            let (x, y) = (a[0], a[1]);
            if x == y { x } else if (x + 1) % 3 == y { y } else { x }
        });
        let alg = FiniteAlgebra::new(3, vec![f]).unwrap();
        let g = BinaryInstance::unconstrained(3, vec![set(&[0, 1, 2])]);
        let o = orient_red(&alg, "f", g.domain(0)).unwrap();
        assert_eq!(o.components.len(), 1);
        let (out, events) = prune_red(&g, &[Some(o)]);
        assert!(out.domain(0).is_empty());
        assert!(events.iter().all(|e| e.reason == Reason::RedLargeComponent));
    }

    #[test]
    fn shrinking() {
        let g = BinaryInstance::unconstrained(3, vec![set(&[0, 1, 2]), set(&[0, 1, 2])]);
        let (out, _) = shrink_non_permutation(&g, 0, &meet3(), "f", 1).unwrap();
        assert_eq!(out.domain(0), &set(&[0, 1]));
        let (out, _) = shrink_non_permutation(&g, 0, &meet3(), "f", 2).unwrap();
        assert_eq!(out.domain(0), &set(&[0, 2]));
        assert!(crate::structures::check_syntactic_simplicity(&out).is_empty());
        let z = Operation::from_fn("s", 2, 3, |a| (a[0] + a[1]) % 3);
        let perm = FiniteAlgebra::new(3, vec![z]).unwrap();
        assert!(matches!(
            shrink_non_permutation(&g, 0, &perm, "s", 1),
            Err(ReduceError::ShrinkInapplicable { .. })
        ));
    }

    #[test]
    fn shrink_iterates_to_idempotence() {
        // p = f(2, -) on the chain 0<1<2<3 under min sends 3 -> 2 and is idempotent at once
        let chain = FiniteAlgebra::min_semilattice(4);
        let g = BinaryInstance::unconstrained(4, vec![set(&[0, 1, 2, 3])]);
        let (out, events) = shrink_non_permutation(&g, 0, &chain, "min", 2).unwrap();
        assert_eq!(out.domain(0), &set(&[0, 1, 2]));
        assert_eq!(events.len(), 1);
    }

    #[test]
    fn type_reduce_affine_is_propagation() {
        let mut g = BinaryInstance::unconstrained(3, vec![set(&[0, 1, 2]); 2]);
        g.set_constraint(0, 1, [(0, 1), (1, 2), (2, 0)].into_iter().collect());
        let r = type_reduce(&g, &shared(FiniteAlgebra::cyclic_affine(3), 2)).unwrap();
        assert!(!r.unsat);
        assert_eq!(r.graph, g);
    }

    #[test]
    fn type_reduce_majority_is_unsat() {
        let g = BinaryInstance::unconstrained(2, vec![set(&[0, 1]); 2]);
        let r = type_reduce(&g, &shared(FiniteAlgebra::majority(2), 2)).unwrap();
        assert!(r.unsat);
    }

    #[test]
    fn type_reduce_mixed() {
        // variable 1 carries ({0,1}, min); variables 2 and 3 carry Z_2 with a +1 link
        let z2 = Arc::new(PreparedAlgebra::new(FiniteAlgebra::cyclic_affine(2), Limits::default()));
        let min = Arc::new(PreparedAlgebra::new(FiniteAlgebra::min_semilattice(2), Limits::default()));
        let algs = DomainAlgebras::with_overrides(z2, 3, vec![(0, min)]);
        let mut g = BinaryInstance::unconstrained(2, vec![set(&[0, 1]); 3]);
        g.set_constraint(1, 2, [(0, 1), (1, 0)].into_iter().collect());
        let r = type_reduce(&g, &algs).unwrap();
        assert!(!r.unsat);
        assert_eq!(r.graph.domain(0), &set(&[1]));
        assert_eq!(r.graph.domain(1), &set(&[0, 1]));
        assert_eq!(r.explain(0, 0)[0].reason, Reason::RedNotMaximal);
    }

    #[test]
    fn missing_red_operation() {
        let mut min = FiniteAlgebra::min_semilattice(2);
        min.redop = None;
        let g = BinaryInstance::unconstrained(2, vec![set(&[0, 1])]);
        assert_eq!(type_reduce(&g, &shared(min, 1)), Err(ReduceError::MissingRedOperation(1)));
    }

    #[test]
    fn survivors_are_blue() {
        let mut g = BinaryInstance::unconstrained(3, vec![set(&[0, 1, 2])]);
        g.restrict_domain(0, &set(&[0, 1, 2]));
        let algs = shared(meet3(), 1);
        let r = type_reduce(&g, &algs).unwrap();
        let dom: Vec<Value> = r.graph.domain(0).iter().copied().collect();
        assert_eq!(dom, vec![1]);
        for (i, &a) in dom.iter().enumerate() {
            for &b in &dom[i + 1..] {
                let c = algs.for_var(0).colour(a, b).unwrap().colour;
                assert!(c == Colour::Blue || c == Colour::None);
            }
        }
    }
}
