//! The affine endgame.
//!
//! After type reduction every simple subalgebra left in a domain is affine.
//! Fixing a simple quotient `S/θ` of one domain, the constraints that are
//! graphs of isomorphisms carry it to other domains; the set of domains
//! reached this way is a domain group, and the constraints between its
//! members become equations `x_j = x_i + a` over the abelian group of
//! `S/θ`. Those systems are solved with a union-find that tracks
//! group-valued potentials, which gives both the point checks and the final
//! block-by-block construction of a solution.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::algebra::{
    find_affine_term, is_simple, maximal_congruences, quotient, verify_affine_witness, AlgebraError, FiniteAlgebra,
    GroupStructure, Partition,
};
use crate::binarize::{binarize, lift_algebra, project_solution, BinarizeError, Binarized};
use crate::context::{DomainAlgebras, Limits, PreparedAlgebra};
use crate::oracle::preserves_all;
use crate::propagate::propagate_unchecked;
use crate::reduce::{type_reduce, Reason, ReduceError};
use crate::structures::{
    evaluate_assignment, is_core, Assignment, BinaryInstance, Instance, PairSet, Relation, RelationalTemplate, StructureError,
    Value,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AffineError {
    #[error("link dichotomy violated: {0}")]
    LinkDichotomy(String),
    #[error("constraint is not subdirect over the given factors")]
    NotSubdirect,
    #[error("affine witness fails on the anchor quotient of variable {0}")]
    NotAffine(usize),
    #[error("offset {offset} is not an element of a group of order {order}")]
    OffsetNotInGroup { offset: usize, order: usize },
    #[error("variable {0} is not in the linear system")]
    UnknownVariable(usize),
    #[error("multiconsistency graph is not a core (a non-surjective endomorphism exists)")]
    NotCore,
    #[error("algebra does not preserve relation {0}")]
    NotPreserved(String),
    #[error("algebra has {algebra} elements but the instance universe has {instance}")]
    UniverseMismatch { algebra: usize, instance: usize },
    #[error("per-variable algebras need an instance of arity at most 2")]
    OverridesNeedBinary,
    #[error("construction reached a dead end: {0}")]
    Incomplete(String),
    #[error("assembled assignment fails verification")]
    VerificationFailed,
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Binarize(#[from] BinarizeError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// A finite abelian group on `{0, .., order-1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbelianGroup {
    order: usize,
    sum: Vec<usize>,
    zero: usize,
}

impl AbelianGroup {
    pub fn cyclic(q: usize) -> Self {
        AbelianGroup { order: q, sum: (0..q * q).map(|i| (i / q + i % q) % q).collect(), zero: 0 }
    }

    /// Renumbers a group structure by the position of each element.
    pub fn from_structure(g: &GroupStructure) -> Self {
        let k = g.order();
        let pos = |v: Value| g.elements.iter().position(|&e| e == v).expect("closed addition");
        let sum = (0..k * k).map(|i| pos(g.add(g.elements[i / k], g.elements[i % k]))).collect();
        AbelianGroup { order: k, sum, zero: pos(g.zero) }
    }

    /// The same group with `z` as identity: `a +' b = a - z + b`.
    pub fn rebased(&self, z: usize) -> Self {
        let k = self.order;
        let nz = self.neg(z);
        let sum = (0..k * k).map(|i| self.add(self.add(i / k, nz), i % k)).collect();
        AbelianGroup { order: k, sum, zero: z }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn zero(&self) -> usize {
        self.zero
    }

    pub fn add(&self, a: usize, b: usize) -> usize {
        self.sum[a * self.order + b]
    }

    pub fn neg(&self, a: usize) -> usize {
        (0..self.order).find(|&b| self.add(a, b) == self.zero).expect("group has inverses")
    }

    pub fn sub(&self, a: usize, b: usize) -> usize {
        self.add(a, self.neg(b))
    }
}

/// The two shapes a subdirect product with a simple right factor can take.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConstraintClass {
    FullProduct,
    /// The graph of an isomorphism from `left/theta` to the right factor;
    /// `iso` is keyed by the least element of each block.
    IsoGraph { theta: Vec<Vec<Value>>, iso: BTreeMap<Value, Value> },
}

impl ConstraintClass {
    /// Image of `a` under the isomorphism.
    pub fn map(&self, a: Value) -> Option<Value> {
        match self {
            ConstraintClass::FullProduct => None,
            ConstraintClass::IsoGraph { theta, iso } => {
                theta.iter().find(|b| b.contains(&a)).and_then(|b| iso.get(&b[0]).copied())
            }
        }
    }
}

/// Splits a subdirect `C ≤ left × right` into the full product or the graph
/// of `left/θ ≅ right`, where `a θ a'` iff `a` and `a'` share a partner.
/// With a one-element right factor the product is also the graph of the
/// collapse map, and that reading is returned.
pub fn classify_constraint(
    c: &PairSet,
    left: &BTreeSet<Value>,
    right: &BTreeSet<Value>,
) -> Result<ConstraintClass, AffineError> {
    let lp: BTreeSet<Value> = c.iter().map(|&(a, _)| a).collect();
    let rp: BTreeSet<Value> = c.iter().map(|&(_, b)| b).collect();
    if &lp != left || &rp != right {
        return Err(AffineError::NotSubdirect);
    }
    if right.len() > 1 && c.len() == left.len() * right.len() {
        return Ok(ConstraintClass::FullProduct);
    }
    // a θ a' iff they share a partner; close transitively, then check the graph shape
    let elems: Vec<Value> = left.iter().copied().collect();
    let idx = |v: Value| elems.binary_search(&v).expect("left element");
    let mut label: Vec<usize> = (0..elems.len()).collect();
    fn root(label: &mut [usize], mut i: usize) -> usize {
        while label[i] != i {
            label[i] = label[label[i]];
            i = label[i];
        }
        i
    }
    let mut first_with: BTreeMap<Value, usize> = BTreeMap::new();
    for &(a, b) in c {
        let i = idx(a);
        match first_with.get(&b) {
            Some(&j) => {
                let (ri, rj) = (root(&mut label, i), root(&mut label, j));
                label[ri.max(rj)] = ri.min(rj);
            }
            None => {
                first_with.insert(b, i);
            }
        }
    }
    let mut blocks: BTreeMap<usize, Vec<Value>> = BTreeMap::new();
    for (i, &v) in elems.iter().enumerate() {
        blocks.entry(root(&mut label, i)).or_default().push(v);
    }
    let theta: Vec<Vec<Value>> = blocks.into_values().collect();
    let mut iso = BTreeMap::new();
    let mut used = BTreeSet::new();
    for block in &theta {
        let partners: BTreeSet<Value> =
            c.iter().filter(|(a, _)| block.contains(a)).map(|&(_, b)| b).collect();
        if partners.len() != 1 {
            return Err(AffineError::LinkDichotomy(format!(
                "block {block:?} relates to {} right elements",
                partners.len()
            )));
        }
        let b = *partners.iter().next().expect("one partner");
        if !used.insert(b) {
            return Err(AffineError::LinkDichotomy(format!("right element {b} has two preimage blocks")));
        }
        for &a in block {
            if !c.contains(&(a, b)) {
                return Err(AffineError::LinkDichotomy(format!("({a},{b}) missing from the graph")));
            }
        }
        iso.insert(block[0], b);
    }
    Ok(ConstraintClass::IsoGraph { theta, iso })
}

/// A domain reached from the anchor, with its coordinates in the anchor
/// group. Elements of `subuniverse` in the same block share a coordinate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Member {
    pub var: usize,
    pub subuniverse: BTreeSet<Value>,
    pub theta: Vec<Vec<Value>>,
    pub coords: BTreeMap<Value, usize>,
    /// The member through which this one was first reached.
    pub parent: Option<usize>,
}

impl Member {
    /// The block carrying coordinate `g`.
    pub fn block_at(&self, g: usize) -> BTreeSet<Value> {
        self.coords.iter().filter(|(_, &c)| c == g).map(|(&v, _)| v).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainGroup {
    pub anchor: usize,
    pub group: AbelianGroup,
    /// Anchor first, then in discovery order.
    pub members: Vec<Member>,
}

impl DomainGroup {
    pub fn member(&self, var: usize) -> Option<&Member> {
        self.members.iter().find(|m| m.var == var)
    }
}

/// The anchor quotient `S/θ` as an abelian group, with `zero` (a block
/// index, reduced mod the order) as identity.
fn anchor_group(
    algebra: &PreparedAlgebra,
    var: usize,
    subuniverse: &BTreeSet<Value>,
    theta: &[Vec<Value>],
    zero: usize,
) -> Result<AbelianGroup, AffineError> {
    if theta.len() == 1 {
        return Ok(AbelianGroup::cyclic(1));
    }
    let (sub, elems) = algebra.algebra.restrict(subuniverse)?;
    let local: Vec<Vec<Value>> = theta
        .iter()
        .map(|b| b.iter().map(|v| elems.binary_search(v).expect("block inside subuniverse") as Value).collect())
        .collect();
    let partition = Partition::from_blocks(elems.len(), &local).ok_or(AlgebraError::NotACongruence)?;
    let q = quotient(&sub, &partition)?;
    let term = find_affine_term(&q, algebra.limits().term_depth).ok_or(AffineError::NotAffine(var + 1))?;
    let all: BTreeSet<Value> = q.universe().collect();
    let gs = verify_affine_witness(&q, &all, &term)
        .map_err(|_| AffineError::NotAffine(var + 1))?
        .ok_or(AffineError::NotAffine(var + 1))?;
    let g = AbelianGroup::from_structure(&gs);
    Ok(g.rebased(zero % g.order()))
}

/// Breadth-first exploration from `anchor` along constraints whose
/// restriction is the graph of an isomorphism onto the current quotient.
/// `theta` partitions `subuniverse` into the blocks of a maximal congruence.
pub fn domain_group(
    graph: &BinaryInstance,
    algebra: &PreparedAlgebra,
    anchor: usize,
    subuniverse: &BTreeSet<Value>,
    theta: &[Vec<Value>],
    zero: usize,
) -> Result<DomainGroup, AffineError> {
    let group = anchor_group(algebra, anchor, subuniverse, theta, zero)?;
    let mut coords = BTreeMap::new();
    for (g, block) in theta.iter().enumerate() {
        for &v in block {
            coords.insert(v, g);
        }
    }
    let mut members = vec![Member {
        var: anchor,
        subuniverse: subuniverse.clone(),
        theta: theta.to_vec(),
        coords,
        parent: None,
    }];
    let mut seen = vec![false; graph.num_vars()];
    seen[anchor] = true;
    let mut queue = VecDeque::from([0usize]);
    while let Some(m) = queue.pop_front() {
        let j = members[m].var;
        for y in 0..graph.num_vars() {
            if seen[y] {
                continue;
            }
            let from = &members[m];
            let r: PairSet = graph
                .constraint(j, y)
                .iter()
                .filter_map(|&(a, b)| from.coords.get(&a).map(|&g| (b, g as Value)))
                .collect();
            let left: BTreeSet<Value> = r.iter().map(|&(b, _)| b).collect();
            let right: BTreeSet<Value> = from.coords.values().map(|&g| g as Value).collect();
            if let ConstraintClass::IsoGraph { theta, iso } = classify_constraint(&r, &left, &right)? {
                let mut raw = BTreeMap::new();
                for block in &theta {
                    for &v in block {
                        raw.insert(v, iso[&block[0]] as usize);
                    }
                }
                // measure coordinates from the member's least element
                let base = raw[&left.iter().next().copied().expect("nonempty image")];
                let coords = raw.into_iter().map(|(v, g)| (v, group.sub(g, base))).collect();
                seen[y] = true;
                members.push(Member { var: y, subuniverse: left, theta, coords, parent: Some(m) });
                let idx = members.len() - 1;
                queue.push_back(idx);
            }
        }
    }
    Ok(DomainGroup { anchor, group, members })
}

/// `x_to = x_from + offset`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Equation {
    pub from: usize,
    pub to: usize,
    pub offset: usize,
}

/// An in-group constraint that is neither full nor a translation: the
/// allowed coordinate pairs, checked once every coordinate is determined.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Residual {
    pub from: usize,
    pub to: usize,
    pub allowed: BTreeSet<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearSystem {
    pub group: AbelianGroup,
    pub variables: Vec<usize>,
    pub equations: Vec<Equation>,
    /// `x_var = value`.
    pub pins: Vec<(usize, usize)>,
    pub residuals: Vec<Residual>,
}

impl LinearSystem {
    pub fn new(group: AbelianGroup, variables: Vec<usize>) -> Self {
        LinearSystem { group, variables, equations: Vec::new(), pins: Vec::new(), residuals: Vec::new() }
    }

    pub fn equation(mut self, from: usize, to: usize, offset: usize) -> Self {
        self.equations.push(Equation { from, to, offset });
        self
    }

    pub fn pin(mut self, var: usize, value: usize) -> Self {
        self.pins.push((var, value));
        self
    }

    /// Index of the first residual violated by `values`.
    pub fn violated_residual(&self, values: &BTreeMap<usize, usize>) -> Option<usize> {
        self.residuals.iter().position(|r| match (values.get(&r.from), values.get(&r.to)) {
            (Some(&g), Some(&h)) => !r.allowed.contains(&(g, h)),
            _ => r.allowed.is_empty(),
        })
    }
}

/// Encodes every pair of members as an equation when the restricted
/// constraint is a translation in member coordinates, as nothing when it is
/// the full product, and as a residual otherwise.
pub fn encode_linear_system(group: &DomainGroup, graph: &BinaryInstance) -> LinearSystem {
    let g = &group.group;
    let q = g.order();
    let mut system = LinearSystem::new(g.clone(), group.members.iter().map(|m| m.var).collect());
    for (i, mi) in group.members.iter().enumerate() {
        for mj in &group.members[i + 1..] {
            let allowed: BTreeSet<(usize, usize)> = graph
                .constraint(mi.var, mj.var)
                .iter()
                .filter_map(|(a, b)| Some((*mi.coords.get(a)?, *mj.coords.get(b)?)))
                .collect();
            if allowed.len() == q * q {
                continue;
            }
            let offsets: BTreeSet<usize> = allowed.iter().map(|&(x, y)| g.sub(y, x)).collect();
            let sources: BTreeSet<usize> = allowed.iter().map(|&(x, _)| x).collect();
            if offsets.len() == 1 && sources.len() == q && allowed.len() == q {
                let offset = *offsets.iter().next().expect("one offset");
                system.equations.push(Equation { from: mi.var, to: mj.var, offset });
            } else {
                system.residuals.push(Residual { from: mi.var, to: mj.var, allowed });
            }
        }
    }
    system
}

/// A node of the potential forest: a variable, or the constant `0` that
/// pins hang from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Node {
    Ground,
    Var(usize),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Ground => write!(f, "0"),
            Node::Var(x) => write!(f, "x{}", x + 1),
        }
    }
}

/// A closed walk of equations whose offsets add up to `sum != 0`, so that
/// `x = x + sum` would have to hold at its start.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycleCertificate {
    /// `(from, to, offset)` with `to = from + offset`; each step starts where
    /// the previous one ended and the last ends at the first start.
    pub steps: Vec<(Node, Node, usize)>,
    pub sum: usize,
    pub group_order: usize,
}

impl CycleCertificate {
    /// Touches a pin.
    pub fn is_pinned(&self) -> bool {
        self.steps.iter().any(|&(a, _, _)| a == Node::Ground)
    }

    /// Re-adds the offsets in `group` and checks that the walk closes.
    pub fn verify(&self, group: &AbelianGroup) -> bool {
        let closed = self.steps.windows(2).all(|w| w[0].1 == w[1].0)
            && self.steps.first().map(|s| s.0) == self.steps.last().map(|s| s.1);
        let sum = self.steps.iter().fold(group.zero(), |acc, &(_, _, a)| group.add(acc, a));
        closed && sum == self.sum && sum != group.zero()
    }
}

impl fmt::Display for CycleCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (a, b, off)) in self.steps.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{b} = {a} + {off}")?;
        }
        write!(f, "; offsets sum to {} in a group of order {}", self.sum, self.group_order)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LinearOutcome {
    /// Coordinates of every variable; components without a pin have their
    /// root at zero.
    Solved(BTreeMap<usize, usize>),
    Inconsistent(CycleCertificate),
}

struct Potentials {
    parent: Vec<usize>,
    // x_v - x_parent
    diff: Vec<usize>,
    forest: Vec<Vec<(usize, usize)>>,
}

impl Potentials {
    fn new(n: usize) -> Self {
        Potentials { parent: (0..n).collect(), diff: vec![0; n], forest: vec![Vec::new(); n] }
    }

    /// Root of `v` and `x_v - x_root`.
    fn find(&mut self, g: &AbelianGroup, v: usize) -> (usize, usize) {
        let p = self.parent[v];
        if p == v {
            return (v, g.zero());
        }
        let (r, dp) = self.find(g, p);
        self.parent[v] = r;
        self.diff[v] = g.add(self.diff[v], dp);
        (r, self.diff[v])
    }

    /// Forest path from `a` to `b` as `(from, to, offset)` steps.
    fn path(&self, g: &AbelianGroup, a: usize, b: usize) -> Vec<(usize, usize, usize)> {
        let mut prev: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        let mut queue = VecDeque::from([a]);
        prev.insert(a, (a, g.zero()));
        while let Some(v) = queue.pop_front() {
            if v == b {
                break;
            }
            for &(w, off) in &self.forest[v] {
                if let std::collections::btree_map::Entry::Vacant(e) = prev.entry(w) {
                    e.insert((v, off));
                    queue.push_back(w);
                }
            }
        }
        let mut steps = Vec::new();
        let mut v = b;
        while v != a {
            let (u, off) = prev[&v];
            steps.push((u, v, off));
            v = u;
        }
        steps.reverse();
        steps
    }
}

/// Solves equations and pins with a union-find over group-valued
/// potentials; a conflicting equation yields the cycle it closes.
pub fn solve_linear_system(system: &LinearSystem) -> Result<LinearOutcome, AffineError> {
    let g = &system.group;
    let n = system.variables.len();
    let index: BTreeMap<usize, usize> = system.variables.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let lookup = |v: usize| index.get(&v).copied().ok_or(AffineError::UnknownVariable(v + 1));
    let check = |a: usize| {
        if a < g.order() {
            Ok(a)
        } else {
            Err(AffineError::OffsetNotInGroup { offset: a, order: g.order() })
        }
    };
    let ground = n;
    let mut edges = Vec::with_capacity(system.equations.len() + system.pins.len());
    for e in &system.equations {
        edges.push((lookup(e.from)?, lookup(e.to)?, check(e.offset)?));
    }
    for &(v, a) in &system.pins {
        edges.push((ground, lookup(v)?, check(a)?));
    }
    let node = |i: usize| if i == ground { Node::Ground } else { Node::Var(system.variables[i]) };
    let mut pot = Potentials::new(n + 1);
    for (u, v, a) in edges {
        let (ru, du) = pot.find(g, u);
        let (rv, dv) = pot.find(g, v);
        if ru == rv {
            // x_v - x_u implied by the forest
            let implied = g.sub(dv, du);
            if implied != a {
                let mut steps: Vec<(Node, Node, usize)> =
                    pot.path(g, u, v).into_iter().map(|(x, y, off)| (node(x), node(y), off)).collect();
                steps.push((node(v), node(u), g.neg(a)));
                let sum = g.sub(implied, a);
                return Ok(LinearOutcome::Inconsistent(CycleCertificate { steps, sum, group_order: g.order() }));
            }
            continue;
        }
        // x_ru - x_rv = a + du - dv; keep the ground as a root
        let (child, root, d) = if rv == ground {
            (ru, rv, g.sub(g.sub(dv, a), du))
        } else {
            (rv, ru, g.sub(g.add(a, du), dv))
        };
        pot.parent[child] = root;
        pot.diff[child] = d;
        pot.forest[u].push((v, a));
        pot.forest[v].push((u, g.neg(a)));
    }
    let mut values = BTreeMap::new();
    for i in 0..n {
        let (_, d) = pot.find(g, i);
        values.insert(system.variables[i], d);
    }
    let ok = system.equations.iter().all(|e| values[&e.to] == g.add(values[&e.from], e.offset))
        && system.pins.iter().all(|&(v, a)| values[&v] == a);
    if !ok {
        return Err(AffineError::VerificationFailed);
    }
    Ok(LinearOutcome::Solved(values))
}

/// Why a pinned group system has no solution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CheckFailure {
    Cycle(CycleCertificate),
    /// Coordinates forced on `from` and `to` are not related.
    Residual { from: usize, to: usize },
}

impl fmt::Display for CheckFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckFailure::Cycle(c) => write!(f, "cycle {c}"),
            CheckFailure::Residual { from, to } => {
                write!(f, "forced values of x{} and x{} violate their constraint", from + 1, to + 1)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SharpL {
    Pass,
    Fail { subuniverse: BTreeSet<Value>, failure: CheckFailure },
}

/// Blocks of the least maximal congruence of `s` (a single block when `s`
/// has one element).
pub fn least_maximal_blocks(algebra: &PreparedAlgebra, s: &BTreeSet<Value>) -> Result<Vec<Vec<Value>>, AffineError> {
    if s.len() == 1 {
        return Ok(vec![s.iter().copied().collect()]);
    }
    let (sub, elems) = algebra.algebra.restrict(s)?;
    let theta = maximal_congruences(&sub, algebra.limits().congruence_cap)?
        .into_iter()
        .next()
        .expect("a nontrivial algebra has a maximal congruence");
    Ok(theta.blocks().into_iter().map(|b| b.into_iter().map(|i| elems[i as usize]).collect()).collect())
}

/// Solves the group system of `group` with the anchor pinned at `g`.
pub fn pinned_test(
    group: &DomainGroup,
    graph: &BinaryInstance,
    g: usize,
) -> Result<Result<BTreeMap<usize, usize>, CheckFailure>, AffineError> {
    let system = encode_linear_system(group, graph).pin(group.anchor, g);
    Ok(match solve_linear_system(&system)? {
        LinearOutcome::Inconsistent(c) => Err(CheckFailure::Cycle(c)),
        LinearOutcome::Solved(values) => match system.violated_residual(&values) {
            Some(r) => Err(CheckFailure::Residual { from: system.residuals[r].from, to: system.residuals[r].to }),
            None => Ok(values),
        },
    })
}

/// Checks the point `value` of `var` against the group system of every
/// simple subuniverse of its domain that contains it, larger ones first.
pub fn sharp_l_check(
    graph: &BinaryInstance,
    algebras: &DomainAlgebras,
    var: usize,
    value: Value,
    zero: usize,
) -> Result<SharpL, AffineError> {
    let alg = algebras.for_var(var);
    for b in alg.simple_subuniverses(graph.domain(var))? {
        if !b.contains(&value) {
            continue;
        }
        let theta = least_maximal_blocks(alg, &b)?;
        let group = domain_group(graph, alg, var, &b, &theta, zero)?;
        let g = group.members[0].coords[&value];
        if let Err(failure) = pinned_test(&group, graph, g)? {
            return Ok(SharpL::Fail { subuniverse: b, failure });
        }
    }
    Ok(SharpL::Pass)
}

/// Why a value was removed on the way to a decision.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceReason {
    Reduce(Reason),
    SharpL { subuniverse: BTreeSet<Value>, failure: CheckFailure },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub var: usize,
    pub value: Value,
    pub reason: TraceReason,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "remove {} from x{}: ", self.value, self.var + 1)?;
        match &self.reason {
            TraceReason::Reduce(r) => write!(f, "{r}"),
            TraceReason::SharpL { subuniverse, failure } => {
                let b: Vec<String> = subuniverse.iter().map(ToString::to_string).collect();
                write!(f, "group check on {{{}}} fails: {failure}", b.join(","))
            }
        }
    }
}

/// Evidence for unsatisfiability over the binarized instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnsatCertificate {
    /// A cycle found without any pin, whose anchor was a whole domain.
    pub cycle: Option<CycleCertificate>,
    /// Every removal in order; the last one empties `empty_var`.
    pub trace: Vec<TraceEntry>,
    pub empty_var: usize,
}

impl fmt::Display for UnsatCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(c) = &self.cycle {
            writeln!(f, "cycle: {c}")?;
        }
        for e in &self.trace {
            writeln!(f, "{e}")?;
        }
        write!(f, "domain of x{} is empty", self.empty_var + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Sat(Assignment),
    Unsat(UnsatCertificate),
}

impl Outcome {
    pub fn is_sat(&self) -> bool {
        matches!(self, Outcome::Sat(_))
    }
}

/// One algebra for every variable, optionally replaced per variable.
#[derive(Clone, Debug)]
pub struct Algebras {
    pub default: FiniteAlgebra,
    pub overrides: BTreeMap<usize, FiniteAlgebra>,
}

impl Algebras {
    pub fn uniform(algebra: FiniteAlgebra) -> Self {
        Algebras { default: algebra, overrides: BTreeMap::new() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveOptions {
    pub assume_core: bool,
    /// Index of the block used as group zero in every anchor quotient,
    /// reduced modulo the group order.
    pub zero: usize,
    pub limits: Limits,
}

struct Run<'a> {
    algebras: &'a DomainAlgebras,
    zero: usize,
    order: Vec<usize>,
    trace: Vec<TraceEntry>,
    cycle: Option<CycleCertificate>,
}

impl Run<'_> {
    /// Propagates; the index of an emptied domain on failure.
    fn propagate(&mut self, graph: BinaryInstance) -> Result<BinaryInstance, usize> {
        let r = propagate_unchecked(graph, &self.order);
        self.trace.extend(r.removal_log.iter().map(|e| TraceEntry {
            var: e.var,
            value: e.value,
            reason: TraceReason::Reduce(Reason::Propagation { support: e.support }),
        }));
        match r.reduced.domains().iter().position(BTreeSet::is_empty) {
            Some(x) => Err(x),
            None => Ok(r.reduced),
        }
    }

    /// Removes failing points until every point passes.
    fn sweep(&mut self, mut graph: BinaryInstance) -> Result<Result<BinaryInstance, usize>, AffineError> {
        loop {
            let mut changed = false;
            for x in 0..graph.num_vars() {
                let values: Vec<Value> = graph.domain(x).iter().copied().collect();
                for a in values {
                    if !graph.domain(x).contains(&a) {
                        continue;
                    }
                    let SharpL::Fail { subuniverse, failure } = sharp_l_check(&graph, self.algebras, x, a, self.zero)? else {
                        continue;
                    };
                    if let CheckFailure::Cycle(c) = &failure {
                        if self.cycle.is_none() && !c.is_pinned() && &subuniverse == graph.domain(x) {
                            self.cycle = Some(c.clone());
                        }
                    }
                    self.trace.push(TraceEntry { var: x, value: a, reason: TraceReason::SharpL { subuniverse, failure } });
                    let mut keep = graph.domain(x).clone();
                    keep.remove(&a);
                    graph.restrict_domain(x, &keep);
                    graph = match self.propagate(graph) {
                        Ok(g) => g,
                        Err(x) => return Ok(Err(x)),
                    };
                    changed = true;
                }
            }
            if !changed {
                return Ok(Ok(graph));
            }
        }
    }

    fn unsat(self, empty_var: usize) -> Outcome {
        Outcome::Unsat(UnsatCertificate { cycle: self.cycle, trace: self.trace, empty_var })
    }
}

/// Decides a binary instance whose domains carry `algebras`; a SAT answer
/// assigns every variable of `graph`.
pub fn solve_binary(
    graph: &BinaryInstance,
    algebras: &DomainAlgebras,
    zero: usize,
) -> Result<Outcome, AffineError> {
    let mut run = Run { algebras, zero, order: (0..graph.num_vars()).collect(), trace: Vec::new(), cycle: None };
    let reduced = type_reduce(graph, algebras)?;
    run.trace.extend(reduced.log.iter().map(|e| TraceEntry {
        var: e.var,
        value: e.value,
        reason: TraceReason::Reduce(e.reason.clone()),
    }));
    if let Some(x) = reduced.graph.domains().iter().position(BTreeSet::is_empty) {
        return Ok(run.unsat(x));
    }
    let mut current = match run.sweep(reduced.graph)? {
        Ok(g) => g,
        Err(x) => return Ok(run.unsat(x)),
    };
    // block descent: non-simple domains first, then the remaining simple ones
    loop {
        let mut anchor = None;
        for x in 0..current.num_vars() {
            let d = current.domain(x);
            if d.len() > 1 && !is_simple_domain(algebras.for_var(x), d)? {
                anchor = Some(x);
                break;
            }
        }
        let anchor = match anchor.or_else(|| (0..current.num_vars()).find(|&x| current.domain(x).len() > 1)) {
            Some(x) => x,
            None => break,
        };
        let alg = algebras.for_var(anchor);
        let domain = current.domain(anchor).clone();
        let theta = least_maximal_blocks(alg, &domain)?;
        let group = domain_group(&current, alg, anchor, &domain, &theta, zero)?;
        let mut chosen = None;
        for g in 0..theta.len() {
            if let Ok(values) = pinned_test(&group, &current, g)? {
                chosen = Some(values);
                break;
            }
        }
        let values = chosen.ok_or_else(|| {
            AffineError::Incomplete(format!("no block of x{} passes its group check", anchor + 1))
        })?;
        for m in &group.members {
            current.restrict_domain(m.var, &m.block_at(values[&m.var]));
        }
        current = match run.propagate(current) {
            Ok(g) => g,
            Err(x) => return Err(AffineError::Incomplete(format!("domain of x{} emptied after a block choice", x + 1))),
        };
        current = match run.sweep(current)? {
            Ok(g) => g,
            Err(x) => return Err(AffineError::Incomplete(format!("domain of x{} emptied after a block choice", x + 1))),
        };
    }
    let values: Vec<Value> = current.domains().iter().map(|d| *d.iter().next().expect("singleton")).collect();
    Ok(Outcome::Sat(Assignment::from_values(&values)))
}

fn is_simple_domain(alg: &PreparedAlgebra, d: &BTreeSet<Value>) -> Result<bool, AffineError> {
    let (sub, _) = alg.algebra.restrict(d).map_err(|_| {
        AffineError::Incomplete(format!("domain {d:?} is not a subuniverse"))
    })?;
    Ok(is_simple(&sub, alg.limits().congruence_cap)?)
}

/// Every operation of `algebra` maps tuples of `relation`, taken
/// coordinatewise, back into `relation`.
fn preserves(algebra: &FiniteAlgebra, relation: &Relation) -> bool {
    let template = RelationalTemplate { universe_size: algebra.size(), relations: vec![relation.clone()] };
    algebra.operations().iter().all(|op| preserves_all(&template, op))
}

/// Binarizes `instance` and pairs every binary variable with its algebra:
/// overrides apply directly when the instance is already binary, otherwise
/// the default algebra is lifted to the tuple power.
pub fn prepare_binary(
    instance: &Instance,
    algebras: &Algebras,
    limits: &Limits,
) -> Result<(Binarized, DomainAlgebras), AffineError> {
    let bin = binarize(instance, limits.tuple_cap)?;
    let prepare = |a: FiniteAlgebra| Arc::new(PreparedAlgebra::new(a, *limits));
    let n = bin.graph.num_vars();
    let domain_algebras = if bin.mapping.k == 1 {
        let overrides = algebras.overrides.iter().map(|(&x, a)| (x, prepare(a.clone()))).collect();
        DomainAlgebras::with_overrides(prepare(algebras.default.clone()), n, overrides)
    } else {
        if !algebras.overrides.is_empty() {
            return Err(AffineError::OverridesNeedBinary);
        }
        let lifted = lift_algebra(&algebras.default, bin.mapping.k, limits.power_cap)?;
        DomainAlgebras::shared(prepare(lifted), n)
    };
    Ok((bin, domain_algebras))
}

/// Binarizes, reduces, sweeps and assembles a solution by block descent.
/// A SAT answer is re-verified on `instance`.
pub fn solve(instance: &Instance, algebras: &Algebras, options: &SolveOptions) -> Result<Outcome, AffineError> {
    let limits = options.limits;
    for alg in std::iter::once(&algebras.default).chain(algebras.overrides.values()) {
        if alg.size() != instance.universe_size() {
            return Err(AffineError::UniverseMismatch { algebra: alg.size(), instance: instance.universe_size() });
        }
    }
    if algebras.overrides.is_empty() {
        for c in instance.constraints() {
            if !preserves(&algebras.default, &c.relation) {
                return Err(AffineError::NotPreserved(c.relation.name.clone()));
            }
        }
    }
    if instance.constraints().is_empty() {
        if let Some(x) = instance.domains().iter().position(BTreeSet::is_empty) {
            return Ok(Outcome::Unsat(UnsatCertificate { cycle: None, trace: Vec::new(), empty_var: x }));
        }
        let values: Vec<Value> = instance.domains().iter().map(|d| *d.iter().next().expect("nonempty")).collect();
        return Ok(Outcome::Sat(Assignment::from_values(&values)));
    }
    let (Binarized { graph, mapping }, domain_algebras) = prepare_binary(instance, algebras, &limits)?;
    if !options.assume_core && !is_core(&graph, limits.core_cap)?.is_core {
        return Err(AffineError::NotCore);
    }
    match solve_binary(&graph, &domain_algebras, options.zero)? {
        Outcome::Unsat(c) => Ok(Outcome::Unsat(c)),
        Outcome::Sat(binary) => {
            let assignment = project_solution(&binary, &mapping)?;
            if !evaluate_assignment(instance, &assignment)? {
                return Err(AffineError::VerificationFailed);
            }
            Ok(Outcome::Sat(assignment))
        }
    }
}
