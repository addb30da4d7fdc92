//! Finite algebras given by operation tables.
//!
//! Everything here is exhaustive: identities are checked on every assignment,
//! congruences are generated from all principal congruences, and edge colours
//! come from an explicit enumeration of term operations up to a fixed depth.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::structures::Value;

/// Default cap on the universe size accepted by [`congruences`].
pub const DEFAULT_CONGRUENCE_CAP: usize = 8;

/// Default composition depth for witness-term search.
pub const DEFAULT_TERM_DEPTH: usize = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("operation {op} has arity {expected} but was given {found} arguments")]
    ArityMismatch { op: String, expected: usize, found: usize },
    #[error("unknown operation {0}")]
    UnknownOperation(String),
    #[error("term uses variable x{var} but only {given} arguments were given")]
    MissingArgument { var: usize, given: usize },
    #[error("value {value} outside universe of size {universe}")]
    ValueOutOfRange { value: Value, universe: usize },
    #[error("operation {op}: table has {found} entries, expected {expected}")]
    TableSize { op: String, expected: usize, found: usize },
    #[error("universe of size {size} exceeds the congruence cap {cap}")]
    CongruenceCap { size: usize, cap: usize },
    #[error("not a congruence")]
    NotACongruence,
    #[error("subuniverse is not contained in the outer subuniverse")]
    NotSubset,
    #[error("set is not closed under the operations")]
    NotClosed,
    #[error("witness term is not a Maltsev operation on the subuniverse")]
    NotMaltsev,
    #[error("idempotence violated at x={x} for operation {op}")]
    IdempotenceViolated { op: String, x: Value },
    #[error("cannot parse term: {0}")]
    TermParse(String),
    #[error("empty generating set")]
    EmptySeed,
    #[error("power algebra of size {size} exceeds cap {cap}")]
    PowerCap { size: usize, cap: usize },
}

/// A basic operation with its full table, indexed in mixed radix with the
/// first argument most significant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Operation {
    pub name: String,
    pub arity: usize,
    pub table: Vec<Value>,
}

impl Operation {
    pub fn from_fn(name: impl Into<String>, arity: usize, size: usize, f: impl Fn(&[Value]) -> Value) -> Self {
        let mut table = Vec::with_capacity(size.pow(arity as u32));
        let mut args = vec![0; arity];
        for idx in 0..size.pow(arity as u32) {
            decode(idx, size, &mut args);
            table.push(f(&args));
        }
        Operation { name: name.into(), arity, table }
    }

    #[inline]
    fn eval(&self, size: usize, args: &[Value]) -> Value {
        self.table[encode(args, size)]
    }
}

#[inline]
fn encode(args: &[Value], size: usize) -> usize {
    args.iter().fold(0, |acc, &a| acc * size + a as usize)
}

fn decode(mut idx: usize, size: usize, out: &mut [Value]) {
    for slot in out.iter_mut().rev() {
        *slot = (idx % size) as Value;
        idx /= size;
    }
}

/// Calls `f` on every tuple of the given length over `elements`.
fn for_each_tuple(elements: &[Value], len: usize, mut f: impl FnMut(&[Value])) {
    if elements.is_empty() && len > 0 {
        return;
    }
    let mut idx = vec![0usize; len];
    let mut tuple: Vec<Value> = vec![elements.first().copied().unwrap_or(0); len];
    loop {
        f(&tuple);
        let mut pos = len;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < elements.len() {
                tuple[pos] = elements[idx[pos]];
                break;
            }
            idx[pos] = 0;
            tuple[pos] = elements[0];
        }
    }
}

/// An algebra `(A, F)` on `{0, .., size-1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteAlgebra {
    size: usize,
    ops: Vec<Operation>,
    /// Every operation is idempotent (verified when set).
    pub idempotent: bool,
    /// A claimed Taylor term, if one was supplied.
    pub taylor: Option<Term>,
    /// Name of the binary operation used to orient red edges.
    pub redop: Option<String>,
}

impl FiniteAlgebra {
    pub fn new(size: usize, ops: Vec<Operation>) -> Result<Self, AlgebraError> {
        for op in &ops {
            let expected = size.pow(op.arity as u32);
            if op.table.len() != expected {
                return Err(AlgebraError::TableSize { op: op.name.clone(), expected, found: op.table.len() });
            }
            if let Some(&v) = op.table.iter().find(|&&v| v as usize >= size) {
                return Err(AlgebraError::ValueOutOfRange { value: v, universe: size });
            }
        }
        Ok(FiniteAlgebra { size, ops, idempotent: false, taylor: None, redop: None })
    }

    /// `Z_q` with the single operation `m(x,y,z) = x - y + z mod q`.
    pub fn cyclic_affine(q: usize) -> Self {
        let m = Operation::from_fn("m", 3, q, |a| ((a[0] as usize + q - a[1] as usize + a[2] as usize) % q) as Value);
        let mut alg = FiniteAlgebra::new(q, vec![m]).expect("well-formed table");
        alg.idempotent = true;
        alg
    }

    /// The two-element (or larger) majority algebra: `g(x,y,z)` returns the
    /// repeated value, or `x` when all three differ.
    pub fn majority(size: usize) -> Self {
        let g = Operation::from_fn("g", 3, size, |a| if a[1] == a[2] { a[1] } else { a[0] });
        let mut alg = FiniteAlgebra::new(size, vec![g]).expect("well-formed table");
        alg.idempotent = true;
        alg
    }

    /// The chain `0 < 1 < .. < size-1` under `min`.
    pub fn min_semilattice(size: usize) -> Self {
        let f = Operation::from_fn("min", 2, size, |a| a[0].min(a[1]));
        let mut alg = FiniteAlgebra::new(size, vec![f]).expect("well-formed table");
        alg.idempotent = true;
        alg.redop = Some("min".into());
        alg
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn universe(&self) -> impl Iterator<Item = Value> {
        0..self.size as Value
    }

    pub fn operations(&self) -> &[Operation] {
        &self.ops
    }

    pub fn operation(&self, name: &str) -> Option<&Operation> {
        self.ops.iter().find(|o| o.name == name)
    }

    /// Applies the named basic operation.
    pub fn apply(&self, name: &str, args: &[Value]) -> Result<Value, AlgebraError> {
        let op = self.operation(name).ok_or_else(|| AlgebraError::UnknownOperation(name.into()))?;
        if op.arity != args.len() {
            return Err(AlgebraError::ArityMismatch { op: name.into(), expected: op.arity, found: args.len() });
        }
        if let Some(&v) = args.iter().find(|&&v| v as usize >= self.size) {
            return Err(AlgebraError::ValueOutOfRange { value: v, universe: self.size });
        }
        Ok(op.eval(self.size, args))
    }

    /// Checks `f(x,..,x) = x` for every operation and records the flag.
    pub fn mark_idempotent(&mut self) -> Result<(), AlgebraError> {
        for op in &self.ops {
            for x in 0..self.size as Value {
                if op.eval(self.size, &vec![x; op.arity]) != x {
                    return Err(AlgebraError::IdempotenceViolated { op: op.name.clone(), x });
                }
            }
        }
        self.idempotent = true;
        Ok(())
    }

    pub fn is_idempotent(&self) -> bool {
        self.ops
            .iter()
            .all(|op| (0..self.size as Value).all(|x| op.eval(self.size, &vec![x; op.arity]) == x))
    }

    /// Materializes a closed subset as an algebra on `{0, .., k-1}`; the
    /// returned vector maps new elements back to old ones.
    pub fn restrict(&self, subset: &BTreeSet<Value>) -> Result<(FiniteAlgebra, Vec<Value>), AlgebraError> {
        let elements: Vec<Value> = subset.iter().copied().collect();
        let index: HashMap<Value, Value> = elements.iter().enumerate().map(|(i, &v)| (v, i as Value)).collect();
        let k = elements.len();
        let mut ops = Vec::with_capacity(self.ops.len());
        let mut orig = Vec::new();
        for op in &self.ops {
            let mut closed = true;
            let table = {
                let mut table = Vec::with_capacity(k.pow(op.arity as u32));
                let mut args = vec![0; op.arity];
                for idx in 0..k.pow(op.arity as u32) {
                    decode(idx, k, &mut args);
                    orig.clear();
                    orig.extend(args.iter().map(|&a| elements[a as usize]));
                    match index.get(&op.eval(self.size, &orig)) {
                        Some(&v) => table.push(v),
                        None => {
                            closed = false;
                            break;
                        }
                    }
                }
                table
            };
            if !closed {
                return Err(AlgebraError::NotClosed);
            }
            ops.push(Operation { name: op.name.clone(), arity: op.arity, table });
        }
        let alg = FiniteAlgebra {
            size: k,
            ops,
            idempotent: self.idempotent,
            taylor: self.taylor.clone(),
            redop: self.redop.clone(),
        };
        Ok((alg, elements))
    }

    /// The power algebra `A^k` with coordinatewise operations; tuples are
    /// numbered in mixed radix, first coordinate most significant.
    pub fn power(&self, k: usize, cap: usize) -> Result<FiniteAlgebra, AlgebraError> {
        let size = self.size.checked_pow(k as u32).unwrap_or(usize::MAX);
        if size > cap {
            return Err(AlgebraError::PowerCap { size, cap });
        }
        if k == 1 {
            return Ok(self.clone());
        }
        let n = self.size;
        let ops = self
            .ops
            .iter()
            .map(|op| {
                Operation::from_fn(op.name.clone(), op.arity, size, |args| {
                    let mut out = 0usize;
                    let mut coord = vec![0; op.arity];
                    for c in 0..k {
                        let shift = n.pow((k - 1 - c) as u32);
                        for (slot, &a) in coord.iter_mut().zip(args) {
                            *slot = ((a as usize / shift) % n) as Value;
                        }
                        out = out * n + op.eval(n, &coord) as usize;
                    }
                    out as Value
                })
            })
            .collect();
        let mut alg = FiniteAlgebra::new(size, ops)?;
        alg.idempotent = self.idempotent;
        alg.taylor = self.taylor.clone();
        alg.redop = self.redop.clone();
        Ok(alg)
    }
}

/// A term: a projection onto an argument position or an operation applied to
/// subterms.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Var(usize),
    Op(String, Vec<Term>),
}

impl Term {
    pub fn var(i: usize) -> Term {
        Term::Var(i)
    }

    /// `name(x1, .., xk)`.
    pub fn basic(name: &str, arity: usize) -> Term {
        Term::Op(name.into(), (0..arity).map(Term::Var).collect())
    }

    pub fn op(name: &str, args: Vec<Term>) -> Term {
        Term::Op(name.into(), args)
    }

    /// Number of distinct argument positions, i.e. one past the largest variable.
    pub fn num_vars(&self) -> usize {
        match self {
            Term::Var(i) => i + 1,
            Term::Op(_, args) => args.iter().map(Term::num_vars).max().unwrap_or(0),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Term::Var(_) => 0,
            Term::Op(_, args) => 1 + args.iter().map(Term::depth).max().unwrap_or(0),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(i) => write!(f, "x{}", i + 1),
            Term::Op(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl FromStr for Term {
    type Err = AlgebraError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let (term, rest) = parse_term(&compact)?;
        if !rest.is_empty() {
            return Err(AlgebraError::TermParse(format!("trailing input {rest:?}")));
        }
        Ok(term)
    }
}

fn parse_term(s: &str) -> Result<(Term, &str), AlgebraError> {
    let end = s.find(['(', ')', ',']).unwrap_or(s.len());
    let (head, rest) = s.split_at(end);
    if head.is_empty() {
        return Err(AlgebraError::TermParse(format!("expected a name at {s:?}")));
    }
    if let Some(stripped) = rest.strip_prefix('(') {
        let mut args = Vec::new();
        let mut rest = stripped;
        loop {
            let (arg, after) = parse_term(rest)?;
            args.push(arg);
            if let Some(after) = after.strip_prefix(',') {
                rest = after;
            } else if let Some(after) = after.strip_prefix(')') {
                return Ok((Term::Op(head.into(), args), after));
            } else {
                return Err(AlgebraError::TermParse(format!("unclosed argument list in {s:?}")));
            }
        }
    }
    let index = head
        .strip_prefix('x')
        .and_then(|d| d.parse::<usize>().ok())
        .filter(|&i| i >= 1)
        .ok_or_else(|| AlgebraError::TermParse(format!("variables are written x1, x2, ..; got {head:?}")))?;
    Ok((Term::Var(index - 1), rest))
}

/// Value of the term operation `t^A` at `args`.
pub fn apply_term(algebra: &FiniteAlgebra, term: &Term, args: &[Value]) -> Result<Value, AlgebraError> {
    match term {
        Term::Var(i) => args.get(*i).copied().ok_or(AlgebraError::MissingArgument { var: i + 1, given: args.len() }),
        Term::Op(name, sub) => {
            let vals = sub.iter().map(|t| apply_term(algebra, t, args)).collect::<Result<Vec<_>, _>>()?;
            algebra.apply(name, &vals)
        }
    }
}

/// An equation `lhs ≈ rhs` between terms over shared variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Identity {
    pub lhs: Term,
    pub rhs: Term,
}

impl Identity {
    pub fn new(lhs: Term, rhs: Term) -> Self {
        Identity { lhs, rhs }
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ≈ {}", self.lhs, self.rhs)
    }
}

/// True iff both sides agree under every assignment of universe elements.
pub fn check_identity(algebra: &FiniteAlgebra, identity: &Identity) -> Result<bool, AlgebraError> {
    let k = identity.lhs.num_vars().max(identity.rhs.num_vars());
    let universe: Vec<Value> = algebra.universe().collect();
    let mut result = Ok(true);
    let mut done = false;
    for_each_tuple(&universe, k, |args| {
        if done {
            return;
        }
        match (apply_term(algebra, &identity.lhs, args), apply_term(algebra, &identity.rhs, args)) {
            (Ok(l), Ok(r)) if l == r => {}
            (Ok(_), Ok(_)) => {
                result = Ok(false);
                done = true;
            }
            (Err(e), _) | (_, Err(e)) => {
                result = Err(e);
                done = true;
            }
        }
    });
    result
}

pub fn check_identities(algebra: &FiniteAlgebra, identities: &[Identity]) -> Result<bool, AlgebraError> {
    for id in identities {
        if !check_identity(algebra, id)? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn x(i: usize) -> Term {
    Term::Var(i)
}

/// `m(x,x,y) ≈ y` and `m(y,x,x) ≈ y`.
pub fn maltsev_identities(m: &str) -> Vec<Identity> {
    vec![
        Identity::new(Term::op(m, vec![x(0), x(0), x(1)]), x(1)),
        Identity::new(Term::op(m, vec![x(1), x(0), x(0)]), x(1)),
    ]
}

/// `g(x,x,y) ≈ g(x,y,x) ≈ g(y,x,x) ≈ x`.
pub fn majority_identities(g: &str) -> Vec<Identity> {
    vec![
        Identity::new(Term::op(g, vec![x(0), x(0), x(1)]), x(0)),
        Identity::new(Term::op(g, vec![x(0), x(1), x(0)]), x(0)),
        Identity::new(Term::op(g, vec![x(1), x(0), x(0)]), x(0)),
    ]
}

/// Idempotence, commutativity and associativity of a binary `f`.
pub fn semilattice_identities(f: &str) -> Vec<Identity> {
    vec![
        Identity::new(Term::op(f, vec![x(0), x(0)]), x(0)),
        Identity::new(Term::op(f, vec![x(0), x(1)]), Term::op(f, vec![x(1), x(0)])),
        Identity::new(
            Term::op(f, vec![x(0), Term::op(f, vec![x(1), x(2)])]),
            Term::op(f, vec![Term::op(f, vec![x(0), x(1)]), x(2)]),
        ),
    ]
}

/// `t(y,x,..,x) ≈ t(x,y,x,..,x) ≈ .. ≈ t(x,..,x,y)` together with idempotence.
pub fn taylor_identities(t: &str, arity: usize) -> Vec<Identity> {
    let place = |pos: usize| Term::op(t, (0..arity).map(|i| if i == pos { x(1) } else { x(0) }).collect());
    let mut ids = vec![Identity::new(Term::op(t, vec![x(0); arity]), x(0))];
    ids.extend((1..arity).map(|pos| Identity::new(place(0), place(pos))));
    ids
}

/// Checks `t(y,x,..,x) = t(x,y,x,..,x) = .. = t(x,..,x,y)` and `t(x,..,x) = x`
/// for a term of any shape by evaluation.
pub fn is_weak_near_unanimity(algebra: &FiniteAlgebra, term: &Term) -> Result<bool, AlgebraError> {
    let n = term.num_vars().max(1);
    for a in algebra.universe() {
        if apply_term(algebra, term, &vec![a; n])? != a {
            return Ok(false);
        }
        for b in algebra.universe() {
            let place = |pos: usize| -> Vec<Value> { (0..n).map(|i| if i == pos { b } else { a }).collect() };
            let first = apply_term(algebra, term, &place(0))?;
            for pos in 1..n {
                if apply_term(algebra, term, &place(pos))? != first {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// The least subuniverse containing `seed`.
pub fn subalgebra_generated(algebra: &FiniteAlgebra, seed: &BTreeSet<Value>) -> Result<BTreeSet<Value>, AlgebraError> {
    if seed.is_empty() {
        return Err(AlgebraError::EmptySeed);
    }
    if let Some(&v) = seed.iter().find(|&&v| v as usize >= algebra.size) {
        return Err(AlgebraError::ValueOutOfRange { value: v, universe: algebra.size });
    }
    let mut closed = seed.clone();
    loop {
        let elements: Vec<Value> = closed.iter().copied().collect();
        let mut fresh = Vec::new();
        for op in &algebra.ops {
            for_each_tuple(&elements, op.arity, |args| {
                let v = op.eval(algebra.size, args);
                if !closed.contains(&v) {
                    fresh.push(v);
                }
            });
        }
        if fresh.is_empty() {
            return Ok(closed);
        }
        closed.extend(fresh);
    }
}

/// True iff `subset` is closed under every operation.
pub fn is_subuniverse(algebra: &FiniteAlgebra, subset: &BTreeSet<Value>) -> bool {
    !subset.is_empty() && subalgebra_generated(algebra, subset).map(|s| &s == subset).unwrap_or(false)
}

/// All non-empty subuniverses contained in `within`, by closing every subset.
pub fn subuniverses_within(algebra: &FiniteAlgebra, within: &BTreeSet<Value>) -> Vec<BTreeSet<Value>> {
    let elements: Vec<Value> = within.iter().copied().collect();
    let mut found = BTreeSet::new();
    for mask in 1u64..(1u64 << elements.len()) {
        let seed: BTreeSet<Value> =
            elements.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &v)| v).collect();
        if let Ok(closed) = subalgebra_generated(algebra, &seed) {
            if closed.is_subset(within) {
                found.insert(closed);
            }
        }
    }
    found.into_iter().collect()
}

/// A partition of `{0, .., n-1}` in canonical form: block labels are assigned
/// in order of first appearance.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    labels: Vec<usize>,
}

impl Partition {
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut seen = HashMap::new();
        let labels = labels
            .iter()
            .map(|l| {
                let next = seen.len();
                *seen.entry(*l).or_insert(next)
            })
            .collect();
        Partition { labels }
    }

    pub fn from_blocks(n: usize, blocks: &[Vec<Value>]) -> Option<Self> {
        let mut labels = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            for &v in block {
                let slot = labels.get_mut(v as usize)?;
                if *slot != usize::MAX {
                    return None;
                }
                *slot = b;
            }
        }
        if labels.contains(&usize::MAX) {
            return None;
        }
        Some(Partition::from_labels(&labels))
    }

    pub fn diagonal(n: usize) -> Self {
        Partition { labels: (0..n).collect() }
    }

    pub fn full(n: usize) -> Self {
        Partition { labels: vec![0; n] }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn block_of(&self, v: Value) -> usize {
        self.labels[v as usize]
    }

    pub fn num_blocks(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn related(&self, a: Value, b: Value) -> bool {
        self.labels[a as usize] == self.labels[b as usize]
    }

    pub fn is_diagonal(&self) -> bool {
        self.num_blocks() == self.labels.len()
    }

    pub fn is_full(&self) -> bool {
        self.num_blocks() <= 1
    }

    /// Blocks in order of their least element.
    pub fn blocks(&self) -> Vec<Vec<Value>> {
        let mut blocks = vec![Vec::new(); self.num_blocks()];
        for (v, &l) in self.labels.iter().enumerate() {
            blocks[l].push(v as Value);
        }
        blocks
    }

    /// `self ⊆ other` as equivalence relations.
    pub fn refines(&self, other: &Partition) -> bool {
        let mut image = vec![usize::MAX; self.num_blocks()];
        self.labels.iter().zip(&other.labels).all(|(&a, &b)| {
            if image[a] == usize::MAX {
                image[a] = b;
            }
            image[a] == b
        })
    }

    pub fn join(&self, other: &Partition) -> Partition {
        let mut uf = UnionFind::new(self.labels.len());
        for p in [self, other] {
            let mut first = vec![usize::MAX; p.num_blocks()];
            for (v, &l) in p.labels.iter().enumerate() {
                if first[l] == usize::MAX {
                    first[l] = v;
                } else {
                    uf.union(first[l], v);
                }
            }
        }
        uf.partition()
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }

    fn partition(&mut self) -> Partition {
        let roots: Vec<usize> = (0..self.parent.len()).map(|v| self.find(v)).collect();
        Partition::from_labels(&roots)
    }
}

/// A congruence of an algebra together with its maximality flag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Congruence {
    pub partition: Partition,
    pub is_maximal: bool,
}

/// True iff the partition is compatible with every operation.
pub fn is_compatible(algebra: &FiniteAlgebra, partition: &Partition) -> bool {
    let n = algebra.size;
    let universe: Vec<Value> = algebra.universe().collect();
    for op in &algebra.ops {
        // changing one coordinate at a time within a block suffices
        let mut ok = true;
        for_each_tuple(&universe, op.arity, |args| {
            if !ok {
                return;
            }
            let base = op.eval(n, args);
            let mut moved = args.to_vec();
            for pos in 0..op.arity {
                for b in 0..n as Value {
                    if partition.related(args[pos], b) {
                        moved[pos] = b;
                        if !partition.related(base, op.eval(n, &moved)) {
                            ok = false;
                            return;
                        }
                    }
                }
                moved[pos] = args[pos];
            }
        });
        if !ok {
            return false;
        }
    }
    true
}

/// The least congruence relating `a` and `b`.
pub fn principal_congruence(algebra: &FiniteAlgebra, a: Value, b: Value) -> Partition {
    let n = algebra.size;
    let universe: Vec<Value> = algebra.universe().collect();
    let mut uf = UnionFind::new(n);
    let mut queue = Vec::new();
    if uf.union(a as usize, b as usize) {
        queue.push((a, b));
    }
    let mut args = Vec::new();
    while let Some((p, q)) = queue.pop() {
        for op in &algebra.ops {
            for pos in 0..op.arity {
                for_each_tuple(&universe, op.arity - 1, |rest| {
                    args.clear();
                    args.extend_from_slice(&rest[..pos]);
                    args.push(p);
                    args.extend_from_slice(&rest[pos..]);
                    let u = op.eval(n, &args);
                    args[pos] = q;
                    let v = op.eval(n, &args);
                    if uf.union(u as usize, v as usize) {
                        queue.push((u, v));
                    }
                });
            }
        }
    }
    uf.partition()
}

/// Every congruence, each flagged maximal iff it is a coatom of the lattice.
/// Sorted by block structure.
pub fn congruences(algebra: &FiniteAlgebra, cap: usize) -> Result<Vec<Congruence>, AlgebraError> {
    let n = algebra.size;
    if n > cap {
        return Err(AlgebraError::CongruenceCap { size: n, cap });
    }
    let mut principals = BTreeSet::new();
    for a in 0..n as Value {
        for b in a + 1..n as Value {
            principals.insert(principal_congruence(algebra, a, b));
        }
    }
    let mut all: BTreeSet<Partition> = BTreeSet::new();
    all.insert(Partition::diagonal(n));
    let mut frontier = vec![Partition::diagonal(n)];
    while let Some(c) = frontier.pop() {
        for p in &principals {
            let j = c.join(p);
            if all.insert(j.clone()) {
                frontier.push(j);
            }
        }
    }
    let all: Vec<Partition> = all.into_iter().collect();
    let mut result: Vec<Congruence> = all
        .iter()
        .map(|c| {
            let is_maximal = !c.is_full() && !all.iter().any(|d| !d.is_full() && d != c && c.refines(d));
            Congruence { partition: c.clone(), is_maximal }
        })
        .collect();
    result.sort_by_key(|a| a.partition.blocks());
    Ok(result)
}

/// Only the diagonal and full congruences exist (one-element algebras count as simple).
pub fn is_simple(algebra: &FiniteAlgebra, cap: usize) -> Result<bool, AlgebraError> {
    if algebra.size <= 1 {
        return Ok(true);
    }
    if algebra.size > cap {
        return Err(AlgebraError::CongruenceCap { size: algebra.size, cap });
    }
    // simple iff every principal congruence is full
    for a in 0..algebra.size as Value {
        for b in a + 1..algebra.size as Value {
            if !principal_congruence(algebra, a, b).is_full() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Maximal congruences, lexicographically least block structure first.
pub fn maximal_congruences(algebra: &FiniteAlgebra, cap: usize) -> Result<Vec<Partition>, AlgebraError> {
    Ok(congruences(algebra, cap)?.into_iter().filter(|c| c.is_maximal).map(|c| c.partition).collect())
}

/// The quotient algebra; block `i` is the `i`-th block in order of least element.
pub fn quotient(algebra: &FiniteAlgebra, partition: &Partition) -> Result<FiniteAlgebra, AlgebraError> {
    if partition.len() != algebra.size || !is_compatible(algebra, partition) {
        return Err(AlgebraError::NotACongruence);
    }
    let reps: Vec<Value> = partition.blocks().iter().map(|b| b[0]).collect();
    let k = reps.len();
    let ops = algebra
        .ops
        .iter()
        .map(|op| {
            Operation::from_fn(op.name.clone(), op.arity, k, |args| {
                let orig: Vec<Value> = args.iter().map(|&a| reps[a as usize]).collect();
                partition.block_of(op.eval(algebra.size, &orig)) as Value
            })
        })
        .collect();
    let mut q = FiniteAlgebra::new(k, ops)?;
    q.idempotent = algebra.idempotent;
    q.redop = algebra.redop.clone();
    q.taylor = algebra.taylor.clone();
    Ok(q)
}

/// True iff `inner` absorbs `outer` via `term`: one argument from `outer`
/// and all others from `inner` always lands in `inner`.
pub fn is_absorbing(
    algebra: &FiniteAlgebra,
    outer: &BTreeSet<Value>,
    inner: &BTreeSet<Value>,
    term: &Term,
) -> Result<bool, AlgebraError> {
    if !inner.is_subset(outer) {
        return Err(AlgebraError::NotSubset);
    }
    let m = term.num_vars();
    let inner_v: Vec<Value> = inner.iter().copied().collect();
    for pos in 0..m {
        for &b in outer {
            let mut result = Ok(true);
            for_each_tuple(&inner_v, m.saturating_sub(1), |rest| {
                if !matches!(result, Ok(true)) {
                    return;
                }
                let mut args = rest.to_vec();
                args.insert(pos, b);
                match apply_term(algebra, term, &args) {
                    Ok(v) if inner.contains(&v) => {}
                    Ok(_) => result = Ok(false),
                    Err(e) => result = Err(e),
                }
            });
            if !result? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// An abelian group on a set of elements, by addition table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupStructure {
    pub elements: Vec<Value>,
    pub zero: Value,
    index: HashMap<Value, usize>,
    // sum table over element indices
    sum: Vec<usize>,
}

impl GroupStructure {
    fn from_table(elements: Vec<Value>, zero: Value, sum: Vec<usize>) -> Self {
        let index = elements.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        GroupStructure { elements, zero, index, sum }
    }

    /// `Z_q` on `{0, .., q-1}`.
    pub fn cyclic(q: usize) -> Self {
        let sum = (0..q * q).map(|i| (i / q + i % q) % q).collect();
        Self::from_table((0..q as Value).collect(), 0, sum)
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn contains(&self, a: Value) -> bool {
        self.index.contains_key(&a)
    }

    pub fn add(&self, a: Value, b: Value) -> Value {
        let n = self.elements.len();
        self.elements[self.sum[self.index[&a] * n + self.index[&b]]]
    }

    pub fn neg(&self, a: Value) -> Value {
        *self.elements.iter().find(|&&b| self.add(a, b) == self.zero).expect("group has inverses")
    }

    pub fn sub(&self, a: Value, b: Value) -> Value {
        self.add(a, self.neg(b))
    }
}

/// Builds `x + y := m(x, z, y)` with `z` the least element and checks the
/// abelian group axioms and `m(x,y,w) = x - y + w`. `m` is given on indices
/// `0..k` of `elements`.
fn affine_group_from(elements: &[Value], m: impl Fn(usize, usize, usize) -> usize) -> Option<GroupStructure> {
    let k = elements.len();
    let zero = 0;
    let sum: Vec<usize> = (0..k * k).map(|i| m(i / k, zero, i % k)).collect();
    let add = |a: usize, b: usize| sum[a * k + b];
    for a in 0..k {
        if add(a, zero) != a || add(zero, a) != a {
            return None;
        }
        for b in 0..k {
            if add(a, b) != add(b, a) {
                return None;
            }
            for c in 0..k {
                if add(a, add(b, c)) != add(add(a, b), c) {
                    return None;
                }
            }
        }
    }
    let neg: Vec<usize> = (0..k).map(|a| (0..k).find(|&b| add(a, b) == zero)).collect::<Option<_>>()?;
    for a in 0..k {
        for b in 0..k {
            for c in 0..k {
                if m(a, b, c) != add(add(a, neg[b]), c) {
                    return None;
                }
            }
        }
    }
    Some(GroupStructure::from_table(elements.to_vec(), elements[zero], sum))
}

/// Verifies that `maltsev` makes `subuniverse` an affine algebra and returns
/// the group with the least element as zero; `Ok(None)` when the group
/// axioms fail.
pub fn verify_affine_witness(
    algebra: &FiniteAlgebra,
    subuniverse: &BTreeSet<Value>,
    maltsev: &Term,
) -> Result<Option<GroupStructure>, AlgebraError> {
    let elements: Vec<Value> = subuniverse.iter().copied().collect();
    let k = elements.len();
    let mut table = vec![0usize; k * k * k];
    let index: HashMap<Value, usize> = elements.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    for a in 0..k {
        for b in 0..k {
            for c in 0..k {
                let v = apply_term(algebra, maltsev, &[elements[a], elements[b], elements[c]])?;
                table[(a * k + b) * k + c] = *index.get(&v).ok_or(AlgebraError::NotClosed)?;
            }
        }
    }
    let m = |a: usize, b: usize, c: usize| table[(a * k + b) * k + c];
    if (0..k).any(|a| (0..k).any(|b| m(a, a, b) != b || m(b, a, a) != b)) {
        return Err(AlgebraError::NotMaltsev);
    }
    Ok(affine_group_from(&elements, m))
}

/// Bulatov's edge colours.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Colour {
    /// semilattice
    Red,
    /// majority
    Yellow,
    /// affine
    Blue,
    None,
}

impl fmt::Display for Colour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Colour::Red => "red",
            Colour::Yellow => "yellow",
            Colour::Blue => "blue",
            Colour::None => "none",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeColour {
    pub a: Value,
    pub b: Value,
    pub colour: Colour,
    /// `Sg(a, b)` in ascending order.
    pub subalgebra: Vec<Value>,
    /// Blocks (in original values) of the separating maximal congruence of `Sg(a, b)`.
    pub congruence: Vec<Vec<Value>>,
    pub witness: Option<Term>,
    pub thin: bool,
}

impl EdgeColour {
    /// The congruence block containing `v`.
    pub fn block_of(&self, v: Value) -> &[Value] {
        self.congruence.iter().find(|b| b.contains(&v)).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Term operations in `nvars` variables up to `depth`, deduplicated by table.
/// Tables are indexed like operation tables over the algebra's universe.
fn term_clone(algebra: &FiniteAlgebra, nvars: usize, depth: usize) -> Vec<(Vec<Value>, Term)> {
    let n = algebra.size;
    let len = n.pow(nvars as u32);
    let mut seen: HashMap<Vec<Value>, ()> = HashMap::new();
    let mut terms: Vec<(Vec<Value>, Term)> = Vec::new();
    let mut args = vec![0; nvars];
    for v in 0..nvars {
        let table: Vec<Value> = (0..len)
            .map(|i| {
                decode(i, n, &mut args);
                args[v]
            })
            .collect();
        if seen.insert(table.clone(), ()).is_none() {
            terms.push((table, Term::Var(v)));
        }
    }
    for _ in 0..depth {
        let level = terms.len();
        let mut fresh = Vec::new();
        for op in &algebra.ops {
            let choices: Vec<Value> = (0..level as Value).collect();
            let mut inner = vec![0; op.arity];
            for_each_tuple(&choices, op.arity, |pick| {
                let table: Vec<Value> = (0..len)
                    .map(|i| {
                        for (slot, &t) in inner.iter_mut().zip(pick) {
                            *slot = terms[t as usize].0[i];
                        }
                        op.eval(n, &inner)
                    })
                    .collect();
                if seen.insert(table.clone(), ()).is_none() {
                    let term = Term::Op(op.name.clone(), pick.iter().map(|&t| terms[t as usize].1.clone()).collect());
                    fresh.push((table, term));
                }
            });
        }
        if fresh.is_empty() {
            break;
        }
        terms.extend(fresh);
    }
    terms
}

fn is_semilattice_table(n: usize, t: &[Value]) -> bool {
    let f = |a: Value, b: Value| t[a as usize * n + b as usize];
    (0..n as Value).all(|a| {
        f(a, a) == a
            && (0..n as Value).all(|b| f(a, b) == f(b, a) && (0..n as Value).all(|c| f(a, f(b, c)) == f(f(a, b), c)))
    })
}

fn is_majority_table(n: usize, t: &[Value]) -> bool {
    let g = |a: Value, b: Value, c: Value| t[(a as usize * n + b as usize) * n + c as usize];
    (0..n as Value).all(|a| (0..n as Value).all(|b| g(a, a, b) == a && g(a, b, a) == a && g(b, a, a) == a))
}

fn is_affine_table(n: usize, t: &[Value]) -> bool {
    let m = |a: usize, b: usize, c: usize| t[(a * n + b) * n + c] as usize;
    if (0..n).any(|a| (0..n).any(|b| m(a, a, b) != b || m(b, a, a) != b)) {
        return false;
    }
    let elements: Vec<Value> = (0..n as Value).collect();
    affine_group_from(&elements, m).is_some()
}

/// A Maltsev term that is affine on the given algebra, searching basic
/// operations first and then the term clone up to `depth`.
pub fn find_affine_term(algebra: &FiniteAlgebra, depth: usize) -> Option<Term> {
    let n = algebra.size;
    if n == 1 {
        return Some(Term::Var(0));
    }
    for op in algebra.ops.iter().filter(|o| o.arity == 3) {
        if is_affine_table(n, &op.table) {
            return Some(Term::basic(&op.name, 3));
        }
    }
    term_clone(algebra, 3, depth).into_iter().find(|(t, _)| is_affine_table(n, t)).map(|(_, term)| term)
}

/// Colours the pair `{a, b}` using the lexicographically least maximal
/// congruence of `Sg(a, b)` and witness terms up to `depth`; red is preferred
/// over yellow, and yellow over blue.
pub fn colour_edge(
    algebra: &FiniteAlgebra,
    a: Value,
    b: Value,
    depth: usize,
    cap: usize,
) -> Result<EdgeColour, AlgebraError> {
    let seed: BTreeSet<Value> = [a, b].into_iter().collect();
    let sg = subalgebra_generated(algebra, &seed)?;
    let (sub, elements) = algebra.restrict(&sg)?;
    let local = |v: Value| elements.iter().position(|&e| e == v).expect("generator in Sg") as Value;
    let (la, lb) = (local(a), local(b));
    let theta = maximal_congruences(&sub, cap)?
        .into_iter()
        .find(|p| !p.related(la, lb))
        .unwrap_or_else(|| Partition::diagonal(sub.size));
    let congruence: Vec<Vec<Value>> =
        theta.blocks().iter().map(|blk| blk.iter().map(|&v| elements[v as usize]).collect()).collect();
    let thin = theta.is_diagonal();
    let q = quotient(&sub, &theta)?;
    let n = q.size;
    let found = |colour: Colour, witness: Term| EdgeColour {
        a,
        b,
        colour,
        subalgebra: elements.clone(),
        congruence: congruence.clone(),
        witness: Some(witness),
        thin,
    };
    if let Some((_, t)) = term_clone(&q, 2, depth).into_iter().find(|(t, _)| is_semilattice_table(n, t)) {
        return Ok(found(Colour::Red, t));
    }
    let ternary = term_clone(&q, 3, depth);
    if let Some((_, t)) = ternary.iter().find(|(t, _)| is_majority_table(n, t)) {
        return Ok(found(Colour::Yellow, t.clone()));
    }
    if let Some((_, t)) = ternary.iter().find(|(t, _)| is_affine_table(n, t)) {
        return Ok(found(Colour::Blue, t.clone()));
    }
    Ok(EdgeColour { a, b, colour: Colour::None, subalgebra: elements, congruence, witness: None, thin })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColouredGraph {
    pub edges: Vec<EdgeColour>,
    pub connected: bool,
}

impl ColouredGraph {
    pub fn colour(&self, a: Value, b: Value) -> Option<&EdgeColour> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.edges.iter().find(|e| e.a == lo && e.b == hi)
    }

    pub fn count(&self, colour: Colour) -> usize {
        self.edges.iter().filter(|e| e.colour == colour).count()
    }
}

/// Colours every pair and reports whether the coloured edges connect the universe.
pub fn coloured_graph(algebra: &FiniteAlgebra, depth: usize, cap: usize) -> Result<ColouredGraph, AlgebraError> {
    let n = algebra.size;
    let mut edges = Vec::new();
    let mut uf = UnionFind::new(n);
    for a in 0..n as Value {
        for b in a + 1..n as Value {
            let e = colour_edge(algebra, a, b, depth, cap)?;
            if e.colour != Colour::None {
                uf.union(a as usize, b as usize);
            }
            edges.push(e);
        }
    }
    let connected = uf.partition().num_blocks() <= 1;
    Ok(ColouredGraph { edges, connected })
}

/// Groups congruence blocks by label; handy for tests and reports.
pub fn blocks_as_sets(p: &Partition) -> BTreeMap<usize, BTreeSet<Value>> {
    let mut out: BTreeMap<usize, BTreeSet<Value>> = BTreeMap::new();
    for (v, &l) in p.labels.iter().enumerate() {
        out.entry(l).or_default().insert(v as Value);
    }
    out
}
