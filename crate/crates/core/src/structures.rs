//! Relational templates, CSP instances, and the binary multiconsistency graph.
//!
//! Variables are stored 0-based internally and printed 1-based; values are
//! always 0-based integers below the universe size.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// An element of a finite universe `{0, .., n-1}`.
pub type Value = u32;

/// A set of binary pairs, the representation of every `E_{x,y}`.
pub type PairSet = BTreeSet<(Value, Value)>;

/// Default cap on the total number of domain elements for exact core checks.
pub const DEFAULT_CORE_CAP: usize = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StructureError {
    #[error("partial assignment: variable {0} has no value")]
    PartialAssignment(usize),
    #[error("signature mismatch: {0}")]
    SignatureMismatch(String),
    #[error("core check infeasible ({size} domain elements exceed cap {cap}); pass --assume-core")]
    CoreCheckInfeasible { size: usize, cap: usize },
    #[error("value {value} outside universe of size {universe}")]
    ValueOutOfRange { value: Value, universe: usize },
    #[error("relation {name}: tuple of length {found} in relation of arity {arity}")]
    TupleArity { name: String, arity: usize, found: usize },
    #[error("duplicate relation name {0}")]
    DuplicateRelation(String),
    #[error("constraint on relation {name}: scope length {scope} differs from arity {arity}")]
    ScopeArity { name: String, scope: usize, arity: usize },
    #[error("variable {var} out of range (instance has {num_vars} variables)")]
    VariableOutOfRange { var: usize, num_vars: usize },
    #[error("domain of variable {0} is empty")]
    EmptyDomain(usize),
    #[error("map of length {found} on a universe of size {expected}")]
    MapLength { found: usize, expected: usize },
    #[error("unknown relation {0}")]
    UnknownRelation(String),
}

/// A named relation given as an explicit sorted tuple set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Relation {
    pub name: String,
    pub arity: usize,
    pub tuples: BTreeSet<Vec<Value>>,
}

impl Relation {
    pub fn new(
        name: impl Into<String>,
        arity: usize,
        tuples: impl IntoIterator<Item = Vec<Value>>,
    ) -> Result<Self, StructureError> {
        let name = name.into();
        let tuples: BTreeSet<Vec<Value>> = tuples.into_iter().collect();
        if let Some(t) = tuples.iter().find(|t| t.len() != arity) {
            return Err(StructureError::TupleArity { name, arity, found: t.len() });
        }
        Ok(Relation { name, arity, tuples })
    }

    pub fn binary(name: impl Into<String>, pairs: impl IntoIterator<Item = (Value, Value)>) -> Self {
        Relation {
            name: name.into(),
            arity: 2,
            tuples: pairs.into_iter().map(|(a, b)| vec![a, b]).collect(),
        }
    }

    pub fn contains(&self, tuple: &[Value]) -> bool {
        self.tuples.contains(tuple)
    }

    fn check_range(&self, universe: usize) -> Result<(), StructureError> {
        for t in &self.tuples {
            if let Some(&v) = t.iter().find(|&&v| v as usize >= universe) {
                return Err(StructureError::ValueOutOfRange { value: v, universe });
            }
        }
        Ok(())
    }
}

/// A finite relational structure `(A, Γ)` on the universe `{0, .., n-1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationalTemplate {
    pub universe_size: usize,
    pub relations: Vec<Relation>,
}

impl RelationalTemplate {
    pub fn new(universe_size: usize, relations: Vec<Relation>) -> Result<Self, StructureError> {
        let mut names = BTreeSet::new();
        for r in &relations {
            if !names.insert(r.name.as_str()) {
                return Err(StructureError::DuplicateRelation(r.name.clone()));
            }
            r.check_range(universe_size)?;
        }
        Ok(RelationalTemplate { universe_size, relations })
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.iter().find(|r| r.name == name)
    }

    fn signature(&self) -> BTreeMap<&str, usize> {
        self.relations.iter().map(|r| (r.name.as_str(), r.arity)).collect()
    }
}

/// A constraint: a scope of (0-based) variables and the relation it must land in.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub scope: Vec<usize>,
    pub relation: Relation,
    /// Whether the relation was written inline rather than taken from a template.
    pub inline: bool,
}

impl Constraint {
    pub fn new(scope: Vec<usize>, relation: Relation) -> Self {
        Constraint { scope, relation, inline: false }
    }

    pub fn inline(scope: Vec<usize>, relation: Relation) -> Self {
        Constraint { scope, relation, inline: true }
    }
}

/// A CSP instance `(V, A, C)` with per-variable domains.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    universe_size: usize,
    domains: Vec<BTreeSet<Value>>,
    constraints: Vec<Constraint>,
}

impl Instance {
    pub fn new(
        universe_size: usize,
        domains: Vec<BTreeSet<Value>>,
        constraints: Vec<Constraint>,
    ) -> Result<Self, StructureError> {
        let num_vars = domains.len();
        for (x, d) in domains.iter().enumerate() {
            if d.is_empty() {
                return Err(StructureError::EmptyDomain(x + 1));
            }
            if let Some(&v) = d.iter().find(|&&v| v as usize >= universe_size) {
                return Err(StructureError::ValueOutOfRange { value: v, universe: universe_size });
            }
        }
        for c in &constraints {
            if c.scope.len() != c.relation.arity {
                return Err(StructureError::ScopeArity {
                    name: c.relation.name.clone(),
                    scope: c.scope.len(),
                    arity: c.relation.arity,
                });
            }
            if let Some(&x) = c.scope.iter().find(|&&x| x >= num_vars) {
                return Err(StructureError::VariableOutOfRange { var: x + 1, num_vars });
            }
            c.relation.check_range(universe_size)?;
        }
        Ok(Instance { universe_size, domains, constraints })
    }

    /// An instance whose every domain is the full universe.
    pub fn with_full_domains(
        universe_size: usize,
        num_vars: usize,
        constraints: Vec<Constraint>,
    ) -> Result<Self, StructureError> {
        let full: BTreeSet<Value> = (0..universe_size as Value).collect();
        Self::new(universe_size, vec![full; num_vars], constraints)
    }

    pub fn universe_size(&self) -> usize {
        self.universe_size
    }

    pub fn num_vars(&self) -> usize {
        self.domains.len()
    }

    pub fn domains(&self) -> &[BTreeSet<Value>] {
        &self.domains
    }

    pub fn domain(&self, x: usize) -> &BTreeSet<Value> {
        &self.domains[x]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn max_arity(&self) -> usize {
        self.constraints.iter().map(|c| c.relation.arity).max().unwrap_or(0)
    }
}

/// A (possibly partial) map from 0-based variables to values.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(BTreeMap<usize, Value>);

impl Assignment {
    pub fn new() -> Self {
        Assignment(BTreeMap::new())
    }

    pub fn from_values(values: &[Value]) -> Self {
        Assignment(values.iter().copied().enumerate().collect())
    }

    pub fn get(&self, x: usize) -> Option<Value> {
        self.0.get(&x).copied()
    }

    pub fn set(&mut self, x: usize, v: Value) {
        self.0.insert(x, v);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Value)> + '_ {
        self.0.iter().map(|(&x, &v)| (x, v))
    }

    /// Values of variables `0..n`, or `None` if any is missing.
    pub fn to_values(&self, n: usize) -> Option<Vec<Value>> {
        (0..n).map(|x| self.get(x)).collect()
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (x, v) in self.iter() {
            writeln!(f, "{} {}", x + 1, v)?;
        }
        Ok(())
    }
}

/// True iff every variable takes a value in its domain and every constraint holds.
pub fn evaluate_assignment(instance: &Instance, assignment: &Assignment) -> Result<bool, StructureError> {
    let mut values = Vec::with_capacity(instance.num_vars());
    for x in 0..instance.num_vars() {
        values.push(assignment.get(x).ok_or(StructureError::PartialAssignment(x + 1))?);
    }
    if values.iter().enumerate().any(|(x, v)| !instance.domain(x).contains(v)) {
        return Ok(false);
    }
    let mut image = Vec::new();
    for c in instance.constraints() {
        image.clear();
        image.extend(c.scope.iter().map(|&x| values[x]));
        if !c.relation.contains(&image) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// True iff `map` sends every tuple of every source relation into the
/// same-named target relation.
pub fn is_homomorphism(
    map: &[Value],
    source: &RelationalTemplate,
    target: &RelationalTemplate,
) -> Result<bool, StructureError> {
    if source.signature() != target.signature() {
        return Err(StructureError::SignatureMismatch(
            "source and target relation names or arities differ".into(),
        ));
    }
    if map.len() != source.universe_size {
        return Err(StructureError::MapLength { found: map.len(), expected: source.universe_size });
    }
    if let Some(&v) = map.iter().find(|&&v| v as usize >= target.universe_size) {
        return Err(StructureError::ValueOutOfRange { value: v, universe: target.universe_size });
    }
    for rel in &source.relations {
        let image_rel = target.relation(&rel.name).expect("signatures agree");
        for t in &rel.tuples {
            let image: Vec<Value> = t.iter().map(|&a| map[a as usize]).collect();
            if !image_rel.contains(&image) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// A syntactically simple binary instance: one constraint per ordered pair of
/// variables, diagonal on equal pairs, and symmetric.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryInstance {
    universe_size: usize,
    domains: Vec<BTreeSet<Value>>,
    // row-major n x n
    edges: Vec<PairSet>,
}

impl BinaryInstance {
    /// Builds an instance with the given domains, diagonal self-constraints and
    /// full products everywhere else.
    pub fn unconstrained(universe_size: usize, domains: Vec<BTreeSet<Value>>) -> Self {
        let n = domains.len();
        let mut edges = Vec::with_capacity(n * n);
        for x in 0..n {
            for y in 0..n {
                let set: PairSet = if x == y {
                    domains[x].iter().map(|&a| (a, a)).collect()
                } else {
                    domains[x]
                        .iter()
                        .flat_map(|&a| domains[y].iter().map(move |&b| (a, b)))
                        .collect()
                };
                edges.push(set);
            }
        }
        BinaryInstance { universe_size, domains, edges }
    }

    /// Assembles an instance from raw parts without enforcing any invariant;
    /// use [`check_syntactic_simplicity`] to validate.
    pub fn from_raw(universe_size: usize, domains: Vec<BTreeSet<Value>>, edges: Vec<PairSet>) -> Self {
        assert_eq!(edges.len(), domains.len() * domains.len(), "edge table must be n x n");
        BinaryInstance { universe_size, domains, edges }
    }

    pub fn universe_size(&self) -> usize {
        self.universe_size
    }

    pub fn num_vars(&self) -> usize {
        self.domains.len()
    }

    pub fn domains(&self) -> &[BTreeSet<Value>] {
        &self.domains
    }

    pub fn domain(&self, x: usize) -> &BTreeSet<Value> {
        &self.domains[x]
    }

    pub fn constraint(&self, x: usize, y: usize) -> &PairSet {
        &self.edges[x * self.num_vars() + y]
    }

    pub fn total_domain_size(&self) -> usize {
        self.domains.iter().map(BTreeSet::len).sum()
    }

    pub fn has_empty_domain(&self) -> bool {
        self.domains.iter().any(BTreeSet::is_empty)
    }

    /// Sets `E_{x,y}` and its inverse `E_{y,x}`; for `x == y` the pairs are
    /// ignored and the diagonal is rebuilt from the domain.
    pub fn set_constraint(&mut self, x: usize, y: usize, pairs: PairSet) {
        let n = self.num_vars();
        if x == y {
            self.edges[x * n + x] = self.domains[x].iter().map(|&a| (a, a)).collect();
            return;
        }
        self.edges[y * n + x] = pairs.iter().map(|&(a, b)| (b, a)).collect();
        self.edges[x * n + y] = pairs;
    }

    /// Intersects `E_{x,y}` (and its inverse) with `pairs`.
    pub fn intersect_constraint(&mut self, x: usize, y: usize, pairs: &PairSet) {
        let current = self.constraint(x, y);
        let meet: PairSet = current.intersection(pairs).copied().collect();
        self.set_constraint(x, y, meet);
    }

    /// Restricts `P_x` to `keep` and prunes every constraint touching `x`.
    pub fn restrict_domain(&mut self, x: usize, keep: &BTreeSet<Value>) {
        let n = self.num_vars();
        self.domains[x] = self.domains[x].intersection(keep).copied().collect();
        for y in 0..n {
            let dx = &self.domains[x];
            let row: PairSet = self.edges[x * n + y]
                .iter()
                .filter(|(a, b)| dx.contains(a) && (x != y || dx.contains(b)))
                .copied()
                .collect();
            if x == y {
                self.edges[x * n + x] = row;
            } else {
                self.set_constraint(x, y, row);
            }
        }
    }

    /// Replaces `P_x` and `E_{x,y}` for every `y` wholesale (used by the
    /// shrinking step, which maps values rather than removing them).
    pub fn replace_variable(&mut self, x: usize, domain: BTreeSet<Value>, rows: Vec<PairSet>) {
        self.domains[x] = domain;
        for (y, row) in rows.into_iter().enumerate() {
            self.set_constraint(x, y, row);
        }
    }

    /// Views the instance as an ordinary instance (one constraint per pair `x < y`).
    pub fn to_instance(&self) -> Instance {
        let n = self.num_vars();
        let mut constraints = Vec::new();
        for x in 0..n {
            for y in x + 1..n {
                let rel = Relation::binary(format!("E_{}_{}", x + 1, y + 1), self.constraint(x, y).iter().copied());
                constraints.push(Constraint::inline(vec![x, y], rel));
            }
        }
        Instance { universe_size: self.universe_size, domains: self.domains.clone(), constraints }
    }

    /// The multiconsistency graph as a one-sorted relational structure.
    ///
    /// Elements are the `(x, a)` pairs with `a ∈ P_x`, numbered in ascending
    /// order; each sort is a unary relation `P_x` and each ordered pair `x != y`
    /// a binary relation `E_x_y`. Homomorphisms of this structure are exactly
    /// the sort-preserving maps that preserve every constraint.
    pub fn sorted_structure(&self) -> (RelationalTemplate, Vec<(usize, Value)>) {
        let n = self.num_vars();
        let elements: Vec<(usize, Value)> =
            (0..n).flat_map(|x| self.domains[x].iter().map(move |&a| (x, a))).collect();
        let index: BTreeMap<(usize, Value), Value> =
            elements.iter().enumerate().map(|(i, &e)| (e, i as Value)).collect();
        let mut relations = Vec::new();
        for x in 0..n {
            let tuples = self.domains[x].iter().map(|&a| vec![index[&(x, a)]]);
            relations.push(Relation::new(format!("P_{}", x + 1), 1, tuples).expect("unary"));
        }
        for x in 0..n {
            for y in 0..n {
                if x == y {
                    continue;
                }
                let tuples = self
                    .constraint(x, y)
                    .iter()
                    .filter_map(|&(a, b)| Some(vec![*index.get(&(x, a))?, *index.get(&(y, b))?]));
                relations.push(Relation::new(format!("E_{}_{}", x + 1, y + 1), 2, tuples).expect("binary"));
            }
        }
        let template = RelationalTemplate { universe_size: elements.len(), relations };
        (template, elements)
    }
}

/// One failed syntactic-simplicity condition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SimplicityViolation {
    /// `E_{x,x}` is not the diagonal of `P_x`.
    Diagonal(usize),
    /// `E_{y,x}` is not the inverse of `E_{x,y}`.
    Symmetry(usize, usize),
    /// `E_{x,y}` mentions values outside `P_x × P_y`.
    OutsideDomains(usize, usize),
}

impl fmt::Display for SimplicityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SimplicityViolation::Diagonal(x) => write!(f, "diagonal violated at {}", x + 1),
            SimplicityViolation::Symmetry(x, y) => write!(f, "symmetry violated at ({},{})", x + 1, y + 1),
            SimplicityViolation::OutsideDomains(x, y) => {
                write!(f, "constraint ({},{}) leaves its domains", x + 1, y + 1)
            }
        }
    }
}

/// Lists every violated syntactic-simplicity condition. Binarity and
/// uniqueness of the constraint per pair hold by construction of the type.
pub fn check_syntactic_simplicity(graph: &BinaryInstance) -> Vec<SimplicityViolation> {
    let n = graph.num_vars();
    let mut report = Vec::new();
    for x in 0..n {
        let diag: PairSet = graph.domain(x).iter().map(|&a| (a, a)).collect();
        if graph.constraint(x, x) != &diag {
            report.push(SimplicityViolation::Diagonal(x));
        }
    }
    for x in 0..n {
        for y in x + 1..n {
            let inverse: PairSet = graph.constraint(x, y).iter().map(|&(a, b)| (b, a)).collect();
            if graph.constraint(y, x) != &inverse {
                report.push(SimplicityViolation::Symmetry(x, y));
            }
        }
    }
    for x in 0..n {
        for y in 0..n {
            if x != y
                && graph
                    .constraint(x, y)
                    .iter()
                    .any(|(a, b)| !graph.domain(x).contains(a) || !graph.domain(y).contains(b))
            {
                report.push(SimplicityViolation::OutsideDomains(x, y));
            }
        }
    }
    report
}

/// Per-sort self map of a binary instance: `maps[x][i]` is the image of the
/// `i`-th element of `P_x` (in ascending order).
pub type SortedMap = Vec<Vec<Value>>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoreCheck {
    pub is_core: bool,
    /// A non-surjective endomorphism when `is_core` is false.
    pub witness: Option<SortedMap>,
}

/// Decides whether every sort-preserving endomorphism of the multiconsistency
/// graph is surjective, by exhaustive search over per-sort maps.
pub fn is_core(graph: &BinaryInstance, cap: usize) -> Result<CoreCheck, StructureError> {
    let size = graph.total_domain_size();
    if size > cap {
        return Err(StructureError::CoreCheckInfeasible { size, cap });
    }
    let n = graph.num_vars();
    // (variable, element) slots in order
    let slots: Vec<(usize, Value)> =
        (0..n).flat_map(|x| graph.domain(x).iter().map(move |&a| (x, a))).collect();
    let doms: Vec<Vec<Value>> = graph.domains().iter().map(|d| d.iter().copied().collect()).collect();
    let mut image: BTreeMap<(usize, Value), Value> = BTreeMap::new();
    let mut found = None;
    search_endomorphism(graph, &slots, &doms, 0, &mut image, &mut found);
    Ok(match found {
        Some(map) => CoreCheck { is_core: false, witness: Some(map) },
        None => CoreCheck { is_core: true, witness: None },
    })
}

fn search_endomorphism(
    graph: &BinaryInstance,
    slots: &[(usize, Value)],
    doms: &[Vec<Value>],
    depth: usize,
    image: &mut BTreeMap<(usize, Value), Value>,
    found: &mut Option<SortedMap>,
) {
    if found.is_some() {
        return;
    }
    if depth == slots.len() {
        let surjective = doms.iter().enumerate().all(|(x, d)| {
            let hit: BTreeSet<Value> = d.iter().map(|&a| image[&(x, a)]).collect();
            hit.len() == d.len()
        });
        if !surjective {
            *found = Some(
                doms.iter()
                    .enumerate()
                    .map(|(x, d)| d.iter().map(|&a| image[&(x, a)]).collect())
                    .collect(),
            );
        }
        return;
    }
    let (x, a) = slots[depth];
    for &fa in &doms[x] {
        // every earlier slot is already mapped; check the pairs it forms with (x, a)
        let ok = slots[..depth].iter().all(|&(y, b)| {
            let fb = image[&(y, b)];
            y == x || !graph.constraint(y, x).contains(&(b, a)) || graph.constraint(y, x).contains(&(fb, fa))
        });
        if ok {
            image.insert((x, a), fa);
            search_endomorphism(graph, slots, doms, depth + 1, image, found);
            image.remove(&(x, a));
            if found.is_some() {
                return;
            }
        }
    }
}

/// Flattens a sorted map into a map on [`BinaryInstance::sorted_structure`].
pub fn flatten_sorted_map(graph: &BinaryInstance, map: &SortedMap) -> Vec<Value> {
    let (_, elements) = graph.sorted_structure();
    let index: BTreeMap<(usize, Value), Value> =
        elements.iter().enumerate().map(|(i, &e)| (e, i as Value)).collect();
    let mut flat = Vec::with_capacity(elements.len());
    for &(x, a) in &elements {
        let pos = graph.domain(x).iter().position(|&v| v == a).expect("element in domain");
        flat.push(index[&(x, map[x][pos])]);
    }
    flat
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn set(values: &[Value]) -> BTreeSet<Value> {
        values.iter().copied().collect()
    }

    pub fn pairs(values: &[(Value, Value)]) -> PairSet {
        values.iter().copied().collect()
    }

    pub fn neq(n: Value) -> Relation {
        Relation::binary("neq", (0..n).flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b))))
    }

    pub fn triangle_colouring() -> Instance {
        let r = neq(3);
        let cs = vec![
            Constraint::new(vec![0, 1], r.clone()),
            Constraint::new(vec![1, 2], r.clone()),
            Constraint::new(vec![0, 2], r),
        ];
        Instance::with_full_domains(3, 3, cs).unwrap()
    }

    #[test]
    fn colouring_assignments() {
        let inst = triangle_colouring();
        assert!(evaluate_assignment(&inst, &Assignment::from_values(&[0, 1, 2])).unwrap());
        assert!(!evaluate_assignment(&inst, &Assignment::from_values(&[0, 0, 1])).unwrap());
        let free = Instance::with_full_domains(2, 2, vec![]).unwrap();
        assert!(evaluate_assignment(&free, &Assignment::from_values(&[1, 0])).unwrap());
    }

    #[test]
    fn partial_assignment_is_an_error() {
        let inst = triangle_colouring();
        let err = evaluate_assignment(&inst, &Assignment::from_values(&[0, 1])).unwrap_err();
        assert_eq!(err, StructureError::PartialAssignment(3));
        assert!(err.to_string().contains("partial assignment"));
    }

    #[test]
    fn value_outside_domain_fails() {
        let doms = vec![set(&[0]), set(&[0, 1])];
        let inst = Instance::new(2, doms, vec![]).unwrap();
        assert!(!evaluate_assignment(&inst, &Assignment::from_values(&[1, 1])).unwrap());
    }

    #[test]
    fn instance_validation() {
        let r = neq(3);
        assert!(matches!(
            Instance::with_full_domains(3, 2, vec![Constraint::new(vec![0], r.clone())]),
            Err(StructureError::ScopeArity { .. })
        ));
        assert!(matches!(
            Instance::with_full_domains(3, 2, vec![Constraint::new(vec![0, 5], r)]),
            Err(StructureError::VariableOutOfRange { .. })
        ));
        assert!(matches!(Instance::new(2, vec![set(&[])], vec![]), Err(StructureError::EmptyDomain(1))));
        assert!(matches!(
            RelationalTemplate::new(2, vec![neq(2), neq(2)]),
            Err(StructureError::DuplicateRelation(_))
        ));
        assert!(matches!(RelationalTemplate::new(2, vec![neq(3)]), Err(StructureError::ValueOutOfRange { .. })));
    }

    fn triangle_structure() -> RelationalTemplate {
        RelationalTemplate::new(3, vec![neq(3)]).unwrap()
    }

    #[test]
    fn homomorphisms_of_the_triangle() {
        let k3 = triangle_structure();
        assert!(is_homomorphism(&[0, 1, 2], &k3, &k3).unwrap());
        assert!(!is_homomorphism(&[0, 0, 0], &k3, &k3).unwrap());
        assert!(is_homomorphism(&[1, 2, 0], &k3, &k3).unwrap());
    }

    #[test]
    fn signature_mismatch() {
        let k3 = triangle_structure();
        let other = RelationalTemplate::new(3, vec![Relation::new("r", 1, vec![vec![0]]).unwrap()]).unwrap();
        assert!(matches!(is_homomorphism(&[0, 1, 2], &k3, &other), Err(StructureError::SignatureMismatch(_))));
    }

    #[test]
    fn core_of_single_point() {
        let g = BinaryInstance::unconstrained(1, vec![set(&[0])]);
        assert_eq!(is_core(&g, DEFAULT_CORE_CAP).unwrap(), CoreCheck { is_core: true, witness: None });
    }

    #[test]
    fn swap_constraint_is_not_a_sorted_core() {
        // Sorts map independently, so the per-sort constants 0 and 1 form a
        // collapsing endomorphism (the pair (0,1) lies in the constraint).
        let mut g = BinaryInstance::unconstrained(2, vec![set(&[0, 1]), set(&[0, 1])]);
        g.set_constraint(0, 1, pairs(&[(0, 1), (1, 0)]));
        let check = is_core(&g, DEFAULT_CORE_CAP).unwrap();
        assert!(!check.is_core);
        let w = check.witness.unwrap();
        let (s, _) = g.sorted_structure();
        assert!(is_homomorphism(&flatten_sorted_map(&g, &w), &s, &s).unwrap());
    }

    #[test]
    fn rigid_graph_is_a_core() {
        // an unsatisfiable instance with non-singleton domains: only bijective endomorphisms
        let mut g = BinaryInstance::unconstrained(2, vec![set(&[0, 1]); 3]);
        let swap = pairs(&[(0, 1), (1, 0)]);
        g.set_constraint(0, 1, swap.clone());
        g.set_constraint(1, 2, swap.clone());
        g.set_constraint(0, 2, swap);
        assert!(is_core(&g, DEFAULT_CORE_CAP).unwrap().is_core);
    }

    #[test]
    fn full_constraint_is_not_a_core() {
        let g = BinaryInstance::unconstrained(2, vec![set(&[0, 1]), set(&[0, 1])]);
        let check = is_core(&g, DEFAULT_CORE_CAP).unwrap();
        assert!(!check.is_core);
        let (s, _) = g.sorted_structure();
        assert!(is_homomorphism(&flatten_sorted_map(&g, &check.witness.unwrap()), &s, &s).unwrap());
    }

    #[test]
    fn core_cap() {
        let g = BinaryInstance::unconstrained(5, vec![set(&[0, 1, 2, 3, 4]); 3]);
        let err = is_core(&g, DEFAULT_CORE_CAP).unwrap_err();
        assert!(err.to_string().contains("pass --assume-core"));
    }

    #[test]
    fn simplicity_report() {
        let mut g = BinaryInstance::unconstrained(2, vec![set(&[0, 1]), set(&[0, 1])]);
        assert!(check_syntactic_simplicity(&g).is_empty());
        let n = 2;
        g.edges[1] = pairs(&[(0, 1)]);
        g.edges[n] = pairs(&[(0, 1)]);
        let report: Vec<String> = check_syntactic_simplicity(&g).iter().map(ToString::to_string).collect();
        assert!(report.contains(&"symmetry violated at (1,2)".to_string()));

        let mut g = BinaryInstance::unconstrained(2, vec![set(&[0, 1])]);
        g.edges[0] = pairs(&[(0, 1)]);
        let report: Vec<String> = check_syntactic_simplicity(&g).iter().map(ToString::to_string).collect();
        assert!(report.contains(&"diagonal violated at 1".to_string()));
    }

    #[test]
    fn restrict_keeps_symmetry() {
        let mut g = BinaryInstance::unconstrained(3, vec![set(&[0, 1, 2]); 3]);
        g.restrict_domain(1, &set(&[2]));
        assert!(check_syntactic_simplicity(&g).is_empty());
        assert_eq!(g.constraint(0, 1).len(), 3);
        assert_eq!(g.constraint(1, 1), &pairs(&[(2, 2)]));
    }
}
