//! Reduction of an arbitrary instance to a syntactically simple binary
//! instance whose variables are `⌈p/2⌉`-tuples of the original variables.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::algebra::{AlgebraError, FiniteAlgebra};
use crate::structures::{Assignment, BinaryInstance, Constraint, Instance, PairSet, Value};

/// Default cap on the number of tuple variables.
pub const DEFAULT_TUPLE_CAP: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BinarizeError {
    #[error("instance has no constraints")]
    NoConstraints,
    #[error("{count} tuple variables exceed cap {cap}")]
    TooManyTupleVariables { count: usize, cap: usize },
    #[error("tuple universe of size {size} exceeds cap {cap}")]
    UniverseTooLarge { size: usize, cap: usize },
    #[error("binarization soundness violated: variable {var} read as both {first} and {second}")]
    Soundness { var: usize, first: Value, second: Value },
    #[error("tuple variable {0} missing from the binary solution")]
    MissingTupleVariable(usize),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// How the tuple variables of a binarized instance relate to the original ones.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TupleMapping {
    /// Components per tuple variable, `⌈p/2⌉`.
    pub k: usize,
    pub original_vars: usize,
    pub original_universe: usize,
    /// Components of each tuple variable, in lexicographic order.
    pub tuples: Vec<Vec<usize>>,
}

impl TupleMapping {
    pub fn encode(&self, values: &[Value]) -> Value {
        values.iter().fold(0, |acc, &a| acc * self.original_universe as Value + a)
    }

    pub fn decode(&self, mut code: Value) -> Vec<Value> {
        let n = self.original_universe as Value;
        let mut out = vec![0; self.k];
        for slot in out.iter_mut().rev() {
            *slot = code % n;
            code /= n;
        }
        out
    }

    /// `t_<i>_<j>` style name of a tuple variable (1-based components).
    pub fn name(&self, t: usize) -> String {
        let mut s = String::from("t");
        for &x in &self.tuples[t] {
            s.push('_');
            s.push_str(&(x + 1).to_string());
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Binarized {
    pub graph: BinaryInstance,
    pub mapping: TupleMapping,
}

/// Binarizes with `k = ⌈p/2⌉` where `p` is the largest constraint arity.
pub fn binarize(instance: &Instance, tuple_cap: usize) -> Result<Binarized, BinarizeError> {
    let p = instance.max_arity();
    if instance.constraints().is_empty() {
        return Err(BinarizeError::NoConstraints);
    }
    binarize_with_width(instance, p.div_ceil(2), tuple_cap)
}

/// Binarizes with an explicit tuple width `k ≥ ⌈p/2⌉`.
pub fn binarize_with_width(instance: &Instance, k: usize, tuple_cap: usize) -> Result<Binarized, BinarizeError> {
    let nv = instance.num_vars();
    let n = instance.universe_size();
    let k = k.max(1);
    assert!(2 * k >= instance.max_arity(), "tuple width too small to cover every scope");
    let count = nv.checked_pow(k as u32).unwrap_or(usize::MAX);
    if count > tuple_cap {
        return Err(BinarizeError::TooManyTupleVariables { count, cap: tuple_cap });
    }
    let size = n.checked_pow(k as u32).filter(|&s| s <= Value::MAX as usize);
    let size = size.ok_or(BinarizeError::UniverseTooLarge { size: usize::MAX, cap: Value::MAX as usize })?;
    let tuples: Vec<Vec<usize>> = (0..count)
        .map(|mut i| {
            let mut t = vec![0; k];
            for slot in t.iter_mut().rev() {
                *slot = i % nv;
                i /= nv;
            }
            t
        })
        .collect();
    let mapping = TupleMapping { k, original_vars: nv, original_universe: n, tuples };

    // candidate value tuples per tuple variable, with their partial assignments
    let mut domains = Vec::with_capacity(count);
    let mut candidates: Vec<Vec<(Value, Vec<Value>)>> = Vec::with_capacity(count);
    for t in &mapping.tuples {
        let covered = covered_constraints(instance, t, &[]);
        let mut list = Vec::new();
        for values in product(t.iter().map(|&x| instance.domain(x).iter().copied().collect::<Vec<_>>())) {
            if consistent_and_satisfying(nv, t, &values, &[], &[], &covered) {
                list.push((mapping.encode(&values), values));
            }
        }
        domains.push(list.iter().map(|(c, _)| *c).collect::<BTreeSet<Value>>());
        candidates.push(list);
    }

    let mut graph = BinaryInstance::unconstrained(size, domains);
    for x in 0..count {
        for y in x + 1..count {
            let (tx, ty) = (&mapping.tuples[x], &mapping.tuples[y]);
            let covered = covered_constraints(instance, tx, ty);
            let mut pairs = PairSet::new();
            for (cu, u) in &candidates[x] {
                for (cv, v) in &candidates[y] {
                    if consistent_and_satisfying(nv, tx, u, ty, v, &covered) {
                        pairs.insert((*cu, *cv));
                    }
                }
            }
            graph.set_constraint(x, y, pairs);
        }
    }
    Ok(Binarized { graph, mapping })
}

fn covered_constraints<'a>(instance: &'a Instance, a: &[usize], b: &[usize]) -> Vec<&'a Constraint> {
    instance
        .constraints()
        .iter()
        .filter(|c| c.scope.iter().all(|x| a.contains(x) || b.contains(x)))
        .collect()
}

fn consistent_and_satisfying(
    nv: usize,
    tx: &[usize],
    u: &[Value],
    ty: &[usize],
    v: &[Value],
    covered: &[&Constraint],
) -> bool {
    let mut partial: Vec<Option<Value>> = vec![None; nv];
    for (&x, &a) in tx.iter().zip(u).chain(ty.iter().zip(v)) {
        match partial[x] {
            Some(b) if b != a => return false,
            _ => partial[x] = Some(a),
        }
    }
    covered.iter().all(|c| {
        let image: Vec<Value> = c.scope.iter().map(|&x| partial[x].expect("scope covered")).collect();
        c.relation.contains(&image)
    })
}

fn product(sets: impl Iterator<Item = Vec<Value>>) -> Vec<Vec<Value>> {
    let mut out = vec![Vec::new()];
    for s in sets {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                s.iter().map(move |&a| {
                    let mut p = prefix.clone();
                    p.push(a);
                    p
                })
            })
            .collect();
    }
    out
}

/// The power algebra `A^k` parameterizing a binarized instance.
pub fn lift_algebra(algebra: &FiniteAlgebra, k: usize, cap: usize) -> Result<FiniteAlgebra, BinarizeError> {
    Ok(algebra.power(k, cap)?)
}

/// Reads each original variable off the tuple variables that contain it.
pub fn project_solution(binary_solution: &Assignment, mapping: &TupleMapping) -> Result<Assignment, BinarizeError> {
    let mut values: Vec<Option<Value>> = vec![None; mapping.original_vars];
    for (t, comps) in mapping.tuples.iter().enumerate() {
        let code = binary_solution.get(t).ok_or(BinarizeError::MissingTupleVariable(t + 1))?;
        for (&x, a) in comps.iter().zip(mapping.decode(code)) {
            match values[x] {
                Some(b) if b != a => return Err(BinarizeError::Soundness { var: x + 1, first: b, second: a }),
                _ => values[x] = Some(a),
            }
        }
    }
    let mut out = Assignment::new();
    for (x, v) in values.into_iter().enumerate() {
        // every variable appears in the constant tuple (x, .., x)
        out.set(x, v.expect("variable covered by a tuple"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{check_identities, maltsev_identities, taylor_identities};
    use crate::structures::{check_syntactic_simplicity, evaluate_assignment, Relation};

    fn set(v: &[Value]) -> BTreeSet<Value> {
        v.iter().copied().collect()
    }

    fn ternary_example() -> Instance {
        let r = Relation::new("R", 3, vec![vec![0, 1, 1]]).unwrap();
        Instance::with_full_domains(2, 3, vec![Constraint::new(vec![0, 1, 2], r)]).unwrap()
    }

    #[test]
    fn ternary_constraint_pair() {
        let b = binarize(&ternary_example(), DEFAULT_TUPLE_CAP).unwrap();
        assert_eq!(b.mapping.k, 2);
        assert_eq!(b.mapping.tuples.len(), 9);
        let x = b.mapping.tuples.iter().position(|t| t == &vec![0, 1]).unwrap();
        let y = b.mapping.tuples.iter().position(|t| t == &vec![2, 2]).unwrap();
        let expected: PairSet = [(b.mapping.encode(&[0, 1]), b.mapping.encode(&[1, 1]))].into_iter().collect();
        assert_eq!(b.graph.constraint(x, y), &expected);
        assert!(check_syntactic_simplicity(&b.graph).is_empty());
        assert_eq!(b.mapping.name(x), "t_1_2");
    }

    #[test]
    fn binary_source_keeps_variables() {
        let neq = Relation::binary("neq", [(0, 1), (1, 0)]);
        let first = Relation::binary("first", [(0, 0), (0, 1)]);
        let inst = Instance::with_full_domains(
            2,
            2,
            vec![Constraint::new(vec![0, 1], neq), Constraint::new(vec![0, 1], first)],
        )
        .unwrap();
        let b = binarize(&inst, DEFAULT_TUPLE_CAP).unwrap();
        assert_eq!(b.mapping.k, 1);
        assert_eq!(b.graph.constraint(0, 1), &[(0, 1)].into_iter().collect());
        assert_eq!(b.graph.constraint(1, 0), &[(1, 0)].into_iter().collect());
        assert!(check_syntactic_simplicity(&b.graph).is_empty());
    }

    #[test]
    fn unary_constraint_restricts_domain() {
        let r = Relation::new("one", 1, vec![vec![1]]).unwrap();
        let inst = Instance::with_full_domains(3, 1, vec![Constraint::new(vec![0], r)]).unwrap();
        let b = binarize(&inst, DEFAULT_TUPLE_CAP).unwrap();
        assert_eq!(b.graph.domain(0), &set(&[1]));
        assert_eq!(b.graph.constraint(0, 0), &[(1, 1)].into_iter().collect());
    }

    #[test]
    fn no_constraints() {
        let inst = Instance::with_full_domains(2, 2, vec![]).unwrap();
        assert_eq!(binarize(&inst, DEFAULT_TUPLE_CAP), Err(BinarizeError::NoConstraints));
    }

    #[test]
    fn tuple_cap() {
        let r = Relation::new("R", 3, vec![vec![0, 1, 1]]).unwrap();
        let inst = Instance::with_full_domains(2, 20, vec![Constraint::new(vec![0, 1, 2], r)]).unwrap();
        assert!(matches!(binarize(&inst, 100), Err(BinarizeError::TooManyTupleVariables { .. })));
    }

    #[test]
    fn projection() {
        let b = binarize(&ternary_example(), DEFAULT_TUPLE_CAP).unwrap();
        let solution = [0, 1, 1];
        let mut bin = Assignment::new();
        for (t, comps) in b.mapping.tuples.iter().enumerate() {
            let vals: Vec<Value> = comps.iter().map(|&x| solution[x]).collect();
            bin.set(t, b.mapping.encode(&vals));
        }
        let projected = project_solution(&bin, &b.mapping).unwrap();
        assert_eq!(projected, Assignment::from_values(&solution));
        assert!(evaluate_assignment(&ternary_example(), &projected).unwrap());

        bin.set(0, b.mapping.encode(&[1, 1]));
        assert!(matches!(project_solution(&bin, &b.mapping), Err(BinarizeError::Soundness { .. })));
    }

    #[test]
    fn lifted_identities() {
        let z2 = FiniteAlgebra::cyclic_affine(2);
        let lifted = lift_algebra(&z2, 2, 1024).unwrap();
        assert_eq!(lifted.size(), 4);
        assert_eq!(lift_algebra(&z2, 1, 1024).unwrap(), z2);
        let z3 = lift_algebra(&FiniteAlgebra::cyclic_affine(3), 2, 1024).unwrap();
        assert!(check_identities(&z3, &maltsev_identities("m")).unwrap());
        let maj = lift_algebra(&FiniteAlgebra::majority(2), 2, 1024).unwrap();
        assert!(check_identities(&maj, &taylor_identities("g", 3)).unwrap());
        assert!(!check_identities(&maj, &maltsev_identities("g")).unwrap());
    }
}
