use std::collections::BTreeSet;

use mcsp_core::affine::{solve, Algebras, Outcome, SolveOptions};
use mcsp_core::algebra::{subalgebra_generated, FiniteAlgebra, Operation};
use mcsp_core::binarize::{binarize, project_solution};
use mcsp_core::generate::{generate, Family, GeneratorConfig};
use mcsp_core::oracle::{brute_force_solve, Mode};
use mcsp_core::propagate::{run_12_consistency, run_with_order, Status};
use mcsp_core::structures::{evaluate_assignment, Assignment, BinaryInstance, Constraint, Instance, PairSet, Relation, Value};
use proptest::prelude::*;

const CAP: u64 = 1 << 24;

fn relation(arity: usize, u: usize, keep: Vec<bool>) -> Relation {
    let tuples = (0..u.pow(arity as u32)).filter(|&i| keep[i % keep.len()]).map(|mut c| {
        let mut t = vec![0; arity];
        for slot in t.iter_mut().rev() {
            *slot = (c % u) as Value;
            c /= u;
        }
        t
    });
    Relation::new("R", arity, tuples).unwrap()
}

prop_compose! {
    fn instance()(u in 2usize..=3, n in 2usize..=4)
        (u in Just(u), n in Just(n),
         cs in prop::collection::vec((1usize..=3, prop::collection::vec(0usize..4, 3), prop::collection::vec(any::<bool>(), 27)), 1..4))
        -> Instance
    {
        let constraints = cs.into_iter().map(|(arity, vars, keep)| {
            let arity = arity.min(n);
            let mut scope: Vec<usize> = Vec::new();
            for v in vars.into_iter().map(|v| v % n).chain(0..n) {
                if scope.len() < arity && !scope.contains(&v) {
                    scope.push(v);
                }
            }
            Constraint::inline(scope, relation(arity, u, keep))
        }).collect();
        Instance::with_full_domains(u, n, constraints).unwrap()
    }
}

prop_compose! {
    fn binary_instance()(u in 2usize..=4, n in 2usize..=5)
        (u in Just(u), n in Just(n),
         doms in prop::collection::vec(prop::collection::btree_set(0..u as Value, 1..=u), n),
         masks in prop::collection::vec(prop::option::of(prop::collection::vec(any::<bool>(), 16)), n * n))
        -> BinaryInstance
    {
        let mut g = BinaryInstance::unconstrained(u, doms.clone());
        for x in 0..n {
            for y in x + 1..n {
                if let Some(mask) = &masks[x * n + y] {
                    let pairs: PairSet = doms[x].iter()
                        .flat_map(|&a| doms[y].iter().map(move |&b| (a, b)))
                        .filter(|&(a, b)| mask[a as usize * 4 + b as usize])
                        .collect();
                    g.set_constraint(x, y, pairs);
                }
            }
        }
        g
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn oracle_solutions_evaluate_true(inst in instance()) {
        let all = brute_force_solve(&inst, Mode::All, CAP).unwrap();
        prop_assert_eq!(all.count as usize, all.solutions.len());
        for s in &all.solutions {
            prop_assert!(evaluate_assignment(&inst, s).unwrap());
        }
        let total = inst.universe_size().pow(inst.num_vars() as u32);
        let mut satisfied = 0;
        for mut c in 0..total {
            let mut a = Assignment::new();
            for x in 0..inst.num_vars() {
                a.set(x, (c % inst.universe_size()) as Value);
                c /= inst.universe_size();
            }
            satisfied += usize::from(evaluate_assignment(&inst, &a).unwrap());
        }
        prop_assert_eq!(satisfied, all.solutions.len());
    }

    #[test]
    fn binarization_preserves_solutions(inst in instance()) {
        let bin = binarize(&inst, 4096).unwrap();
        let src = brute_force_solve(&inst, Mode::Count, CAP).unwrap();
        let dst = brute_force_solve(&bin.graph.to_instance(), Mode::All, CAP).unwrap();
        prop_assert_eq!(src.is_satisfiable(), dst.is_satisfiable());
        for s in &dst.solutions {
            let back = project_solution(s, &bin.mapping).unwrap();
            prop_assert!(evaluate_assignment(&inst, &back).unwrap());
        }
    }

    #[test]
    fn propagation_keeps_every_solution(g in binary_instance()) {
        let r = run_12_consistency(&g).unwrap();
        let sols = brute_force_solve(&g.to_instance(), Mode::All, CAP).unwrap();
        if r.status == Status::Empty {
            prop_assert!(sols.solutions.is_empty());
        }
        for s in &sols.solutions {
            for x in 0..g.num_vars() {
                prop_assert!(r.reduced.domain(x).contains(&s.get(x).unwrap()));
            }
        }
    }

    #[test]
    fn propagation_is_order_independent(g in binary_instance(), perm in any::<u64>()) {
        let base = run_12_consistency(&g).unwrap();
        let mut order: Vec<usize> = (0..g.num_vars()).collect();
        let mut s = perm;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let other = run_with_order(&g, &order).unwrap();
        prop_assert_eq!(base.status, other.status);
        if base.status == Status::SatPossible {
            prop_assert_eq!(base.reduced, other.reduced);
        }
    }

    #[test]
    fn generated_closure_is_a_closure(u in 2usize..=5, table in prop::collection::vec(0usize..5, 125), a in prop::collection::btree_set(0usize..5, 1..=3), b in prop::collection::btree_set(0usize..5, 0..=2)) {
        let op = Operation::from_fn("t", 3, u, |x| {
            let i = x[0] as usize * 25 + x[1] as usize * 5 + x[2] as usize;
            (table[i] % u) as Value
        });
        let alg = FiniteAlgebra::new(u, vec![op]).unwrap();
        let seed: BTreeSet<Value> = a.iter().map(|&v| (v % u) as Value).collect();
        let more: BTreeSet<Value> = seed.iter().copied().chain(b.iter().map(|&v| (v % u) as Value)).collect();
        let s = subalgebra_generated(&alg, &seed).unwrap();
        prop_assert!(seed.is_subset(&s));
        prop_assert_eq!(&subalgebra_generated(&alg, &s).unwrap(), &s);
        prop_assert!(s.is_subset(&subalgebra_generated(&alg, &more).unwrap()));
    }

    #[test]
    fn zero_choice_does_not_change_the_decision(q in 2usize..=5, n in 2usize..=6, density in 0.2f64..=1.0, seed in any::<u64>()) {
        let g = generate(&GeneratorConfig { family: Family::AffineLinear, modulus: q, num_variables: n, density, seed }).unwrap();
        let expected = brute_force_solve(&g.instance, Mode::First, CAP).unwrap().is_satisfiable();
        for zero in 0..q {
            let opts = SolveOptions { assume_core: true, zero, ..SolveOptions::default() };
            match solve(&g.instance, &g.algebras, &opts).unwrap() {
                Outcome::Sat(a) => {
                    prop_assert!(expected);
                    prop_assert!(evaluate_assignment(&g.instance, &a).unwrap());
                }
                Outcome::Unsat(_) => prop_assert!(!expected),
            }
        }
    }
}

#[test]
fn z5_system_seed_42_matches_the_oracle() {
    let g = generate(&GeneratorConfig { family: Family::AffineLinear, modulus: 5, num_variables: 6, density: 0.5, seed: 42 })
        .unwrap();
    let expected = brute_force_solve(&g.instance, Mode::First, CAP).unwrap().is_satisfiable();
    let opts = SolveOptions { assume_core: true, ..SolveOptions::default() };
    let got = solve(&g.instance, &g.algebras, &opts).unwrap();
    assert_eq!(got.is_sat(), expected);
}

#[test]
fn binary_triangle_over_z2_has_parity_determined_satisfiability() {
    let g = generate(&GeneratorConfig { family: Family::AffineLinear, modulus: 2, num_variables: 3, density: 1.0, seed: 1 })
        .unwrap();
    assert_eq!(g.instance.constraints().len(), 3);
    let offset = |c: &Constraint| c.relation.tuples.iter().find(|t| t[0] == 0).unwrap()[1] as usize;
    let parity: usize = g.instance.constraints().iter().map(offset).sum::<usize>() % 2;
    let expected = brute_force_solve(&g.instance, Mode::First, CAP).unwrap().is_satisfiable();
    // x2 = x1 + a, x3 = x2 + b, x3 = x1 + c is consistent iff a + b = c
    let cs = g.instance.constraints();
    let (a, b, c) = (offset(&cs[0]), offset(&cs[2]), offset(&cs[1]));
    assert_eq!(cs[0].scope, vec![0, 1]);
    assert_eq!(cs[1].scope, vec![0, 2]);
    assert_eq!(cs[2].scope, vec![1, 2]);
    assert_eq!(expected, (a + b) % 2 == c);
    assert_eq!(expected, parity == 0);
    let r = solve(&g.instance, &Algebras::uniform(FiniteAlgebra::cyclic_affine(2)), &SolveOptions::default()).unwrap();
    assert_eq!(r.is_sat(), expected);
}

#[test]
fn no_constraints_means_satisfiable() {
    let g = generate(&GeneratorConfig { family: Family::AffineLinear, modulus: 3, num_variables: 4, density: 0.0, seed: 9 })
        .unwrap();
    assert!(g.instance.constraints().is_empty());
    assert!(solve(&g.instance, &g.algebras, &SolveOptions::default()).unwrap().is_sat());
}
