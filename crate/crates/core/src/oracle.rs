//! Brute-force reference implementations. Deliberately naive: no
//! propagation, no shared code paths with the solver beyond the data types.

use thiserror::Error;

use crate::algebra::Operation;
use crate::structures::{
    evaluate_assignment, is_homomorphism, Assignment, BinaryInstance, Instance, RelationalTemplate, Value,
};

/// Default cap on search nodes.
pub const DEFAULT_ORACLE_CAP: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("search exceeded the cap of {0} nodes")]
    CapExceeded(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    First,
    Count,
    All,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SolutionSet {
    /// Lexicographically ordered; only filled in `First` and `All` mode.
    pub solutions: Vec<Assignment>,
    pub count: u64,
}

impl SolutionSet {
    pub fn is_satisfiable(&self) -> bool {
        self.count > 0
    }
}

/// Backtracking over variables in ascending order, checking each constraint
/// once its last variable is assigned.
pub fn brute_force_solve(instance: &Instance, mode: Mode, cap: u64) -> Result<SolutionSet, OracleError> {
    let n = instance.num_vars();
    // constraints grouped by the largest variable in their scope
    let mut due: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, c) in instance.constraints().iter().enumerate() {
        match c.scope.iter().max() {
            Some(&last) => due[last].push(i),
            None => {
                if !c.relation.contains(&[]) {
                    return Ok(SolutionSet::default());
                }
            }
        }
    }
    let domains: Vec<Vec<Value>> = instance.domains().iter().map(|d| d.iter().copied().collect()).collect();
    let mut search = Search { instance, due, domains, mode, cap, nodes: 0, values: Vec::new(), out: SolutionSet::default() };
    search.run(0)?;
    for s in &search.out.solutions {
        debug_assert!(evaluate_assignment(instance, s).unwrap_or(false));
    }
    Ok(search.out)
}

struct Search<'a> {
    instance: &'a Instance,
    due: Vec<Vec<usize>>,
    domains: Vec<Vec<Value>>,
    mode: Mode,
    cap: u64,
    nodes: u64,
    values: Vec<Value>,
    out: SolutionSet,
}

impl Search<'_> {
    /// Returns true when the search should stop.
    fn run(&mut self, x: usize) -> Result<bool, OracleError> {
        if x == self.domains.len() {
            self.out.count += 1;
            if self.mode != Mode::Count {
                self.out.solutions.push(Assignment::from_values(&self.values));
            }
            return Ok(self.mode == Mode::First);
        }
        for i in 0..self.domains[x].len() {
            self.nodes += 1;
            if self.nodes > self.cap {
                return Err(OracleError::CapExceeded(self.cap));
            }
            self.values.push(self.domains[x][i]);
            let ok = self.due[x].iter().all(|&c| {
                let c = &self.instance.constraints()[c];
                let image: Vec<Value> = c.scope.iter().map(|&v| self.values[v]).collect();
                c.relation.contains(&image)
            });
            let stop = ok && self.run(x + 1)?;
            self.values.pop();
            if stop {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Every endomorphism of a relational structure, each re-verified.
pub fn enumerate_endomorphisms(structure: &RelationalTemplate, cap: u64) -> Result<Vec<Vec<Value>>, OracleError> {
    let n = structure.universe_size;
    // tuples grouped by their largest element
    let mut due: Vec<Vec<(usize, &Vec<Value>)>> = vec![Vec::new(); n];
    for (r, rel) in structure.relations.iter().enumerate() {
        for t in &rel.tuples {
            if let Some(&last) = t.iter().max() {
                due[last as usize].push((r, t));
            }
        }
    }
    let mut maps = Vec::new();
    let mut map = Vec::with_capacity(n);
    let mut nodes = 0u64;
    endo_search(structure, &due, &mut map, &mut maps, &mut nodes, cap)?;
    for m in &maps {
        assert!(is_homomorphism(m, structure, structure).expect("same signature"));
    }
    Ok(maps)
}

fn endo_search(
    s: &RelationalTemplate,
    due: &[Vec<(usize, &Vec<Value>)>],
    map: &mut Vec<Value>,
    out: &mut Vec<Vec<Value>>,
    nodes: &mut u64,
    cap: u64,
) -> Result<(), OracleError> {
    let a = map.len();
    if a == s.universe_size {
        out.push(map.clone());
        return Ok(());
    }
    for image in 0..s.universe_size as Value {
        *nodes += 1;
        if *nodes > cap {
            return Err(OracleError::CapExceeded(cap));
        }
        map.push(image);
        let ok = due[a].iter().all(|&(r, t)| {
            let mapped: Vec<Value> = t.iter().map(|&v| map[v as usize]).collect();
            s.relations[r].contains(&mapped)
        });
        if ok {
            endo_search(s, due, map, out, nodes, cap)?;
        }
        map.pop();
    }
    Ok(())
}

/// Sort-preserving endomorphisms of a multiconsistency graph, as maps on
/// [`BinaryInstance::sorted_structure`].
pub fn enumerate_graph_endomorphisms(graph: &BinaryInstance, cap: u64) -> Result<Vec<Vec<Value>>, OracleError> {
    enumerate_endomorphisms(&graph.sorted_structure().0, cap)
}

/// Every operation table of the given arity preserving all relations of the
/// template, optionally only the idempotent ones. Enumerates all tables.
pub fn enumerate_polymorphisms(
    template: &RelationalTemplate,
    arity: usize,
    idempotent_only: bool,
    cap: u64,
) -> Result<Vec<Operation>, OracleError> {
    let n = template.universe_size;
    let entries = n.pow(arity as u32);
    let total = (n as u64).checked_pow(entries as u32).unwrap_or(u64::MAX);
    if total > cap {
        return Err(OracleError::CapExceeded(cap));
    }
    let mut result = Vec::new();
    let mut table = vec![0 as Value; entries];
    for code in 0..total {
        let mut c = code;
        for slot in table.iter_mut().rev() {
            *slot = (c % n as u64) as Value;
            c /= n as u64;
        }
        let op = Operation { name: "f".into(), arity, table: table.clone() };
        if idempotent_only && (0..n).any(|x| op.table[(0..arity).fold(0, |acc, _| acc * n + x)] != x as Value) {
            continue;
        }
        if preserves_all(template, &op) {
            result.push(op);
        }
    }
    Ok(result)
}

/// Coordinatewise application to every choice of `arity` tuples stays inside
/// each relation.
pub fn preserves_all(template: &RelationalTemplate, op: &Operation) -> bool {
    let n = template.universe_size;
    template.relations.iter().all(|rel| {
        let tuples: Vec<&Vec<Value>> = rel.tuples.iter().collect();
        if tuples.is_empty() {
            return true;
        }
        let mut pick = vec![0usize; op.arity];
        loop {
            let image: Vec<Value> = (0..rel.arity)
                .map(|i| op.table[pick.iter().fold(0, |acc, &t| acc * n + tuples[t][i] as usize)])
                .collect();
            if !rel.contains(&image) {
                return false;
            }
            let mut pos = op.arity;
            loop {
                if pos == 0 {
                    return true;
                }
                pos -= 1;
                pick[pos] += 1;
                if pick[pos] < tuples.len() {
                    break;
                }
                pick[pos] = 0;
            }
        }
    })
}
