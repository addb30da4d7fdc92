//! Solver limits and the per-domain algebras parameterizing an instance.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use crate::algebra::{
    colour_edge, is_simple, subalgebra_generated, subuniverses_within, AlgebraError, EdgeColour, FiniteAlgebra, DEFAULT_CONGRUENCE_CAP,
    DEFAULT_TERM_DEPTH,
};
use crate::binarize::DEFAULT_TUPLE_CAP;
use crate::oracle::DEFAULT_ORACLE_CAP;
use crate::structures::{Value, DEFAULT_CORE_CAP};

/// Largest domain whose subuniverses are all enumerated.
pub const EXHAUSTIVE_SUBUNIVERSES: usize = 12;

fn two_generated_within(algebra: &FiniteAlgebra, domain: &BTreeSet<Value>) -> Result<Vec<BTreeSet<Value>>, AlgebraError> {
    let elements: Vec<Value> = domain.iter().copied().collect();
    let mut found = BTreeSet::new();
    for (i, &a) in elements.iter().enumerate() {
        for &b in &elements[i..] {
            let s = subalgebra_generated(algebra, &BTreeSet::from([a, b]))?;
            if s.is_subset(domain) {
                found.insert(s);
            }
        }
    }
    Ok(found.into_iter().collect())
}

/// Size caps and search depths shared by every stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub core_cap: usize,
    pub congruence_cap: usize,
    pub term_depth: usize,
    pub tuple_cap: usize,
    pub power_cap: usize,
    pub oracle_cap: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            core_cap: DEFAULT_CORE_CAP,
            // congruences are built from principal ones, so lifted domains stay cheap
            congruence_cap: 4 * DEFAULT_CONGRUENCE_CAP,
            term_depth: DEFAULT_TERM_DEPTH,
            tuple_cap: DEFAULT_TUPLE_CAP,
            power_cap: 4096,
            oracle_cap: DEFAULT_ORACLE_CAP,
        }
    }
}

/// An algebra with memoized edge colours and simple subuniverses.
#[derive(Debug)]
pub struct PreparedAlgebra {
    pub algebra: FiniteAlgebra,
    limits: Limits,
    colours: Mutex<HashMap<(Value, Value), EdgeColour>>,
    simple_subuniverses: Mutex<HashMap<BTreeSet<Value>, Vec<BTreeSet<Value>>>>,
}

impl PreparedAlgebra {
    pub fn new(algebra: FiniteAlgebra, limits: Limits) -> Self {
        PreparedAlgebra {
            algebra,
            limits,
            colours: Mutex::new(HashMap::new()),
            simple_subuniverses: Mutex::new(HashMap::new()),
        }
    }

    pub fn limits(&self) -> &Limits {
        &self.limits
    }

    /// Colour of `{a, b}`, computed once.
    pub fn colour(&self, a: Value, b: Value) -> Result<EdgeColour, AlgebraError> {
        let key = (a.min(b), a.max(b));
        if let Some(e) = self.colours.lock().expect("colour cache").get(&key) {
            return Ok(e.clone());
        }
        let e = colour_edge(&self.algebra, key.0, key.1, self.limits.term_depth, self.limits.congruence_cap)?;
        self.colours.lock().expect("colour cache").insert(key, e.clone());
        Ok(e)
    }

    /// Simple subuniverses inside `domain`, larger ones first, then ascending.
    /// Domains above [`EXHAUSTIVE_SUBUNIVERSES`] elements only get the
    /// subuniverses generated by at most two elements.
    pub fn simple_subuniverses(&self, domain: &BTreeSet<Value>) -> Result<Vec<BTreeSet<Value>>, AlgebraError> {
        if let Some(v) = self.simple_subuniverses.lock().expect("subuniverse cache").get(domain) {
            return Ok(v.clone());
        }
        let mut found = Vec::new();
        let candidates = if domain.len() <= EXHAUSTIVE_SUBUNIVERSES {
            subuniverses_within(&self.algebra, domain)
        } else {
            two_generated_within(&self.algebra, domain)?
        };
        for s in candidates {
            let (sub, _) = self.algebra.restrict(&s)?;
            if is_simple(&sub, self.limits.congruence_cap)? {
                found.push(s);
            }
        }
        found.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        self.simple_subuniverses.lock().expect("subuniverse cache").insert(domain.clone(), found.clone());
        Ok(found)
    }
}

/// Which algebra parameterizes each variable's domain.
#[derive(Clone, Debug)]
pub struct DomainAlgebras {
    algebras: Vec<Arc<PreparedAlgebra>>,
    of_var: Vec<usize>,
}

impl DomainAlgebras {
    /// One algebra for every variable.
    pub fn shared(algebra: Arc<PreparedAlgebra>, num_vars: usize) -> Self {
        DomainAlgebras { algebras: vec![algebra], of_var: vec![0; num_vars] }
    }

    /// A shared default with per-variable overrides.
    pub fn with_overrides(default: Arc<PreparedAlgebra>, num_vars: usize, overrides: Vec<(usize, Arc<PreparedAlgebra>)>) -> Self {
        let mut algebras = vec![default];
        let mut of_var = vec![0; num_vars];
        for (x, alg) in overrides {
            algebras.push(alg);
            of_var[x] = algebras.len() - 1;
        }
        DomainAlgebras { algebras, of_var }
    }

    pub fn num_vars(&self) -> usize {
        self.of_var.len()
    }

    pub fn for_var(&self, x: usize) -> &PreparedAlgebra {
        &self.algebras[self.of_var[x]]
    }

    pub fn is_shared(&self) -> bool {
        self.algebras.len() == 1
    }
}
