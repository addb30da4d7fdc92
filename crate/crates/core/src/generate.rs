//! Seeded random instances: systems of two-variable equations `x_j = x_i + c`
//! over `Z_q`, optionally with one planted semilattice or majority domain.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::affine::Algebras;
use crate::algebra::FiniteAlgebra;
use crate::structures::{Constraint, Instance, Relation, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    AffineLinear,
    MixedColoured,
}

impl FromStr for Family {
    type Err = GenerateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "affine-linear" => Ok(Family::AffineLinear),
            "mixed-coloured" => Ok(Family::MixedColoured),
            other => Err(GenerateError::UnknownFamily(other.to_string())),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::AffineLinear => "affine-linear",
            Family::MixedColoured => "mixed-coloured",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenerateError {
    #[error("unknown family {0} (affine-linear or mixed-coloured)")]
    UnknownFamily(String),
    #[error("modulus must be at least 2")]
    Modulus,
    #[error("density must lie in [0, 1]")]
    Density,
    #[error("need at least {0} variables")]
    TooFewVariables(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub family: Family,
    pub modulus: usize,
    pub num_variables: usize,
    pub density: f64,
    pub seed: u64,
}

/// Which kind of domain was planted in a mixed instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Planted {
    Semilattice { var: usize },
    Majority { var: usize },
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub instance: Instance,
    pub algebras: Algebras,
    pub planted: Option<Planted>,
}

/// `{(a, a + c)}` over `Z_q`.
pub fn shift_relation(q: usize, c: usize) -> Relation {
    let q = q as Value;
    let c = c as Value;
    Relation::binary(format!("add{c}"), (0..q).map(|a| (a, (a + c) % q)))
}

pub fn generate(config: &GeneratorConfig) -> Result<Generated, GenerateError> {
    let q = config.modulus;
    if q < 2 {
        return Err(GenerateError::Modulus);
    }
    if !(0.0..=1.0).contains(&config.density) {
        return Err(GenerateError::Density);
    }
    let min_vars = if config.family == Family::MixedColoured { 2 } else { 1 };
    if config.num_variables < min_vars {
        return Err(GenerateError::TooFewVariables(min_vars));
    }
    let n = config.num_variables;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let planted = match config.family {
        Family::AffineLinear => None,
        Family::MixedColoured => {
            let var = rng.gen_range(0..n);
            Some(if rng.gen_bool(0.5) { Planted::Semilattice { var } } else { Planted::Majority { var } })
        }
    };
    let planted_var = planted.map(|p| match p {
        Planted::Semilattice { var } | Planted::Majority { var } => var,
    });
    let mut constraints = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if Some(i) == planted_var || Some(j) == planted_var {
                continue;
            }
            if config.density > 0.0 && rng.gen_bool(config.density) {
                let c = rng.gen_range(0..q);
                constraints.push(Constraint::inline(vec![i, j], shift_relation(q, c)));
            }
        }
    }
    let mut domains: Vec<BTreeSet<Value>> = vec![(0..q as Value).collect(); n];
    let mut algebras = Algebras::uniform(FiniteAlgebra::cyclic_affine(q));
    if let Some(p) = planted_var {
        // x_p = 1 forces a value on one affine neighbour
        let y = (p + 1 + rng.gen_range(0..n - 1)) % n;
        let c = rng.gen_range(0..q) as Value;
        let tuples = (0..q as Value).map(|b| (0, b)).chain(std::iter::once((1, c)));
        let (scope, rel) = if p < y {
            (vec![p, y], Relation::binary("implies", tuples))
        } else {
            (vec![y, p], Relation::binary("implies", tuples.map(|(a, b)| (b, a))))
        };
        constraints.push(Constraint::inline(scope, rel));
        domains[p] = [0, 1].into_iter().collect();
        let alg = match planted {
            Some(Planted::Semilattice { .. }) => FiniteAlgebra::min_semilattice(q),
            _ => FiniteAlgebra::majority(q),
        };
        algebras.overrides.insert(p, alg);
    }
    let instance = Instance::new(q, domains, constraints).expect("generated instance is well formed");
    Ok(Generated { instance, algebras, planted })
}
