//! Constraint satisfaction over multisorted cores with a Maltsev
//! polymorphism.
//!
//! The pipeline: [`binarize`] an instance into a syntactically simple binary
//! instance, run (1,2)-consistency ([`propagate`]), remove absorbing parts of
//! every domain through the coloured graph of its algebra ([`reduce`]), and
//! decide what is left as two-variable linear equations over abelian groups
//! ([`affine`]). [`oracle`] holds the brute-force references everything is
//! checked against.

pub mod structures;
pub mod algebra;
pub mod context;
pub mod reduce;
pub mod affine;
pub mod format;
pub mod generate;
pub mod compare;
pub mod binarize;
pub mod propagate;
pub mod oracle;

pub use affine::{solve, AffineError, Algebras, Outcome, SolveOptions, UnsatCertificate};
pub use algebra::{Colour, FiniteAlgebra, Operation, Term};
pub use binarize::{binarize, Binarized};
pub use context::{DomainAlgebras, Limits, PreparedAlgebra};
pub use propagate::run_12_consistency;
pub use reduce::type_reduce;
pub use structures::{
    evaluate_assignment, Assignment, BinaryInstance, Constraint, Instance, PairSet, Relation, RelationalTemplate, Value,
};
