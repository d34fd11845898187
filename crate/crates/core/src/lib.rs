//! Numerical laboratory for fixed-point stability of the K-averaged Pexider
//! equation `(1/|K|) Σ_k f(x + k·y) = g(x) + h(y)`.
//!
//! A perturbed solution triple `(f, g, h)` is decomposed into a quadratic
//! component `q`, a Jensen component `j` and the offsets `g(0)`, `h(0)` by
//! contraction iterations in weighted supremum metrics, and every error bound
//! the construction promises is measured on the enumerated carrier.

pub mod control;
pub mod domain;
pub mod fixpoint;
pub mod funcspace;
pub mod harness;
pub mod oracle;
pub mod scan;
pub mod stabilizer;
