//! Robust superhedging under proportional transaction costs on finite
//! scenario trees.
//!
//! A [`tree::ModelFamily`] carries several price models on one event tree.
//! [`primal`] computes the cheapest initial capital that superhedges a claim
//! in every model at once, [`dual`] computes the same number as a supremum
//! over consistent price systems, and [`lp`] is the simplex solver both
//! rely on.

pub mod batch;
pub mod dual;
pub mod exec;
pub mod lp;
pub mod primal;
pub mod random;
pub mod tree;
pub mod wealth;
