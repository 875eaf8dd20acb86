//! Dimension theory toolkit for non-autonomous self-similar iterated
//! function systems: symbolic pressure zeros and the Assouad-dimension
//! formula, separation and regularity checkers, covering/packing
//! estimators, and generators for two counterexample families.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod examples;
pub mod geometry;
pub mod ifs_core;
pub mod pressure;
pub mod schema;
