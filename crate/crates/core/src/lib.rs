//! Identification of interventional distributions on single-world
//! intervention graphs (SWIGs).

pub mod expr;
pub mod graph;
pub mod lex;
pub mod model;
pub mod oracle;
pub mod fixtures;
pub mod ident;
pub mod dsl;
pub mod dot;
