//! Summaries of black-box classifier explanations: the objects to explain
//! are partitioned into at most K pattern-described subgroups, each with a
//! ridge surrogate fitted on the black box's outputs over synthetic
//! neighborhoods of its members.

pub mod blackbox;
pub mod cli;
pub mod data;
pub mod evaluation;
pub mod linalg;
pub mod neighborhood;
pub mod pattern;
pub mod splitter;
pub mod whitebox;
