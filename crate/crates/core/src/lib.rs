pub mod cli;
pub mod evaluation;
pub mod grid;
pub mod harness;
pub mod heuristics;
pub mod io;
pub mod measures;
pub mod power_flow;
pub mod topology;
mod unionfind;
