pub mod mulgen;
pub mod netlist;
pub mod sim;
pub mod vhdl;
pub mod tbgen;
pub mod metrics;
pub mod cli;
