pub mod benchmark;
pub mod codegen;
pub mod eval;
pub mod info_miner;
pub mod llm;
pub mod memory;
pub mod processor;
pub mod registry;
pub mod selector;
pub mod session;
pub mod simulated;
