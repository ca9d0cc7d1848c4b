pub mod config;
pub mod corpus;
pub mod detectors;
pub mod ir;
pub mod llm;
pub mod pipeline;
pub mod process;
pub mod report;
pub mod runner;
pub mod template;
pub mod verdict;
