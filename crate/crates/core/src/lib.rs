pub mod cli;
pub mod commands;
pub mod feedback;
pub mod focal;
pub mod harness;
pub mod java;
pub mod layout;
pub mod llm;
pub mod manifest;
pub mod par;
pub mod prompt;
pub mod report;
