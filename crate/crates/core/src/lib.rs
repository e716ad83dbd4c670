pub mod chain;
pub mod eval;
pub mod home;
pub mod llm;
pub mod plan;
pub mod prompt;
pub mod service;
pub mod sim;
