//! Entry points around `dse-core`: headless subcommands, configuration
//! and the HTTP service used by the web UI.

pub mod commands;
pub mod config;
pub mod llm_http;
pub mod server;
