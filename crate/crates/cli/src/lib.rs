//! Command line front end and HTTP session service for prefmorl.

pub mod commands;
pub mod server;
