//! Command line and HTTP front end.

pub mod backend;
pub mod commands;
pub mod server;
