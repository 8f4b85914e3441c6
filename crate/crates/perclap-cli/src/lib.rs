//! Library side of the command-line front end: configuration resolution,
//! command bodies and the verification suites.  The `perclap` binary is a
//! thin argument parser over these modules, and the integration tests call
//! them directly.

pub mod commands;
pub mod config;
pub mod verify;
