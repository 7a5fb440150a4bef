// SPDX-License-Identifier: Apache-2.0

//! Operator tooling for an sfamss deployment: on-disk layout, the bank
//! daemon, the ATM client, scenario files and the attack harness.

pub mod commands;
pub mod deployment;
pub mod error;
pub mod report;
pub mod scenario;
pub mod serve;

pub use commands::{run, Cli};
pub use error::{exit, CliError};
