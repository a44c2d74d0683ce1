//! Conversational survey engine for health self-report.
//!
//! Respondents answer short spoken or typed questionnaires (a three-question
//! fluid-intake check and an eleven-item sleep diary). Answers are parsed from
//! free text, optionally read back for confirmation, and appended to an event
//! log from which profiles, summaries and sessions are rebuilt.

pub mod accounts;
pub mod analytics;
pub mod assets;
pub mod engine;
pub mod flow;
pub mod parsers;
pub mod scheduler;
pub mod store;
pub mod time;
pub mod config;
pub mod service;
pub mod simulate;
pub mod gateway;
pub mod cli;
