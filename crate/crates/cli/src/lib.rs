//! HTTP service for browsing runs and feeding human feedback into human-mode
//! runs. The `bilevel` binary wraps it together with the run commands.

pub mod service;
