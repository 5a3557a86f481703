//! Acceptance checks for the serverpop workspace; see `tests/acceptance.rs`.
