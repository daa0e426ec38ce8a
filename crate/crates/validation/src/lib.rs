//! Acceptance suite only; see `tests/acceptance.rs`.
