//! Holds the acceptance suite in `tests/acceptance.rs`; no library code.
//! It lives in its own package so that it runs after the unit and
//! integration suites of the other crates.
