//! Test-function generators, grid and report files, and verification suites.

pub mod generate;
pub mod io;
pub mod suites;

pub use generate::{generate, trial_seed, Generator};
pub use io::{load_function, load_json, parse_function, save_function, save_json};
pub use suites::{run_suite, Check, CheckKind, Row, Suite, SuiteConfig, SuiteReport};
