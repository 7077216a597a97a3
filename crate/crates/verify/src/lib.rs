//! Oracle-backed acceptance suites for `sdcbf`.
//!
//! Everything under [`oracles`] is written from scratch against the raw
//! vertex lists and never calls into the library, so agreement is evidence
//! rather than tautology.

use std::fmt;

pub mod oracles;
pub mod random;
pub mod suites;

#[derive(Debug, Clone)]
pub struct Report {
    pub criterion: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Report {
    pub fn new(criterion: u8, name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            criterion,
            name,
            passed,
            detail,
        }
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] criterion {:>2} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.criterion,
            self.name,
            self.detail
        )
    }
}

pub type Suite = fn() -> Report;

pub const SUITES: [Suite; 10] = [
    suites::space_equivalence,
    suites::penetration_oracle,
    suites::collision_predicate,
    suites::minkowski_properties,
    suites::gradient_fidelity,
    suites::case_translation,
    suites::case_recovery,
    suites::case_multi_obstacle,
    suites::forward_invariance,
    suites::qp_conformance,
];

/// Geometry, gradient and solver suites; the closed-loop runs are left out.
pub fn quick_suites() -> Vec<Suite> {
    [0, 1, 2, 3, 4, 9].iter().map(|&i| SUITES[i]).collect()
}

pub fn run_all() -> Vec<Report> {
    SUITES.iter().map(|s| s()).collect()
}
