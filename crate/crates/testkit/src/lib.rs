//! Brute-force oracles and seeded fixtures shared by the test suites.

pub mod files;
pub mod gen;
pub mod oracle;
pub mod panoptic;

/// `|a - b| <= tol`, treating two `None`s as equal.
pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        _ => false,
    }
}
