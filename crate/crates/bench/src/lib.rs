//! Shared fixtures for the benchmark suite.

use jumpq_core::qmodel::QModel;
use jumpq_core::scenarios;

pub fn two_state() -> (QModel, f64, f64) {
    let sc = scenarios::two_state_symmetric();
    let (u, t) = sc.window;
    (sc.model, u, t)
}

pub fn poisson() -> (QModel, f64, f64) {
    let sc = scenarios::poisson_nonhomogeneous();
    let (u, t) = sc.window;
    (sc.model, u, t)
}

pub fn birth_death() -> (QModel, f64, f64) {
    let sc = scenarios::birth_death_bounded();
    let (u, t) = sc.window;
    (sc.model, u, t)
}
