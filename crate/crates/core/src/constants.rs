//! Physical constants and defaults shared by every module.
//!
//! | name | value | meaning |
//! |------|-------|---------|
//! | [`C_LIGHT`] | 299 792 458 m/s | speed of light in vacuum |
//! | [`DEFAULT_NU0`] | 194.4 THz | optical carrier of the disseminated laser |
//! | [`GROUP_INDEX`] | 1.468 | group index of standard single-mode fiber |
//! | [`DEFAULT_KAPPA`] | 1.1e-5 /K | effective thermal coefficient of the optical path length |
//! | [`DEFAULT_GATE`] | 1 s | counter gate time |
//! | [`SECONDS_PER_DAY`] | 86 400 s | |

pub const C_LIGHT: f64 = 299_792_458.0;

pub const DEFAULT_NU0: f64 = 194.4e12;

pub const GROUP_INDEX: f64 = 1.468;

/// Relative change of optical path length per kelvin. Equivalent to a
/// thermal delay coefficient of about 37 ps/(km K).
pub const DEFAULT_KAPPA: f64 = 1.1e-5;

pub const DEFAULT_GATE: f64 = 1.0;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// One-way propagation delay through `length_m` of fiber.
pub fn fiber_delay(length_m: f64) -> f64 {
    GROUP_INDEX * length_m / C_LIGHT
}
