//! Trajectory generation: Euler–Maruyama for the multiscale and homogenized
//! Langevin equations and RK4 for the Lorenz-driven slow/fast system.

mod fcn;
mod sde;
mod trajectory;

pub use fcn::{fcn_step, rk4_fcn, FcnSpec, LORENZ_BETA, LORENZ_RHO, LORENZ_SIGMA};
pub use sde::{
    euler_maruyama, euler_maruyama_strided, homogenized_langevin, homogenized_langevin_2d,
    multiscale_langevin, multiscale_step, LangevinPotential, SdeSpec, MULTISCALE_STEP_FRACTION,
};
pub use trajectory::Trajectory;

/// Default spacing of stored observations, in time units.
pub const OBSERVATION_STEP: f64 = 1e-2;

/// Number of steps of size `dt` covering `horizon`, if it is an integer.
pub(crate) fn step_count(horizon: f64, dt: f64) -> crate::Result<usize> {
    if !(horizon > 0.0 && dt > 0.0 && horizon.is_finite() && dt.is_finite()) {
        return Err(crate::Error::InvalidParameter(format!(
            "horizon and dt must be positive, got T = {horizon}, dt = {dt}"
        )));
    }
    if dt > horizon * (1.0 + 1e-12) {
        return Err(crate::Error::InvalidParameter(format!("dt = {dt} exceeds T = {horizon}")));
    }
    let m = (horizon / dt).round();
    if (m * dt - horizon).abs() > 1e-9 * horizon {
        return Err(crate::Error::InvalidParameter(format!(
            "T = {horizon} is not a multiple of dt = {dt}"
        )));
    }
    Ok(m as usize)
}
