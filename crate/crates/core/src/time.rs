use crate::error::{invalid, require_nonnegative, require_positive, Result};

/// Relative slack allowed when a duration is required to be a whole number of steps.
const STEP_SLACK: f64 = 1e-6;

/// Number of steps of size `dt` covering `duration`, which must be an integer
/// multiple of `dt` up to a relative slack of 1e-6. The returned step is
/// `duration / n`, so the last recorded time lands exactly on `duration`.
pub(crate) fn step_count(dt: f64, duration: f64) -> Result<(usize, f64)> {
    require_positive("dt", dt)?;
    require_nonnegative("t_end", duration)?;
    if duration == 0.0 {
        return Ok((0, dt));
    }
    let ratio = duration / dt;
    let n = ratio.round();
    if (ratio - n).abs() > STEP_SLACK * ratio.max(1.0) || n < 1.0 {
        return Err(invalid(
            "dt",
            format!("duration {duration} is not a whole number of steps of {dt}"),
        ));
    }
    Ok((n as usize, duration / n))
}

/// Smallest number of uniform steps no longer than `max_dt` that covers
/// `duration`; returns the step count and the step.
pub fn uniform_steps(duration: f64, max_dt: f64) -> (usize, f64) {
    if duration <= 0.0 {
        return (0, max_dt);
    }
    let n = (duration / max_dt - 1e-9).ceil().max(1.0) as usize;
    (n, duration / n as f64)
}
