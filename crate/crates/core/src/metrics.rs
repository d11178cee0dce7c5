//! Benchmark arithmetic kept pure so it can be oracled directly.

use crate::error::CoreError;

/// Percentage improvement of `t_opt` over `t_base`:
/// 100 × (t_base − t_opt) / t_base.
pub fn speedup(t_base: f64, t_opt: f64) -> Result<f64, CoreError> {
    if !(t_base > 0.0) {
        return Err(CoreError::InvalidArgument("baseline time must be > 0"));
    }
    Ok(100.0 * (t_base - t_opt) / t_base)
}

/// Data-loading share of an epoch: 100 × load_time / epoch_time.
pub fn load_fraction(load_time_ms: f64, epoch_time_ms: f64) -> Result<f64, CoreError> {
    if !(epoch_time_ms > 0.0) {
        return Err(CoreError::InvalidArgument("epoch time must be > 0"));
    }
    Ok(100.0 * load_time_ms / epoch_time_ms)
}
