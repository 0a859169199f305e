use crate::error::{Error, Result};

/// `2 / (1 + exp(-diff)) - 1`, evaluated so that `f(-d) == -f(d)` bit for bit.
///
/// Rewritten as `-expm1(-d) / (2 + expm1(-d))` for `d >= 0`, which keeps tiny
/// nonzero differences from rounding to a zero preference.
pub fn preference_from_diff(diff: f64) -> f64 {
    fn positive(d: f64) -> f64 {
        let m = libm::expm1(-d);
        -m / (2.0 + m)
    }
    if diff < 0.0 {
        -positive(-diff)
    } else {
        positive(diff)
    }
}

/// d pref / d diff, written in terms of the preference value itself.
pub fn preference_slope(pref: f64) -> f64 {
    0.5 * (1.0 - pref * pref)
}

/// Preference of `x` over `y` from their predicted MOS values.
pub fn preference_score(mos_x: f64, mos_y: f64) -> Result<f64> {
    if !mos_x.is_finite() || !mos_y.is_finite() {
        return Err(Error::NonFinite(format!("preference of ({mos_x}, {mos_y})")));
    }
    Ok(preference_from_diff(mos_x - mos_y))
}
