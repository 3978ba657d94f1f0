//! Fixed-significance decimal formatting for CSV output.

/// Formats `x` with `digits` significant digits in plain decimal notation,
/// falling back to scientific notation outside `[1e-4, 1e15)`.
pub fn sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return format!("{:.*}", digits.saturating_sub(1), 0.0);
    }
    let digits = digits.max(1);
    let mag = x.abs();
    if !(1e-4..1e15).contains(&mag) {
        return format!("{:.*e}", digits - 1, x);
    }
    // Round first so that e.g. 9.999996 -> 10.0000 picks the right exponent.
    let rounded: f64 = format!("{:.*e}", digits - 1, x).parse().unwrap_or(x);
    let exp = rounded.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    format!("{rounded:.decimals$}")
}
