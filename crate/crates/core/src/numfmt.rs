//! Stable number formatting for file outputs.

/// Significant digits used for every number written to CSV or JSON.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Rounds `value` to [`SIGNIFICANT_DIGITS`] significant digits.
///
/// Non-finite values pass through unchanged.
pub fn round_sig(value: f64) -> f64 {
    if !value.is_finite() || value == 0.0 {
        return value;
    }
    let text = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, value);
    // the exponent form always parses back
    text.parse().unwrap_or(value)
}

/// Formats a value for CSV output. Not-a-value becomes an empty field.
pub fn format_value(value: f64) -> String {
    if value.is_nan() {
        String::new()
    } else {
        let rounded = round_sig(value);
        if rounded == 0.0 {
            // collapse negative zero
            "0".to_string()
        } else {
            rounded.to_string()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_twelve_digits() {
        assert_eq!(round_sig(0.1 + 0.2), 0.3);
        assert_eq!(round_sig(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_sig(-123456.7890123456), -123456.789012);
        assert_eq!(format_value(-0.0), "0");
        assert_eq!(format_value(f64::NAN), "");
        assert_eq!(format_value(50000.0), "50000");
    }
}
