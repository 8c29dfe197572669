//! Small shared helpers.

/// Formats a float with six significant digits, the precision used by every
/// emitted experiment table. Parsing an emitted value and formatting it again
/// reproduces the same text.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.00000e0".to_string();
    }
    format!("{x:.5e}")
}
