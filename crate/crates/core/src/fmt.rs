//! Fixed number formatting shared by every CSV writer.

/// Twelve significant digits in scientific notation.
pub fn num(v: f64) -> String {
    if v == 0.0 {
        // avoid "-0.00000000000e0"
        return format!("{:.11e}", 0.0);
    }
    format!("{v:.11e}")
}

#[cfg(test)]
mod tests {
    use super::num;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(0.5), "5.00000000000e-1");
        assert_eq!(num(-0.0), "0.00000000000e0");
        assert_eq!(num(123456789012345.0), "1.23456789012e14");
    }
}
