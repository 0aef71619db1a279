//! Decimal formatting shared by the CSV and wire formats.

/// Plain decimal with 9 significant digits, trailing zeros trimmed.
/// Never uses exponent notation.
pub fn sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_nan() {
            "NaN".into()
        } else if v.is_infinite() {
            if v > 0.0 { "inf".into() } else { "-inf".into() }
        } else {
            "0".into()
        };
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (8 - exp).max(0) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(-0.0), "0");
        assert_eq!(sig9(1.0), "1");
        assert_eq!(sig9(-0.25), "-0.25");
        assert_eq!(sig9(0.123456789123), "0.123456789");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(123.456789123), "123.456789");
        assert_eq!(sig9(1.5e-7), "0.00000015");
    }

    proptest! {
        #[test]
        fn round_trip_relative_error(v in -1e6f64..1e6) {
            let back: f64 = sig9(v).parse().unwrap();
            prop_assert!((back - v).abs() <= 5e-9 * v.abs().max(1e-300) + 1e-300);
        }
    }
}
