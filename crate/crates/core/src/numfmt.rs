//! Fixed-precision rendering for numeric table outputs.

/// Renders `x` rounded to 9 significant digits, in the shortest form that
/// reads back as the rounded value.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("scientific notation parses");
    // avoid "-0"
    if rounded == 0.0 {
        return "0".into();
    }
    format!("{rounded}")
}

pub fn opt_sig9(x: Option<f64>) -> String {
    x.map(sig9).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::sig9;

    #[test]
    fn rounding() {
        assert_eq!(sig9(5820.0), "5820");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(300.0 / 7.0), "42.8571429");
        assert_eq!(sig9(-0.0), "0");
        assert_eq!(sig9(1.164), "1.164");
        assert_eq!(sig9(123456789012.0), "123456789000");
    }
}
