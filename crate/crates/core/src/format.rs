//! Fixed-precision number formatting for CLI artifacts.

/// Rounds to 12 significant digits and prints the shortest decimal that
/// parses back to the rounded value, in exponent form outside `[1e-5, 1e15)`.
pub fn sig12(x: f64) -> String {
    let r = round_sig12(x);
    if r != 0.0 && r.is_finite() && !(1e-5..1e15).contains(&r.abs()) {
        format!("{r:e}")
    } else {
        r.to_string()
    }
}

/// Rounds to 12 significant digits.
pub fn round_sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Applies [`round_sig12`] to every number in a JSON value.
pub fn round_json(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.is_f64() {
                    if let Some(r) = serde_json::Number::from_f64(round_sig12(f)) {
                        *n = r;
                    }
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_json),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(sig12(4.0 / 7.0), "0.571428571429");
        assert_eq!(sig12(1.0), "1");
        assert_eq!(sig12(0.0), "0");
        assert_eq!(sig12(-2.0 / 3.0), "-0.666666666667");
        assert_eq!(sig12(1.0e-13 / 3.0), "3.33333333333e-14");
        assert_eq!(sig12(2.5e20), "2.5e20");
        assert_eq!(sig12(f64::NAN), "NaN");
    }
}
