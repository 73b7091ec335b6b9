//! Number formatting shared by every file writer.

/// Rounds to six significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Six-significant-digit decimal rendering without exponent, e.g. `920000`, `0.2`, `2333.33`.
pub fn sig6(x: f64) -> String {
    let r = round_sig6(x);
    if r == 0.0 {
        // collapses -0.0
        return "0".to_string();
    }
    format!("{r}")
}

/// Dollar amount in billions with two decimals, e.g. `$126.04B`.
pub fn billions(usd: f64) -> String {
    format!("${:.2}B", usd / 1e9)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(920_000.0), "920000");
        assert_eq!(sig6(2333.333333), "2333.33");
        assert_eq!(sig6(0.2), "0.2");
        assert_eq!(sig6(-0.0), "0");
        assert_eq!(sig6(64_123.456), "64123.5");
        assert_eq!(sig6(1.0e-7), "0.0000001");
    }

    #[test]
    fn rounding_is_idempotent() {
        for x in [1.0 / 3.0, 12_345.678_9, 69_000.0, 4.2e-9, 7.77777e10] {
            let once = round_sig6(x);
            assert_eq!(round_sig6(once), once);
            assert_eq!(sig6(x).parse::<f64>().unwrap(), once);
        }
    }

    #[test]
    fn billions_two_decimals() {
        assert_eq!(billions(126.04e9), "$126.04B");
        assert_eq!(billions(1.37e9), "$1.37B");
    }
}
