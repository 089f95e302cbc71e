//! Mish, `x · tanh(softplus(x))`, and its derivative.
//!
//! With `e = exp(x)` and `n = e·(e + 2)`, `tanh(ln(1 + e)) = n / (n + 2)`,
//! so both the value and the derivative need a single exponential.

/// Above this input `tanh(softplus(x))` rounds to 1 in f64.
const SATURATION: f64 = 20.0;

pub fn mish(x: f64) -> f64 {
    mish_with_derivative(x).0
}

/// `d/dx mish(x) = tanh(sp) + x · sech²(sp) · σ(x)`.
pub fn mish_derivative(x: f64) -> f64 {
    mish_with_derivative(x).1
}

/// Value and derivative together.
pub(crate) fn mish_with_derivative(x: f64) -> (f64, f64) {
    if x > SATURATION {
        return (x, 1.0);
    }
    let e = x.exp();
    let n = e * (e + 2.0);
    let denom = n + 2.0;
    let t = n / denom;
    // sech² = 1 - t² = 4(n + 1) / (n + 2)²
    let sech2 = 4.0 * (n + 1.0) / (denom * denom);
    let sigmoid = e / (1.0 + e);
    (x * t, t + x * sech2 * sigmoid)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook form, used only as a reference.
    fn mish_reference(x: f64) -> f64 {
        x * (x.exp().ln_1p()).tanh()
    }

    #[test]
    fn known_values() {
        assert_eq!(mish(0.0), 0.0);
        // 1·tanh(ln(1+e)) evaluated in high precision: 0.86509838826731...
        assert!((mish(1.0) - 0.865_098_388_267_3).abs() < 1e-12);
        assert!(mish(-20.0).abs() < 1e-7);
        assert_eq!(mish(-800.0), 0.0);
    }

    #[test]
    fn matches_textbook_form() {
        for i in -400..=400 {
            let x = f64::from(i) / 20.0;
            let (v, d) = mish_with_derivative(x);
            assert!((mish(x) - mish_reference(x)).abs() < 1e-12 * (1.0 + x.abs()), "x = {x}");
            assert_eq!(v, mish(x));
            assert_eq!(d, mish_derivative(x));
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-6;
        for i in -300..=300 {
            let x = f64::from(i) / 25.0;
            let fd = (mish(x + h) - mish(x - h)) / (2.0 * h);
            assert!((fd - mish_derivative(x)).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn lower_bound_and_asymptote() {
        let mut min = f64::INFINITY;
        for i in -100_000..=100_000 {
            let x = f64::from(i) / 1000.0;
            min = min.min(mish(x));
        }
        assert!(min > -0.31);
        assert!(min < -0.30);
        for x in [5.0, 10.0, 50.0, 1e3, 1e6] {
            assert!((mish(x) / x - 1.0).abs() < 1e-3 * (10.0 / x).min(1.0) + 1e-15, "x = {x}");
        }
    }
}
