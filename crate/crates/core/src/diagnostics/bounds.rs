use crate::error::{Error, Result};

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must be positive and finite")))
    }
}

/// Log-cardinality bound `m^{r+1} ln(C5 sqrt((2n - r) sigma) / delta)` for
/// brackets of the `sigma`-ball, valid for `0 < delta <= c sqrt((2n - r) sigma)`.
pub fn entropy_bound(n: usize, r: usize, sigma: f64, delta: f64, m: usize, c5: f64, c: f64) -> Result<f64> {
    positive("sigma", sigma)?;
    positive("delta", delta)?;
    positive("C5", c5)?;
    positive("c", c)?;
    if 2 * n <= r {
        return Err(Error::OrderTooLarge { order: r, n: 2 * n });
    }
    let scale = ((2 * n - r) as f64 * sigma).sqrt();
    if delta > c * scale {
        return Err(Error::InvalidParameter(format!("delta = {delta} exceeds c sqrt((2n - r) sigma) = {}", c * scale)));
    }
    Ok((m as f64).powi(r as i32 + 1) * (c5 * scale / delta).ln())
}

/// `exp(-alpha^2 / (2 (K alpha + R)))`.
pub fn bernstein_tail_bound(alpha: f64, k: f64, r: f64) -> Result<f64> {
    positive("alpha", alpha)?;
    positive("K", k)?;
    positive("R", r)?;
    Ok((-alpha * alpha / (2.0 * (k * alpha + r))).exp())
}

/// `2 exp(-alpha^2 / (C^2 (c1 + 1) R))`.
pub fn maximal_bound(alpha: f64, c_universal: f64, c1: f64, r: f64) -> Result<f64> {
    positive("alpha", alpha)?;
    positive("C", c_universal)?;
    positive("c1", c1)?;
    positive("R", r)?;
    Ok(2.0 * (-alpha * alpha / (c_universal * c_universal * (c1 + 1.0) * r)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_examples() {
        let (n, r, sigma, m, c5) = (100, 1, 0.01, 2, 75.0);
        let scale = ((2 * n - r) as f64 * sigma).sqrt();
        assert!(entropy_bound(n, r, sigma, c5 * scale, m, c5, 100.0).unwrap().abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for k in 1..50 {
            let delta = k as f64 * 0.02 * scale;
            let v = entropy_bound(n, r, sigma, delta, m, c5, 2.0).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(entropy_bound(n, r, sigma, 0.0, m, c5, 2.0).is_err());
        assert!(entropy_bound(n, r, sigma, 3.0 * scale, m, c5, 2.0).is_err());
    }

    #[test]
    fn bernstein_examples() {
        assert!((bernstein_tail_bound(2.0, 1.0, 2.0).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        assert!((bernstein_tail_bound(1e-9, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let a = bernstein_tail_bound(1.0, 2.0, 3.0).unwrap();
        assert!(bernstein_tail_bound(1.1, 2.0, 3.0).unwrap() < a);
        assert!(bernstein_tail_bound(1.0, 2.0, 3.1).unwrap() > a);
        assert!(bernstein_tail_bound(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn maximal_examples() {
        assert!((maximal_bound(1e-9, 100.0, 1.0, 1.0).unwrap() - 2.0).abs() < 1e-12);
        let (c, c1, r) = (100.0f64, 0.5, 3.0);
        let alpha = (c * c * (c1 + 1.0) * r).sqrt();
        assert!((maximal_bound(alpha, c, c1, r).unwrap() - 2.0 / std::f64::consts::E).abs() < 1e-12);
    }
}
