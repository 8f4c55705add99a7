//! Numeric helpers shared across modules.

/// Compensated (Neumaier) summation. Deterministic for a fixed iteration
/// order and accurate enough that normalized mass vectors sum to 1 within
/// a few ulps even for millions of cells.
pub fn stable_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Squared Euclidean distance between two points of equal dimension.
pub fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut s = 0.0;
    for (a, b) in x.iter().zip(y) {
        let d = a - b;
        s += d * d;
    }
    s
}

/// Least-squares slope of y against x.
pub fn lsq_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = stable_sum(x.iter().copied()) / n;
    let my = stable_sum(y.iter().copied()) / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in x.iter().zip(y) {
        num += (a - mx) * (b - my);
        den += (a - mx) * (a - mx);
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_sum_handles_cancellation() {
        let v = vec![1e16, 1.0, -1e16];
        assert_eq!(stable_sum(v), 1.0);
    }

    #[test]
    fn slope_of_line_is_exact() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        assert!((lsq_slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}
