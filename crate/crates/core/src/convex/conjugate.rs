//! Discrete Legendre–Fenchel transform of a sampled 1-D function.

use crate::error::{Error, Result};

/// Samples `(x, φ(x))` with strictly increasing `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction {
    xs: Vec<f64>,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() != values.len() {
            return Err(Error::InvalidGrid(format!(
                "{} abscissae but {} values",
                xs.len(),
                values.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::InvalidGrid("need at least two samples".into()));
        }
        if xs.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite sample".into()));
        }
        if let Some(w) = xs.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "abscissae not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Self { xs, values })
    }

    pub fn from_fn(xs: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = xs.iter().map(|&x| f(x)).collect();
        Self::new(xs, values)
    }

    /// `n` equally spaced samples on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return Err(Error::InvalidGrid("need n >= 2 and hi > lo".into()));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let xs = (0..n).map(|i| lo + step * i as f64).collect();
        Self::from_fn(xs, f)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Slopes of consecutive chords.
    pub fn slopes(&self) -> Vec<f64> {
        self.xs
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| (v[1] - v[0]) / (x[1] - x[0]))
            .collect()
    }

    /// Index of a maximiser of `w·x − φ(x)` over the samples.
    pub fn conjugate_argmax(&self, w: f64) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, (x, v)) in self.xs.iter().zip(&self.values).enumerate() {
            let val = w * x - v;
            if val > best_val {
                best_val = val;
                best = i;
            }
        }
        best
    }
}

/// `max_j w·x_j − φ(x_j)`: the conjugate of the grid restriction of `φ`.
pub fn numeric_conjugate_1d(samples: &SampledFunction, w: f64) -> f64 {
    let i = samples.conjugate_argmax(w);
    w * samples.xs[i] - samples.values[i]
}

/// Conjugate at many slopes. When `ws` is sorted ascending and `φ` is convex
/// on the grid the maximiser index is non-decreasing in `w`, so the sweep is
/// linear in `len(ws) + len(samples)`. Unsorted input falls back to a scan
/// per slope.
pub fn numeric_conjugate_sweep(samples: &SampledFunction, ws: &[f64]) -> Vec<f64> {
    let sorted = ws.windows(2).all(|w| w[0] <= w[1]);
    let convex = samples.slopes().windows(2).all(|s| s[1] >= s[0]);
    if !(sorted && convex) {
        return ws.iter().map(|&w| numeric_conjugate_1d(samples, w)).collect();
    }
    let xs = &samples.xs;
    let vs = &samples.values;
    let mut j = 0;
    ws.iter()
        .map(|&w| {
            while j + 1 < xs.len() && w * xs[j + 1] - vs[j + 1] >= w * xs[j] - vs[j] {
                j += 1;
            }
            w * xs[j] - vs[j]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(f: impl Fn(f64) -> f64) -> SampledFunction {
        SampledFunction::uniform(-5.0, 5.0, 1001, f).unwrap()
    }

    #[test]
    fn quadratic_conjugate() {
        let g = grid(|x| 0.5 * x * x);
        assert!((numeric_conjugate_1d(&g, 1.0) - 0.5).abs() <= 0.01);
    }

    #[test]
    fn abs_conjugate_is_box_indicator_up_to_truncation() {
        let g = grid(f64::abs);
        assert!(numeric_conjugate_1d(&g, 0.5).abs() < 1e-12);
        // Truncated domain: the supremum sits on the boundary x = 5.
        assert!((numeric_conjugate_1d(&g, 2.0) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn linear_function_matching_slope() {
        let g = grid(|x| 2.0 * x);
        assert!(numeric_conjugate_1d(&g, 2.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_matches_pointwise() {
        let g = grid(|x| x.powi(4) / 4.0 + x.abs());
        let ws: Vec<f64> = (0..300).map(|i| -20.0 + 0.13 * i as f64).collect();
        let swept = numeric_conjugate_sweep(&g, &ws);
        for (w, s) in ws.iter().zip(&swept) {
            assert_eq!(*s, numeric_conjugate_1d(&g, *w));
        }
        let mut shuffled = ws.clone();
        shuffled.reverse();
        let back = numeric_conjugate_sweep(&g, &shuffled);
        assert_eq!(back.iter().rev().cloned().collect::<Vec<_>>(), swept);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SampledFunction::new(vec![], vec![]).is_err());
        assert!(SampledFunction::new(vec![1.0], vec![1.0]).is_err());
        assert!(SampledFunction::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(SampledFunction::new(vec![1.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(SampledFunction::new(vec![0.0, 1.0], vec![f64::NAN, 2.0]).is_err());
    }
}
