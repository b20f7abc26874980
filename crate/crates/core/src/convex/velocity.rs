//! Dissipation potentials that depend on the configuration velocity only,
//! `φ(q̇, ṗ) = Φ(q̇)`.

use std::fmt::Debug;
use std::path::Path;
use std::sync::Arc;

use super::conjugate::SampledFunction;
use super::{CoordConstraint, ExtReal, INDICATOR_TOL};
use crate::error::{Error, Result};

/// A convex lsc function `Φ: ℝⁿ → ℝ ∪ {+∞}` with its conjugate and
/// proximal oracles. Implementations act on any dimension `n`.
pub trait VelocityPotential: Send + Sync + Debug {
    fn value(&self, x: &[f64]) -> ExtReal;

    fn conjugate(&self, w: &[f64]) -> ExtReal;

    /// Euclidean projection of `g` onto `∂Φ(x)`. `x` must lie in `dom Φ`.
    ///
    /// With `g = 0` this is the minimal-norm subgradient.
    fn subdifferential_projection(&self, x: &[f64], g: &[f64]) -> Vec<f64>;

    /// Some element of `∂Φ*(w)`, or `None` when `w ∉ dom Φ*`.
    fn conjugate_subgradient(&self, w: &[f64]) -> Option<Vec<f64>>;

    /// `argmin_u Φ(u) + |u − x|² / (2·step)`.
    fn prox(&self, x: &[f64], step: f64) -> Vec<f64>;

    /// The force `η = (prox(x) − x) / step`, which satisfies `−η ∈ ∂Φ(prox(x))`.
    fn resolvent_force(&self, x: &[f64], step: f64) -> Vec<f64> {
        self.prox(x, step)
            .iter()
            .zip(x)
            .map(|(u, x)| (u - x) / step)
            .collect()
    }

    /// Per-coordinate description of `dom Φ`.
    fn domain(&self, n: usize) -> Vec<CoordConstraint>;

    /// Per-coordinate description of `dom Φ*`.
    fn conjugate_domain(&self, n: usize) -> Vec<CoordConstraint>;

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        self.subdifferential_projection(x, &vec![0.0; x.len()])
    }

    /// Short catalogue tag used in reports.
    fn describe(&self) -> String;
}

/// `Φ ≡ 0`; its conjugate is the indicator of `{0}`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ZeroPotential;

impl VelocityPotential for ZeroPotential {
    fn value(&self, _x: &[f64]) -> ExtReal {
        ExtReal::ZERO
    }

    fn conjugate(&self, w: &[f64]) -> ExtReal {
        ExtReal::indicator(w.iter().all(|w| w.abs() <= INDICATOR_TOL))
    }

    fn subdifferential_projection(&self, x: &[f64], _g: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }

    fn conjugate_subgradient(&self, w: &[f64]) -> Option<Vec<f64>> {
        self.conjugate(w).is_finite().then(|| vec![0.0; w.len()])
    }

    fn prox(&self, x: &[f64], _step: f64) -> Vec<f64> {
        x.to_vec()
    }

    fn resolvent_force(&self, x: &[f64], _step: f64) -> Vec<f64> {
        vec![0.0; x.len()]
    }

    fn domain(&self, n: usize) -> Vec<CoordConstraint> {
        vec![CoordConstraint::Free; n]
    }

    fn conjugate_domain(&self, n: usize) -> Vec<CoordConstraint> {
        vec![CoordConstraint::Fixed(0.0); n]
    }

    fn describe(&self) -> String {
        "zero".into()
    }
}

/// Viscous dissipation `Φ(q̇) = (c/2)|q̇|²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticVelocity {
    coefficient: f64,
}

impl QuadraticVelocity {
    pub fn new(coefficient: f64) -> Result<Self> {
        if !(coefficient > 0.0 && coefficient.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "coefficient".into(),
                reason: format!("viscous coefficient must be positive, got {coefficient}"),
            });
        }
        Ok(Self { coefficient })
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }
}

impl VelocityPotential for QuadraticVelocity {
    fn value(&self, x: &[f64]) -> ExtReal {
        ExtReal::Finite(0.5 * self.coefficient * x.iter().map(|v| v * v).sum::<f64>())
    }

    fn conjugate(&self, w: &[f64]) -> ExtReal {
        ExtReal::Finite(w.iter().map(|v| v * v).sum::<f64>() / (2.0 * self.coefficient))
    }

    fn subdifferential_projection(&self, x: &[f64], _g: &[f64]) -> Vec<f64> {
        x.iter().map(|v| self.coefficient * v).collect()
    }

    fn conjugate_subgradient(&self, w: &[f64]) -> Option<Vec<f64>> {
        Some(w.iter().map(|v| v / self.coefficient).collect())
    }

    fn prox(&self, x: &[f64], step: f64) -> Vec<f64> {
        let s = 1.0 + step * self.coefficient;
        x.iter().map(|v| v / s).collect()
    }

    fn resolvent_force(&self, x: &[f64], step: f64) -> Vec<f64> {
        self.prox(x, step)
            .iter()
            .map(|u| -self.coefficient * u)
            .collect()
    }

    fn domain(&self, n: usize) -> Vec<CoordConstraint> {
        vec![CoordConstraint::Free; n]
    }

    fn conjugate_domain(&self, n: usize) -> Vec<CoordConstraint> {
        vec![CoordConstraint::Free; n]
    }

    fn describe(&self) -> String {
        format!("quadratic(c={})", self.coefficient)
    }
}

/// Coulomb-type dry friction `Φ(q̇) = k|q̇|₁`; `Φ*` is the indicator of the
/// box `|wᵢ| ≤ k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DryFriction {
    threshold: f64,
}

impl DryFriction {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "threshold".into(),
                reason: format!("friction threshold must be positive, got {threshold}"),
            });
        }
        Ok(Self { threshold })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    fn in_box(&self, w: f64) -> bool {
        w.abs() <= self.threshold + INDICATOR_TOL * self.threshold.max(1.0)
    }
}

impl VelocityPotential for DryFriction {
    fn value(&self, x: &[f64]) -> ExtReal {
        ExtReal::Finite(self.threshold * x.iter().map(|v| v.abs()).sum::<f64>())
    }

    fn conjugate(&self, w: &[f64]) -> ExtReal {
        ExtReal::indicator(w.iter().all(|&w| self.in_box(w)))
    }

    fn subdifferential_projection(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        let k = self.threshold;
        x.iter()
            .zip(g)
            .map(|(&x, &g)| if x == 0.0 { g.clamp(-k, k) } else { k * x.signum() })
            .collect()
    }

    fn conjugate_subgradient(&self, w: &[f64]) -> Option<Vec<f64>> {
        // The normal cone of the box contains 0 everywhere on the box.
        self.conjugate(w).is_finite().then(|| vec![0.0; w.len()])
    }

    fn prox(&self, x: &[f64], step: f64) -> Vec<f64> {
        let t = step * self.threshold;
        x.iter()
            .map(|&v| if v.abs() <= t { 0.0 } else { v - t * v.signum() })
            .collect()
    }

    fn resolvent_force(&self, x: &[f64], step: f64) -> Vec<f64> {
        let k = self.threshold;
        x.iter()
            .map(|&v| {
                if v.abs() <= step * k {
                    -v / step
                } else {
                    -k * v.signum()
                }
            })
            .collect()
    }

    fn domain(&self, n: usize) -> Vec<CoordConstraint> {
        vec![CoordConstraint::Free; n]
    }

    fn conjugate_domain(&self, n: usize) -> Vec<CoordConstraint> {
        vec![
            CoordConstraint::Interval {
                lo: -self.threshold,
                hi: self.threshold,
            };
            n
        ]
    }

    fn describe(&self) -> String {
        format!("dry_friction(k={})", self.threshold)
    }
}

/// Separable potential `Φ(q̇) = Σᵢ g(q̇ᵢ)` with `g` the piecewise-linear
/// interpolant of convex samples, `+∞` outside the sampled interval.
///
/// The conjugate of such a `g` is exactly the discrete transform of its
/// samples.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPotential {
    samples: SampledFunction,
    slopes: Vec<f64>,
}

/// Maximal negative second difference accepted when validating convexity.
pub const CONVEXITY_TOL: f64 = 1e-12;

impl GridPotential {
    pub fn new(samples: SampledFunction) -> Result<Self> {
        let slopes = samples.slopes();
        if let Some((i, s)) = slopes
            .windows(2)
            .enumerate()
            .find(|(_, s)| s[1] - s[0] < -CONVEXITY_TOL)
        {
            return Err(Error::InvalidGrid(format!(
                "samples are not convex near x = {} (slope drops from {} to {})",
                samples.xs()[i + 1],
                s[0],
                s[1]
            )));
        }
        Ok(Self { samples, slopes })
    }

    /// Reads a two-column `x,value` CSV; a header row is optional.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut xs = Vec::new();
        let mut values = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::Parse(format!(
                    "row {}: expected 2 columns, found {}",
                    row + 1,
                    record.len()
                )));
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(v) => {
                    xs.push(v[0]);
                    values.push(v[1]);
                }
                Err(_) if row == 0 => continue,
                Err(e) => return Err(Error::Parse(format!("row {}: {e}", row + 1))),
            }
        }
        Self::new(SampledFunction::new(xs, values)?)
    }

    pub fn samples(&self) -> &SampledFunction {
        &self.samples
    }

    fn lo(&self) -> f64 {
        self.samples.xs()[0]
    }

    fn hi(&self) -> f64 {
        *self.samples.xs().last().unwrap()
    }

    /// Segment index `j` with `x ∈ [x_j, x_{j+1}]`.
    fn segment(&self, x: f64) -> usize {
        let xs = self.samples.xs();
        match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(xs.len() - 2),
            Err(i) => (i - 1).min(xs.len() - 2),
        }
    }

    fn eval_1d(&self, x: f64) -> ExtReal {
        if x < self.lo() || x > self.hi() {
            return ExtReal::PosInfinity;
        }
        let j = self.segment(x);
        let xs = self.samples.xs();
        let vs = self.samples.values();
        ExtReal::Finite(vs[j] + self.slopes[j] * (x - xs[j]))
    }

    /// `∂g(x)` as an interval.
    fn subdiff_1d(&self, x: f64) -> (f64, f64) {
        let xs = self.samples.xs();
        let last = self.slopes.len() - 1;
        if let Ok(i) = xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            let left = if i == 0 { f64::NEG_INFINITY } else { self.slopes[i - 1] };
            let right = if i == xs.len() - 1 { f64::INFINITY } else { self.slopes[i] };
            return (left, right);
        }
        let s = self.slopes[self.segment(x).min(last)];
        (s, s)
    }

    fn prox_1d(&self, y: f64, step: f64) -> f64 {
        let xs = self.samples.xs();
        // Breakpoint x_j is optimal iff (y − x_j)/step ∈ ∂g(x_j); otherwise
        // the minimiser is interior to the segment whose slope satisfies
        // x = y − step·s_j ∈ (x_j, x_{j+1}).
        for (j, &x) in xs.iter().enumerate() {
            let (l, r) = self.subdiff_1d(x);
            let s = (y - x) / step;
            if s >= l && s <= r {
                return x;
            }
            if j + 1 < xs.len() {
                let cand = y - step * self.slopes[j];
                if cand > x && cand < xs[j + 1] {
                    return cand;
                }
            }
        }
        y.clamp(self.lo(), self.hi())
    }
}

impl VelocityPotential for GridPotential {
    fn value(&self, x: &[f64]) -> ExtReal {
        x.iter().map(|&v| self.eval_1d(v)).sum()
    }

    fn conjugate(&self, w: &[f64]) -> ExtReal {
        ExtReal::Finite(
            w.iter()
                .map(|&w| super::conjugate::numeric_conjugate_1d(&self.samples, w))
                .sum(),
        )
    }

    fn subdifferential_projection(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(g)
            .map(|(&x, &g)| {
                let (l, r) = self.subdiff_1d(x);
                g.clamp(l, r)
            })
            .collect()
    }

    fn conjugate_subgradient(&self, w: &[f64]) -> Option<Vec<f64>> {
        Some(
            w.iter()
                .map(|&w| self.samples.xs()[self.samples.conjugate_argmax(w)])
                .collect(),
        )
    }

    fn prox(&self, x: &[f64], step: f64) -> Vec<f64> {
        x.iter().map(|&y| self.prox_1d(y, step)).collect()
    }

    fn domain(&self, n: usize) -> Vec<CoordConstraint> {
        vec![
            CoordConstraint::Interval {
                lo: self.lo(),
                hi: self.hi(),
            };
            n
        ]
    }

    fn conjugate_domain(&self, n: usize) -> Vec<CoordConstraint> {
        vec![CoordConstraint::Free; n]
    }

    fn describe(&self) -> String {
        format!("grid({} samples on [{}, {}])", self.samples.len(), self.lo(), self.hi())
    }
}

/// `Φ(x − s·𝟙)`: the potential recentred at the velocity `s` in every
/// coordinate. Its minimum is no longer at rest, which breaks the sign
/// condition `φ(z) + φ^{*ω}(z') ≥ 0` (a constant offset would not: it cancels
/// between `Φ` and `Φ*`). Exists to exercise that gate.
#[derive(Clone, Debug)]
pub struct Shifted {
    inner: Arc<dyn VelocityPotential>,
    shift: f64,
}

impl Shifted {
    pub fn new(inner: Arc<dyn VelocityPotential>, shift: f64) -> Self {
        Self { inner, shift }
    }

    fn back(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v - self.shift).collect()
    }

    fn forth(&self, x: Vec<f64>) -> Vec<f64> {
        x.into_iter().map(|v| v + self.shift).collect()
    }
}

impl VelocityPotential for Shifted {
    fn value(&self, x: &[f64]) -> ExtReal {
        self.inner.value(&self.back(x))
    }

    /// `Φ*(w) + ⟨w, s·𝟙⟩`
    fn conjugate(&self, w: &[f64]) -> ExtReal {
        self.inner.conjugate(w) + self.shift * w.iter().sum::<f64>()
    }

    fn subdifferential_projection(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        self.inner.subdifferential_projection(&self.back(x), g)
    }

    fn conjugate_subgradient(&self, w: &[f64]) -> Option<Vec<f64>> {
        self.inner.conjugate_subgradient(w).map(|x| self.forth(x))
    }

    fn prox(&self, x: &[f64], step: f64) -> Vec<f64> {
        self.forth(self.inner.prox(&self.back(x), step))
    }

    fn resolvent_force(&self, x: &[f64], step: f64) -> Vec<f64> {
        self.inner.resolvent_force(&self.back(x), step)
    }

    fn domain(&self, n: usize) -> Vec<CoordConstraint> {
        self.inner.domain(n).into_iter().map(|c| c.shifted(self.shift)).collect()
    }

    fn conjugate_domain(&self, n: usize) -> Vec<CoordConstraint> {
        self.inner.conjugate_domain(n)
    }

    fn describe(&self) -> String {
        format!("shifted({}, s={})", self.inner.describe(), self.shift)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force `argmin_u g(u) + (u − y)²/(2λ)` over a fine grid.
    fn grid_prox(g: impl Fn(f64) -> f64, y: f64, step: f64) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        let n = 400_001;
        for i in 0..n {
            let u = -10.0 + 20.0 * i as f64 / (n - 1) as f64;
            let val = g(u) + (u - y).powi(2) / (2.0 * step);
            if val < best.0 {
                best = (val, u);
            }
        }
        best.1
    }

    #[test]
    fn quadratic_prox_matches_grid_search() {
        let phi = QuadraticVelocity::new(1.5).unwrap();
        for &(y, l) in &[(2.0, 0.3), (-1.2, 1.0), (0.0, 0.1), (4.5, 2.0)] {
            let analytic = phi.prox(&[y], l)[0];
            assert!((analytic - y / (1.0 + l * 1.5)).abs() < 1e-15);
            assert!((analytic - grid_prox(|u| 0.75 * u * u, y, l)).abs() < 1e-4);
        }
    }

    #[test]
    fn dry_friction_prox_is_soft_threshold() {
        let phi = DryFriction::new(0.8).unwrap();
        for &(y, l) in &[(2.0, 0.3), (-1.2, 1.0), (0.1, 0.5), (-0.3, 0.5), (4.5, 2.0)] {
            let analytic = phi.prox(&[y], l)[0];
            assert!((analytic - grid_prox(|u| 0.8 * u.abs(), y, l)).abs() < 1e-4);
        }
    }

    #[test]
    fn grid_prox_matches_grid_search() {
        let samples = SampledFunction::uniform(-3.0, 3.0, 13, |x| x * x + 0.5 * x.abs()).unwrap();
        let phi = GridPotential::new(samples).unwrap();
        for &(y, l) in &[(2.0, 0.3), (-1.2, 1.0), (0.1, 0.5), (7.0, 0.1), (-9.0, 0.5), (0.6, 0.05)] {
            let analytic = phi.prox(&[y], l)[0];
            let brute = grid_prox(|u| phi.value(&[u]).to_f64(), y, l);
            assert!((analytic - brute).abs() < 1e-4, "y={y} l={l}: {analytic} vs {brute}");
        }
    }

    #[test]
    fn resolvent_force_is_a_negative_subgradient() {
        let potentials: Vec<Box<dyn VelocityPotential>> = vec![
            Box::new(ZeroPotential),
            Box::new(QuadraticVelocity::new(0.5).unwrap()),
            Box::new(DryFriction::new(1.0).unwrap()),
        ];
        for phi in &potentials {
            for &x in &[-3.0, -0.2, 0.0, 0.05, 1.7] {
                let step = 0.25;
                let u = phi.prox(&[x], step);
                let eta = phi.resolvent_force(&[x], step);
                let w: Vec<f64> = eta.iter().map(|e| -e).collect();
                // Fenchel equality Φ(u) + Φ*(−η) = ⟨u, −η⟩.
                let lhs = phi.value(&u) + phi.conjugate(&w);
                let gap = lhs.to_f64() - u[0] * w[0];
                assert!(gap.abs() < 1e-12, "{}: x={x} gap={gap}", phi.describe());
            }
        }
    }

    #[test]
    fn dry_friction_stick_projection() {
        let phi = DryFriction::new(1.0).unwrap();
        assert_eq!(phi.subdifferential_projection(&[0.0], &[0.4]), vec![0.4]);
        assert_eq!(phi.subdifferential_projection(&[0.0], &[-3.0]), vec![-1.0]);
        assert_eq!(phi.subdifferential_projection(&[2.0], &[-3.0]), vec![1.0]);
    }

    #[test]
    fn grid_potential_rejects_nonconvex_samples() {
        let samples = SampledFunction::uniform(-1.0, 1.0, 11, |x| -x * x).unwrap();
        assert!(matches!(GridPotential::new(samples), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn grid_potential_csv_with_and_without_header() {
        let with = "x,value\n-1,1\n0,0\n1,1\n";
        let without = "-1,1\n0,0\n1,1\n";
        let a = GridPotential::from_csv_reader(with.as_bytes()).unwrap();
        let b = GridPotential::from_csv_reader(without.as_bytes()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.value(&[0.5]), ExtReal::Finite(0.5));
        assert_eq!(a.value(&[1.5]), ExtReal::PosInfinity);
        assert!(GridPotential::from_csv_reader("0,0\n0,1\n".as_bytes()).is_err());
        assert!(GridPotential::from_csv_reader("0,0\nfoo,1\n".as_bytes()).is_err());
    }
}
