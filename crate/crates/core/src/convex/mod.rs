//! Convex dissipation potentials on phase-space velocities, their Fenchel and
//! symplectic conjugates, and the gap function whose zeros are the velocities
//! admitted by the hamiltonian inclusion.
//!
//! The symplectic polar is evaluated through `φ^{*ω}(z') = φ*(J z')`; the
//! supremum form `sup_z ω(z', z) − φ(z)` is only used as a brute-force oracle
//! in tests.

mod conjugate;
mod extended;
mod velocity;

use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use conjugate::{numeric_conjugate_1d, numeric_conjugate_sweep, SampledFunction};
pub use extended::ExtReal;
pub use velocity::{
    DryFriction, GridPotential, QuadraticVelocity, Shifted, VelocityPotential, ZeroPotential,
    CONVEXITY_TOL,
};

use crate::error::{Error, Result};
use crate::model::Hamiltonian;
use crate::symplectic::{j, omega_unchecked, CotangentPoint, PhaseBox, PhasePoint};

/// Absolute slack used when deciding membership in the effective domain of an
/// indicator-valued conjugate (e.g. `q̇_D = 0`, `|η| ≤ k`).
pub const INDICATOR_TOL: f64 = 1e-12;

/// Constraint on one coordinate of an effective domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoordConstraint {
    Free,
    Fixed(f64),
    Interval { lo: f64, hi: f64 },
}

impl CoordConstraint {
    fn project(self, x: f64) -> f64 {
        match self {
            CoordConstraint::Free => x,
            CoordConstraint::Fixed(c) => c,
            CoordConstraint::Interval { lo, hi } => x.clamp(lo, hi),
        }
    }

    pub(crate) fn shifted(self, by: f64) -> Self {
        match self {
            CoordConstraint::Free => CoordConstraint::Free,
            CoordConstraint::Fixed(c) => CoordConstraint::Fixed(c + by),
            CoordConstraint::Interval { lo, hi } => CoordConstraint::Interval {
                lo: lo + by,
                hi: hi + by,
            },
        }
    }

    fn negated(self) -> Self {
        match self {
            CoordConstraint::Free => CoordConstraint::Free,
            CoordConstraint::Fixed(c) => CoordConstraint::Fixed(-c),
            CoordConstraint::Interval { lo, hi } => CoordConstraint::Interval { lo: -hi, hi: -lo },
        }
    }

    /// Intersection; a `Fixed` value wins over an interval (it is clamped into it).
    fn intersect(self, other: Self) -> Self {
        use CoordConstraint::*;
        match (self, other) {
            (Free, c) | (c, Free) => c,
            (Fixed(a), Interval { lo, hi }) | (Interval { lo, hi }, Fixed(a)) => Fixed(a.clamp(lo, hi)),
            (Fixed(a), Fixed(_)) => Fixed(a),
            (Interval { lo: a, hi: b }, Interval { lo: c, hi: d }) => {
                let lo = a.max(c);
                let hi = b.min(d).max(lo);
                Interval { lo, hi }
            }
        }
    }

    fn contains(self, x: f64, tol: f64) -> bool {
        match self {
            CoordConstraint::Free => true,
            CoordConstraint::Fixed(c) => (x - c).abs() <= tol,
            CoordConstraint::Interval { lo, hi } => x >= lo - tol && x <= hi + tol,
        }
    }
}

/// Affine/box description of an effective domain in N, one constraint per
/// coordinate. Solvers and samplers work in the parametrisation it induces
/// rather than searching against `+∞`.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainDescriptor {
    pub q: Vec<CoordConstraint>,
    pub p: Vec<CoordConstraint>,
}

impl DomainDescriptor {
    pub fn full(n: usize) -> Self {
        Self {
            q: vec![CoordConstraint::Free; n],
            p: vec![CoordConstraint::Free; n],
        }
    }

    pub fn project(&self, z: &PhasePoint) -> PhasePoint {
        PhasePoint {
            q: z.q.iter().zip(&self.q).map(|(x, c)| c.project(*x)).collect(),
            p: z.p.iter().zip(&self.p).map(|(x, c)| c.project(*x)).collect(),
        }
    }

    pub fn contains(&self, z: &PhasePoint, tol: f64) -> bool {
        z.q.iter().zip(&self.q).all(|(x, c)| c.contains(*x, tol))
            && z.p.iter().zip(&self.p).all(|(x, c)| c.contains(*x, tol))
    }

    /// `{ z + offset : z ∈ self }`
    pub fn shifted(&self, offset: &PhasePoint) -> Self {
        Self {
            q: self.q.iter().zip(&offset.q).map(|(c, o)| c.shifted(*o)).collect(),
            p: self.p.iter().zip(&offset.p).map(|(c, o)| c.shifted(*o)).collect(),
        }
    }

    pub fn intersect(&self, other: &Self) -> Self {
        Self {
            q: self.q.iter().zip(&other.q).map(|(a, b)| a.intersect(*b)).collect(),
            p: self.p.iter().zip(&other.p).map(|(a, b)| a.intersect(*b)).collect(),
        }
    }

    /// Flat indices (over `[q.., p..]`) of coordinates that are not pinned.
    pub fn free_coordinates(&self) -> Vec<usize> {
        self.q
            .iter()
            .chain(&self.p)
            .enumerate()
            .filter(|(_, c)| !matches!(c, CoordConstraint::Fixed(_)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Uniform draw from the domain intersected with `bounds`.
    pub fn sample_within(&self, bounds: &PhaseBox, rng: &mut impl Rng) -> PhasePoint {
        let lo = bounds.lo.to_flat();
        let hi = bounds.hi.to_flat();
        let flat: Vec<f64> = self
            .q
            .iter()
            .chain(&self.p)
            .enumerate()
            .map(|(i, c)| match c.intersect(CoordConstraint::Interval { lo: lo[i], hi: hi[i] }) {
                CoordConstraint::Fixed(v) => v,
                CoordConstraint::Interval { lo, hi } if hi > lo => rng.random_range(lo..hi),
                CoordConstraint::Interval { lo, .. } => lo,
                CoordConstraint::Free => unreachable!(),
            })
            .collect();
        PhasePoint::from_flat(&flat)
    }
}

/// A convex lower-semicontinuous dissipation potential `φ` on velocities
/// `ż ∈ N`, with conjugate `φ*` on N*.
pub trait ConvexPotential: Send + Sync + Debug {
    fn value(&self, v: &PhasePoint) -> ExtReal;

    fn conjugate(&self, w: &CotangentPoint) -> ExtReal;

    /// An element of `∂φ(v) ⊂ N*`, `None` outside `dom φ`.
    fn subgradient(&self, v: &PhasePoint) -> Option<CotangentPoint>;

    /// An element of `∂φ*(w) ⊂ N`, `None` outside `dom φ*`.
    fn conjugate_subgradient(&self, w: &CotangentPoint) -> Option<PhasePoint>;

    /// Proximal map under the Euclidean metric on `[q.., p..]`.
    fn prox(&self, v: &PhasePoint, step: f64) -> PhasePoint;

    fn domain(&self, n: usize) -> DomainDescriptor;

    /// Effective domain of `φ^{*ω}`.
    fn symplectic_conjugate_domain(&self, n: usize) -> DomainDescriptor;

    /// `Some(Φ)` when `φ(q̇, ṗ) = Φ(q̇)`.
    fn velocity_part(&self) -> Option<&dyn VelocityPotential> {
        None
    }

    /// `φ^{*ω}(z') = φ*(J z')`.
    fn symplectic_conjugate(&self, z: &PhasePoint) -> ExtReal {
        self.conjugate(&j(z))
    }

    fn describe(&self) -> String;
}

/// The dissipation potentials a scenario can carry.
#[derive(Clone, Debug)]
pub enum Dissipation {
    Zero,
    Quadratic(QuadraticVelocity),
    DryFriction(DryFriction),
    Grid(GridPotential),
    /// Any other velocity-only potential.
    Velocity(Arc<dyn VelocityPotential>),
    /// A potential on the full phase-space velocity.
    General(Arc<dyn ConvexPotential>),
}

impl Dissipation {
    pub fn quadratic(c: f64) -> Result<Self> {
        Ok(Dissipation::Quadratic(QuadraticVelocity::new(c)?))
    }

    pub fn dry_friction(k: f64) -> Result<Self> {
        Ok(Dissipation::DryFriction(DryFriction::new(k)?))
    }

    fn velocity(&self) -> Option<&dyn VelocityPotential> {
        match self {
            Dissipation::Zero => Some(&ZeroPotential),
            Dissipation::Quadratic(p) => Some(p),
            Dissipation::DryFriction(p) => Some(p),
            Dissipation::Grid(p) => Some(p),
            Dissipation::Velocity(p) => Some(p.as_ref()),
            Dissipation::General(_) => None,
        }
    }

    /// `true` for potentials whose flows are only piecewise smooth in time.
    pub fn is_nonsmooth(&self) -> bool {
        matches!(self, Dissipation::DryFriction(_))
    }
}

impl ConvexPotential for Dissipation {
    fn value(&self, v: &PhasePoint) -> ExtReal {
        match self.velocity() {
            Some(phi) => phi.value(&v.q),
            None => general(self).value(v),
        }
    }

    fn conjugate(&self, w: &CotangentPoint) -> ExtReal {
        match self.velocity() {
            // sup over ṗ of ⟨w.q, ṗ⟩ is finite only when w.q = 0.
            Some(phi) if w.q.iter().all(|x| x.abs() <= INDICATOR_TOL) => phi.conjugate(&w.p),
            Some(_) => ExtReal::PosInfinity,
            None => general(self).conjugate(w),
        }
    }

    fn subgradient(&self, v: &PhasePoint) -> Option<CotangentPoint> {
        match self.velocity() {
            Some(phi) => phi.value(&v.q).is_finite().then(|| CotangentPoint {
                p: phi.subgradient(&v.q),
                q: vec![0.0; v.dim()],
            }),
            None => general(self).subgradient(v),
        }
    }

    fn conjugate_subgradient(&self, w: &CotangentPoint) -> Option<PhasePoint> {
        match self.velocity() {
            Some(phi) => {
                if !self.conjugate(w).is_finite() {
                    return None;
                }
                Some(PhasePoint {
                    q: phi.conjugate_subgradient(&w.p)?,
                    p: vec![0.0; w.dim()],
                })
            }
            None => general(self).conjugate_subgradient(w),
        }
    }

    fn prox(&self, v: &PhasePoint, step: f64) -> PhasePoint {
        match self.velocity() {
            Some(phi) => PhasePoint {
                q: phi.prox(&v.q, step),
                p: v.p.clone(),
            },
            None => general(self).prox(v, step),
        }
    }

    fn domain(&self, n: usize) -> DomainDescriptor {
        match self.velocity() {
            Some(phi) => DomainDescriptor {
                q: phi.domain(n),
                p: vec![CoordConstraint::Free; n],
            },
            None => general(self).domain(n),
        }
    }

    fn symplectic_conjugate_domain(&self, n: usize) -> DomainDescriptor {
        match self.velocity() {
            // φ^{*ω}(q̇', ṗ') = Φ*(−ṗ') when q̇' = 0.
            Some(phi) => DomainDescriptor {
                q: vec![CoordConstraint::Fixed(0.0); n],
                p: phi.conjugate_domain(n).into_iter().map(CoordConstraint::negated).collect(),
            },
            None => general(self).symplectic_conjugate_domain(n),
        }
    }

    fn velocity_part(&self) -> Option<&dyn VelocityPotential> {
        self.velocity()
    }

    fn describe(&self) -> String {
        match self.velocity() {
            Some(phi) => phi.describe(),
            None => general(self).describe(),
        }
    }
}

fn general(d: &Dissipation) -> &dyn ConvexPotential {
    match d {
        Dissipation::General(g) => g.as_ref(),
        _ => unreachable!("velocity-only potentials are handled directly"),
    }
}

/// `φ^{*ω}(z') = sup_z ω(z', z) − φ(z)`, evaluated as `φ*(J z')`.
pub fn symplectic_conjugate(phi: &dyn ConvexPotential, z_prime: &PhasePoint) -> ExtReal {
    phi.symplectic_conjugate(z_prime)
}

/// Brute-force `sup_z ω(z', z) − φ(z)` for `n = 1`, with both `z` and `z'`
/// ranging over the same `points × points` grid on `[−w, w]²`.
///
/// `ω(z', z) − φ(z) = q'p − qp' − φ(q, p)`, so the max over the product grid
/// is taken in two nested passes: `g(p', p) = max_q −qp' − φ(q, p)`, then
/// `max_p q'p + g(p', p)`. Exact on the grid, `O(points³)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridConjugate {
    pub axis: Vec<f64>,
    /// `values[i][j]` at `z' = (axis[i], axis[j])`; `−∞` if `φ` is never finite.
    pub values: Vec<Vec<f64>>,
}

pub fn grid_symplectic_conjugate(phi: &dyn ConvexPotential, half_width: f64, points: usize) -> Result<GridConjugate> {
    if points < 2 || !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::InvalidGrid(format!("{points} points on [-{half_width}, {half_width}]")));
    }
    let last = (points - 1) as f64;
    let axis: Vec<f64> = (0..points).map(|k| -half_width + 2.0 * half_width * k as f64 / last).collect();
    // φ on the grid, indexed [q][p]
    let phi_grid: Vec<Vec<f64>> = axis
        .iter()
        .map(|&q| {
            axis.iter()
                .map(|&p| match phi.value(&PhasePoint { q: vec![q], p: vec![p] }) {
                    ExtReal::Finite(v) => v,
                    ExtReal::PosInfinity => f64::INFINITY,
                })
                .collect()
        })
        .collect();
    let mut values = vec![vec![f64::NEG_INFINITY; points]; points];
    let mut g = vec![f64::NEG_INFINITY; points];
    for (j, &pp) in axis.iter().enumerate() {
        for (ip, slot) in g.iter_mut().enumerate() {
            *slot = axis
                .iter()
                .enumerate()
                .map(|(iq, &q)| -q * pp - phi_grid[iq][ip])
                .fold(f64::NEG_INFINITY, f64::max);
        }
        for (i, &qp) in axis.iter().enumerate() {
            values[i][j] = axis
                .iter()
                .zip(&g)
                .map(|(&p, &gp)| qp * p + gp)
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    Ok(GridConjugate { axis, values })
}

/// Symplectic Fenchel residual `φ(z) + φ^{*ω}(z') − ω(z', z)`, always `≥ 0`.
pub fn symplectic_fenchel_residual(phi: &dyn ConvexPotential, z: &PhasePoint, z_prime: &PhasePoint) -> ExtReal {
    phi.value(z) + phi.symplectic_conjugate(z_prime) - omega_unchecked(z_prime, z)
}

/// Decides `z' ∈ ∂^ω φ(z)` through the equality case of the symplectic
/// Fenchel inequality. Returns `false` when `z ∉ dom φ`.
pub fn symplectic_subdifferential_check(
    phi: &dyn ConvexPotential,
    z: &PhasePoint,
    z_prime: &PhasePoint,
    tol: f64,
) -> bool {
    if !phi.value(z).is_finite() {
        return false;
    }
    match symplectic_fenchel_residual(phi, z, z_prime) {
        ExtReal::Finite(r) => r <= tol,
        ExtReal::PosInfinity => false,
    }
}

/// Gap of a candidate velocity `v` given the conservative velocity `xh`:
/// `φ(v) + φ^{*ω}(v − xh) − ω(v − xh, v)`.
pub fn gap_with_flow(phi: &dyn ConvexPotential, xh: &PhasePoint, v: &PhasePoint) -> ExtReal {
    let zd = v - xh;
    phi.value(v) + phi.symplectic_conjugate(&zd) - omega_unchecked(&zd, v)
}

/// SBEN gap at `(t, z)` for the velocity `v`; zero exactly on velocities
/// satisfying the inclusion `v − XH(t, z) ∈ ∂^ω φ(v)`.
pub fn sben_gap(
    phi: &dyn ConvexPotential,
    h: &dyn Hamiltonian,
    t: f64,
    z: &PhasePoint,
    v: &PhasePoint,
) -> Result<ExtReal> {
    let xh = crate::symplectic::symplectic_gradient(h, t, z)?;
    if v.dim() != xh.dim() {
        return Err(Error::DimensionMismatch {
            expected: xh.dim(),
            found: v.dim(),
        });
    }
    Ok(gap_with_flow(phi, &xh, v))
}

/// Outcome of sampling `φ(z) + φ^{*ω}(z')` over a box.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisDReport {
    pub samples: usize,
    /// Pairs at which both terms were finite.
    pub finite_pairs: usize,
    pub min_value: f64,
    pub tolerance: f64,
    pub violated: bool,
}

impl HypothesisDReport {
    pub fn into_result(self) -> Result<Self> {
        if self.violated {
            Err(Error::HypothesisDViolated {
                min_value: self.min_value,
                tolerance: self.tolerance,
            })
        } else {
            Ok(self)
        }
    }
}

/// Samples pairs `(z, z')` inside `bounds` (restricted to the effective
/// domains of `φ` and `φ^{*ω}`) and records the smallest `φ(z) + φ^{*ω}(z')`.
/// The origin pair is always included.
pub fn hypothesis_d_check(
    phi: &dyn ConvexPotential,
    samples: usize,
    bounds: &PhaseBox,
    tol: f64,
    seed: u64,
) -> HypothesisDReport {
    let n = bounds.dim();
    let dom = phi.domain(n);
    let dom_star = phi.symplectic_conjugate_domain(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_value = f64::INFINITY;
    let mut finite_pairs = 0;
    let origin = PhasePoint::zeros(n);
    let pairs = std::iter::once((dom.project(&origin), dom_star.project(&origin))).chain(
        (0..samples).map(|_| (dom.sample_within(bounds, &mut rng), dom_star.sample_within(bounds, &mut rng))),
    );
    for (z, zp) in pairs {
        if let ExtReal::Finite(v) = phi.value(&z) + phi.symplectic_conjugate(&zp) {
            finite_pairs += 1;
            min_value = min_value.min(v);
        }
    }
    HypothesisDReport {
        samples: samples + 1,
        finite_pairs,
        min_value,
        tolerance: tol,
        violated: min_value < -tol,
    }
}
