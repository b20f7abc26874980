//! Finite-dimensional symplectic linear algebra on N = X × Y with X = Y = ℝⁿ.
//!
//! Points of N are [`PhasePoint`]s `(q, p)`; points of the dual N* = Y × X are
//! [`CotangentPoint`]s `(p, q)`. The two carry identical storage but are kept
//! apart so that the slot conventions of `J` and `J*` are checked by the
//! compiler. The duality between them is
//!
//! ```text
//! ⟨⟨(p₁, q₁), (q₂, p₂)⟩⟩ = ⟨q₁, p₂⟩ + ⟨q₂, p₁⟩
//! ```
//!
//! so the `p` slot of a cotangent point pairs with the `q` slot of a phase
//! point. A gradient `DH` therefore stores `D_q H` in its `p` slot.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Hamiltonian;

/// A point `z = (q, p)` of phase space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

/// A point `(p, q)` of the dual space N*.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CotangentPoint {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

fn check_slots(q: &[f64], p: &[f64], what: &'static str) -> Result<()> {
    if q.is_empty() {
        return Err(Error::InvalidParameter {
            field: what.to_string(),
            reason: "dimension must be at least 1".to_string(),
        });
    }
    if q.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: q.len(),
            found: p.len(),
        });
    }
    if q.iter().chain(p).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

fn dim_check(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        })
    }
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        check_slots(&q, &p, "phase point")?;
        Ok(Self { q, p })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            q: vec![0.0; n],
            p: vec![0.0; n],
        }
    }

    /// Builds a point from `[q₁..qₙ, p₁..pₙ]`.
    pub fn from_flat(flat: &[f64]) -> Self {
        let n = flat.len() / 2;
        Self {
            q: flat[..n].to_vec(),
            p: flat[n..2 * n].to_vec(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.dim());
        out.extend_from_slice(&self.q);
        out.extend_from_slice(&self.p);
        out
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_slots(&self.q, &self.p, "phase point")
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|x| x.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.q
            .iter()
            .chain(&self.p)
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.q
            .iter()
            .chain(&self.p)
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// `self + s · other`
    pub fn axpy(&self, s: f64, other: &PhasePoint) -> PhasePoint {
        PhasePoint {
            q: self.q.iter().zip(&other.q).map(|(a, b)| a + s * b).collect(),
            p: self.p.iter().zip(&other.p).map(|(a, b)| a + s * b).collect(),
        }
    }
}

impl CotangentPoint {
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        check_slots(&p, &q, "cotangent point")?;
        Ok(Self { p, q })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            p: vec![0.0; n],
            q: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(&self.q).all(|x| x.is_finite())
    }
}

macro_rules! impl_linear {
    ($ty:ident, $a:ident, $b:ident) => {
        impl Add for &$ty {
            type Output = $ty;
            fn add(self, rhs: &$ty) -> $ty {
                $ty {
                    $a: self.$a.iter().zip(&rhs.$a).map(|(x, y)| x + y).collect(),
                    $b: self.$b.iter().zip(&rhs.$b).map(|(x, y)| x + y).collect(),
                }
            }
        }

        impl Sub for &$ty {
            type Output = $ty;
            fn sub(self, rhs: &$ty) -> $ty {
                $ty {
                    $a: self.$a.iter().zip(&rhs.$a).map(|(x, y)| x - y).collect(),
                    $b: self.$b.iter().zip(&rhs.$b).map(|(x, y)| x - y).collect(),
                }
            }
        }

        impl Mul<f64> for &$ty {
            type Output = $ty;
            fn mul(self, s: f64) -> $ty {
                $ty {
                    $a: self.$a.iter().map(|x| s * x).collect(),
                    $b: self.$b.iter().map(|x| s * x).collect(),
                }
            }
        }

        impl Neg for &$ty {
            type Output = $ty;
            fn neg(self) -> $ty {
                $ty {
                    $a: self.$a.iter().map(|x| -x).collect(),
                    $b: self.$b.iter().map(|x| -x).collect(),
                }
            }
        }
    };
}

impl_linear!(PhasePoint, q, p);
impl_linear!(CotangentPoint, p, q);

/// Axis-aligned box in phase space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseBox {
    pub lo: PhasePoint,
    pub hi: PhasePoint,
}

impl PhaseBox {
    /// Box with the same interval on every coordinate.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        Self {
            lo: PhasePoint {
                q: vec![lo; n],
                p: vec![lo; n],
            },
            hi: PhasePoint {
                q: vec![hi; n],
                p: vec![hi; n],
            },
        }
    }

    pub fn new(lo: PhasePoint, hi: PhasePoint) -> Result<Self> {
        lo.validate()?;
        hi.validate()?;
        dim_check(lo.dim(), hi.dim())?;
        let degenerate = lo.to_flat().iter().zip(hi.to_flat()).any(|(a, b)| *a >= b);
        if degenerate {
            return Err(Error::InvalidParameter {
                field: "box".to_string(),
                reason: "every upper bound must exceed its lower bound".to_string(),
            });
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn volume(&self) -> f64 {
        self.lo
            .to_flat()
            .iter()
            .zip(self.hi.to_flat())
            .map(|(a, b)| b - a)
            .product()
    }

    pub fn contains(&self, z: &PhasePoint) -> bool {
        let lo = self.lo.to_flat();
        let hi = self.hi.to_flat();
        z.to_flat()
            .iter()
            .enumerate()
            .all(|(i, x)| *x >= lo[i] && *x <= hi[i])
    }

    /// Midpoint-rule nodes, `resolution` per axis, in row-major order over
    /// `[q₁..qₙ, p₁..pₙ]`, together with the volume of one cell.
    pub fn midpoint_grid(&self, resolution: usize) -> (Vec<PhasePoint>, f64) {
        let lo = self.lo.to_flat();
        let hi = self.hi.to_flat();
        let d = lo.len();
        let widths: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| (b - a) / resolution as f64).collect();
        let cell = widths.iter().product();
        let total = resolution.pow(d as u32);
        let mut nodes = Vec::with_capacity(total);
        let mut flat = vec![0.0; d];
        for idx in 0..total {
            let mut rem = idx;
            for axis in (0..d).rev() {
                let k = rem % resolution;
                rem /= resolution;
                flat[axis] = lo[axis] + (k as f64 + 0.5) * widths[axis];
            }
            nodes.push(PhasePoint::from_flat(&flat));
        }
        (nodes, cell)
    }
}

/// Euclidean duality `⟨q, p⟩` between X and Y.
pub fn pairing(q: &[f64], p: &[f64]) -> Result<f64> {
    dim_check(q.len(), p.len())?;
    Ok(dot(q, p))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `⟨⟨a, z⟩⟩ = ⟨a.q, z.p⟩ + ⟨z.q, a.p⟩`
pub fn double_pairing(a: &CotangentPoint, z: &PhasePoint) -> Result<f64> {
    dim_check(a.dim(), z.dim())?;
    Ok(dot(&a.q, &z.p) + dot(&z.q, &a.p))
}

/// `J(q, p) = (−p, q)`
pub fn j(z: &PhasePoint) -> CotangentPoint {
    CotangentPoint {
        p: z.p.iter().map(|x| -x).collect(),
        q: z.q.clone(),
    }
}

/// `J*(p, q) = (−q, p)`
pub fn j_star(a: &CotangentPoint) -> PhasePoint {
    PhasePoint {
        q: a.q.iter().map(|x| -x).collect(),
        p: a.p.clone(),
    }
}

/// `ω(z₁, z₂) = ⟨q₁, p₂⟩ − ⟨q₂, p₁⟩`
pub fn omega(z1: &PhasePoint, z2: &PhasePoint) -> Result<f64> {
    dim_check(z1.dim(), z2.dim())?;
    Ok(omega_unchecked(z1, z2))
}

#[inline]
pub(crate) fn omega_unchecked(z1: &PhasePoint, z2: &PhasePoint) -> f64 {
    dot(&z1.q, &z2.p) - dot(&z2.q, &z1.p)
}

/// `XH(t, z) = −J* DH(t, z) = (D_p H, −D_q H)`.
pub fn symplectic_gradient(h: &dyn Hamiltonian, t: f64, z: &PhasePoint) -> Result<PhasePoint> {
    if let Some(n) = h.dim() {
        dim_check(n, z.dim())?;
    }
    let dh = h.gradient(t, z);
    if !dh.is_finite() {
        return Err(Error::NonFinite("hamiltonian gradient"));
    }
    Ok(hamiltonian_vector(&dh))
}

/// `−J*(DH)` for an already evaluated gradient.
#[inline]
pub fn hamiltonian_vector(dh: &CotangentPoint) -> PhasePoint {
    PhasePoint {
        q: dh.q.clone(),
        p: dh.p.iter().map(|x| -x).collect(),
    }
}

/// Central-difference step used by the finite-difference fallbacks.
pub fn fd_step(z: &PhasePoint) -> f64 {
    1e-5 * (1.0 + z.norm())
}

/// Central finite-difference gradient of a scalar field on phase space,
/// returned with the N* slot convention (`D_q` in the `p` slot).
pub fn fd_gradient<F>(f: F, z: &PhasePoint) -> CotangentPoint
where
    F: Fn(&PhasePoint) -> f64,
{
    let n = z.dim();
    let step = fd_step(z);
    let mut out = CotangentPoint::zeros(n);
    let mut probe = z.clone();
    for i in 0..n {
        let orig = probe.q[i];
        probe.q[i] = orig + step;
        let plus = f(&probe);
        probe.q[i] = orig - step;
        let minus = f(&probe);
        probe.q[i] = orig;
        out.p[i] = (plus - minus) / (2.0 * step);

        let orig = probe.p[i];
        probe.p[i] = orig + step;
        let plus = f(&probe);
        probe.p[i] = orig - step;
        let minus = f(&probe);
        probe.p[i] = orig;
        out.q[i] = (plus - minus) / (2.0 * step);
    }
    out
}
