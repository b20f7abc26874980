//! Hamiltonians and the scenarios that pair them with a dissipation potential.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex::{Dissipation, GridPotential};
use crate::error::{Error, Result};
use crate::solver::Scheme;
use crate::symplectic::{dot, fd_gradient, CotangentPoint, PhaseBox, PhasePoint};

/// A smooth time-dependent Hamiltonian `H(t, q, p)`.
pub trait Hamiltonian: Send + Sync + fmt::Debug {
    /// Fixed phase-space dimension `n`, or `None` for dimension-agnostic models.
    fn dim(&self) -> Option<usize> {
        None
    }

    fn value(&self, t: f64, z: &PhasePoint) -> f64;

    /// `DH(t, z) ∈ N*` (`D_q H` in the `p` slot, `D_p H` in the `q` slot).
    fn gradient(&self, t: f64, z: &PhasePoint) -> CotangentPoint {
        fd_gradient(|x| self.value(t, x), z)
    }

    /// `∂H/∂t`.
    fn time_derivative(&self, t: f64, z: &PhasePoint) -> f64 {
        let step = 1e-5 * (1.0 + t.abs());
        (self.value(t + step, z) - self.value(t - step, z)) / (2.0 * step)
    }

    /// `Some(m)` when `H = |p|²/(2m) + U(t, q)`.
    fn kinetic_mass(&self) -> Option<f64> {
        None
    }

    /// `D_q H(t, q, ·)` for kinetic Hamiltonians, where it does not depend on `p`.
    fn configuration_gradient(&self, t: f64, q: &[f64]) -> Vec<f64> {
        let z = PhasePoint {
            q: q.to_vec(),
            p: vec![0.0; q.len()],
        };
        self.gradient(t, &z).p
    }

    /// `df/dt` when `H(t, q, p) = H₀(q, p) − ⟨f(t), q⟩`.
    fn forcing_rate(&self, _t: f64, _n: usize) -> Option<Vec<f64>> {
        None
    }

    fn is_time_independent(&self) -> bool {
        false
    }

    fn describe(&self) -> String;
}

/// Potential energy `V(q)` of a separable Hamiltonian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialEnergy {
    /// `V = 0`
    Free,
    /// `V = (k/2)|q|²`
    Harmonic { stiffness: f64 },
    /// `V = Σᵢ (k/2) qᵢ² + (λ/4) qᵢ⁴`
    Anharmonic { stiffness: f64, quartic: f64 },
}

impl PotentialEnergy {
    pub fn value(&self, q: &[f64]) -> f64 {
        match *self {
            PotentialEnergy::Free => 0.0,
            PotentialEnergy::Harmonic { stiffness } => 0.5 * stiffness * dot(q, q),
            PotentialEnergy::Anharmonic { stiffness, quartic } => q
                .iter()
                .map(|x| 0.5 * stiffness * x * x + 0.25 * quartic * x.powi(4))
                .sum(),
        }
    }

    pub fn gradient(&self, q: &[f64]) -> Vec<f64> {
        match *self {
            PotentialEnergy::Free => vec![0.0; q.len()],
            PotentialEnergy::Harmonic { stiffness } => q.iter().map(|x| stiffness * x).collect(),
            PotentialEnergy::Anharmonic { stiffness, quartic } => q
                .iter()
                .map(|x| stiffness * x + quartic * x.powi(3))
                .collect(),
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        let bad = match *self {
            PotentialEnergy::Free => None,
            PotentialEnergy::Harmonic { stiffness } => (!stiffness.is_finite()).then_some("stiffness"),
            PotentialEnergy::Anharmonic { stiffness, quartic } => {
                if !stiffness.is_finite() {
                    Some("stiffness")
                } else if !(quartic.is_finite() && quartic >= 0.0) {
                    Some("quartic")
                } else {
                    None
                }
            }
        };
        match bad {
            Some(name) => Err(invalid(format!("{field}.{name}"), "must be finite (quartic also >= 0)")),
            None => Ok(()),
        }
    }
}

/// External force `f(t)` of a forced Hamiltonian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Forcing {
    None,
    /// `f(t) = value`
    Constant { value: Vec<f64> },
    /// `f(t) = t · rate`
    Ramp { rate: Vec<f64> },
    /// `f(t) = amplitude · sin(ω t)`
    Sinusoid { amplitude: Vec<f64>, angular_frequency: f64 },
}

impl Forcing {
    pub fn value(&self, t: f64, n: usize) -> Vec<f64> {
        match self {
            Forcing::None => vec![0.0; n],
            Forcing::Constant { value } => value.clone(),
            Forcing::Ramp { rate } => rate.iter().map(|r| r * t).collect(),
            Forcing::Sinusoid {
                amplitude,
                angular_frequency,
            } => amplitude.iter().map(|a| a * (angular_frequency * t).sin()).collect(),
        }
    }

    pub fn rate(&self, t: f64, n: usize) -> Vec<f64> {
        match self {
            Forcing::None | Forcing::Constant { .. } => vec![0.0; n],
            Forcing::Ramp { rate } => rate.clone(),
            Forcing::Sinusoid {
                amplitude,
                angular_frequency,
            } => amplitude
                .iter()
                .map(|a| a * angular_frequency * (angular_frequency * t).cos())
                .collect(),
        }
    }

    fn len(&self) -> Option<usize> {
        match self {
            Forcing::None => None,
            Forcing::Constant { value } => Some(value.len()),
            Forcing::Ramp { rate } => Some(rate.len()),
            Forcing::Sinusoid { amplitude, .. } => Some(amplitude.len()),
        }
    }
}

type ValueFn = dyn Fn(f64, &PhasePoint) -> f64 + Send + Sync;
type GradientFn = dyn Fn(f64, &PhasePoint) -> CotangentPoint + Send + Sync;

/// User-supplied oracles; missing derivatives fall back to central differences.
#[derive(Clone)]
pub struct CustomHamiltonian {
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradientFn>>,
    time_derivative: Option<Arc<ValueFn>>,
}

impl fmt::Debug for CustomHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomHamiltonian")
            .field("dim", &self.dim)
            .field("analytic_gradient", &self.gradient.is_some())
            .field("analytic_time_derivative", &self.time_derivative.is_some())
            .finish()
    }
}

/// The catalogue of Hamiltonians.
#[derive(Clone, Debug)]
pub enum CataloguedHamiltonian {
    /// `H = |p|²/(2m) + V(q)`
    SeparableKinetic { mass: f64, potential: PotentialEnergy },
    /// `H = |p|²/(2m) + V(q) − ⟨f(t), q⟩`
    ForcedSeparable {
        mass: f64,
        potential: PotentialEnergy,
        forcing: Forcing,
    },
    Custom(CustomHamiltonian),
}

fn check_mass(mass: f64) -> Result<()> {
    if mass > 0.0 && mass.is_finite() {
        Ok(())
    } else {
        Err(invalid("mass", format!("must be positive, got {mass}")))
    }
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field: field.into(),
        reason: reason.into(),
    }
}

impl CataloguedHamiltonian {
    pub fn separable(mass: f64, potential: PotentialEnergy) -> Result<Self> {
        check_mass(mass)?;
        potential.validate("potential")?;
        Ok(Self::SeparableKinetic { mass, potential })
    }

    pub fn forced(mass: f64, potential: PotentialEnergy, forcing: Forcing) -> Result<Self> {
        check_mass(mass)?;
        potential.validate("potential")?;
        Ok(Self::ForcedSeparable {
            mass,
            potential,
            forcing,
        })
    }

    pub fn custom(dim: usize, value: impl Fn(f64, &PhasePoint) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom(CustomHamiltonian {
            dim,
            value: Arc::new(value),
            gradient: None,
            time_derivative: None,
        })
    }

    /// Attaches an analytic gradient to a custom Hamiltonian; no-op otherwise.
    pub fn with_gradient(
        mut self,
        gradient: impl Fn(f64, &PhasePoint) -> CotangentPoint + Send + Sync + 'static,
    ) -> Self {
        if let Self::Custom(c) = &mut self {
            c.gradient = Some(Arc::new(gradient));
        }
        self
    }

    pub fn with_time_derivative(mut self, dt: impl Fn(f64, &PhasePoint) -> f64 + Send + Sync + 'static) -> Self {
        if let Self::Custom(c) = &mut self {
            c.time_derivative = Some(Arc::new(dt));
        }
        self
    }
}

impl Hamiltonian for CataloguedHamiltonian {
    fn dim(&self) -> Option<usize> {
        match self {
            Self::Custom(c) => Some(c.dim),
            Self::ForcedSeparable { forcing, .. } => forcing.len(),
            Self::SeparableKinetic { .. } => None,
        }
    }

    fn value(&self, t: f64, z: &PhasePoint) -> f64 {
        match self {
            Self::SeparableKinetic { mass, potential } => dot(&z.p, &z.p) / (2.0 * mass) + potential.value(&z.q),
            Self::ForcedSeparable {
                mass,
                potential,
                forcing,
            } => {
                let f = forcing.value(t, z.dim());
                dot(&z.p, &z.p) / (2.0 * mass) + potential.value(&z.q) - dot(&f, &z.q)
            }
            Self::Custom(c) => (c.value)(t, z),
        }
    }

    fn gradient(&self, t: f64, z: &PhasePoint) -> CotangentPoint {
        match self {
            Self::SeparableKinetic { mass, .. } | Self::ForcedSeparable { mass, .. } => CotangentPoint {
                p: self.configuration_gradient(t, &z.q),
                q: z.p.iter().map(|p| p / mass).collect(),
            },
            Self::Custom(c) => match &c.gradient {
                Some(g) => g(t, z),
                None => fd_gradient(|x| (c.value)(t, x), z),
            },
        }
    }

    fn time_derivative(&self, t: f64, z: &PhasePoint) -> f64 {
        match self {
            Self::SeparableKinetic { .. } => 0.0,
            Self::ForcedSeparable { forcing, .. } => -dot(&forcing.rate(t, z.dim()), &z.q),
            Self::Custom(c) => match &c.time_derivative {
                Some(dt) => dt(t, z),
                None => {
                    let step = 1e-5 * (1.0 + t.abs());
                    ((c.value)(t + step, z) - (c.value)(t - step, z)) / (2.0 * step)
                }
            },
        }
    }

    fn kinetic_mass(&self) -> Option<f64> {
        match self {
            Self::SeparableKinetic { mass, .. } | Self::ForcedSeparable { mass, .. } => Some(*mass),
            Self::Custom(_) => None,
        }
    }

    fn configuration_gradient(&self, t: f64, q: &[f64]) -> Vec<f64> {
        match self {
            Self::SeparableKinetic { potential, .. } => potential.gradient(q),
            Self::ForcedSeparable { potential, forcing, .. } => {
                let f = forcing.value(t, q.len());
                potential.gradient(q).iter().zip(f).map(|(g, f)| g - f).collect()
            }
            Self::Custom(_) => {
                let z = PhasePoint {
                    q: q.to_vec(),
                    p: vec![0.0; q.len()],
                };
                self.gradient(t, &z).p
            }
        }
    }

    fn forcing_rate(&self, t: f64, n: usize) -> Option<Vec<f64>> {
        match self {
            Self::ForcedSeparable { forcing, .. } => Some(forcing.rate(t, n)),
            _ => None,
        }
    }

    fn is_time_independent(&self) -> bool {
        match self {
            Self::SeparableKinetic { .. } => true,
            Self::ForcedSeparable { forcing, .. } => matches!(forcing, Forcing::None | Forcing::Constant { .. }),
            Self::Custom(_) => false,
        }
    }

    fn describe(&self) -> String {
        match self {
            Self::SeparableKinetic { mass, potential } => format!("separable(m={mass}, V={potential:?})"),
            Self::ForcedSeparable {
                mass,
                potential,
                forcing,
            } => format!("forced(m={mass}, V={potential:?}, f={forcing:?})"),
            Self::Custom(c) => format!("custom(n={})", c.dim),
        }
    }
}

/// Where trajectories start.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    Point(PhasePoint),
    Set(PhaseBox),
}

/// A Hamiltonian paired with a dissipation potential, a time grid, and the
/// thermodynamic parameters of the Gibbs curve.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub hamiltonian: Arc<dyn Hamiltonian>,
    pub dissipation: Dissipation,
    pub dim: usize,
    pub horizon: f64,
    pub step: f64,
    pub initial: InitialCondition,
    pub beta: f64,
    pub alpha: f64,
    pub seed: u64,
    pub scheme: Scheme,
}

impl Scenario {
    /// Scenario with unit inverse temperature, `α = 0`, the default scheme and
    /// seed 0. Adjust fields afterwards and call [`Scenario::validate`].
    pub fn new(
        hamiltonian: Arc<dyn Hamiltonian>,
        dissipation: Dissipation,
        initial: InitialCondition,
        horizon: f64,
        step: f64,
    ) -> Result<Self> {
        let dim = match &initial {
            InitialCondition::Point(z) => z.dim(),
            InitialCondition::Set(b) => b.dim(),
        };
        let s = Self {
            hamiltonian,
            dissipation,
            dim,
            horizon,
            step,
            initial,
            beta: 1.0,
            alpha: 0.0,
            seed: 0,
            scheme: Scheme::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("dimension", "must be at least 1"));
        }
        if let Some(n) = self.hamiltonian.dim() {
            if n != self.dim {
                return Err(invalid("hamiltonian", format!("dimension {n} does not match scenario dimension {}", self.dim)));
            }
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon", format!("must be positive, got {}", self.horizon)));
        }
        if !(self.step > 0.0 && self.step <= self.horizon) {
            return Err(invalid("step", format!("must lie in (0, horizon], got {}", self.step)));
        }
        let ratio = self.horizon / self.step;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(invalid("step", "horizon must be an integer multiple of the step"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", format!("must be positive, got {}", self.beta)));
        }
        if !self.alpha.is_finite() {
            return Err(invalid("alpha", "must be finite"));
        }
        match &self.initial {
            InitialCondition::Point(z) => z.validate().map_err(|e| invalid("initial", e.to_string()))?,
            InitialCondition::Set(b) => {
                PhaseBox::new(b.lo.clone(), b.hi.clone()).map_err(|e| invalid("initial_set", e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    /// A copy with a different step (same horizon).
    pub fn with_step(&self, step: f64) -> Self {
        Self { step, ..self.clone() }
    }

    pub fn with_horizon(&self, horizon: f64) -> Self {
        Self { horizon, ..self.clone() }
    }

    pub fn initial_point(&self) -> Option<&PhasePoint> {
        match &self.initial {
            InitialCondition::Point(z) => Some(z),
            InitialCondition::Set(_) => None,
        }
    }

    pub fn initial_set(&self) -> Option<&PhaseBox> {
        match &self.initial {
            InitialCondition::Set(b) => Some(b),
            InitialCondition::Point(_) => None,
        }
    }
}

/// Declarative description of a scenario (the `[scenario]` block of a run
/// configuration).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub dimension: usize,
    pub horizon: f64,
    pub step: f64,
    pub beta: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub initial: Option<PointConfig>,
    #[serde(default)]
    pub initial_set: Option<BoxConfig>,
    pub hamiltonian: HamiltonianConfig,
    pub dissipation: DissipationConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

/// Per-coordinate `[lo, hi]` intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub q: Vec<[f64; 2]>,
    pub p: Vec<[f64; 2]>,
}

impl BoxConfig {
    pub fn to_box(&self, field: &str) -> Result<PhaseBox> {
        let lo = PhasePoint {
            q: self.q.iter().map(|r| r[0]).collect(),
            p: self.p.iter().map(|r| r[0]).collect(),
        };
        let hi = PhasePoint {
            q: self.q.iter().map(|r| r[1]).collect(),
            p: self.p.iter().map(|r| r[1]).collect(),
        };
        PhaseBox::new(lo, hi).map_err(|e| invalid(field, e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HamiltonianConfig {
    Separable { mass: f64, potential: PotentialEnergy },
    Forced {
        mass: f64,
        potential: PotentialEnergy,
        forcing: Forcing,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DissipationConfig {
    Zero,
    Quadratic { coefficient: f64 },
    DryFriction { threshold: f64 },
    /// Two-column `x,value` CSV; relative paths resolve against the config file.
    Grid { path: PathBuf },
}

impl ScenarioConfig {
    /// Validates and wires the scenario. Error messages name the offending
    /// field relative to the scenario block.
    pub fn build(&self, base_dir: Option<&Path>, seed: u64) -> Result<Scenario> {
        let n = self.dimension;
        if n == 0 {
            return Err(invalid("dimension", "must be at least 1"));
        }
        let hamiltonian = match &self.hamiltonian {
            HamiltonianConfig::Separable { mass, potential } => {
                CataloguedHamiltonian::separable(*mass, potential.clone()).map_err(|e| prefix("hamiltonian", e))?
            }
            HamiltonianConfig::Forced {
                mass,
                potential,
                forcing,
            } => {
                if let Some(len) = forcing.len() {
                    if len != n {
                        return Err(invalid(
                            "hamiltonian.forcing",
                            format!("has {len} components, dimension is {n}"),
                        ));
                    }
                }
                CataloguedHamiltonian::forced(*mass, potential.clone(), forcing.clone())
                    .map_err(|e| prefix("hamiltonian", e))?
            }
        };
        let dissipation = match &self.dissipation {
            DissipationConfig::Zero => Dissipation::Zero,
            DissipationConfig::Quadratic { coefficient } => {
                Dissipation::quadratic(*coefficient).map_err(|e| prefix("dissipation", e))?
            }
            DissipationConfig::DryFriction { threshold } => {
                Dissipation::dry_friction(*threshold).map_err(|e| prefix("dissipation", e))?
            }
            DissipationConfig::Grid { path } => {
                let resolved = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                let grid = GridPotential::from_csv_path(&resolved)
                    .map_err(|e| invalid("dissipation.path", format!("{}: {e}", resolved.display())))?;
                Dissipation::Grid(grid)
            }
        };
        let initial = match (&self.initial, &self.initial_set) {
            (Some(pc), None) => {
                if pc.q.len() != n || pc.p.len() != n {
                    return Err(invalid("initial", format!("q and p must both have {n} components")));
                }
                InitialCondition::Point(PhasePoint::new(pc.q.clone(), pc.p.clone()).map_err(|e| prefix("initial", e))?)
            }
            (None, Some(bc)) => {
                if bc.q.len() != n || bc.p.len() != n {
                    return Err(invalid("initial_set", format!("q and p must both have {n} intervals")));
                }
                InitialCondition::Set(bc.to_box("initial_set")?)
            }
            (Some(_), Some(_)) => {
                return Err(invalid("initial", "give either `initial` or `initial_set`, not both"));
            }
            (None, None) => return Err(invalid("initial", "missing: give `initial` or `initial_set`")),
        };
        let scenario = Scenario {
            hamiltonian: Arc::new(hamiltonian),
            dissipation,
            dim: n,
            horizon: self.horizon,
            step: self.step,
            initial,
            beta: self.beta,
            alpha: self.alpha,
            seed,
            scheme: self.scheme,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

fn prefix(parent: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { field, reason } => Error::InvalidParameter {
            field: format!("{parent}.{field}"),
            reason,
        },
        other => invalid(parent, other.to_string()),
    }
}

/// Wires a scenario from its declarative form (relative paths resolve
/// against the working directory; seed 0).
pub fn build_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.build(None, 0)
}

/// Agreement between analytic derivatives and central differences.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientReport {
    pub trials: usize,
    /// `max |analytic − fd| / (1 + |fd|)` over gradient components.
    pub max_gradient_error: f64,
    pub max_time_derivative_error: f64,
    pub threshold: f64,
    pub passed: bool,
}

pub const GRADIENT_SELFTEST_THRESHOLD: f64 = 1e-4;

/// Compares `DH` and `∂H/∂t` with central differences at random `(t, z)`,
/// `t ∈ [0, 10]`, `z ∈ [−2, 2]^{2n}`.
pub fn gradient_selftest(h: &dyn Hamiltonian, n: usize, trials: usize, seed: u64) -> GradientReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = h.dim().unwrap_or(n);
    let mut max_grad = 0.0_f64;
    let mut max_dt = 0.0_f64;
    for _ in 0..trials {
        let t = rng.random_range(0.0..10.0);
        let z = PhasePoint {
            q: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
            p: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        };
        let analytic = h.gradient(t, &z);
        let fd = fd_gradient(|x| h.value(t, x), &z);
        for (a, b) in analytic.p.iter().chain(&analytic.q).zip(fd.p.iter().chain(&fd.q)) {
            max_grad = max_grad.max((a - b).abs() / (1.0 + b.abs()));
        }
        let step = 1e-5 * (1.0 + t);
        let fd_t = (h.value(t + step, &z) - h.value(t - step, &z)) / (2.0 * step);
        let dt = h.time_derivative(t, &z);
        max_dt = max_dt.max((dt - fd_t).abs() / (1.0 + fd_t.abs()));
    }
    GradientReport {
        trials,
        max_gradient_error: max_grad,
        max_time_derivative_error: max_dt,
        threshold: GRADIENT_SELFTEST_THRESHOLD,
        passed: max_grad <= GRADIENT_SELFTEST_THRESHOLD && max_dt <= GRADIENT_SELFTEST_THRESHOLD,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic_config() -> ScenarioConfig {
        ScenarioConfig {
            dimension: 1,
            horizon: 10.0,
            step: 1e-3,
            beta: 1.0,
            alpha: 0.0,
            scheme: Scheme::default(),
            initial: Some(PointConfig { q: vec![1.0], p: vec![0.0] }),
            initial_set: None,
            hamiltonian: HamiltonianConfig::Separable {
                mass: 1.0,
                potential: PotentialEnergy::Harmonic { stiffness: 1.0 },
            },
            dissipation: DissipationConfig::Quadratic { coefficient: 0.5 },
        }
    }

    #[test]
    fn harmonic_scenario_has_rotation_flow() {
        let s = build_scenario(&harmonic_config()).unwrap();
        let z = PhasePoint::new(vec![0.3], vec![-0.7]).unwrap();
        let xh = crate::symplectic::symplectic_gradient(s.hamiltonian.as_ref(), 0.0, &z).unwrap();
        assert_eq!(xh, PhasePoint::new(vec![-0.7], vec![-0.3]).unwrap());
        assert_eq!(s.steps(), 10_000);
        assert!(matches!(s.dissipation, Dissipation::Quadratic(_)));
    }

    #[test]
    fn zero_dissipation_config() {
        let mut cfg = harmonic_config();
        cfg.dissipation = DissipationConfig::Zero;
        let s = build_scenario(&cfg).unwrap();
        assert!(matches!(s.dissipation, Dissipation::Zero));
    }

    #[test]
    fn invalid_parameters_name_their_field() {
        let mut cfg = harmonic_config();
        cfg.hamiltonian = HamiltonianConfig::Separable {
            mass: -1.0,
            potential: PotentialEnergy::Harmonic { stiffness: 1.0 },
        };
        match build_scenario(&cfg) {
            Err(Error::InvalidParameter { field, .. }) => assert_eq!(field, "hamiltonian.mass"),
            other => panic!("unexpected {other:?}"),
        }

        let mut cfg = harmonic_config();
        cfg.beta = 0.0;
        assert!(matches!(build_scenario(&cfg), Err(Error::InvalidParameter { field, .. }) if field == "beta"));

        let mut cfg = harmonic_config();
        cfg.dissipation = DissipationConfig::DryFriction { threshold: -2.0 };
        assert!(matches!(build_scenario(&cfg), Err(Error::InvalidParameter { field, .. }) if field == "dissipation.threshold"));

        let mut cfg = harmonic_config();
        cfg.step = 3e-3;
        assert!(matches!(build_scenario(&cfg), Err(Error::InvalidParameter { field, .. }) if field == "step"));

        let mut cfg = harmonic_config();
        cfg.initial = None;
        assert!(build_scenario(&cfg).is_err());
    }

    #[test]
    fn gradient_selftest_on_catalogue() {
        let h = CataloguedHamiltonian::separable(1.0, PotentialEnergy::Harmonic { stiffness: 1.0 }).unwrap();
        let r = gradient_selftest(&h, 1, 200, 1);
        assert!(r.passed && r.max_gradient_error <= 1e-6, "{r:?}");

        let forced = CataloguedHamiltonian::forced(
            1.0,
            PotentialEnergy::Anharmonic {
                stiffness: 1.0,
                quartic: 0.3,
            },
            Forcing::Ramp { rate: vec![1.0, 0.0] },
        )
        .unwrap();
        let r = gradient_selftest(&forced, 2, 200, 2);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn wrong_custom_gradient_is_caught() {
        let h = CataloguedHamiltonian::custom(1, |_, z| 0.5 * (z.q[0] * z.q[0] + z.p[0] * z.p[0]))
            .with_gradient(|_, z| CotangentPoint {
                p: vec![2.0 * z.q[0]],
                q: vec![z.p[0]],
            });
        assert!(!gradient_selftest(&h, 1, 50, 3).passed);
    }

    #[test]
    fn ramp_forcing_time_derivative() {
        let h = CataloguedHamiltonian::forced(
            1.0,
            PotentialEnergy::Harmonic { stiffness: 1.0 },
            Forcing::Ramp { rate: vec![1.0, 0.0] },
        )
        .unwrap();
        let z = PhasePoint::new(vec![0.7, -1.1], vec![0.2, 0.4]).unwrap();
        for &t in &[0.0, 1.5, 7.0] {
            assert!((h.time_derivative(t, &z) - (-0.7)).abs() < 1e-8);
            let step = 1e-5 * (1.0 + t);
            let fd = (h.value(t + step, &z) - h.value(t - step, &z)) / (2.0 * step);
            assert!((fd + 0.7).abs() < 1e-5);
        }
    }
}
