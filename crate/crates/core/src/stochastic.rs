//! Finite-temperature relaxation: instead of the zero-gap velocity, the
//! dissipative velocity is drawn at every step from
//!
//! ```text
//! π(ż_D) ∝ exp(−β [φ(ż_D + XH) + φ^{*ω}(ż_D) + ω(XH, ż_D)])
//! ```
//!
//! whose exponent is the SBEN gap at `ż = XH + ż_D`. For velocity-only
//! potentials the support pins `q̇_D = 0` and the density reduces to one over
//! the force `η = ṗ_D`:
//!
//! ```text
//! π(η) ∝ exp(−β [Φ*(−η) + ⟨η, q̇⟩])
//! ```
//!
//! Every step takes one fresh draw (piecewise-constant `ż_D`); successive
//! draws are independent given the state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::convex::{ConvexPotential, CoordConstraint, Dissipation, DomainDescriptor, VelocityPotential};
use crate::error::{Error, Result};
use crate::model::Scenario;
use crate::solver::{ForceLaw, SolverOptions, StepContext, StepRecord, Trajectory};
use crate::symplectic::{dot, omega_unchecked, symplectic_gradient, PhasePoint};

/// Per-trajectory random stream: the master seed keys a ChaCha8 generator
/// and the trajectory index selects its stream, so ensembles are
/// reproducible regardless of execution order.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerBackend {
    /// Pick the exact sampler when one exists, Metropolis otherwise.
    #[default]
    Auto,
    ExactGaussian,
    TruncatedExponential,
    Metropolis,
}

/// The full density over `ż_D ∈ N` at one `(t, z)`.
#[derive(Clone, Debug)]
pub struct DissipativeVelocityDensity<'a> {
    pub dissipation: &'a Dissipation,
    pub time: f64,
    pub state: PhasePoint,
    /// `XH(t, z)`
    pub flow: PhasePoint,
    pub beta: f64,
    pub support: DomainDescriptor,
}

impl<'a> DissipativeVelocityDensity<'a> {
    pub fn new(scenario: &'a Scenario, t: f64, z: &PhasePoint) -> Result<Self> {
        let flow = symplectic_gradient(scenario.hamiltonian.as_ref(), t, z)?;
        let n = z.dim();
        let support = scenario
            .dissipation
            .symplectic_conjugate_domain(n)
            .intersect(&scenario.dissipation.domain(n).shifted(&-&flow));
        Ok(Self {
            dissipation: &scenario.dissipation,
            time: t,
            state: z.clone(),
            flow,
            beta: scenario.beta,
            support,
        })
    }

    /// `φ(ż_D + XH) + φ^{*ω}(ż_D) + ω(XH, ż_D)`, `+∞` off the support.
    pub fn bracket(&self, zd: &PhasePoint) -> f64 {
        let v = &self.flow + zd;
        (self.dissipation.value(&v) + self.dissipation.symplectic_conjugate(zd)).to_f64()
            + omega_unchecked(&self.flow, zd)
    }

    /// Unnormalised log-density, `≤ 0`.
    pub fn log_density(&self, zd: &PhasePoint) -> f64 {
        -self.beta * self.bracket(zd)
    }
}

/// Which closed form the force density has.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ForceFamily {
    /// Point mass at `η = 0`.
    Zero,
    /// Gaussian, mean `−c q̇`, covariance `(c/β)·I`.
    Gaussian { coefficient: f64 },
    /// `∝ exp(−β⟨η, q̇⟩)` on the box `|ηᵢ| ≤ k`.
    TruncatedExponential { threshold: f64 },
    /// Only the log-density is available.
    Other,
}

/// The reduced density over the force `η`.
#[derive(Clone, Debug)]
pub struct ForceDensity<'a> {
    pub potential: &'a dyn VelocityPotential,
    pub family: ForceFamily,
    /// `q̇ = D_p H(t, z)`
    pub velocity: Vec<f64>,
    pub beta: f64,
    pub support: Vec<CoordConstraint>,
}

impl ForceDensity<'_> {
    pub fn dim(&self) -> usize {
        self.velocity.len()
    }

    /// `Φ*(−η) + ⟨η, q̇⟩`
    pub fn exponent(&self, eta: &[f64]) -> f64 {
        let neg: Vec<f64> = eta.iter().map(|x| -x).collect();
        self.potential.conjugate(&neg).to_f64() + dot(eta, &self.velocity)
    }

    pub fn log_density(&self, eta: &[f64]) -> f64 {
        -self.beta * self.exponent(eta)
    }

    /// Minimiser of the exponent, i.e. the zero-temperature force.
    pub fn mode(&self) -> Vec<f64> {
        let g: Vec<f64> = vec![0.0; self.dim()];
        self.potential
            .subdifferential_projection(&self.velocity, &g)
            .iter()
            .map(|x| -x)
            .collect()
    }
}

fn family_of(d: &Dissipation) -> ForceFamily {
    match d {
        Dissipation::Zero => ForceFamily::Zero,
        Dissipation::Quadratic(q) => ForceFamily::Gaussian {
            coefficient: q.coefficient(),
        },
        Dissipation::DryFriction(f) => ForceFamily::TruncatedExponential {
            threshold: f.threshold(),
        },
        _ => ForceFamily::Other,
    }
}

/// Threshold of the constant-difference check in
/// [`reduce_to_force_density`].
pub const REDUCTION_TOL: f64 = 1e-10;

/// Reduces the full density at `(t, z)` to the density over `η` and checks
/// on a grid of forces that the two log-densities differ by the
/// `η`-independent constant `β·Φ(q̇)`.
///
/// Needs a kinetic Hamiltonian and a velocity-only potential.
pub fn reduce_to_force_density<'a>(scenario: &'a Scenario, t: f64, z: &PhasePoint) -> Result<ForceDensity<'a>> {
    let phi = scenario
        .dissipation
        .velocity_part()
        .ok_or_else(|| Error::ShapeMismatch("force reduction needs a velocity-only dissipation potential".into()))?;
    if scenario.hamiltonian.kinetic_mass().is_none() {
        return Err(Error::ShapeMismatch(
            "force reduction needs a hamiltonian of the form |p|^2/2m + U(t, q)".into(),
        ));
    }
    let n = z.dim();
    let full = DissipativeVelocityDensity::new(scenario, t, z)?;
    let qdot = full.flow.q.clone();
    let density = ForceDensity {
        potential: phi,
        family: family_of(&scenario.dissipation),
        velocity: qdot.clone(),
        beta: scenario.beta,
        support: phi.conjugate_domain(n).into_iter().map(negate).collect(),
    };
    let offset = phi.value(&qdot).to_f64();
    let probe = PhaseProbe::new(&density.support);
    for eta in probe.points(n) {
        let zd = PhasePoint {
            q: vec![0.0; n],
            p: eta.clone(),
        };
        let a = full.bracket(&zd);
        let b = density.exponent(&eta);
        if a.is_finite() != b.is_finite() || (a.is_finite() && (a - b - offset).abs() > REDUCTION_TOL * (1.0 + a.abs())) {
            return Err(Error::ShapeMismatch(format!(
                "full and reduced exponents disagree at eta = {eta:?}: {a} vs {b} + {offset}"
            )));
        }
    }
    Ok(density)
}

fn negate(c: CoordConstraint) -> CoordConstraint {
    match c {
        CoordConstraint::Free => CoordConstraint::Free,
        CoordConstraint::Fixed(v) => CoordConstraint::Fixed(-v),
        CoordConstraint::Interval { lo, hi } => CoordConstraint::Interval { lo: -hi, hi: -lo },
    }
}

/// Small per-axis grids inside a support, for consistency checks.
struct PhaseProbe {
    axes: Vec<Vec<f64>>,
}

impl PhaseProbe {
    fn new(support: &[CoordConstraint]) -> Self {
        let axes = support
            .iter()
            .map(|c| {
                let (lo, hi) = match *c {
                    CoordConstraint::Free => (-3.0, 3.0),
                    CoordConstraint::Fixed(v) => return vec![v],
                    CoordConstraint::Interval { lo, hi } => (lo, hi),
                };
                (0..=8).map(|i| lo + (hi - lo) * i as f64 / 8.0).collect()
            })
            .collect();
        Self { axes }
    }

    /// First axis varies over its grid, the others sit at their midpoints.
    fn points(&self, n: usize) -> Vec<Vec<f64>> {
        let centre: Vec<f64> = self.axes.iter().map(|a| a[a.len() / 2]).collect();
        let mut out = Vec::new();
        for axis in 0..n {
            for &x in &self.axes[axis] {
                let mut p = centre.clone();
                p[axis] = x;
                out.push(p);
            }
        }
        out
    }
}

/// Inverse-CDF draw from `∝ exp(−λx)` on `[−k, k]`.
pub fn truncated_exponential(rate: f64, k: f64, u: f64) -> f64 {
    if (rate * k).abs() < 1e-12 {
        return -k + 2.0 * k * u;
    }
    if rate < 0.0 {
        return -truncated_exponential(-rate, k, u);
    }
    // F⁻¹(u) = −k − ln(1 − u(1 − e^{−2λk}))/λ, in a cancellation-free form.
    let x = -k - (u * (-2.0 * rate * k).exp_m1()).ln_1p() / rate;
    x.clamp(-k, k)
}

/// Mean of `∝ exp(−λx)` on `[−k, k]`.
pub fn truncated_exponential_mean(rate: f64, k: f64) -> f64 {
    if (rate * k).abs() < 1e-8 {
        return -rate * k * k / 3.0;
    }
    1.0 / rate - k / (rate * k).tanh()
}

/// Random-walk Metropolis over the free coordinates of a box/affine support.
#[derive(Clone, Debug)]
pub struct MetropolisSampler {
    pub burn_in: usize,
    pub thinning: usize,
    pub target_acceptance: (f64, f64),
    /// Draws with a post-adaptation acceptance rate below this are flagged.
    pub min_acceptance: f64,
    scale: f64,
    state: Option<Vec<f64>>,
}

impl Default for MetropolisSampler {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            thinning: 50,
            target_acceptance: (0.3, 0.5),
            min_acceptance: 0.01,
            scale: 1.0,
            state: None,
        }
    }
}

/// A draw together with the acceptance rate of the chain segment that
/// produced it (1 for exact samplers).
#[derive(Clone, Debug, PartialEq)]
pub struct Draw {
    pub value: Vec<f64>,
    pub acceptance_rate: f64,
}

impl MetropolisSampler {
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Restarts the chain at `x` (projected onto the support).
    pub fn reset(&mut self, x: Vec<f64>) {
        self.state = Some(x);
    }

    fn walk(
        &mut self,
        log_density: &dyn Fn(&[f64]) -> f64,
        support: &[CoordConstraint],
        steps: usize,
        rng: &mut ChaCha8Rng,
        adapt: bool,
    ) -> f64 {
        let free: Vec<usize> = (0..support.len())
            .filter(|&i| !matches!(support[i], CoordConstraint::Fixed(_)))
            .collect();
        let mut x = self.state.take().unwrap_or_else(|| vec![0.0; support.len()]);
        for (xi, c) in x.iter_mut().zip(support) {
            *xi = match *c {
                CoordConstraint::Free => *xi,
                CoordConstraint::Fixed(v) => v,
                CoordConstraint::Interval { lo, hi } => xi.clamp(lo, hi),
            };
        }
        let mut lx = log_density(&x);
        let mut accepted = 0usize;
        let mut window = 0usize;
        let mut proposal = x.clone();
        for step in 1..=steps {
            proposal.copy_from_slice(&x);
            for &i in &free {
                let z: f64 = rng.sample(StandardNormal);
                proposal[i] += self.scale * z;
            }
            let lp = log_density(&proposal);
            let u: f64 = rng.random();
            if lp.is_finite() && (lp >= lx || u.ln() < lp - lx) {
                std::mem::swap(&mut x, &mut proposal);
                lx = lp;
                accepted += 1;
                window += 1;
            }
            if adapt && step % 50 == 0 {
                let rate = window as f64 / 50.0;
                if rate < self.target_acceptance.0 {
                    self.scale *= 0.7;
                } else if rate > self.target_acceptance.1 {
                    self.scale *= 1.4;
                }
                window = 0;
            }
        }
        self.state = Some(x);
        if steps == 0 {
            1.0
        } else {
            accepted as f64 / steps as f64
        }
    }

    /// Adapts the proposal scale on the given density (burn-in).
    pub fn burn(&mut self, log_density: &dyn Fn(&[f64]) -> f64, support: &[CoordConstraint], rng: &mut ChaCha8Rng) {
        self.walk(log_density, support, self.burn_in, rng, true);
    }

    /// One thinned draw from the current chain.
    pub fn next(&mut self, log_density: &dyn Fn(&[f64]) -> f64, support: &[CoordConstraint], rng: &mut ChaCha8Rng) -> Draw {
        let rate = self.walk(log_density, support, self.thinning, rng, false);
        Draw {
            value: self.state.clone().unwrap(),
            acceptance_rate: rate,
        }
    }
}

/// Draws forces from a [`ForceDensity`] with the chosen backend.
#[derive(Clone, Debug)]
pub struct ForceSampler {
    pub backend: SamplerBackend,
    pub metropolis: MetropolisSampler,
}

impl ForceSampler {
    pub fn new(backend: SamplerBackend) -> Self {
        Self {
            backend,
            metropolis: MetropolisSampler::default(),
        }
    }

    /// Backend that will actually run for a density of this family.
    pub fn resolve(&self, family: ForceFamily) -> Result<SamplerBackend> {
        use SamplerBackend::*;
        match (self.backend, family) {
            (Auto, ForceFamily::Gaussian { .. }) | (ExactGaussian, ForceFamily::Gaussian { .. }) => Ok(ExactGaussian),
            (Auto, ForceFamily::TruncatedExponential { .. })
            | (TruncatedExponential, ForceFamily::TruncatedExponential { .. }) => Ok(TruncatedExponential),
            (Auto, ForceFamily::Zero) => Ok(Auto),
            (Auto | Metropolis, ForceFamily::Other) => Ok(Metropolis),
            (Metropolis, ForceFamily::Zero) => Ok(Auto),
            (Metropolis, _) => Ok(Metropolis),
            (b, f) => Err(Error::InvalidParameter {
                field: "sampler".into(),
                reason: format!("backend {b:?} cannot sample a {f:?} force density"),
            }),
        }
    }

    /// One draw. The Metropolis backend burns in on this density first
    /// (warm-started from the previous chain state).
    pub fn draw(&mut self, density: &ForceDensity<'_>, rng: &mut ChaCha8Rng) -> Result<Draw> {
        let n = density.dim();
        match (self.resolve(density.family)?, density.family) {
            // The point mass at 0 (Zero family): nothing to sample.
            (SamplerBackend::Auto, _) => Ok(Draw {
                value: vec![0.0; n],
                acceptance_rate: 1.0,
            }),
            (SamplerBackend::ExactGaussian, ForceFamily::Gaussian { coefficient }) => {
                let sd = (coefficient / density.beta).sqrt();
                let value = density
                    .velocity
                    .iter()
                    .map(|v| {
                        let z: f64 = rng.sample(StandardNormal);
                        -coefficient * v + sd * z
                    })
                    .collect();
                Ok(Draw {
                    value,
                    acceptance_rate: 1.0,
                })
            }
            (SamplerBackend::TruncatedExponential, ForceFamily::TruncatedExponential { threshold }) => {
                let value = density
                    .velocity
                    .iter()
                    .map(|v| truncated_exponential(density.beta * v, threshold, rng.random()))
                    .collect();
                Ok(Draw {
                    value,
                    acceptance_rate: 1.0,
                })
            }
            _ => {
                let ld = |eta: &[f64]| density.log_density(eta);
                if self.metropolis.state.is_none() {
                    self.metropolis.reset(density.mode());
                }
                self.metropolis.burn(&ld, &density.support, rng);
                Ok(self.metropolis.next(&ld, &density.support, rng))
            }
        }
    }

    /// `count` draws from one fixed density (one burn-in for Metropolis).
    pub fn draw_many(&mut self, density: &ForceDensity<'_>, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Draw>> {
        if self.resolve(density.family)? != SamplerBackend::Metropolis {
            return (0..count).map(|_| self.draw(density, rng)).collect();
        }
        let ld = |eta: &[f64]| density.log_density(eta);
        self.metropolis.reset(density.mode());
        self.metropolis.burn(&ld, &density.support, rng);
        Ok((0..count).map(|_| self.metropolis.next(&ld, &density.support, rng)).collect())
    }
}

/// Quadrature estimate of the normaliser of a 1-D force density, used only
/// to cross-check the density implementation.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizerCheck {
    pub estimate: f64,
    /// The estimate stopped changing as the integration window grew.
    pub converged: bool,
}

pub fn normalizer_check(density: &ForceDensity<'_>) -> NormalizerCheck {
    assert_eq!(density.dim(), 1, "normaliser quadrature is 1-D only");
    let centre = density.mode()[0];
    let integrate = |lo: f64, hi: f64| {
        let n = 4000;
        let dx = (hi - lo) / n as f64;
        (0..n)
            .map(|i| {
                let x = lo + (i as f64 + 0.5) * dx;
                density.log_density(&[x]).exp()
            })
            .sum::<f64>()
            * dx
    };
    match density.support[0] {
        CoordConstraint::Fixed(_) => NormalizerCheck {
            estimate: 1.0,
            converged: true,
        },
        CoordConstraint::Interval { lo, hi } => NormalizerCheck {
            estimate: integrate(lo, hi),
            converged: true,
        },
        CoordConstraint::Free => {
            let mut width = 1.0;
            let mut prev = integrate(centre - width, centre + width);
            while width < 1e6 {
                width *= 2.0;
                let next = integrate(centre - width, centre + width);
                if (next - prev).abs() <= 1e-6 * next.abs() && next.is_finite() {
                    return NormalizerCheck {
                        estimate: next,
                        converged: true,
                    };
                }
                prev = next;
            }
            NormalizerCheck {
                estimate: prev,
                converged: false,
            }
        }
    }
}

/// A trajectory of the random evolution.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticTrajectory {
    pub path: Trajectory,
    /// Sampled `ż_D` per step (for velocity-only potentials `q̇_D = 0` and
    /// the `p` part is the force `η`).
    pub samples: Vec<PhasePoint>,
    pub acceptance_rates: Vec<f64>,
    pub backend: SamplerBackend,
    pub beta: f64,
    /// Steps whose sampler did not mix.
    pub flagged_steps: Vec<usize>,
    /// Outcome of the normaliser cross-check at the first step (1-D only).
    pub normalizer: Option<NormalizerCheck>,
}

impl StochasticTrajectory {
    pub fn forces(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.iter().map(|s| s.p.as_slice())
    }
}

/// Integrates the random evolution from `z0`: at every step the density is
/// built at `(t_k, z_k)`, one `ż_D` is drawn, and the state advances with the
/// deterministic scheme's update using `ż = XH(t̂, ẑ) + ż_D`.
pub fn integrate_stochastic(
    scenario: &Scenario,
    z0: &PhasePoint,
    backend: SamplerBackend,
    rng: &mut ChaCha8Rng,
) -> Result<StochasticTrajectory> {
    z0.validate()?;
    if z0.dim() != scenario.dim {
        return Err(Error::DimensionMismatch {
            expected: scenario.dim,
            found: z0.dim(),
        });
    }
    let opts = SolverOptions {
        max_flagged_fraction: 1.0,
        ..SolverOptions::default()
    };
    let ctx = StepContext {
        ham: scenario.hamiltonian.as_ref(),
        dissipation: &scenario.dissipation,
        scheme: scenario.scheme,
        h: scenario.step,
        opts: &opts,
    };
    let n = scenario.dim;
    let steps = scenario.steps();
    let velocity_only = scenario.dissipation.velocity_part().is_some();
    let mut sampler = ForceSampler::new(backend);
    let resolved = match (velocity_only, family_of(&scenario.dissipation)) {
        (true, family) => sampler.resolve(family)?,
        (false, _) => SamplerBackend::Metropolis,
    };
    let mut path = Trajectory::with_capacity(z0, steps, scenario.step, scenario.scheme, opts.tolerance);
    let mut samples = Vec::with_capacity(steps);
    let mut acceptance = Vec::with_capacity(steps);
    let mut flagged = Vec::new();
    let mut normalizer = None;
    let mut z = z0.clone();
    let mut guess: Option<PhasePoint> = None;
    for k in 0..steps {
        let t = scenario.time(k);
        let (zd, rate) = if velocity_only {
            let density = force_density(scenario, t, &z)?;
            if k == 0 && n == 1 {
                normalizer = Some(normalizer_check(&density));
            }
            let draw = sampler.draw(&density, rng)?;
            (
                PhasePoint {
                    q: vec![0.0; n],
                    p: draw.value,
                },
                draw.acceptance_rate,
            )
        } else {
            let density = DissipativeVelocityDensity::new(scenario, t, &z)?;
            let support: Vec<CoordConstraint> = density.support.q.iter().chain(&density.support.p).cloned().collect();
            let ld = |x: &[f64]| density.log_density(&PhasePoint::from_flat(x));
            if sampler.metropolis.state.is_none() {
                sampler.metropolis.reset(vec![0.0; 2 * n]);
            }
            sampler.metropolis.burn(&ld, &support, rng);
            let draw = sampler.metropolis.next(&ld, &support, rng);
            (PhasePoint::from_flat(&draw.value), draw.acceptance_rate)
        };
        if rate < sampler.metropolis.min_acceptance {
            flagged.push(k);
        }
        let law = if velocity_only {
            ForceLaw::FixedForce(&zd.p)
        } else {
            ForceLaw::FixedDissipative(&zd)
        };
        let out = ctx.step(t, &z, law, guess.as_ref())?;
        let next = z.axpy(scenario.step, &out.velocity);
        if !next.is_finite() {
            return Err(Error::NonFinite("trajectory state"));
        }
        path.push(&StepRecord {
            index: k,
            time: t,
            state: &z,
            outcome: &out,
            next: &next,
        });
        samples.push(zd);
        acceptance.push(rate);
        guess = Some(out.velocity);
        z = next;
    }
    // Gaps measure the distance from the zero-temperature law; they are not
    // failures here.
    path.flagged_steps.clear();
    Ok(StochasticTrajectory {
        path,
        samples,
        acceptance_rates: acceptance,
        backend: resolved,
        beta: scenario.beta,
        flagged_steps: flagged,
        normalizer,
    })
}

/// The force density at `(t, z)` without the reduction self-check, for
/// potentials on which it is known to hold.
fn force_density<'a>(scenario: &'a Scenario, t: f64, z: &PhasePoint) -> Result<ForceDensity<'a>> {
    let phi = scenario
        .dissipation
        .velocity_part()
        .ok_or_else(|| Error::ShapeMismatch("velocity-only potential expected".into()))?;
    let n = z.dim();
    let qdot = scenario.hamiltonian.gradient(t, z).q;
    let support: Vec<CoordConstraint> = phi.conjugate_domain(n).into_iter().map(negate).collect();
    if support.iter().any(|c| matches!(c, CoordConstraint::Interval { lo, hi } if hi < lo)) {
        return Err(Error::EmptySupport);
    }
    Ok(ForceDensity {
        potential: phi,
        family: family_of(&scenario.dissipation),
        velocity: qdot,
        beta: scenario.beta,
        support,
    })
}

/// Kolmogorov–Smirnov distance between two samples.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::sben_gap;
    use crate::model::{CataloguedHamiltonian, InitialCondition, PotentialEnergy};
    use crate::solver::integrate;
    use std::sync::Arc;

    fn scenario(dissipation: Dissipation, beta: f64, z0: (f64, f64), horizon: f64, step: f64) -> Scenario {
        let ham = CataloguedHamiltonian::separable(1.0, PotentialEnergy::Harmonic { stiffness: 1.0 }).unwrap();
        let z0 = PhasePoint::new(vec![z0.0], vec![z0.1]).unwrap();
        let mut s = Scenario::new(Arc::new(ham), dissipation, InitialCondition::Point(z0), horizon, step).unwrap();
        s.beta = beta;
        s
    }

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn truncated_exponential_inverse_cdf() {
        // Endpoints and the median of the rate-0 case.
        assert_eq!(truncated_exponential(0.0, 1.0, 0.5), 0.0);
        assert!((truncated_exponential(10.0, 1.0, 0.0) + 1.0).abs() < 1e-12);
        assert!((truncated_exponential(10.0, 1.0, 1.0) - 1.0).abs() < 1e-12);
        assert!((truncated_exponential(-10.0, 1.0, 1.0) + 1.0).abs() < 1e-12);
        // No overflow for steep rates.
        let x = truncated_exponential(1e6, 1.0, 0.3);
        assert!(x.is_finite() && x < -0.99);
        assert!((truncated_exponential_mean(10.0, 1.0) - (0.1 - 1.0 / 10f64.tanh())).abs() < 1e-15);
    }

    #[test]
    fn dry_friction_force_mean() {
        let s = scenario(Dissipation::dry_friction(1.0).unwrap(), 10.0, (0.0, 1.0), 1.0, 0.1);
        let z = s.initial_point().unwrap().clone();
        let density = reduce_to_force_density(&s, 0.0, &z).unwrap();
        let mut rng = trajectory_rng(7, 0);
        let mut sampler = ForceSampler::new(SamplerBackend::Auto);
        let draws: Vec<f64> = sampler
            .draw_many(&density, 100_000, &mut rng)
            .unwrap()
            .into_iter()
            .map(|d| d.value[0])
            .collect();
        assert!(draws.iter().all(|x| x.abs() <= 1.0));
        let (m, v) = mean_var(&draws);
        let exact = truncated_exponential_mean(10.0, 1.0);
        assert!((m - exact).abs() < 4.0 * (v / draws.len() as f64).sqrt(), "{m} vs {exact}");
    }

    #[test]
    fn reduced_density_shapes() {
        let s = scenario(Dissipation::quadratic(0.5).unwrap(), 4.0, (0.3, 0.0), 1.0, 0.1);
        let z = s.initial_point().unwrap().clone();
        let density = reduce_to_force_density(&s, 0.0, &z).unwrap();
        // q̇ = 0: symmetric about 0.
        for x in [0.1, 0.7, 2.0] {
            assert!((density.log_density(&[x]) - density.log_density(&[-x])).abs() < 1e-14);
        }
        let zero = scenario(Dissipation::Zero, 4.0, (0.3, 1.0), 1.0, 0.1);
        let density = reduce_to_force_density(&zero, 0.0, zero.initial_point().unwrap()).unwrap();
        assert_eq!(density.support, vec![CoordConstraint::Fixed(0.0)]);
        assert_eq!(density.log_density(&[0.0]), 0.0);
        assert_eq!(density.log_density(&[0.1]), f64::NEG_INFINITY);
    }

    #[test]
    fn exponent_is_the_gap_and_is_maximal_at_the_sben_velocity() {
        let s = scenario(Dissipation::quadratic(0.5).unwrap(), 2.0, (0.4, -0.8), 1.0, 0.1);
        let z = s.initial_point().unwrap().clone();
        let full = DissipativeVelocityDensity::new(&s, 0.0, &z).unwrap();
        let mut rng = trajectory_rng(1, 0);
        for _ in 0..200 {
            let eta: f64 = rng.random_range(-4.0..4.0);
            let zd = PhasePoint {
                q: vec![0.0],
                p: vec![eta],
            };
            let v = &full.flow + &zd;
            let gap = sben_gap(&s.dissipation, s.hamiltonian.as_ref(), 0.0, &z, &v).unwrap().to_f64();
            assert!((full.bracket(&zd) - gap).abs() < 1e-10);
            assert!(full.log_density(&zd) <= 0.0);
        }
        let sben = PhasePoint {
            q: vec![0.0],
            p: vec![-0.5 * full.flow.q[0]],
        };
        assert!(full.log_density(&sben) >= -1e-8);
        // Off the support.
        let off = PhasePoint {
            q: vec![0.1],
            p: vec![0.0],
        };
        assert_eq!(full.log_density(&off), f64::NEG_INFINITY);
    }

    #[test]
    fn metropolis_tracks_exact_gaussian() {
        let s = scenario(Dissipation::quadratic(0.5).unwrap(), 4.0, (0.0, 1.0), 1.0, 0.1);
        let z = s.initial_point().unwrap().clone();
        let density = reduce_to_force_density(&s, 0.0, &z).unwrap();
        let mut rng = trajectory_rng(3, 0);
        let exact: Vec<f64> = ForceSampler::new(SamplerBackend::ExactGaussian)
            .draw_many(&density, 10_000, &mut rng)
            .unwrap()
            .into_iter()
            .map(|d| d.value[0])
            .collect();
        let mut mh = ForceSampler::new(SamplerBackend::Metropolis);
        let draws = mh.draw_many(&density, 10_000, &mut rng).unwrap();
        let rate = draws.iter().map(|d| d.acceptance_rate).sum::<f64>() / draws.len() as f64;
        assert!((0.2..0.6).contains(&rate), "acceptance {rate}");
        let mh: Vec<f64> = draws.into_iter().map(|d| d.value[0]).collect();
        let d = ks_distance(&exact, &mh);
        assert!(d <= 0.03, "KS {d}");
    }

    #[test]
    fn ks_distance_basics() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_distance(&a, &a), 0.0);
        let b: Vec<f64> = (0..100).map(|i| i as f64 + 1000.0).collect();
        assert_eq!(ks_distance(&a, &b), 1.0);
    }

    #[test]
    fn normalizer_matches_gaussian() {
        let s = scenario(Dissipation::quadratic(0.5).unwrap(), 4.0, (0.0, 1.0), 1.0, 0.1);
        let density = reduce_to_force_density(&s, 0.0, s.initial_point().unwrap()).unwrap();
        let check = normalizer_check(&density);
        // ∫ exp(−β(η²/2c + η q̇)) dη = sqrt(2πc/β)·exp(βc q̇²/2)
        let exact = (2.0 * std::f64::consts::PI * 0.5 / 4.0).sqrt() * (4.0 * 0.5 * 0.5_f64).exp();
        assert!(check.converged);
        assert!((check.estimate - exact).abs() < 1e-6 * exact, "{} vs {exact}", check.estimate);
    }

    #[test]
    fn zero_dissipation_reproduces_deterministic_path() {
        let s = scenario(Dissipation::Zero, 1.0, (1.0, 0.0), 2.0, 1e-2);
        let det = integrate(&s, s.initial_point().unwrap()).unwrap();
        let sto = integrate_stochastic(&s, s.initial_point().unwrap(), SamplerBackend::Auto, &mut trajectory_rng(5, 0)).unwrap();
        assert_eq!(det.states, sto.path.states);
    }

    #[test]
    fn cold_limit_follows_deterministic_path() {
        let s = scenario(Dissipation::quadratic(0.5).unwrap(), 1e6, (1.0, 0.0), 10.0, 1e-3);
        let det = integrate(&s, s.initial_point().unwrap()).unwrap();
        let sto = integrate_stochastic(&s, s.initial_point().unwrap(), SamplerBackend::Auto, &mut trajectory_rng(9, 0)).unwrap();
        let sup = det
            .states
            .iter()
            .zip(&sto.path.states)
            .map(|(a, b)| (a - b).max_abs())
            .fold(0.0, f64::max);
        assert!(sup < 0.05, "{sup}");
        assert_eq!(sto.backend, SamplerBackend::ExactGaussian);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let s = scenario(Dissipation::dry_friction(0.5).unwrap(), 5.0, (1.0, 0.0), 1.0, 1e-2);
        let a = integrate_stochastic(&s, s.initial_point().unwrap(), SamplerBackend::Auto, &mut trajectory_rng(11, 2)).unwrap();
        let b = integrate_stochastic(&s, s.initial_point().unwrap(), SamplerBackend::Auto, &mut trajectory_rng(11, 2)).unwrap();
        assert_eq!(a, b);
        let c = integrate_stochastic(&s, s.initial_point().unwrap(), SamplerBackend::Auto, &mut trajectory_rng(11, 3)).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn incompatible_backend_is_rejected() {
        let s = scenario(Dissipation::dry_friction(0.5).unwrap(), 5.0, (1.0, 0.0), 1.0, 1e-2);
        assert!(integrate_stochastic(&s, s.initial_point().unwrap(), SamplerBackend::ExactGaussian, &mut trajectory_rng(1, 0)).is_err());
    }
}
