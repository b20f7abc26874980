//! Deterministic integration of the hamiltonian inclusion
//! `ż − XH(t, z) ∈ ∂^ω φ(ż)` by driving the SBEN gap to zero at every step,
//! and the action functional that the resulting curves minimise.
//!
//! Each step solves for one velocity `v` and advances `z_{k+1} = z_k + h·v`.
//! The inclusion is imposed at an evaluation point `(t̂, ẑ)` that depends on
//! the scheme:
//!
//! * [`Scheme::Midpoint`]: `ẑ = (z_k + z_{k+1})/2`, `t̂ = t_k + h/2` (second order,
//!   conserves quadratic energies exactly).
//! * [`Scheme::SymplecticEuler`]: `ẑ = (q_k, p_{k+1})`, `t̂ = t_k` (first order).

use serde::{Deserialize, Serialize};

use crate::convex::{gap_with_flow, ConvexPotential, Dissipation, ExtReal, VelocityPotential};
use crate::error::{Error, Result};
use crate::model::{Hamiltonian, Scenario};
use crate::symplectic::{hamiltonian_vector, symplectic_gradient, PhasePoint};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Midpoint,
    SymplecticEuler,
}

impl Scheme {
    /// `(a, b)` with `ẑ = (q_k + a·h·v_q, p_k + b·h·v_p)` and `t̂ = t_k + a·h`.
    pub fn weights(self) -> (f64, f64) {
        match self {
            Scheme::Midpoint => (0.5, 0.5),
            Scheme::SymplecticEuler => (0.0, 1.0),
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Scheme::Midpoint => 2,
            Scheme::SymplecticEuler => 1,
        }
    }

    pub fn eval_time(self, t: f64, h: f64) -> f64 {
        t + self.weights().0 * h
    }

    pub fn eval_point(self, z: &PhasePoint, v: &PhasePoint, h: f64) -> PhasePoint {
        let (a, b) = self.weights();
        let (ah, bh) = (a * h, b * h);
        PhasePoint {
            q: z.q.iter().zip(&v.q).map(|(x, u)| x + ah * u).collect(),
            p: z.p.iter().zip(&v.p).map(|(x, u)| x + bh * u).collect(),
        }
    }
}

/// Extra force `amplitude · sin(ω t)` added to every component of `ṗ`.
/// Produces flows that are deliberately *not* SBEN solutions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub amplitude: f64,
    pub angular_frequency: f64,
}

impl Drift {
    pub fn at(&self, t: f64) -> f64 {
        self.amplitude * (self.angular_frequency * t).sin()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Steps whose gap exceeds this are flagged.
    pub tolerance: f64,
    /// Iteration cap of the generic projected-subgradient path.
    pub max_iterations: usize,
    pub fixed_point_tolerance: f64,
    pub max_fixed_point_iterations: usize,
    /// The run aborts once more than this fraction of steps is flagged.
    pub max_flagged_fraction: f64,
    pub drift: Option<Drift>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 500,
            fixed_point_tolerance: 1e-15,
            max_fixed_point_iterations: 60,
            max_flagged_fraction: 0.01,
            drift: None,
        }
    }
}

impl SolverOptions {
    /// Options for a drift-perturbed flow: every step has a positive gap by
    /// construction, so none of them counts against the flag budget.
    pub fn with_drift(drift: Drift) -> Self {
        Self {
            drift: Some(drift),
            max_flagged_fraction: 1.0,
            ..Self::default()
        }
    }
}

/// Result of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub velocity: PhasePoint,
    /// `ż_D = v − XH(t̂, ẑ)`
    pub dissipative_velocity: PhasePoint,
    pub eval_time: f64,
    pub eval_point: PhasePoint,
    /// Achieved gap, `f64::INFINITY` outside the effective domain.
    pub gap: f64,
    pub iterations: usize,
    pub flagged: bool,
}

/// How the dissipative part of the velocity is determined inside a step.
#[derive(Clone, Copy, Debug)]
pub(crate) enum ForceLaw<'a> {
    /// `−η ∈ ∂Φ(q̇)` for a velocity-only potential.
    Inclusion(&'a dyn VelocityPotential),
    /// `ż_D = (0, η)` with `η` given.
    FixedForce(&'a [f64]),
    /// `ż_D` given.
    FixedDissipative(&'a PhasePoint),
    /// Minimise the gap of a full-space potential.
    Generic(&'a dyn ConvexPotential),
}

pub(crate) struct StepContext<'a> {
    pub ham: &'a dyn Hamiltonian,
    pub dissipation: &'a Dissipation,
    pub scheme: Scheme,
    pub h: f64,
    pub opts: &'a SolverOptions,
}

impl StepContext<'_> {
    fn drift(&self, t: f64, n: usize) -> Vec<f64> {
        vec![self.opts.drift.map_or(0.0, |d| d.at(t)); n]
    }

    /// Solves for `v` under `law`, warm-started at `guess`.
    pub fn step(&self, t: f64, z: &PhasePoint, law: ForceLaw<'_>, guess: Option<&PhasePoint>) -> Result<StepOutcome> {
        let (velocity, iterations) = match (law, self.ham.kinetic_mass()) {
            (ForceLaw::Inclusion(_) | ForceLaw::FixedForce(_), Some(m)) => self.kinetic(t, z, law, m, guess),
            (ForceLaw::Generic(phi), _) => self.generic(t, z, phi, guess)?,
            _ => self.pointwise(t, z, law, guess)?,
        };
        if !velocity.is_finite() {
            return Err(Error::NonFinite("step velocity"));
        }
        let eval_time = self.scheme.eval_time(t, self.h);
        let eval_point = self.scheme.eval_point(z, &velocity, self.h);
        let xh = symplectic_gradient(self.ham, eval_time, &eval_point)?;
        let gap = gap_with_flow(self.dissipation, &xh, &velocity).to_f64();
        let dissipative_velocity = &velocity - &xh;
        Ok(StepOutcome {
            flagged: !(gap <= self.opts.tolerance),
            velocity,
            dissipative_velocity,
            eval_time,
            eval_point,
            gap,
            iterations,
        })
    }

    /// `H = |p|²/2m + U(t, q)`: fixed point on `u = q̇` with the force
    /// resolved in closed form through the resolvent of `Φ`.
    fn kinetic(&self, t: f64, z: &PhasePoint, law: ForceLaw<'_>, m: f64, guess: Option<&PhasePoint>) -> (PhasePoint, usize) {
        let n = z.dim();
        let (a, b) = self.scheme.weights();
        let (ah, bh) = (a * self.h, b * self.h);
        let th = self.scheme.eval_time(t, self.h);
        let d = self.drift(th, n);
        let mut u: Vec<f64> = match guess {
            Some(g) => g.q.clone(),
            None => z.p.iter().map(|p| p / m).collect(),
        };
        let mut qh = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut vp = vec![0.0; n];
        let mut iterations = 0;
        loop {
            iterations += 1;
            for i in 0..n {
                qh[i] = z.q[i] + ah * u[i];
            }
            let g = self.ham.configuration_gradient(th, &qh);
            let eta = match law {
                ForceLaw::Inclusion(phi) => {
                    for i in 0..n {
                        x[i] = (z.p[i] - bh * (g[i] - d[i])) / m;
                    }
                    phi.resolvent_force(&x, bh / m)
                }
                ForceLaw::FixedForce(e) => e.to_vec(),
                _ => unreachable!(),
            };
            let mut diff = 0.0_f64;
            let mut scale = 1.0_f64;
            for i in 0..n {
                vp[i] = -g[i] + eta[i] + d[i];
                let next = (z.p[i] + bh * vp[i]) / m;
                diff = diff.max((next - u[i]).abs());
                scale = scale.max(next.abs());
                u[i] = next;
            }
            // With a = 0 the evaluation point does not move with u.
            if a == 0.0
                || diff <= self.opts.fixed_point_tolerance * scale
                || iterations >= self.opts.max_fixed_point_iterations
            {
                break;
            }
        }
        (PhasePoint { q: u, p: vp }, iterations)
    }

    /// General `H`: fixed point on `v` with the force picked pointwise
    /// (stick-slip tie-break: the force balancing the applied load, projected
    /// onto `∂Φ(q̇)`).
    fn pointwise(&self, t: f64, z: &PhasePoint, law: ForceLaw<'_>, guess: Option<&PhasePoint>) -> Result<(PhasePoint, usize)> {
        let n = z.dim();
        let th = self.scheme.eval_time(t, self.h);
        let d = self.drift(th, n);
        let mut v = match guess {
            Some(g) => g.clone(),
            None => symplectic_gradient(self.ham, t, z)?,
        };
        let mut iterations = 0;
        loop {
            iterations += 1;
            let zh = self.scheme.eval_point(z, &v, self.h);
            let dh = self.ham.gradient(th, &zh);
            let next = match law {
                ForceLaw::FixedDissipative(zd) => {
                    let xh = hamiltonian_vector(&dh);
                    PhasePoint {
                        q: xh.q.iter().zip(&zd.q).map(|(a, b)| a + b).collect(),
                        p: (0..n).map(|i| xh.p[i] + zd.p[i] + d[i]).collect(),
                    }
                }
                _ => {
                    let eta: Vec<f64> = match law {
                        ForceLaw::Inclusion(phi) => {
                            let load: Vec<f64> = (0..n).map(|i| d[i] - dh.p[i]).collect();
                            phi.subdifferential_projection(&dh.q, &load).iter().map(|x| -x).collect()
                        }
                        ForceLaw::FixedForce(e) => e.to_vec(),
                        _ => unreachable!(),
                    };
                    PhasePoint {
                        q: dh.q.clone(),
                        p: (0..n).map(|i| -dh.p[i] + eta[i] + d[i]).collect(),
                    }
                }
            };
            let diff = (&next - &v).max_abs();
            let scale = next.max_abs().max(1.0);
            v = next;
            if diff <= self.opts.fixed_point_tolerance * scale || iterations >= self.opts.max_fixed_point_iterations {
                break;
            }
        }
        Ok((v, iterations))
    }

    /// Full-space potential: outer fixed point on the evaluation point, inner
    /// projected subgradient descent on the (convex) gap.
    fn generic(&self, t: f64, z: &PhasePoint, phi: &dyn ConvexPotential, guess: Option<&PhasePoint>) -> Result<(PhasePoint, usize)> {
        let th = self.scheme.eval_time(t, self.h);
        let mut v = match guess {
            Some(g) => g.clone(),
            None => symplectic_gradient(self.ham, t, z)?,
        };
        let mut iterations = 0;
        for _ in 0..self.opts.max_fixed_point_iterations {
            let zh = self.scheme.eval_point(z, &v, self.h);
            let mut xh = symplectic_gradient(self.ham, th, &zh)?;
            if let Some(dr) = self.opts.drift {
                let s = dr.at(th);
                xh.p.iter_mut().for_each(|x| *x += s);
            }
            let (next, its) = minimise_gap(phi, &xh, &v, self.opts.max_iterations);
            iterations += its;
            let diff = (&next - &v).max_abs();
            let scale = next.max_abs().max(1.0);
            v = next;
            if diff <= 1e-13 * scale {
                break;
            }
        }
        Ok((v, iterations))
    }
}

/// `∇_v` of `φ(v) + φ^{*ω}(v − X) + ω(X, v)` in `[q.., p..]` order, or
/// `None` outside the effective domain.
fn gap_subgradient(phi: &dyn ConvexPotential, xh: &PhasePoint, v: &PhasePoint) -> Option<PhasePoint> {
    let g1 = phi.subgradient(v)?;
    let zd = v - xh;
    let g2 = phi.conjugate_subgradient(&crate::symplectic::j(&zd))?;
    Some(PhasePoint {
        q: (0..v.dim()).map(|i| g1.p[i] + g2.p[i] - xh.p[i]).collect(),
        p: (0..v.dim()).map(|i| g1.q[i] - g2.q[i] + xh.q[i]).collect(),
    })
}

/// Projected subgradient descent with diminishing steps `a/√k`
/// (`a = |X| + 1`), capped by the Polyak step for the known optimum 0.
/// Two starts, `X` and `0`; the better result wins.
fn minimise_gap(phi: &dyn ConvexPotential, xh: &PhasePoint, warm: &PhasePoint, max_iterations: usize) -> (PhasePoint, usize) {
    let n = xh.dim();
    let feasible = phi
        .domain(n)
        .intersect(&phi.symplectic_conjugate_domain(n).shifted(xh));
    let a = xh.norm() + 1.0;
    let mut best = (f64::INFINITY, feasible.project(warm));
    let mut total = 0;
    for start in [warm.clone(), xh.clone(), PhasePoint::zeros(n)] {
        let mut v = feasible.project(&start);
        for k in 1..=max_iterations {
            total += 1;
            let gap = gap_with_flow(phi, xh, &v).to_f64();
            if gap < best.0 {
                best = (gap, v.clone());
            }
            if gap <= 1e-15 {
                break;
            }
            let Some(g) = gap_subgradient(phi, xh, &v) else { break };
            let gn2 = g.norm().powi(2);
            if gn2 == 0.0 {
                break;
            }
            let step = (a / (k as f64).sqrt() / gn2.sqrt()).min(gap / gn2);
            v = feasible.project(&v.axpy(-step, &g));
        }
        if best.0 <= 1e-15 {
            break;
        }
    }
    (best.1, total)
}

fn law_for(dissipation: &Dissipation) -> ForceLaw<'_> {
    match dissipation.velocity_part() {
        Some(phi) => ForceLaw::Inclusion(phi),
        None => match dissipation {
            Dissipation::General(g) => ForceLaw::Generic(g.as_ref()),
            _ => unreachable!(),
        },
    }
}

/// One step of the scenario's scheme from `(t, z)` with step `h`.
pub fn solve_step(scenario: &Scenario, t: f64, z: &PhasePoint, h: f64) -> Result<StepOutcome> {
    solve_step_with(scenario, t, z, h, &SolverOptions::default())
}

pub fn solve_step_with(scenario: &Scenario, t: f64, z: &PhasePoint, h: f64, opts: &SolverOptions) -> Result<StepOutcome> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter {
            field: "step".into(),
            reason: format!("must be positive, got {h}"),
        });
    }
    z.validate()?;
    let ctx = StepContext {
        ham: scenario.hamiltonian.as_ref(),
        dissipation: &scenario.dissipation,
        scheme: scenario.scheme,
        h,
        opts,
    };
    ctx.step(t, z, law_for(&scenario.dissipation), None)
}

/// What the integrator hands to a visitor after each step.
#[derive(Debug)]
pub struct StepRecord<'a> {
    pub index: usize,
    pub time: f64,
    pub state: &'a PhasePoint,
    pub outcome: &'a StepOutcome,
    pub next: &'a PhasePoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub final_state: PhasePoint,
    pub steps: usize,
    pub flagged_steps: Vec<usize>,
    pub max_gap: f64,
}

/// Integrates from `z0` over the scenario's grid, handing every step to
/// `visit` instead of storing it.
pub fn integrate_streaming(
    scenario: &Scenario,
    z0: &PhasePoint,
    opts: &SolverOptions,
    mut visit: impl FnMut(&StepRecord<'_>),
) -> Result<RunSummary> {
    z0.validate()?;
    if z0.dim() != scenario.dim {
        return Err(Error::DimensionMismatch {
            expected: scenario.dim,
            found: z0.dim(),
        });
    }
    let ctx = StepContext {
        ham: scenario.hamiltonian.as_ref(),
        dissipation: &scenario.dissipation,
        scheme: scenario.scheme,
        h: scenario.step,
        opts,
    };
    let law = law_for(&scenario.dissipation);
    let steps = scenario.steps();
    let budget = (opts.max_flagged_fraction * steps as f64).floor() as usize;
    let mut z = z0.clone();
    let mut flagged = Vec::new();
    let mut max_gap = 0.0_f64;
    let mut guess: Option<PhasePoint> = None;
    for k in 0..steps {
        let t = scenario.time(k);
        let out = ctx.step(t, &z, law, guess.as_ref())?;
        let next = z.axpy(scenario.step, &out.velocity);
        if !next.is_finite() {
            return Err(Error::NonFinite("trajectory state"));
        }
        if out.flagged {
            flagged.push(k);
            if flagged.len() > budget {
                return Err(Error::TooManyFlaggedSteps {
                    flagged: flagged.len(),
                    total: steps,
                });
            }
        }
        max_gap = max_gap.max(out.gap);
        visit(&StepRecord {
            index: k,
            time: t,
            state: &z,
            outcome: &out,
            next: &next,
        });
        guess = Some(out.velocity);
        z = next;
    }
    Ok(RunSummary {
        final_state: z,
        steps,
        flagged_steps: flagged,
        max_gap,
    })
}

/// A discrete curve `t_k ↦ z_k` together with its per-step velocities,
/// evaluation points and gaps.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub velocities: Vec<PhasePoint>,
    pub dissipative_velocities: Vec<PhasePoint>,
    pub eval_times: Vec<f64>,
    pub eval_points: Vec<PhasePoint>,
    pub residual_gaps: Vec<f64>,
    pub flagged_steps: Vec<usize>,
    pub step: f64,
    pub scheme: Scheme,
    pub tolerance: f64,
}

impl Trajectory {
    pub(crate) fn with_capacity(z0: &PhasePoint, steps: usize, step: f64, scheme: Scheme, tolerance: f64) -> Self {
        let mut states = Vec::with_capacity(steps + 1);
        states.push(z0.clone());
        Self {
            times: vec![0.0],
            states,
            velocities: Vec::with_capacity(steps),
            dissipative_velocities: Vec::with_capacity(steps),
            eval_times: Vec::with_capacity(steps),
            eval_points: Vec::with_capacity(steps),
            residual_gaps: Vec::with_capacity(steps),
            flagged_steps: Vec::new(),
            step,
            scheme,
            tolerance,
        }
    }

    pub(crate) fn push(&mut self, record: &StepRecord<'_>) {
        let out = record.outcome;
        self.times.push(record.time + self.step);
        self.states.push(record.next.clone());
        self.velocities.push(out.velocity.clone());
        self.dissipative_velocities.push(out.dissipative_velocity.clone());
        self.eval_times.push(out.eval_time);
        self.eval_points.push(out.eval_point.clone());
        self.residual_gaps.push(out.gap);
        if out.flagged {
            self.flagged_steps.push(record.index);
        }
    }

    /// Rebuilds the per-step data of an arbitrary discrete curve on the
    /// scenario's grid: `v_k = (z_{k+1} − z_k)/h`, evaluated with the
    /// scenario's scheme. Used for competitor curves of the action functional.
    pub fn from_states(scenario: &Scenario, states: Vec<PhasePoint>) -> Result<Self> {
        if states.len() != scenario.steps() + 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} states for a grid of {} steps",
                states.len(),
                scenario.steps()
            )));
        }
        let h = scenario.step;
        let ham = scenario.hamiltonian.as_ref();
        let mut traj = Self::with_capacity(&states[0], scenario.steps(), h, scenario.scheme, SolverOptions::default().tolerance);
        traj.times = (0..states.len()).map(|k| scenario.time(k)).collect();
        for k in 0..scenario.steps() {
            let v = &(&states[k + 1] - &states[k]) * (1.0 / h);
            let th = scenario.scheme.eval_time(scenario.time(k), h);
            let zh = scenario.scheme.eval_point(&states[k], &v, h);
            let xh = symplectic_gradient(ham, th, &zh)?;
            traj.residual_gaps.push(gap_with_flow(&scenario.dissipation, &xh, &v).to_f64());
            traj.dissipative_velocities.push(&v - &xh);
            traj.velocities.push(v);
            traj.eval_times.push(th);
            traj.eval_points.push(zh);
        }
        traj.states = states;
        Ok(traj)
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn final_state(&self) -> &PhasePoint {
        self.states.last().expect("trajectory has at least its initial state")
    }

    pub fn max_gap(&self) -> f64 {
        self.residual_gaps.iter().fold(0.0, |m, g| m.max(*g))
    }

    pub fn energies(&self, ham: &dyn Hamiltonian) -> Vec<f64> {
        self.times.iter().zip(&self.states).map(|(t, z)| ham.value(*t, z)).collect()
    }
}

/// Integrates from `z0` with default options.
pub fn integrate(scenario: &Scenario, z0: &PhasePoint) -> Result<Trajectory> {
    integrate_with(scenario, z0, &SolverOptions::default())
}

pub fn integrate_with(scenario: &Scenario, z0: &PhasePoint, opts: &SolverOptions) -> Result<Trajectory> {
    let mut traj = Trajectory::with_capacity(z0, scenario.steps(), scenario.step, scenario.scheme, opts.tolerance);
    integrate_streaming(scenario, z0, opts, |r| traj.push(r))?;
    Ok(traj)
}

/// `φ(v) + φ^{*ω}(ż_D) − ∂H/∂t` at one step; `+∞` off the effective domain.
pub fn action_integrand(
    phi: &dyn ConvexPotential,
    ham: &dyn Hamiltonian,
    eval_time: f64,
    eval_point: &PhasePoint,
    velocity: &PhasePoint,
    dissipative_velocity: &PhasePoint,
) -> ExtReal {
    phi.value(velocity) + phi.symplectic_conjugate(dissipative_velocity) - ham.time_derivative(eval_time, eval_point)
}

/// `Π(z) = ∫₀ᵀ φ(ż) + φ^{*ω}(ż_D) − ∂H/∂t dt + H(T, z(T))`, the integral
/// taken with the scheme's own quadrature (one node per step at `(t̂, ẑ)`).
pub fn action_functional(scenario: &Scenario, traj: &Trajectory) -> ExtReal {
    let ham = scenario.hamiltonian.as_ref();
    let mut total = ExtReal::ZERO;
    for k in 0..traj.len() {
        let integrand = action_integrand(
            &scenario.dissipation,
            ham,
            traj.eval_times[k],
            &traj.eval_points[k],
            &traj.velocities[k],
            &traj.dissipative_velocities[k],
        );
        match integrand {
            ExtReal::Finite(x) => total = total + traj.step * x,
            ExtReal::PosInfinity => return ExtReal::PosInfinity,
        }
    }
    total + ham.value(*traj.times.last().unwrap(), traj.final_state())
}

/// Competitor curve for the action functional: `q` is moved by
/// `amplitude · sin²(π·mode·t/T)` (same endpoints at `t = 0`), and `p` is
/// rebuilt so that `q̇ = D_p H` still holds at every evaluation point, which
/// keeps the curve inside the effective domain of `φ^{*ω}`.
///
/// Requires a kinetic Hamiltonian `|p|²/2m + U`.
pub fn bump_perturbed_curve(scenario: &Scenario, traj: &Trajectory, amplitude: f64, mode: u32) -> Result<Trajectory> {
    let m = scenario.hamiltonian.kinetic_mass().ok_or_else(|| Error::InvalidParameter {
        field: "hamiltonian".into(),
        reason: "bump perturbations need a kinetic hamiltonian".into(),
    })?;
    let (_, b) = scenario.scheme.weights();
    let h = scenario.step;
    let horizon = scenario.horizon;
    let bump = |t: f64| amplitude * (std::f64::consts::PI * mode as f64 * t / horizon).sin().powi(2);
    let qs: Vec<Vec<f64>> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, z)| z.q.iter().map(|q| q + bump(*t)).collect())
        .collect();
    let mut states = Vec::with_capacity(qs.len());
    let mut p = traj.states[0].p.clone();
    states.push(PhasePoint {
        q: qs[0].clone(),
        p: p.clone(),
    });
    for k in 0..qs.len() - 1 {
        // p̂ = p_k + b (p_{k+1} − p_k) must equal m·q̇.
        p = (0..p.len())
            .map(|i| {
                let vq = (qs[k + 1][i] - qs[k][i]) / h;
                p[i] + (m * vq - p[i]) / b
            })
            .collect();
        states.push(PhasePoint {
            q: qs[k + 1].clone(),
            p: p.clone(),
        });
    }
    Trajectory::from_states(scenario, states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::symplectic_subdifferential_check;
    use crate::model::{CataloguedHamiltonian, InitialCondition, PotentialEnergy};
    use std::sync::Arc;

    fn oscillator(dissipation: Dissipation, horizon: f64, step: f64, z0: (f64, f64)) -> Scenario {
        let ham = CataloguedHamiltonian::separable(1.0, PotentialEnergy::Harmonic { stiffness: 1.0 }).unwrap();
        let z0 = PhasePoint::new(vec![z0.0], vec![z0.1]).unwrap();
        Scenario::new(Arc::new(ham), dissipation, InitialCondition::Point(z0), horizon, step).unwrap()
    }

    fn underdamped(c: f64, t: f64) -> f64 {
        let w = (1.0 - c * c / 4.0).sqrt();
        (-c * t / 2.0).exp() * ((w * t).cos() + c / (2.0 * w) * (w * t).sin())
    }

    #[test]
    fn single_viscous_step_has_zero_gap() {
        let s = oscillator(Dissipation::quadratic(0.5).unwrap(), 1.0, 0.1, (1.0, 0.3));
        let z = s.initial_point().unwrap().clone();
        let out = solve_step(&s, 0.0, &z, 0.1).unwrap();
        assert!(out.gap.abs() <= 1e-12, "gap {}", out.gap);
        assert!(!out.flagged);
        // Midpoint: v = XH(ẑ) + (0, −c·p̂).
        let zh = &out.eval_point;
        assert!((out.velocity.q[0] - zh.p[0]).abs() < 1e-14);
        assert!((out.velocity.p[0] - (-zh.q[0] - 0.5 * zh.p[0])).abs() < 1e-14);
        assert!(symplectic_subdifferential_check(
            &s.dissipation,
            &out.velocity,
            &out.dissipative_velocity,
            1e-12
        ));
    }

    #[test]
    fn damped_oscillator_matches_closed_form() {
        let s = oscillator(Dissipation::quadratic(0.5).unwrap(), 10.0, 1e-3, (1.0, 0.0));
        let traj = integrate(&s, s.initial_point().unwrap()).unwrap();
        let err = traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(t, z)| (z.q[0] - underdamped(0.5, *t)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "max error {err}");
        assert!(traj.max_gap() <= 1e-8);
        assert!(traj.flagged_steps.is_empty());
        let e = traj.energies(s.hamiltonian.as_ref());
        assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        assert!(e.last().unwrap() < &e[0]);
    }

    #[test]
    fn update_identity_and_dissipative_split() {
        let s = oscillator(Dissipation::dry_friction(0.3).unwrap(), 2.0, 1e-2, (1.0, 0.0));
        let traj = integrate(&s, s.initial_point().unwrap()).unwrap();
        for k in 0..traj.len() {
            assert_eq!(traj.states[k + 1], traj.states[k].axpy(traj.step, &traj.velocities[k]));
            let xh = symplectic_gradient(s.hamiltonian.as_ref(), traj.eval_times[k], &traj.eval_points[k]).unwrap();
            let zd = &traj.velocities[k] - &xh;
            assert!((&zd - &traj.dissipative_velocities[k]).max_abs() <= 1e-12);
            assert!(traj.residual_gaps[k] >= -1e-10 && traj.residual_gaps[k] <= 1e-8);
        }
    }

    #[test]
    fn symplectic_euler_is_first_order() {
        let err = |h: f64| {
            let mut s = oscillator(Dissipation::quadratic(0.5).unwrap(), 2.0, h, (1.0, 0.0));
            s.scheme = Scheme::SymplecticEuler;
            let traj = integrate(&s, s.initial_point().unwrap()).unwrap();
            traj.times
                .iter()
                .zip(&traj.states)
                .map(|(t, z)| (z.q[0] - underdamped(0.5, *t)).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(2e-3) / err(1e-3);
        assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn dry_friction_sticks_below_threshold() {
        let s = oscillator(Dissipation::dry_friction(1.0).unwrap(), 5.0, 1e-3, (0.5, 0.0));
        let traj = integrate(&s, s.initial_point().unwrap()).unwrap();
        for z in &traj.states {
            assert!((z.q[0] - 0.5).abs() < 1e-12 && z.p[0].abs() < 1e-12, "{z:?}");
        }
        // The static force balances the spring.
        for zd in &traj.dissipative_velocities {
            assert!((zd.p[0] - 0.5).abs() < 1e-9);
        }
        assert!(traj.max_gap() <= 1e-8);
    }

    #[test]
    fn dry_friction_slips_above_threshold_and_stops() {
        let s = oscillator(Dissipation::dry_friction(0.2).unwrap(), 20.0, 1e-3, (2.0, 0.0));
        let traj = integrate(&s, s.initial_point().unwrap()).unwrap();
        let last = traj.final_state();
        // Coulomb-damped oscillator stops inside the dead zone |q| ≤ k. While
        // stuck the midpoint momentum p̂ vanishes, so p_k itself alternates
        // with an O(h) amplitude.
        assert!(last.q[0].abs() <= 0.2 + 1e-6 && last.p[0].abs() < 1e-3, "{last:?}");
        assert!(traj.max_gap() <= 1e-8);

        let mut s = s;
        s.scheme = Scheme::SymplecticEuler;
        let traj = integrate(&s, s.initial_point().unwrap()).unwrap();
        let last = traj.final_state();
        assert!(last.q[0].abs() <= 0.2 + 1e-3 && last.p[0].abs() < 1e-12, "{last:?}");
    }

    #[test]
    fn conservative_period() {
        let s = oscillator(Dissipation::Zero, 2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI / 6283.0, (1.0, 0.0));
        let traj = integrate(&s, s.initial_point().unwrap()).unwrap();
        let back = (traj.final_state() - s.initial_point().unwrap()).norm();
        assert!(back < 1e-3, "{back}");
        assert!(traj.max_gap() <= 1e-15);
    }

    #[test]
    fn action_of_solution_and_competitors() {
        let s = oscillator(Dissipation::quadratic(0.5).unwrap(), 5.0, 1e-2, (1.0, 0.0));
        let traj = integrate(&s, s.initial_point().unwrap()).unwrap();
        let pi = action_functional(&s, &traj).finite().unwrap();
        let h0 = 0.5;
        assert!((pi - h0).abs() < 1e-6, "{pi}");
        for mode in 1..=3 {
            for amp in [0.1, -0.1] {
                let other = bump_perturbed_curve(&s, &traj, amp, mode).unwrap();
                let pi_other = action_functional(&s, &other).finite().unwrap();
                assert!(pi_other > pi, "mode {mode}: {pi_other} <= {pi}");
            }
        }
        // Moving q without rebuilding p leaves the domain of the polar.
        let mut states = traj.states.clone();
        for (k, z) in states.iter_mut().enumerate().skip(1) {
            z.q[0] += 0.01 * (k as f64 * 0.01).sin();
        }
        let broken = Trajectory::from_states(&s, states).unwrap();
        assert_eq!(action_functional(&s, &broken), ExtReal::PosInfinity);
    }

    #[test]
    fn conservative_action_equals_initial_energy() {
        let s = oscillator(Dissipation::Zero, 3.0, 1e-2, (0.4, -1.0));
        let traj = integrate(&s, s.initial_point().unwrap()).unwrap();
        let pi = action_functional(&s, &traj).finite().unwrap();
        let h0 = s.hamiltonian.value(0.0, s.initial_point().unwrap());
        assert!((pi - h0).abs() < 1e-12);
    }

    #[test]
    fn drift_perturbed_flow_has_positive_gap() {
        let s = oscillator(Dissipation::quadratic(0.5).unwrap(), 2.0, 1e-2, (1.0, 0.0));
        let opts = SolverOptions::with_drift(Drift {
            amplitude: 0.1,
            angular_frequency: 1.0,
        });
        let traj = integrate_with(&s, s.initial_point().unwrap(), &opts).unwrap();
        for (k, g) in traj.residual_gaps.iter().enumerate() {
            let d = 0.1 * traj.eval_times[k].sin();
            assert!((g - d * d / (2.0 * 0.5)).abs() < 1e-10);
        }
    }

    #[test]
    fn general_hamiltonian_uses_pointwise_path() {
        let h = CataloguedHamiltonian::custom(1, |_, z| 0.5 * (z.q[0] * z.q[0] + z.p[0] * z.p[0]))
            .with_gradient(|_, z| crate::symplectic::CotangentPoint {
                p: z.q.clone(),
                q: z.p.clone(),
            });
        let z0 = PhasePoint::new(vec![1.0], vec![0.0]).unwrap();
        let s = Scenario::new(
            Arc::new(h),
            Dissipation::quadratic(0.5).unwrap(),
            InitialCondition::Point(z0.clone()),
            2.0,
            1e-2,
        )
        .unwrap();
        let traj = integrate(&s, &z0).unwrap();
        assert!(traj.max_gap() <= 1e-8, "{}", traj.max_gap());
        let err = (traj.final_state().q[0] - underdamped(0.5, 2.0)).abs();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn too_many_flagged_steps_abort() {
        let s = oscillator(Dissipation::quadratic(0.5).unwrap(), 1.0, 1e-2, (1.0, 0.0));
        let opts = SolverOptions {
            drift: Some(Drift {
                amplitude: 1.0,
                angular_frequency: 0.0,
            }),
            ..SolverOptions::default()
        };
        // sin(0·t) = 0: nothing flagged.
        assert!(integrate_with(&s, s.initial_point().unwrap(), &opts).is_ok());
        let opts = SolverOptions {
            drift: Some(Drift {
                amplitude: 1.0,
                angular_frequency: 1.0,
            }),
            ..SolverOptions::default()
        };
        assert!(matches!(
            integrate_with(&s, s.initial_point().unwrap(), &opts),
            Err(Error::TooManyFlaggedSteps { .. })
        ));
    }

    #[test]
    fn rejects_bad_step() {
        let s = oscillator(Dissipation::Zero, 1.0, 0.1, (1.0, 0.0));
        assert!(solve_step(&s, 0.0, s.initial_point().unwrap(), 0.0).is_err());
    }
}
