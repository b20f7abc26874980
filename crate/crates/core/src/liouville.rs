//! The curve of Gibbs measures along a flow and the dissipation cost that
//! bounds its change:
//!
//! ```text
//! μ_t(B) = ∫_B exp[−(α + β H(t, Ψ(t, z)))] dz
//! C(Ψ)(B) = ∫₀ᵀ ∫_B [φ(Ψ̇) + φ^{*ω}(Ψ̇_D) − ∂H/∂t] dμ_t(z) dt
//! μ_T(B) − μ_0(B) ≤ β C(Ψ)(B)
//! ```
//!
//! with equality for SBEN flows. `μ_t` is integrated over the *initial*
//! points (the flow sits inside `H`), so it is not the pushforward of `μ_0`.
//!
//! Flows are never stored whole: every quadrature node is integrated on
//! demand and folded into running sums in a fixed node order, so results are
//! reproducible bit for bit.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::convex::{hypothesis_d_check, ConvexPotential, Dissipation, ExtReal, HypothesisDReport};
use crate::error::{Error, Result};
use crate::model::Scenario;
use crate::solver::{action_integrand, integrate_streaming, Drift, SolverOptions, StepRecord, Trajectory};
use crate::symplectic::{dot, double_pairing, omega_unchecked, PhaseBox, PhasePoint};

/// Parameters of the Gibbs curve and its quadrature.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GibbsSpec {
    pub alpha: f64,
    pub beta: f64,
    pub region: PhaseBox,
    /// Midpoint-rule nodes per axis.
    pub resolution: usize,
}

pub const MIN_RESOLUTION: usize = 8;

impl GibbsSpec {
    pub fn new(alpha: f64, beta: f64, region: PhaseBox, resolution: usize) -> Result<Self> {
        let region = PhaseBox::new(region.lo, region.hi)?;
        if resolution < MIN_RESOLUTION {
            return Err(Error::InvalidGrid(format!(
                "resolution {resolution} is below the minimum of {MIN_RESOLUTION} per axis"
            )));
        }
        if !(beta >= 0.0 && beta.is_finite()) || !alpha.is_finite() {
            return Err(Error::InvalidParameter {
                field: "beta".into(),
                reason: "beta must be finite and non-negative, alpha finite".into(),
            });
        }
        Ok(Self {
            alpha,
            beta,
            region,
            resolution,
        })
    }

    /// The spec of a scenario: its `α`, `β` and initial set.
    pub fn for_scenario(scenario: &Scenario, resolution: usize) -> Result<Self> {
        let region = scenario.initial_set().cloned().ok_or_else(|| Error::InvalidParameter {
            field: "initial_set".into(),
            reason: "Gibbs verification needs an initial box".into(),
        })?;
        Self::new(scenario.alpha, scenario.beta, region, resolution)
    }

    fn weight(&self, h: f64) -> f64 {
        (-(self.alpha + self.beta * h)).exp()
    }
}

type CustomFlow = dyn Fn(&Scenario, &PhasePoint) -> Result<Trajectory> + Send + Sync;

/// Which flow `Ψ` the verifier integrates.
#[derive(Clone)]
pub enum FlowKind {
    /// The SBEN solution of the scenario.
    Sben,
    /// SBEN dynamics with an extra force `a·sin(ωt)` on `ṗ`.
    DriftPerturbed(Drift),
    /// Any trajectory generator on the scenario's time grid.
    Custom(Arc<CustomFlow>),
}

impl fmt::Debug for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowKind::Sben => write!(f, "Sben"),
            FlowKind::DriftPerturbed(d) => write!(f, "DriftPerturbed({d:?})"),
            FlowKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl FlowKind {
    pub fn tag(&self) -> &'static str {
        match self {
            FlowKind::Sben => "sben",
            FlowKind::DriftPerturbed(_) => "perturbed",
            FlowKind::Custom(_) => "custom",
        }
    }

    fn run(&self, scenario: &Scenario, z0: &PhasePoint, visit: &mut dyn FnMut(&StepRecord<'_>)) -> Result<()> {
        match self {
            FlowKind::Sben => integrate_streaming(scenario, z0, &SolverOptions::default(), visit).map(|_| ()),
            FlowKind::DriftPerturbed(d) => integrate_streaming(scenario, z0, &SolverOptions::with_drift(*d), visit).map(|_| ()),
            FlowKind::Custom(f) => {
                let traj = f(scenario, z0)?;
                if traj.len() != scenario.steps() || traj.states[0] != *z0 {
                    return Err(Error::ShapeMismatch(
                        "custom flow must start at the node and cover the scenario grid".into(),
                    ));
                }
                for k in 0..traj.len() {
                    let out = crate::solver::StepOutcome {
                        velocity: traj.velocities[k].clone(),
                        dissipative_velocity: traj.dissipative_velocities[k].clone(),
                        eval_time: traj.eval_times[k],
                        eval_point: traj.eval_points[k].clone(),
                        gap: traj.residual_gaps[k],
                        iterations: 0,
                        flagged: false,
                    };
                    visit(&StepRecord {
                        index: k,
                        time: traj.times[k],
                        state: &traj.states[k],
                        outcome: &out,
                        next: &traj.states[k + 1],
                    });
                }
                Ok(())
            }
        }
    }
}

/// `Ψ(t, z₀)` for every quadrature node `z₀` of the region, computed on
/// demand. `Ψ(0, z) = z` holds by construction.
#[derive(Clone, Debug)]
pub struct FlowField {
    pub kind: FlowKind,
    pub nodes: Vec<PhasePoint>,
    pub cell_volume: f64,
}

impl FlowField {
    pub fn new(spec: &GibbsSpec, kind: FlowKind) -> Self {
        Self::with_resolution(&spec.region, spec.resolution, kind)
    }

    fn with_resolution(region: &PhaseBox, resolution: usize, kind: FlowKind) -> Self {
        let (nodes, cell_volume) = region.midpoint_grid(resolution);
        Self {
            kind,
            nodes,
            cell_volume,
        }
    }

    /// The full trajectory of one node (for inspection and export).
    pub fn trajectory(&self, scenario: &Scenario, node: usize) -> Result<Trajectory> {
        let z0 = &self.nodes[node];
        let mut traj = Trajectory::with_capacity(z0, scenario.steps(), scenario.step, scenario.scheme, 1e-8);
        self.kind.run(scenario, z0, &mut |r| traj.push(r))?;
        Ok(traj)
    }
}

/// Quadrature sums over one flow at one resolution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowSums {
    pub resolution: usize,
    pub steps: usize,
    pub mu_0: f64,
    pub mu_t: f64,
    /// `C(Ψ)(B)`, `+∞` when some node leaves the effective domain.
    pub cost: f64,
    /// `∫₀ᵀ ⟨ḟ(t), ∫_B q dμ_t⟩ dt` for forced Hamiltonians, else 0.
    pub work: f64,
    /// First node with an infinite integrand.
    pub offending_node: Option<PhasePoint>,
    /// `max |⟨⟨DH, Ψ̇⟩⟩ + ω(Ψ̇_D, Ψ̇)|` over nodes and steps.
    pub identity_residual: f64,
    /// `max |integrand − (ω(Ψ̇_D, Ψ̇) − ∂H/∂t)|`, the gap term of the integrand.
    pub max_gap: f64,
    /// `μ` at the requested checkpoint step indices.
    pub checkpoints: Vec<(usize, f64)>,
}

/// Integrates every node of the region at the given resolution and step.
pub fn flow_sums(
    spec: &GibbsSpec,
    scenario: &Scenario,
    kind: &FlowKind,
    resolution: usize,
    checkpoints: &[usize],
) -> Result<FlowSums> {
    let field = FlowField::with_resolution(&spec.region, resolution, kind.clone());
    let ham = scenario.hamiltonian.as_ref();
    let phi: &Dissipation = &scenario.dissipation;
    let h = scenario.step;
    let n = scenario.dim;
    let steps = scenario.steps();
    let dv = field.cell_volume;

    let mut sums = FlowSums {
        resolution,
        steps,
        mu_0: 0.0,
        mu_t: 0.0,
        cost: 0.0,
        work: 0.0,
        offending_node: None,
        identity_residual: 0.0,
        max_gap: 0.0,
        checkpoints: checkpoints.iter().map(|&k| (k, 0.0)).collect(),
    };
    for z0 in &field.nodes {
        let w0 = spec.weight(ham.value(0.0, z0));
        let mut prev_w = w0;
        let mut cost = 0.0_f64;
        let mut work = 0.0_f64;
        let mut infinite = false;
        let mut last_w = w0;
        let mut error: Option<Error> = None;
        for (k, mu) in sums.checkpoints.iter_mut() {
            if *k == 0 {
                *mu += w0 * dv;
            }
        }
        let checkpoints = &mut sums.checkpoints;
        let mut identity_residual = sums.identity_residual;
        let mut max_gap = sums.max_gap;
        kind.run(scenario, z0, &mut |r| {
            let out = r.outcome;
            let t_next = r.time + h;
            let w_next = spec.weight(ham.value(t_next, r.next));
            let avg = 0.5 * (prev_w + w_next);
            match action_integrand(phi, ham, out.eval_time, &out.eval_point, &out.velocity, &out.dissipative_velocity) {
                ExtReal::Finite(x) => {
                    cost += h * avg * x;
                    let chain = omega_unchecked(&out.dissipative_velocity, &out.velocity)
                        - ham.time_derivative(out.eval_time, &out.eval_point);
                    max_gap = max_gap.max((x - chain).abs());
                }
                ExtReal::PosInfinity => infinite = true,
            }
            let dh = ham.gradient(out.eval_time, &out.eval_point);
            match double_pairing(&dh, &out.velocity) {
                Ok(p) => {
                    let res = (p + omega_unchecked(&out.dissipative_velocity, &out.velocity)).abs();
                    identity_residual = identity_residual.max(res / (1.0 + p.abs()));
                }
                Err(e) => error = Some(e),
            }
            if let Some(rate) = ham.forcing_rate(out.eval_time, n) {
                work += h * avg * dot(&rate, &out.eval_point.q);
            }
            for (k, mu) in checkpoints.iter_mut() {
                if *k == r.index + 1 {
                    *mu += w_next * dv;
                }
            }
            prev_w = w_next;
            last_w = w_next;
        })?;
        if let Some(e) = error {
            return Err(e);
        }
        sums.identity_residual = identity_residual;
        sums.max_gap = max_gap;
        sums.mu_0 += w0 * dv;
        sums.mu_t += last_w * dv;
        sums.work += work * dv;
        if infinite {
            if sums.offending_node.is_none() {
                sums.offending_node = Some(z0.clone());
            }
            sums.cost = f64::INFINITY;
        } else {
            sums.cost += cost * dv;
        }
    }
    Ok(sums)
}

/// `μ_t(B)` at a node `t` of the scenario's time grid.
pub fn gibbs_measure(spec: &GibbsSpec, scenario: &Scenario, kind: &FlowKind, t: f64) -> Result<f64> {
    let k = (t / scenario.step).round();
    if (k * scenario.step - t).abs() > 1e-9 * scenario.step.max(t.abs()) || k < 0.0 || k as usize > scenario.steps() {
        return Err(Error::OffGrid(t));
    }
    let k = k as usize;
    let horizon = scenario.with_horizon((k.max(1)) as f64 * scenario.step);
    let sums = flow_sums(spec, &horizon, kind, spec.resolution, &[k])?;
    Ok(sums.checkpoints[0].1)
}

/// `C(Ψ)(B)` on the grid of `spec`.
pub fn dissipation_cost(spec: &GibbsSpec, scenario: &Scenario, kind: &FlowKind) -> Result<f64> {
    Ok(flow_sums(spec, scenario, kind, spec.resolution, &[])?.cost)
}

/// Floor added to the refinement error estimate.
pub const TOL_FLOOR: f64 = 1e-8;

/// Both sides of the cost inequality with a refinement error bar.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub flow: String,
    pub alpha: f64,
    pub beta: f64,
    /// Configuration dimension `n`.
    pub dim: usize,
    pub resolution: usize,
    pub step: f64,
    pub mu_0: f64,
    pub mu_t: f64,
    pub cost: f64,
    /// `μ_T − μ_0`
    pub lhs: f64,
    /// `β·C`
    pub rhs: f64,
    /// `rhs − lhs`
    pub slack: f64,
    /// `|lhs(fine) − lhs(coarse)|`
    pub lhs_error: f64,
    pub rhs_error: f64,
    /// `lhs_error + rhs_error + 1e−8`
    pub tol_total: f64,
    pub inequality_holds: bool,
    pub equality_tight: bool,
    /// Set for flows outside the smoothness hypothesis (dry friction): the
    /// verdicts are reported but carry no pass/fail meaning.
    pub informative: bool,
    pub identity_residual: f64,
    pub max_gap: f64,
    pub offending_node: Option<PhasePoint>,
    /// Sums at (resolution, h) and at (resolution/2, 2h).
    pub fine: FlowSums,
    pub coarse: FlowSums,
}

impl CostReport {
    /// Multi-line human-readable summary.
    pub fn text_block(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("flow            {}\n", self.flow));
        s.push_str(&format!("alpha, beta     {}, {}\n", self.alpha, self.beta));
        s.push_str(&format!("grid, step      {}^{}, {}\n", self.resolution, 2 * self.dim, self.step));
        s.push_str(&format!("mu_0(B)         {:.10e}\n", self.mu_0));
        s.push_str(&format!("mu_T(B)         {:.10e}\n", self.mu_t));
        s.push_str(&format!("C(B)            {:.10e}\n", self.cost));
        s.push_str(&format!("lhs mu_T-mu_0   {:.10e}  (+/- {:.3e})\n", self.lhs, self.lhs_error));
        s.push_str(&format!("rhs beta*C      {:.10e}  (+/- {:.3e})\n", self.rhs, self.rhs_error));
        s.push_str(&format!("slack           {:.10e}\n", self.slack));
        s.push_str(&format!("tol_total       {:.3e}\n", self.tol_total));
        s.push_str(&format!("inequality      {}\n", verdict(self.inequality_holds, self.informative)));
        s.push_str(&format!("tight           {}\n", verdict(self.equality_tight, self.informative)));
        if let Some(z) = &self.offending_node {
            s.push_str(&format!("infinite cost at node q={:?} p={:?}\n", z.q, z.p));
        }
        s
    }
}

fn verdict(ok: bool, informative: bool) -> &'static str {
    match (ok, informative) {
        (_, true) if ok => "yes (informative)",
        (_, true) => "no (informative)",
        (true, false) => "yes",
        (false, false) => "no",
    }
}

fn refinement(spec: &GibbsSpec, scenario: &Scenario, kind: &FlowKind) -> Result<(FlowSums, FlowSums)> {
    let fine = flow_sums(spec, scenario, kind, spec.resolution, &[])?;
    let coarse_scenario = scenario.with_step(2.0 * scenario.step);
    coarse_scenario.validate()?;
    let coarse = flow_sums(spec, &coarse_scenario, kind, spec.resolution / 2, &[])?;
    Ok((fine, coarse))
}

/// Evaluates both sides of the cost inequality on `(resolution, h)` and on
/// `(resolution/2, 2h)`; the difference is the error bar.
pub fn theorem_check(spec: &GibbsSpec, scenario: &Scenario, kind: &FlowKind) -> Result<CostReport> {
    let (fine, coarse) = refinement(spec, scenario, kind)?;
    let sides = |s: &FlowSums| (s.mu_t - s.mu_0, spec.beta * s.cost);
    let (lhs, rhs) = sides(&fine);
    let (lhs_c, rhs_c) = sides(&coarse);
    let lhs_error = (lhs - lhs_c).abs();
    let rhs_error = if rhs.is_finite() && rhs_c.is_finite() {
        (rhs - rhs_c).abs()
    } else {
        0.0
    };
    let tol_total = lhs_error + rhs_error + TOL_FLOOR;
    let slack = rhs - lhs;
    Ok(CostReport {
        flow: kind.tag().into(),
        alpha: spec.alpha,
        beta: spec.beta,
        dim: scenario.dim,
        resolution: spec.resolution,
        step: scenario.step,
        mu_0: fine.mu_0,
        mu_t: fine.mu_t,
        cost: fine.cost,
        lhs,
        rhs,
        slack,
        lhs_error,
        rhs_error,
        tol_total,
        inequality_holds: lhs <= rhs + tol_total,
        equality_tight: slack.abs() <= tol_total,
        informative: scenario.dissipation.is_nonsmooth(),
        identity_residual: fine.identity_residual,
        max_gap: fine.max_gap,
        offending_node: fine.offending_node.clone(),
        fine,
        coarse,
    })
}

/// Both sides of the work-pump bound `μ_T − μ_0 ≥ β·W`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WorkPumpReport {
    pub mu_0: f64,
    pub mu_t: f64,
    /// `μ_T − μ_0`
    pub lhs: f64,
    /// `β ∫₀ᵀ ⟨ḟ(t), ∫_B q dμ_t⟩ dt`
    pub rhs: f64,
    pub tol_total: f64,
    pub corollary_holds: bool,
    /// When the external work is positive the measure must not decrease.
    pub positive_work: bool,
    pub measure_increased: bool,
    pub hypothesis_d_min: f64,
}

/// Samples, box and tolerance used by the sign-condition gate.
pub const HYPOTHESIS_D_SAMPLES: usize = 4000;
pub const HYPOTHESIS_D_TOL: f64 = 1e-10;

/// Runs the sign-condition gate on a box three times the region's size.
pub fn hypothesis_d_gate(spec: &GibbsSpec, phi: &dyn ConvexPotential, seed: u64) -> Result<HypothesisDReport> {
    let centre = &(&spec.region.lo + &spec.region.hi) * 0.5;
    let half = &(&spec.region.hi - &spec.region.lo) * 1.5;
    let bounds = PhaseBox::new(&centre - &half, &centre + &half)?;
    hypothesis_d_check(phi, HYPOTHESIS_D_SAMPLES, &bounds, HYPOTHESIS_D_TOL, seed).into_result()
}

/// Checks the work-pump bound on the SBEN flow of a forced scenario.
/// Refuses potentials that fail the sign condition.
pub fn work_pump_check(spec: &GibbsSpec, scenario: &Scenario) -> Result<WorkPumpReport> {
    if scenario.hamiltonian.forcing_rate(0.0, scenario.dim).is_none() {
        return Err(Error::ShapeMismatch("work-pump check needs a forced hamiltonian".into()));
    }
    let gate = hypothesis_d_gate(spec, &scenario.dissipation, scenario.seed)?;
    let (fine, coarse) = refinement(spec, scenario, &FlowKind::Sben)?;
    let sides = |s: &FlowSums| (s.mu_t - s.mu_0, spec.beta * s.work);
    let (lhs, rhs) = sides(&fine);
    let (lhs_c, rhs_c) = sides(&coarse);
    let tol_total = (lhs - lhs_c).abs() + (rhs - rhs_c).abs() + TOL_FLOOR;
    Ok(WorkPumpReport {
        mu_0: fine.mu_0,
        mu_t: fine.mu_t,
        lhs,
        rhs,
        tol_total,
        corollary_holds: lhs >= rhs - tol_total,
        positive_work: rhs > tol_total,
        measure_increased: lhs >= -tol_total,
        hypothesis_d_min: gate.min_value,
    })
}

/// Central-difference Jacobian of the time-`T` flow map at `z0`.
pub fn flow_map_jacobian(scenario: &Scenario, kind: &FlowKind, z0: &PhasePoint) -> Result<DMatrix<f64>> {
    let d = 2 * z0.dim();
    let eps = 1e-6 * (1.0 + z0.max_abs());
    let base = z0.to_flat();
    let endpoint = |flat: &[f64]| -> Result<Vec<f64>> {
        let z = PhasePoint::from_flat(flat);
        let mut last = z.clone();
        kind.run(scenario, &z, &mut |r| {
            if r.index + 1 == scenario.steps() {
                last = r.next.clone();
            }
        })?;
        Ok(last.to_flat())
    };
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut plus = base.clone();
        plus[j] += eps;
        let mut minus = base.clone();
        minus[j] -= eps;
        let (a, b) = (endpoint(&plus)?, endpoint(&minus)?);
        for i in 0..d {
            jac[(i, j)] = (a[i] - b[i]) / (2.0 * eps);
        }
    }
    Ok(jac)
}

/// `μ_T(B)` next to `μ_0(Ψ_T(B))`. By the change of variables
/// `μ_0(Ψ_T(B)) = ∫_B exp[−(α + βH(0, Ψ_T(z)))]·|det DΨ_T(z)| dz`, so the two
/// differ exactly where the flow does not preserve volume.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PushforwardWitness {
    pub resolution: usize,
    pub mu_t: f64,
    pub pushforward: f64,
    pub difference: f64,
    /// Change of `difference` from `resolution/2` to `resolution`, plus the floor.
    pub tol_total: f64,
    /// Mean of `|det DΨ_T|` over the nodes.
    pub mean_jacobian: f64,
}

impl PushforwardWitness {
    /// `μ_T(B)` and `μ_0(Ψ_T(B))` are separated by more than three error bars.
    pub fn separates(&self) -> bool {
        self.difference > 3.0 * self.tol_total
    }
}

fn pushforward_sums(spec: &GibbsSpec, scenario: &Scenario, kind: &FlowKind, resolution: usize) -> Result<(f64, f64, f64)> {
    let field = FlowField::with_resolution(&spec.region, resolution, kind.clone());
    let ham = scenario.hamiltonian.as_ref();
    let mut mu_t = 0.0;
    let mut push = 0.0;
    let mut det_sum = 0.0;
    for z0 in &field.nodes {
        let mut last = z0.clone();
        kind.run(scenario, z0, &mut |r| last = r.next.clone())?;
        let det = flow_map_jacobian(scenario, kind, z0)?.determinant().abs();
        mu_t += spec.weight(ham.value(scenario.horizon, &last)) * field.cell_volume;
        push += spec.weight(ham.value(0.0, &last)) * det * field.cell_volume;
        det_sum += det;
    }
    Ok((mu_t, push, det_sum / field.nodes.len() as f64))
}

pub fn pushforward_witness(spec: &GibbsSpec, scenario: &Scenario, kind: &FlowKind, resolution: usize) -> Result<PushforwardWitness> {
    let (mu_t, push, mean_jacobian) = pushforward_sums(spec, scenario, kind, resolution)?;
    let (mu_c, push_c, _) = pushforward_sums(spec, scenario, kind, (resolution / 2).max(1))?;
    let difference = (mu_t - push).abs();
    Ok(PushforwardWitness {
        resolution,
        mu_t,
        pushforward: push,
        difference,
        tol_total: (difference - (mu_c - push_c).abs()).abs() + TOL_FLOOR,
        mean_jacobian,
    })
}
