//! Bundled invariant suites. Every check is seeded, so the report is
//! byte-identical across runs with the same seed.

use std::fmt::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sben_core::convex::{numeric_conjugate_1d, DryFriction, QuadraticVelocity, SampledFunction, VelocityPotential};
use sben_core::liouville::{flow_map_jacobian, theorem_check};
use sben_core::model::gradient_selftest;
use sben_core::stochastic::{ks_distance, reduce_to_force_density, truncated_exponential_mean, ForceSampler};
use sben_core::symplectic::hamiltonian_vector;
use sben_core::*;

/// The `J`/`J*` pair under test; tests swap in broken maps to confirm the
/// symplectic suite notices.
#[derive(Clone, Copy)]
pub struct SymplecticMaps {
    pub j: fn(&PhasePoint) -> CotangentPoint,
    pub j_star: fn(&CotangentPoint) -> PhasePoint,
}

impl Default for SymplecticMaps {
    fn default() -> Self {
        Self { j, j_star }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelftestReport {
    pub suites: Vec<SuiteResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        for suite in &self.suites {
            let _ = writeln!(
                s,
                "{:<12} {}  {}",
                suite.name,
                if suite.passed { "PASS" } else { "FAIL" },
                suite.detail
            );
        }
        let _ = writeln!(s, "overall      {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }
}

fn point(rng: &mut ChaCha8Rng, n: usize) -> PhasePoint {
    PhasePoint {
        q: (0..n).map(|_| rng.random_range(-3.0..3.0)).collect(),
        p: (0..n).map(|_| rng.random_range(-3.0..3.0)).collect(),
    }
}

fn catalogue() -> Vec<CataloguedHamiltonian> {
    vec![
        CataloguedHamiltonian::separable(1.0, PotentialEnergy::Harmonic { stiffness: 1.0 }).unwrap(),
        CataloguedHamiltonian::separable(2.0, PotentialEnergy::Anharmonic { stiffness: 0.5, quartic: 0.3 }).unwrap(),
        CataloguedHamiltonian::separable(1.0, PotentialEnergy::Free).unwrap(),
        CataloguedHamiltonian::forced(
            1.0,
            PotentialEnergy::Harmonic { stiffness: 1.0 },
            Forcing::Ramp { rate: vec![0.3, -0.1] },
        )
        .unwrap(),
    ]
}

fn oscillator(dissipation: Dissipation, z0: (f64, f64), horizon: f64, step: f64) -> Scenario {
    let ham = CataloguedHamiltonian::separable(1.0, PotentialEnergy::Harmonic { stiffness: 1.0 }).unwrap();
    let z0 = PhasePoint::new(vec![z0.0], vec![z0.1]).unwrap();
    Scenario::new(Arc::new(ham), dissipation, InitialCondition::Point(z0), horizon, step).unwrap()
}

/// `−J*J = id` exactly, `ω(a, b) = ⟨Ja, b⟩` antisymmetric and bilinear to
/// 1e−12, `⟨⟨DH, XH⟩⟩ = 0` to 1e−8 with `XH = −J* DH`.
pub fn symplectic_suite(maps: SymplecticMaps, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega_j = |a: &PhasePoint, b: &PhasePoint| {
        let ja = (maps.j)(a);
        pairing(&b.q, &ja.p).unwrap() + pairing(&ja.q, &b.p).unwrap()
    };
    let mut identity_ok = true;
    let mut omega_err = 0.0_f64;
    let mut tangent_err = 0.0_f64;
    for _ in 0..200 {
        let (a, b, c) = (point(&mut rng, 2), point(&mut rng, 2), point(&mut rng, 2));
        let s: f64 = rng.random_range(-3.0..3.0);
        identity_ok &= -&(maps.j_star)(&(maps.j)(&a)) == a;
        let reference = omega(&a, &b).unwrap();
        omega_err = omega_err
            .max((omega_j(&a, &b) - reference).abs())
            .max((omega_j(&a, &b) + omega_j(&b, &a)).abs())
            .max((omega_j(&(&(&a * s) + &c), &b) - s * omega_j(&a, &b) - omega_j(&c, &b)).abs() / (1.0 + s.abs()));
        for h in catalogue() {
            let t: f64 = rng.random_range(0.0..5.0);
            let dh = h.gradient(t, &a);
            let xh = -&(maps.j_star)(&dh);
            tangent_err = tangent_err.max(double_pairing(&dh, &xh).unwrap().abs());
            tangent_err = tangent_err.max((&xh - &hamiltonian_vector(&dh)).max_abs());
        }
    }
    SuiteResult {
        name: "symplectic",
        passed: identity_ok && omega_err <= 1e-12 && tangent_err <= 1e-8,
        detail: format!(
            "-J*J=id {}, omega err {:.1e}, <<DH,XH>> err {:.1e}",
            if identity_ok { "exact" } else { "BROKEN" },
            omega_err,
            tangent_err
        ),
    }
}

/// Brute-force grid sup of `ω(z', z) − φ(z)` on `[−5,5]²` (201² nodes)
/// against the analytic `φ^{*ω}` wherever the maximiser is inside the window.
pub fn conjugate_oracle_error(phi: &Dissipation) -> (f64, usize) {
    let grid = grid_symplectic_conjugate(phi, 5.0, 201).expect("valid grid");
    let dom = phi.symplectic_conjugate_domain(1);
    let mut worst = 0.0_f64;
    let mut compared = 0;
    for (i, &qp) in grid.axis.iter().enumerate() {
        for (k, &pp) in grid.axis.iter().enumerate() {
            let z = PhasePoint::new(vec![qp], vec![pp]).unwrap();
            if !dom.contains(&z, 1e-12) {
                continue;
            }
            let inside = phi.conjugate_subgradient(&j(&z)).is_some_and(|m| m.max_abs() <= 5.0);
            if let (ExtReal::Finite(a), true) = (symplectic_conjugate(phi, &z), inside) {
                worst = worst.max((a - grid.values[i][k]).abs());
                compared += 1;
            }
        }
    }
    (worst, compared)
}

/// Fenchel inequalities and equality cases, conjugate round trips, grid oracle.
pub fn convex_suite(seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let potentials = [
        Dissipation::quadratic(0.5).unwrap(),
        Dissipation::dry_friction(0.3).unwrap(),
        Dissipation::Zero,
    ];
    let mut min_residual = f64::INFINITY;
    let mut max_equality = 0.0_f64;
    let mut finite_pairs = 0usize;
    for _ in 0..500 {
        // φ ignores p, so its conjugate is finite only where q' = 0.
        let (z, mut zp) = (point(&mut rng, 1), point(&mut rng, 1));
        zp.q.iter_mut().for_each(|x| *x = 0.0);
        zp.p.iter_mut().for_each(|x| *x *= 0.1);
        for phi in &potentials {
            if let ExtReal::Finite(r) = symplectic_fenchel_residual(phi, &z, &zp) {
                min_residual = min_residual.min(r);
                finite_pairs += 1;
            }
            if let Some(w) = phi.subgradient(&z) {
                if let ExtReal::Finite(r) = symplectic_fenchel_residual(phi, &z, &-&j_star(&w)) {
                    max_equality = max_equality.max(r.abs());
                }
            }
        }
    }
    let mut biconj = 0.0_f64;
    let phis: [Box<dyn VelocityPotential>; 2] = [Box::new(QuadraticVelocity::new(0.8).unwrap()), Box::new(DryFriction::new(0.5).unwrap())];
    for phi in &phis {
        let (xs, vs): (Vec<f64>, Vec<f64>) = (0..=12000)
            .map(|k| -6.0 + 1e-3 * k as f64)
            .filter(|w| phi.conjugate(&[*w]).is_finite())
            .map(|w| (w, phi.conjugate(&[w]).to_f64()))
            .unzip();
        let star = SampledFunction::new(xs, vs).expect("finite samples");
        for k in 0..=40 {
            let x = -4.0 + 0.2 * k as f64;
            biconj = biconj.max((numeric_conjugate_1d(&star, x) - phi.value(&[x]).to_f64()).abs());
        }
    }
    let (grid_q, _) = conjugate_oracle_error(&potentials[0]);
    let (grid_d, _) = conjugate_oracle_error(&potentials[1]);
    let passed = finite_pairs >= 500 && min_residual >= -1e-9 && max_equality <= 1e-9 && biconj <= 1e-4 && grid_q <= 5e-2 && grid_d <= 5e-2;
    SuiteResult {
        name: "convex",
        passed,
        detail: format!(
            "min fenchel residual {min_residual:.1e} over {finite_pairs} pairs, equality {max_equality:.1e}, biconjugate {biconj:.1e}, grid oracle {grid_q:.1e}/{grid_d:.1e}"
        ),
    }
}

pub fn gradient_suite(seed: u64) -> SuiteResult {
    let reports: Vec<_> = catalogue().iter().map(|h| gradient_selftest(h, 2, 50, seed)).collect();
    let worst = reports
        .iter()
        .map(|r| r.max_gradient_error.max(r.max_time_derivative_error))
        .fold(0.0, f64::max);
    SuiteResult {
        name: "gradients",
        passed: reports.iter().all(|r| r.passed),
        detail: format!("max relative error {worst:.1e} over {} hamiltonians", reports.len()),
    }
}

/// Viscous oscillator: zero gap at every step and closed-form agreement.
pub fn solver_suite() -> SuiteResult {
    let s = oscillator(Dissipation::quadratic(0.5).unwrap(), (1.0, 0.0), 10.0, 1e-3);
    let traj = integrate(&s, s.initial_point().unwrap()).expect("viscous run");
    let (g, w) = (0.25_f64, (1.0_f64 - 0.0625).sqrt());
    let err = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, z)| {
            let e = (-g * t).exp();
            let (sn, cs) = (w * t).sin_cos();
            let b = g / w;
            let q = e * (cs + b * sn);
            let p = e * (-g * (cs + b * sn) + (-w * sn + b * w * cs));
            (z.q[0] - q).abs().max((z.p[0] - p).abs())
        })
        .fold(0.0, f64::max);
    let members = traj
        .velocities
        .iter()
        .zip(&traj.dissipative_velocities)
        .all(|(v, zd)| symplectic_subdifferential_check(&s.dissipation, v, zd, 1e-6));
    SuiteResult {
        name: "solver",
        passed: traj.max_gap() <= 1e-8 && err <= 5e-3 && members,
        detail: format!("max gap {:.1e}, closed-form error {err:.1e}", traj.max_gap()),
    }
}

/// Zero dissipation: energy drift, unit Jacobian, zero cost.
pub fn conservative_suite() -> SuiteResult {
    let s = oscillator(Dissipation::Zero, (1.0, 0.5), 10.0, 1e-3);
    let z0 = s.initial_point().unwrap().clone();
    let traj = integrate(&s, &z0).expect("conservative run");
    let e = traj.energies(s.hamiltonian.as_ref());
    let drift = e.iter().map(|x| (x - e[0]).abs()).fold(0.0, f64::max);
    let det = flow_map_jacobian(&s, &FlowKind::Sben, &z0).expect("jacobian").determinant();
    let short = Scenario {
        initial: InitialCondition::Set(PhaseBox::cube(1, -1.0, 1.0)),
        ..s.with_horizon(1.0).with_step(1e-2)
    };
    let spec = GibbsSpec::for_scenario(&short, 8).expect("spec");
    let report = theorem_check(&spec, &short, &FlowKind::Sben).expect("cost");
    SuiteResult {
        name: "conservative",
        passed: drift < 1e-4 && (det - 1.0).abs() <= 5e-3 && report.cost == 0.0 && report.lhs.abs() <= report.tol_total,
        detail: format!("energy drift {drift:.1e}, det {det:.6}, cost {}", report.cost),
    }
}

/// Gaussian and truncated-exponential moments, Metropolis against exact.
pub fn sampler_suite(seed: u64) -> SuiteResult {
    let (c, beta) = (0.5, 4.0);
    let s = Scenario {
        beta,
        ..oscillator(Dissipation::quadratic(c).unwrap(), (0.2, 0.8), 1.0, 0.1)
    };
    let z = s.initial_point().unwrap().clone();
    let density = reduce_to_force_density(&s, 0.0, &z).expect("gaussian density");
    let mut rng = trajectory_rng(seed, 0);
    let n = 100_000;
    let exact: Vec<f64> = ForceSampler::new(SamplerBackend::ExactGaussian)
        .draw_many(&density, n, &mut rng)
        .expect("exact draws")
        .into_iter()
        .map(|d| d.value[0])
        .collect();
    let (m, v) = mean_var(&exact);
    let (tm, tv) = (-c * z.p[0], c / beta);
    let mean_ok = (m - tm).abs() <= 4.0 * (v / n as f64).sqrt();
    let var_ok = (v - tv).abs() <= 4.0 * tv * (2.0 / (n as f64 - 1.0)).sqrt();

    let dry = Scenario {
        beta,
        ..oscillator(Dissipation::dry_friction(1.0).unwrap(), (0.0, 0.6), 1.0, 0.1)
    };
    let dz = dry.initial_point().unwrap().clone();
    let dd = reduce_to_force_density(&dry, 0.0, &dz).expect("dry density");
    let draws: Vec<f64> = ForceSampler::new(SamplerBackend::Auto)
        .draw_many(&dd, n, &mut trajectory_rng(seed, 1))
        .expect("dry draws")
        .into_iter()
        .map(|d| d.value[0])
        .collect();
    let (dm, dv) = mean_var(&draws);
    let dry_ok = (dm - truncated_exponential_mean(beta * dz.p[0], 1.0)).abs() <= 4.0 * (dv / n as f64).sqrt();

    let mh: Vec<f64> = ForceSampler::new(SamplerBackend::Metropolis)
        .draw_many(&density, 10_000, &mut trajectory_rng(seed, 2))
        .expect("metropolis draws")
        .into_iter()
        .map(|d| d.value[0])
        .collect();
    let ks = ks_distance(&exact, &mh);
    SuiteResult {
        name: "sampler",
        passed: mean_ok && var_ok && dry_ok && ks <= 0.03,
        detail: format!("gaussian mean {m:.4} (exact {tm:.4}), var {v:.4} (exact {tv:.4}), KS {ks:.4}"),
    }
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

pub fn selftest_with(maps: SymplecticMaps, seed: u64) -> SelftestReport {
    SelftestReport {
        suites: vec![
            symplectic_suite(maps, seed),
            convex_suite(seed),
            gradient_suite(seed),
            solver_suite(),
            conservative_suite(),
            sampler_suite(seed),
        ],
    }
}

pub fn selftest(seed: u64) -> SelftestReport {
    selftest_with(SymplecticMaps::default(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j_without_sign(z: &PhasePoint) -> CotangentPoint {
        CotangentPoint {
            p: z.p.clone(),
            q: z.q.clone(),
        }
    }

    #[test]
    fn symplectic_suite_passes() {
        let r = symplectic_suite(SymplecticMaps::default(), 1);
        assert!(r.passed, "{}", r.detail);
    }

    #[test]
    fn injected_sign_error_is_caught() {
        let broken = SymplecticMaps {
            j: j_without_sign,
            ..SymplecticMaps::default()
        };
        let r = symplectic_suite(broken, 1);
        assert!(!r.passed);
        assert!(r.detail.contains("BROKEN"));
    }

    #[test]
    fn fast_suites_pass() {
        for r in [convex_suite(0), gradient_suite(0), solver_suite(), conservative_suite()] {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
