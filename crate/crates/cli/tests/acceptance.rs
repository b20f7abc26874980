//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! The thermodynamic criteria load the configs shipped in `configs/`, so they
//! double as a check that those files stay valid.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use sben_cli::config::RunConfig;
use sben_cli::selftest::{conjugate_oracle_error, mean_var, symplectic_suite, SymplecticMaps};
use sben_core::convex::{QuadraticVelocity, Shifted};
use sben_core::liouville::flow_map_jacobian;
use sben_core::solver::bump_perturbed_curve;
use sben_core::stochastic::{ks_distance, reduce_to_force_density, ForceSampler};
use sben_core::*;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn load(name: &str) -> (RunConfig, Scenario) {
    let path = configs().join(name);
    let cfg = RunConfig::load(&path).unwrap_or_else(|e| panic!("{e}"));
    let scenario = cfg.scenario(path.parent()).unwrap_or_else(|e| panic!("{e}"));
    (cfg, scenario)
}

fn oscillator(dissipation: Dissipation, z0: (f64, f64), horizon: f64, step: f64) -> Scenario {
    let ham = CataloguedHamiltonian::separable(1.0, PotentialEnergy::Harmonic { stiffness: 1.0 }).unwrap();
    let z0 = PhasePoint::new(vec![z0.0], vec![z0.1]).unwrap();
    Scenario::new(Arc::new(ham), dissipation, InitialCondition::Point(z0), horizon, step).unwrap()
}

fn symplectic_algebra() -> Verdict {
    let r = symplectic_suite(SymplecticMaps::default(), 2024);
    verdict(r.passed, r.detail)
}

fn conjugate_oracle() -> Verdict {
    let (q, nq) = conjugate_oracle_error(&Dissipation::quadratic(0.5).unwrap());
    let (d, nd) = conjugate_oracle_error(&Dissipation::dry_friction(0.3).unwrap());
    verdict(
        q <= 5e-2 && d <= 5e-2 && nq > 0 && nd > 0,
        format!("quadratic {q:.1e} on {nq} nodes, dry friction {d:.1e} on {nd} nodes (tol 5e-2)"),
    )
}

fn viscous_variational() -> Verdict {
    let s = oscillator(Dissipation::quadratic(0.5).unwrap(), (1.0, 0.0), 10.0, 1e-3);
    let traj = integrate(&s, s.initial_point().unwrap()).unwrap();
    let members = traj
        .velocities
        .iter()
        .zip(&traj.dissipative_velocities)
        .filter(|(v, zd)| symplectic_subdifferential_check(&s.dissipation, v, zd, 1e-6))
        .count();
    let pi = action_functional(&s, &traj).finite().unwrap_or(f64::INFINITY);
    let mut beaten = 0;
    let mut min_excess = f64::INFINITY;
    for mode in 1..=5 {
        for amp in [0.2, 0.05, -0.05, -0.2] {
            let other = bump_perturbed_curve(&s, &traj, amp, mode).unwrap();
            let pi_other = action_functional(&s, &other).finite().unwrap_or(f64::INFINITY);
            min_excess = min_excess.min(pi_other - pi);
            beaten += usize::from(pi <= pi_other);
        }
    }
    verdict(
        traj.max_gap() <= 1e-8 && members == traj.len() && beaten == 20,
        format!(
            "max gap {:.1e}, subdifferential {members}/{}, Pi={pi:.6} below 20/20 competitors: {} (min excess {min_excess:.2e})",
            traj.max_gap(),
            traj.len(),
            beaten == 20
        ),
    )
}

fn damped_closed_form(s: &Scenario) -> f64 {
    let (g, w) = (0.25_f64, (1.0_f64 - 0.0625).sqrt());
    let traj = integrate(s, s.initial_point().unwrap()).unwrap();
    traj.times
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
        .fold(0.0, f64::max)
}

fn damped_oscillator() -> Verdict {
    let s = oscillator(Dissipation::quadratic(0.5).unwrap(), (1.0, 0.0), 10.0, 1e-3);
    let fine = damped_closed_form(&s);
    let coarse = damped_closed_form(&s.with_step(2e-3));
    let observed = (coarse / fine).log2();
    let order = s.scheme.order() as f64;
    verdict(
        fine <= 5e-3 && (observed - order).abs() <= 0.25,
        format!("max error {fine:.2e} at h=1e-3, observed order {observed:.3} (scheme order {order})"),
    )
}

fn sampler_statistics() -> Verdict {
    let (c, beta) = (0.5, 4.0);
    let s = Scenario {
        beta,
        ..oscillator(Dissipation::quadratic(c).unwrap(), (0.2, 0.8), 1.0, 0.1)
    };
    let z = s.initial_point().unwrap().clone();
    let density = reduce_to_force_density(&s, 0.0, &z).unwrap();
    let n = 100_000;
    let draw = |backend, count, stream| -> Vec<f64> {
        ForceSampler::new(backend)
            .draw_many(&density, count, &mut trajectory_rng(17, stream))
            .unwrap()
            .into_iter()
            .map(|d| d.value[0])
            .collect()
    };
    let exact = draw(SamplerBackend::ExactGaussian, n, 0);
    let (m, v) = mean_var(&exact);
    let (tm, tv) = (-c * z.p[0], c / beta);
    let mean_se = (m - tm).abs() / (v / n as f64).sqrt();
    let var_se = (v - tv).abs() / (tv * (2.0 / (n as f64 - 1.0)).sqrt());
    let ks = ks_distance(&exact, &draw(SamplerBackend::Metropolis, 10_000, 1));

    let cold = Scenario {
        beta: 1e6,
        ..oscillator(Dissipation::quadratic(c).unwrap(), (1.0, 0.0), 10.0, 1e-3)
    };
    let z0 = cold.initial_point().unwrap().clone();
    let det = integrate(&cold, &z0).unwrap();
    let sto = integrate_stochastic(&cold, &z0, SamplerBackend::Auto, &mut trajectory_rng(17, 2)).unwrap();
    let sup = det
        .states
        .iter()
        .zip(&sto.path.states)
        .map(|(a, b)| (a - b).max_abs())
        .fold(0.0, f64::max);
    verdict(
        mean_se <= 4.0 && var_se <= 4.0 && ks <= 0.03 && sup <= 0.05,
        format!("eta mean {mean_se:.2} SE, variance {var_se:.2} SE, Metropolis KS {ks:.4}, beta=1e6 sup distance {sup:.2e}"),
    )
}

fn cost_inequality() -> Verdict {
    let (cfg, s) = load("liouville.toml");
    let spec = GibbsSpec::for_scenario(&s, cfg.run.resolution.unwrap()).unwrap();
    let sben = theorem_check(&spec, &s, &FlowKind::Sben).unwrap();
    let (pcfg, ps) = load("liouville_perturbed.toml");
    let drift = pcfg.drift().unwrap();
    let pert = theorem_check(&spec, &ps, &FlowKind::DriftPerturbed(drift)).unwrap();
    let sben_ok = sben.inequality_holds && sben.equality_tight;
    let pert_ok = pert.inequality_holds && pert.slack > 3.0 * pert.tol_total;
    verdict(
        sben_ok && pert_ok,
        format!(
            "sben slack {:.1e} (tol {:.1e}), perturbed slack {:.3e} vs 3 tol {:.1e}",
            sben.slack,
            sben.tol_total,
            pert.slack,
            3.0 * pert.tol_total
        ),
    )
}

fn work_pump() -> Verdict {
    let (cfg, s) = load("work_pump.toml");
    let spec = GibbsSpec::for_scenario(&s, cfg.run.resolution.unwrap()).unwrap();
    let r = work_pump_check(&spec, &s).unwrap();
    let shifted = Scenario {
        dissipation: Dissipation::Velocity(Arc::new(Shifted::new(Arc::new(QuadraticVelocity::new(0.5).unwrap()), 1.0))),
        ..s
    };
    let refused = matches!(work_pump_check(&spec, &shifted), Err(Error::HypothesisDViolated { .. }));
    verdict(
        r.corollary_holds && refused,
        format!(
            "lhs {:.4} >= rhs {:.4} - tol {:.1e}: {}, shifted potential refused: {refused}",
            r.lhs, r.rhs, r.tol_total, r.corollary_holds
        ),
    )
}

fn conservative_limit() -> Verdict {
    let (cfg, s) = load("conservative.toml");
    let spec = GibbsSpec::for_scenario(&s, cfg.run.resolution.unwrap()).unwrap();
    let r = theorem_check(&spec, &s, &FlowKind::Sben).unwrap();
    let mut worst_det = 0.0_f64;
    let mut drift = 0.0_f64;
    for (q, p) in [(0.0, 0.0), (0.5, -0.3), (-0.9, 0.8), (1.0, 1.0)] {
        let z0 = PhasePoint::new(vec![q], vec![p]).unwrap();
        let det = flow_map_jacobian(&s, &FlowKind::Sben, &z0).unwrap().determinant();
        worst_det = worst_det.max((det - 1.0).abs());
        let traj = integrate(&s, &z0).unwrap();
        let e = traj.energies(s.hamiltonian.as_ref());
        drift = drift.max(e.iter().map(|x| (x - e[0]).abs()).fold(0.0, f64::max));
    }
    verdict(
        r.cost == 0.0 && r.lhs.abs() <= r.tol_total && worst_det <= 5e-3 && drift < 1e-4,
        format!(
            "C={}, |mu_T-mu_0|={:.1e} (tol {:.1e}), |det-1| {worst_det:.1e}, energy drift {drift:.1e}",
            r.cost,
            r.lhs.abs(),
            r.tol_total
        ),
    )
}

fn run_binary(config: &Path, out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_sben"))
        .arg("run")
        .arg(config)
        .args(["--seed", "7", "--plots", "--out"])
        .arg(out)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn reproducibility() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mut compared = 0;
    let mut mismatches = vec![];
    for name in ["stochastic.toml", "damped.toml", "liouville_dry.toml"] {
        let (a, b) = (tmp.path().join(format!("a-{name}")), tmp.path().join(format!("b-{name}")));
        if !run_binary(&configs().join(name), &a) || !run_binary(&configs().join(name), &b) {
            return verdict(false, format!("{name}: run failed"));
        }
        let mut files: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        files.sort();
        let other = std::fs::read_dir(&b).unwrap().count();
        if other != files.len() {
            mismatches.push(format!("{name}: file count"));
        }
        for f in files {
            compared += 1;
            if std::fs::read(a.join(&f)).ok() != std::fs::read(b.join(&f)).ok() {
                mismatches.push(format!("{name}/{}", f.to_string_lossy()));
            }
        }
    }
    verdict(
        mismatches.is_empty(),
        format!("{compared} artifacts compared, mismatches: {mismatches:?}"),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("symplectic algebra", symplectic_algebra),
        ("conjugate vs grid sup", conjugate_oracle),
        ("viscous gap and action", viscous_variational),
        ("damped closed form", damped_oscillator),
        ("sampler statistics", sampler_statistics),
        ("cost inequality", cost_inequality),
        ("work pump", work_pump),
        ("conservative limit", conservative_limit),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        failed += usize::from(!v.passed);
        println!(
            "criterion {} {:<24} {}  {} [{:.1}s]",
            k + 1,
            name,
            if v.passed { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
