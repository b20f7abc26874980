use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sben_core::io::{
    cost_report_pairs, work_pump_pairs, write_key_values, write_levels_csv, write_trajectory_csv, LevelRow,
    TrajectoryTable,
};
use sben_core::liouville::{flow_sums, FlowSums};
use sben_core::solver::{action_functional, integrate_with, SolverOptions};
use sben_core::{
    integrate_stochastic, theorem_check, trajectory_rng, work_pump_check, ConvexPotential, FlowField, FlowKind, GibbsSpec,
    PhasePoint, Scenario, Trajectory,
};
use serde::Serialize;

use crate::config::{FlowChoice, RunConfig, RunKind};
use crate::plot::{LinePlot, Series};
use crate::selftest::selftest;
use crate::CliError;

/// Command-line overrides of the `[run]` block.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub plots: bool,
    pub refine: Option<usize>,
    /// Root for relative output paths.
    pub output_root: Option<PathBuf>,
    /// Directory the config was read from (for relative data paths and the
    /// default output name).
    pub config_path: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub artifacts: Vec<String>,
    pub summary: String,
    /// A verdict failed (exit 2).
    pub verdict_failed: bool,
}

pub const DEFAULT_OUTPUT_ROOT: &str = "sben-out";

pub fn output_dir(config: &RunConfig, opts: &RunOptions) -> PathBuf {
    if let Some(out) = &opts.out {
        return out.clone();
    }
    let root = opts.output_root.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT));
    match &config.run.output {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => root.join(p),
        None => {
            let stem = opts
                .config_path
                .as_ref()
                .and_then(|p| p.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| config.run.kind.name().to_string());
            root.join(stem)
        }
    }
}

/// Collects artifacts in memory, then writes them in name order.
struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn new() -> Self {
        Self { files: vec![] }
    }

    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> sben_core::Result<()>) -> Result<(), CliError> {
        let mut buf = vec![];
        write(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    fn flush(mut self, dir: &Path) -> Result<Vec<String>, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Validation(format!("output {}: {e}", dir.display())))?;
        self.files.sort_by(|a, b| a.0.cmp(&b.0));
        for (name, bytes) in &self.files {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(self.files.into_iter().map(|(n, _)| n).collect())
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    kind: &'static str,
    seed: u64,
    plots: bool,
    refine: usize,
    artifacts: Vec<String>,
    config: &'a RunConfig,
}

/// Runs the configured pipeline and writes its artifacts.
pub fn run(config: &RunConfig, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let mut config = config.clone();
    if let Some(seed) = opts.seed {
        config.run.seed = seed;
    }
    if let Some(refine) = opts.refine {
        if refine == 0 {
            return Err(CliError::Validation("--refine: must be at least 1".into()));
        }
        config.run.refine = refine;
    }
    config.run.plots |= opts.plots;
    let out_dir = output_dir(&config, opts);
    let base_dir = opts.config_path.as_ref().and_then(|p| p.parent()).map(Path::to_path_buf);
    let mut art = Artifacts::new();
    let (summary, verdict_failed) = match config.run.kind {
        RunKind::Selftest => run_selftest(&config, &mut art)?,
        kind => {
            let scenario = config.scenario(base_dir.as_deref())?;
            match kind {
                RunKind::Deterministic => run_deterministic(&config, &scenario, &mut art)?,
                RunKind::Stochastic => run_stochastic(&config, &scenario, &mut art)?,
                RunKind::Liouville => run_liouville(&config, &scenario, &mut art)?,
                RunKind::WorkPump => run_work_pump(&config, &scenario, &mut art)?,
                RunKind::Selftest => unreachable!(),
            }
        }
    };
    art.add("summary.txt", summary.clone().into_bytes());
    let mut names: Vec<String> = art.files.iter().map(|f| f.0.clone()).collect();
    names.push("manifest.toml".into());
    names.sort();
    let manifest = Manifest {
        tool: "sben",
        version: env!("CARGO_PKG_VERSION"),
        core_version: sben_core::VERSION,
        kind: config.run.kind.name(),
        seed: config.run.seed,
        plots: config.run.plots,
        refine: config.run.refine,
        artifacts: names,
        config: &config,
    };
    art.add(
        "manifest.toml",
        toml::to_string(&manifest).expect("manifest serializes").into_bytes(),
    );
    let artifacts = art.flush(&out_dir)?;
    Ok(RunOutcome {
        out_dir,
        artifacts,
        summary,
        verdict_failed,
    })
}

fn svg(plot: LinePlot) -> Vec<u8> {
    plot.render().into_bytes()
}

fn trajectory_plots(art: &mut Artifacts, prefix: &str, traj: &Trajectory, scenario: &Scenario) {
    let n = traj.dim();
    let component = |name: &str, pick: &dyn Fn(&PhasePoint) -> &[f64]| -> Vec<Series> {
        (0..n)
            .map(|i| Series {
                name: format!("{name}{i}"),
                xs: traj.times.clone(),
                ys: traj.states.iter().map(|z| pick(z)[i]).collect(),
            })
            .collect()
    };
    let plot = |title: &str, y: &str, series: Vec<Series>| LinePlot {
        title: title.into(),
        x_label: "t".into(),
        y_label: y.into(),
        series,
        markers: false,
    };
    art.add(format!("{prefix}q.svg"), svg(plot("position", "q(t)", component("q", &|z| &z.q))));
    art.add(format!("{prefix}p.svg"), svg(plot("momentum", "p(t)", component("p", &|z| &z.p))));
    let energy = Series {
        name: "H".into(),
        xs: traj.times.clone(),
        ys: traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(&t, z)| scenario.hamiltonian.value(t, z))
            .collect(),
    };
    art.add(format!("{prefix}energy.svg"), svg(plot("energy", "H(t, z(t))", vec![energy])));
    let gap = Series {
        name: "gap".into(),
        xs: traj.times[..traj.residual_gaps.len()].to_vec(),
        ys: traj.residual_gaps.clone(),
    };
    art.add(format!("{prefix}gap.svg"), svg(plot("residual gap", "gap", vec![gap])));
}

fn run_deterministic(config: &RunConfig, scenario: &Scenario, art: &mut Artifacts) -> Result<(String, bool), CliError> {
    let z0 = scenario.initial_point().expect("checked by config").clone();
    let opts = match config.drift() {
        Some(d) => SolverOptions::with_drift(d),
        None => SolverOptions::default(),
    };
    let traj = integrate_with(scenario, &z0, &opts)?;
    let table = TrajectoryTable::from_trajectory(&traj);
    art.csv("trajectory.csv", |w| write_trajectory_csv(&table, w))?;
    if config.run.plots {
        trajectory_plots(art, "", &traj, scenario);
    }
    let e = traj.energies(scenario.hamiltonian.as_ref());
    let mut s = String::new();
    let _ = writeln!(s, "kind            deterministic");
    let _ = writeln!(s, "scheme          {:?}", scenario.scheme);
    let _ = writeln!(s, "steps           {}", traj.len());
    let _ = writeln!(s, "dissipation     {}", scenario.dissipation.describe());
    let _ = writeln!(s, "max gap         {:.3e}", traj.max_gap());
    let _ = writeln!(s, "flagged steps   {}", traj.flagged_steps.len());
    let _ = writeln!(s, "H(0), H(T)      {:.12e}, {:.12e}", e[0], e[e.len() - 1]);
    let _ = writeln!(s, "action Pi       {}", action_functional(scenario, &traj));
    let _ = writeln!(s, "final state     q={:?} p={:?}", traj.final_state().q, traj.final_state().p);
    Ok((s, false))
}

fn run_stochastic(config: &RunConfig, scenario: &Scenario, art: &mut Artifacts) -> Result<(String, bool), CliError> {
    let z0 = scenario.initial_point().expect("checked by config").clone();
    let count = config.run.ensemble;
    let width = count.to_string().len().max(3);
    let mut s = String::new();
    let _ = writeln!(s, "kind            stochastic");
    let _ = writeln!(s, "beta            {}", scenario.beta);
    let _ = writeln!(s, "ensemble        {count}");
    let _ = writeln!(s, "seed            {} (trajectory i uses stream i)", config.run.seed);
    let mut finals = vec![];
    let mut q_series = vec![];
    for i in 0..count {
        let mut rng = trajectory_rng(config.run.seed, i as u64);
        let run = integrate_stochastic(scenario, &z0, config.run.sampler, &mut rng)?;
        let table = TrajectoryTable::from_stochastic(&run);
        art.csv(&format!("stochastic_{i:0width$}.csv"), |w| write_trajectory_csv(&table, w))?;
        let _ = writeln!(
            s,
            "trajectory {i:0width$}  backend {:?}, flagged {}, final q={:?} p={:?}",
            run.backend,
            run.flagged_steps.len(),
            run.path.final_state().q,
            run.path.final_state().p
        );
        if let Some(check) = &run.normalizer {
            if !check.converged {
                let _ = writeln!(s, "warning: normaliser quadrature did not converge (estimate {})", check.estimate);
            }
        }
        if config.run.plots && i < 8 {
            q_series.push(Series {
                name: format!("q0 #{i}"),
                xs: run.path.times.clone(),
                ys: run.path.states.iter().map(|z| z.q[0]).collect(),
            });
        }
        finals.push(run.path.final_state().clone());
    }
    let n = scenario.dim;
    let mean: Vec<f64> = (0..2 * n)
        .map(|k| finals.iter().map(|z| z.to_flat()[k]).sum::<f64>() / finals.len() as f64)
        .collect();
    let _ = writeln!(s, "ensemble mean final state {mean:?}");
    if config.run.plots {
        let plot = LinePlot {
            title: "stochastic ensemble".into(),
            x_label: "t".into(),
            y_label: "q0(t)".into(),
            series: q_series,
            markers: false,
        };
        art.add("ensemble_q.svg", svg(plot));
    }
    Ok((s, false))
}

fn flow_kind(config: &RunConfig) -> FlowKind {
    match config.run.flow {
        FlowChoice::Sben => FlowKind::Sben,
        FlowChoice::Perturbed => FlowKind::DriftPerturbed(config.drift().expect("checked by config")),
    }
}

fn levels_plot(rows: &[LevelRow], title: &str) -> LinePlot {
    let xs: Vec<f64> = (0..rows.len()).map(|k| k as f64).collect();
    LinePlot {
        title: title.into(),
        x_label: "refinement level".into(),
        y_label: "value".into(),
        series: vec![
            Series {
                name: "mu_T - mu_0".into(),
                xs: xs.clone(),
                ys: rows.iter().map(|r| r.lhs).collect(),
            },
            Series {
                name: "beta C".into(),
                xs,
                ys: rows.iter().map(|r| r.rhs).collect(),
            },
        ],
        markers: true,
    }
}

fn run_liouville(config: &RunConfig, scenario: &Scenario, art: &mut Artifacts) -> Result<(String, bool), CliError> {
    let resolution = config.run.resolution.expect("checked by config");
    let spec = GibbsSpec::for_scenario(scenario, resolution)?;
    let kind = flow_kind(config);
    let report = theorem_check(&spec, scenario, &kind)?;
    let mut rows = vec![
        LevelRow::new(&report.coarse, 2.0 * scenario.step, spec.beta),
        LevelRow::new(&report.fine, scenario.step, spec.beta),
    ];
    for level in 1..config.run.refine {
        let factor = 1usize << level;
        let finer = scenario.with_step(scenario.step / factor as f64);
        let sums: FlowSums = flow_sums(&spec, &finer, &kind, resolution * factor, &[])?;
        rows.push(LevelRow::new(&sums, finer.step, spec.beta));
    }
    art.csv("cost_report.csv", |w| write_key_values(&cost_report_pairs(&report), w))?;
    art.csv("levels.csv", |w| write_levels_csv(&rows, w))?;
    art.add("cost_report.txt", report.text_block().into_bytes());
    if config.run.plots {
        art.add("levels.svg", svg(levels_plot(&rows, "both sides of the cost inequality")));
        let field = FlowField::new(&spec, kind.clone());
        let centre = field.nodes.len() / 2;
        let traj = field.trajectory(scenario, centre)?;
        trajectory_plots(art, "node_", &traj, scenario);
    }
    // SBEN flows must be tight; any flow must satisfy the inequality.
    let expected = match kind {
        FlowKind::Sben => report.inequality_holds && report.equality_tight,
        _ => report.inequality_holds,
    };
    let failed = !expected && !report.informative;
    let mut s = report.text_block();
    let _ = writeln!(s, "identity resid  {:.3e}", report.identity_residual);
    let _ = writeln!(s, "max gap term    {:.3e}", report.max_gap);
    let _ = writeln!(s, "verdict         {}", if failed { "FAIL" } else { "PASS" });
    Ok((s, failed))
}

fn run_work_pump(config: &RunConfig, scenario: &Scenario, art: &mut Artifacts) -> Result<(String, bool), CliError> {
    let resolution = config.run.resolution.expect("checked by config");
    let spec = GibbsSpec::for_scenario(scenario, resolution)?;
    let report = work_pump_check(&spec, scenario)?;
    art.csv("work_pump.csv", |w| write_key_values(&work_pump_pairs(&report), w))?;
    let mut s = String::new();
    let _ = writeln!(s, "kind            work_pump");
    let _ = writeln!(s, "mu_0(B)         {:.10e}", report.mu_0);
    let _ = writeln!(s, "mu_T(B)         {:.10e}", report.mu_t);
    let _ = writeln!(s, "lhs mu_T-mu_0   {:.10e}", report.lhs);
    let _ = writeln!(s, "rhs beta*work   {:.10e}", report.rhs);
    let _ = writeln!(s, "tol_total       {:.3e}", report.tol_total);
    let _ = writeln!(s, "sign condition  min {:.3e}", report.hypothesis_d_min);
    let _ = writeln!(s, "corollary       {}", if report.corollary_holds { "yes" } else { "no" });
    if report.positive_work {
        let _ = writeln!(s, "positive work   measure increased: {}", report.measure_increased);
    }
    let failed = !report.corollary_holds || (report.positive_work && !report.measure_increased);
    let _ = writeln!(s, "verdict         {}", if failed { "FAIL" } else { "PASS" });
    art.add("work_pump.txt", s.clone().into_bytes());
    Ok((s, failed))
}

fn run_selftest(config: &RunConfig, art: &mut Artifacts) -> Result<(String, bool), CliError> {
    let report = selftest(config.run.seed);
    let text = report.text();
    art.add("selftest.txt", text.clone().into_bytes());
    Ok((text, !report.passed()))
}
