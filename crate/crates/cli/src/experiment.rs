//! Executes one configured experiment and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use gsp_core::coop_system::{solve_system_with_uniqueness, CoopMatrix, SystemProblem};
use gsp_core::groundstate_space::{estimate_c0_delta0, x_norm, WindowEstimate};
use gsp_core::linear_solver::{certify_theorem1, LinearProblem, SignClaim};
use gsp_core::radial_grid::{
    build_grid_with_factor, validate_class_p, ClassPReport, Grid, RadialPotential,
};
use gsp_core::semilinear_solver::{
    solve_with_uniqueness, Branch, Nonlinearity, SemilinearProblem, WINDOW_NOTE,
};
use gsp_core::spectral::{compute_spectrum, DiscreteOperator, SpectrumSummary};

use crate::config::{DataSpec, ExperimentConfig, Mode, PotentialSpec};
use crate::error::CliError;

pub const SWEEP_HEADER: [&str; 14] = [
    "mu",
    "offset",
    "u1_component",
    "min_ratio",
    "max_ratio",
    "x_norm",
    "ratio_bound",
    "xnorm_bound",
    "in_window",
    "gsp",
    "gsn",
    "cert_failed",
    "iterations",
    "uniqueness_gap",
];

const SPOT_SAMPLES: usize = 16;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub grid_scale: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub rows: usize,
    pub certificate_failures: usize,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub mu: f64,
    pub offset: f64,
    pub u1_component: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub x_norm: f64,
    pub ratio_bound: Option<f64>,
    pub xnorm_bound: Option<f64>,
    pub in_window: bool,
    pub gsp: bool,
    pub gsn: bool,
    pub cert_failed: bool,
    pub iterations: Option<usize>,
    pub uniqueness_gap: Option<f64>,
    solution: Vec<Vec<f64>>,
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

impl SweepRow {
    fn record(&self) -> Vec<String> {
        vec![
            fmt_f64(self.mu),
            fmt_f64(self.offset),
            fmt_f64(self.u1_component),
            fmt_f64(self.min_ratio),
            fmt_f64(self.max_ratio),
            fmt_f64(self.x_norm),
            fmt_opt(self.ratio_bound),
            fmt_opt(self.xnorm_bound),
            self.in_window.to_string(),
            self.gsp.to_string(),
            self.gsn.to_string(),
            self.cert_failed.to_string(),
            self.iterations.map(|n| n.to_string()).unwrap_or_default(),
            fmt_opt(self.uniqueness_gap),
        ]
    }
}

#[derive(Serialize)]
struct GridInfo {
    space_dim: usize,
    r_max: f64,
    n: usize,
    h: f64,
}

#[derive(Serialize)]
struct SpotCheck {
    seed: u64,
    samples: usize,
    /// max ‖R(μ)h‖_X / (c₀‖h‖_X) over random h ⟂ φ at sampled window points
    max_ratio: f64,
}

#[derive(Serialize)]
struct SystemInfo<'a> {
    matrix: &'a CoopMatrix,
    lambda_star: f64,
    kappa_prime: f64,
    k_prime: f64,
    principal_identity_residual: f64,
}

#[derive(Serialize)]
struct SpectrumFile<'a> {
    potential: &'a str,
    grid: GridInfo,
    #[serde(flatten)]
    spectrum: &'a SpectrumSummary,
    window: &'a WindowEstimate,
    window_overridden: bool,
    /// Admissible half-width used for the claims of this mode.
    delta: Option<f64>,
    system: Option<SystemInfo<'a>>,
    class_p: Result<ClassPReport, String>,
    spot_check: SpotCheck,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct RunFile {
    version: &'static str,
    config: String,
    config_sha256: String,
    output_dir: String,
    grid_scale: Option<f64>,
    seed: u64,
    rows: usize,
    certificate_failures: usize,
    wall_time_s: f64,
}

fn load_potential(spec: &PotentialSpec, base: &Path) -> Result<RadialPotential, CliError> {
    Ok(match spec {
        PotentialSpec::Power { c, s } => RadialPotential::power(*c, *s)?,
        PotentialSpec::PurePower { s } => RadialPotential::pure_power(*s)?,
        PotentialSpec::Exp => RadialPotential::exponential(),
        PotentialSpec::Tabulated { path } => {
            let path = base.join(path);
            let mut reader = csv::Reader::from_path(&path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let rows = reader
                .deserialize::<(f64, f64)>()
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| {
                    CliError::Config(format!("bad potential table {}: {e}", path.display()))
                })?;
            RadialPotential::tabulated(rows)?
        }
    })
}

fn build_grid(cfg: &ExperimentConfig, pot: &RadialPotential, ppu: f64) -> Result<Grid, CliError> {
    let g = &cfg.grid;
    Ok(match g.r_max {
        Some(r_max) => Grid::uniform(cfg.space_dim, r_max, ((ppu * r_max).ceil() as usize).max(3))?,
        None => build_grid_with_factor(
            pot,
            cfg.space_dim,
            g.spectral_scale,
            ppu,
            g.truncation_factor,
        )?,
    })
}

fn spot_check(
    op: &DiscreteOperator,
    spec: &SpectrumSummary,
    window: &WindowEstimate,
    seed: u64,
) -> Result<SpotCheck, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gs = &spec.groundstate;
    let mut worst = 0.0_f64;
    for _ in 0..SPOT_SAMPLES {
        let mu = if window.mu_samples.is_empty() {
            let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            spec.lambda + side * window.delta0 * rng.gen_range(0.1..1.0)
        } else {
            window.mu_samples[rng.gen_range(0..window.mu_samples.len())]
        };
        let raw: Vec<f64> = gs
            .phi
            .iter()
            .map(|p| rng.gen_range(-1.0..1.0) * p)
            .collect();
        let h = gs.project_perp(&raw);
        let size = x_norm(&h, &gs.phi);
        if size == 0.0 {
            continue;
        }
        let u = op.resolvent(mu)?.solve(&h);
        worst = worst.max(x_norm(&gs.project_perp(&u), &gs.phi) / (window.c0 * size));
    }
    Ok(SpotCheck {
        seed,
        samples: SPOT_SAMPLES,
        max_ratio: worst,
    })
}

fn linear_data(
    spec: &DataSpec,
    op: &DiscreteOperator,
    summary: &SpectrumSummary,
) -> Result<Vec<f64>, CliError> {
    let phi = summary.phi();
    Ok(match *spec {
        DataSpec::Groundstate => phi.to_vec(),
        DataSpec::Mixed { second_mode } => {
            let (_, phi2) = op.eigenpair(1)?;
            phi.iter()
                .zip(&phi2)
                .map(|(a, b)| a + second_mode * b)
                .collect()
        }
        DataSpec::Gaussian { amplitude, width } => {
            if !(width > 0.0) {
                return Err(CliError::Config("gaussian width must be positive".into()));
            }
            op.grid()
                .radii()
                .iter()
                .map(|r| amplitude * (-(r * r) / (width * width)).exp())
                .collect()
        }
    })
}

struct ModeResult {
    rows: Vec<SweepRow>,
    delta: Option<f64>,
    system: Option<(CoopMatrix, f64, f64, f64)>,
    notes: Vec<String>,
}

fn run_linear(
    cfg: &ExperimentConfig,
    op: &DiscreteOperator,
    spec: &SpectrumSummary,
    window: &WindowEstimate,
    offsets: &[f64],
) -> Result<ModeResult, CliError> {
    let data = cfg.data.as_ref().expect("validated");
    let f = linear_data(data, op, spec)?;
    let rows = offsets
        .par_iter()
        .map(|&offset| {
            let p = LinearProblem::new(op, spec, spec.lambda + offset, f.clone())?;
            let c = certify_theorem1(&p, window)?;
            Ok(SweepRow {
                mu: c.mu,
                offset,
                u1_component: c.solution.c1,
                min_ratio: c.min_ratio,
                max_ratio: c.max_ratio,
                x_norm: c.solution.x_norm,
                ratio_bound: c.gsp.or(c.gsn),
                xnorm_bound: Some((c.f1 / p.gap()).abs() + c.c0 * c.f_perp_x),
                in_window: c.in_window,
                gsp: c.claim == Some(SignClaim::Gsp) && c.verified,
                gsn: c.claim == Some(SignClaim::Gsn) && c.verified,
                cert_failed: c.failed(),
                iterations: None,
                uniqueness_gap: None,
                solution: vec![c.solution.values],
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let probe = LinearProblem::new(op, spec, spec.lambda + offsets[0], f)?;
    let delta = certify_theorem1(&probe, window)?.window_used;
    Ok(ModeResult {
        rows,
        delta: Some(delta),
        system: None,
        notes: Vec::new(),
    })
}

fn run_semilinear(
    cfg: &ExperimentConfig,
    op: &DiscreteOperator,
    spec: &SpectrumSummary,
    window: &WindowEstimate,
    offsets: &[f64],
) -> Result<ModeResult, CliError> {
    let nl = cfg.nonlinearity.as_ref().expect("validated").build()?;
    let opts = cfg.iteration.options();
    let rows = offsets
        .par_iter()
        .map(|&offset| {
            let p = SemilinearProblem {
                op,
                spectrum: spec,
                window,
                nl: &nl,
                mu: spec.lambda + offset,
            };
            let r = solve_with_uniqueness(&p, &opts)?;
            Ok(SweepRow {
                mu: r.mu,
                offset,
                u1_component: r.solution.c1,
                min_ratio: r.min_ratio,
                max_ratio: r.max_ratio,
                x_norm: r.solution.x_norm,
                ratio_bound: r.sign_bound,
                xnorm_bound: Some(r.xnorm_bound),
                in_window: r.in_window,
                gsp: r.gsp,
                gsn: r.gsn,
                cert_failed: !r.certified(),
                iterations: Some(r.iterations),
                uniqueness_gap: r.uniqueness.map(|u| u.two_start_gap),
                solution: vec![r.solution.values],
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let probe = SemilinearProblem {
        op,
        spectrum: spec,
        window,
        nl: &nl,
        mu: spec.lambda + offsets[0],
    };
    Ok(ModeResult {
        rows,
        delta: Some(probe.window()),
        system: None,
        notes: vec![WINDOW_NOTE.to_string()],
    })
}

fn run_system(
    cfg: &ExperimentConfig,
    op: &DiscreteOperator,
    spec: &SpectrumSummary,
    window: &WindowEstimate,
    offsets: &[f64],
) -> Result<ModeResult, CliError> {
    let m = cfg.matrix.expect("validated");
    let matrix = CoopMatrix::analyze(m.a, m.b, m.c, m.d)?;
    let nl1: Nonlinearity = cfg.nonlinearity.as_ref().expect("validated").build()?;
    let nl2: Nonlinearity = match &cfg.nonlinearity2 {
        Some(s) => s.build()?,
        None => nl1.clone(),
    };
    let opts = cfg.iteration.options();
    let lambda_star = matrix.lambda_star(spec.lambda);
    let problem = |mu: f64| SystemProblem {
        op,
        spectrum: spec,
        window,
        matrix: &matrix,
        nl1: &nl1,
        nl2: &nl2,
        mu,
    };
    let rows = offsets
        .par_iter()
        .map(|&offset| {
            let p = problem(lambda_star + offset);
            let r = solve_system_with_uniqueness(&p, &opts)?;
            let certified = r.certified();
            let rect = &r.rectangle;
            let ratio_bound = r.in_window.then(|| match r.branch {
                Branch::Mp => rect.lower_ratio[0].min(rect.lower_ratio[1]),
                Branch::Amp => rect.upper_ratio[0].max(rect.upper_ratio[1]),
            });
            let xnorm_bound = rect
                .lower_ratio
                .iter()
                .chain(&rect.upper_ratio)
                .fold(0.0_f64, |a, v| a.max(v.abs()));
            Ok(SweepRow {
                mu: r.mu,
                offset,
                u1_component: r.u[0].c1,
                min_ratio: r.min_ratio[0].min(r.min_ratio[1]),
                max_ratio: r.max_ratio[0].max(r.max_ratio[1]),
                x_norm: r.u[0].x_norm.max(r.u[1].x_norm),
                ratio_bound,
                xnorm_bound: Some(xnorm_bound),
                in_window: r.in_window,
                gsp: r.in_window && r.branch == Branch::Mp && certified,
                gsn: r.in_window && r.branch == Branch::Amp && certified,
                cert_failed: !certified,
                iterations: Some(r.iterations),
                uniqueness_gap: r.uniqueness.map(|u| u.two_start_gap),
                solution: vec![r.u[0].values.clone(), r.u[1].values.clone()],
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let probe = problem(lambda_star + offsets[0]);
    let (kp, kk) = probe.transformed_bounds();
    let delta = probe.window();
    let residual = probe.principal_identity_residual();
    Ok(ModeResult {
        rows,
        delta: Some(delta),
        system: Some((matrix, kp, kk, residual)),
        notes: vec![
            "system window uses (xi1 - xi2)/2 and kappa'/(2 c0 K')".to_string(),
            "u1 = b v1 + b v2 from U = P V".to_string(),
        ],
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut w =
        csv::Writer::from_path(path).map_err(|e| CliError::MalformedInput(e.to_string()))?;
    w.write_record(SWEEP_HEADER)
        .map_err(|e| CliError::MalformedInput(e.to_string()))?;
    for row in rows {
        w.write_record(row.record())
            .map_err(|e| CliError::MalformedInput(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_solution(
    path: &Path,
    radii: &[f64],
    phi: &[f64],
    columns: &[Vec<f64>],
) -> Result<(), CliError> {
    let mut w =
        csv::Writer::from_path(path).map_err(|e| CliError::MalformedInput(e.to_string()))?;
    let mut header = vec!["r".to_string(), "phi".to_string()];
    if columns.len() == 1 {
        header.push("u".into());
    } else {
        header.extend((1..=columns.len()).map(|k| format!("u{k}")));
    }
    w.write_record(&header)
        .map_err(|e| CliError::MalformedInput(e.to_string()))?;
    for i in 0..radii.len() {
        let mut rec = vec![fmt_f64(radii[i]), fmt_f64(phi[i])];
        rec.extend(columns.iter().map(|c| fmt_f64(c[i])));
        w.write_record(&rec)
            .map_err(|e| CliError::MalformedInput(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn run(opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let started = Instant::now();
    let bytes = fs::read(&opts.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", opts.config.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Config("config is not UTF-8".into()))?;
    let cfg = ExperimentConfig::from_json(&text)?;
    let base = opts
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let output_dir = match (&opts.out, &cfg.output_dir) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => base.join(dir),
        (None, None) => base.join("out"),
    };
    let ppu = match opts.grid_scale {
        Some(v) if !(v > 0.0) => {
            return Err(CliError::Config("--grid-scale must be positive".into()))
        }
        Some(v) => v,
        None => cfg.grid.points_per_unit,
    };

    let pot = load_potential(&cfg.potential, &base)?;
    let grid = build_grid(&cfg, &pot, ppu)?;
    let (op, spec) = compute_spectrum(&grid, &pot, cfg.grid.max_sector)?;
    let (window, overridden) = match (cfg.window.delta0, cfg.window.c0) {
        (Some(d), Some(c)) => (WindowEstimate::fixed(d, c)?, true),
        _ => (estimate_c0_delta0(&spec, &op, cfg.window.margin)?, false),
    };
    let spot = spot_check(&op, &spec, &window, opts.seed)?;
    let class_p =
        validate_class_p(&pot, 4.0 * grid.r_max.max(pot.r0()), 0.1).map_err(|e| e.to_string());

    let mode = match cfg.mode {
        Mode::Eigen => ModeResult {
            rows: Vec::new(),
            delta: None,
            system: None,
            notes: Vec::new(),
        },
        _ => {
            let offsets = cfg.mu.as_ref().expect("validated").offsets();
            match cfg.mode {
                Mode::Linear => run_linear(&cfg, &op, &spec, &window, &offsets)?,
                Mode::Semilinear => run_semilinear(&cfg, &op, &spec, &window, &offsets)?,
                Mode::System => run_system(&cfg, &op, &spec, &window, &offsets)?,
                Mode::Eigen => unreachable!(),
            }
        }
    };
    let mut rows = mode.rows;
    rows.sort_by(|a, b| a.mu.total_cmp(&b.mu));

    fs::create_dir_all(&output_dir).map_err(|e| CliError::io(&output_dir, e))?;
    let system = mode.system.as_ref().map(|(m, kp, kk, res)| SystemInfo {
        matrix: m,
        lambda_star: m.lambda_star(spec.lambda),
        kappa_prime: *kp,
        k_prime: *kk,
        principal_identity_residual: *res,
    });
    let mut notes = vec![format!(
        "lambda2 is the minimum over angular sectors 0..={}",
        spec.max_sector
    )];
    notes.extend(mode.notes);
    let spectrum_file = SpectrumFile {
        potential: pot.name(),
        grid: GridInfo {
            space_dim: grid.space_dim,
            r_max: grid.r_max,
            n: grid.n,
            h: grid.h,
        },
        spectrum: &spec,
        window: &window,
        window_overridden: overridden,
        delta: mode.delta,
        system,
        class_p,
        spot_check: spot,
        notes,
    };
    write_json(&output_dir.join("spectrum.json"), &spectrum_file)?;
    if cfg.mode != Mode::Eigen {
        write_sweep(&output_dir.join("sweep.csv"), &rows)?;
    }
    if cfg.save_solutions {
        for row in &rows {
            let path = output_dir.join(format!("solution_{:.12e}.csv", row.mu));
            write_solution(&path, grid.radii(), spec.phi(), &row.solution)?;
        }
    }
    let failures = rows.iter().filter(|r| r.cert_failed).count();
    let hash = Sha256::digest(&bytes);
    let config_sha256 = hash.iter().map(|b| format!("{b:02x}")).collect();
    let run_file = RunFile {
        version: env!("CARGO_PKG_VERSION"),
        config: opts.config.display().to_string(),
        config_sha256,
        output_dir: output_dir.display().to_string(),
        grid_scale: opts.grid_scale,
        seed: opts.seed,
        rows: rows.len(),
        certificate_failures: failures,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    write_json(&output_dir.join("run.json"), &run_file)?;
    Ok(RunOutcome {
        output_dir,
        rows: rows.len(),
        certificate_failures: failures,
    })
}
