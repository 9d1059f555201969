//! Acceptance suite: one PASS/FAIL line per criterion.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use gsp_core::coop_system::{
    analyze_matrix, block_solve, solve_linear_system, solve_system, solve_system_with_uniqueness,
    CoopMatrix, SystemProblem,
};
use gsp_core::groundstate_space::{estimate_c0_delta0, x_norm, WindowEstimate};
use gsp_core::linear_solver::{certify_theorem1, solve_linear, LinearProblem, SignClaim};
use gsp_core::radial_grid::{build_grid, Grid, RadialPotential};
use gsp_core::semilinear_solver::{
    brezis_oswald_check, monotone_solve, solve_with_uniqueness, Branch, IterationOptions,
    Nonlinearity, SemilinearProblem, Start, ORDER_TOL,
};
use gsp_core::spectral::{compute_spectrum, DiscreteOperator, SpectrumSummary};

type Outcome = Result<String, String>;

struct Quartic {
    op: DiscreteOperator,
    spec: SpectrumSummary,
    window: WindowEstimate,
}

fn quartic() -> Quartic {
    let pot = RadialPotential::power(1.0, 4.0).unwrap();
    let grid = build_grid(&pot, 3, 20.0, 200.0).unwrap();
    let (op, spec) = compute_spectrum(&grid, &pot, 8).unwrap();
    let window = estimate_c0_delta0(&spec, &op, 0.5).unwrap();
    Quartic { op, spec, window }
}

fn dist(a: &[f64], b: &[f64], scale: f64, phi: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - scale * y).collect();
    x_norm(&d, phi)
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let line = Grid::uniform(1, 8.0, 2000).map_err(|e| e.to_string())?;
    let pot = RadialPotential::pure_power(2.0).map_err(|e| e.to_string())?;
    let (_, s1) = compute_spectrum(&line, &pot, 2).map_err(|e| e.to_string())?;
    let ball = Grid::uniform(3, 8.0, 2000).map_err(|e| e.to_string())?;
    let (_, s3) = compute_spectrum(&ball, &pot, 4).map_err(|e| e.to_string())?;
    let detail = format!(
        "N=1: Lambda={:.6} lambda2={:.6} (sector {}); N=3: Lambda={:.6} lambda2={:.6} (l={})",
        s1.lambda, s1.lambda2, s1.lambda2_sector, s3.lambda, s3.lambda2, s3.lambda2_sector
    );
    ensure(
        (s1.lambda - 1.0).abs() <= 1e-3
            && (s1.lambda2 - 3.0).abs() <= 1e-3
            && s1.lambda2_sector == 1
            && (s3.lambda - 3.0).abs() <= 1e-3
            && (s3.lambda2 - 5.0).abs() <= 1e-3
            && s3.lambda2_sector == 1,
        detail,
    )
}

fn criterion_2(q: &Quartic) -> Outcome {
    let phi = q.spec.phi();
    let mut worst = 0.0_f64;
    for offset in [-0.1, 0.1] {
        let p = LinearProblem::new(&q.op, &q.spec, q.spec.lambda + offset, phi.to_vec())
            .map_err(|e| e.to_string())?;
        let u = solve_linear(&p).map_err(|e| e.to_string())?;
        let target = 1.0 / (q.spec.lambda - p.mu);
        worst = worst.max(dist(&u.values, phi, target, phi));
    }
    ensure(
        worst <= 1e-6,
        format!("max ||u -+ 10 phi||_X = {worst:.3e}"),
    )
}

fn criterion_3(q: &Quartic) -> Outcome {
    let (_, phi2) = q.op.eigenpair(1).map_err(|e| e.to_string())?;
    let phi = q.spec.phi();
    let f: Vec<f64> = phi.iter().zip(&phi2).map(|(a, b)| a + 0.5 * b).collect();
    let probe = LinearProblem::new(&q.op, &q.spec, q.spec.lambda - 1e-3, f.clone())
        .map_err(|e| e.to_string())?;
    let window = certify_theorem1(&probe, &q.window)
        .map_err(|e| e.to_string())?
        .window_used;
    let mut checked = 0;
    let mut failures = Vec::new();
    for side in [-1.0, 1.0] {
        for k in 1..=8 {
            let mu = q.spec.lambda + side * window * k as f64 / 9.0;
            let p = LinearProblem::new(&q.op, &q.spec, mu, f.clone()).map_err(|e| e.to_string())?;
            let c = certify_theorem1(&p, &q.window).map_err(|e| e.to_string())?;
            let want = if side < 0.0 {
                SignClaim::Gsp
            } else {
                SignClaim::Gsn
            };
            let slack = c.c0 * c.f_perp_x;
            let base = c.f1 / p.gap();
            let pointwise = if side < 0.0 {
                c.min_ratio >= base - slack
            } else {
                c.max_ratio <= base + slack
            };
            if c.in_window && c.claim == Some(want) && c.verified && pointwise {
                checked += 1;
            } else {
                failures.push(format!("mu-Lambda={:.3e}", mu - q.spec.lambda));
            }
        }
    }
    ensure(
        failures.is_empty(),
        format!("window={window:.4e}, {checked}/16 certificates hold {failures:?}"),
    )
}

fn semilinear<'a>(q: &'a Quartic, nl: &'a Nonlinearity, offset: f64) -> SemilinearProblem<'a> {
    SemilinearProblem {
        op: &q.op,
        spectrum: &q.spec,
        window: &q.window,
        nl,
        mu: q.spec.lambda + offset,
    }
}

fn criterion_4(q: &Quartic) -> Outcome {
    let nl = Nonlinearity::rational(1.0, 2.0).map_err(|e| e.to_string())?;
    let opts = IterationOptions {
        tol_x: 1e-9,
        ..Default::default()
    };
    let mut lines = Vec::new();
    let mut ok = true;
    for (offset, branch) in [(-0.1, Branch::Mp), (0.05, Branch::Amp)] {
        let p = semilinear(q, &nl, offset);
        let r = solve_with_uniqueness(&p, &opts).map_err(|e| e.to_string())?;
        let kappa = nl.kappa() / p.gap();
        let bound = nl.k_up() / p.gap().abs() + 2.0 * q.window.c0 * nl.k_up() * (1.0 + 1e-3);
        let sign = match branch {
            Branch::Mp => r.min_ratio >= kappa * (1.0 - 1e-6),
            Branch::Amp => r.max_ratio <= kappa * (1.0 - 1e-6),
        };
        let window = p.window();
        ok &= r.branch == branch
            && offset.abs() < window
            && r.iterations < 500
            && r.bracket_violations == 0
            && r.solution.x_norm <= bound
            && sign;
        lines.push(format!(
            "{branch:?}: window={window:.3} iters={} violations={} |u|_X={:.4} bound={:.4} ratio=[{:.4},{:.4}]",
            r.iterations, r.bracket_violations, r.solution.x_norm, bound, r.min_ratio, r.max_ratio
        ));
    }
    ensure(ok, lines.join("; "))
}

fn criterion_5(q: &Quartic) -> Outcome {
    let nl = Nonlinearity::rational(1.0, 2.0).map_err(|e| e.to_string())?;
    let opts = IterationOptions::default();
    let mut ok = true;
    let mut lines = Vec::new();
    for offset in [-0.1, 0.05] {
        let p = semilinear(q, &nl, offset);
        let lo = gsp_core::semilinear_solver::solve_semilinear(&p, Start::Lower, &opts)
            .map_err(|e| e.to_string())?;
        let hi = gsp_core::semilinear_solver::solve_semilinear(&p, Start::Upper, &opts)
            .map_err(|e| e.to_string())?;
        let gap = dist(&lo.solution.values, &hi.solution.values, 1.0, q.spec.phi());
        let bo = brezis_oswald_check(&q.op, &lo.solution.values, &hi.solution.values)
            .map_err(|e| e.to_string())?;
        ok &= gap <= 1e-7 && bo.lhs.abs() <= 1e-8 && bo.gradient.abs() <= 1e-8;
        lines.push(format!(
            "offset {offset}: two-start gap={gap:.2e} BO lhs={:.2e} grad={:.2e}",
            bo.lhs, bo.gradient
        ));
    }
    let p = semilinear(q, &nl, -0.1);
    let mono_opts = IterationOptions {
        tol_x: 1e-11,
        max_iter: 20_000,
        ..Default::default()
    };
    let m = monotone_solve(&p, None, &mono_opts).map_err(|e| e.to_string())?;
    ok &= m.max_order_defect <= ORDER_TOL;
    lines.push(format!(
        "monotone: shift={:.3} order defect={:.2e} gap={:.2e}",
        m.shift, m.max_order_defect, m.gap
    ));

    let pot = RadialPotential::power(1.0, 4.0).map_err(|e| e.to_string())?;
    let identity_gap = |n: usize| -> Result<f64, String> {
        let grid = Grid::uniform(3, 3.0, n).map_err(|e| e.to_string())?;
        let (op, spec) = compute_spectrum(&grid, &pot, 4).map_err(|e| e.to_string())?;
        let phi = spec.phi();
        let v: Vec<f64> = phi
            .iter()
            .zip(grid.radii())
            .map(|(p, r)| p * (1.0 + 0.1 * r * r))
            .collect();
        Ok(brezis_oswald_check(&op, phi, &v)
            .map_err(|e| e.to_string())?
            .gap
            .abs())
    };
    let (coarse, fine) = (identity_gap(200)?, identity_gap(401)?);
    ok &= fine <= 0.5 * coarse;
    lines.push(format!("identity gap h: {coarse:.3e}, h/2: {fine:.3e}"));
    ensure(ok, lines.join("; "))
}

fn criterion_6() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
    let mut ok = true;
    let mut lines = Vec::new();
    for ((a, b, c, d), xi1, y) in [
        ((0.0, 1.0, 4.0, 0.0), 2.0, [1.0, 2.0]),
        ((1.0, 2.0, 3.0, 2.0), 4.0, [2.0, 3.0]),
    ] {
        let m = analyze_matrix(a, b, c, d).map_err(|e| e.to_string())?;
        let mut pp = 0.0_f64;
        for i in 0..2 {
            for j in 0..2 {
                let e: f64 = (0..2).map(|k| m.p[i][k] * m.p_inv[k][j]).sum();
                pp = pp.max((e - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        let dm = m.diagonalized();
        let off = dm[0][1].abs().max(dm[1][0].abs());
        ok &= close(m.xi1, xi1)
            && close(m.y[0], y[0])
            && close(m.y[1], y[1])
            && pp <= 1e-12
            && off <= 1e-12;
        lines.push(format!(
            "xi1={} Y=({}, {}) |PP^-1 - I|={pp:.1e} offdiag={off:.1e}",
            m.xi1, m.y[0], m.y[1]
        ));
    }
    ensure(ok, lines.join("; "))
}

fn system<'a>(
    q: &'a Quartic,
    m: &'a CoopMatrix,
    nl1: &'a Nonlinearity,
    nl2: &'a Nonlinearity,
    offset: f64,
) -> SystemProblem<'a> {
    SystemProblem {
        op: &q.op,
        spectrum: &q.spec,
        window: &q.window,
        matrix: m,
        nl1,
        nl2,
        mu: m.lambda_star(q.spec.lambda) + offset,
    }
}

fn criterion_7(q: &Quartic) -> Outcome {
    let m = CoopMatrix::analyze(0.0, 1.0, 4.0, 0.0).map_err(|e| e.to_string())?;
    let n1 = Nonlinearity::constant(m.y[0]).map_err(|e| e.to_string())?;
    let n2 = Nonlinearity::constant(m.y[1]).map_err(|e| e.to_string())?;
    let p = system(q, &m, &n1, &n2, -0.1);
    let phi = q.spec.phi();
    let r =
        solve_system(&p, Start::Lower, &IterationOptions::default()).map_err(|e| e.to_string())?;
    let f1: Vec<f64> = phi.iter().map(|x| m.y[0] * x).collect();
    let f2: Vec<f64> = phi.iter().map(|x| m.y[1] * x).collect();
    let (direct, _) = solve_linear_system(&p, &f1, &f2).map_err(|e| e.to_string())?;
    let mut worst = 0.0_f64;
    for (k, d) in direct.iter().enumerate() {
        worst = worst.max(dist(&r.u[k].values, phi, 10.0 * m.y[k], phi));
        worst = worst.max(dist(d, phi, 10.0 * m.y[k], phi));
    }
    ensure(
        worst <= 1e-6,
        format!("max_k ||U_k - 10 Y_k phi||_X = {worst:.3e}"),
    )
}

fn criterion_8(q: &Quartic) -> Outcome {
    let m = CoopMatrix::analyze(0.0, 1.0, 4.0, 0.0).map_err(|e| e.to_string())?;
    let nl = Nonlinearity::rational(1.0, 2.0).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut lines = Vec::new();
    for offset in [-0.1, -0.05, 0.05, 0.1] {
        let p = system(q, &m, &nl, &nl, offset);
        let r = solve_system_with_uniqueness(&p, &IterationOptions::default())
            .map_err(|e| e.to_string())?;
        let u = r.uniqueness.ok_or("no uniqueness diagnostics")?;
        let contained = r.rectangle.contains(
            &[r.u[0].values.clone(), r.u[1].values.clone()],
            q.spec.phi(),
        );
        let v2 = r.v[1].x_norm;
        let cross = u.identity.cross_raw.abs().max(u.identity.cross_sqrt.abs());
        ok &= r.in_window
            && contained
            && r.in_rectangle
            && v2 <= p.v2_bound()
            && u.two_start_gap <= 1e-7
            && cross <= 1e-8;
        lines.push(format!(
            "{offset:+}: {:?} rect={contained} |v2|_X={v2:.3e}<= {:.3} gap={:.1e} cross={cross:.1e}",
            r.branch,
            p.v2_bound(),
            u.two_start_gap
        ));
    }
    ensure(ok, lines.join("; "))
}

fn criterion_9(q: &Quartic) -> Outcome {
    let m = CoopMatrix::analyze(0.0, 1.0, 4.0, 0.0).map_err(|e| e.to_string())?;
    let radii = q.op.grid().radii().to_vec();
    let r_max = q.op.grid().r_max;
    let profile = move |scale: f64| {
        let radii = radii.clone();
        move |i: usize, _u: f64| 1.0 + scale * (radii[i] / r_max)
    };
    let n1 =
        Nonlinearity::new("data 1", 1.0, 1.5, false, profile(0.5)).map_err(|e| e.to_string())?;
    let n2 =
        Nonlinearity::new("data 2", 1.0, 1.25, false, profile(0.25)).map_err(|e| e.to_string())?;
    let phi = q.spec.phi();
    let opts = IterationOptions {
        damping: 1.0,
        tol_x: 1e-11,
        ..Default::default()
    };
    let mut worst = 0.0_f64;
    for offset in [-0.1, 0.1] {
        let p = system(q, &m, &n1, &n2, offset);
        let r = solve_system(&p, Start::Lower, &opts).map_err(|e| e.to_string())?;
        let zero = vec![0.0; phi.len()];
        let f1 = n1.eval(phi, &zero);
        let f2 = n2.eval(phi, &zero);
        let (b1, b2) = block_solve(&q.op, &m, p.mu, &f1, &f2).map_err(|e| e.to_string())?;
        worst = worst.max(dist(&r.u[0].values, &b1, 1.0, phi));
        worst = worst.max(dist(&r.u[1].values, &b2, 1.0, phi));
    }
    ensure(
        worst <= 1e-8,
        format!("max_k ||U_k - U_k^block||_X = {worst:.3e}"),
    )
}

fn run_cli(config: &Path, out: &Path) -> Result<i32, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_gsp"))
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    status
        .status
        .code()
        .ok_or_else(|| "terminated by signal".to_string())
}

fn criterion_10() -> Outcome {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let golden = data.join("linear_groundstate.json");
    let codes = (run_cli(&golden, &a)?, run_cli(&golden, &b)?);
    let mut identical = true;
    for file in ["sweep.csv", "spectrum.json"] {
        let x = fs::read(a.join(file)).map_err(|e| e.to_string())?;
        let y = fs::read(b.join(file)).map_err(|e| e.to_string())?;
        identical &= x == y;
    }
    let crafted = [
        ("bad_offset.json", 2),
        ("singular.json", 3),
        ("bad_c0.json", 4),
    ];
    let mut got = Vec::new();
    for (name, _) in crafted {
        got.push(run_cli(&data.join(name), &tmp.path().join(name))?);
    }
    let expected: Vec<i32> = crafted.iter().map(|c| c.1).collect();
    ensure(
        codes == (0, 0) && identical && got == expected,
        format!("golden exits {codes:?}, identical={identical}, crafted exits {got:?} (want {expected:?})"),
    )
}

fn main() {
    let start = Instant::now();
    let q = quartic();
    println!(
        "setup: q = 1 + r^4, N = 3, n = {}, Lambda = {:.6}, lambda2 = {:.6}, delta0 = {:.4}, c0 = {:.4} ({:.2}s)",
        q.op.len(),
        q.spec.lambda,
        q.spec.lambda2,
        q.window.delta0,
        q.window.c0,
        start.elapsed().as_secs_f64()
    );
    let criteria: Vec<(usize, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, Box::new(criterion_1)),
        (2, Box::new(|| criterion_2(&q))),
        (3, Box::new(|| criterion_3(&q))),
        (4, Box::new(|| criterion_4(&q))),
        (5, Box::new(|| criterion_5(&q))),
        (6, Box::new(criterion_6)),
        (7, Box::new(|| criterion_7(&q))),
        (8, Box::new(|| criterion_8(&q))),
        (9, Box::new(|| criterion_9(&q))),
        (10, Box::new(criterion_10)),
    ];
    let mut failed = 0;
    for (k, check) in criteria {
        let t = Instant::now();
        let outcome = check();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {k}: PASS {detail} ({secs:.2}s)"),
            Err(detail) => {
                failed += 1;
                println!("criterion {k}: FAIL {detail} ({secs:.2}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
