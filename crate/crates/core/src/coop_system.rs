//! 2×2 cooperative systems LU = μU + AU + F(x, U): spectral algebra of A,
//! the diagonalized fixed-point solve, rectangle certificates and a coupled
//! uniqueness diagnostic.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::groundstate_space::{decompose, x_norm, GroundstateVector, WindowEstimate};
use crate::linear_solver::SOLVE_RESIDUAL_TOL;
use crate::semilinear_solver::{
    brezis_oswald_check, Branch, IterationOptions, Nonlinearity, Start,
};
use crate::spectral::{DiscreteOperator, Resolvent, SpectrumSummary};

/// Tolerance of the algebraic identities checked in [`CoopMatrix::analyze`].
pub const ALGEBRA_TOL: f64 = 1.0e-12;
/// Slack for the sign checks of the coupled identity.
pub const IDENTITY_SLACK: f64 = 1.0e-8;

pub type Mat2 = [[f64; 2]; 2];

fn mat_vec(m: &Mat2, x: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * x[0] + m[0][1] * x[1],
        m[1][0] * x[0] + m[1][1] * x[1],
    ]
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn mat_inv(m: &Mat2) -> Option<Mat2> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ])
}

/// A = [[a, b], [c, d]] with b, c > 0, its eigenvalues ξ₁ > ξ₂ and the basis
/// P = [[b, b], [ξ₁ - a, ξ₂ - a]] of eigenvectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoopMatrix {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub discriminant: f64,
    pub xi1: f64,
    pub xi2: f64,
    /// Principal eigenvector (b, ξ₁ - a), both entries positive.
    pub y: [f64; 2],
    pub p: Mat2,
    pub p_inv: Mat2,
}

impl CoopMatrix {
    pub fn analyze(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        if ![a, b, c, d].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        if !(b > 0.0 && c > 0.0) {
            return Err(Error::NotCooperative { b, c });
        }
        let discriminant = (a - d) * (a - d) + 4.0 * b * c;
        let root = discriminant.sqrt();
        // ξ₁ - a and ξ₂ - a, each in the form free of cancellation
        let y2 = if d >= a {
            0.5 * (d - a + root)
        } else {
            2.0 * b * c / (a - d + root)
        };
        let x2 = if d > a {
            -2.0 * b * c / (d - a + root)
        } else {
            0.5 * (d - a - root)
        };
        let (xi1, xi2) = (a + y2, a + x2);
        let p = [[b, b], [y2, x2]];
        let scale = b * (xi1 - xi2);
        let p_inv = [[-x2 / scale, b / scale], [y2 / scale, -b / scale]];
        let m = Self {
            a,
            b,
            c,
            d,
            discriminant,
            xi1,
            xi2,
            y: [b, y2],
            p,
            p_inv,
        };
        m.verify()?;
        Ok(m)
    }

    pub fn matrix(&self) -> Mat2 {
        [[self.a, self.b], [self.c, self.d]]
    }

    fn verify(&self) -> Result<()> {
        let norm = self.a.abs().max(self.b).max(self.c).max(self.d.abs());
        let ay = mat_vec(&self.matrix(), self.y);
        let scale = norm * self.y[0].max(self.y[1]);
        let eig = (ay[0] - self.xi1 * self.y[0])
            .abs()
            .max((ay[1] - self.xi1 * self.y[1]).abs());
        check("A Y - xi1 Y", eig / scale)?;
        let id = mat_mul(&self.p, &self.p_inv);
        let err = (id[0][0] - 1.0)
            .abs()
            .max((id[1][1] - 1.0).abs())
            .max(id[0][1].abs())
            .max(id[1][0].abs());
        check("P P^-1 - I", err)?;
        let diag = self.diagonalized();
        let off = diag[0][1].abs().max(diag[1][0].abs());
        let dev = (diag[0][0] - self.xi1)
            .abs()
            .max((diag[1][1] - self.xi2).abs());
        check("P^-1 A P - D", off.max(dev) / norm)?;
        if !(self.y[0] > 0.0 && self.y[1] > 0.0) {
            return Err(Error::CheckFailed {
                what: "principal eigenvector sign",
                value: self.y[0].min(self.y[1]),
                tol: 0.0,
            });
        }
        Ok(())
    }

    /// P⁻¹ A P.
    pub fn diagonalized(&self) -> Mat2 {
        mat_mul(&self.p_inv, &mat_mul(&self.matrix(), &self.p))
    }

    /// Λ* = Λ - ξ₁.
    pub fn lambda_star(&self, lambda: f64) -> f64 {
        lambda - self.xi1
    }

    /// Bounds κ′, K′ of the diagonalized data G = P⁻¹F when κφ ≤ f_i ≤ Kφ:
    /// κ′φ ≤ g₁ and |g₁|, |g₂| ≤ K′φ.
    pub fn transformed_bounds(&self, kappa: f64, k_up: f64) -> (f64, f64) {
        let denom = self.b * (self.xi1 - self.xi2);
        let first = (self.a - self.xi2) + self.b;
        let y2 = self.y[1];
        let kappa_prime = first * kappa / denom;
        let k_prime = (first * k_up)
            .max((y2 * k_up - self.b * kappa).abs())
            .max((y2 * kappa - self.b * k_up).abs())
            / denom;
        (kappa_prime, k_prime)
    }
}

fn check(what: &'static str, value: f64) -> Result<()> {
    if value <= ALGEBRA_TOL {
        Ok(())
    } else {
        Err(Error::CheckFailed {
            what,
            value,
            tol: ALGEBRA_TOL,
        })
    }
}

/// Shorthand for [`CoopMatrix::analyze`].
pub fn analyze_matrix(a: f64, b: f64, c: f64, d: f64) -> Result<CoopMatrix> {
    CoopMatrix::analyze(a, b, c, d)
}

/// G = P⁻¹ F nodewise.
pub fn transform_data(m: &CoopMatrix, f1: &[f64], f2: &[f64]) -> (Vec<f64>, Vec<f64>) {
    f1.iter()
        .zip(f2)
        .map(|(x, y)| {
            let g = mat_vec(&m.p_inv, [*x, *y]);
            (g[0], g[1])
        })
        .unzip()
}

/// U = P V nodewise.
pub fn recombine(m: &CoopMatrix, v1: &[f64], v2: &[f64]) -> (Vec<f64>, Vec<f64>) {
    v1.iter()
        .zip(v2)
        .map(|(x, y)| {
            let u = mat_vec(&m.p, [*x, *y]);
            (u[0], u[1])
        })
        .unzip()
}

#[derive(Debug, Clone)]
pub struct SystemProblem<'a> {
    pub op: &'a DiscreteOperator,
    pub spectrum: &'a SpectrumSummary,
    pub window: &'a WindowEstimate,
    pub matrix: &'a CoopMatrix,
    pub nl1: &'a Nonlinearity,
    pub nl2: &'a Nonlinearity,
    pub mu: f64,
}

impl SystemProblem<'_> {
    pub fn lambda_star(&self) -> f64 {
        self.matrix.lambda_star(self.spectrum.lambda)
    }

    /// Λ* - μ.
    pub fn gap(&self) -> f64 {
        self.lambda_star() - self.mu
    }

    /// Common bounds (min κ, max K) of the two components.
    pub fn shared_bounds(&self) -> (f64, f64) {
        (
            self.nl1.kappa().min(self.nl2.kappa()),
            self.nl1.k_up().max(self.nl2.k_up()),
        )
    }

    pub fn transformed_bounds(&self) -> (f64, f64) {
        let (kappa, k_up) = self.shared_bounds();
        self.matrix.transformed_bounds(kappa, k_up)
    }

    /// δ* = min{δ₀, κ′/(2c₀K′), (ξ₁ - ξ₂)/2, λ₂ - Λ}.
    pub fn window(&self) -> f64 {
        let (kp, kk) = self.transformed_bounds();
        self.window
            .delta0
            .min(kp / (2.0 * self.window.c0 * kk))
            .min(0.5 * (self.matrix.xi1 - self.matrix.xi2))
            .min(self.spectrum.lambda2 - self.spectrum.lambda)
    }

    /// 2K′/(ξ₁ - ξ₂) + 2c₀K′.
    pub fn v2_bound(&self) -> f64 {
        let (_, kk) = self.transformed_bounds();
        2.0 * kk / (self.matrix.xi1 - self.matrix.xi2) + 2.0 * self.window.c0 * kk
    }

    pub fn rectangle(&self) -> Result<Rectangle> {
        let (kappa, k_up) = self.shared_bounds();
        Rectangle::new(self.matrix, kappa, k_up, self.gap())
    }

    /// X-norm of (L - A)(Yφ) - Λ*Yφ relative to Λ*‖Y‖.
    pub fn principal_identity_residual(&self) -> f64 {
        let phi = self.spectrum.phi();
        let y = self.matrix.y;
        let a = self.matrix.matrix();
        let lphi = self.op.apply(phi);
        let ls = self.lambda_star();
        let mut worst = 0.0_f64;
        for i in 0..phi.len() {
            let ly = [y[0] * lphi[i], y[1] * lphi[i]];
            let ay = mat_vec(&a, [y[0] * phi[i], y[1] * phi[i]]);
            for k in 0..2 {
                let r = (ly[k] - ay[k] - ls * y[k] * phi[i]) / phi[i];
                worst = worst.max(r.abs());
            }
        }
        worst / (ls.abs().max(1.0) * y[0].max(y[1]))
    }
}

/// Componentwise enclosure of the solutions by multiples of φ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rectangle {
    pub kind: Branch,
    /// Lower bound of u_i/φ per component.
    pub lower_ratio: [f64; 2],
    /// Upper bound of u_i/φ per component.
    pub upper_ratio: [f64; 2],
}

impl Rectangle {
    /// MP: u_i/φ ∈ [κy_i/(max y (Λ*-μ)), Ky_i/(min y (Λ*-μ))]; AMP: the same
    /// numbers with gap < 0, listed in increasing order.
    pub fn new(m: &CoopMatrix, kappa: f64, k_up: f64, gap: f64) -> Result<Self> {
        if gap == 0.0 || !gap.is_finite() {
            return Err(Error::InvalidInput("mu must differ from Lambda*".into()));
        }
        let (ymax, ymin) = (m.y[0].max(m.y[1]), m.y[0].min(m.y[1]));
        let small = [kappa * m.y[0] / (ymax * gap), kappa * m.y[1] / (ymax * gap)];
        let large = [k_up * m.y[0] / (ymin * gap), k_up * m.y[1] / (ymin * gap)];
        if gap > 0.0 {
            Ok(Self {
                kind: Branch::Mp,
                lower_ratio: small,
                upper_ratio: large,
            })
        } else {
            if kappa == 0.0 {
                return Err(Error::HypothesisViolated(
                    "above Lambda* the lower bound kappa must be positive".into(),
                ));
            }
            Ok(Self {
                kind: Branch::Amp,
                lower_ratio: large,
                upper_ratio: small,
            })
        }
    }

    pub fn corner(&self, upper: bool, phi: &[f64]) -> [Vec<f64>; 2] {
        let r = if upper {
            self.upper_ratio
        } else {
            self.lower_ratio
        };
        [0, 1].map(|k| phi.iter().map(|p| r[k] * p).collect())
    }

    /// Clamps both components; counts node values outside by more than rounding.
    pub fn project(&self, u: &mut [Vec<f64>; 2], phi: &[f64]) -> usize {
        let mut violations = 0;
        for (k, comp) in u.iter_mut().enumerate() {
            let (lo, hi) = (self.lower_ratio[k], self.upper_ratio[k]);
            let slack = 1.0e-10 * lo.abs().max(hi.abs());
            for (v, p) in comp.iter_mut().zip(phi) {
                let t = *v / p;
                if t < lo - slack || t > hi + slack {
                    violations += 1;
                }
                *v = p * t.clamp(lo, hi);
            }
        }
        violations
    }

    pub fn contains(&self, u: &[Vec<f64>; 2], phi: &[f64]) -> bool {
        let mut copy = u.clone();
        self.project(&mut copy, phi) == 0
    }
}

struct Diagonalized<'a> {
    first: Resolvent<'a>,
    second: Resolvent<'a>,
}

impl<'a> Diagonalized<'a> {
    fn new(p: &SystemProblem<'a>) -> Result<Self> {
        Ok(Self {
            first: p.op.resolvent(p.mu + p.matrix.xi1)?,
            second: p.op.resolvent(p.mu + p.matrix.xi2)?,
        })
    }

    /// V = (L - μ - D)^{-1} G by two scalar solves.
    fn solve(&self, g1: &[f64], g2: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (v1, v2) = rayon::join(|| self.first.solve(g1), || self.second.solve(g2));
        for (r, v, g) in [(&self.first, &v1, g1), (&self.second, &v2, g2)] {
            let res = r.relative_residual(v, g);
            if !(res <= SOLVE_RESIDUAL_TOL) {
                return Err(Error::CheckFailed {
                    what: "diagonal resolvent residual",
                    value: res,
                    tol: SOLVE_RESIDUAL_TOL,
                });
            }
        }
        Ok((v1, v2))
    }
}

type Pair = [Vec<f64>; 2];

/// Solves (L - μ - A)U = F for given data through the diagonalization.
pub fn solve_linear_system(p: &SystemProblem<'_>, f1: &[f64], f2: &[f64]) -> Result<(Pair, Pair)> {
    let diag = Diagonalized::new(p)?;
    let (g1, g2) = transform_data(p.matrix, f1, f2);
    let (v1, v2) = diag.solve(&g1, &g2)?;
    let (u1, u2) = recombine(p.matrix, &v1, &v2);
    Ok(([u1, u2], [v1, v2]))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoupledIdentity {
    /// BO(u₁, v₁)/b + BO(u₂, v₂)/c from the discrete Laplacian.
    pub t1: f64,
    /// Cross term plus nonlinear term.
    pub t2: f64,
    /// Cross term ∫(u₂/u₁ - v₂/v₁)(u₁² - v₁²) + ∫(u₁/u₂ - v₁/v₂)(u₂² - v₂²).
    pub cross_raw: f64,
    /// The same cross term written as minus two integrals of squares.
    pub cross_sqrt: f64,
    /// ∫(f₁(u₁)/u₁ - f₁(v₁)/v₁)(u₁² - v₁²)/b + ∫(…)/c; zero when no
    /// nonlinearity is supplied.
    pub nonlinear: f64,
}

impl CoupledIdentity {
    pub fn residual(&self) -> f64 {
        self.t1 - self.t2
    }
}

/// Evaluates the coupled identity on two solution pairs U, V whose four
/// components are one-signed. With `nl` the nonlinear term is included.
pub fn coupled_uniqueness_check(
    op: &DiscreteOperator,
    m: &CoopMatrix,
    u: [&[f64]; 2],
    v: [&[f64]; 2],
    nl: Option<(&Nonlinearity, &Nonlinearity, &[f64])>,
) -> Result<CoupledIdentity> {
    let bo1 = brezis_oswald_check(op, u[0], v[0])?;
    let bo2 = brezis_oswald_check(op, u[1], v[1])?;
    for (x, what) in [(u[0], "u1"), (u[1], "u2"), (v[0], "v1"), (v[1], "v2")] {
        let sign = x[0].signum();
        if x.iter().any(|t| t.signum() != sign || *t == 0.0) {
            return Err(Error::SignMixed(what));
        }
    }
    let t1 = bo1.lhs / m.b + bo2.lhs / m.c;
    let n = u[0].len();
    let mut raw = vec![0.0; n];
    let mut sqrt = vec![0.0; n];
    for i in 0..n {
        let (u1, u2, v1, v2) = (u[0][i], u[1][i], v[0][i], v[1][i]);
        raw[i] =
            (u2 / u1 - v2 / v1) * (u1 * u1 - v1 * v1) + (u1 / u2 - v1 / v2) * (u2 * u2 - v2 * v2);
        let (a1, a2, b1, b2) = (u1.abs(), u2.abs(), v1.abs(), v2.abs());
        let s1 = b1 * (a2 / a1).sqrt() - b2 * (a1 / a2).sqrt();
        let s2 = a1 * (b2 / b1).sqrt() - a2 * (b1 / b2).sqrt();
        sqrt[i] = -(s1 * s1) - s2 * s2;
    }
    let grid = op.grid();
    let cross_raw = grid.integrate(&raw);
    let cross_sqrt = grid.integrate(&sqrt);
    let nonlinear = match nl {
        None => 0.0,
        Some((n1, n2, phi)) => {
            let side = |nl: &Nonlinearity, x: &[f64], y: &[f64]| {
                let fx = nl.eval(phi, x);
                let fy = nl.eval(phi, y);
                let integrand: Vec<f64> = (0..n)
                    .map(|i| (fx[i] / x[i] - fy[i] / y[i]) * (x[i] * x[i] - y[i] * y[i]))
                    .collect();
                grid.integrate(&integrand)
            };
            side(n1, u[0], v[0]) / m.b + side(n2, u[1], v[1]) / m.c
        }
    };
    if t1 < -IDENTITY_SLACK {
        return Err(Error::CheckFailed {
            what: "coupled gradient side",
            value: -t1,
            tol: IDENTITY_SLACK,
        });
    }
    if cross_sqrt > IDENTITY_SLACK {
        return Err(Error::CheckFailed {
            what: "coupled cross term",
            value: cross_sqrt,
            tol: IDENTITY_SLACK,
        });
    }
    Ok(CoupledIdentity {
        t1,
        t2: cross_raw + nonlinear,
        cross_raw,
        cross_sqrt,
        nonlinear,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoupledUniqueness {
    /// max over components of the X-distance between the two limits.
    pub two_start_gap: f64,
    pub identity: CoupledIdentity,
}

#[derive(Debug, Clone, Serialize)]
pub struct SystemReport {
    pub mu: f64,
    pub lambda_star: f64,
    pub branch: Branch,
    #[serde(skip)]
    pub u: [GroundstateVector; 2],
    #[serde(skip)]
    pub v: [GroundstateVector; 2],
    pub rectangle: Rectangle,
    pub in_rectangle: bool,
    pub min_ratio: [f64; 2],
    pub max_ratio: [f64; 2],
    pub kappa_prime: f64,
    pub k_prime: f64,
    pub window: f64,
    pub in_window: bool,
    pub v2_bound: f64,
    pub v2_ok: bool,
    /// Both components strictly of the branch sign at every node.
    pub signs_ok: bool,
    pub iterations: usize,
    pub rectangle_violations: usize,
    pub residual_x: f64,
    pub uniqueness: Option<CoupledUniqueness>,
}

impl SystemReport {
    pub fn certified(&self) -> bool {
        !self.in_window
            || (self.in_rectangle && self.v2_ok && self.signs_ok && self.rectangle_violations == 0)
    }
}

/// Damped iteration U ← (1 - θ)U + θ W(U) with W(U) = (L - μ - A)^{-1}F(U)
/// evaluated through the diagonalization, projected into the rectangle.
pub fn solve_system(
    p: &SystemProblem<'_>,
    start: Start,
    opts: &IterationOptions,
) -> Result<SystemReport> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) || opts.max_iter == 0 || !(opts.tol_x > 0.0) {
        return Err(Error::InvalidInput("invalid iteration options".into()));
    }
    let window = p.window();
    let distance = p.gap().abs();
    let in_window = distance < window;
    if opts.require_window && !in_window {
        return Err(Error::WindowViolation { distance, window });
    }
    let rect = p.rectangle()?;
    let phi = p.spectrum.phi();
    let n = phi.len();
    let bound = rect
        .lower_ratio
        .iter()
        .chain(&rect.upper_ratio)
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let u_max = 2.0 * bound * phi.iter().cloned().fold(0.0, f64::max);
    p.nl1.check_hypotheses(n, u_max)?;
    p.nl2.check_hypotheses(n, u_max)?;

    let diag = Diagonalized::new(p)?;
    let map = |u: &[Vec<f64>; 2]| -> Result<[Vec<f64>; 2]> {
        let f1 = p.nl1.eval(phi, &u[0]);
        let f2 = p.nl2.eval(phi, &u[1]);
        let (g1, g2) = transform_data(p.matrix, &f1, &f2);
        let (v1, v2) = diag.solve(&g1, &g2)?;
        let (u1, u2) = recombine(p.matrix, &v1, &v2);
        Ok([u1, u2])
    };
    let mut u = match start {
        Start::Lower => rect.corner(false, phi),
        Start::Upper => rect.corner(true, phi),
        Start::Custom(v) => {
            if v.len() != 2 * n {
                return Err(Error::InvalidInput(
                    "custom system start must hold both components".into(),
                ));
            }
            [v[..n].to_vec(), v[n..].to_vec()]
        }
    };
    let mut violations_total = rect.project(&mut u, phi);
    let limit = (opts.max_violation_fraction * (2 * n) as f64).floor() as usize;
    let theta = opts.damping;
    let mut iterations = 0;
    let mut converged = false;
    let mut last_step = f64::NAN;
    while iterations < opts.max_iter {
        iterations += 1;
        let w = map(&u)?;
        let mut next = [0, 1].map(|k| {
            u[k].iter()
                .zip(&w[k])
                .map(|(a, b)| (1.0 - theta) * a + theta * b)
                .collect::<Vec<f64>>()
        });
        let violations = rect.project(&mut next, phi);
        if violations > limit {
            return Err(Error::RectangleEscape {
                iteration: iterations,
                violations,
                nodes: 2 * n,
            });
        }
        violations_total += violations;
        last_step = (0..2)
            .map(|k| {
                let d: Vec<f64> = next[k].iter().zip(&u[k]).map(|(a, b)| a - b).collect();
                x_norm(&d, phi)
            })
            .fold(0.0, f64::max);
        u = next;
        if last_step < opts.tol_x {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: opts.max_iter,
            last_step,
        });
    }
    let w = map(&u)?;
    let residual_x = (0..2)
        .map(|k| {
            let d: Vec<f64> = w[k].iter().zip(&u[k]).map(|(a, b)| a - b).collect();
            x_norm(&d, phi)
        })
        .fold(0.0, f64::max);
    // diagonal components of the returned iterate
    let (v1, v2) = transform_data(p.matrix, &u[0], &u[1]);
    let gs = &p.spectrum.groundstate;
    let ranges = [gs.ratio_range(&u[0]), gs.ratio_range(&u[1])];
    let min_ratio = [ranges[0].0, ranges[1].0];
    let max_ratio = [ranges[0].1, ranges[1].1];
    let signs_ok = match rect.kind {
        Branch::Mp => min_ratio.iter().all(|r| *r > 0.0),
        Branch::Amp => max_ratio.iter().all(|r| *r < 0.0),
    };
    let in_rectangle = rect.contains(&u, phi);
    let v_parts = [decompose(&v1, gs), decompose(&v2, gs)];
    let v2_bound = p.v2_bound();
    let v2_ok = v_parts[1].x_norm <= v2_bound;
    let (kappa_prime, k_prime) = p.transformed_bounds();
    Ok(SystemReport {
        mu: p.mu,
        lambda_star: p.lambda_star(),
        branch: rect.kind,
        u: [decompose(&u[0], gs), decompose(&u[1], gs)],
        v: v_parts,
        rectangle: rect,
        in_rectangle,
        min_ratio,
        max_ratio,
        kappa_prime,
        k_prime,
        window,
        in_window,
        v2_bound,
        v2_ok,
        signs_ok,
        iterations,
        rectangle_violations: violations_total,
        residual_x,
        uniqueness: None,
    })
}

/// Solves from both rectangle corners and attaches the coupled diagnostics to
/// the report of the lower start.
pub fn solve_system_with_uniqueness(
    p: &SystemProblem<'_>,
    opts: &IterationOptions,
) -> Result<SystemReport> {
    let (low, high) = rayon::join(
        || solve_system(p, Start::Lower, opts),
        || solve_system(p, Start::Upper, opts),
    );
    let (mut low, high) = (low?, high?);
    let phi = p.spectrum.phi();
    let two_start_gap = (0..2)
        .map(|k| {
            let d: Vec<f64> = low.u[k]
                .values
                .iter()
                .zip(&high.u[k].values)
                .map(|(a, b)| a - b)
                .collect();
            x_norm(&d, phi)
        })
        .fold(0.0, f64::max);
    let identity = coupled_uniqueness_check(
        p.op,
        p.matrix,
        [&low.u[0].values, &low.u[1].values],
        [&high.u[0].values, &high.u[1].values],
        Some((p.nl1, p.nl2, phi)),
    )?;
    low.uniqueness = Some(CoupledUniqueness {
        two_start_gap,
        identity,
    });
    Ok(low)
}

/// Direct solve of (L - μ - A)U = F as a block-tridiagonal system with 2×2
/// blocks (block Thomas elimination in w-variables).
pub fn block_solve(
    op: &DiscreteOperator,
    m: &CoopMatrix,
    mu: f64,
    f1: &[f64],
    f2: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = op.matrix();
    let n = t.len();
    let r1 = op.to_w(f1);
    let r2 = op.to_w(f2);
    let block = |i: usize| -> Mat2 { [[t.diag[i] - mu - m.a, -m.b], [-m.c, t.diag[i] - mu - m.d]] };
    let singular = || Error::SingularResolvent { mu, tol: 0.0 };
    let mut cprime: Vec<Mat2> = Vec::with_capacity(n);
    let mut yprime: Vec<[f64; 2]> = Vec::with_capacity(n);
    for i in 0..n {
        let mut dblk = block(i);
        let mut rhs = [r1[i], r2[i]];
        if i > 0 {
            let e = t.off[i - 1];
            let c = cprime[i - 1];
            for a in 0..2 {
                for b in 0..2 {
                    dblk[a][b] -= e * c[a][b];
                }
                rhs[a] -= e * yprime[i - 1][a];
            }
        }
        let inv = mat_inv(&dblk).ok_or_else(singular)?;
        let e_next = if i + 1 < n { t.off[i] } else { 0.0 };
        cprime.push([
            [inv[0][0] * e_next, inv[0][1] * e_next],
            [inv[1][0] * e_next, inv[1][1] * e_next],
        ]);
        yprime.push(mat_vec(&inv, rhs));
    }
    let mut x = vec![[0.0; 2]; n];
    x[n - 1] = yprime[n - 1];
    for i in (0..n - 1).rev() {
        let cx = mat_vec(&cprime[i], x[i + 1]);
        x[i] = [yprime[i][0] - cx[0], yprime[i][1] - cx[1]];
    }
    let w1: Vec<f64> = x.iter().map(|v| v[0]).collect();
    let w2: Vec<f64> = x.iter().map(|v| v[1]).collect();
    Ok((op.from_w(&w1), op.from_w(&w2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundstate_space::estimate_c0_delta0;
    use crate::radial_grid::{Grid, RadialPotential};
    use crate::spectral::compute_spectrum;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn closed_form_matrices() {
        let m = CoopMatrix::analyze(0.0, 1.0, 4.0, 0.0).unwrap();
        assert!(close(m.xi1, 2.0) && close(m.xi2, -2.0));
        assert!(close(m.y[0], 1.0) && close(m.y[1], 2.0));
        let m = CoopMatrix::analyze(1.0, 2.0, 3.0, 2.0).unwrap();
        assert!(close(m.discriminant, 25.0) && close(m.xi1, 4.0) && close(m.xi2, -1.0));
        assert!(close(m.y[0], 2.0) && close(m.y[1], 3.0));
        let m = CoopMatrix::analyze(0.5, 1.0, 1.0, 0.5).unwrap();
        assert!(close(m.xi1, 1.5) && close(m.y[0], m.y[1]));
    }

    #[test]
    fn diagonalization_identities() {
        for (a, b, c, d) in [
            (0.0, 1.0, 4.0, 0.0),
            (1.0, 2.0, 3.0, 2.0),
            (-3.0, 0.01, 5.0, 7.0),
            (9.0, 1e-3, 1e-3, -2.0),
        ] {
            let m = CoopMatrix::analyze(a, b, c, d).unwrap();
            let dm = m.diagonalized();
            assert!(dm[0][1].abs() < 1e-12 * m.xi1.abs().max(1.0));
            assert!(m.y[0] > 0.0 && m.y[1] > 0.0);
            assert!(m.xi1 > m.xi2);
        }
    }

    #[test]
    fn non_cooperative_rejected() {
        assert!(matches!(
            CoopMatrix::analyze(0.0, 0.0, 1.0, 0.0),
            Err(Error::NotCooperative { .. })
        ));
        assert!(matches!(
            CoopMatrix::analyze(0.0, 1.0, -1.0, 0.0),
            Err(Error::NotCooperative { .. })
        ));
    }

    #[test]
    fn transformed_data_examples() {
        let m = CoopMatrix::analyze(0.0, 1.0, 4.0, 0.0).unwrap();
        let (g1, g2) = transform_data(&m, &[1.0, 2.0], &[1.0, 2.0]);
        assert!(close(g1[0], 0.75) && close(g1[1], 1.5));
        assert!(close(g2[0], 0.25));
        let (kp, kk) = m.transformed_bounds(1.0, 1.0);
        assert!(close(kp, 0.75) && kk >= 0.75);
        // F = Y gives G = (1, 0)
        let (g1, g2) = transform_data(&m, &[m.y[0]], &[m.y[1]]);
        assert!(close(g1[0], 1.0) && g2[0].abs() < 1e-15);
        // the bounds hold on the corners of the data box
        let m = CoopMatrix::analyze(1.0, 2.0, 3.0, 2.0).unwrap();
        let (kp, kk) = m.transformed_bounds(1.0, 2.0);
        for f in [[1.0, 1.0], [1.0, 2.0], [2.0, 1.0], [2.0, 2.0]] {
            let (g1, g2) = transform_data(&m, &[f[0]], &[f[1]]);
            assert!(g1[0] >= kp - 1e-12 && g1[0].abs() <= kk + 1e-12 && g2[0].abs() <= kk + 1e-12);
        }
    }

    #[test]
    fn rectangle_scales_inversely_with_gap() {
        let m = CoopMatrix::analyze(0.0, 1.0, 4.0, 0.0).unwrap();
        let a = Rectangle::new(&m, 1.0, 2.0, 0.1).unwrap();
        let b = Rectangle::new(&m, 1.0, 2.0, 0.05).unwrap();
        for k in 0..2 {
            assert_eq!(b.lower_ratio[k], 2.0 * a.lower_ratio[k]);
            assert_eq!(b.upper_ratio[k], 2.0 * a.upper_ratio[k]);
        }
        assert!(close(a.lower_ratio[0], 5.0) && close(a.upper_ratio[1], 40.0));
        let amp = Rectangle::new(&m, 1.0, 2.0, -0.1).unwrap();
        assert_eq!(amp.kind, Branch::Amp);
        assert!(amp.lower_ratio[0] < amp.upper_ratio[0] && amp.upper_ratio[1] < 0.0);
    }

    struct Setup {
        op: DiscreteOperator,
        spec: SpectrumSummary,
        window: WindowEstimate,
        matrix: CoopMatrix,
    }

    fn setup() -> Setup {
        let grid = Grid::uniform(3, 3.0, 300).unwrap();
        let pot = RadialPotential::power(1.0, 4.0).unwrap();
        let (op, spec) = compute_spectrum(&grid, &pot, 6).unwrap();
        let window = estimate_c0_delta0(&spec, &op, 0.5).unwrap();
        let matrix = CoopMatrix::analyze(0.0, 1.0, 4.0, 0.0).unwrap();
        Setup {
            op,
            spec,
            window,
            matrix,
        }
    }

    impl Setup {
        fn problem<'a>(
            &'a self,
            nl1: &'a Nonlinearity,
            nl2: &'a Nonlinearity,
            offset: f64,
        ) -> SystemProblem<'a> {
            SystemProblem {
                op: &self.op,
                spectrum: &self.spec,
                window: &self.window,
                matrix: &self.matrix,
                nl1,
                nl2,
                mu: self.matrix.lambda_star(self.spec.lambda) + offset,
            }
        }
    }

    #[test]
    fn principal_direction_is_an_eigenvector() {
        let s = setup();
        let (n1, n2) = (
            Nonlinearity::constant(1.0).unwrap(),
            Nonlinearity::constant(2.0).unwrap(),
        );
        let p = s.problem(&n1, &n2, -0.1);
        assert!(p.principal_identity_residual() < 1e-8);
        let r = solve_system(&p, Start::Lower, &IterationOptions::default()).unwrap();
        let phi = s.spec.phi();
        for k in 0..2 {
            let d: Vec<f64> = r.u[k]
                .values
                .iter()
                .zip(phi)
                .map(|(u, f)| u - 10.0 * s.matrix.y[k] * f)
                .collect();
            assert!(x_norm(&d, phi) < 1e-6);
        }
        assert!(r.v[1].x_norm < 1e-8);
    }

    #[test]
    fn constant_data_against_block_solve() {
        let s = setup();
        let one = Nonlinearity::constant(1.0).unwrap();
        let p = s.problem(&one, &one, -0.1);
        let phi = s.spec.phi();
        let (u, v) = solve_linear_system(&p, phi, phi).unwrap();
        let (b1, b2) = block_solve(&s.op, &s.matrix, p.mu, phi, phi).unwrap();
        for (x, y) in [(&u[0], &b1), (&u[1], &b2)] {
            let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            assert!(x_norm(&d, phi) < 1e-8);
        }
        // v1 = 0.75 φ/(Λ* - μ)
        let d: Vec<f64> = v[0].iter().zip(phi).map(|(a, f)| a - 7.5 * f).collect();
        assert!(x_norm(&d, phi) < 1e-6);
        let r = solve_system(&p, Start::Lower, &IterationOptions::default()).unwrap();
        assert!(r.in_rectangle && r.certified());
    }

    #[test]
    fn rational_system_both_branches() {
        let s = setup();
        let nl = Nonlinearity::rational(1.0, 2.0).unwrap();
        for offset in [-0.1, 0.05] {
            let p = s.problem(&nl, &nl, offset);
            let r = solve_system_with_uniqueness(&p, &IterationOptions::default()).unwrap();
            assert!(r.in_rectangle && r.signs_ok && r.v2_ok, "{r:?}");
            assert_eq!(r.rectangle_violations, 0);
            let u = r.uniqueness.unwrap();
            assert!(u.two_start_gap < 1e-7);
            assert!(u.identity.cross_sqrt <= 1e-8);
            assert!((u.identity.cross_raw - u.identity.cross_sqrt).abs() < 1e-8);
        }
    }

    #[test]
    fn cross_term_forms_agree_for_perturbed_pairs() {
        let s = setup();
        let phi = s.spec.phi();
        let r = s.op.grid().radii();
        let y = s.matrix.y;
        let u1: Vec<f64> = phi.iter().map(|p| y[0] * p).collect();
        let u2: Vec<f64> = phi.iter().map(|p| y[1] * p).collect();
        let v1: Vec<f64> = phi
            .iter()
            .zip(r)
            .map(|(p, x)| y[0] * p * (1.0 + 0.2 * x.sin()))
            .collect();
        let v2: Vec<f64> = phi
            .iter()
            .zip(r)
            .map(|(p, x)| y[1] * p * (1.0 + 0.1 * x * x))
            .collect();
        let id = coupled_uniqueness_check(&s.op, &s.matrix, [&u1, &u2], [&v1, &v2], None).unwrap();
        assert!(id.t1 >= 0.0 && id.cross_sqrt < 0.0);
        assert!((id.cross_raw - id.cross_sqrt).abs() < 1e-10 * id.cross_sqrt.abs());
        let twice: [Vec<f64>; 2] = [
            u1.iter().map(|x| 2.0 * x).collect(),
            u2.iter().map(|x| 2.0 * x).collect(),
        ];
        let id =
            coupled_uniqueness_check(&s.op, &s.matrix, [&u1, &u2], [&twice[0], &twice[1]], None)
                .unwrap();
        assert!(id.t1.abs() < 1e-8 && id.cross_sqrt.abs() < 1e-8);
        let mut bad = u1.clone();
        bad[0] = -1.0;
        assert!(matches!(
            coupled_uniqueness_check(&s.op, &s.matrix, [&bad, &u2], [&v1, &v2], None),
            Err(Error::SignMixed(_))
        ));
    }

    #[test]
    fn window_includes_all_four_constraints() {
        let s = setup();
        let nl = Nonlinearity::rational(1.0, 2.0).unwrap();
        let p = s.problem(&nl, &nl, -0.1);
        let (kp, kk) = p.transformed_bounds();
        let w = p.window();
        assert!(w <= s.window.delta0 && w <= kp / (2.0 * s.window.c0 * kk) && w <= 2.0);
        let far = s.problem(&nl, &nl, -2.0 * w);
        assert!(matches!(
            solve_system(&far, Start::Lower, &IterationOptions::default()),
            Err(Error::WindowViolation { .. })
        ));
    }
}
