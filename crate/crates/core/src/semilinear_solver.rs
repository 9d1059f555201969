//! Semilinear problems (L - μ)u = f(x, u) with f trapped between κφ and Kφ:
//! bracketed fixed-point iteration, a monotone variant below Λ, and discrete
//! uniqueness diagnostics based on the Picone/Brezis–Oswald identity.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::groundstate_space::{decompose, x_norm, Groundstate, GroundstateVector, WindowEstimate};
use crate::linear_solver::SOLVE_RESIDUAL_TOL;
use crate::spectral::{DiscreteOperator, Resolvent, SpectrumSummary};

/// Nodes sampled when checking the hypotheses of a nonlinearity.
pub const LATTICE_NODES: usize = 64;
/// Values sampled per node, log-spaced.
pub const LATTICE_VALUES: usize = 64;
/// Factor applied to the sampled Lipschitz constant.
pub const LIPSCHITZ_INFLATION: f64 = 1.5;
/// Tolerated ordering defect of monotone iterates, relative to their size.
pub const ORDER_TOL: f64 = 1.0e-10;
/// Recorded on every report: which constant sets the u-dependent window.
pub const WINDOW_NOTE: &str =
    "window uses kappa/(2 c0 K); the variant kappa/(c0 K) is larger and not used";

const BOX_SLACK: f64 = 1.0e-12;
const BRACKET_SLACK: f64 = 1.0e-10;

type Profile = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

/// A nonlinearity f(x, u) = φ(x) g(x, u) given by its profile g, with
/// κ ≤ g ≤ K.
#[derive(Clone)]
pub struct Nonlinearity {
    name: String,
    kappa: f64,
    k_up: f64,
    strictly_decreasing_ratio: bool,
    profile: Profile,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("name", &self.name)
            .field("kappa", &self.kappa)
            .field("k_up", &self.k_up)
            .field("strictly_decreasing_ratio", &self.strictly_decreasing_ratio)
            .finish()
    }
}

impl Nonlinearity {
    /// `kappa = 0` is accepted for problems below Λ without a positive lower
    /// bound; such problems carry no groundstate positivity claim.
    pub fn new(
        name: impl Into<String>,
        kappa: f64,
        k_up: f64,
        strictly_decreasing_ratio: bool,
        profile: impl Fn(usize, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(kappa >= 0.0 && k_up > 0.0 && kappa <= k_up && k_up.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "need 0 <= kappa <= K with K > 0, got kappa = {kappa}, K = {k_up}"
            )));
        }
        Ok(Self {
            name: name.into(),
            kappa,
            k_up,
            strictly_decreasing_ratio,
            profile: Arc::new(profile),
        })
    }

    /// g ≡ c.
    pub fn constant(g: f64) -> Result<Self> {
        Self::new(format!("constant {g}"), g, g, true, move |_, _| g)
    }

    /// g = κ + (K - κ)/(1 + u²).
    pub fn rational(kappa: f64, k_up: f64) -> Result<Self> {
        Self::new(
            format!("rational {kappa} {k_up}"),
            kappa,
            k_up,
            true,
            move |_, u| kappa + (k_up - kappa) / (1.0 + u * u),
        )
    }

    /// g = κ + (K - κ) e^{-s|u|}.
    pub fn exp_decay(kappa: f64, k_up: f64, s: f64) -> Result<Self> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "decay rate must be >= 0, got {s}"
            )));
        }
        Self::new(
            format!("exp_decay {kappa} {k_up} {s}"),
            kappa,
            k_up,
            true,
            move |_, u| kappa + (k_up - kappa) * (-s * u.abs()).exp(),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn k_up(&self) -> f64 {
        self.k_up
    }

    pub fn strictly_decreasing_ratio(&self) -> bool {
        self.strictly_decreasing_ratio
    }

    #[inline]
    pub fn profile(&self, node: usize, u: f64) -> f64 {
        (self.profile)(node, u)
    }

    /// f(x_i, u_i) = φ_i g(i, u_i).
    pub fn eval(&self, phi: &[f64], u: &[f64]) -> Vec<f64> {
        phi.iter()
            .zip(u)
            .enumerate()
            .map(|(i, (p, v))| p * self.profile(i, *v))
            .collect()
    }

    /// Samples κ ≤ g ≤ K and, when flagged, strict decrease of g(x, u)/u on
    /// u > 0, over a lattice of nodes and values up to `u_max`.
    pub fn check_hypotheses(&self, nodes: usize, u_max: f64) -> Result<()> {
        if nodes == 0 || !(u_max > 0.0) {
            return Err(Error::InvalidInput(
                "lattice needs nodes and a positive range".into(),
            ));
        }
        let values = log_lattice(u_max);
        let tol = BOX_SLACK * self.k_up;
        for node in lattice_nodes(nodes) {
            let mut prev_ratio = f64::INFINITY;
            for &u in std::iter::once(&0.0).chain(&values) {
                for v in [u, -u] {
                    let g = self.profile(node, v);
                    if !(g >= self.kappa - tol && g <= self.k_up + tol) {
                        return Err(Error::HypothesisViolated(format!(
                            "{}: g({node}, {v:e}) = {g} outside [{}, {}]",
                            self.name, self.kappa, self.k_up
                        )));
                    }
                }
                if self.strictly_decreasing_ratio && u > 0.0 {
                    let ratio = self.profile(node, u) / u;
                    if !(ratio < prev_ratio) {
                        return Err(Error::HypothesisViolated(format!(
                            "{}: f/u is not strictly decreasing at node {node}, u = {u:e}",
                            self.name
                        )));
                    }
                    prev_ratio = ratio;
                }
            }
        }
        Ok(())
    }
}

fn lattice_nodes(n: usize) -> Vec<usize> {
    let count = LATTICE_NODES.min(n);
    let mut nodes: Vec<usize> = (0..count)
        .map(|k| {
            if count == 1 {
                0
            } else {
                k * (n - 1) / (count - 1)
            }
        })
        .collect();
    nodes.dedup();
    nodes
}

fn log_lattice(u_max: f64) -> Vec<f64> {
    let lo = (u_max * 1.0e-6).ln();
    let hi = u_max.ln();
    (0..LATTICE_VALUES)
        .map(|k| (lo + (hi - lo) * k as f64 / (LATTICE_VALUES - 1) as f64).exp())
        .collect()
}

/// δ = min(δ₀, κ/(2 c₀ K)).
pub fn window_semilinear(nl: &Nonlinearity, w: &WindowEstimate) -> f64 {
    w.delta0.min(nl.kappa() / (2.0 * w.c0 * nl.k_up()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// μ < Λ: positive solutions above κφ/(Λ - μ).
    Mp,
    /// μ > Λ: negative solutions below κφ/(Λ - μ).
    Amp,
}

/// Ordered pair of multiples of φ enclosing the solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct Bracket {
    pub kind: Branch,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// lower / φ.
    pub lower_ratio: f64,
    /// upper / φ.
    pub upper_ratio: f64,
}

impl Bracket {
    pub fn new(nl: &Nonlinearity, phi: &[f64], lambda: f64, mu: f64) -> Result<Self> {
        let gap = lambda - mu;
        if gap == 0.0 || !gap.is_finite() {
            return Err(Error::InvalidInput(format!(
                "mu = {mu} must differ from Lambda"
            )));
        }
        let (kind, lower_ratio, upper_ratio) = if gap > 0.0 {
            (Branch::Mp, nl.kappa() / gap, nl.k_up() / gap)
        } else {
            if nl.kappa() == 0.0 {
                return Err(Error::HypothesisViolated(
                    "above Lambda the lower bound kappa must be positive".into(),
                ));
            }
            (Branch::Amp, nl.k_up() / gap, nl.kappa() / gap)
        };
        Ok(Self {
            kind,
            lower: phi.iter().map(|p| lower_ratio * p).collect(),
            upper: phi.iter().map(|p| upper_ratio * p).collect(),
            lower_ratio,
            upper_ratio,
        })
    }

    /// Clamps `u` into the bracket; returns the number of nodes that were
    /// outside by more than rounding.
    pub fn project(&self, u: &mut [f64]) -> usize {
        let mut violations = 0;
        for ((v, lo), hi) in u.iter_mut().zip(&self.lower).zip(&self.upper) {
            let slack = BRACKET_SLACK * lo.abs().max(hi.abs());
            if *v < lo - slack || *v > hi + slack {
                violations += 1;
            }
            *v = v.clamp(*lo, *hi);
        }
        violations
    }
}

#[derive(Debug, Clone)]
pub struct SemilinearProblem<'a> {
    pub op: &'a DiscreteOperator,
    pub spectrum: &'a SpectrumSummary,
    pub window: &'a WindowEstimate,
    pub nl: &'a Nonlinearity,
    pub mu: f64,
}

impl SemilinearProblem<'_> {
    pub fn gap(&self) -> f64 {
        self.spectrum.lambda - self.mu
    }

    fn gs(&self) -> &Groundstate {
        &self.spectrum.groundstate
    }

    pub fn bracket(&self) -> Result<Bracket> {
        Bracket::new(self.nl, self.spectrum.phi(), self.spectrum.lambda, self.mu)
    }

    /// κ = 0 below Λ: existence without a lower bound.
    pub fn without_lower_bound(&self) -> bool {
        self.nl.kappa() == 0.0 && self.gap() > 0.0
    }

    pub fn window(&self) -> f64 {
        window_semilinear(self.nl, self.window)
    }

    /// K/|Λ - μ| + 2 c₀ K.
    pub fn xnorm_bound(&self) -> f64 {
        let k = self.nl.k_up();
        k / self.gap().abs() + 2.0 * self.window.c0 * k
    }
}

fn apply_with(p: &SemilinearProblem<'_>, resolvent: &Resolvent<'_>, u: &[f64]) -> Result<Vec<f64>> {
    let f = p.nl.eval(p.spectrum.phi(), u);
    let w = resolvent.solve(&f);
    let residual = resolvent.relative_residual(&w, &f);
    if !(residual <= SOLVE_RESIDUAL_TOL) {
        return Err(Error::CheckFailed {
            what: "resolvent residual",
            value: residual,
            tol: SOLVE_RESIDUAL_TOL,
        });
    }
    Ok(w)
}

/// T(u) = (L - μ)^{-1} f(·, u).
pub fn apply_t(p: &SemilinearProblem<'_>, u: &[f64]) -> Result<Vec<f64>> {
    let resolvent = p.op.resolvent(p.mu)?;
    apply_with(p, &resolvent, u)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    Lower,
    Upper,
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, Copy)]
pub struct IterationOptions {
    pub damping: f64,
    pub max_iter: usize,
    pub tol_x: f64,
    /// BracketEscape is raised when more than this fraction of nodes leave
    /// the bracket in one step.
    pub max_violation_fraction: f64,
    /// Reject μ outside the window instead of solving without a claim.
    pub require_window: bool,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_iter: 500,
            tol_x: 1.0e-9,
            max_violation_fraction: 0.05,
            require_window: true,
        }
    }
}

impl IterationOptions {
    fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if self.max_iter == 0 || !(self.tol_x > 0.0) {
            return Err(Error::InvalidInput(
                "need max_iter >= 1 and tol_x > 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.max_violation_fraction) {
            return Err(Error::InvalidInput(
                "violation fraction must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Uniqueness {
    /// X-norm distance between the limits from the two bracket ends.
    pub two_start_gap: f64,
    /// Left side of the discrete identity on the two limits.
    pub brezis_oswald_lhs: f64,
    /// Left side minus the nonlinear side ∫(f(u)/u - f(v)/v)(u² - v²).
    pub brezis_oswald_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SemilinearReport {
    pub mu: f64,
    pub lambda: f64,
    pub branch: Branch,
    #[serde(skip)]
    pub solution: GroundstateVector,
    pub iterations: usize,
    /// ‖T(u) - u‖_X at the returned iterate.
    pub residual_x: f64,
    pub bracket_violations: usize,
    /// X-norm of each step.
    pub step_trace: Vec<f64>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub window: f64,
    pub in_window: bool,
    pub xnorm_bound: f64,
    pub xnorm_ok: bool,
    /// κ/(Λ - μ): lower bound of u/φ (MP) or upper bound (AMP).
    pub sign_bound: Option<f64>,
    pub gsp: bool,
    pub gsn: bool,
    pub uniqueness: Option<Uniqueness>,
    pub notes: Vec<String>,
}

impl SemilinearReport {
    /// All claims attached to the report hold.
    pub fn certified(&self) -> bool {
        let sign_ok = match (self.sign_bound, self.branch) {
            (None, _) => true,
            (Some(_), Branch::Mp) => self.gsp,
            (Some(_), Branch::Amp) => self.gsn,
        };
        !self.in_window || (self.xnorm_ok && sign_ok && self.bracket_violations == 0)
    }
}

const SIGN_TOL: f64 = 1.0e-6;
const XNORM_TOL: f64 = 1.0e-3;

/// Damped iteration u ← (1 - θ)u + θ T(u) from a bracket end, projected into
/// the bracket after every step.
pub fn solve_semilinear(
    p: &SemilinearProblem<'_>,
    start: Start,
    opts: &IterationOptions,
) -> Result<SemilinearReport> {
    opts.validate()?;
    let bracket = p.bracket()?;
    let window = p.window();
    let distance = p.gap().abs();
    let in_window = p.without_lower_bound() || distance < window;
    if opts.require_window && !in_window {
        return Err(Error::WindowViolation { distance, window });
    }
    let n = p.op.len();
    let u_max = bracket
        .lower
        .iter()
        .chain(&bracket.upper)
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    p.nl.check_hypotheses(n, 2.0 * u_max.max(f64::MIN_POSITIVE))?;

    let phi = p.spectrum.phi();
    let resolvent = p.op.resolvent(p.mu)?;
    let mut u = match start {
        Start::Lower => bracket.lower.clone(),
        Start::Upper => bracket.upper.clone(),
        Start::Custom(v) => {
            if v.len() != n {
                return Err(Error::InvalidInput(
                    "custom start has the wrong length".into(),
                ));
            }
            v
        }
    };
    let mut total_violations = bracket.project(&mut u);
    let limit = (opts.max_violation_fraction * n as f64).floor() as usize;
    let theta = opts.damping;
    let mut step_trace = Vec::new();
    let mut converged = false;
    for iteration in 1..=opts.max_iter {
        let t = apply_with(p, &resolvent, &u)?;
        let mut next: Vec<f64> = u
            .iter()
            .zip(&t)
            .map(|(a, b)| (1.0 - theta) * a + theta * b)
            .collect();
        let violations = bracket.project(&mut next);
        if violations > limit {
            return Err(Error::BracketEscape {
                iteration,
                violations,
                nodes: n,
            });
        }
        total_violations += violations;
        let diff: Vec<f64> = next.iter().zip(&u).map(|(a, b)| a - b).collect();
        let step = x_norm(&diff, phi);
        step_trace.push(step);
        u = next;
        if step < opts.tol_x {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: opts.max_iter,
            last_step: step_trace.last().copied().unwrap_or(f64::NAN),
        });
    }

    let t = apply_with(p, &resolvent, &u)?;
    let diff: Vec<f64> = t.iter().zip(&u).map(|(a, b)| a - b).collect();
    let residual_x = x_norm(&diff, phi);
    let solution = decompose(&u, p.gs());
    let (min_ratio, max_ratio) = p.gs().ratio_range(&u);
    let xnorm_bound = p.xnorm_bound();
    let xnorm_ok = solution.x_norm <= xnorm_bound * (1.0 + XNORM_TOL);
    let sign_bound = (!p.without_lower_bound() && in_window).then(|| p.nl.kappa() / p.gap());
    let (gsp, gsn) = match (sign_bound, bracket.kind) {
        (Some(b), Branch::Mp) => (min_ratio >= b * (1.0 - SIGN_TOL), false),
        (Some(b), Branch::Amp) => (false, max_ratio <= b * (1.0 - SIGN_TOL)),
        (None, _) => (false, false),
    };
    let mut notes = vec![WINDOW_NOTE.to_string()];
    if p.without_lower_bound() {
        notes.push("kappa = 0: solution computed without a positivity claim".into());
    }
    Ok(SemilinearReport {
        mu: p.mu,
        lambda: p.spectrum.lambda,
        branch: bracket.kind,
        solution,
        iterations: step_trace.len(),
        residual_x,
        bracket_violations: total_violations,
        step_trace,
        min_ratio,
        max_ratio,
        window,
        in_window,
        xnorm_bound,
        xnorm_ok,
        sign_bound,
        gsp,
        gsn,
        uniqueness: None,
        notes,
    })
}

/// Solves from both bracket ends and attaches the uniqueness diagnostics to
/// the report of the lower start.
pub fn solve_with_uniqueness(
    p: &SemilinearProblem<'_>,
    opts: &IterationOptions,
) -> Result<SemilinearReport> {
    let (low, high) = rayon::join(
        || solve_semilinear(p, Start::Lower, opts),
        || solve_semilinear(p, Start::Upper, opts),
    );
    let (mut low, high) = (low?, high?);
    let u = &low.solution.values;
    let v = &high.solution.values;
    let diff: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    let two_start_gap = x_norm(&diff, p.spectrum.phi());
    let bo = brezis_oswald_check(p.op, u, v)?;
    let nonlinear = nonlinear_side(p.op, p.nl, p.spectrum.phi(), u, v);
    low.uniqueness = Some(Uniqueness {
        two_start_gap,
        brezis_oswald_lhs: bo.lhs,
        brezis_oswald_residual: bo.lhs - nonlinear,
    });
    Ok(low)
}

/// ∫ (f(u)/u - f(v)/v)(u² - v²).
fn nonlinear_side(
    op: &DiscreteOperator,
    nl: &Nonlinearity,
    phi: &[f64],
    u: &[f64],
    v: &[f64],
) -> f64 {
    let fu = nl.eval(phi, u);
    let fv = nl.eval(phi, v);
    let integrand: Vec<f64> = (0..u.len())
        .map(|i| (fu[i] / u[i] - fv[i] / v[i]) * (u[i] * u[i] - v[i] * v[i]))
        .collect();
    op.grid().integrate(&integrand)
}

/// Both sides of ∫(-Δu/u + Δv/v)(u² - v²) = ∫ v²|∇(u/v)|² + u²|∇(v/u)|².
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BrezisOswald {
    /// Left side from the discrete Laplacian.
    pub lhs: f64,
    /// Right side by the edge-midpoint rule.
    pub gradient: f64,
    /// lhs - gradient.
    pub gap: f64,
}

fn one_signed(v: &[f64], what: &'static str) -> Result<Vec<f64>> {
    if v.iter().all(|x| *x > 0.0) {
        Ok(v.to_vec())
    } else if v.iter().all(|x| *x < 0.0) {
        Ok(v.iter().map(|x| -x).collect())
    } else {
        Err(Error::SignMixed(what))
    }
}

/// Evaluates both sides of the identity for grid functions of one sign
/// (negative inputs are replaced by their absolute values).
pub fn brezis_oswald_check(op: &DiscreteOperator, u: &[f64], v: &[f64]) -> Result<BrezisOswald> {
    let u = one_signed(u, "u")?;
    let v = one_signed(v, "v")?;
    let w = op.to_w(&u);
    let z = op.to_w(&v);
    let dw = op.second_difference(&w);
    let dz = op.second_difference(&z);
    let g = op.grid();
    let scale = g.sphere_area * g.h;
    let lhs: f64 = (0..w.len())
        .map(|i| (dw[i] / w[i] - dz[i] / z[i]) * (w[i] * w[i] - z[i] * z[i]))
        .sum::<f64>()
        * scale;
    let mut gradient = 0.0;
    for i in 0..w.len().saturating_sub(1) {
        let wm = 0.5 * (w[i] + w[i + 1]);
        let zm = 0.5 * (z[i] + z[i + 1]);
        let a = w[i + 1] / z[i + 1] - w[i] / z[i];
        let b = z[i + 1] / w[i + 1] - z[i] / w[i];
        gradient += zm * zm * a * a + wm * wm * b * b;
    }
    gradient *= scale / (g.h * g.h);
    Ok(BrezisOswald {
        lhs,
        gradient,
        gap: lhs - gradient,
    })
}

/// Lipschitz constant of u ↦ f(x, u) sampled on [lower, upper] at every node,
/// inflated by [`LIPSCHITZ_INFLATION`].
pub fn lipschitz_estimate(nl: &Nonlinearity, phi: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut lip = 0.0_f64;
    for (i, p) in phi.iter().enumerate() {
        let (lo, hi) = (lower[i], upper[i]);
        if hi <= lo {
            continue;
        }
        let step = (hi - lo) / (LATTICE_VALUES - 1) as f64;
        let mut prev = nl.profile(i, lo);
        for k in 1..LATTICE_VALUES {
            let g = nl.profile(i, lo + k as f64 * step);
            lip = lip.max(p * (g - prev).abs() / step);
            prev = g;
        }
    }
    LIPSCHITZ_INFLATION * lip
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneReport {
    pub shift: f64,
    #[serde(skip)]
    pub minimal: GroundstateVector,
    #[serde(skip)]
    pub maximal: GroundstateVector,
    /// ‖maximal - minimal‖_X.
    pub gap: f64,
    pub iterations: (usize, usize),
    /// Largest step against the expected direction, relative to the iterate.
    pub max_order_defect: f64,
}

/// u ← (L - μ + M)^{-1}(f(·, u) + M u) from both bracket ends (μ < Λ only).
/// `shift = None` uses [`lipschitz_estimate`].
pub fn monotone_solve(
    p: &SemilinearProblem<'_>,
    shift: Option<f64>,
    opts: &IterationOptions,
) -> Result<MonotoneReport> {
    opts.validate()?;
    if !(p.gap() > 0.0) {
        return Err(Error::HypothesisViolated(
            "monotone iteration needs mu < Lambda".into(),
        ));
    }
    let bracket = p.bracket()?;
    let phi = p.spectrum.phi();
    let shift =
        shift.unwrap_or_else(|| lipschitz_estimate(p.nl, phi, &bracket.lower, &bracket.upper));
    if !(shift >= 0.0 && shift.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "shift must be >= 0, got {shift}"
        )));
    }
    let resolvent = p.op.resolvent(p.mu - shift)?;
    let run = |start: &[f64], increasing: bool| -> Result<(Vec<f64>, usize, f64)> {
        let mut u = start.to_vec();
        let mut worst = 0.0_f64;
        for iteration in 1..=opts.max_iter {
            let rhs: Vec<f64> =
                p.nl.eval(phi, &u)
                    .iter()
                    .zip(&u)
                    .map(|(f, v)| f + shift * v)
                    .collect();
            let next = resolvent.solve(&rhs);
            let size = x_norm(&u, phi).max(1.0);
            let defect = next
                .iter()
                .zip(&u)
                .zip(phi)
                .map(|((a, b), f)| if increasing { (b - a) / f } else { (a - b) / f })
                .fold(0.0_f64, f64::max)
                / size;
            worst = worst.max(defect);
            if defect > ORDER_TOL {
                return Err(Error::MonotonicityBroken { iteration, defect });
            }
            let diff: Vec<f64> = next.iter().zip(&u).map(|(a, b)| a - b).collect();
            let step = x_norm(&diff, phi);
            u = next;
            if step < opts.tol_x {
                return Ok((u, iteration, worst));
            }
        }
        Err(Error::NoConvergence {
            iterations: opts.max_iter,
            last_step: f64::NAN,
        })
    };
    let (low, high) = rayon::join(|| run(&bracket.lower, true), || run(&bracket.upper, false));
    let ((low, it_low, d_low), (high, it_high, d_high)) = (low?, high?);
    let diff: Vec<f64> = high.iter().zip(&low).map(|(a, b)| a - b).collect();
    Ok(MonotoneReport {
        shift,
        gap: x_norm(&diff, phi),
        minimal: decompose(&low, p.gs()),
        maximal: decompose(&high, p.gs()),
        iterations: (it_low, it_high),
        max_order_defect: d_low.max(d_high),
    })
}
