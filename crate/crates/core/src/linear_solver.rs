//! The linear problem (L - μ)u = f and its groundstate sign certificate.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::groundstate_space::{decompose, x_norm, GroundstateVector, WindowEstimate};
use crate::spectral::{DiscreteOperator, SpectrumSummary};

/// Accepted relative residual of a resolvent solve.
pub const SOLVE_RESIDUAL_TOL: f64 = 1.0e-10;
/// Accepted relative error in u¹ = f¹/(Λ - μ).
pub const COMPONENT_TOL: f64 = 1.0e-6;
/// Relative slack on the pointwise certificate inequalities (rounding only).
const POINTWISE_SLACK: f64 = 1.0e-12;
/// ‖f⊥‖_X below this multiple of ‖f‖_X counts as zero.
const PERP_ROUNDING: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Clone)]
pub struct LinearProblem<'a> {
    pub op: &'a DiscreteOperator,
    pub spectrum: &'a SpectrumSummary,
    pub mu: f64,
    pub f: Vec<f64>,
}

impl<'a> LinearProblem<'a> {
    pub fn new(
        op: &'a DiscreteOperator,
        spectrum: &'a SpectrumSummary,
        mu: f64,
        f: Vec<f64>,
    ) -> Result<Self> {
        if op.sector() != 0 {
            return Err(Error::InvalidSector {
                sector: op.sector(),
                space_dim: op.grid().space_dim,
            });
        }
        if f.len() != op.len() {
            return Err(Error::InvalidInput(format!(
                "data has {} values but the grid has {} nodes",
                f.len(),
                op.len()
            )));
        }
        if !mu.is_finite() || f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("mu and f must be finite".into()));
        }
        Ok(Self {
            op,
            spectrum,
            mu,
            f,
        })
    }

    /// Λ - μ.
    pub fn gap(&self) -> f64 {
        self.spectrum.lambda - self.mu
    }
}

/// Solves (L - μ)u = f, checks the residual and the identity u¹ = f¹/(Λ - μ).
pub fn solve_linear(p: &LinearProblem<'_>) -> Result<GroundstateVector> {
    let resolvent = p.op.resolvent(p.mu)?;
    let u = resolvent.solve(&p.f);
    let residual = resolvent.relative_residual(&u, &p.f);
    if !(residual <= SOLVE_RESIDUAL_TOL) {
        return Err(Error::CheckFailed {
            what: "linear solve residual",
            value: residual,
            tol: SOLVE_RESIDUAL_TOL,
        });
    }
    let gs = &p.spectrum.groundstate;
    let solution = decompose(&u, gs);
    let expected = gs.component(&p.f) / p.gap();
    let scale = expected.abs().max(gs.inner(&u, &u).sqrt());
    let err = (solution.c1 - expected).abs();
    if scale > 0.0 && err > COMPONENT_TOL * scale {
        return Err(Error::CheckFailed {
            what: "groundstate component identity",
            value: err / scale,
            tol: COMPONENT_TOL,
        });
    }
    Ok(solution)
}

/// Which sign statement a certificate makes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SignClaim {
    /// u ≥ c φ with c > 0 (μ below Λ).
    Gsp,
    /// u ≤ c φ with c < 0 (μ above Λ).
    Gsn,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearCertificate {
    pub mu: f64,
    pub lambda: f64,
    #[serde(skip)]
    pub solution: GroundstateVector,
    pub f1: f64,
    pub f_perp_x: f64,
    pub c0: f64,
    pub delta0: f64,
    /// f¹ / (c₀ ‖f⊥‖_X), infinite for f⊥ = 0.
    pub delta_f: f64,
    /// min(δ₀, δ₁(f)).
    pub window_used: f64,
    pub in_window: bool,
    pub claim: Option<SignClaim>,
    /// Lower bound constant for u/φ when the claim is GSP.
    pub gsp: Option<f64>,
    /// Upper bound constant for u/φ when the claim is GSN.
    pub gsn: Option<f64>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub positive_nodes: usize,
    pub negative_nodes: usize,
    /// True iff a claim was made and its inequality holds at every node.
    pub verified: bool,
}

impl LinearCertificate {
    /// A claim was made but failed the pointwise check.
    pub fn failed(&self) -> bool {
        self.claim.is_some() && !self.verified
    }
}

/// Solves and, inside the window min(δ₀, δ₁(f)), states and checks the sign of
/// the solution relative to φ.
pub fn certify_theorem1(p: &LinearProblem<'_>, w: &WindowEstimate) -> Result<LinearCertificate> {
    let gs = &p.spectrum.groundstate;
    let data = decompose(&p.f, gs);
    if !data.x_norm.is_finite() {
        return Err(Error::HypothesisViolated(
            "data is not bounded by a multiple of φ".into(),
        ));
    }
    if !(data.c1 > 0.0) {
        return Err(Error::HypothesisViolated(format!(
            "groundstate component of f must be positive, got {:e}",
            data.c1
        )));
    }
    let mut f_perp_x = x_norm(&data.perp, &gs.phi);
    // rounding left over from projecting a multiple of φ
    if f_perp_x <= PERP_ROUNDING * data.x_norm {
        f_perp_x = 0.0;
    }
    let delta_f = if f_perp_x == 0.0 {
        f64::INFINITY
    } else {
        data.c1 / (w.c0 * f_perp_x)
    };
    let window_used = w.delta0.min(delta_f);
    let gap = p.gap();
    let in_window = gap != 0.0 && gap.abs() < window_used;

    let solution = solve_linear(p)?;
    let (min_ratio, max_ratio) = gs.ratio_range(&solution.values);
    let positive_nodes = solution.values.iter().filter(|v| **v > 0.0).count();
    let negative_nodes = solution.values.iter().filter(|v| **v < 0.0).count();

    let centre = data.c1 / gap;
    let spread = w.c0 * f_perp_x;
    let slack = POINTWISE_SLACK * centre.abs();
    let (claim, gsp, gsn, verified) = match (in_window, gap > 0.0) {
        (false, _) => (None, None, None, false),
        (true, true) => {
            let bound = centre - spread;
            (
                Some(SignClaim::Gsp),
                Some(bound),
                None,
                bound > 0.0 && min_ratio >= bound - slack,
            )
        }
        (true, false) => {
            let bound = centre + spread;
            (
                Some(SignClaim::Gsn),
                None,
                Some(bound),
                bound < 0.0 && max_ratio <= bound + slack,
            )
        }
    };
    Ok(LinearCertificate {
        mu: p.mu,
        lambda: p.spectrum.lambda,
        solution,
        f1: data.c1,
        f_perp_x,
        c0: w.c0,
        delta0: w.delta0,
        delta_f,
        window_used,
        in_window,
        claim,
        gsp,
        gsn,
        min_ratio,
        max_ratio,
        positive_nodes,
        negative_nodes,
        verified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundstate_space::estimate_c0_delta0;
    use crate::radial_grid::{Grid, RadialPotential};
    use crate::spectral::compute_spectrum;

    fn quartic() -> (DiscreteOperator, SpectrumSummary) {
        let grid = Grid::uniform(3, 3.2, 400).unwrap();
        let pot = RadialPotential::power(1.0, 4.0).unwrap();
        compute_spectrum(&grid, &pot, 6).unwrap()
    }

    #[test]
    fn eigenfunction_data_scales_by_inverse_gap() {
        let (op, spec) = quartic();
        let phi = spec.phi().to_vec();
        for (shift, factor) in [(-0.1, 10.0), (0.1, -10.0)] {
            let p = LinearProblem::new(&op, &spec, spec.lambda + shift, phi.clone()).unwrap();
            let u = solve_linear(&p).unwrap();
            assert!((u.c1 - factor).abs() < 1e-8 * factor.abs());
            let diff: Vec<f64> = u
                .values
                .iter()
                .zip(&phi)
                .map(|(a, b)| a - factor * b)
                .collect();
            assert!(x_norm(&diff, &phi) < 1e-6);
        }
    }

    #[test]
    fn eigen_expansion_with_second_mode() {
        let (op, spec) = quartic();
        let (l2, phi2) = op.eigenpair(1).unwrap();
        let phi = spec.phi();
        let mu = spec.lambda - 0.1;
        let f: Vec<f64> = phi.iter().zip(&phi2).map(|(a, b)| a + b).collect();
        let p = LinearProblem::new(&op, &spec, mu, f).unwrap();
        let u = solve_linear(&p).unwrap();
        for i in 0..op.len() {
            let expect = 10.0 * phi[i] + phi2[i] / (l2 - mu);
            assert!((u.values[i] - expect).abs() < 1e-8 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn resolvent_is_linear() {
        let (op, spec) = quartic();
        let r = op.grid().radii();
        let f: Vec<f64> = r.iter().map(|x| (-x * x).exp()).collect();
        let g: Vec<f64> = r.iter().map(|x| x.sin() * (-x).exp()).collect();
        let (a, b) = (1.7, -0.3);
        let mix: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let mu = spec.lambda + 0.2;
        let solve =
            |v: Vec<f64>| solve_linear(&LinearProblem::new(&op, &spec, mu, v).unwrap()).unwrap();
        let (uf, ug, um) = (solve(f), solve(g), solve(mix));
        let scale = uf
            .values
            .iter()
            .chain(&ug.values)
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..op.len() {
            assert!((um.values[i] - a * uf.values[i] - b * ug.values[i]).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn component_blows_up_with_sign_flip() {
        let (op, spec) = quartic();
        let phi = spec.phi().to_vec();
        for eps in [1e-1, 1e-3, 1e-5] {
            for side in [-1.0, 1.0] {
                let mu = spec.lambda + side * eps;
                let u = solve_linear(&LinearProblem::new(&op, &spec, mu, phi.clone()).unwrap())
                    .unwrap();
                assert_eq!(u.c1.signum(), -side);
                assert!(u.c1.abs() >= (1.0 / eps) * (1.0 - 1e-6));
            }
        }
    }

    #[test]
    fn singular_parameter_is_rejected() {
        let (op, spec) = quartic();
        let p = LinearProblem::new(&op, &spec, spec.lambda + 1e-9, spec.phi().to_vec()).unwrap();
        assert!(matches!(
            solve_linear(&p),
            Err(Error::SingularResolvent { .. })
        ));
    }

    #[test]
    fn pure_groundstate_data_has_infinite_f_window() {
        let (op, spec) = quartic();
        let w = estimate_c0_delta0(&spec, &op, 0.5).unwrap();
        let mu = spec.lambda - 0.5 * w.delta0;
        let p = LinearProblem::new(&op, &spec, mu, spec.phi().to_vec()).unwrap();
        let c = certify_theorem1(&p, &w).unwrap();
        assert!(c.delta_f.is_infinite());
        assert_eq!(c.window_used, w.delta0);
        assert_eq!(c.claim, Some(SignClaim::Gsp));
        assert!(c.verified);
        assert!((c.gsp.unwrap() - 1.0 / (spec.lambda - mu)).abs() < 1e-10);
    }

    #[test]
    fn mixed_data_certified_on_both_sides() {
        let (op, spec) = quartic();
        let w = estimate_c0_delta0(&spec, &op, 0.5).unwrap();
        let (_, phi2) = op.eigenpair(1).unwrap();
        let f: Vec<f64> = spec
            .phi()
            .iter()
            .zip(&phi2)
            .map(|(a, b)| a + 0.5 * b)
            .collect();
        let probe = LinearProblem::new(&op, &spec, spec.lambda - 1e-3, f.clone()).unwrap();
        let delta = certify_theorem1(&probe, &w).unwrap().window_used;
        for side in [-1.0, 1.0] {
            let p = LinearProblem::new(&op, &spec, spec.lambda + side * 0.5 * delta, f.clone())
                .unwrap();
            let c = certify_theorem1(&p, &w).unwrap();
            assert!(c.in_window && c.verified, "{c:?}");
            if side < 0.0 {
                assert!(c.min_ratio > 0.0);
            } else {
                assert!(c.max_ratio < 0.0);
            }
        }
    }

    #[test]
    fn outside_window_reports_without_claim() {
        let (op, spec) = quartic();
        let w = estimate_c0_delta0(&spec, &op, 0.5).unwrap();
        let p = LinearProblem::new(
            &op,
            &spec,
            spec.lambda - 2.0 * w.delta0,
            spec.phi().to_vec(),
        )
        .unwrap();
        let c = certify_theorem1(&p, &w).unwrap();
        assert!(!c.in_window && c.claim.is_none() && !c.failed());
        assert_eq!(c.positive_nodes, op.len());
    }

    #[test]
    fn zero_component_violates_hypothesis() {
        let (op, spec) = quartic();
        let w = estimate_c0_delta0(&spec, &op, 0.5).unwrap();
        let (_, phi2) = op.eigenpair(1).unwrap();
        let f = spec.groundstate.project_perp(&phi2);
        let p = LinearProblem::new(&op, &spec, spec.lambda - 0.01, f).unwrap();
        assert!(matches!(
            certify_theorem1(&p, &w),
            Err(Error::HypothesisViolated(_))
        ));
    }
}
