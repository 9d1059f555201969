//! Discrete radial operators per angular sector and their low spectrum.
//!
//! A radial function u on R^N is represented through w = r^{(N-1)/2} u, which
//! turns the sector-ℓ part of -Δ + q into the symmetric operator
//!
//! ```text
//!     -w'' + [ (N-1)(N-3)/4 + ℓ(ℓ+N-2) ] / r² · w + q(r) w
//! ```
//!
//! discretized by second differences. On the line (N = 1) the two "sectors" are
//! the even and odd parts of a function, realized by mirroring the first node.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::groundstate_space::Groundstate;
use crate::radial_grid::{Grid, NodeLayout, RadialPotential};
use crate::tridiag::{SymTridiag, TridiagLu};

/// Iteration budget for bisection and eigenvector refinement.
pub const EIGEN_BUDGET: usize = 500;
/// Default largest angular index searched for the second eigenvalue.
pub const DEFAULT_MAX_SECTOR: usize = 8;
/// Distance from the spectrum below which a resolvent is treated as singular.
pub const RESOLVENT_EXCLUSION: f64 = 1.0e-8;
/// Relative residual accepted for computed eigenpairs.
pub const EIGEN_RESIDUAL_TOL: f64 = 1.0e-10;

/// How the ghost value at the origin is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OriginCondition {
    /// w(0) = 0 on a vertex grid.
    Dirichlet,
    /// Mirror image w(-r) = w(r): the even part of a function on the line.
    Even,
    /// Mirror image w(-r) = -w(r): the odd part of a function on the line.
    Odd,
}

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: Grid,
    sector: usize,
    centrifugal: f64,
    origin: OriginCondition,
    matrix: SymTridiag,
    potential: Vec<f64>,
    radial_factor: Vec<f64>,
}

/// Assemble the sector-`sector` radial operator on `grid`.
pub fn assemble(grid: &Grid, pot: &RadialPotential, sector: usize) -> Result<DiscreteOperator> {
    let dim = grid.space_dim;
    let origin = match (grid.layout, sector) {
        (NodeLayout::CellCentered, 0) => OriginCondition::Even,
        (NodeLayout::CellCentered, 1) => OriginCondition::Odd,
        (NodeLayout::CellCentered, _) => {
            return Err(Error::InvalidSector {
                sector,
                space_dim: dim,
            })
        }
        (NodeLayout::Vertex, _) => OriginCondition::Dirichlet,
    };
    let n = grid.n;
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let nf = dim as f64;
    let l = sector as f64;
    let centrifugal = if dim == 1 {
        0.0
    } else {
        (nf - 1.0) * (nf - 3.0) / 4.0 + l * (l + nf - 2.0)
    };
    let potential: Vec<f64> = grid.radii().iter().map(|&r| pot.eval(r)).collect();
    if let Some((i, &q)) = potential.iter().enumerate().find(|(_, q)| !q.is_finite()) {
        return Err(Error::NonPositivePotential {
            r: grid.radii()[i],
            value: q,
        });
    }
    let mut diag: Vec<f64> = grid
        .radii()
        .iter()
        .zip(&potential)
        .map(|(&r, &q)| 2.0 * inv_h2 + centrifugal / (r * r) + q)
        .collect();
    match origin {
        OriginCondition::Dirichlet => {}
        OriginCondition::Even => diag[0] -= inv_h2,
        OriginCondition::Odd => diag[0] += inv_h2,
    }
    let matrix = SymTridiag::new(diag, vec![-inv_h2; n - 1])?;
    let half_power = (nf - 1.0) / 2.0;
    let radial_factor = grid.radii().iter().map(|r| r.powf(half_power)).collect();
    Ok(DiscreteOperator {
        grid: grid.clone(),
        sector,
        centrifugal,
        origin,
        matrix,
        potential,
        radial_factor,
    })
}

impl DiscreteOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn sector(&self) -> usize {
        self.sector
    }

    pub fn len(&self) -> usize {
        self.grid.n
    }

    pub fn is_empty(&self) -> bool {
        self.grid.n == 0
    }

    pub fn centrifugal(&self) -> f64 {
        self.centrifugal
    }

    pub fn origin(&self) -> OriginCondition {
        self.origin
    }

    pub fn matrix(&self) -> &SymTridiag {
        &self.matrix
    }

    pub fn potential_values(&self) -> &[f64] {
        &self.potential
    }

    pub fn to_w(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.radial_factor)
            .map(|(v, s)| v * s)
            .collect()
    }

    pub fn from_w(&self, w: &[f64]) -> Vec<f64> {
        w.iter()
            .zip(&self.radial_factor)
            .map(|(v, s)| v / s)
            .collect()
    }

    /// L u on grid values of u.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.from_w(&self.matrix.apply(&self.to_w(u)))
    }

    /// -w'' by second differences, with the same ghost values the operator uses.
    pub fn second_difference(&self, w: &[f64]) -> Vec<f64> {
        let n = w.len();
        let inv_h2 = 1.0 / (self.grid.h * self.grid.h);
        let ghost = match self.origin {
            OriginCondition::Dirichlet => 0.0,
            OriginCondition::Even => w[0],
            OriginCondition::Odd => -w[0],
        };
        (0..n)
            .map(|i| {
                let left = if i == 0 { ghost } else { w[i - 1] };
                let right = if i + 1 == n { 0.0 } else { w[i + 1] };
                (2.0 * w[i] - left - right) * inv_h2
            })
            .collect()
    }

    pub fn eigenvalue(&self, k: usize) -> Result<f64> {
        self.matrix.eigenvalue(k, EIGEN_BUDGET)
    }

    /// The `k`-th eigenpair, eigenfunction in u-variables normalized under the
    /// grid quadrature and positive at the first node.
    pub fn eigenpair(&self, k: usize) -> Result<(f64, Vec<f64>)> {
        let mut lambda = self.eigenvalue(k)?;
        let tol = EIGEN_RESIDUAL_TOL * self.matrix.diag_inf_norm();
        let mut attempts = 0;
        let w = loop {
            let w = self.matrix.twisted_eigenvector(lambda);
            if self.matrix.residual_inf(lambda, &w) <= tol {
                break w;
            }
            attempts += 1;
            if attempts >= 8 {
                return Err(Error::ConvergenceFailure {
                    budget: EIGEN_BUDGET,
                });
            }
            lambda = self.matrix.rayleigh_quotient(&w);
        };
        let mut u = self.from_w(&w);
        let norm = self.grid.inner(&u, &u).sqrt();
        let sign = if u[0] < 0.0 { -1.0 } else { 1.0 };
        u.iter_mut().for_each(|v| *v *= sign / norm);
        Ok((lambda, u))
    }

    /// Factorized (L - mu)^{-1}; fails if mu is within [`RESOLVENT_EXCLUSION`]
    /// of an eigenvalue of this sector.
    pub fn resolvent(&self, mu: f64) -> Result<Resolvent<'_>> {
        let below = self.matrix.count_below(mu - RESOLVENT_EXCLUSION);
        let above = self.matrix.count_below(mu + RESOLVENT_EXCLUSION);
        if below != above {
            return Err(Error::SingularResolvent {
                mu,
                tol: RESOLVENT_EXCLUSION,
            });
        }
        let off = &self.matrix.off;
        let lu = TridiagLu::factor(off, &self.matrix.diag, off, mu).map_err(|_| {
            Error::SingularResolvent {
                mu,
                tol: RESOLVENT_EXCLUSION,
            }
        })?;
        Ok(Resolvent { op: self, mu, lu })
    }

    /// Quadrature of |∇u|² + q u² using one-sided differences on cell edges.
    pub fn v_norm_squared(&self, u: &[f64]) -> f64 {
        let g = &self.grid;
        let h = g.h;
        let dim = g.space_dim as i32;
        let r = g.radii();
        let mut grad = 0.0;
        for i in 0..u.len() - 1 {
            let mid = 0.5 * (r[i] + r[i + 1]);
            let du = (u[i + 1] - u[i]) / h;
            grad += mid.powi(dim - 1) * du * du;
        }
        let last = u.len() - 1;
        let mid = r[last] + 0.5 * h;
        let du = u[last] / h;
        grad += mid.powi(dim - 1) * du * du;
        if self.origin == OriginCondition::Odd {
            // half of the edge to the mirror node lies inside the domain
            let du = 2.0 * u[0] / h;
            grad += 0.5 * du * du;
        }
        let potential: f64 = g
            .weights()
            .iter()
            .zip(u.iter().zip(&self.potential))
            .map(|(w, (v, q))| w * q * v * v)
            .sum();
        g.sphere_area * h * grad + potential
    }
}

/// A factorized shifted operator (L - mu) ready for repeated solves.
pub struct Resolvent<'a> {
    op: &'a DiscreteOperator,
    mu: f64,
    lu: TridiagLu,
}

impl Resolvent<'_> {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// u = (L - mu)^{-1} f.
    pub fn solve(&self, f: &[f64]) -> Vec<f64> {
        let mut w = self.op.to_w(f);
        self.lu.solve_in_place(&mut w);
        self.op.from_w(&w)
    }

    /// Relative residual ‖(L - mu)u - f‖ / (‖L - mu‖ ‖u‖ + ‖f‖) in w-variables.
    pub fn relative_residual(&self, u: &[f64], f: &[f64]) -> f64 {
        let w = self.op.to_w(u);
        let rhs = self.op.to_w(f);
        let tw = self.op.matrix.apply(&w);
        let res = tw
            .iter()
            .zip(&w)
            .zip(&rhs)
            .fold(0.0_f64, |m, ((t, x), b)| m.max((t - self.mu * x - b).abs()));
        let scale = (self.op.matrix.diag_inf_norm()
            + self.mu.abs()
            + 2.0 * self.op.matrix.off.first().map_or(0.0, |o| o.abs()))
            * inf_norm(&w)
            + inf_norm(&rhs);
        if scale == 0.0 {
            0.0
        } else {
            res / scale
        }
    }
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Principal eigenpair (Λ, φ) of the ℓ = 0 operator; φ > 0 and normalized.
pub fn principal_eigenpair(op: &DiscreteOperator) -> Result<(f64, Vec<f64>)> {
    if op.sector != 0 {
        return Err(Error::InvalidSector {
            sector: op.sector,
            space_dim: op.grid.space_dim,
        });
    }
    let (lambda, phi) = op.eigenpair(0)?;
    if let Some(node) = phi.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::NonPositiveGroundstate { node });
    }
    Ok((lambda, phi))
}

/// Smallest eigenvalue of L other than Λ: the second eigenvalue of sector 0 or
/// the first of sectors 1..=max_sector. Ties go to the lower sector.
pub fn second_eigenvalue(
    grid: &Grid,
    pot: &RadialPotential,
    max_sector: usize,
) -> Result<(f64, usize)> {
    if max_sector == 0 {
        return Err(Error::InvalidInput("max_sector must be >= 1".into()));
    }
    // on the line the even/odd split is exhaustive
    let last = if grid.space_dim == 1 { 1 } else { max_sector };
    let candidates: Vec<(f64, usize)> = (0..=last)
        .into_par_iter()
        .map(|sector| {
            let op = assemble(grid, pot, sector)?;
            let k = usize::from(sector == 0);
            Ok((op.eigenvalue(k)?, sector))
        })
        .collect::<Result<_>>()?;
    let (value, sector) = candidates
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .expect("at least two sectors");
    if grid.space_dim > 1 && sector == last {
        return Err(Error::SectorBudget { sector });
    }
    Ok((value, sector))
}

/// Λ, φ, λ₂ and the first radial eigenvalues.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub lambda: f64,
    pub lambda2: f64,
    pub lambda2_sector: usize,
    pub radial_eigs: Vec<f64>,
    pub max_sector: usize,
    #[serde(skip)]
    pub groundstate: Groundstate,
}

impl SpectrumSummary {
    pub fn phi(&self) -> &[f64] {
        &self.groundstate.phi
    }

    /// Second eigenvalue within the radial sector.
    pub fn radial_lambda2(&self) -> f64 {
        self.radial_eigs[1]
    }
}

/// Number of radial eigenvalues kept in [`SpectrumSummary::radial_eigs`].
pub const RADIAL_EIGS_KEPT: usize = 4;

/// Assembles the radial operator and computes its spectral summary.
pub fn compute_spectrum(
    grid: &Grid,
    pot: &RadialPotential,
    max_sector: usize,
) -> Result<(DiscreteOperator, SpectrumSummary)> {
    let op = assemble(grid, pot, 0)?;
    let (lambda, phi) = principal_eigenpair(&op)?;
    let radial_eigs = (0..RADIAL_EIGS_KEPT.min(op.len()))
        .map(|k| if k == 0 { Ok(lambda) } else { op.eigenvalue(k) })
        .collect::<Result<Vec<_>>>()?;
    let (lambda2, lambda2_sector) = second_eigenvalue(grid, pot, max_sector)?;
    let summary = SpectrumSummary {
        lambda,
        lambda2,
        lambda2_sector,
        radial_eigs,
        max_sector,
        groundstate: Groundstate::new(phi, grid.weights().to_vec()),
    };
    Ok((op, summary))
}
