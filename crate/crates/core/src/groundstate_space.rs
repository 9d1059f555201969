//! Groundstate-bounded grid functions: the sup-norm of |h|/φ, the split
//! h = h¹φ + h⊥ and sampled estimates of the resolvent bound on φ⊥.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{DiscreteOperator, SpectrumSummary};

/// Default fraction of the spectral gap used as the μ-window half-width.
pub const DEFAULT_MARGIN: f64 = 0.5;
/// Number of μ samples on each side of Λ.
pub const SAMPLES_PER_SIDE: usize = 4;

const COLUMN_BLOCK: usize = 64;

/// Positive, normalized groundstate together with the quadrature weights that
/// define its inner product.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Groundstate {
    pub phi: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Groundstate {
    pub fn new(phi: Vec<f64>, weights: Vec<f64>) -> Self {
        debug_assert_eq!(phi.len(), weights.len());
        Self { phi, weights }
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }

    /// v¹ = ∫ v φ.
    pub fn component(&self, v: &[f64]) -> f64 {
        self.inner(v, &self.phi)
    }

    /// v - (∫ v φ) φ.
    pub fn project_perp(&self, v: &[f64]) -> Vec<f64> {
        let c1 = self.component(v);
        v.iter().zip(&self.phi).map(|(x, p)| x - c1 * p).collect()
    }

    pub fn decompose(&self, v: &[f64]) -> GroundstateVector {
        decompose(v, self)
    }

    pub fn x_norm(&self, v: &[f64]) -> f64 {
        x_norm(v, &self.phi)
    }

    /// Pointwise ratios v_i / φ_i.
    pub fn ratios(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.phi).map(|(x, p)| x / p).collect()
    }

    /// (min, max) of v/φ over the nodes.
    pub fn ratio_range(&self, v: &[f64]) -> (f64, f64) {
        v.iter()
            .zip(&self.phi)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, p)| {
                let t = x / p;
                (lo.min(t), hi.max(t))
            })
    }
}

/// A grid function with its X-norm and its split along φ.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundstateVector {
    pub values: Vec<f64>,
    pub x_norm: f64,
    pub c1: f64,
    pub perp: Vec<f64>,
}

impl GroundstateVector {
    pub fn reconstruct(&self, phi: &[f64]) -> Vec<f64> {
        self.perp
            .iter()
            .zip(phi)
            .map(|(p, f)| self.c1 * f + p)
            .collect()
    }
}

pub fn decompose(v: &[f64], gs: &Groundstate) -> GroundstateVector {
    let c1 = gs.component(v);
    let perp = v.iter().zip(&gs.phi).map(|(x, p)| x - c1 * p).collect();
    GroundstateVector {
        values: v.to_vec(),
        x_norm: x_norm(v, &gs.phi),
        c1,
        perp,
    }
}

/// max_i |v_i| / φ_i over the stored (interior) nodes.
pub fn x_norm(v: &[f64], phi: &[f64]) -> f64 {
    v.iter()
        .zip(phi)
        .fold(0.0_f64, |m, (x, p)| m.max(x.abs() / p))
}

/// Half-width of the admissible μ-window and the sampled bound on the
/// X-operator norm of the resolvent restricted to φ⊥.
#[derive(Debug, Clone, Serialize)]
pub struct WindowEstimate {
    pub delta0: f64,
    pub c0: f64,
    pub margin: f64,
    pub mu_samples: Vec<f64>,
    pub sample_norms: Vec<f64>,
    /// 1 / (λ₂(radial) - Λ - δ₀): spectral radius of the projected resolvent at
    /// the right end of the window, a lower bound for any induced norm.
    pub spectral_floor: f64,
}

impl WindowEstimate {
    /// A window with externally supplied constants (no sampling).
    pub fn fixed(delta0: f64, c0: f64) -> Result<Self> {
        if !(delta0 > 0.0 && c0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "window constants must be positive (delta0 = {delta0}, c0 = {c0})"
            )));
        }
        Ok(Self {
            delta0,
            c0,
            margin: f64::NAN,
            mu_samples: Vec::new(),
            sample_norms: Vec::new(),
            spectral_floor: 0.0,
        })
    }
}

/// ‖D_φ⁻¹ Π R Π D_φ‖_∞ for a linear map `solve` on grid functions, where Π is
/// the quadrature-orthogonal projection onto φ⊥ and D_φ multiplication by φ.
pub fn projected_weighted_norm<F>(gs: &Groundstate, solve: F) -> f64
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let n = gs.len();
    let blocks: Vec<(usize, usize)> = (0..n)
        .step_by(COLUMN_BLOCK)
        .map(|s| (s, (s + COLUMN_BLOCK).min(n)))
        .collect();
    let partial: Vec<Vec<f64>> = blocks
        .par_iter()
        .map(|&(start, end)| {
            let mut rows = vec![0.0; n];
            let mut column = vec![0.0; n];
            for j in start..end {
                let scale = gs.weights[j] * gs.phi[j] * gs.phi[j];
                for (c, p) in column.iter_mut().zip(&gs.phi) {
                    *c = -scale * p;
                }
                column[j] += gs.phi[j];
                let image = gs.project_perp(&solve(&column));
                for ((acc, y), p) in rows.iter_mut().zip(&image).zip(&gs.phi) {
                    *acc += (y / p).abs();
                }
            }
            rows
        })
        .collect();
    let mut rows = vec![0.0; n];
    for block in &partial {
        for (acc, v) in rows.iter_mut().zip(block) {
            *acc += v;
        }
    }
    rows.into_iter().fold(0.0, f64::max)
}

/// δ₀ = margin·(λ₂ - Λ) and c₀ = max over μ ∈ {Λ ± δ₀k/4} of the weighted
/// norm of the projected resolvent.
pub fn estimate_c0_delta0(
    spec: &SpectrumSummary,
    op: &DiscreteOperator,
    margin: f64,
) -> Result<WindowEstimate> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::InvalidInput(format!(
            "margin must lie in (0, 1), got {margin}"
        )));
    }
    if op.sector() != 0 {
        return Err(Error::InvalidSector {
            sector: op.sector(),
            space_dim: op.grid().space_dim,
        });
    }
    let delta0 = margin * (spec.lambda2 - spec.lambda);
    let mut mu_samples = Vec::with_capacity(2 * SAMPLES_PER_SIDE);
    for k in 1..=SAMPLES_PER_SIDE {
        let step = delta0 * k as f64 / SAMPLES_PER_SIDE as f64;
        mu_samples.push(spec.lambda - step);
        mu_samples.push(spec.lambda + step);
    }
    let gs = &spec.groundstate;
    let sample_norms = mu_samples
        .par_iter()
        .map(|&mu| {
            let resolvent = op.resolvent(mu)?;
            Ok(projected_weighted_norm(gs, |f| resolvent.solve(f)))
        })
        .collect::<Result<Vec<f64>>>()?;
    let c0 = sample_norms.iter().cloned().fold(0.0, f64::max);
    let spectral_floor = 1.0 / (spec.radial_lambda2() - spec.lambda - delta0);
    Ok(WindowEstimate {
        delta0,
        c0,
        margin,
        mu_samples,
        sample_norms,
        spectral_floor,
    })
}
