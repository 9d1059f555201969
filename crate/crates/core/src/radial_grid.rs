//! Radial computational domain, quadrature for radial functions on R^N and
//! growth checks for potentials.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Default ratio q(r_max) / spectral_scale used when truncating the domain.
pub const DEFAULT_TRUNCATION_FACTOR: f64 = 4.0;
/// Largest radius the truncation search will consider.
pub const RADIUS_SEARCH_CAP: f64 = 1.0e4;

type Evaluator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A radial potential q(|x|) together with the radius R0 beyond which it grows.
#[derive(Clone)]
pub struct RadialPotential {
    name: String,
    r0: f64,
    eval: Evaluator,
}

impl fmt::Debug for RadialPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialPotential")
            .field("name", &self.name)
            .field("r0", &self.r0)
            .finish()
    }
}

impl RadialPotential {
    pub fn new(
        name: impl Into<String>,
        r0: f64,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(r0.is_finite() && r0 >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "R0 must be finite and >= 0, got {r0}"
            )));
        }
        Ok(Self {
            name: name.into(),
            r0,
            eval: Arc::new(eval),
        })
    }

    /// `c + r^s`.
    pub fn power(c: f64, s: f64) -> Result<Self> {
        if !(c > 0.0 && s > 0.0) {
            return Err(Error::InvalidInput(format!(
                "power potential needs c > 0 and s > 0, got c = {c}, s = {s}"
            )));
        }
        Self::new(format!("{c} + r^{s}"), 0.0, move |r: f64| c + r.powf(s))
    }

    /// `r^s` without a constant; vanishes at the origin (not positive there).
    pub fn pure_power(s: f64) -> Result<Self> {
        Self::new(format!("r^{s}"), 0.0, move |r: f64| r.powf(s))
    }

    /// `e^r`.
    pub fn exponential() -> Self {
        Self {
            name: "exp(r)".into(),
            r0: 0.0,
            eval: Arc::new(f64::exp),
        }
    }

    /// Piecewise-linear interpolation of tabulated `(r, q)` pairs. Below the first
    /// radius the first value is held; beyond the last radius the last segment is
    /// extended linearly. R0 is the first tabulated radius from which the table is
    /// strictly increasing.
    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(
                "tabulated potential needs at least two rows".into(),
            ));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidInput(
                "tabulated radii must be strictly increasing".into(),
            ));
        }
        if let Some(&(r, q)) = points
            .iter()
            .find(|(r, q)| !(r.is_finite() && q.is_finite()))
        {
            return Err(Error::InvalidInput(format!(
                "non-finite table row ({r}, {q})"
            )));
        }
        let mut start = points.len() - 1;
        while start > 0 && points[start - 1].1 < points[start].1 {
            start -= 1;
        }
        let r0 = points[start].0.max(0.0);
        let table = Arc::new(points);
        let eval = move |r: f64| {
            let t = &table;
            let last = t.len() - 1;
            if r <= t[0].0 {
                return t[0].1;
            }
            let seg = match t.binary_search_by(|p| p.0.total_cmp(&r)) {
                Ok(i) => return t[i].1,
                Err(i) if i > last => last - 1,
                Err(i) => i - 1,
            };
            let (ra, qa) = t[seg];
            let (rb, qb) = t[seg + 1];
            qa + (qb - qa) * (r - ra) / (rb - ra)
        };
        Self::new("tabulated", r0, eval)
    }

    pub fn with_r0(mut self, r0: f64) -> Self {
        self.r0 = r0;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        (self.eval)(r)
    }
}

/// Tuning knobs for [`validate_class_p_with`].
#[derive(Debug, Clone, Copy)]
pub struct ClassPOptions {
    /// Number of uniformly spaced samples used for positivity and monotonicity.
    pub samples: usize,
    /// Required ratio between consecutive dyadic tail integrals of q^{-1/2}.
    pub decay_factor: f64,
    /// Simpson intervals per dyadic segment.
    pub quadrature_intervals: usize,
}

impl Default for ClassPOptions {
    fn default() -> Self {
        Self {
            samples: 4096,
            decay_factor: 1.2,
            quadrature_intervals: 2048,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassPReport {
    pub pass: bool,
    /// Integral of q^{-1/2} over [r_test/4, r_test/2].
    pub tail_inner: f64,
    /// Integral of q^{-1/2} over [r_test/2, r_test].
    pub tail_outer: f64,
    pub decay_ratio: f64,
    pub tol: f64,
    pub decay_factor: f64,
}

pub fn validate_class_p(pot: &RadialPotential, r_test: f64, tol: f64) -> Result<ClassPReport> {
    validate_class_p_with(pot, r_test, tol, &ClassPOptions::default())
}

/// Checks positivity, growth beyond R0 and integrability of q^{-1/2} through
/// geometric decay of dyadic tail segments.
pub fn validate_class_p_with(
    pot: &RadialPotential,
    r_test: f64,
    tol: f64,
    opts: &ClassPOptions,
) -> Result<ClassPReport> {
    if !(r_test > 2.0 * pot.r0() && r_test.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "r_test = {r_test} must exceed 2 R0 = {}",
            2.0 * pot.r0()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tol must be positive, got {tol}"
        )));
    }
    let samples = opts.samples.max(16);
    let step = r_test / samples as f64;
    let mut prev: Option<f64> = None;
    for k in 0..=samples {
        let r = k as f64 * step;
        let q = pot.eval(r);
        if !(q > 0.0) {
            return Err(Error::NonPositivePotential { r, value: q });
        }
        if r >= pot.r0() {
            if let Some(p) = prev {
                if q < p {
                    return Err(Error::NotIncreasing { r });
                }
            }
            prev = Some(q);
        }
    }
    let inv_sqrt = |r: f64| pot.eval(r).powf(-0.5);
    let m = opts.quadrature_intervals;
    let tail_inner = simpson(inv_sqrt, 0.25 * r_test, 0.5 * r_test, m);
    let tail_outer = simpson(inv_sqrt, 0.5 * r_test, r_test, m);
    let decay_ratio = tail_inner / tail_outer;
    Ok(ClassPReport {
        pass: tail_outer < tol && decay_ratio >= opts.decay_factor,
        tail_inner,
        tail_outer,
        decay_ratio,
        tol,
        decay_factor: opts.decay_factor,
    })
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let m = intervals.max(2) & !1;
    let h = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Surface area of the unit sphere S^{N-1} in R^N (2 for N = 1).
pub fn unit_sphere_area(space_dim: usize) -> f64 {
    use std::f64::consts::PI;
    // |S^{N+1}| = 2 pi / N * |S^{N-1}|
    let (mut area, mut dim) = if space_dim % 2 == 1 {
        (2.0, 1)
    } else {
        (2.0 * PI, 2)
    };
    while dim < space_dim {
        area *= 2.0 * PI / dim as f64;
        dim += 2;
    }
    area
}

/// Where the nodes sit inside each cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeLayout {
    /// r_i = i h, i = 1..n, h = r_max / (n + 1); the origin is a ghost node.
    Vertex,
    /// r_i = (i - 1/2) h, i = 1..n, h = r_max / (n + 1/2); used on the line,
    /// where the origin sits halfway between the first node and its mirror image.
    CellCentered,
}

/// Uniform radial grid on (0, r_max) with Dirichlet truncation at r_max.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub space_dim: usize,
    pub r_max: f64,
    pub n: usize,
    pub h: f64,
    pub layout: NodeLayout,
    pub sphere_area: f64,
    radii: Vec<f64>,
    quad_weights: Vec<f64>,
}

impl Grid {
    /// Uniform grid with `n` nodes. Dimension 1 uses the cell-centred layout so
    /// that the even/odd reflection at the origin is second-order accurate.
    pub fn uniform(space_dim: usize, r_max: f64, n: usize) -> Result<Self> {
        if space_dim == 0 {
            return Err(Error::InvalidInput("space dimension must be >= 1".into()));
        }
        if !(r_max > 0.0 && r_max.is_finite()) || n < 3 {
            return Err(Error::InvalidInput(format!(
                "grid needs r_max > 0 and n >= 3 (got r_max = {r_max}, n = {n})"
            )));
        }
        let layout = if space_dim == 1 {
            NodeLayout::CellCentered
        } else {
            NodeLayout::Vertex
        };
        let (h, offset) = match layout {
            NodeLayout::Vertex => (r_max / (n as f64 + 1.0), 0.0),
            NodeLayout::CellCentered => (r_max / (n as f64 + 0.5), 0.5),
        };
        let sphere_area = unit_sphere_area(space_dim);
        let radii: Vec<f64> = (1..=n).map(|i| (i as f64 - offset) * h).collect();
        let quad_weights = radii
            .iter()
            .map(|r| sphere_area * r.powi(space_dim as i32 - 1) * h)
            .collect();
        Ok(Self {
            space_dim,
            r_max,
            n,
            h,
            layout,
            sphere_area,
            radii,
            quad_weights,
        })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn weights(&self) -> &[f64] {
        &self.quad_weights
    }

    /// Quadrature of a radial function over the ball of radius r_max.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.quad_weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.quad_weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }

    /// Closed-form volume of the ball of radius r_max.
    pub fn ball_volume(&self) -> f64 {
        self.sphere_area * self.r_max.powi(self.space_dim as i32) / self.space_dim as f64
    }

    /// q(r_max) divided by a spectral quantity; the truncation is considered
    /// adequate when this exceeds the truncation factor.
    pub fn truncation_ratio(&self, pot: &RadialPotential, spectral_value: f64) -> f64 {
        pot.eval(self.r_max) / spectral_value
    }
}

/// Builds a grid whose outer radius is the smallest r >= R0 with
/// q(r) >= factor * spectral_scale, using [`DEFAULT_TRUNCATION_FACTOR`].
pub fn build_grid(
    pot: &RadialPotential,
    space_dim: usize,
    spectral_scale: f64,
    points_per_unit: f64,
) -> Result<Grid> {
    build_grid_with_factor(
        pot,
        space_dim,
        spectral_scale,
        points_per_unit,
        DEFAULT_TRUNCATION_FACTOR,
    )
}

pub fn build_grid_with_factor(
    pot: &RadialPotential,
    space_dim: usize,
    spectral_scale: f64,
    points_per_unit: f64,
    truncation_factor: f64,
) -> Result<Grid> {
    if !(spectral_scale > 0.0) || !(points_per_unit > 0.0) || !(truncation_factor > 0.0) {
        return Err(Error::InvalidInput(format!(
            "spectral_scale, points_per_unit and truncation_factor must be positive \
             (got {spectral_scale}, {points_per_unit}, {truncation_factor})"
        )));
    }
    let r_max = truncation_radius(pot, truncation_factor * spectral_scale, points_per_unit)?;
    let n = (points_per_unit * r_max).ceil() as usize;
    Grid::uniform(space_dim, r_max, n.max(3))
}

fn truncation_radius(pot: &RadialPotential, target: f64, points_per_unit: f64) -> Result<f64> {
    let step = 1.0 / points_per_unit;
    let start = pot.r0();
    let mut prev = start;
    let mut r = start + step;
    while r <= RADIUS_SEARCH_CAP {
        if pot.eval(r) >= target {
            // refine the crossing inside the last sampling interval
            let (mut lo, mut hi) = (prev, r);
            if pot.eval(lo) >= target && lo > 0.0 {
                return Ok(lo);
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if pot.eval(mid) >= target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(hi);
        }
        prev = r;
        r += step;
    }
    Err(Error::UnboundedSearch {
        target,
        cap: RADIUS_SEARCH_CAP,
    })
}
