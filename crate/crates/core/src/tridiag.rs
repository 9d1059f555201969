//! Symmetric tridiagonal kernels: Sturm-sequence bisection, twisted-factorization
//! eigenvectors and a partially pivoted LU for shifted solves.

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix stored as its diagonal and first off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

const PIVOT_FLOOR: f64 = f64::MIN_POSITIVE * 1.0e4;

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::InvalidInput(format!(
                "tridiagonal shape mismatch: {} diagonal vs {} off-diagonal entries",
                diag.len(),
                off.len()
            )));
        }
        Ok(Self { diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for i in 0..n - 1 {
            y[i] += self.off[i] * x[i + 1];
            y[i + 1] += self.off[i] * x[i];
        }
        y
    }

    pub fn diag_inf_norm(&self) -> f64 {
        self.diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()))
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - left - right);
            hi = hi.max(self.diag[i] + left + right);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut pivot = self.diag[0] - x;
        if pivot < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            if pivot == 0.0 {
                pivot = -PIVOT_FLOOR;
            }
            pivot = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / pivot;
            if pivot < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection on the Sturm count.
    pub fn eigenvalue(&self, k: usize, budget: usize) -> Result<f64> {
        if k >= self.len() {
            return Err(Error::InvalidInput(format!(
                "eigenvalue index {k} out of range for dimension {}",
                self.len()
            )));
        }
        let (mut lo, mut hi) = self.gershgorin();
        let pad = f64::EPSILON * lo.abs().max(hi.abs()).max(1.0);
        lo -= pad;
        hi += pad;
        for _ in 0..budget {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
                return Ok(mid);
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Err(Error::ConvergenceFailure { budget })
    }

    /// Eigenvector for an accurate eigenvalue approximation `lambda`, built from
    /// the twisted factorization of `T - lambda`. Components are obtained as
    /// products of pivot ratios, so tiny tail entries keep their relative accuracy.
    /// The result has unit Euclidean norm and a positive entry at the twist index.
    pub fn twisted_eigenvector(&self, lambda: f64) -> Vec<f64> {
        let n = self.len();
        if n == 1 {
            return vec![1.0];
        }
        let guard = |p: f64| {
            if p.abs() < PIVOT_FLOOR {
                if p < 0.0 {
                    -PIVOT_FLOOR
                } else {
                    PIVOT_FLOOR
                }
            } else {
                p
            }
        };
        let mut top = vec![0.0; n];
        top[0] = guard(self.diag[0] - lambda);
        for i in 1..n {
            top[i] = guard(self.diag[i] - lambda - self.off[i - 1] * self.off[i - 1] / top[i - 1]);
        }
        let mut bottom = vec![0.0; n];
        bottom[n - 1] = guard(self.diag[n - 1] - lambda);
        for i in (0..n - 1).rev() {
            bottom[i] = guard(self.diag[i] - lambda - self.off[i] * self.off[i] / bottom[i + 1]);
        }
        let twist = (0..n)
            .min_by(|&a, &b| {
                let ga = (top[a] + bottom[a] - (self.diag[a] - lambda)).abs();
                let gb = (top[b] + bottom[b] - (self.diag[b] - lambda)).abs();
                ga.total_cmp(&gb)
            })
            .unwrap_or(0);

        let mut z = vec![0.0; n];
        z[twist] = 1.0;
        for i in (0..twist).rev() {
            z[i] = -(self.off[i] / top[i]) * z[i + 1];
        }
        for i in twist + 1..n {
            z[i] = -(self.off[i - 1] / bottom[i]) * z[i - 1];
        }
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        z.iter_mut().for_each(|v| *v /= norm);
        z
    }

    pub fn residual_inf(&self, lambda: f64, v: &[f64]) -> f64 {
        self.apply(v)
            .iter()
            .zip(v)
            .fold(0.0_f64, |m, (tv, x)| m.max((tv - lambda * x).abs()))
    }

    pub fn rayleigh_quotient(&self, v: &[f64]) -> f64 {
        let tv = self.apply(v);
        let num: f64 = tv.iter().zip(v).map(|(a, b)| a * b).sum();
        let den: f64 = v.iter().map(|x| x * x).sum();
        num / den
    }

    pub fn factor_shifted(&self, shift: f64) -> Result<TridiagLu> {
        TridiagLu::factor(&self.off, &self.diag, &self.off, shift)
    }
}

/// LU factorization with partial pivoting of a general tridiagonal matrix
/// (row interchanges create a second superdiagonal).
#[derive(Debug, Clone)]
pub struct TridiagLu {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    upper2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    /// Factor `tridiag(sub, diag - shift, sup)`.
    pub fn factor(sub: &[f64], diag: &[f64], sup: &[f64], shift: f64) -> Result<Self> {
        let n = diag.len();
        let mut lower = sub.to_vec();
        let mut d: Vec<f64> = diag.iter().map(|v| v - shift).collect();
        let mut upper = sup.to_vec();
        let mut upper2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= lower[i].abs() {
                if d[i] != 0.0 {
                    let fact = lower[i] / d[i];
                    lower[i] = fact;
                    d[i + 1] -= fact * upper[i];
                }
            } else {
                let fact = d[i] / lower[i];
                d[i] = lower[i];
                lower[i] = fact;
                let temp = upper[i];
                upper[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    upper2[i] = upper[i + 1];
                    upper[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        if d.iter().any(|v| *v == 0.0 || !v.is_finite()) {
            return Err(Error::SingularResolvent {
                mu: shift,
                tol: 0.0,
            });
        }
        Ok(Self {
            lower,
            diag: d,
            upper,
            upper2,
            swapped,
        })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.diag.len();
        for i in 0..n - 1 {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.lower[i] * b[i];
            } else {
                b[i + 1] -= self.lower[i] * b[i];
            }
        }
        b[n - 1] /= self.diag[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.upper[n - 2] * b[n - 1]) / self.diag[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.upper[i] * b[i + 1] - self.upper2[i] * b[i + 2]) / self.diag[i];
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = rhs.to_vec();
        self.solve_in_place(&mut b);
        b
    }
}
