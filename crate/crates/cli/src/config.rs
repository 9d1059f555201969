//! Experiment configuration (JSON).

use std::path::PathBuf;

use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: PotentialSpec,
    pub space_dim: usize,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub window: WindowSpec,
    pub mode: Mode,
    #[serde(default)]
    pub data: Option<DataSpec>,
    #[serde(default)]
    pub nonlinearity: Option<NonlinearitySpec>,
    /// Second component of a system; defaults to `nonlinearity`.
    #[serde(default)]
    pub nonlinearity2: Option<NonlinearitySpec>,
    #[serde(default)]
    pub matrix: Option<MatrixSpec>,
    #[serde(default)]
    pub mu: Option<MuSpec>,
    #[serde(default)]
    pub iteration: IterationSpec,
    #[serde(default)]
    pub save_solutions: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// c + r^s
    Power { c: f64, s: f64 },
    /// r^s
    PurePower { s: f64 },
    /// e^r
    Exp,
    /// CSV with columns r,q; relative paths are resolved against the config file.
    Tabulated { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_ppu")]
    pub points_per_unit: f64,
    #[serde(default = "default_spectral_scale")]
    pub spectral_scale: f64,
    #[serde(default = "default_truncation")]
    pub truncation_factor: f64,
    #[serde(default = "default_max_sector")]
    pub max_sector: usize,
    /// Fixed outer radius; skips the truncation search.
    #[serde(default)]
    pub r_max: Option<f64>,
}

fn default_ppu() -> f64 {
    200.0
}
fn default_spectral_scale() -> f64 {
    20.0
}
fn default_truncation() -> f64 {
    gsp_core::radial_grid::DEFAULT_TRUNCATION_FACTOR
}
fn default_max_sector() -> usize {
    gsp_core::spectral::DEFAULT_MAX_SECTOR
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points_per_unit: default_ppu(),
            spectral_scale: default_spectral_scale(),
            truncation_factor: default_truncation(),
            max_sector: default_max_sector(),
            r_max: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Replace the sampled constants.
    #[serde(default)]
    pub delta0: Option<f64>,
    #[serde(default)]
    pub c0: Option<f64>,
}

fn default_margin() -> f64 {
    gsp_core::groundstate_space::DEFAULT_MARGIN
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            margin: default_margin(),
            delta0: None,
            c0: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Eigen,
    Linear,
    Semilinear,
    System,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// f = φ
    Groundstate,
    /// f = φ + a φ₂ with φ₂ the second radial eigenfunction
    Mixed { second_mode: f64 },
    /// f = A exp(-r²/w²)
    Gaussian { amplitude: f64, width: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    Constant {
        g: f64,
    },
    Rational {
        kappa: f64,
        #[serde(rename = "K")]
        k_up: f64,
    },
    ExpDecay {
        kappa: f64,
        #[serde(rename = "K")]
        k_up: f64,
        s: f64,
    },
}

impl NonlinearitySpec {
    pub fn build(&self) -> gsp_core::Result<gsp_core::semilinear_solver::Nonlinearity> {
        use gsp_core::semilinear_solver::Nonlinearity;
        match *self {
            NonlinearitySpec::Constant { g } => Nonlinearity::constant(g),
            NonlinearitySpec::Rational { kappa, k_up } => Nonlinearity::rational(kappa, k_up),
            NonlinearitySpec::ExpDecay { kappa, k_up, s } => {
                Nonlinearity::exp_decay(kappa, k_up, s)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MuSpec {
    /// Offsets from Λ (or Λ* in system mode).
    Offsets(Vec<f64>),
    /// `steps` evenly spaced offsets from `from_offset` to `to_offset`, both included.
    Sweep {
        from_offset: f64,
        to_offset: f64,
        steps: usize,
    },
}

impl MuSpec {
    pub fn offsets(&self) -> Vec<f64> {
        match *self {
            MuSpec::Offsets(ref v) => v.clone(),
            MuSpec::Sweep {
                from_offset,
                to_offset,
                steps,
            } => {
                if steps == 1 {
                    return vec![from_offset];
                }
                (0..steps)
                    .map(|k| {
                        from_offset + (to_offset - from_offset) * k as f64 / (steps - 1) as f64
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationSpec {
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol_x")]
    pub tol_x: f64,
    #[serde(default = "default_violation_fraction")]
    pub max_violation_fraction: f64,
}

fn default_damping() -> f64 {
    0.5
}
fn default_max_iter() -> usize {
    500
}
fn default_tol_x() -> f64 {
    1.0e-9
}
fn default_violation_fraction() -> f64 {
    0.05
}

impl Default for IterationSpec {
    fn default() -> Self {
        Self {
            damping: default_damping(),
            max_iter: default_max_iter(),
            tol_x: default_tol_x(),
            max_violation_fraction: default_violation_fraction(),
        }
    }
}

impl IterationSpec {
    pub fn options(&self) -> gsp_core::semilinear_solver::IterationOptions {
        gsp_core::semilinear_solver::IterationOptions {
            damping: self.damping,
            max_iter: self.max_iter,
            tol_x: self.tol_x,
            max_violation_fraction: self.max_violation_fraction,
            require_window: false,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.space_dim == 0 {
            return Err(invalid("space_dim must be >= 1"));
        }
        let g = &self.grid;
        if !(g.points_per_unit > 0.0 && g.spectral_scale > 0.0 && g.truncation_factor > 0.0) {
            return Err(invalid("grid parameters must be positive"));
        }
        if g.max_sector == 0 {
            return Err(invalid("max_sector must be >= 1"));
        }
        if matches!(g.r_max, Some(r) if !(r > 0.0 && r.is_finite())) {
            return Err(invalid("r_max must be positive"));
        }
        let w = &self.window;
        if !(w.margin > 0.0 && w.margin < 1.0) {
            return Err(invalid("window margin must lie in (0, 1)"));
        }
        if w.delta0.is_some() != w.c0.is_some() {
            return Err(invalid("window override needs both delta0 and c0"));
        }
        if self.mode == Mode::Eigen {
            return Ok(());
        }
        let mu = self
            .mu
            .as_ref()
            .ok_or_else(|| invalid("mode needs a mu specification"))?;
        if let MuSpec::Sweep { steps, .. } = mu {
            if *steps == 0 {
                return Err(invalid("sweep steps must be >= 1"));
            }
        }
        let offsets = mu.offsets();
        if offsets.is_empty() {
            return Err(invalid("no mu offsets given"));
        }
        if let Some(o) = offsets.iter().find(|o| !o.is_finite() || **o == 0.0) {
            return Err(invalid(format!(
                "mu offset {o} is not allowed (offset 0 means mu = Lambda)"
            )));
        }
        match self.mode {
            Mode::Linear => {
                if self.data.is_none() {
                    return Err(invalid("linear mode needs `data`"));
                }
            }
            Mode::Semilinear => {
                if self.nonlinearity.is_none() {
                    return Err(invalid("semilinear mode needs `nonlinearity`"));
                }
            }
            Mode::System => {
                if self.nonlinearity.is_none() || self.matrix.is_none() {
                    return Err(invalid("system mode needs `nonlinearity` and `matrix`"));
                }
            }
            Mode::Eigen => {}
        }
        let it = &self.iteration;
        if !(it.damping > 0.0 && it.damping <= 1.0) || it.max_iter == 0 || !(it.tol_x > 0.0) {
            return Err(invalid(
                "iteration needs damping in (0, 1], max_iter >= 1, tol_x > 0",
            ));
        }
        Ok(())
    }
}
