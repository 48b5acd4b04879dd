//! Run configuration: JSON schema, loading, validation and construction of
//! the numerical objects it describes.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use qnls::asym::{LeadingMode, Regime};
use qnls::fields::{FieldSet, FieldSetSpec};
use qnls::fredholm::{KernelConfig, KernelOptions};
use qnls::numerics::{DEFAULT_ORDER, DEFAULT_PANELS};
use qnls::thermo::{default_grid, ThermoParams, ThermoState};
use qnls::{QnlsError, Result};

/// Field specification given inline or as a path to a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldsRef {
    File(PathBuf),
    Inline(FieldSetSpec),
}

impl Default for FieldsRef {
    fn default() -> Self {
        FieldsRef::Inline(FieldSetSpec::default())
    }
}

/// Discretization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    /// Panels of the Yang-Yang grid.
    pub panels: usize,
    /// Gauss-Legendre order of the Yang-Yang grid.
    pub order: usize,
    /// Fermi-tail cutoff of the Yang-Yang grid.
    pub tail_tol: f64,
    /// Convergence tolerance of the Yang-Yang iteration.
    pub solver_tol: f64,
    /// Regularization width; the temperature-based default when absent.
    pub eps_reg: Option<f64>,
    /// Largest `λ` grid accepted by the Fredholm oracle.
    pub max_nodes: usize,
    pub kernel: KernelOptions,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings {
            panels: DEFAULT_PANELS,
            order: DEFAULT_ORDER,
            tail_tol: 1e-16,
            solver_tol: 1e-13,
            eps_reg: None,
            max_nodes: 2500,
            kernel: KernelOptions::default(),
        }
    }
}

/// A range of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeRange {
    pub t_min: f64,
    pub t_max: f64,
    pub count: usize,
}

impl TimeRange {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.t_min > 0.0 && self.t_max >= self.t_min) || self.count == 0 {
            return Err(QnlsError::Config(format!("invalid sweep range {self:?}")));
        }
        if self.count == 1 {
            return Ok(vec![self.t_min]);
        }
        let step = (self.t_max - self.t_min) / (self.count - 1) as f64;
        Ok((0..self.count).map(|k| self.t_min + step * k as f64).collect())
    }
}

/// Points at which quantities are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    /// Distances, combined with every time.
    pub x: Vec<f64>,
    /// Times.
    pub t: Vec<f64>,
    /// Ratios `x/2t`, combined with every time (alternative to `x`).
    pub lambda0: Vec<f64>,
    /// Time range used by `sweep` and, when `t` is empty, by `compare`.
    pub sweep: Option<TimeRange>,
    /// Also evaluate the Fredholm oracle during a sweep.
    pub oracle: bool,
    /// Seed of the random draws in `checks`.
    pub seed: u64,
    /// Number of random draws per property in `checks`.
    pub draws: usize,
}

/// One evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub t: f64,
}

impl Point {
    pub fn lambda0(&self) -> f64 {
        self.x / (2.0 * self.t)
    }
}

/// Top-level configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub thermo: ThermoParams,
    #[serde(default)]
    pub fields: FieldsRef,
    #[serde(default)]
    pub grid: GridSettings,
    #[serde(default)]
    pub experiment: Experiment,
    /// Evaluation mode of the leading logarithm.
    #[serde(default)]
    pub mode: Option<LeadingMode>,
    /// Expected sign regime of `h`; must agree with the thermodynamic input.
    #[serde(default)]
    pub phase: Option<Regime>,
    /// Output directory used when `--out` is not given.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// A loaded and validated configuration together with its base directory.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub spec: FieldSetSpec,
}

impl Loaded {
    pub fn from_path(path: &Path) -> Result<Loaded> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| QnlsError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_str(&text, base)
    }

    pub fn from_str(text: &str, base: &Path) -> Result<Loaded> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| QnlsError::Config(format!("invalid config: {e}")))?;
        config.thermo.validate()?;
        let spec = match &config.fields {
            FieldsRef::Inline(s) => s.clone(),
            FieldsRef::File(p) => {
                let full = if p.is_absolute() { p.clone() } else { base.join(p) };
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| QnlsError::Config(format!("cannot read field spec {}: {e}", full.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| QnlsError::Config(format!("invalid field spec {}: {e}", full.display())))?
            }
        };
        if let Some(phase) = config.phase {
            let actual = if config.thermo.h < 0.0 { Regime::NegativeH } else { Regime::PositiveH };
            if phase != actual {
                return Err(QnlsError::Config(format!(
                    "phase flag {phase:?} contradicts h = {}",
                    config.thermo.h
                )));
            }
        }
        if let Some(eps) = config.grid.eps_reg {
            if !(eps > 0.0) {
                return Err(QnlsError::Config(format!("eps_reg = {eps} must be positive")));
            }
        }
        let e = &config.experiment;
        if !e.x.is_empty() && !e.lambda0.is_empty() {
            return Err(QnlsError::Config("give either experiment.x or experiment.lambda0, not both".into()));
        }
        if e.t.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(QnlsError::Config("times must be finite and non-negative".into()));
        }
        Ok(Loaded { config, spec })
    }

    pub fn fields(&self) -> Result<FieldSet> {
        FieldSet::new(&self.spec, self.config.thermo.c)
    }

    pub fn thermo(&self) -> Result<ThermoState> {
        let g = &self.config.grid;
        let grid = default_grid(&self.config.thermo, g.tail_tol, g.panels, g.order)?;
        ThermoState::solve_on(self.config.thermo, grid, g.solver_tol)
    }

    pub fn mode(&self, cli: Option<LeadingMode>) -> LeadingMode {
        cli.or(self.config.mode).unwrap_or(LeadingMode::Shifted)
    }

    /// Times of the experiment, falling back to the sweep range.
    pub fn times(&self) -> Result<Vec<f64>> {
        let e = &self.config.experiment;
        if !e.t.is_empty() {
            return Ok(e.t.clone());
        }
        match &e.sweep {
            Some(r) => r.values(),
            None => Err(QnlsError::Config("experiment.t or experiment.sweep is required".into())),
        }
    }

    /// The `λ₀` list, or the ratios implied by an `x` list at time `t`.
    pub fn points(&self, times: &[f64]) -> Result<Vec<Point>> {
        let e = &self.config.experiment;
        let mut out = Vec::new();
        for &t in times {
            if !e.lambda0.is_empty() {
                out.extend(e.lambda0.iter().map(|l| Point { x: 2.0 * t * l, t }));
            } else if !e.x.is_empty() {
                out.extend(e.x.iter().map(|x| Point { x: *x, t }));
            } else {
                return Err(QnlsError::Config("experiment.x or experiment.lambda0 is required".into()));
            }
        }
        Ok(out)
    }

    /// The ratios `λ₀`: the explicit list, or `x/2t` over the experiment points.
    pub fn lambda0s(&self) -> Result<Vec<f64>> {
        let e = &self.config.experiment;
        if !e.lambda0.is_empty() {
            return Ok(e.lambda0.clone());
        }
        Ok(self.points(&self.times()?)?.iter().map(Point::lambda0).collect())
    }

    pub fn kernel(&self, fields: &FieldSet, thermo: &ThermoState, p: Point) -> Result<KernelConfig> {
        let mut cfg = KernelConfig::new(fields.clone(), thermo.clone(), p.x, p.t)?;
        if let Some(eps) = self.config.grid.eps_reg {
            cfg = cfg.with_eps_reg(eps);
            cfg.principal_value_offset = eps.sqrt();
        }
        cfg.options = self.config.grid.kernel;
        cfg.validate()?;
        Ok(cfg)
    }
}
