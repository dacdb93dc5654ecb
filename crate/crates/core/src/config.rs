//! TOML run configuration.
//!
//! Every key is optional. Defaults follow the retail application: `δ = 0.8`,
//! `β = 0.95`, one-time outcome-adaptive discounts `δ_e1 = 0.7`,
//! `β_e1 = 0.85`, and a vague prior `C0 = 5I`, `n0 = 10`, `D0 = I`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::causal::{CausalSpec, EffectMode};
use crate::comp::{CompSpec, CompState, DofConvention};
use crate::datagen::{default_r, SimConfig};
use crate::error::{Error, Result};
use crate::io::Dataset;
use crate::matvar::IwParams;
use crate::mvdlm::{check_discount, warmup_level, ModelSpec, NiwState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub partition: PartitionConfig,
    pub causal: CausalConfig,
    pub init: InitConfig,
    pub simulate: SimulateConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Damping of the local linear trend, used unless `f` and `g` are given.
    pub damping: f64,
    pub delta: f64,
    pub beta: f64,
    pub f: Option<Vec<f64>>,
    /// Rows of `G`.
    pub g: Option<Vec<Vec<f64>>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { damping: 0.95, delta: 0.8, beta: 0.95, f: None, g: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub controls: Vec<String>,
    pub experimental: Vec<String>,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self { controls: vec!["C1".into(), "C2".into()], experimental: vec!["E1".into(), "E2".into()] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CausalConfig {
    /// Intervention, as a value of the dataset's time column.
    pub intervention: i64,
    pub oam_delta: f64,
    pub oam_beta: f64,
    /// Conditional-branch discounts; default to the model's.
    pub delta_e: Option<f64>,
    pub beta_e: Option<f64>,
    /// `"realized"` or `"predictive"`.
    pub effect_mode: String,
    /// Log the data at load time and report percent lift.
    pub log_scale: bool,
    pub nsamples: usize,
    pub seed: u64,
    pub filtered: bool,
    /// Horizons of look-ahead forecasts made just before the intervention;
    /// 0 disables them.
    pub lookahead: usize,
    /// `"consistent"` or `"literal"`.
    pub dof_convention: String,
}

impl Default for CausalConfig {
    fn default() -> Self {
        Self {
            intervention: 30,
            oam_delta: 0.7,
            oam_beta: 0.85,
            delta_e: None,
            beta_e: None,
            effect_mode: "realized".into(),
            log_scale: false,
            nsamples: crate::causal::DEFAULT_NSAMPLES,
            seed: 1,
            filtered: false,
            lookahead: 0,
            dof_convention: "consistent".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub c0_scale: f64,
    pub n0: f64,
    pub d0_scale: f64,
    /// Leading rows averaged for the initial level and then skipped by the
    /// filter; 0 starts at zero.
    pub warmup: usize,
    /// Use the initial belief as the first prior rather than evolving it.
    pub as_prior: bool,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { c0_scale: 5.0, n0: 10.0, d0_scale: 1.0, warmup: 5, as_prior: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub q: usize,
    pub qc: usize,
    pub r: f64,
    pub t_total: usize,
    pub intervention: usize,
    pub sigma_dof: f64,
    /// Scale of the inverse Wishart for `Σ`; defaults to the built-in
    /// four-series correlation matrix.
    pub r_matrix: Option<Vec<Vec<f64>>>,
    pub w_scale: f64,
    pub shock: Vec<f64>,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            q: 4,
            qc: 2,
            r: 0.95,
            t_total: 60,
            intervention: 30,
            sigma_dof: 4.0,
            r_matrix: None,
            w_scale: 0.01,
            shock: vec![3.0, 0.5],
            seed: 1,
        }
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(Error::Config(format!("{what} must be a non-empty rectangular array of rows")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every block, whichever command will use it.
    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        let part = &self.partition;
        let (qc, qe) = (part.controls.len(), part.experimental.len());
        self.comp_spec(qc + qe, qc).map_err(as_config)?;
        self.effect_mode().map_err(as_config)?;
        check_discount("causal.oam_delta", self.causal.oam_delta).map_err(as_config)?;
        check_discount("causal.oam_beta", self.causal.oam_beta).map_err(as_config)?;
        if self.causal.nsamples == 0 {
            return Err(Error::Config("causal.nsamples must be at least 1".into()));
        }
        let init = &self.init;
        for (name, v) in [("init.c0_scale", init.c0_scale), ("init.n0", init.n0), ("init.d0_scale", init.d0_scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        self.sim_config().map(|_| ())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn model_spec(&self, q: usize) -> Result<ModelSpec> {
        let m = &self.model;
        match (&m.f, &m.g) {
            (None, None) => ModelSpec::local_trend(q, m.damping, m.delta, m.beta),
            (Some(f), Some(g)) => {
                ModelSpec::new(DVector::from_column_slice(f), rows_to_matrix(g, "model.g")?, q, m.delta, m.beta)
                    .map_err(|e| Error::Config(e.to_string()))
            }
            _ => Err(Error::Config("model.f and model.g must be given together".into())),
        }
    }

    pub fn comp_spec(&self, q: usize, qc: usize) -> Result<CompSpec> {
        let base = self.model_spec(q)?;
        let delta_e = self.causal.delta_e.unwrap_or(base.delta);
        let beta_e = self.causal.beta_e.unwrap_or(base.beta);
        let convention = match self.causal.dof_convention.as_str() {
            "consistent" => DofConvention::Consistent,
            "literal" => DofConvention::Literal,
            other => {
                return Err(Error::Config(format!(
                    "unknown dof_convention {other:?} (expected \"consistent\" or \"literal\")"
                )))
            }
        };
        Ok(CompSpec::new(base, qc, delta_e, beta_e)?.with_dof_convention(convention))
    }

    pub fn effect_mode(&self) -> Result<EffectMode> {
        self.causal.effect_mode.parse()
    }

    /// Vague initial NIW over all columns of `data`.
    pub fn initial_niw(&self, data: &DMatrix<f64>, p: usize) -> Result<NiwState> {
        let init = &self.init;
        let level = if init.warmup == 0 {
            DVector::zeros(data.ncols())
        } else {
            warmup_level(data, init.warmup)?
        };
        NiwState::vague(p, &level, init.c0_scale, init.n0, init.d0_scale).map_err(|e| Error::Config(e.to_string()))
    }

    /// Resolve the configuration against a dataset.
    pub fn prepare_causal(&self, ds: &Dataset) -> Result<PreparedCausal> {
        let part = &self.partition;
        if part.controls.is_empty() || part.experimental.is_empty() {
            return Err(Error::Config("partition needs at least one control and one experimental series".into()));
        }
        if let Some(n) = part.controls.iter().find(|n| part.experimental.contains(n)) {
            return Err(Error::Config(format!("series {n:?} is listed as both control and experimental")));
        }
        let mut names = part.controls.clone();
        names.extend(part.experimental.iter().cloned());
        let all = ds.select(&names)?;
        let (q, qc) = (names.len(), part.controls.len());
        let comp = self.comp_spec(q, qc)?;
        let warmup = self.init.warmup;
        let row = ds.row_of_time(self.causal.intervention)?;
        if row < warmup + 2 {
            return Err(Error::Config(format!(
                "intervention at row {row} leaves fewer than 2 rows after the {warmup}-row warm-up window"
            )));
        }
        // The warm-up rows only set the initial level; filtering starts after them.
        let intervention = row - warmup;
        let data = all.rows(warmup, all.nrows() - warmup).into_owned();
        let mut spec = CausalSpec::new(comp, intervention, self.causal.oam_delta, self.causal.oam_beta)
            .map_err(|e| match e {
                Error::Input(m) => Error::Config(m),
                other => other,
            })?;
        spec.effect_mode = self.effect_mode()?;
        spec.log_scale = self.causal.log_scale;
        spec.nsamples = self.causal.nsamples;
        spec.init_as_prior = self.init.as_prior;
        spec.filtered = self.causal.filtered;
        if spec.nsamples == 0 {
            return Err(Error::Config("causal.nsamples must be at least 1".into()));
        }
        let niw = self.initial_niw(&all, spec.comp.base.p())?;
        let init = CompState::from_niw(&niw, qc)?;
        Ok(PreparedCausal {
            spec,
            init,
            data,
            times: ds.times[warmup..].to_vec(),
            controls: part.controls.clone(),
            experimental: part.experimental.clone(),
        })
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let s = &self.simulate;
        let scale = match &s.r_matrix {
            Some(rows) => rows_to_matrix(rows, "simulate.r_matrix")?,
            None if s.q == 4 => default_r(),
            None => DMatrix::identity(s.q, s.q),
        };
        let cfg = SimConfig {
            q: s.q,
            qc: s.qc,
            r: s.r,
            t_total: s.t_total,
            intervention: s.intervention,
            sigma_prior: IwParams::new(s.sigma_dof, scale).map_err(|e| Error::Config(e.to_string()))?,
            w: DMatrix::identity(2, 2) * s.w_scale,
            shock: DVector::from_column_slice(&s.shock),
            theta0: DMatrix::zeros(2, s.q),
            seed: s.seed,
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Series names used by the simulator: `C1..C{qc}`, `E1..E{qe}`.
    pub fn sim_names(&self) -> (Vec<String>, Vec<String>) {
        let s = &self.simulate;
        let c = (1..=s.qc).map(|i| format!("C{i}")).collect();
        let e = (1..=s.q.saturating_sub(s.qc)).map(|i| format!("E{i}")).collect();
        (c, e)
    }
}

/// Everything `run_causal` needs, with data columns ordered controls first.
#[derive(Debug, Clone)]
pub struct PreparedCausal {
    pub spec: CausalSpec,
    pub init: CompState,
    pub data: DMatrix<f64>,
    pub times: Vec<i64>,
    pub controls: Vec<String>,
    pub experimental: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_file() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!((cfg.model.delta, cfg.model.beta), (0.8, 0.95));
        assert_eq!((cfg.causal.oam_delta, cfg.causal.oam_beta), (0.7, 0.85));
        assert_eq!((cfg.init.c0_scale, cfg.init.n0, cfg.init.d0_scale), (5.0, 10.0, 1.0));
        assert_eq!(cfg.causal.nsamples, 5000);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.causal.delta_e = Some(0.9);
        cfg.model.f = Some(vec![1.0]);
        cfg.model.g = Some(vec![vec![1.0]]);
        assert_eq!(RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(RunConfig::from_toml_str("[model]\ndelt = 0.8\n"), Err(Error::Config(_))));
        for bad in [
            "[model]\ndelta = 1.5\n",
            "[causal]\neffect_mode = \"both\"\n",
            "[model]\nf = [1.0, 0.0]\n",
            "[causal]\noam_beta = 0.0\n",
            "[causal]\ndof_convention = \"other\"\n",
            "[init]\nn0 = -1.0\n",
            "[partition]\ncontrols = []\n",
            "[simulate]\nshock = [1.0]\n",
        ] {
            assert!(matches!(RunConfig::from_toml_str(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn prepare_against_dataset() {
        let values = DMatrix::from_fn(40, 4, |t, j| t as f64 * 0.1 + j as f64);
        let names = ["E1", "C1", "E2", "C2"].map(String::from).to_vec();
        let ds = Dataset::new((101..141).collect(), names, values).unwrap();
        let mut cfg = RunConfig::default();
        cfg.causal.intervention = 130;
        let prep = cfg.prepare_causal(&ds).unwrap();
        assert_eq!(prep.spec.intervention, 25);
        assert_eq!(prep.times[0], 106);
        assert_eq!(prep.data.nrows(), 35);
        assert_eq!(prep.data.column(0), ds.values.column(1).rows(5, 35));
        assert_eq!(prep.data.column(2), ds.values.column(0).rows(5, 35));
        let level = prep.init.c.m.row(0);
        assert!((level[0] - ds.values.column(1).rows(0, 5).mean()).abs() < 1e-12);
        cfg.causal.intervention = 30;
        assert!(matches!(cfg.prepare_causal(&ds), Err(Error::Input(_))));
        cfg.causal.intervention = 130;
        cfg.partition.controls = vec!["C1".into(), "X".into()];
        assert!(cfg.prepare_causal(&ds).is_err());
    }

    #[test]
    fn simulation_defaults() {
        let sim = RunConfig::default().sim_config().unwrap();
        assert_eq!((sim.q, sim.qc, sim.t_total, sim.intervention, sim.r), (4, 2, 60, 30, 0.95));
        assert_eq!(sim.sigma_prior.dof(), 4.0);
    }
}
