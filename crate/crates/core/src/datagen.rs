//! Synthetic data for counterfactual studies, and SVD-based stratification of
//! unit-level panels.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::CholFactor;
use crate::matvar::{standard_mn, IwParams};
use crate::mvdlm::ModelSpec;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub q: usize,
    pub qc: usize,
    pub r: f64,
    pub t_total: usize,
    /// 1-based row at which the treated path is shocked.
    pub intervention: usize,
    /// `Σ` is drawn once from this law and held fixed.
    pub sigma_prior: IwParams,
    /// State innovation column variance, `Ω_t ~ MN(0, W, Σ)`.
    pub w: DMatrix<f64>,
    /// Per-experimental-series shock standard deviations.
    pub shock: DVector<f64>,
    pub theta0: DMatrix<f64>,
    pub seed: u64,
}

/// Correlation matrix for controls `C1, C2` and experimental `E1, E2`: the
/// controls are moderately correlated, `E2` tracks them closely and `E1` only
/// weakly.
pub fn default_r() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, 0.6, 0.1, 0.7, //
            0.6, 1.0, 0.1, 0.7, //
            0.1, 0.1, 1.0, 0.2, //
            0.7, 0.7, 0.2, 1.0,
        ],
    )
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            q: 4,
            qc: 2,
            r: 0.95,
            t_total: 60,
            intervention: 30,
            sigma_prior: IwParams::new(4.0, default_r()).expect("default R is s.p.d."),
            w: DMatrix::identity(2, 2) * 0.01,
            shock: DVector::from_vec(vec![3.0, 0.5]),
            theta0: DMatrix::zeros(2, 4),
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn qe(&self) -> usize {
        self.q - self.qc
    }

    pub fn model(&self) -> Result<ModelSpec> {
        ModelSpec::local_trend(self.q, self.r, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(Error::input(format!("damping r must lie in (0, 1], got {}", self.r)));
        }
        if self.qc == 0 || self.qc >= self.q {
            return Err(Error::input(format!("need 1 <= qc < q, got qc = {}, q = {}", self.qc, self.q)));
        }
        if self.intervention < 2 || self.intervention >= self.t_total {
            return Err(Error::input(format!(
                "intervention {} must satisfy 2 <= T < T_total = {}",
                self.intervention, self.t_total
            )));
        }
        if self.sigma_prior.dim() != self.q {
            return Err(Error::input(format!("sigma prior is {}-dimensional, q = {}", self.sigma_prior.dim(), self.q)));
        }
        if self.shock.len() != self.qe() {
            return Err(Error::input(format!("shock has length {}, expected qe = {}", self.shock.len(), self.qe())));
        }
        if self.shock.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::input("shock scales must be finite and non-negative"));
        }
        if self.w.shape() != (2, 2) || self.theta0.shape() != (2, self.q) {
            return Err(Error::input("W must be 2x2 and theta0 must be 2 x q"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    /// `T_total x q`; experimental columns carry the treated path.
    pub observed: DMatrix<f64>,
    /// `T_total x q_e` untreated experimental series.
    pub counterfactual: DMatrix<f64>,
    /// `T_total x q_e` treated experimental series.
    pub treated: DMatrix<f64>,
    pub states_counterfactual: Vec<DMatrix<f64>>,
    pub states_treated: Vec<DMatrix<f64>>,
    /// `T_total x q` observation errors (shared by both paths).
    pub noise: DMatrix<f64>,
    /// Realized `p x q_e` shock added to `Θ_e` at the intervention.
    pub shock_draw: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub r_corr: DMatrix<f64>,
}

pub fn correlation(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let sd = cov.diagonal().map(f64::sqrt);
    DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| cov[(i, j)] / (sd[i] * sd[j]))
}

/// Damped linear growth simulation with a constant `Σ`. The counterfactual
/// and treated paths share every innovation; they differ only by the shock
/// added to the experimental state columns at `T`.
pub fn simulate(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let model = cfg.model()?;
    let (q, qc, qe) = (cfg.q, cfg.qc, cfg.qe());
    let stream = RngStream::new(cfg.seed);

    let sigma = cfg.sigma_prior.sample(&mut stream.split(0).rng())?;
    let sigma_l = CholFactor::new(&sigma, "Sigma")?;
    let w_l = CholFactor::new(&cfg.w, "W")?;

    let mut shock_rng = stream.split(1).rng();
    let shock_draw = DMatrix::from_fn(2, qe, |_, j| {
        let z: f64 = StandardNormal.sample(&mut shock_rng);
        cfg.shock[j] * z
    });

    let mut observed = DMatrix::zeros(cfg.t_total, q);
    let mut counterfactual = DMatrix::zeros(cfg.t_total, qe);
    let mut treated = DMatrix::zeros(cfg.t_total, qe);
    let mut noise = DMatrix::zeros(cfg.t_total, q);
    let mut states_counterfactual = Vec::with_capacity(cfg.t_total);
    let mut states_treated = Vec::with_capacity(cfg.t_total);
    let (mut theta0, mut theta1) = (cfg.theta0.clone(), cfg.theta0.clone());
    for i in 0..cfg.t_total {
        let t = i + 1;
        let mut rng = stream.split(2 + i as u64).rng();
        let omega = standard_mn(w_l.l(), sigma_l.l(), &mut rng);
        theta0 = &model.g * &theta0 + &omega;
        theta1 = &model.g * &theta1 + &omega;
        if t == cfg.intervention {
            let mut e = theta1.columns_mut(qc, qe);
            e += &shock_draw;
        }
        let z = DVector::<f64>::from_fn(q, |_, _| StandardNormal.sample(&mut rng));
        let nu = sigma_l.l() * z;
        let y0 = theta0.transpose() * &model.f + &nu;
        let y1 = theta1.transpose() * &model.f + &nu;
        noise.row_mut(i).copy_from(&nu.transpose());
        observed.row_mut(i).copy_from(&y1.transpose());
        counterfactual.row_mut(i).copy_from(&y0.rows(qc, qe).transpose());
        treated.row_mut(i).copy_from(&y1.rows(qc, qe).transpose());
        states_counterfactual.push(theta0.clone());
        states_treated.push(theta1.clone());
    }
    let r_corr = correlation(cfg.sigma_prior.scale());
    Ok(SimOutput {
        observed,
        counterfactual,
        treated,
        states_counterfactual,
        states_treated,
        noise,
        shock_draw,
        sigma,
        r_corr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupLabel {
    Lo,
    Hi,
}

impl std::fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Lo => "Lo",
            Self::Hi => "Hi",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stratification {
    pub loadings: DVector<f64>,
    pub median: f64,
    pub labels: Vec<GroupLabel>,
}

/// Split units by their loading on factor `factor` (1-based) of the
/// time-centered `units x time` panel: `Hi` above the median, `Lo` otherwise.
///
/// Signs are fixed so each time factor has a non-negative sum.
pub fn svd_stratify(panel: &DMatrix<f64>, factor: usize) -> Result<Stratification> {
    let (units, times) = panel.shape();
    if units < 2 || times == 0 {
        return Err(Error::input(format!("panel must have at least 2 units and 1 time, got {units}x{times}")));
    }
    if panel.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("panel contains non-finite values"));
    }
    if factor == 0 {
        return Err(Error::input("factor index is 1-based"));
    }
    let mut centered = panel.clone();
    for mut col in centered.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let svd = centered.svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V'");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s_max = svd.singular_values.max();
    let tol = s_max * (units.max(times) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol && s > 0.0).count();
    if factor > rank {
        return Err(Error::input(format!("factor {factor} requested but the centered panel has rank {rank}")));
    }
    let k = order[factor - 1];
    let sign = if v_t.row(k).sum() < 0.0 { -1.0 } else { 1.0 };
    let loadings = u.column(k) * (svd.singular_values[k] * sign);

    let mut sorted: Vec<f64> = loadings.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let median = crate::ensemble::quantile_sorted(&sorted, 0.5);
    let labels = loadings.iter().map(|&l| if l > median { GroupLabel::Hi } else { GroupLabel::Lo }).collect();
    Ok(Stratification { loadings, median, labels })
}

/// Per-group, per-time means of a `units x time` panel. Returns
/// `n_groups x time`.
pub fn aggregate_groups(panel: &DMatrix<f64>, labels: &[usize], n_groups: usize) -> Result<DMatrix<f64>> {
    if labels.len() != panel.nrows() {
        return Err(Error::input(format!("{} labels for {} units", labels.len(), panel.nrows())));
    }
    let mut sums = DMatrix::zeros(n_groups, panel.ncols());
    let mut counts = vec![0usize; n_groups];
    for (i, &g) in labels.iter().enumerate() {
        if g >= n_groups {
            return Err(Error::input(format!("unit {} has group {g}, only {n_groups} groups", i + 1)));
        }
        let mut row = sums.row_mut(g);
        row += panel.row(i);
        counts[g] += 1;
    }
    for (g, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(Error::input(format!("group {g} is empty")));
        }
        let mut row = sums.row_mut(g);
        row /= n as f64;
    }
    Ok(sums)
}
