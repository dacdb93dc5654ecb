//! Counterfactual prediction with synthetic controls.
//!
//! A single compositional filter runs on the full data up to the intervention
//! time `T`. There the conditional branch forks: the counterfactual branch `e0`
//! is never shown another experimental outcome, while the outcome-adaptive
//! branch `e1` keeps updating on the treated series after a one-time discount
//! drop. Both branches share the control margin.

use nalgebra::{DMatrix, DVector};

use crate::comp::{
    comp_evolve, comp_forecast_k_step, comp_forecast_mc, evolve_conditional, update_conditional, CompSampler,
    CompSpec, CompState,
};
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::matvar::CniwParams;
use crate::mvdlm::{self, check_discount, NiwState};
use crate::rng::RngStream;

pub use crate::ensemble::{summarize, QuantileSummary, DEFAULT_PROBS};

pub const DEFAULT_NSAMPLES: usize = 5000;

const STREAM_E0: u64 = 0;
const STREAM_E1: u64 = 1;
const STREAM_FILTERED: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EffectMode {
    /// Realized treated outcome minus counterfactual draws.
    #[default]
    RealizedVsCounterfactual,
    /// Outcome-adaptive draws minus counterfactual draws, paired by index
    /// across independent streams.
    PredictiveVsPredictive,
}

impl std::str::FromStr for EffectMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "realized" | "realized-vs-counterfactual" => Ok(Self::RealizedVsCounterfactual),
            "predictive" | "predictive-vs-predictive" => Ok(Self::PredictiveVsPredictive),
            other => Err(Error::Config(format!(
                "unknown effect_mode {other:?} (expected \"realized\" or \"predictive\")"
            ))),
        }
    }
}

impl std::fmt::Display for EffectMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::RealizedVsCounterfactual => "realized",
            Self::PredictiveVsPredictive => "predictive",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalSpec {
    pub comp: CompSpec,
    /// Intervention time as a 1-based row index into the data.
    pub intervention: usize,
    pub oam_delta: f64,
    pub oam_beta: f64,
    pub effect_mode: EffectMode,
    pub log_scale: bool,
    pub nsamples: usize,
    /// Treat the initial state as the time-1 prior rather than a time-0
    /// posterior to be evolved.
    pub init_as_prior: bool,
    /// Also produce filtered effects, conditioning on the realized controls.
    pub filtered: bool,
}

impl CausalSpec {
    pub fn new(comp: CompSpec, intervention: usize, oam_delta: f64, oam_beta: f64) -> Result<Self> {
        check_discount("oam_delta", oam_delta)?;
        check_discount("oam_beta", oam_beta)?;
        if intervention < 2 {
            return Err(Error::input(format!("intervention time must be at least 2, got {intervention}")));
        }
        Ok(Self {
            comp,
            intervention,
            oam_delta,
            oam_beta,
            effect_mode: EffectMode::default(),
            log_scale: false,
            nsamples: DEFAULT_NSAMPLES,
            init_as_prior: true,
            filtered: false,
        })
    }

    pub fn qc(&self) -> usize {
        self.comp.qc
    }

    pub fn qe(&self) -> usize {
        self.comp.qe
    }
}

/// Beliefs at one time point. Before the fork `e0 == e1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchState {
    pub c: NiwState,
    pub e0: CniwParams,
    pub e1: CniwParams,
}

impl BranchState {
    pub fn e0_state(&self) -> CompState {
        CompState { c: self.c.clone(), e: self.e0.clone() }
    }

    pub fn e1_state(&self) -> CompState {
        CompState { c: self.c.clone(), e: self.e1.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based time.
    pub t: usize,
    pub prior: BranchState,
    pub posterior: BranchState,
}

/// Monte Carlo output for one post-intervention time.
#[derive(Debug, Clone, PartialEq)]
pub struct PostStep {
    pub t: usize,
    /// 1-step predictive of the experimental series, counterfactual branch.
    pub e0_forecast: Ensemble,
    /// 1-step predictive of the experimental series, outcome-adaptive branch.
    pub e1_forecast: Ensemble,
    pub effect: Ensemble,
    pub filtered_effect: Option<Ensemble>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalRun {
    pub steps: Vec<StepRecord>,
    pub post: Vec<PostStep>,
}

impl CausalRun {
    pub fn step(&self, t: usize) -> Option<&StepRecord> {
        t.checked_sub(1).and_then(|i| self.steps.get(i))
    }

    /// Posterior just before the fork.
    pub fn pre_intervention(&self, spec: &CausalSpec) -> &BranchState {
        &self.steps[spec.intervention - 2].posterior
    }
}

fn check_data(spec: &CausalSpec, data: &DMatrix<f64>) -> Result<()> {
    let q = spec.comp.q();
    if data.ncols() != q {
        return Err(Error::dim(format!("data has {} columns, model has q = {q}", data.ncols())));
    }
    if spec.intervention > data.nrows() {
        return Err(Error::input(format!(
            "intervention time {} exceeds data length {}",
            spec.intervention,
            data.nrows()
        )));
    }
    for t in 0..data.nrows() {
        for j in 0..q {
            if !data[(t, j)].is_finite() {
                let what = if j < spec.qc() { "control" } else { "experimental" };
                return Err(Error::input(format!("missing {what} value at t = {}, series {}", t + 1, j + 1)));
            }
        }
    }
    Ok(())
}

fn experimental_forecast(state: &CompState, f: &DVector<f64>, n: usize, stream: &RngStream) -> Result<Ensemble> {
    let qc = state.qc();
    Ok(comp_forecast_mc(state, f, n, stream)?.columns(qc, state.q() - qc))
}

/// Run the shared filter, fork at `T`, and produce post-intervention
/// ensembles. `data` rows are times; post-`T` experimental columns hold the
/// realized (treated) outcomes, seen only by the outcome-adaptive branch.
pub fn run_causal(spec: &CausalSpec, data: &DMatrix<f64>, init: &CompState, stream: &RngStream) -> Result<CausalRun> {
    check_data(spec, data)?;
    if spec.nsamples == 0 {
        return Err(Error::input("nsamples must be at least 1"));
    }
    let comp = &spec.comp;
    let f = &comp.base.f;
    let (qc, qe) = (spec.qc(), spec.qe());
    let t_int = spec.intervention;

    let mut steps = Vec::with_capacity(data.nrows());
    let mut post_steps = Vec::new();
    let mut post: Option<BranchState> = None;
    for i in 0..data.nrows() {
        let t = i + 1;
        let step = || -> Result<(StepRecord, Option<PostStep>)> {
            let y = data.row(i).transpose();
            let y_c = y.rows(0, qc).into_owned();
            let prior = match &post {
                None if spec.init_as_prior => {
                    init.validate()?;
                    BranchState { c: init.c.clone(), e0: init.e.clone(), e1: init.e.clone() }
                }
                None => {
                    let p = comp_evolve(init, comp)?;
                    BranchState { c: p.c, e0: p.e.clone(), e1: p.e }
                }
                Some(s) => {
                    let c = mvdlm::discount_evolve(&s.c, &comp.base.g, comp.base.delta, comp.base.beta, comp.q())?;
                    let e0 = evolve_conditional(&s.e0, comp, comp.delta_e, comp.beta_e)?;
                    let e1 = if t == t_int {
                        evolve_conditional(&s.e1, comp, spec.oam_delta, spec.oam_beta)?
                    } else {
                        evolve_conditional(&s.e1, comp, comp.delta_e, comp.beta_e)?
                    };
                    BranchState { c, e0, e1 }
                }
            };
            let c_post = mvdlm::update(&prior.c, f, &y_c)?;
            if t < t_int {
                let e = update_conditional(&prior.e0, f, &y)?;
                let posterior = BranchState { c: c_post, e0: e.clone(), e1: e };
                return Ok((StepRecord { t, prior, posterior }, None));
            }

            let tstream = stream.split(t as u64);
            let e0_state = prior.e0_state();
            let e1_state = prior.e1_state();
            let e0_forecast = experimental_forecast(&e0_state, f, spec.nsamples, &tstream.split(STREAM_E0))?;
            let e1_forecast = experimental_forecast(&e1_state, f, spec.nsamples, &tstream.split(STREAM_E1))?;
            let y_e = y.rows(qc, qe).into_owned();
            let effect = match spec.effect_mode {
                EffectMode::RealizedVsCounterfactual => predictive_effect(&EffectSource::Realized(y_e.clone()), &e0_forecast)?,
                EffectMode::PredictiveVsPredictive => {
                    predictive_effect(&EffectSource::Draws(e1_forecast.clone()), &e0_forecast)?
                }
            };

            // e0 sees only the controls; e1 sees everything.
            let e0_post = prior.e0.clone();
            let e1_post = update_conditional(&prior.e1, f, &y)?;
            let posterior = BranchState { c: c_post, e0: e0_post, e1: e1_post };
            let filtered_effect = if spec.filtered {
                Some(filtered_effect(
                    &posterior.e0_state(),
                    f,
                    &y_c,
                    &y_e,
                    spec.nsamples,
                    &tstream.split(STREAM_FILTERED),
                )?)
            } else {
                None
            };
            let record = PostStep { t, e0_forecast, e1_forecast, effect, filtered_effect };
            Ok((StepRecord { t, prior, posterior }, Some(record)))
        };
        let (record, post_step) = step().map_err(|e| e.at_step(t))?;
        post = Some(record.posterior.clone());
        steps.push(record);
        post_steps.extend(post_step);
    }
    Ok(CausalRun { steps, post: post_steps })
}

/// Source of the treated side of an effect.
#[derive(Debug, Clone, PartialEq)]
pub enum EffectSource {
    Realized(DVector<f64>),
    Draws(Ensemble),
}

/// Effect draws `y_e1 - y_e0`.
pub fn predictive_effect(e1: &EffectSource, e0: &Ensemble) -> Result<Ensemble> {
    if e0.is_empty() {
        return Err(Error::input("empty counterfactual ensemble"));
    }
    match e1 {
        EffectSource::Realized(y) => {
            if y.len() != e0.dim() {
                return Err(Error::dim(format!("realized vector has length {}, ensemble has {}", y.len(), e0.dim())));
            }
            let mut draws = -e0.draws().clone();
            for mut row in draws.row_iter_mut() {
                row += y.transpose();
            }
            Ensemble::new(draws)
        }
        EffectSource::Draws(e) => {
            if e.is_empty() {
                return Err(Error::input("empty treated ensemble"));
            }
            if e.dim() != e0.dim() || e.len() != e0.len() {
                return Err(Error::dim(format!(
                    "ensembles are {}x{} and {}x{}",
                    e.len(),
                    e.dim(),
                    e0.len(),
                    e0.dim()
                )));
            }
            Ensemble::new(e.draws() - e0.draws())
        }
    }
}

/// Draws of `y_e0` from the time-`t` posterior conditioned on the realized
/// controls, and the implied effects `realized - y_e0`.
pub fn filtered_effect(
    post: &CompState,
    f: &DVector<f64>,
    y_c: &DVector<f64>,
    realized_e: &DVector<f64>,
    nsamples: usize,
    stream: &RngStream,
) -> Result<Ensemble> {
    predictive_effect(
        &EffectSource::Realized(realized_e.clone()),
        &filtered_counterfactual(post, f, y_c, nsamples, stream)?,
    )
}

/// `y_e0' ~ N(F' Θ_e + (y_c' - F' Θ_c) Γ_e', Ψ_e)` under posterior draws.
pub fn filtered_counterfactual(
    post: &CompState,
    f: &DVector<f64>,
    y_c: &DVector<f64>,
    nsamples: usize,
    stream: &RngStream,
) -> Result<Ensemble> {
    if nsamples == 0 {
        return Err(Error::input("nsamples must be at least 1"));
    }
    if y_c.len() != post.qc() {
        return Err(Error::dim(format!("control vector has length {}, expected {}", y_c.len(), post.qc())));
    }
    let sampler = CompSampler::new(post, f)?;
    let qe = post.q() - post.qc();
    let mut draws = DMatrix::zeros(nsamples, qe);
    for i in 0..nsamples {
        let mut rng = stream.split(i as u64).rng();
        let params = sampler.sample_params(&mut rng);
        let y_e = crate::comp::observe_conditional(f, &params, y_c, &mut rng);
        draws.row_mut(i).copy_from(&y_e.transpose());
    }
    Ensemble::new(draws)
}

/// Percent lift `100 (exp(effect) - 1)` for log-scale analyses.
pub fn lift_transform(effect: &Ensemble, spec: &CausalSpec) -> Result<Ensemble> {
    if !spec.log_scale {
        return Err(Error::Mode("lift requires log-scale observations (log_scale = true)".into()));
    }
    Ok(lift(effect))
}

pub(crate) fn lift(effect: &Ensemble) -> Ensemble {
    effect.map(|x| 100.0 * x.exp_m1())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lookahead {
    pub e0_forecast: Vec<Ensemble>,
    pub e1_forecast: Vec<Ensemble>,
    pub effect: Vec<Ensemble>,
}

/// `k`-step forecasts of both branches from the posterior at 1-based time
/// `origin`. If `origin + 1` is the intervention time the outcome-adaptive
/// branch takes its discount drop on the first step. Realized-mode effects
/// need `realized` (`k x q_e`); predictive mode ignores it.
pub fn lookahead_effect(
    state: &BranchState,
    origin: usize,
    spec: &CausalSpec,
    k: usize,
    realized: Option<&DMatrix<f64>>,
    stream: &RngStream,
) -> Result<Lookahead> {
    if k == 0 {
        return Err(Error::input("horizon k must be at least 1"));
    }
    let comp = &spec.comp;
    let c = mvdlm::discount_evolve(&state.c, &comp.base.g, comp.base.delta, comp.base.beta, comp.q())?;
    let e0 = evolve_conditional(&state.e0, comp, comp.delta_e, comp.beta_e)?;
    let e1 = if origin + 1 == spec.intervention {
        evolve_conditional(&state.e1, comp, spec.oam_delta, spec.oam_beta)?
    } else {
        evolve_conditional(&state.e1, comp, comp.delta_e, comp.beta_e)?
    };
    let (qc, qe) = (spec.qc(), spec.qe());
    let project = |v: Vec<Ensemble>| -> Vec<Ensemble> { v.into_iter().map(|e| e.columns(qc, qe)).collect() };
    let e0_forecast = project(comp_forecast_k_step(
        &CompState { c: c.clone(), e: e0 },
        comp,
        k,
        spec.nsamples,
        &stream.split(STREAM_E0),
    )?);
    let e1_forecast =
        project(comp_forecast_k_step(&CompState { c, e: e1 }, comp, k, spec.nsamples, &stream.split(STREAM_E1))?);
    let effect = match spec.effect_mode {
        EffectMode::PredictiveVsPredictive => e1_forecast
            .iter()
            .zip(&e0_forecast)
            .map(|(a, b)| predictive_effect(&EffectSource::Draws(a.clone()), b))
            .collect::<Result<Vec<_>>>()?,
        EffectMode::RealizedVsCounterfactual => {
            let realized = realized.ok_or_else(|| {
                Error::Mode("realized-vs-counterfactual look-ahead needs the realized outcomes".into())
            })?;
            if realized.nrows() < k || realized.ncols() != qe {
                return Err(Error::dim(format!(
                    "realized outcomes are {}x{}, need at least {k}x{qe}",
                    realized.nrows(),
                    realized.ncols()
                )));
            }
            e0_forecast
                .iter()
                .enumerate()
                .map(|(h, b)| predictive_effect(&EffectSource::Realized(realized.row(h).transpose()), b))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(Lookahead { e0_forecast, e1_forecast, effect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mvdlm::ModelSpec;

    fn comp() -> CompSpec {
        CompSpec::matched(ModelSpec::local_trend(4, 0.95, 0.8, 0.95).unwrap(), 2).unwrap()
    }

    fn data(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, 4, |t, j| {
            let x = t as f64;
            1.0 + 0.05 * x + 0.3 * (0.7 * x + j as f64).sin() + 0.1 * (1.3 * x * (j + 1) as f64).cos()
        })
    }

    fn init() -> CompState {
        let level = DVector::from_element(4, 1.0);
        CompState::from_niw(&NiwState::vague(2, &level, 5.0, 10.0, 1.0).unwrap(), 2).unwrap()
    }

    fn causal_spec(t: usize) -> CausalSpec {
        let mut spec = CausalSpec::new(comp(), t, 0.7, 0.85).unwrap();
        spec.nsamples = 2000;
        spec
    }

    fn ens(rows: Vec<Vec<f64>>) -> Ensemble {
        let n = rows.len();
        let d = rows[0].len();
        Ensemble::new(DMatrix::from_fn(n, d, |i, j| rows[i][j])).unwrap()
    }

    #[test]
    fn spec_rejects_bad_inputs() {
        assert!(CausalSpec::new(comp(), 1, 0.7, 0.85).is_err());
        assert!(CausalSpec::new(comp(), 10, 0.0, 0.85).is_err());
        assert!(CausalSpec::new(comp(), 10, 0.7, 1.2).is_err());
    }

    #[test]
    fn effect_mode_parses() {
        assert_eq!("realized".parse::<EffectMode>().unwrap(), EffectMode::RealizedVsCounterfactual);
        assert_eq!("predictive".parse::<EffectMode>().unwrap(), EffectMode::PredictiveVsPredictive);
        assert!("both".parse::<EffectMode>().is_err());
        assert_eq!(EffectMode::PredictiveVsPredictive.to_string(), "predictive");
    }

    #[test]
    fn lift_examples() {
        let mut spec = causal_spec(5);
        spec.log_scale = true;
        let effect = ens(vec![vec![0.0, 2f64.ln(), -(2f64.ln())]]);
        let lifted = lift_transform(&effect, &spec).unwrap();
        assert_eq!(lifted.draws()[(0, 0)], 0.0);
        assert!((lifted.draws()[(0, 1)] - 100.0).abs() < 1e-12);
        assert!((lifted.draws()[(0, 2)] + 50.0).abs() < 1e-12);
    }

    #[test]
    fn lift_requires_log_scale() {
        let effect = ens(vec![vec![0.1]]);
        let err = lift_transform(&effect, &causal_spec(5)).unwrap_err();
        assert!(matches!(err, Error::Mode(_)));
    }

    #[test]
    fn realized_equal_to_draws_gives_zero() {
        let e0 = ens(vec![vec![1.5, -2.0]; 4]);
        let effect = predictive_effect(&EffectSource::Realized(DVector::from_vec(vec![1.5, -2.0])), &e0).unwrap();
        assert!(effect.draws().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn point_mass_modes_agree() {
        let e0 = ens(vec![vec![0.2, 1.0], vec![-0.4, 3.0], vec![1.1, 0.5]]);
        let y = DVector::from_vec(vec![2.0, -1.0]);
        let a = predictive_effect(&EffectSource::Realized(y.clone()), &e0).unwrap();
        let b = predictive_effect(&EffectSource::Draws(ens(vec![vec![2.0, -1.0]; 3])), &e0).unwrap();
        assert_eq!(a, b);
        assert!((a.mean()[0] - (2.0 - e0.mean()[0])).abs() < 1e-12);
    }

    #[test]
    fn effect_dimension_mismatch() {
        let e0 = ens(vec![vec![0.0, 0.0]]);
        assert!(predictive_effect(&EffectSource::Realized(DVector::zeros(3)), &e0).is_err());
        assert!(predictive_effect(&EffectSource::Draws(ens(vec![vec![0.0]])), &e0).is_err());
    }

    #[test]
    fn branches_identical_before_intervention() {
        let spec = causal_spec(12);
        let run = run_causal(&spec, &data(20), &init(), &RngStream::new(3)).unwrap();
        for step in &run.steps[..11] {
            assert_eq!(step.prior.e0, step.prior.e1);
            assert_eq!(step.posterior.e0, step.posterior.e1);
        }
        assert_eq!(run.post.len(), 9);
        assert_eq!(run.post[0].t, 12);
        assert_eq!(run.post[0].e0_forecast.len(), 2000);
    }

    #[test]
    fn oam_drop_is_applied_once() {
        let spec = causal_spec(12);
        let run = run_causal(&spec, &data(20), &init(), &RngStream::new(3)).unwrap();
        let qe1 = (spec.qe() - 1) as f64;
        let standard = |s: f64| 0.95 * s - 0.05 * qe1;
        let dropped = |s: f64| 0.85 * s - 0.15 * qe1;
        for t in 2..=20 {
            let prev = &run.step(t - 1).unwrap().posterior;
            let prior = &run.step(t).unwrap().prior;
            let expect = if t == 12 { dropped(prev.e1.dof) } else { standard(prev.e1.dof) };
            assert!((prior.e1.dof - expect).abs() < 1e-12, "t = {t}");
            assert!((prior.e0.dof - standard(prev.e0.dof)).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn counterfactual_ignores_post_intervention_outcomes() {
        let spec = causal_spec(12);
        let base = data(20);
        let mut shifted = base.clone();
        for t in 11..20 {
            shifted[(t, 2)] += 5.0;
            shifted[(t, 3)] -= 3.0;
        }
        let stream = RngStream::new(9);
        let a = run_causal(&spec, &base, &init(), &stream).unwrap();
        let b = run_causal(&spec, &shifted, &init(), &stream).unwrap();
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert_eq!(x.posterior.c, y.posterior.c);
            assert_eq!(x.posterior.e0, y.posterior.e0);
        }
        for (x, y) in a.post.iter().zip(&b.post) {
            assert_eq!(x.e0_forecast, y.e0_forecast);
        }
        assert_ne!(a.steps[19].posterior.e1, b.steps[19].posterior.e1);
    }

    #[test]
    fn realized_effect_mean_matches_forecast() {
        let spec = causal_spec(12);
        let d = data(20);
        let run = run_causal(&spec, &d, &init(), &RngStream::new(4)).unwrap();
        for p in &run.post {
            let y = d.row(p.t - 1).columns(2, 2).transpose();
            let diff = p.effect.mean() - (&y - p.e0_forecast.mean());
            assert!(diff.amax() < 1e-9);
        }
    }

    #[test]
    fn missing_values_rejected() {
        let mut d = data(20);
        d[(15, 0)] = f64::NAN;
        let err = run_causal(&causal_spec(12), &d, &init(), &RngStream::new(1)).unwrap_err();
        assert_eq!(err.kind(), crate::ErrorKind::Data);
        assert!(run_causal(&causal_spec(25), &data(20), &init(), &RngStream::new(1)).is_err());
    }

    fn conditioned_state(gamma: f64) -> CompState {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 0.0]);
        let d = DMatrix::from_row_slice(2, 2, &[1.0, gamma, gamma, 1.0]);
        let c = DMatrix::identity(2, 2) * 0.01;
        CompState::from_niw(&NiwState::new(m, c, 40.0, d).unwrap(), 1).unwrap()
    }

    #[test]
    fn filtered_at_forecast_mean_matches_predictive() {
        let state = conditioned_state(0.0);
        let f = DVector::from_vec(vec![1.0, 0.0]);
        let stream = RngStream::new(5);
        let filtered = filtered_counterfactual(&state, &f, &DVector::from_vec(vec![1.0]), 20000, &stream).unwrap();
        let predictive = comp_forecast_mc(&state, &f, 20000, &stream).unwrap().columns(1, 1);
        let se = (filtered.mean_std_error()[0].powi(2) + predictive.mean_std_error()[0].powi(2)).sqrt();
        assert!((filtered.mean()[0] - predictive.mean()[0]).abs() < 4.0 * se);
        assert_eq!(filtered.len(), 20000);
    }

    #[test]
    fn filtered_follows_strong_positive_gamma() {
        let state = conditioned_state(0.9);
        let f = DVector::from_vec(vec![1.0, 0.0]);
        let stream = RngStream::new(6);
        let filtered = filtered_counterfactual(&state, &f, &DVector::from_vec(vec![3.0]), 5000, &stream).unwrap();
        let predictive = comp_forecast_mc(&state, &f, 5000, &stream).unwrap().columns(1, 1);
        assert!(filtered.mean()[0] > predictive.mean()[0] + 1.0);
    }

    #[test]
    fn filtered_effect_in_run() {
        let mut spec = causal_spec(12);
        spec.filtered = true;
        let run = run_causal(&spec, &data(20), &init(), &RngStream::new(2)).unwrap();
        assert!(run.post.iter().all(|p| p.filtered_effect.as_ref().map(Ensemble::len) == Some(2000)));
    }

    #[test]
    fn lookahead_widens_with_horizon() {
        let spec = causal_spec(12);
        let run = run_causal(&spec, &data(20), &init(), &RngStream::new(7)).unwrap();
        let mut pspec = spec.clone();
        pspec.effect_mode = EffectMode::PredictiveVsPredictive;
        pspec.nsamples = 4000;
        let look = lookahead_effect(run.pre_intervention(&spec), 11, &pspec, 6, None, &RngStream::new(8)).unwrap();
        assert_eq!(look.effect.len(), 6);
        for j in 0..2 {
            let widths: Vec<f64> = look
                .e0_forecast
                .iter()
                .map(|e| {
                    let q = e.column_quantiles(j, &[0.05, 0.95]);
                    q[1] - q[0]
                })
                .collect();
            assert!(widths.windows(2).all(|w| w[1] > w[0]), "{widths:?}");
        }
    }

    #[test]
    fn lookahead_first_step_matches_run() {
        let spec = causal_spec(12);
        let run = run_causal(&spec, &data(20), &init(), &RngStream::new(7)).unwrap();
        let look = lookahead_effect(run.pre_intervention(&spec), 11, &spec, 1, None, &RngStream::new(8));
        assert!(matches!(look, Err(Error::Mode(_))));
        let realized = data(20).view((11, 2), (1, 2)).into_owned();
        let look = lookahead_effect(run.pre_intervention(&spec), 11, &spec, 1, Some(&realized), &RngStream::new(8)).unwrap();
        let (a, b) = (&look.effect[0], &run.post[0].effect);
        for j in 0..2 {
            let se = (a.mean_std_error()[j].powi(2) + b.mean_std_error()[j].powi(2)).sqrt();
            assert!((a.mean()[j] - b.mean()[j]).abs() < 4.0 * se);
            let ratio = a.std_dev()[j] / b.std_dev()[j];
            assert!((ratio - 1.0).abs() < 0.1, "{ratio}");
        }
    }

    #[test]
    fn identical_branches_center_effect_at_zero() {
        let mut spec = CausalSpec::new(comp(), 12, 0.8, 0.95).unwrap();
        spec.effect_mode = EffectMode::PredictiveVsPredictive;
        spec.nsamples = 4000;
        let run = run_causal(&spec, &data(20), &init(), &RngStream::new(1)).unwrap();
        let look = lookahead_effect(run.pre_intervention(&spec), 11, &spec, 4, None, &RngStream::new(2)).unwrap();
        for e in &look.effect {
            let (m, se) = (e.mean(), e.mean_std_error());
            for j in 0..2 {
                assert!(m[j].abs() < 4.0 * se[j], "{} vs {}", m[j], se[j]);
            }
        }
    }
}
