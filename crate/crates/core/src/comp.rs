//! Compositional (NIW-CNIW) filtering.
//!
//! The belief is split into a control margin `(Θ_c, Σ_c) ~ NIW(M_c, C, n, D_c)`
//! and a conditional `(Θ_e, Γ_e, Ψ_e) | Θ_c ~ CNIW(Z, C_e, s_e, H)`. The two
//! parts evolve with their own discounts and update independently; the
//! conditional can also be left untouched when only the controls are seen.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::linalg::{outer, symmetrize, CholFactor};
use crate::matvar::{niw_to_cniw, standard_mn, CniwParams, CniwSampler, IwParams};
use crate::mvdlm::{self, discount_evolve, evolve_dof, check_discount, ModelSpec, NiwSampler, NiwState};
use crate::rng::RngStream;

/// Which series count enters the discounted d.o.f. of the conditional
/// branch, `s_e* = β_e s_e - (1 - β_e)(k - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DofConvention {
    /// `k = q_e`, the dimension of `Ψ_e`. Keeps `s_e = n + q_c` through
    /// evolution, so a state initialized from an NIW belief tracks the
    /// standard filter exactly when the discounts agree.
    #[default]
    Consistent,
    /// `k = q`, the full series count.
    Literal,
}

/// How k-step simulation treats the volatility parameters along a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HorizonVolatility {
    /// Draw `(Σ_c, Γ_e, Ψ_e)` once per path and hold them over the horizon.
    #[default]
    FixedPerPath,
    /// Redraw them at every horizon from the discount-deflated laws.
    Redraw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompSpec {
    pub base: ModelSpec,
    pub qc: usize,
    pub qe: usize,
    pub delta_e: f64,
    pub beta_e: f64,
    pub dof_convention: DofConvention,
    pub horizon_volatility: HorizonVolatility,
}

impl CompSpec {
    pub fn new(base: ModelSpec, qc: usize, delta_e: f64, beta_e: f64) -> Result<Self> {
        if qc == 0 || qc >= base.q {
            return Err(Error::Partition(format!(
                "need 1 <= qc < q; got qc = {qc}, q = {} (use the standard filter when one block is empty)",
                base.q
            )));
        }
        check_discount("delta_e", delta_e)?;
        check_discount("beta_e", beta_e)?;
        let qe = base.q - qc;
        Ok(Self {
            base,
            qc,
            qe,
            delta_e,
            beta_e,
            dof_convention: DofConvention::default(),
            horizon_volatility: HorizonVolatility::default(),
        })
    }

    /// Conditional discounts equal to the margin's.
    pub fn matched(base: ModelSpec, qc: usize) -> Result<Self> {
        let (d, b) = (base.delta, base.beta);
        Self::new(base, qc, d, b)
    }

    pub fn with_dof_convention(mut self, convention: DofConvention) -> Self {
        self.dof_convention = convention;
        self
    }

    pub fn with_horizon_volatility(mut self, policy: HorizonVolatility) -> Self {
        self.horizon_volatility = policy;
        self
    }

    pub fn q(&self) -> usize {
        self.base.q
    }

    fn conditional_dof_dim(&self) -> usize {
        match self.dof_convention {
            DofConvention::Consistent => self.qe,
            DofConvention::Literal => self.base.q,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompState {
    /// Control margin: `M_c` is `p x q_c`, `D` is `q_c x q_c`.
    pub c: NiwState,
    pub e: CniwParams,
}

impl CompState {
    pub fn new(c: NiwState, e: CniwParams) -> Result<Self> {
        let s = Self { c, e };
        s.validate()?;
        Ok(s)
    }

    /// Split a full NIW belief: `NIW(M_c, C, n, D_c)` and
    /// `CNIW(M, C, n + q_c, D)`.
    pub fn from_niw(niw: &NiwState, qc: usize) -> Result<Self> {
        niw.validate()?;
        let e = niw_to_cniw(&niw.m, &niw.c, niw.n, &niw.d, qc)?;
        let c = NiwState {
            m: niw.m.columns(0, qc).into_owned(),
            c: niw.c.clone(),
            n: niw.n,
            d: niw.d.view((0, 0), (qc, qc)).into_owned(),
        };
        Ok(Self { c, e })
    }

    pub fn validate(&self) -> Result<()> {
        self.c.validate()?;
        if self.c.q() != self.e.qc || self.c.p() != self.e.p() {
            return Err(Error::dim(format!(
                "control margin is {}x{} but conditional expects {}x{}",
                self.c.p(),
                self.c.q(),
                self.e.p(),
                self.e.qc
            )));
        }
        Ok(())
    }

    pub fn qc(&self) -> usize {
        self.e.qc
    }

    pub fn q(&self) -> usize {
        self.e.q()
    }

    pub fn sampler(&self, f: &DVector<f64>) -> Result<CompSampler> {
        CompSampler::new(self, f)
    }
}

/// Evolve the conditional branch alone.
pub fn evolve_conditional(e: &CniwParams, spec: &CompSpec, delta_e: f64, beta_e: f64) -> Result<CniwParams> {
    check_discount("delta_e", delta_e)?;
    check_discount("beta_e", beta_e)?;
    let g = &spec.base.g;
    let dof = evolve_dof(e.dof, beta_e, spec.conditional_dof_dim())?;
    Ok(CniwParams {
        z: g * &e.z,
        col_var: symmetrize(&(g * &e.col_var * g.transpose() / delta_e)),
        dof,
        h: &e.h * beta_e,
        qc: e.qc,
    })
}

fn check_state(state: &CompState, spec: &CompSpec) -> Result<()> {
    if state.qc() != spec.qc || state.q() != spec.q() || state.c.p() != spec.base.p() {
        return Err(Error::dim(format!(
            "state (p = {}, q = {}, qc = {}) does not match spec (p = {}, q = {}, qc = {})",
            state.c.p(),
            state.q(),
            state.qc(),
            spec.base.p(),
            spec.q(),
            spec.qc
        )));
    }
    Ok(())
}

/// Evolve the margin with `(δ, β)` and the conditional with the given
/// discounts. The margin's d.o.f. discount uses the full `q`.
pub fn comp_evolve_with(post: &CompState, spec: &CompSpec, delta_e: f64, beta_e: f64) -> Result<CompState> {
    check_state(post, spec)?;
    let c = discount_evolve(&post.c, &spec.base.g, spec.base.delta, spec.base.beta, spec.q())?;
    let e = evolve_conditional(&post.e, spec, delta_e, beta_e)?;
    Ok(CompState { c, e })
}

pub fn comp_evolve(post: &CompState, spec: &CompSpec) -> Result<CompState> {
    comp_evolve_with(post, spec, spec.delta_e, spec.beta_e)
}

fn check_obs(y: &DVector<f64>, len: usize, what: &str) -> Result<()> {
    if y.len() != len {
        return Err(Error::dim(format!("{what} has length {}, expected {len}", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::input(format!("non-finite value in {what}")));
    }
    Ok(())
}

/// Conditional-branch update on the full `q`-vector `y`:
/// `z = y - Z*' F`, `v = 1 + F' C_e* F`, `A = C_e* F / v`,
/// `Z = Z* + A z'`, `C_e = C_e* - A A' v`, `s_e = s_e* + 1`, `H = H* + z z' / v`.
///
/// Every column of `Z` and every block of `H` moves, including the control
/// columns.
pub fn update_conditional(e: &CniwParams, f: &DVector<f64>, y: &DVector<f64>) -> Result<CniwParams> {
    check_obs(y, e.q(), "observation")?;
    if f.len() != e.p() {
        return Err(Error::dim(format!("F has length {}, expected {}", f.len(), e.p())));
    }
    let cf = &e.col_var * f;
    let v = 1.0 + f.dot(&cf);
    let a = cf / v;
    let z = y - e.z.transpose() * f;
    Ok(CniwParams {
        z: &e.z + outer(&a, &z),
        col_var: symmetrize(&(&e.col_var - outer(&a, &a) * v)),
        dof: e.dof + 1.0,
        h: symmetrize(&(&e.h + outer(&z, &z) / v)),
        qc: e.qc,
    })
}

pub fn comp_update_full(prior: &CompState, f: &DVector<f64>, y: &DVector<f64>) -> Result<CompState> {
    check_obs(y, prior.q(), "observation")?;
    let y_c = y.rows(0, prior.qc()).into_owned();
    Ok(CompState { c: mvdlm::update(&prior.c, f, &y_c)?, e: update_conditional(&prior.e, f, y)? })
}

/// Update on the controls alone; the conditional posterior is the prior.
pub fn comp_update_c_only(prior: &CompState, f: &DVector<f64>, y_c: &DVector<f64>) -> Result<CompState> {
    check_obs(y_c, prior.qc(), "control observation")?;
    Ok(CompState { c: mvdlm::update(&prior.c, f, y_c)?, e: prior.e.clone() })
}

/// One joint draw of the parameters of a compositional belief.
#[derive(Debug, Clone)]
pub struct ParamDraw {
    pub theta_c: DMatrix<f64>,
    pub sigma_c: DMatrix<f64>,
    pub theta_e: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub psi: DMatrix<f64>,
}

fn mvn<R: Rng + ?Sized>(l: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    l * DVector::<f64>::from_fn(l.nrows(), |_, _| StandardNormal.sample(rng))
}

/// Joint sampler over parameters and one-step observations.
#[derive(Debug, Clone)]
pub struct CompSampler {
    f: DVector<f64>,
    c: NiwSampler,
    e: CniwSampler,
}

impl CompSampler {
    pub fn new(state: &CompState, f: &DVector<f64>) -> Result<Self> {
        state.validate()?;
        if f.len() != state.c.p() {
            return Err(Error::dim(format!("F has length {}, expected {}", f.len(), state.c.p())));
        }
        Ok(Self { f: f.clone(), c: state.c.sampler()?, e: state.e.sampler()? })
    }

    pub fn sample_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamDraw {
        let (theta_c, sigma_c) = self.c.sample(rng);
        let d = self.e.sample(&theta_c, rng);
        ParamDraw { theta_c, sigma_c, theta_e: d.theta_e, gamma: d.gamma, psi: d.psi }
    }

    /// `y_c' ~ N(F' Θ_c, Σ_c)`, then
    /// `y_e' ~ N(F' Θ_e + (y_c' - F' Θ_c) Γ_e', Ψ_e)`.
    pub fn sample_obs<R: Rng + ?Sized>(&self, params: &ParamDraw, rng: &mut R) -> DVector<f64> {
        let y_c = observe_controls(&self.f, params, rng);
        let y_e = observe_conditional(&self.f, params, &y_c, rng);
        let mut y = DVector::zeros(y_c.len() + y_e.len());
        y.rows_mut(0, y_c.len()).copy_from(&y_c);
        y.rows_mut(y_c.len(), y_e.len()).copy_from(&y_e);
        y
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let params = self.sample_params(rng);
        self.sample_obs(&params, rng)
    }
}

fn observe_controls<R: Rng + ?Sized>(f: &DVector<f64>, params: &ParamDraw, rng: &mut R) -> DVector<f64> {
    let l = CholFactor::new(&params.sigma_c, "Sigma_c").expect("inverse Wishart draws are s.p.d.");
    params.theta_c.transpose() * f + mvn(l.l(), rng)
}

/// Draw `y_e` given a (possibly observed) control vector.
pub(crate) fn observe_conditional<R: Rng + ?Sized>(
    f: &DVector<f64>,
    params: &ParamDraw,
    y_c: &DVector<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let l = CholFactor::new(&params.psi, "Psi_e").expect("inverse Wishart draws are s.p.d.");
    let resid_c = y_c - params.theta_c.transpose() * f;
    params.theta_e.transpose() * f + &params.gamma * resid_c + mvn(l.l(), rng)
}

/// One-step predictive ensemble of full `q`-vectors.
pub fn comp_forecast_mc(prior: &CompState, f: &DVector<f64>, nsamples: usize, stream: &RngStream) -> Result<Ensemble> {
    if nsamples == 0 {
        return Err(Error::input("nsamples must be at least 1"));
    }
    let sampler = prior.sampler(f)?;
    let mut draws = DMatrix::zeros(nsamples, prior.q());
    for i in 0..nsamples {
        let mut rng = stream.split(i as u64).rng();
        draws.row_mut(i).copy_from(&sampler.sample(&mut rng).transpose());
    }
    Ensemble::new(draws)
}

/// Deterministic per-horizon quantities for k-step simulation.
struct Horizon {
    /// Factor of `W_h` for the margin and the conditional; `None` when the
    /// discount is 1 (no innovation).
    w_c: Option<DMatrix<f64>>,
    w_e: Option<DMatrix<f64>>,
    /// Samplers for the redraw policy.
    redraw: Option<(NiwState, CniwParams)>,
}

fn innovation_factor(c: &DMatrix<f64>, g: &DMatrix<f64>, delta: f64, what: &str) -> Result<Option<DMatrix<f64>>> {
    if delta >= 1.0 {
        return Ok(None);
    }
    let w = symmetrize(&(g * c * g.transpose() * ((1.0 - delta) / delta)));
    Ok(Some(CholFactor::new(&w, what)?.l().clone()))
}

/// `k`-step predictive ensembles (`k` of them, horizon 1 first).
///
/// Each path draws its parameters from `prior` and propagates the states
/// through `Θ_c,h = G Θ_c,h-1 + Ω_c` and
/// `Θ_e,h = G Θ_e,h-1 + Ω_c Γ_e' + Ω_e|c`, with innovation variances
/// `W = G C G' (1 - δ) / δ` taken from the deterministic forward recursion of
/// `C` (and `C_e` with `δ_e`).
pub fn comp_forecast_k_step(
    prior: &CompState,
    spec: &CompSpec,
    k: usize,
    nsamples: usize,
    stream: &RngStream,
) -> Result<Vec<Ensemble>> {
    if k == 0 {
        return Err(Error::input("horizon k must be at least 1"));
    }
    if nsamples == 0 {
        return Err(Error::input("nsamples must be at least 1"));
    }
    check_state(prior, spec)?;
    let g = &spec.base.g;
    let f = &spec.base.f;
    let sampler = prior.sampler(f)?;

    let mut horizons = Vec::with_capacity(k);
    let (mut c_cov, mut e_cov) = (prior.c.c.clone(), prior.e.col_var.clone());
    let (mut vol_c, mut vol_e) = (prior.c.clone(), prior.e.clone());
    for h in 0..k {
        if h == 0 {
            horizons.push(Horizon { w_c: None, w_e: None, redraw: None });
            continue;
        }
        let w_c = innovation_factor(&c_cov, g, spec.base.delta, "W")?;
        let w_e = innovation_factor(&e_cov, g, spec.delta_e, "W_e")?;
        c_cov = symmetrize(&(g * &c_cov * g.transpose() / spec.base.delta));
        e_cov = symmetrize(&(g * &e_cov * g.transpose() / spec.delta_e));
        let redraw = match spec.horizon_volatility {
            HorizonVolatility::FixedPerPath => None,
            HorizonVolatility::Redraw => {
                vol_c = discount_evolve(&vol_c, g, 1.0, spec.base.beta, spec.q())?;
                vol_e = evolve_conditional(&vol_e, spec, 1.0, spec.beta_e)?;
                Some((vol_c.clone(), vol_e.clone()))
            }
        };
        horizons.push(Horizon { w_c, w_e, redraw });
    }
    let redraw_samplers = horizons
        .iter()
        .map(|h| match &h.redraw {
            Some((c, e)) => Ok(Some((IwParams::new(c.n, c.d.clone())?.sampler()?, e.sampler()?))),
            None => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;

    let q = spec.q();
    let mut out: Vec<DMatrix<f64>> = (0..k).map(|_| DMatrix::zeros(nsamples, q)).collect();
    for i in 0..nsamples {
        let mut rng = stream.split(i as u64).rng();
        let mut params = sampler.sample_params(&mut rng);
        for (h, horizon) in horizons.iter().enumerate() {
            if h > 0 {
                if let Some((sigma_sampler, e_sampler)) = &redraw_samplers[h] {
                    params.sigma_c = sigma_sampler.sample(&mut rng);
                    // Θ_e is carried by the path; only (Γ_e, Ψ_e) are refreshed.
                    let d = e_sampler.sample(&params.theta_c, &mut rng);
                    params.gamma = d.gamma;
                    params.psi = d.psi;
                }
                let sigma_l = CholFactor::new(&params.sigma_c, "Sigma_c").expect("s.p.d. draw");
                let psi_l = CholFactor::new(&params.psi, "Psi_e").expect("s.p.d. draw");
                let omega_c = match &horizon.w_c {
                    Some(wl) => standard_mn(wl, sigma_l.l(), &mut rng),
                    None => DMatrix::zeros(params.theta_c.nrows(), params.theta_c.ncols()),
                };
                let mut theta_e = g * &params.theta_e + &omega_c * params.gamma.transpose();
                if let Some(wl) = &horizon.w_e {
                    theta_e += standard_mn(wl, psi_l.l(), &mut rng);
                }
                params.theta_c = g * &params.theta_c + omega_c;
                params.theta_e = theta_e;
            }
            let y = sampler.sample_obs(&params, &mut rng);
            out[h].row_mut(i).copy_from(&y.transpose());
        }
    }
    out.into_iter().map(Ensemble::new).collect()
}
