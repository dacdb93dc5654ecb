//! Standard multivariate DLM forward filter with discount-factor state and
//! volatility evolution.
//!
//! The model is `y_t' = F' Θ_t + ν_t'`, `Θ_t = G Θ_{t-1} + Ω_t` with
//! `ν_t ~ N(0, Σ_t)`, `Ω_t ~ N(0, W_t, Σ_t)`. `W_t` is never formed here:
//! a single state discount `δ` gives `C* = G C G' / δ`, and the volatility
//! discount `β` gives `n* = β n - (1 - β)(q - 1)`, `D* = β D`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{outer, symmetrize, CholFactor};
use crate::matvar::{standard_mn, IwParams, IwSampler};

pub(crate) fn check_discount(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")));
    }
    Ok(())
}


/// Structural definition shared by every series.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Regression vector `F` (length `p`).
    pub f: DVector<f64>,
    /// State transition `G` (`p x p`).
    pub g: DMatrix<f64>,
    /// Number of series.
    pub q: usize,
    /// State discount `δ`.
    pub delta: f64,
    /// Volatility discount `β`.
    pub beta: f64,
}

impl ModelSpec {
    pub fn new(f: DVector<f64>, g: DMatrix<f64>, q: usize, delta: f64, beta: f64) -> Result<Self> {
        let p = f.len();
        if p == 0 || g.shape() != (p, p) {
            return Err(Error::dim(format!("F has length {p} but G is {:?}", g.shape())));
        }
        if q == 0 {
            return Err(Error::Config("model needs at least one series".into()));
        }
        check_discount("delta", delta)?;
        check_discount("beta", beta)?;
        Ok(Self { f, g, q, delta, beta })
    }

    /// Damped local linear trend: `F = (1, 0)'`, `G = [[1, r], [0, r]]`.
    pub fn local_trend(q: usize, damping: f64, delta: f64, beta: f64) -> Result<Self> {
        if !(damping > 0.0 && damping <= 1.0) {
            return Err(Error::Config(format!("damping must lie in (0, 1], got {damping}")));
        }
        Self::new(
            DVector::from_vec(vec![1.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, damping, 0.0, damping]),
            q,
            delta,
            beta,
        )
    }

    pub fn p(&self) -> usize {
        self.f.len()
    }
}

/// Matrix normal-inverse Wishart belief `NIW(M, C, n, D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwState {
    pub m: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub n: f64,
    pub d: DMatrix<f64>,
}

impl NiwState {
    pub fn new(m: DMatrix<f64>, c: DMatrix<f64>, n: f64, d: DMatrix<f64>) -> Result<Self> {
        let state = Self { m, c, n, d };
        state.validate()?;
        Ok(state)
    }

    /// `M` with the given first row (levels) and zeros below, `C = c_scale I`,
    /// `D = d_scale I`.
    pub fn vague(p: usize, level: &DVector<f64>, c_scale: f64, n: f64, d_scale: f64) -> Result<Self> {
        let q = level.len();
        let mut m = DMatrix::zeros(p, q);
        m.row_mut(0).copy_from(&level.transpose());
        Self::new(m, DMatrix::identity(p, p) * c_scale, n, DMatrix::identity(q, q) * d_scale)
    }

    pub fn validate(&self) -> Result<()> {
        let (p, q) = self.m.shape();
        if self.c.shape() != (p, p) || self.d.shape() != (q, q) {
            return Err(Error::dim(format!(
                "NIW: M is {p}x{q}, C is {:?}, D is {:?}",
                self.c.shape(),
                self.d.shape()
            )));
        }
        if !(self.n.is_finite() && self.n > 0.0) {
            return Err(Error::InvalidDof { what: "NIW".into(), value: self.n });
        }
        crate::linalg::ensure_spd(&self.c, "C")?;
        crate::linalg::ensure_spd(&self.d, "D")?;
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.m.nrows()
    }

    pub fn q(&self) -> usize {
        self.m.ncols()
    }

    pub fn sigma_law(&self) -> Result<IwParams> {
        IwParams::new(self.n, self.d.clone())
    }

    pub fn sampler(&self) -> Result<NiwSampler> {
        NiwSampler::new(self)
    }
}

/// Draws `(Θ, Σ)`: `Σ ~ IW(n, D)`, `Θ | Σ ~ N(M, C, Σ)`.
#[derive(Debug, Clone)]
pub struct NiwSampler {
    m: DMatrix<f64>,
    c_l: DMatrix<f64>,
    sigma: IwSampler,
}

impl NiwSampler {
    pub fn new(state: &NiwState) -> Result<Self> {
        Ok(Self {
            m: state.m.clone(),
            c_l: CholFactor::new(&state.c, "C")?.l().clone(),
            sigma: state.sigma_law()?.sampler()?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (DMatrix<f64>, DMatrix<f64>) {
        let sigma = self.sigma.sample(rng);
        let sigma_l = CholFactor::new(&sigma, "Sigma").expect("inverse Wishart draws are s.p.d.");
        let theta = &self.m + standard_mn(&self.c_l, sigma_l.l(), rng);
        (theta, sigma)
    }
}

/// One-step multivariate T forecast: location `f`, scale `qscale * S`,
/// `dof` degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct TForecast {
    pub f: DVector<f64>,
    pub qscale: f64,
    pub s: DMatrix<f64>,
    pub dof: f64,
}

impl TForecast {
    pub fn scale(&self) -> DMatrix<f64> {
        &self.s * self.qscale
    }

    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        (self.dof > 2.0).then(|| self.scale() * (self.dof / (self.dof - 2.0)))
    }
}

/// `(M, C, n, D) -> (G M, G C G' / δ, β n - (1 - β)(q - 1), β D)` where `q`
/// is the series count of the model the belief belongs to (not necessarily
/// the row dimension of `D`).
pub(crate) fn discount_evolve(
    post: &NiwState,
    g: &DMatrix<f64>,
    delta: f64,
    beta: f64,
    q: usize,
) -> Result<NiwState> {
    let n_star = evolve_dof(post.n, beta, q)?;
    Ok(NiwState {
        m: g * &post.m,
        c: symmetrize(&(g * &post.c * g.transpose() / delta)),
        n: n_star,
        d: &post.d * beta,
    })
}

pub(crate) fn evolve_dof(n: f64, beta: f64, q: usize) -> Result<f64> {
    let evolved = beta * n - (1.0 - beta) * (q as f64 - 1.0);
    if !(evolved > 0.0) {
        return Err(Error::DegenerateDof { beta, n, q, evolved });
    }
    Ok(evolved)
}

pub fn evolve(post: &NiwState, spec: &ModelSpec) -> Result<NiwState> {
    if post.p() != spec.p() || post.q() != spec.q {
        return Err(Error::dim(format!(
            "state is {}x{}, model is p = {}, q = {}",
            post.p(),
            post.q(),
            spec.p(),
            spec.q
        )));
    }
    discount_evolve(post, &spec.g, spec.delta, spec.beta, spec.q)
}

pub fn forecast_one_step(prior: &NiwState, f: &DVector<f64>) -> TForecast {
    TForecast {
        f: prior.m.transpose() * f,
        qscale: 1.0 + (f.transpose() * &prior.c * f)[(0, 0)],
        s: &prior.d / prior.n,
        dof: prior.n,
    }
}

pub fn update(prior: &NiwState, f: &DVector<f64>, y: &DVector<f64>) -> Result<NiwState> {
    if y.len() != prior.q() || f.len() != prior.p() {
        return Err(Error::dim(format!(
            "observation has length {} and F length {}; state is {}x{}",
            y.len(),
            f.len(),
            prior.p(),
            prior.q()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite observation"));
    }
    let cf = &prior.c * f;
    let qt = 1.0 + f.dot(&cf);
    let a = cf / qt;
    let e = y - prior.m.transpose() * f;
    Ok(NiwState {
        m: &prior.m + outer(&a, &e),
        c: symmetrize(&(&prior.c - outer(&a, &a) * qt)),
        n: prior.n + 1.0,
        d: symmetrize(&(&prior.d + outer(&e, &e) / qt)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterStep {
    pub prior: NiwState,
    pub forecast: TForecast,
    pub posterior: NiwState,
}

/// Runs evolve, forecast and update over each row of `data` (`T x q`),
/// starting from the time-0 posterior `init`.
pub fn filter_run(spec: &ModelSpec, init: &NiwState, data: &DMatrix<f64>) -> Result<Vec<FilterStep>> {
    run(spec, init, data, false)
}

/// As [`filter_run`], but `init` is already the prior for the first row.
pub fn filter_run_from_prior(spec: &ModelSpec, init: &NiwState, data: &DMatrix<f64>) -> Result<Vec<FilterStep>> {
    run(spec, init, data, true)
}

fn run(spec: &ModelSpec, init: &NiwState, data: &DMatrix<f64>, init_is_prior: bool) -> Result<Vec<FilterStep>> {
    if data.nrows() == 0 {
        return Err(Error::input("empty data"));
    }
    if data.ncols() != spec.q {
        return Err(Error::dim(format!("data has {} columns, model has q = {}", data.ncols(), spec.q)));
    }
    init.validate()?;
    let mut steps = Vec::with_capacity(data.nrows());
    let mut post = init.clone();
    for t in 0..data.nrows() {
        let step = || -> Result<FilterStep> {
            let prior = if t == 0 && init_is_prior { post.clone() } else { evolve(&post, spec)? };
            let forecast = forecast_one_step(&prior, &spec.f);
            let posterior = update(&prior, &spec.f, &data.row(t).transpose())?;
            Ok(FilterStep { prior, forecast, posterior })
        };
        let s = step().map_err(|e| e.at_step(t + 1))?;
        post = s.posterior.clone();
        steps.push(s);
    }
    Ok(steps)
}

/// Per-series mean of the first `window` rows.
pub fn warmup_level(data: &DMatrix<f64>, window: usize) -> Result<DVector<f64>> {
    if window == 0 || window > data.nrows() {
        return Err(Error::input(format!("warm-up window {window} outside 1..={}", data.nrows())));
    }
    Ok(data.rows(0, window).row_mean().transpose())
}
