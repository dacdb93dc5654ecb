use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, CholFactor};

const LN_2: f64 = std::f64::consts::LN_2;
const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Inverse Wishart `IW(n, D)` in the "inverse Wishart d.o.f." convention:
/// `Σ^{-1} ~ W(n + q - 1, D^{-1})`, `E(Σ) = D / (n - 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IwParams {
    dof: f64,
    scale: DMatrix<f64>,
}

/// What to do when `Σ` handed to a density is not s.p.d.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SingularPolicy {
    #[default]
    NegInfinity,
    Error,
}

impl IwParams {
    pub fn new(dof: f64, scale: DMatrix<f64>) -> Result<Self> {
        if !(dof.is_finite() && dof > 0.0) {
            return Err(Error::InvalidDof { what: "inverse Wishart".into(), value: dof });
        }
        CholFactor::new(&scale, "inverse Wishart scale")?;
        Ok(Self { dof, scale: symmetrize(&scale) })
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    pub fn dim(&self) -> usize {
        self.scale.nrows()
    }

    /// Wishart d.o.f. of the precision, `n + q - 1`.
    pub fn wishart_dof(&self) -> f64 {
        self.dof + self.dim() as f64 - 1.0
    }

    /// `D / n`.
    pub fn point_estimate(&self) -> DMatrix<f64> {
        &self.scale / self.dof
    }

    pub fn mean(&self) -> Option<DMatrix<f64>> {
        (self.dof > 2.0).then(|| &self.scale / (self.dof - 2.0))
    }

    /// `E(Σ^{-1})^{-1} = D / (n + q - 1)`.
    pub fn harmonic_mean(&self) -> DMatrix<f64> {
        &self.scale / self.wishart_dof()
    }

    pub fn sampler(&self) -> Result<IwSampler> {
        IwSampler::new(self)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DMatrix<f64>> {
        Ok(self.sampler()?.sample(rng))
    }

    pub fn log_pdf(&self, sigma: &DMatrix<f64>) -> f64 {
        iw_logpdf(sigma, self, SingularPolicy::NegInfinity).unwrap_or(f64::NEG_INFINITY)
    }
}

/// Pre-factored inverse Wishart sampler (Bartlett decomposition).
#[derive(Debug, Clone)]
pub struct IwSampler {
    upper_dof: f64,
    chi: Vec<ChiSquared<f64>>,
    scale_chol: CholFactor,
}

impl IwSampler {
    pub fn new(params: &IwParams) -> Result<Self> {
        let q = params.dim();
        let d = params.wishart_dof();
        let chi = (0..q)
            .map(|i| {
                ChiSquared::new(d - i as f64).map_err(|_| Error::InvalidDof {
                    what: "Bartlett chi-square".into(),
                    value: d - i as f64,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { upper_dof: d, chi, scale_chol: CholFactor::new(params.scale(), "inverse Wishart scale")? })
    }

    pub fn wishart_dof(&self) -> f64 {
        self.upper_dof
    }

    pub fn dim(&self) -> usize {
        self.scale_chol.dim()
    }

    /// With `D = U U'` and `A` the Bartlett factor of `W(d, I)`,
    /// `Σ^{-1} = U^{-T} A A' U^{-1}`, so `Σ = B B'` where `B' = A^{-1} U'`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let q = self.dim();
        let mut a = DMatrix::<f64>::zeros(q, q);
        for i in 0..q {
            a[(i, i)] = self.chi[i].sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = StandardNormal.sample(rng);
            }
        }
        let bt = a
            .solve_lower_triangular(&self.scale_chol.l().transpose())
            .expect("Bartlett diagonal is positive");
        symmetrize(&(bt.transpose() * bt))
    }
}

pub fn iw_sample<R: Rng + ?Sized>(params: &IwParams, rng: &mut R) -> Result<DMatrix<f64>> {
    params.sample(rng)
}

/// `ln Γ_q(a)`.
pub fn ln_multigamma(q: usize, a: f64) -> f64 {
    let qf = q as f64;
    qf * (qf - 1.0) / 4.0 * LN_PI + (1..=q).map(|j| ln_gamma(a + (1.0 - j as f64) / 2.0)).sum::<f64>()
}

/// Log density of `IW(n, D)`, normalizer included.
pub fn iw_logpdf(sigma: &DMatrix<f64>, params: &IwParams, policy: SingularPolicy) -> Result<f64> {
    let q = params.dim();
    if sigma.shape() != (q, q) {
        return Err(Error::dim(format!("Sigma is {:?}, expected {q}x{q}", sigma.shape())));
    }
    let chol = match CholFactor::with_policy(
        sigma,
        "Sigma",
        &crate::linalg::SpdPolicy { rel_pivot_tol: 1e-14, rel_jitter: 0.0 },
    ) {
        Ok(c) => c,
        Err(_) => {
            return match policy {
                SingularPolicy::NegInfinity => Ok(f64::NEG_INFINITY),
                SingularPolicy::Error => Err(Error::Singular("Sigma is not s.p.d.".into())),
            }
        }
    };
    let d = params.wishart_dof();
    let qf = q as f64;
    let scale_logdet = CholFactor::new(params.scale(), "inverse Wishart scale")?.log_det();
    let trace = chol.solve(params.scale()).trace();
    Ok(0.5 * d * scale_logdet - 0.5 * d * qf * LN_2 - ln_multigamma(q, 0.5 * d)
        - 0.5 * (d + qf + 1.0) * chol.log_det()
        - 0.5 * trace)
}
