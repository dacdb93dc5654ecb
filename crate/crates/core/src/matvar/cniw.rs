use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, symmetrize, CholFactor};

use super::mn::standard_mn;
use super::partition::{check_split, Blocks};
use super::{iw_logpdf, mn_logpdf, IwParams, IwSampler, MnParams, SingularPolicy};

/// Conditional normal-inverse Wishart law of `(Θ_e, Γ_e, Ψ_e)` given `Θ_c`:
///
/// - `Ψ_e ~ IW(s_e, H_e - H_ec H_c^{-1} H_ec')`
/// - `Γ_e | Ψ_e ~ N(H_ec H_c^{-1}, Ψ_e, H_c^{-1})`
/// - `Θ_e | Θ_c, Γ_e, Ψ_e ~ N(Z_e + (Θ_c - Z_c) Γ_e', C_e, Ψ_e)`
#[derive(Debug, Clone, PartialEq)]
pub struct CniwParams {
    /// Location, `p x q`, split as `(Z_c, Z_e)`.
    pub z: DMatrix<f64>,
    /// Column variance `C_e`, `p x p`.
    pub col_var: DMatrix<f64>,
    /// Degrees of freedom `s_e`.
    pub dof: f64,
    /// `q x q` scale `H`.
    pub h: DMatrix<f64>,
    pub qc: usize,
}

/// One joint draw of the conditional parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CniwDraw {
    pub theta_e: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub psi: DMatrix<f64>,
}

impl CniwParams {
    pub fn new(z: DMatrix<f64>, col_var: DMatrix<f64>, dof: f64, h: DMatrix<f64>, qc: usize) -> Result<Self> {
        let (p, q) = z.shape();
        check_split(q, qc)?;
        if col_var.shape() != (p, p) || h.shape() != (q, q) {
            return Err(Error::dim(format!(
                "CNIW: Z is {p}x{q}, C_e is {:?}, H is {:?}",
                col_var.shape(),
                h.shape()
            )));
        }
        if !(dof.is_finite() && dof > 0.0) {
            return Err(Error::InvalidDof { what: "CNIW".into(), value: dof });
        }
        crate::linalg::ensure_spd(&col_var, "C_e")?;
        crate::linalg::ensure_spd(&h, "H")?;
        Ok(Self { z, col_var, dof, h, qc })
    }

    pub fn p(&self) -> usize {
        self.z.nrows()
    }

    pub fn q(&self) -> usize {
        self.z.ncols()
    }

    pub fn qe(&self) -> usize {
        self.q() - self.qc
    }

    pub fn z_c(&self) -> DMatrix<f64> {
        self.z.columns(0, self.qc).into_owned()
    }

    pub fn z_e(&self) -> DMatrix<f64> {
        self.z.columns(self.qc, self.qe()).into_owned()
    }

    pub fn h_blocks(&self) -> Blocks {
        Blocks::split(&self.h, self.qc).expect("validated at construction")
    }

    /// `(H_ec H_c^{-1}, H_e - H_ec H_c^{-1} H_ec')`.
    pub fn gamma_psi_params(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.h_blocks().regression("H_c")
    }

    pub fn psi_law(&self) -> Result<IwParams> {
        IwParams::new(self.dof, self.gamma_psi_params()?.1)
    }

    pub fn sampler(&self) -> Result<CniwSampler> {
        CniwSampler::new(self)
    }

    pub fn sample<R: Rng + ?Sized>(&self, theta_c: &DMatrix<f64>, rng: &mut R) -> Result<CniwDraw> {
        let s = self.sampler()?;
        s.check_theta_c(theta_c)?;
        Ok(s.sample(theta_c, rng))
    }

    /// Joint log density of `(Θ_e, Γ_e, Ψ_e)` given `Θ_c`.
    pub fn log_pdf(
        &self,
        theta_c: &DMatrix<f64>,
        draw: &CniwDraw,
    ) -> Result<f64> {
        let (gamma_mean, psi_scale) = self.gamma_psi_params()?;
        let psi_part = iw_logpdf(&draw.psi, &IwParams::new(self.dof, psi_scale)?, SingularPolicy::NegInfinity)?;
        if psi_part == f64::NEG_INFINITY {
            return Ok(psi_part);
        }
        let hc_inv = spd_inverse(&self.h_blocks().c, "H_c")?;
        let gamma_part = mn_logpdf(&draw.gamma, &MnParams::new(gamma_mean, draw.psi.clone(), hc_inv)?)?;
        let theta_mean = self.z_e() + (theta_c - self.z_c()) * draw.gamma.transpose();
        let theta_part =
            mn_logpdf(&draw.theta_e, &MnParams::new(theta_mean, self.col_var.clone(), draw.psi.clone())?)?;
        Ok(psi_part + gamma_part + theta_part)
    }
}

/// CNIW sampler with every factorization that does not depend on the draw
/// computed once.
#[derive(Debug, Clone)]
pub struct CniwSampler {
    z_c: DMatrix<f64>,
    z_e: DMatrix<f64>,
    gamma_mean: DMatrix<f64>,
    /// Factor of `H_c^{-1}`.
    gamma_row_l: DMatrix<f64>,
    col_l: DMatrix<f64>,
    psi: IwSampler,
}

impl CniwSampler {
    pub fn new(params: &CniwParams) -> Result<Self> {
        let (gamma_mean, psi_scale) = params.gamma_psi_params()?;
        let hc_inv = spd_inverse(&params.h_blocks().c, "H_c")?;
        Ok(Self {
            z_c: params.z_c(),
            z_e: params.z_e(),
            gamma_mean,
            gamma_row_l: CholFactor::new(&hc_inv, "H_c^{-1}")?.l().clone(),
            col_l: CholFactor::new(&params.col_var, "C_e")?.l().clone(),
            psi: IwParams::new(params.dof, psi_scale)?.sampler()?,
        })
    }

    pub(crate) fn check_theta_c(&self, theta_c: &DMatrix<f64>) -> Result<()> {
        if theta_c.shape() != self.z_c.shape() {
            return Err(Error::dim(format!(
                "Theta_c is {:?}, expected {:?}",
                theta_c.shape(),
                self.z_c.shape()
            )));
        }
        Ok(())
    }

    /// Draws in compositional order `Ψ_e`, `Γ_e | Ψ_e`, `Θ_e | Θ_c, Γ_e, Ψ_e`.
    pub fn sample<R: Rng + ?Sized>(&self, theta_c: &DMatrix<f64>, rng: &mut R) -> CniwDraw {
        let psi = self.psi.sample(rng);
        let psi_l = CholFactor::new(&psi, "Psi_e").expect("inverse Wishart draws are s.p.d.");
        let gamma = &self.gamma_mean + standard_mn(psi_l.l(), &self.gamma_row_l, rng);
        let theta_e = &self.z_e
            + (theta_c - &self.z_c) * gamma.transpose()
            + standard_mn(&self.col_l, psi_l.l(), rng);
        CniwDraw { theta_e, gamma, psi }
    }
}

pub fn cniw_sample<R: Rng + ?Sized>(
    params: &CniwParams,
    theta_c: &DMatrix<f64>,
    rng: &mut R,
) -> Result<CniwDraw> {
    params.sample(theta_c, rng)
}

/// CNIW parameters that reproduce the conditional of `Θ_e, Σ | Θ_c` under
/// `NIW(M, C, n, D)`: `Z = M`, `C_e = C`, `H = D`, `s_e = n + q_c`.
pub fn niw_to_cniw(m: &DMatrix<f64>, c: &DMatrix<f64>, n: f64, d: &DMatrix<f64>, qc: usize) -> Result<CniwParams> {
    CniwParams::new(m.clone(), symmetrize(c), n + qc as f64, symmetrize(d), qc)
}
