use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, symmetrize, CholFactor};

use super::IwParams;

pub(crate) fn check_split(q: usize, qc: usize) -> Result<()> {
    if qc == 0 || qc >= q {
        return Err(Error::Partition(format!("control block size {qc} must satisfy 1 <= qc < q = {q}")));
    }
    Ok(())
}

/// Block view of a symmetric `q x q` matrix split after the first `qc`
/// rows/columns: `c` (top-left), `e` (bottom-right), `ec` (bottom-left).
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    pub c: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub ec: DMatrix<f64>,
}

impl Blocks {
    pub fn split(m: &DMatrix<f64>, qc: usize) -> Result<Self> {
        let q = m.nrows();
        if !m.is_square() {
            return Err(Error::dim("block split needs a square matrix"));
        }
        check_split(q, qc)?;
        let qe = q - qc;
        Ok(Self {
            c: m.view((0, 0), (qc, qc)).into_owned(),
            e: m.view((qc, qc), (qe, qe)).into_owned(),
            ec: m.view((qc, 0), (qe, qc)).into_owned(),
        })
    }

    pub fn assemble(&self) -> DMatrix<f64> {
        let (qc, qe) = (self.c.nrows(), self.e.nrows());
        let q = qc + qe;
        let mut m = DMatrix::zeros(q, q);
        m.view_mut((0, 0), (qc, qc)).copy_from(&self.c);
        m.view_mut((qc, qc), (qe, qe)).copy_from(&self.e);
        m.view_mut((qc, 0), (qe, qc)).copy_from(&self.ec);
        m.view_mut((0, qc), (qc, qe)).copy_from(&self.ec.transpose());
        m
    }

    /// `(ec c^{-1}, e - ec c^{-1} ec')`.
    pub fn regression(&self, what: &str) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let cf = CholFactor::new(&self.c, what)?;
        // ec c^{-1} = (c^{-1} ce)'
        let coef = cf.solve(&self.ec.transpose()).transpose();
        let resid = symmetrize(&(&self.e - &coef * self.ec.transpose()));
        Ok((coef, resid))
    }
}

/// Partitioned inverse Wishart scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedIw {
    pub qc: usize,
    pub qe: usize,
    pub blocks: Blocks,
}

impl PartitionedIw {
    pub fn new(scale: &DMatrix<f64>, qc: usize) -> Result<Self> {
        let blocks = Blocks::split(scale, qc)?;
        Ok(Self { qc, qe: scale.nrows() - qc, blocks })
    }

    pub fn scale(&self) -> DMatrix<f64> {
        self.blocks.assemble()
    }
}

/// `Γ_e = Σ_ec Σ_c^{-1}` and `Ψ_e = Σ_e - Σ_ec Σ_c^{-1} Σ_ec'`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaPsi {
    pub gamma: DMatrix<f64>,
    pub psi: DMatrix<f64>,
}

impl GammaPsi {
    pub fn from_sigma(sigma: &DMatrix<f64>, qc: usize) -> Result<Self> {
        crate::linalg::ensure_spd(sigma, "Sigma")?;
        let (gamma, psi) = Blocks::split(sigma, qc)?.regression("Sigma_c")?;
        Ok(Self { gamma, psi })
    }

    /// Rebuild `Σ` from `Σ_c`: `Σ_ec = Γ Σ_c`, `Σ_e = Ψ + Γ Σ_c Γ'`.
    pub fn reassemble(&self, sigma_c: &DMatrix<f64>) -> DMatrix<f64> {
        let ec = &self.gamma * sigma_c;
        let e = symmetrize(&(&self.psi + &ec * self.gamma.transpose()));
        Blocks { c: sigma_c.clone(), e, ec }.assemble()
    }
}

pub fn gamma_psi_from_sigma(sigma: &DMatrix<f64>, qc: usize) -> Result<GammaPsi> {
    GammaPsi::from_sigma(sigma, qc)
}

/// Laws of `(Σ_c, Γ_e, Ψ_e)` implied by `Σ ~ IW(n, D)`:
/// `Σ_c ~ IW(n, D_c)`, `Γ_e | Ψ_e ~ N(D_ec D_c^{-1}, Ψ_e, D_c^{-1})`,
/// `Ψ_e ~ IW(n + q_c, D_e - D_ec D_c^{-1} D_ec')`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedLaws {
    pub marginal: IwParams,
    pub gamma_mean: DMatrix<f64>,
    /// Row variance of `Γ_e` (`q_c x q_c`); its column variance is `Ψ_e`.
    pub gamma_row_var: DMatrix<f64>,
    pub psi: IwParams,
}

pub fn partition_iw(params: &IwParams, qc: usize) -> Result<PartitionedLaws> {
    let part = PartitionedIw::new(params.scale(), qc)?;
    let (gamma_mean, psi_scale) = part.blocks.regression("D_c")?;
    Ok(PartitionedLaws {
        marginal: IwParams::new(params.dof(), part.blocks.c.clone())?,
        gamma_mean,
        gamma_row_var: spd_inverse(&part.blocks.c, "D_c")?,
        psi: IwParams::new(params.dof() + qc as f64, psi_scale)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_scale_decouples() {
        let p = IwParams::new(4.0, DMatrix::identity(4, 4)).unwrap();
        let laws = partition_iw(&p, 2).unwrap();
        assert_eq!(laws.gamma_mean, DMatrix::zeros(2, 2));
        assert_eq!(laws.psi.dof(), 6.0);
        assert_eq!(laws.psi.scale(), &DMatrix::identity(2, 2));
        assert_eq!(laws.marginal.scale(), &DMatrix::identity(2, 2));
        assert_eq!(laws.marginal.dof(), 4.0);
    }

    #[test]
    fn bivariate_hand_values() {
        let d = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let laws = partition_iw(&IwParams::new(5.0, d).unwrap(), 1).unwrap();
        assert_relative_eq!(laws.gamma_mean[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(laws.psi.scale()[(0, 0)], 1.5, epsilon = 1e-15);
        assert_eq!(laws.psi.dof(), 6.0);
        assert_relative_eq!(laws.gamma_row_var[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn split_range_checked() {
        let p = IwParams::new(4.0, DMatrix::identity(3, 3)).unwrap();
        assert!(matches!(partition_iw(&p, 0), Err(Error::Partition(_))));
        assert!(matches!(partition_iw(&p, 3), Err(Error::Partition(_))));
        assert!(matches!(gamma_psi_from_sigma(&DMatrix::identity(3, 3), 3), Err(Error::Partition(_))));
    }

    #[test]
    fn gamma_psi_simple_cases() {
        let gp = gamma_psi_from_sigma(&DMatrix::identity(3, 3), 1).unwrap();
        assert_eq!(gp.gamma, DMatrix::zeros(2, 1));
        assert_eq!(gp.psi, DMatrix::identity(2, 2));
        for &rho in &[-0.9, -0.2, 0.0, 0.6] {
            let s = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
            let gp = gamma_psi_from_sigma(&s, 1).unwrap();
            assert_relative_eq!(gp.gamma[(0, 0)], rho, epsilon = 1e-15);
            assert_relative_eq!(gp.psi[(0, 0)], 1.0 - rho * rho, epsilon = 1e-15);
        }
    }

    #[test]
    fn blocks_roundtrip() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let b = Blocks::split(&m, 2).unwrap();
        assert_eq!(b.ec, DMatrix::from_row_slice(1, 2, &[0.5, 0.2]));
        assert_eq!(b.assemble(), m);
    }
}
