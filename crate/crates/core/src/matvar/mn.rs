use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::CholFactor;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Matrix normal `N(M, C, R)` for an `a x b` matrix: column variance `C`
/// (`a x a`, shared by every column) and row variance `R` (`b x b`), so that
/// `cov(vec X) = R ⊗ C`.
#[derive(Debug, Clone, PartialEq)]
pub struct MnParams {
    pub mean: DMatrix<f64>,
    pub col_var: DMatrix<f64>,
    pub row_var: DMatrix<f64>,
}

impl MnParams {
    pub fn new(mean: DMatrix<f64>, col_var: DMatrix<f64>, row_var: DMatrix<f64>) -> Result<Self> {
        let (a, b) = mean.shape();
        if col_var.shape() != (a, a) || row_var.shape() != (b, b) {
            return Err(Error::dim(format!(
                "matrix normal: mean {a}x{b}, column variance {:?}, row variance {:?}",
                col_var.shape(),
                row_var.shape()
            )));
        }
        Ok(Self { mean, col_var, row_var })
    }

    pub fn sampler(&self) -> Result<MnSampler> {
        MnSampler::new(
            self.mean.clone(),
            CholFactor::new(&self.col_var, "matrix normal column variance")?,
            CholFactor::new(&self.row_var, "matrix normal row variance")?,
        )
    }
}

#[derive(Debug, Clone)]
pub struct MnSampler {
    mean: DMatrix<f64>,
    col: CholFactor,
    row: CholFactor,
}

impl MnSampler {
    pub fn new(mean: DMatrix<f64>, col: CholFactor, row: CholFactor) -> Result<Self> {
        if col.dim() != mean.nrows() || row.dim() != mean.ncols() {
            return Err(Error::dim("matrix normal factors do not conform to the mean"));
        }
        Ok(Self { mean, col, row })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        &self.mean + standard_mn(self.col.l(), self.row.l(), rng)
    }
}

/// `L_C E L_R'` with `E` i.i.d. standard normal.
pub(crate) fn standard_mn<R: Rng + ?Sized>(
    col_l: &DMatrix<f64>,
    row_l: &DMatrix<f64>,
    rng: &mut R,
) -> DMatrix<f64> {
    let e = DMatrix::<f64>::from_fn(col_l.nrows(), row_l.nrows(), |_, _| StandardNormal.sample(rng));
    col_l * e * row_l.transpose()
}

pub fn mn_sample<R: Rng + ?Sized>(params: &MnParams, rng: &mut R) -> Result<DMatrix<f64>> {
    Ok(params.sampler()?.sample(rng))
}

pub fn mn_logpdf(x: &DMatrix<f64>, params: &MnParams) -> Result<f64> {
    let (a, b) = params.mean.shape();
    if x.shape() != (a, b) {
        return Err(Error::dim(format!("matrix normal point {:?}, expected {a}x{b}", x.shape())));
    }
    let col = CholFactor::new(&params.col_var, "matrix normal column variance")?;
    let row = CholFactor::new(&params.row_var, "matrix normal row variance")?;
    let resid = x - &params.mean;
    // tr(R^{-1} E' C^{-1} E)
    let quad = (row.solve(&resid.transpose()) * col.solve(&resid)).trace();
    let (af, bf) = (a as f64, b as f64);
    Ok(-0.5 * af * bf * LN_2PI - 0.5 * bf * col.log_det() - 0.5 * af * row.log_det() - 0.5 * quad)
}
