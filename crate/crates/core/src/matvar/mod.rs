//! Matrix-variate distributions: inverse Wishart, matrix normal, the
//! partitioned inverse Wishart transforms and the conditional
//! normal-inverse Wishart (CNIW) family.

mod cniw;
mod iw;
mod mn;
mod partition;

pub use cniw::{cniw_sample, niw_to_cniw, CniwDraw, CniwParams, CniwSampler};
pub use iw::{iw_logpdf, iw_sample, ln_multigamma, IwParams, IwSampler, SingularPolicy};
pub use mn::{mn_logpdf, mn_sample, MnParams, MnSampler};
pub(crate) use mn::standard_mn;
pub use partition::{gamma_psi_from_sigma, partition_iw, Blocks, GammaPsi, PartitionedIw, PartitionedLaws};
