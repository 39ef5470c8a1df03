//! Finite-sample independence tests.

pub mod cmi;
pub mod hsic;

use serde::{Deserialize, Serialize};

pub use cmi::{cmi_knn_pvalue, CmiParams};
pub use hsic::{hsic_pvalue, HsicKernel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum TestParams {
    HsicGamma { width_x: f64, width_y: f64 },
    CmiKnn { k: usize, k_perm: usize, permutations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub params: TestParams,
    pub seed: Option<u64>,
}
