//! Reference configurations and their published values.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{GaussianExpCase, OracleError};
use crate::losses::LossSpec;
use crate::scenarios::{MnigModel, MnigParams, ScenarioError};

/// Correlation grid shared by the three Gaussian tables.
pub const RHO_GRID: [f64; 5] = [-0.9, -0.5, 0.0, 0.5, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableId {
    T2,
    T3,
    T4,
    T5,
    T6,
}

impl TableId {
    pub const ALL: [TableId; 5] = [
        TableId::T2,
        TableId::T3,
        TableId::T4,
        TableId::T5,
        TableId::T6,
    ];

    pub fn is_gaussian(self) -> bool {
        matches!(self, TableId::T2 | TableId::T3 | TableId::T4)
    }

    pub fn caption(self) -> &'static str {
        match self {
            TableId::T2 => "exponential loss, alpha = 0, lambda = (1, 2), Gaussian X",
            TableId::T3 => "exponential loss, alpha = 1, lambda = (1, 1), Gaussian X",
            TableId::T4 => "exponential loss, alpha = 1, lambda = (1, 2), Gaussian X",
            TableId::T5 => "polynomial loss, alpha = 1, theta = (2, 2, 2), MNIG X",
            TableId::T6 => "polynomial loss, alpha = 1, theta = (1, 2, 3), MNIG X",
        }
    }
}

impl std::str::FromStr for TableId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "t2" => Ok(TableId::T2),
            "t3" => Ok(TableId::T3),
            "t4" => Ok(TableId::T4),
            "t5" => Ok(TableId::T5),
            "t6" => Ok(TableId::T6),
            other => Err(format!("unknown table '{other}', expected one of t2..t6")),
        }
    }
}

impl std::fmt::Display for TableId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TableId::T2 => "t2",
            TableId::T3 => "t3",
            TableId::T4 => "t4",
            TableId::T5 => "t5",
            TableId::T6 => "t6",
        };
        f.write_str(s)
    }
}

/// One row of a Gaussian table: the case and its printed exact columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianRow {
    pub case: GaussianExpCase,
    pub m_star: [f64; 2],
    pub risk: f64,
}

/// Printed exact `(m*_1, m*_2, R(X))` per row of `RHO_GRID`.
const T2_EXACT: [[f64; 3]; 5] = [[0.5, 1.0, 1.5]; 5];
const T3_EXACT: [[f64; 3]; 5] = [
    [0.7702, 0.7702, 1.3036],
    [0.8545, 0.8545, 1.4105],
    [0.9812, 0.9812, 1.5804],
    [1.1301, 1.1301, 1.7928],
    [1.2636, 1.2636, 1.9932],
];
// 0.7071 is a printed value, not 1/sqrt(2)
#[allow(clippy::approx_constant)]
const T4_EXACT: [[f64; 3]; 5] = [
    [0.6202, 1.1285, 1.6354],
    [0.7071, 1.2344, 1.7544],
    [0.8465, 1.4406, 1.9943],
    [0.9859, 1.7344, 2.3354],
    [1.0728, 2.0285, 2.6652],
];

/// The five rows of a Gaussian table. `NotApplicable` for the MNIG tables.
pub fn gaussian_rows(table: TableId) -> Result<Vec<GaussianRow>, OracleError> {
    let (lambda, alpha, exact) = match table {
        TableId::T2 => ([1.0, 2.0], 0.0, &T2_EXACT),
        TableId::T3 => ([1.0, 1.0], 1.0, &T3_EXACT),
        TableId::T4 => ([1.0, 2.0], 1.0, &T4_EXACT),
        _ => {
            return Err(OracleError::NotApplicable(format!(
                "{table} is not a Gaussian table"
            )))
        }
    };
    RHO_GRID
        .iter()
        .zip(exact)
        .map(|(&rho, e)| {
            Ok(GaussianRow {
                case: GaussianExpCase::new(lambda, alpha, [1.0, 1.0], rho)?,
                m_star: [e[0], e[1]],
                risk: e[2],
            })
        })
        .collect()
}

/// Published SA and Monte Carlo columns of an MNIG table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnigReference {
    pub theta: Vec<f64>,
    pub alpha: f64,
    pub sa_m_star: Vec<f64>,
    pub mc_m_star: Vec<f64>,
    pub sa_risk: f64,
    pub mc_risk: f64,
    /// Risk level both methods are expected to reach.
    pub risk_level: f64,
}

impl MnigReference {
    pub fn loss(&self) -> Result<LossSpec, crate::losses::LossError> {
        LossSpec::polynomial(self.theta.clone(), self.alpha)
    }
}

pub fn mnig_reference(table: TableId) -> Result<MnigReference, OracleError> {
    match table {
        TableId::T5 => Ok(MnigReference {
            theta: vec![2.0, 2.0, 2.0],
            alpha: 1.0,
            sa_m_star: vec![0.31747, 0.31748, 0.31742],
            mc_m_star: vec![0.31748, 0.31745, 0.31737],
            sa_risk: 0.31336,
            mc_risk: 0.31332,
            risk_level: 0.3133,
        }),
        TableId::T6 => Ok(MnigReference {
            theta: vec![1.0, 2.0, 3.0],
            alpha: 1.0,
            sa_m_star: vec![0.21996, 0.25127, 0.29929],
            mc_m_star: vec![0.21994, 0.25130, 0.29926],
            sa_risk: 0.37532,
            mc_risk: 0.37529,
            risk_level: 0.3753,
        }),
        _ => Err(OracleError::NotApplicable(format!(
            "{table} is not an MNIG table"
        ))),
    }
}

/// Fitted trivariate MNIG parameter set of the index returns. The printed
/// `Gamma` has determinant 0.99868 after rounding, so it is rescaled to
/// unit determinant.
pub fn fitted_mnig_params() -> Result<MnigParams, ScenarioError> {
    MnigParams::normalized(
        365.78,
        vec![-64.28, 41.45, 7.35],
        0.00373,
        vec![0.00084, 0.00024, 0.00055],
        DMatrix::from_row_slice(
            3,
            3,
            &[
                2.338, 1.796, 2.080, 1.796, 2.327, 2.088, 2.080, 2.088, 2.555,
            ],
        ),
    )
}

pub fn fitted_mnig_model() -> Result<MnigModel, ScenarioError> {
    MnigModel::new(fitted_mnig_params()?)
}

/// Published covariance of the fitted law, in units of `1e-5`.
pub const FITTED_MNIG_COVARIANCE_E5: [[f64; 3]; 3] =
    [[2.45, 1.86, 2.16], [1.86, 2.40, 2.16], [2.16, 2.16, 2.65]];
