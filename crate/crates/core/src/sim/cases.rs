use serde::{Deserialize, Serialize};

use crate::redundancy::WeightingScheme;

/// Weighting scheme and subtask gains of one simulation case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub weighting: WeightingScheme,
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
    #[serde(default)]
    pub k3: f64,
}

pub const REFERENCE_CASE_IDS: [u8; 9] = [1, 2, 3, 4, 5, 6, 7, 8, 9];

/// The nine reference cases. Cases 1–4 compare weightings with all subtasks
/// off; cases 5–9 use the full weighting and toggle the three subtasks.
pub fn reference_case(id: u8) -> Option<CaseSpec> {
    use WeightingScheme::*;
    let (weighting, k1, k2, k3) = match id {
        1 => (Identity, 0.0, 0.0, 0.0),
        2 => (Wc, 0.0, 0.0, 0.0),
        3 => (WcWj, 0.0, 0.0, 0.0),
        4 => (WcWjWm, 0.0, 0.0, 0.0),
        5 => (WcWjWm, 0.0, 0.0, 0.0),
        6 => (WcWjWm, 3.0, 0.0, 0.0),
        7 => (WcWjWm, 0.0, -0.05, 0.0),
        8 => (WcWjWm, 0.0, 0.0, -0.1),
        9 => (WcWjWm, 3.0, -0.05, -0.1),
        _ => return None,
    };
    Some(CaseSpec {
        weighting,
        k1,
        k2,
        k3,
    })
}
