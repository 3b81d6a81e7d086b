use serde::{Deserialize, Serialize};

use super::table::{FidelityTable, TaskKind};
use crate::error::{Error, Result};

/// Approximate semantic entropies in suts per word (text) or per image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticEntropy {
    pub single_text_suts: f64,
    pub bimodal_text_suts: f64,
    pub bimodal_image_suts: f64,
    pub epsilon: f64,
}

/// Smallest budget(s) whose fidelity at the highest SINR is within
/// `epsilon` of the best achievable. For VQA the text budget is minimised
/// first, then the image budget.
pub fn min_feasible_k(table: &FidelityTable, epsilon: f64) -> Result<Vec<f64>> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!("epsilon {epsilon} not in (0,1)")));
    }
    let n = table.kind().members();
    let dims = table.dims();
    let top: Vec<usize> = (0..n).map(|i| dims[n + i] - 1).collect();
    let at_top = |k_idx: &[usize]| {
        let mut idx = k_idx.to_vec();
        idx.extend(&top);
        table.value_at(&idx)
    };
    match table.kind() {
        TaskKind::SingleText => {
            let vals: Vec<f64> = (0..dims[0]).map(|a| at_top(&[a])).collect();
            let best = vals.iter().copied().fold(f64::MIN, f64::max);
            let a = vals.iter().position(|&v| v >= best - epsilon).expect("argmax is feasible");
            Ok(vec![table.k_grid(0)[a]])
        }
        TaskKind::BimodalVqa => {
            let mut best = f64::MIN;
            for a in 0..dims[0] {
                for b in 0..dims[1] {
                    best = best.max(at_top(&[a, b]));
                }
            }
            for a in 0..dims[0] {
                for b in 0..dims[1] {
                    if at_top(&[a, b]) >= best - epsilon {
                        return Ok(vec![table.k_grid(0)[a], table.k_grid(1)[b]]);
                    }
                }
            }
            unreachable!("argmax is feasible")
        }
    }
}

pub fn approx_semantic_entropy(
    single: &FidelityTable,
    bimodal: &FidelityTable,
    epsilon: f64,
) -> Result<SemanticEntropy> {
    if single.kind() != TaskKind::SingleText || bimodal.kind() != TaskKind::BimodalVqa {
        return Err(Error::Table("expected one text table and one VQA table".into()));
    }
    let s = min_feasible_k(single, epsilon)?;
    let b = min_feasible_k(bimodal, epsilon)?;
    Ok(SemanticEntropy {
        single_text_suts: s[0],
        bimodal_text_suts: b[0],
        bimodal_image_suts: b[1],
        epsilon,
    })
}
