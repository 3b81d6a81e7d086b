//! Task fidelity models, approximate semantic entropy, and the rate
//! quantities built on them.

mod entropy;
mod model;
mod table;

pub use entropy::{approx_semantic_entropy, min_feasible_k, SemanticEntropy};
pub use model::{fit_fidelity, FidelityBacking, FidelityModel, FitConfig, FitReport};
pub use table::{synth_table, FidelityTable, ModalityShape, SynthParams, TaskKind};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel symbols per image patch sequence of the image encoder.
pub const IMAGE_PATCHES: f64 = 197.0;
/// Bits per word used by conventional text coding.
pub const MU_TEXT_BITS_PER_WORD: f64 = 40.0;
/// Bits per image used by conventional image coding.
pub const MU_IMAGE_BITS_PER_IMAGE: f64 = 55624.0;

/// Semantic rate `H W / k` in suts/s.
pub fn semantic_rate(h_suts: f64, k: f64, bandwidth_hz: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::NonPositive { name: "k", value: k });
    }
    if !(bandwidth_hz > 0.0) {
        return Err(Error::NonPositive { name: "bandwidth_hz", value: bandwidth_hz });
    }
    Ok(h_suts * bandwidth_hz / k)
}

/// S-R: semantic rate times fidelity.
pub fn s_rate(phi_suts: f64, xi: f64) -> f64 {
    phi_suts * xi
}

/// Shannon bit rate `W log2(1 + gamma)`.
pub fn conventional_bit_rate(sinr: f64, bandwidth_hz: f64) -> f64 {
    bandwidth_hz * (1.0 + sinr).log2()
}

/// S-R of a conventional user: `C H / mu`.
pub fn equivalent_s_rate(bits_per_s: f64, mu_bits: f64, h_suts: f64) -> Result<f64> {
    if !(mu_bits > 0.0) {
        return Err(Error::NonPositive { name: "mu", value: mu_bits });
    }
    Ok(bits_per_s * h_suts / mu_bits)
}

/// Fidelity models for both tasks plus their entropies; everything a P1
/// solver needs besides the per-group state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskModels {
    pub single: FidelityModel,
    pub bimodal: FidelityModel,
    pub entropy: SemanticEntropy,
    pub bandwidth_hz: f64,
}

impl TaskModels {
    /// Table-backed models on the synthetic fixture.
    pub fn fixture(params: &SynthParams, epsilon: f64, bandwidth_hz: f64) -> Result<Self> {
        let single = synth_table(TaskKind::SingleText, params)?;
        let bimodal = synth_table(TaskKind::BimodalVqa, params)?;
        Self::from_tables(single, bimodal, epsilon, bandwidth_hz)
    }

    pub fn from_tables(
        single: FidelityTable,
        bimodal: FidelityTable,
        epsilon: f64,
        bandwidth_hz: f64,
    ) -> Result<Self> {
        let entropy = approx_semantic_entropy(&single, &bimodal, epsilon)?;
        Ok(TaskModels {
            single: FidelityModel::from_table(single)?,
            bimodal: FidelityModel::from_table(bimodal)?,
            entropy,
            bandwidth_hz,
        })
    }

    /// Semantic rates of a bimodal pair: `(text, image)`.
    pub fn bimodal_rates(&self, k_t: f64, k_i: f64) -> Result<(f64, f64)> {
        Ok((
            semantic_rate(self.entropy.bimodal_text_suts, k_t, self.bandwidth_hz)?,
            semantic_rate(self.entropy.bimodal_image_suts, k_i, self.bandwidth_hz)?,
        ))
    }

    pub fn single_rate(&self, k: f64) -> Result<f64> {
        semantic_rate(self.entropy.single_text_suts, k, self.bandwidth_hz)
    }
}
