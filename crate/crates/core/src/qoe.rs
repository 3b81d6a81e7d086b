//! Logistic QoE scoring.
//!
//! Semantic users are scored on semantic rate and fidelity, conventional users
//! on bit rate. Every score lives in `[0, 1]`; a group's QoE is the sum over
//! its members. Rates are converted to the units the growth parameters are
//! quoted in (Ksuts/s for semantic rate, Mbps for bit rate) in exactly one
//! place, [`ksuts`] and [`mbps`].

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn ksuts(suts_per_s: f64) -> f64 {
    suts_per_s * 1e-3
}

pub fn mbps(bits_per_s: f64) -> f64 {
    bits_per_s * 1e-6
}

/// `1 / (1 + exp(growth * (requirement - value)))`.
///
/// Overflow of the exponential saturates cleanly to 0 or 1.
pub fn logistic_score(value: f64, requirement: f64, growth: f64) -> f64 {
    1.0 / (1.0 + (growth * (requirement - value)).exp())
}

/// Per-user parameters of the semantic QoE model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SemanticQoe {
    /// Weight of the rate score; the fidelity score gets `1 - weight`.
    pub weight: f64,
    /// Growth rate of the rate score, per Ksuts/s.
    pub rate_growth_per_ksuts: f64,
    pub rate_req_ksuts: f64,
    /// Growth rate of the fidelity score, per unit fidelity.
    pub fidelity_growth: f64,
    pub fidelity_req: f64,
}

impl SemanticQoe {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(Error::Config(format!("weight {} not in [0,1]", self.weight)));
        }
        for (name, v) in [
            ("rate_growth_per_ksuts", self.rate_growth_per_ksuts),
            ("rate_req_ksuts", self.rate_req_ksuts),
            ("fidelity_growth", self.fidelity_growth),
            ("fidelity_req", self.fidelity_req),
        ] {
            if !(v > 0.0) {
                return Err(Error::NonPositive { name, value: v });
            }
        }
        Ok(())
    }

    pub fn rate_score(&self, phi_suts: f64) -> f64 {
        logistic_score(ksuts(phi_suts), self.rate_req_ksuts, self.rate_growth_per_ksuts)
    }

    pub fn fidelity_score(&self, xi: f64) -> f64 {
        logistic_score(xi, self.fidelity_req, self.fidelity_growth)
    }
}

/// Per-user parameters of the bit-rate QoE model for conventional users.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConventionalQoe {
    pub growth_per_mbps: f64,
    pub bitrate_req_mbps: f64,
}

impl ConventionalQoe {
    pub fn score(&self, bits_per_s: f64) -> f64 {
        logistic_score(mbps(bits_per_s), self.bitrate_req_mbps, self.growth_per_mbps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum QoeParams {
    Semantic(SemanticQoe),
    Conventional(ConventionalQoe),
}

impl QoeParams {
    pub fn semantic(&self) -> Option<&SemanticQoe> {
        match self {
            QoeParams::Semantic(s) => Some(s),
            QoeParams::Conventional(_) => None,
        }
    }

    pub fn conventional(&self) -> Option<&ConventionalQoe> {
        match self {
            QoeParams::Conventional(c) => Some(c),
            QoeParams::Semantic(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserScore {
    /// Rate score `G_R` (semantic) or bit-rate score `G_C` (conventional).
    pub rate: f64,
    /// Fidelity score `G_A`; `None` for conventional users.
    pub fidelity: Option<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoeBreakdown {
    pub users: Vec<UserScore>,
    pub group_score: f64,
    /// Every member clears the score threshold on every component.
    pub served: bool,
}

impl QoeBreakdown {
    pub fn virtual_group() -> Self {
        QoeBreakdown {
            users: Vec::new(),
            group_score: 0.0,
            served: true,
        }
    }

    /// Contribution to the objective: the group score when served, else 0.
    pub fn reward(&self) -> f64 {
        if self.served {
            self.group_score
        } else {
            0.0
        }
    }
}

/// QoE of a semantic group given each member's semantic rate and the shared
/// task fidelity.
pub fn group_qoe(
    members: &[SemanticQoe],
    phi_suts: &[f64],
    xi: f64,
    g_th: f64,
) -> Result<QoeBreakdown> {
    if phi_suts.len() < members.len() {
        return Err(Error::MissingMember(phi_suts.len()));
    }
    let mut users = Vec::with_capacity(members.len());
    let mut served = true;
    let mut group_score = 0.0;
    for (p, &phi) in members.iter().zip(phi_suts) {
        let rate = p.rate_score(phi);
        let fidelity = p.fidelity_score(xi);
        let total = p.weight * rate + (1.0 - p.weight) * fidelity;
        served &= rate >= g_th && fidelity >= g_th;
        group_score += total;
        users.push(UserScore {
            rate,
            fidelity: Some(fidelity),
            total,
        });
    }
    Ok(QoeBreakdown {
        users,
        group_score,
        served,
    })
}

pub fn conventional_group_qoe(
    members: &[ConventionalQoe],
    bitrate_bps: &[f64],
    g_th: f64,
) -> Result<QoeBreakdown> {
    if bitrate_bps.len() < members.len() {
        return Err(Error::MissingMember(bitrate_bps.len()));
    }
    let mut users = Vec::with_capacity(members.len());
    let mut served = true;
    let mut group_score = 0.0;
    for (p, &c) in members.iter().zip(bitrate_bps) {
        let rate = p.score(c);
        served &= rate >= g_th;
        group_score += rate;
        users.push(UserScore {
            rate,
            fidelity: None,
            total: rate,
        });
    }
    Ok(QoeBreakdown {
        users,
        group_score,
        served,
    })
}

/// Uniform `[lo, hi]` range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformRange {
    pub lo: f64,
    pub hi: f64,
}

impl UniformRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        UniformRange { lo, hi }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi <= self.lo {
            return self.lo;
        }
        Uniform::new_inclusive(self.lo, self.hi)
            .expect("finite range")
            .sample(rng)
    }
}

/// Normal `N(mean, std^2)`, resampled until strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositiveNormal {
    pub mean: f64,
    pub std: f64,
}

impl PositiveNormal {
    pub const fn new(mean: f64, std: f64) -> Self {
        PositiveNormal { mean, std }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let normal = Normal::new(self.mean, self.std).expect("finite std");
        loop {
            let v = normal.sample(rng);
            if v > 0.0 {
                return v;
            }
        }
    }

    /// `mean ± 3 std`, clipped below at zero. Used for feature scaling.
    pub fn span(&self) -> (f64, f64) {
        ((self.mean - 3.0 * self.std).max(0.0), self.mean + 3.0 * self.std)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticQoeDist {
    pub weight: UniformRange,
    pub rate_growth_per_ksuts: PositiveNormal,
    pub rate_req_ksuts: UniformRange,
    pub fidelity_growth: PositiveNormal,
    pub fidelity_req: UniformRange,
}

impl SemanticQoeDist {
    pub fn text() -> Self {
        SemanticQoeDist {
            weight: UniformRange::new(0.0, 1.0),
            rate_growth_per_ksuts: PositiveNormal::new(0.2, 0.05),
            rate_req_ksuts: UniformRange::new(50.0, 70.0),
            fidelity_growth: PositiveNormal::new(55.0, 2.5),
            fidelity_req: UniformRange::new(0.8, 0.9),
        }
    }

    pub fn image() -> Self {
        SemanticQoeDist {
            rate_growth_per_ksuts: PositiveNormal::new(0.1, 0.02),
            rate_req_ksuts: UniformRange::new(80.0, 100.0),
            ..Self::text()
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SemanticQoe {
        SemanticQoe {
            weight: self.weight.sample(rng),
            rate_growth_per_ksuts: self.rate_growth_per_ksuts.sample(rng),
            rate_req_ksuts: self.rate_req_ksuts.sample(rng),
            fidelity_growth: self.fidelity_growth.sample(rng),
            fidelity_req: self.fidelity_req.sample(rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConventionalQoeDist {
    pub growth_per_mbps: PositiveNormal,
    pub bitrate_req_mbps: UniformRange,
}

impl ConventionalQoeDist {
    pub fn single_text() -> Self {
        ConventionalQoeDist {
            growth_per_mbps: PositiveNormal::new(30.0, 2.0),
            bitrate_req_mbps: UniformRange::new(0.4, 0.6),
        }
    }

    pub fn bimodal_text() -> Self {
        ConventionalQoeDist {
            growth_per_mbps: PositiveNormal::new(15.0, 1.0),
            bitrate_req_mbps: UniformRange::new(0.8, 1.2),
        }
    }

    pub fn bimodal_image() -> Self {
        ConventionalQoeDist {
            growth_per_mbps: PositiveNormal::new(2.0, 0.1),
            bitrate_req_mbps: UniformRange::new(4.5, 6.5),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ConventionalQoe {
        ConventionalQoe {
            growth_per_mbps: self.growth_per_mbps.sample(rng),
            bitrate_req_mbps: self.bitrate_req_mbps.sample(rng),
        }
    }
}

/// S-R requirements (Ksuts/s) used when the objective is the sum S-R.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrRequirementDist {
    pub text_ksuts: UniformRange,
    pub image_ksuts: UniformRange,
}

impl Default for SrRequirementDist {
    fn default() -> Self {
        SrRequirementDist {
            text_ksuts: UniformRange::new(40.0, 63.0),
            image_ksuts: UniformRange::new(64.0, 94.0),
        }
    }
}
