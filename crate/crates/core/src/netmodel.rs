//! Multi-cell uplink network model: scenario generation and SINR under MRC
//! combining with inter-cell co-channel interference.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qoe::{
    ConventionalQoeDist, QoeParams, SemanticQoeDist, SrRequirementDist,
};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    db_to_linear(dbm)
}

/// `128.1 + 37.6 log10(d_km)` dB.
pub fn pathloss_db(distance_m: f64) -> f64 {
    128.1 + 37.6 * (distance_m / 1000.0).log10()
}

/// Named RNG substreams so that, e.g., changing the QoE distributions does not
/// move users.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Placement = 1,
    Shadowing = 2,
    Fading = 3,
    QoeParams = 4,
    CellAssignment = 5,
    Matching = 6,
    Baseline = 7,
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupPlacement {
    /// Each group goes to the cell with the fewest users so far.
    #[default]
    Balanced,
    /// Each group picks a cell uniformly at random.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub cells: usize,
    pub cell_radius_m: f64,
    pub rx_antennas: usize,
    pub channels: usize,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub power_levels_dbm: Vec<f64>,
    /// Defaults to the largest power level.
    pub max_power_dbm: Option<f64>,
    pub n_single: usize,
    pub n_bimodal: usize,
    pub n_conv_single: usize,
    pub n_conv_bimodal: usize,
    pub min_distance_m: f64,
    pub shadowing_std_db: f64,
    pub g_th: f64,
    pub placement: GroupPlacement,
    pub text_qoe: SemanticQoeDist,
    pub image_qoe: SemanticQoeDist,
    pub conv_single_qoe: ConventionalQoeDist,
    pub conv_bimodal_text_qoe: ConventionalQoeDist,
    pub conv_bimodal_image_qoe: ConventionalQoeDist,
    pub sr_requirements: SrRequirementDist,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            cells: 3,
            cell_radius_m: 500.0,
            rx_antennas: 2,
            channels: 6,
            bandwidth_hz: 180e3,
            noise_psd_dbm_hz: -174.0,
            power_levels_dbm: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            max_power_dbm: None,
            n_single: 6,
            n_bimodal: 6,
            n_conv_single: 0,
            n_conv_bimodal: 0,
            min_distance_m: 10.0,
            shadowing_std_db: 6.0,
            g_th: 0.5,
            placement: GroupPlacement::Balanced,
            text_qoe: SemanticQoeDist::text(),
            image_qoe: SemanticQoeDist::image(),
            conv_single_qoe: ConventionalQoeDist::single_text(),
            conv_bimodal_text_qoe: ConventionalQoeDist::bimodal_text(),
            conv_bimodal_image_qoe: ConventionalQoeDist::bimodal_image(),
            sr_requirements: SrRequirementDist::default(),
        }
    }
}

impl ScenarioConfig {
    /// Half of the single-modal users and half of the bimodal pairs use the
    /// conventional system.
    pub fn coexistence(mut self) -> Self {
        let (s, b) = (self.n_single + self.n_conv_single, self.n_bimodal + self.n_conv_bimodal);
        self.n_single = s - s / 2;
        self.n_conv_single = s / 2;
        self.n_bimodal = b - b / 2;
        self.n_conv_bimodal = b / 2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 {
            return Err(Error::Config("at least one cell is required".into()));
        }
        if self.channels == 0 {
            return Err(Error::Config("at least one channel is required".into()));
        }
        if self.rx_antennas == 0 {
            return Err(Error::Config("at least one receive antenna is required".into()));
        }
        if !(self.cell_radius_m > 0.0) {
            return Err(Error::NonPositive { name: "cell_radius_m", value: self.cell_radius_m });
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::NonPositive { name: "bandwidth_hz", value: self.bandwidth_hz });
        }
        if !(self.min_distance_m > 0.0 && self.min_distance_m < self.cell_radius_m) {
            return Err(Error::Config("min_distance_m must lie in (0, radius)".into()));
        }
        if self.power_levels_dbm.is_empty() {
            return Err(Error::Config("power level set is empty".into()));
        }
        if self.power_levels_dbm.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("power levels must be strictly ascending".into()));
        }
        let top = *self.power_levels_dbm.last().unwrap();
        if let Some(pmax) = self.max_power_dbm {
            if top > pmax {
                return Err(Error::Config(format!(
                    "power level {top} dBm exceeds max power {pmax} dBm"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.g_th) {
            return Err(Error::Config(format!("g_th {} not in [0,1]", self.g_th)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTopology {
    pub cell_count: usize,
    pub cell_radius_m: f64,
    pub bs_positions_m: Vec<[f64; 2]>,
    pub rx_antennas: usize,
}

impl CellTopology {
    /// One BS at the origin, or `B` BSs on a ring with adjacent spacing of
    /// twice the radius (an equilateral triangle for `B = 3`).
    pub fn ring(cells: usize, radius_m: f64, rx_antennas: usize) -> Self {
        let bs_positions_m = if cells == 1 {
            vec![[0.0, 0.0]]
        } else {
            let ring = radius_m / (PI / cells as f64).sin();
            (0..cells)
                .map(|b| {
                    let a = PI / 2.0 + 2.0 * PI * b as f64 / cells as f64;
                    [ring * a.cos(), ring * a.sin()]
                })
                .collect()
        };
        CellTopology {
            cell_count: cells,
            cell_radius_m: radius_m,
            bs_positions_m,
            rx_antennas,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSets {
    pub channel_bandwidths_hz: Vec<f64>,
    pub power_levels_dbm: Vec<f64>,
    pub noise_psd_dbm_hz: f64,
    pub max_power_dbm: f64,
}

impl ResourceSets {
    pub fn channels(&self) -> usize {
        self.channel_bandwidths_hz.len()
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.channel_bandwidths_hz[0]
    }

    pub fn levels(&self) -> usize {
        self.power_levels_dbm.len()
    }

    /// Noise power over one channel, `sigma^2 * W`, in watts.
    pub fn noise_w(&self) -> f64 {
        dbm_to_watts(self.noise_psd_dbm_hz) * self.bandwidth_hz()
    }

    pub fn power_w(&self, level: usize) -> f64 {
        dbm_to_watts(self.power_levels_dbm[level])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    SingleText,
    BimodalPair,
    ConvText,
    ConvBimodalPair,
    Virtual,
}

impl GroupKind {
    pub fn members(self) -> usize {
        match self {
            GroupKind::SingleText | GroupKind::ConvText => 1,
            GroupKind::BimodalPair | GroupKind::ConvBimodalPair => 2,
            GroupKind::Virtual => 0,
        }
    }

    pub fn is_bimodal(self) -> bool {
        self.members() == 2
    }

    pub fn is_conventional(self) -> bool {
        matches!(self, GroupKind::ConvText | GroupKind::ConvBimodalPair)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberRole {
    Text,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: usize,
    pub cell: usize,
    pub group: usize,
    pub role: MemberRole,
    pub position_m: [f64; 2],
    pub qoe: QoeParams,
    /// Minimum S-R, used only by S-R objectives.
    pub sr_req_ksuts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserGroup {
    pub id: usize,
    pub cell: usize,
    pub kind: GroupKind,
    /// Text member first for bimodal pairs.
    pub members: Vec<usize>,
}

/// Small-scale fading plus large-scale loss per user/BS link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    /// `fading[u][b][m]` is an `N_r`-vector of unit-variance complex gains.
    pub fading: Vec<Vec<Vec<Vec<Complex64>>>>,
    /// `pathloss_db[u][b]`.
    pub pathloss_db: Vec<Vec<f64>>,
    /// `shadowing_db[u][b]`; positive values add loss.
    pub shadowing_db: Vec<Vec<f64>>,
}

impl ChannelRealization {
    /// Effective channel `H^b_{u,m}` including large-scale loss.
    pub fn effective(&self, user: usize, bs: usize, channel: usize) -> Vec<Complex64> {
        let amp = db_to_linear(-(self.pathloss_db[user][bs] + self.shadowing_db[user][bs])).sqrt();
        self.fading[user][bs][channel].iter().map(|h| h * amp).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub seed: u64,
    pub topology: CellTopology,
    pub resources: ResourceSets,
    pub g_th: f64,
    pub users: Vec<User>,
    pub groups: Vec<UserGroup>,
    pub channel: ChannelRealization,
}

impl Scenario {
    pub fn cells(&self) -> usize {
        self.topology.cell_count
    }

    pub fn groups_in(&self, cell: usize) -> impl Iterator<Item = &UserGroup> {
        self.groups.iter().filter(move |g| g.cell == cell)
    }

    pub fn users_in(&self, cell: usize) -> usize {
        self.users.iter().filter(|u| u.cell == cell).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(s)?;
        if sc.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::Schema {
                found: sc.schema_version,
                expected: SCENARIO_SCHEMA_VERSION,
            });
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        let (u, b, m, nr) = (
            self.users.len(),
            self.cells(),
            self.resources.channels(),
            self.topology.rx_antennas,
        );
        let shapes_ok = self.channel.fading.len() == u
            && self.channel.fading.iter().all(|per_bs| {
                per_bs.len() == b
                    && per_bs.iter().all(|per_ch| per_ch.len() == m && per_ch.iter().all(|v| v.len() == nr))
            })
            && self.channel.pathloss_db.len() == u
            && self.channel.shadowing_db.len() == u;
        if !shapes_ok {
            return Err(Error::Config("channel realization shape mismatch".into()));
        }
        let finite = self.channel.fading.iter().flatten().flatten().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
            && self.channel.pathloss_db.iter().flatten().all(|&p| p.is_finite() && p >= 0.0)
            && self.channel.shadowing_db.iter().flatten().all(|s| s.is_finite());
        if !finite {
            return Err(Error::Config("channel realization has invalid entries".into()));
        }
        for g in &self.groups {
            if g.members.len() != g.kind.members() {
                return Err(Error::Config(format!("group {} has wrong member count", g.id)));
            }
            if g.members.iter().any(|&id| id >= u || self.users[id].cell != g.cell) {
                return Err(Error::Config(format!("group {} has a member outside its cell", g.id)));
            }
        }
        Ok(())
    }
}

pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let topology = CellTopology::ring(config.cells, config.cell_radius_m, config.rx_antennas);
    let resources = ResourceSets {
        channel_bandwidths_hz: vec![config.bandwidth_hz; config.channels],
        power_levels_dbm: config.power_levels_dbm.clone(),
        noise_psd_dbm_hz: config.noise_psd_dbm_hz,
        max_power_dbm: config
            .max_power_dbm
            .unwrap_or(*config.power_levels_dbm.last().unwrap()),
    };

    // Bimodal pairs are placed before single users so that balanced placement
    // spreads the pairs evenly.
    let mut kinds = Vec::new();
    kinds.extend(std::iter::repeat_n(GroupKind::BimodalPair, config.n_bimodal));
    kinds.extend(std::iter::repeat_n(GroupKind::ConvBimodalPair, config.n_conv_bimodal));
    kinds.extend(std::iter::repeat_n(GroupKind::SingleText, config.n_single));
    kinds.extend(std::iter::repeat_n(GroupKind::ConvText, config.n_conv_single));

    let mut cell_rng = substream(seed, Stream::CellAssignment);
    let mut load = vec![0usize; config.cells];
    let mut placed: Vec<(usize, GroupKind)> = kinds
        .into_iter()
        .map(|kind| {
            let cell = match config.placement {
                GroupPlacement::Balanced => (0..config.cells).min_by_key(|&c| (load[c], c)).unwrap(),
                GroupPlacement::Uniform => cell_rng.random_range(0..config.cells),
            };
            load[cell] += kind.members();
            (cell, kind)
        })
        .collect();
    let kind_rank = |k: GroupKind| match k {
        GroupKind::BimodalPair => 0,
        GroupKind::ConvBimodalPair => 1,
        GroupKind::SingleText => 2,
        GroupKind::ConvText => 3,
        GroupKind::Virtual => 4,
    };
    // Stable sort keeps creation order within a (cell, kind) bucket.
    placed.sort_by_key(|&(cell, kind)| (cell, kind_rank(kind)));

    let mut place_rng = substream(seed, Stream::Placement);
    let mut qoe_rng = substream(seed, Stream::QoeParams);
    let mut users = Vec::new();
    let mut groups = Vec::new();
    for (gid, &(cell, kind)) in placed.iter().enumerate() {
        let roles: &[MemberRole] = if kind.is_bimodal() {
            &[MemberRole::Text, MemberRole::Image]
        } else {
            &[MemberRole::Text]
        };
        let mut members = Vec::new();
        for &role in roles {
            let id = users.len();
            let bs = topology.bs_positions_m[cell];
            let r = place_rng
                .random_range(config.min_distance_m.powi(2)..config.cell_radius_m.powi(2))
                .sqrt();
            let theta = place_rng.random_range(0.0..2.0 * PI);
            let position_m = [bs[0] + r * theta.cos(), bs[1] + r * theta.sin()];
            let qoe = match (kind, role) {
                (GroupKind::BimodalPair, MemberRole::Image) => {
                    QoeParams::Semantic(config.image_qoe.sample(&mut qoe_rng))
                }
                (GroupKind::BimodalPair | GroupKind::SingleText, _) => {
                    QoeParams::Semantic(config.text_qoe.sample(&mut qoe_rng))
                }
                (GroupKind::ConvText, _) => {
                    QoeParams::Conventional(config.conv_single_qoe.sample(&mut qoe_rng))
                }
                (GroupKind::ConvBimodalPair, MemberRole::Text) => {
                    QoeParams::Conventional(config.conv_bimodal_text_qoe.sample(&mut qoe_rng))
                }
                (GroupKind::ConvBimodalPair, MemberRole::Image) => {
                    QoeParams::Conventional(config.conv_bimodal_image_qoe.sample(&mut qoe_rng))
                }
                (GroupKind::Virtual, _) => unreachable!("scenarios never contain virtual groups"),
            };
            let sr_req_ksuts = match role {
                MemberRole::Text => config.sr_requirements.text_ksuts.sample(&mut qoe_rng),
                MemberRole::Image => config.sr_requirements.image_ksuts.sample(&mut qoe_rng),
            };
            users.push(User {
                id,
                cell,
                group: gid,
                role,
                position_m,
                qoe,
                sr_req_ksuts,
            });
            members.push(id);
        }
        groups.push(UserGroup {
            id: gid,
            cell,
            kind,
            members,
        });
    }

    let mut shadow_rng = substream(seed, Stream::Shadowing);
    let mut fading_rng = substream(seed, Stream::Fading);
    let shadow = Normal::new(0.0, config.shadowing_std_db).map_err(|e| Error::Config(e.to_string()))?;
    let component = Normal::new(0.0, 0.5f64.sqrt()).expect("valid std");
    let mut pathloss = Vec::with_capacity(users.len());
    let mut shadowing = Vec::with_capacity(users.len());
    let mut fading = Vec::with_capacity(users.len());
    for u in &users {
        let mut pl = Vec::with_capacity(config.cells);
        let mut sh = Vec::with_capacity(config.cells);
        let mut per_bs = Vec::with_capacity(config.cells);
        for bs in &topology.bs_positions_m {
            let d = ((u.position_m[0] - bs[0]).powi(2) + (u.position_m[1] - bs[1]).powi(2))
                .sqrt()
                .max(config.min_distance_m);
            pl.push(pathloss_db(d));
            sh.push(shadow.sample(&mut shadow_rng));
            per_bs.push(
                (0..config.channels)
                    .map(|_| {
                        (0..config.rx_antennas)
                            .map(|_| {
                                Complex64::new(
                                    component.sample(&mut fading_rng),
                                    component.sample(&mut fading_rng),
                                )
                            })
                            .collect()
                    })
                    .collect(),
            );
        }
        pathloss.push(pl);
        shadowing.push(sh);
        fading.push(per_bs);
    }

    Ok(Scenario {
        schema_version: SCENARIO_SCHEMA_VERSION,
        seed,
        topology,
        resources,
        g_th: config.g_th,
        users,
        groups,
        channel: ChannelRealization {
            fading,
            pathloss_db: pathloss,
            shadowing_db: shadowing,
        },
    })
}

/// MRC combiner: the conjugate transpose of the channel vector.
pub fn mrc_detector(h: &[Complex64]) -> Result<Vec<Complex64>> {
    if h.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::ZeroChannel);
    }
    Ok(h.iter().map(|z| z.conj()).collect())
}

/// Transmission state of one user: channel and transmit power in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub channel: usize,
    pub power_w: f64,
}

/// Physical allocation `(alpha, p)`: `links[u]` is `None` for users that do
/// not transmit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Allocation {
    pub links: Vec<Option<Link>>,
}

/// Precomputed effective channels for fast SINR evaluation.
#[derive(Debug, Clone)]
pub struct LinkModel {
    users: usize,
    cells: usize,
    channels: usize,
    antennas: usize,
    user_cell: Vec<usize>,
    gains: Vec<Complex64>,
    noise_w: f64,
}

impl LinkModel {
    pub fn new(scenario: &Scenario) -> Self {
        let (users, cells, channels, antennas) = (
            scenario.users.len(),
            scenario.cells(),
            scenario.resources.channels(),
            scenario.topology.rx_antennas,
        );
        let mut gains = Vec::with_capacity(users * cells * channels * antennas);
        for u in 0..users {
            for b in 0..cells {
                for m in 0..channels {
                    gains.extend(scenario.channel.effective(u, b, m));
                }
            }
        }
        LinkModel {
            users,
            cells,
            channels,
            antennas,
            user_cell: scenario.users.iter().map(|u| u.cell).collect(),
            gains,
            noise_w: scenario.resources.noise_w(),
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn cell_of(&self, user: usize) -> usize {
        self.user_cell[user]
    }

    pub fn gain(&self, user: usize, bs: usize, channel: usize) -> &[Complex64] {
        let i = ((user * self.cells + bs) * self.channels + channel) * self.antennas;
        &self.gains[i..i + self.antennas]
    }

    /// Received SINR (linear) of `user` on `channel` at its own BS with
    /// `interferers` given as `(user, power_w)` pairs from other cells.
    pub fn sinr(
        &self,
        user: usize,
        channel: usize,
        power_w: f64,
        interferers: impl IntoIterator<Item = (usize, f64)>,
    ) -> f64 {
        if power_w <= 0.0 {
            return 0.0;
        }
        let bs = self.user_cell[user];
        let h = self.gain(user, bs, channel);
        let norm2: f64 = h.iter().map(|z| z.norm_sqr()).sum();
        if norm2 == 0.0 {
            return 0.0;
        }
        let interference: f64 = interferers
            .into_iter()
            .map(|(v, p)| {
                let g = self.gain(v, bs, channel);
                let dot: Complex64 = h.iter().zip(g).map(|(a, b)| a.conj() * b).sum();
                p * dot.norm_sqr()
            })
            .sum();
        power_w * norm2 * norm2 / (norm2 * self.noise_w + interference)
    }
}

/// Per-user SINR (linear) for a physical allocation; non-transmitting users
/// get 0.
pub fn compute_sinr(scenario: &Scenario, allocation: &Allocation) -> Result<Vec<f64>> {
    let model = LinkModel::new(scenario);
    if allocation.links.len() != scenario.users.len() {
        return Err(Error::Dimension {
            expected: scenario.users.len(),
            got: allocation.links.len(),
        });
    }
    let m = scenario.resources.channels();
    let mut occupant: Vec<Vec<Option<usize>>> = vec![vec![None; m]; scenario.cells()];
    for (u, link) in allocation.links.iter().enumerate() {
        if let Some(l) = link {
            if l.channel >= m {
                return Err(Error::Config(format!("user {u} on unknown channel {}", l.channel)));
            }
            let cell = scenario.users[u].cell;
            if occupant[cell][l.channel].replace(u).is_some() {
                return Err(Error::Orthogonality { cell, channel: l.channel });
            }
        }
    }
    Ok(allocation
        .links
        .iter()
        .enumerate()
        .map(|(u, link)| match link {
            None => 0.0,
            Some(l) => {
                let cell = scenario.users[u].cell;
                let interferers = (0..scenario.cells())
                    .filter(|&b| b != cell)
                    .filter_map(|b| occupant[b][l.channel])
                    .map(|v| (v, allocation.links[v].unwrap().power_w));
                model.sinr(u, l.channel, l.power_w, interferers)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_scenario(seed: u64) -> Scenario {
        generate_scenario(&ScenarioConfig::default(), seed).unwrap()
    }

    /// Straight-line evaluation of the SINR expression with an explicit
    /// combiner, independent of `LinkModel`.
    fn brute_sinr(sc: &Scenario, alloc: &Allocation, u: usize) -> f64 {
        let Some(l) = alloc.links[u] else { return 0.0 };
        let b = sc.users[u].cell;
        let h = sc.channel.effective(u, b, l.channel);
        let w = mrc_detector(&h).unwrap();
        let wh = |g: &[Complex64]| -> f64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..g.len() {
                acc += w[i] * g[i];
            }
            acc.norm_sqr()
        };
        let wnorm: f64 = w.iter().map(|z| z.norm_sqr()).sum();
        let psd_w = 10f64.powf((sc.resources.noise_psd_dbm_hz - 30.0) / 10.0);
        let noise = wnorm * psd_w * sc.resources.channel_bandwidths_hz[l.channel];
        let mut interference = 0.0;
        for (v, other) in alloc.links.iter().enumerate() {
            if let Some(o) = other {
                if sc.users[v].cell != b && o.channel == l.channel {
                    interference += o.power_w * wh(&sc.channel.effective(v, b, l.channel));
                }
            }
        }
        l.power_w * wh(&h) / (noise + interference)
    }

    fn alloc_all(sc: &Scenario, power_dbm: f64) -> Allocation {
        // Each cell's users take channels 0,1,2,... in order.
        let mut next = vec![0usize; sc.cells()];
        Allocation {
            links: sc
                .users
                .iter()
                .map(|u| {
                    let c = next[u.cell];
                    next[u.cell] += 1;
                    (c < sc.resources.channels()).then(|| Link {
                        channel: c,
                        power_w: dbm_to_watts(power_dbm),
                    })
                })
                .collect(),
        }
    }

    #[test]
    fn default_config_has_eighteen_users() {
        let sc = default_scenario(1);
        assert_eq!(sc.users.len(), 18);
        assert_eq!(sc.groups.len(), 12);
        for b in 0..3 {
            assert_eq!(sc.users_in(b), 6);
        }
        sc.validate().unwrap();
    }

    #[test]
    fn generation_is_deterministic() {
        let a = default_scenario(42);
        let b = default_scenario(42);
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_ne!(a, default_scenario(43));
    }

    #[test]
    fn json_round_trip() {
        let a = default_scenario(5);
        let b = Scenario::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn users_lie_in_their_cell_disc() {
        let sc = default_scenario(11);
        for u in &sc.users {
            let bs = sc.topology.bs_positions_m[u.cell];
            let d = ((u.position_m[0] - bs[0]).powi(2) + (u.position_m[1] - bs[1]).powi(2)).sqrt();
            assert!((10.0 - 1e-9..=500.0 + 1e-9).contains(&d), "{d}");
        }
    }

    #[test]
    fn pathloss_at_one_km() {
        assert_eq!(pathloss_db(1000.0), 128.1);
    }

    #[test]
    fn triangle_layout_spacing() {
        let t = CellTopology::ring(3, 500.0, 2);
        for i in 0..3 {
            let (a, b) = (t.bs_positions_m[i], t.bs_positions_m[(i + 1) % 3]);
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            assert!((d - 1000.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_degenerate_configs() {
        for cfg in [
            ScenarioConfig { channels: 0, ..Default::default() },
            ScenarioConfig { cells: 0, ..Default::default() },
            ScenarioConfig { cell_radius_m: 0.0, ..Default::default() },
            ScenarioConfig { power_levels_dbm: vec![0.0, 0.0], ..Default::default() },
            ScenarioConfig { max_power_dbm: Some(10.0), ..Default::default() },
        ] {
            assert!(generate_scenario(&cfg, 0).is_err());
        }
    }

    #[test]
    fn mrc_is_conjugation() {
        let h = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        let w = mrc_detector(&h).unwrap();
        assert_eq!(w, vec![Complex64::new(1.0, -0.0), Complex64::new(0.0, -1.0)]);
        assert!(matches!(mrc_detector(&[Complex64::new(0.0, 0.0); 2]), Err(Error::ZeroChannel)));
    }

    #[test]
    fn mrc_gain_equals_channel_norm() {
        let mut rng = substream(1, Stream::Fading);
        for _ in 0..50 {
            let h: Vec<Complex64> = (0..4)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let w = mrc_detector(&h).unwrap();
            let wh: Complex64 = w.iter().zip(&h).map(|(a, b)| a * b).sum();
            let wn: f64 = w.iter().map(|z| z.norm_sqr()).sum();
            let hn: f64 = h.iter().map(|z| z.norm_sqr()).sum();
            assert!((wh.norm_sqr() / wn - hn).abs() <= 1e-12 * hn);
        }
    }

    #[test]
    fn mrc_beats_random_combiners_on_noise_only_links() {
        let mut rng = substream(7, Stream::Fading);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for _ in 0..100 {
            let h: Vec<Complex64> =
                (0..2).map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))).collect();
            let snr = |w: &[Complex64]| {
                let wh: Complex64 = w.iter().zip(&h).map(|(a, b)| a * b).sum();
                wh.norm_sqr() / w.iter().map(|z| z.norm_sqr()).sum::<f64>()
            };
            let best = snr(&mrc_detector(&h).unwrap());
            for _ in 0..100 {
                let mut w: Vec<Complex64> =
                    (0..2).map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))).collect();
                let n = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                w.iter_mut().for_each(|z| *z /= n);
                assert!(best >= snr(&w) * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn zero_power_gives_zero_sinr() {
        let mut sc = generate_scenario(
            &ScenarioConfig { cells: 1, n_single: 1, n_bimodal: 0, channels: 1, ..Default::default() },
            0,
        )
        .unwrap();
        sc.channel.fading[0][0][0] = vec![Complex64::new(1.0, 0.0); 2];
        let alloc = Allocation { links: vec![Some(Link { channel: 0, power_w: 0.0 })] };
        assert_eq!(compute_sinr(&sc, &alloc).unwrap(), vec![0.0]);
    }

    #[test]
    fn single_link_closed_form() {
        // h = [1, 1], p = 1 W, sigma^2 W = 1 W  =>  gamma = 2.
        let mut sc = generate_scenario(
            &ScenarioConfig { cells: 1, n_single: 1, n_bimodal: 0, channels: 1, ..Default::default() },
            0,
        )
        .unwrap();
        sc.channel.fading[0][0][0] = vec![Complex64::new(1.0, 0.0); 2];
        sc.channel.pathloss_db[0][0] = 0.0;
        sc.channel.shadowing_db[0][0] = 0.0;
        sc.resources.channel_bandwidths_hz = vec![1.0];
        sc.resources.noise_psd_dbm_hz = 30.0;
        let alloc = Allocation { links: vec![Some(Link { channel: 0, power_w: 1.0 })] };
        let g = compute_sinr(&sc, &alloc).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_with_interference() {
        for seed in 0..5 {
            let sc = default_scenario(seed);
            let alloc = alloc_all(&sc, 10.0);
            let fast = compute_sinr(&sc, &alloc).unwrap();
            for u in 0..sc.users.len() {
                let slow = brute_sinr(&sc, &alloc, u);
                assert!((fast[u] - slow).abs() <= 1e-12 * slow.abs().max(1e-300), "{u}: {} vs {slow}", fast[u]);
            }
        }
    }

    #[test]
    fn intra_cell_collision_is_rejected() {
        let sc = default_scenario(0);
        let mut alloc = alloc_all(&sc, 0.0);
        alloc.links[1] = alloc.links[0];
        assert!(matches!(compute_sinr(&sc, &alloc), Err(Error::Orthogonality { .. })));
    }

    #[test]
    fn sinr_monotone_in_powers_and_interference() {
        let sc = default_scenario(3);
        let base = alloc_all(&sc, 5.0);
        let g0 = compute_sinr(&sc, &base).unwrap();
        // User 0 raises its power.
        let mut louder = base.clone();
        louder.links[0].as_mut().unwrap().power_w *= 4.0;
        let g1 = compute_sinr(&sc, &louder).unwrap();
        assert!(g1[0] >= g0[0]);
        for u in 0..sc.users.len() {
            if sc.users[u].cell != sc.users[0].cell {
                assert!(g1[u] <= g0[u]);
            }
        }
        // No interferers at all.
        let cell0 = sc.users[0].cell;
        let mut alone = base.clone();
        for (u, l) in alone.links.iter_mut().enumerate() {
            if sc.users[u].cell != cell0 {
                *l = None;
            }
        }
        let g2 = compute_sinr(&sc, &alone).unwrap();
        for u in 0..sc.users.len() {
            if sc.users[u].cell == cell0 {
                assert!(g2[u] >= g0[u]);
            }
        }
    }

    #[test]
    fn db_round_trips() {
        for &x in &[-174.0, -30.0, 0.0, 12.345, 60.0] {
            assert!((linear_to_db(db_to_linear(x)) - x).abs() <= 1e-12 * x.abs().max(1.0));
            assert!((watts_to_dbm(dbm_to_watts(x)) - x).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn permuting_users_keeps_sinr_multiset(seed in 0u64..1000, rot in 1usize..17) {
                let sc = default_scenario(seed);
                let alloc = alloc_all(&sc, 0.0);
                let mut base = compute_sinr(&sc, &alloc).unwrap();
                // Relabel users by a rotation and permute every per-user array.
                let n = sc.users.len();
                let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
                let mut p = sc.clone();
                for (new, &old) in perm.iter().enumerate() {
                    p.users[new] = sc.users[old].clone();
                    p.users[new].id = new;
                    p.channel.fading[new] = sc.channel.fading[old].clone();
                    p.channel.pathloss_db[new] = sc.channel.pathloss_db[old].clone();
                    p.channel.shadowing_db[new] = sc.channel.shadowing_db[old].clone();
                }
                let palloc = Allocation { links: perm.iter().map(|&old| alloc.links[old]).collect() };
                let mut permuted = compute_sinr(&p, &palloc).unwrap();
                base.sort_by(f64::total_cmp);
                permuted.sort_by(f64::total_cmp);
                prop_assert_eq!(base, permuted);
            }

            #[test]
            fn db_conversion_round_trip(x in -200.0f64..200.0) {
                prop_assert!((linear_to_db(db_to_linear(x)) - x).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }
}
