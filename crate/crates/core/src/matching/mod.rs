//! Many-to-one swap matching of user groups to (channel, power) resources
//! with inter-cell externalities.
//!
//! Each cell is padded so that user slots and channel slots are equal in
//! number: with virtual single-modal users when users are scarce, with
//! virtual channels when channels are scarce. A bimodal pair holds an
//! unordered channel pair; its text member sits on the lower channel.

mod engine;
mod objective;

pub use engine::{
    complexity_bound, complexity_counters, ComplexityReport, Engine, MatchingConfig, SwapProposal, Trace, TraceEntry,
};
pub use objective::{group_sinr_db, Objective, QoeObjective};

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{substream, Allocation, Link, Scenario, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaddingCase {
    /// Users do not outnumber channels; virtual users fill the gap.
    VirtualUsers,
    /// Users outnumber channels; virtual channels fill the gap.
    VirtualChannels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Player {
    Group { group: usize },
    VirtualUser,
}

/// A resource tuple: one channel and power level per member. Virtual users
/// carry no power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Resource {
    pub members: usize,
    pub channels: [usize; 2],
    pub powers: [usize; 2],
}

impl Resource {
    pub fn channels(&self) -> &[usize] {
        &self.channels[..self.members]
    }

    pub fn powers(&self) -> &[usize] {
        &self.powers[..self.members]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMatching {
    pub cell: usize,
    pub real_channels: usize,
    pub case: PaddingCase,
    pub players: Vec<Player>,
    /// Channel slot per member; slots at or above `real_channels` are virtual.
    pub channels: Vec<Vec<usize>>,
    /// Power level index per member; empty for virtual users.
    pub powers: Vec<Vec<usize>>,
}

impl CellMatching {
    /// Total channel slots, real plus virtual; equals the user slot count.
    pub fn slots(&self) -> usize {
        self.channels.iter().map(Vec::len).sum()
    }

    pub fn is_virtual_channel(&self, slot: usize) -> bool {
        slot >= self.real_channels
    }

    pub fn resource(&self, p: usize) -> Resource {
        let ch = &self.channels[p];
        let pw = &self.powers[p];
        let mut r = Resource {
            members: ch.len(),
            channels: [0; 2],
            powers: [0; 2],
        };
        r.channels[..ch.len()].copy_from_slice(ch);
        r.powers[..pw.len()].copy_from_slice(pw);
        r
    }

    /// `(player, member)` holding each channel slot.
    pub fn owners(&self) -> Vec<(usize, usize)> {
        let mut o = vec![(usize::MAX, 0); self.slots()];
        for (p, ch) in self.channels.iter().enumerate() {
            for (j, &c) in ch.iter().enumerate() {
                o[c] = (p, j);
            }
        }
        o
    }

    /// Whether player `p` transmits: a real group holding only real channels.
    pub fn is_active(&self, p: usize) -> bool {
        matches!(self.players[p], Player::Group { .. })
            && self.channels[p].iter().all(|&c| !self.is_virtual_channel(c))
    }

    /// Every resource tuple player `p` may hold, in lexicographic order.
    pub fn candidates(&self, p: usize, levels: usize) -> Vec<Resource> {
        let s = self.slots();
        let mut out = Vec::new();
        match (self.players[p], self.channels[p].len()) {
            (Player::VirtualUser, _) => {
                for m in 0..s {
                    out.push(Resource { members: 1, channels: [m, 0], powers: [0, 0] });
                }
            }
            (Player::Group { .. }, 1) => {
                for m in 0..s {
                    for l in 0..levels {
                        out.push(Resource { members: 1, channels: [m, 0], powers: [l, 0] });
                    }
                }
            }
            (Player::Group { .. }, _) => {
                for m in 0..s {
                    for m2 in m + 1..s {
                        for l in 0..levels {
                            for l2 in 0..levels {
                                out.push(Resource { members: 2, channels: [m, m2], powers: [l, l2] });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Moves player `p` onto `to`. Occupants of the channels it takes get
    /// the channels it releases, in ascending channel order, and keep their
    /// power levels. Returns the players whose holdings changed, `p` first.
    pub fn apply(&mut self, p: usize, to: &Resource) -> Vec<usize> {
        let owners = self.owners();
        let old = self.channels[p].clone();
        let mut released: Vec<usize> = old.iter().copied().filter(|c| !to.channels().contains(c)).collect();
        let mut taken: Vec<usize> = to.channels().iter().copied().filter(|c| !old.contains(c)).collect();
        released.sort_unstable();
        taken.sort_unstable();
        debug_assert_eq!(released.len(), taken.len());
        let mut involved = vec![p];
        for (&c, &r) in taken.iter().zip(&released) {
            let (occ, mem) = owners[c];
            self.channels[occ][mem] = r;
            if !involved.contains(&occ) {
                involved.push(occ);
            }
        }
        for &occ in &involved[1..] {
            self.channels[occ].sort_unstable();
        }
        self.channels[p] = to.channels().to_vec();
        if matches!(self.players[p], Player::Group { .. }) {
            self.powers[p] = to.powers().to_vec();
        }
        involved
    }

    pub fn check(&self, scenario: &Scenario) -> Result<()> {
        let s = self.slots();
        let levels = scenario.resources.levels();
        let mut seen = vec![false; s];
        for (p, ch) in self.channels.iter().enumerate() {
            for &c in ch {
                if c >= s || std::mem::replace(&mut seen[c], true) {
                    return Err(Error::Orthogonality { cell: self.cell, channel: c });
                }
            }
            match self.players[p] {
                Player::VirtualUser => {
                    if ch.len() != 1 || !self.powers[p].is_empty() {
                        return Err(Error::Config(format!("cell {} virtual user {p} malformed", self.cell)));
                    }
                }
                Player::Group { group } => {
                    let g = &scenario.groups[group];
                    if g.cell != self.cell || ch.len() != g.members.len() || self.powers[p].len() != ch.len() {
                        return Err(Error::Config(format!("cell {} player {p} malformed", self.cell)));
                    }
                    if ch.len() == 2 && ch[0] >= ch[1] {
                        return Err(Error::Config(format!("cell {} pair {p} not in channel order", self.cell)));
                    }
                    if self.powers[p].iter().any(|&l| l >= levels) {
                        return Err(Error::Config(format!("cell {} player {p} power level out of range", self.cell)));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub cells: Vec<CellMatching>,
}

impl Matching {
    /// Padded matching with channel slots dealt by a seeded permutation and
    /// every power at the lowest level.
    pub fn initial(scenario: &Scenario, seed: u64) -> Self {
        Self::dealt(scenario, &mut substream(seed, Stream::Matching))
    }

    /// Padded matching with channel slots dealt by `rng` and lowest powers.
    pub fn dealt<R: rand::Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Self {
        let m = scenario.resources.channels();
        let cells = (0..scenario.cells())
            .map(|b| {
                let users = scenario.users_in(b);
                let case = if users <= m { PaddingCase::VirtualUsers } else { PaddingCase::VirtualChannels };
                let mut players: Vec<Player> = scenario.groups_in(b).map(|g| Player::Group { group: g.id }).collect();
                let sizes: Vec<usize> = scenario.groups_in(b).map(|g| g.members.len()).collect();
                players.extend(std::iter::repeat_n(Player::VirtualUser, m.saturating_sub(users)));
                let slots = users.max(m);
                let mut perm: Vec<usize> = (0..slots).collect();
                perm.shuffle(rng);
                let mut next = perm.into_iter();
                let mut channels = Vec::with_capacity(players.len());
                let mut powers = Vec::with_capacity(players.len());
                for (i, pl) in players.iter().enumerate() {
                    let n = if i < sizes.len() { sizes[i] } else { 1 };
                    let mut ch: Vec<usize> = next.by_ref().take(n).collect();
                    ch.sort_unstable();
                    channels.push(ch);
                    powers.push(match pl {
                        Player::Group { .. } => vec![0; n],
                        Player::VirtualUser => Vec::new(),
                    });
                }
                CellMatching {
                    cell: b,
                    real_channels: m,
                    case,
                    players,
                    channels,
                    powers,
                }
            })
            .collect();
        Matching { cells }
    }

    pub fn check(&self, scenario: &Scenario) -> Result<()> {
        if self.cells.len() != scenario.cells() {
            return Err(Error::Dimension { expected: scenario.cells(), got: self.cells.len() });
        }
        for cm in &self.cells {
            cm.check(scenario)?;
            let mut groups: Vec<usize> = cm
                .players
                .iter()
                .filter_map(|p| match p {
                    Player::Group { group } => Some(*group),
                    Player::VirtualUser => None,
                })
                .collect();
            groups.sort_unstable();
            let expected: Vec<usize> = scenario.groups_in(cm.cell).map(|g| g.id).collect();
            if groups != expected {
                return Err(Error::Config(format!("cell {} does not hold exactly its groups", cm.cell)));
            }
        }
        Ok(())
    }

    /// Physical transmissions implied by the matching. Groups holding any
    /// virtual channel stay silent.
    pub fn allocation(&self, scenario: &Scenario) -> Allocation {
        let mut links = vec![None; scenario.users.len()];
        for cm in &self.cells {
            for (p, pl) in cm.players.iter().enumerate() {
                if let Player::Group { group } = *pl {
                    if cm.is_active(p) {
                        for (j, &u) in scenario.groups[group].members.iter().enumerate() {
                            links[u] = Some(Link {
                                channel: cm.channels[p][j],
                                power_w: scenario.resources.power_w(cm.powers[p][j]),
                            });
                        }
                    }
                }
            }
        }
        Allocation { links }
    }

    /// Per-user power level index of transmitting users.
    pub fn power_levels(&self, scenario: &Scenario) -> Vec<Option<usize>> {
        let mut out = vec![None; scenario.users.len()];
        for cm in &self.cells {
            for (p, pl) in cm.players.iter().enumerate() {
                if let (Player::Group { group }, true) = (*pl, cm.is_active(p)) {
                    for (j, &u) in scenario.groups[group].members.iter().enumerate() {
                        out[u] = Some(cm.powers[p][j]);
                    }
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn write_trace_csv<W: Write>(trace: &Trace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["swap_index", "total_qoe", "searches"])?;
    w.write_record(["0".to_string(), trace.initial_utility.to_string(), "0".to_string()])?;
    for e in &trace.entries {
        w.write_record([e.swap.to_string(), e.total_utility.to_string(), e.searches.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
