//! One-hop star clusters: ad-hoc head election, membership, battery-aware
//! sampling schedules and fix distribution.
//!
//! Radio range checks use true positions and an ideal lossless disk. Every
//! message is charged to the ledgers handed in through [`Medium`]: one
//! transmit to the sender and one receive per live addressee in range.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{Category, EnergyLedger};
use crate::rng::SimRng;
use crate::sensors::GpsFix;
use crate::{Error, NodeId, Result, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolParams {
    /// Cluster and radio radius, m.
    pub radius: f64,
    /// Election timers are drawn uniformly from this interval, s.
    pub timer_range: [f64; 2],
    /// Schedule weight is `remaining_battery ^ weight_exponent`.
    pub weight_exponent: f64,
    /// Consecutive missed updates after which a member leaves.
    pub max_missed: u8,
    /// Sampling instants covered by one schedule.
    pub schedule_horizon: usize,
    /// A lone head joins an in-range cluster instead of staying a singleton.
    pub merge_singletons: bool,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            radius: 50.0,
            timer_range: [0.0, 1.0],
            weight_exponent: 1.0,
            max_missed: 3,
            schedule_horizon: 10,
            merge_singletons: true,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::config("protocol.radius", "must be > 0"));
        }
        let [lo, hi] = self.timer_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::config(
                "protocol.timer_range",
                format!("[{lo}, {hi}] is degenerate"),
            ));
        }
        if !(self.weight_exponent.is_finite() && self.weight_exponent >= 0.0) {
            return Err(Error::config("protocol.weight_exponent", "must be >= 0"));
        }
        if self.max_missed == 0 {
            return Err(Error::config("protocol.max_missed", "must be >= 1"));
        }
        if self.schedule_horizon == 0 {
            return Err(Error::config("protocol.schedule_horizon", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageKind {
    HeadClaim,
    Join,
    Schedule,
    FixRequest,
    FixReport,
    FixBroadcast,
}

impl MessageKind {
    pub const ALL: [MessageKind; 6] = [
        MessageKind::HeadClaim,
        MessageKind::Join,
        MessageKind::Schedule,
        MessageKind::FixRequest,
        MessageKind::FixReport,
        MessageKind::FixBroadcast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::HeadClaim => "head_claim",
            MessageKind::Join => "join",
            MessageKind::Schedule => "schedule",
            MessageKind::FixRequest => "fix_request",
            MessageKind::FixReport => "fix_report",
            MessageKind::FixBroadcast => "fix_broadcast",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Empty,
    Schedule(Vec<NodeId>),
    Fix(GpsFix),
}

/// Every message occupies one packet for energy purposes, whatever its payload.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolMessage {
    pub kind: MessageKind,
    pub sender: NodeId,
    pub payload: Payload,
}

impl ProtocolMessage {
    pub fn new(kind: MessageKind, sender: NodeId) -> Self {
        Self {
            kind,
            sender,
            payload: Payload::Empty,
        }
    }
}

/// Physical state the protocol acts on during one tick.
pub struct Medium<'a> {
    pub positions: &'a [Vec3],
    pub ledgers: &'a mut [EnergyLedger],
    /// Cost of one transmit or one receive, J.
    pub msg_cost: f64,
    pub radius: f64,
}

impl Medium<'_> {
    pub fn in_range(&self, a: NodeId, b: NodeId) -> bool {
        (self.positions[a] - self.positions[b]).norm() <= self.radius
    }

    pub fn alive(&self, node: NodeId) -> bool {
        self.ledgers[node].alive()
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        (self.positions[a] - self.positions[b]).norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub head: NodeId,
    /// Includes the head.
    pub members: BTreeSet<NodeId>,
    pub missed: BTreeMap<NodeId, u8>,
    /// Upcoming samplers, one per sampling instant.
    pub schedule: VecDeque<NodeId>,
}

impl ClusterState {
    pub fn new(head: NodeId) -> Self {
        Self {
            head,
            members: BTreeSet::from([head]),
            missed: BTreeMap::new(),
            schedule: VecDeque::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn missed(&self, node: NodeId) -> u8 {
        self.missed.get(&node).copied().unwrap_or(0)
    }

    fn add(&mut self, node: NodeId) {
        self.members.insert(node);
        self.missed.remove(&node);
        self.schedule.clear();
    }

    fn remove(&mut self, node: NodeId) {
        self.members.remove(&node);
        self.missed.remove(&node);
        self.schedule.clear();
    }
}

/// Timers drawn for an election, one per candidate in candidate order.
pub fn draw_timers(n: usize, params: &ProtocolParams, rng: &mut SimRng) -> Vec<f64> {
    let [lo, hi] = params.timer_range;
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Heads chosen by a timer race.
///
/// Candidates fire in `(timer, id)` order. A node becomes head when no head
/// that fired earlier is within `radius`; otherwise it heard that claim and
/// stays quiet. Inside any group of mutually in-range nodes the smallest
/// timer therefore wins, and exact ties go to the lowest id.
pub fn elect_heads(candidates: &[NodeId], timers: &[f64], positions: &[Vec3], radius: f64) -> Vec<NodeId> {
    debug_assert_eq!(candidates.len(), timers.len());
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| timers[a].total_cmp(&timers[b]).then(candidates[a].cmp(&candidates[b])));
    let mut heads: Vec<NodeId> = Vec::new();
    for k in order {
        let c = candidates[k];
        if heads.iter().all(|&h| (positions[h] - positions[c]).norm() > radius) {
            heads.push(c);
        }
    }
    heads
}

/// Elects heads among `candidates` with freshly drawn timers.
pub fn elect_head(candidates: &[NodeId], positions: &[Vec3], params: &ProtocolParams, rng: &mut SimRng) -> Vec<NodeId> {
    let timers = draw_timers(candidates.len(), params, rng);
    elect_heads(candidates, &timers, positions, params.radius)
}

/// Nearest head within `radius` of `node`; distance ties go to the lower id.
pub fn nearest_head(
    node: NodeId,
    heads: impl IntoIterator<Item = NodeId>,
    positions: &[Vec3],
    radius: f64,
) -> Option<NodeId> {
    heads
        .into_iter()
        .map(|h| ((positions[h] - positions[node]).norm(), h))
        .filter(|&(d, _)| d <= radius)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, h)| h)
}

/// Draws `horizon` samplers with probability proportional to
/// `remaining^exponent`. Dead members weigh nothing; if every member is dead
/// the schedule is empty.
pub fn build_schedule(
    members: &BTreeSet<NodeId>,
    ledgers: &[EnergyLedger],
    horizon: usize,
    exponent: f64,
    rng: &mut SimRng,
) -> Vec<NodeId> {
    let ids: Vec<NodeId> = members.iter().copied().collect();
    let weights: Vec<f64> = ids
        .iter()
        .map(|&m| {
            let l = &ledgers[m];
            if l.alive() {
                l.remaining().powf(exponent)
            } else {
                0.0
            }
        })
        .collect();
    let Ok(dist) = WeightedIndex::new(&weights) else {
        return Vec::new();
    };
    (0..horizon).map(|_| ids[dist.sample(rng)]).collect()
}

/// How a head tells the chosen sampler it is on duty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Announce {
    /// The whole schedule is broadcast to the cluster whenever it is rebuilt.
    Broadcast,
    /// Each assignment is sent to the sampler alone, just before the instant.
    Unicast,
}

/// Outcome of one fix distribution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Delivery {
    /// Whether the head holds the fix (it sampled, or the report reached it).
    pub head_has_fix: bool,
    /// Members other than the head that received the broadcast.
    pub receivers: Vec<NodeId>,
    /// Members whose missed counter was incremented.
    pub missed: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    HeadElected,
    Join,
    Leave,
    HeadLost,
    Merge,
    Death,
    Sample,
    Miss,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::HeadElected => "head_elected",
            EventKind::Join => "join",
            EventKind::Leave => "leave",
            EventKind::HeadLost => "head_lost",
            EventKind::Merge => "merge",
            EventKind::Death => "death",
            EventKind::Sample => "sample",
            EventKind::Miss => "miss",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub node: NodeId,
    pub cluster_head: NodeId,
    pub detail: String,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.t,
            self.kind.name(),
            self.node,
            self.cluster_head,
            self.detail
        )
    }
}

pub fn write_events<W: Write>(events: &[Event], mut out: W) -> Result<()> {
    writeln!(out, "t,event_kind,node,cluster_head,detail")?;
    for e in events {
        writeln!(out, "{e}")?;
    }
    Ok(())
}

/// Every cluster in a run plus message accounting.
#[derive(Debug, Clone)]
pub struct Network {
    params: ProtocolParams,
    clusters: BTreeMap<NodeId, ClusterState>,
    head_of: Vec<Option<NodeId>>,
    sent: [u64; 6],
    received: [u64; 6],
    log: Option<Vec<Event>>,
}

impl Network {
    pub fn new(n_nodes: usize, params: ProtocolParams) -> Self {
        Self {
            params,
            clusters: BTreeMap::new(),
            head_of: vec![None; n_nodes],
            sent: [0; 6],
            received: [0; 6],
            log: None,
        }
    }

    pub fn with_event_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn events(&self) -> &[Event] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn head_of(&self, node: NodeId) -> Option<NodeId> {
        self.head_of[node]
    }

    pub fn cluster(&self, head: NodeId) -> Option<&ClusterState> {
        self.clusters.get(&head)
    }

    pub fn clusters(&self) -> impl Iterator<Item = &ClusterState> {
        self.clusters.values()
    }

    pub fn heads(&self) -> Vec<NodeId> {
        self.clusters.keys().copied().collect()
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    /// Messages of `kind` transmitted so far.
    pub fn sent(&self, kind: MessageKind) -> u64 {
        self.sent[kind.index()]
    }

    /// Receptions of `kind` charged so far.
    pub fn received(&self, kind: MessageKind) -> u64 {
        self.received[kind.index()]
    }

    pub fn total_sent(&self) -> u64 {
        self.sent.iter().sum()
    }

    pub fn total_received(&self) -> u64 {
        self.received.iter().sum()
    }

    fn log(&mut self, t: f64, kind: EventKind, node: NodeId, cluster_head: NodeId, detail: impl FnOnce() -> String) {
        if let Some(log) = self.log.as_mut() {
            log.push(Event {
                t,
                kind,
                node,
                cluster_head,
                detail: detail(),
            });
        }
    }

    /// Transmits `msg` to `to`. Returns the addressees that received it.
    ///
    /// A dead sender, or an empty addressee list, transmits nothing. Addressees that are dead or out of
    /// range are not charged.
    pub fn send(&mut self, medium: &mut Medium<'_>, msg: &ProtocolMessage, to: &[NodeId]) -> Vec<NodeId> {
        if to.is_empty() || !medium.alive(msg.sender) {
            return Vec::new();
        }
        medium.ledgers[msg.sender].charge(Category::Tx, medium.msg_cost);
        self.sent[msg.kind.index()] += 1;
        let mut got = Vec::with_capacity(to.len());
        for &r in to {
            if r != msg.sender && medium.alive(r) && medium.in_range(msg.sender, r) {
                medium.ledgers[r].charge(Category::Rx, medium.msg_cost);
                self.received[msg.kind.index()] += 1;
                got.push(r);
            }
        }
        got
    }

    fn join(&mut self, t: f64, node: NodeId, head: NodeId, medium: &mut Medium<'_>) {
        self.send(medium, &ProtocolMessage::new(MessageKind::Join, node), &[head]);
        if let Some(c) = self.clusters.get_mut(&head) {
            c.add(node);
        }
        self.head_of[node] = Some(head);
        self.log(t, EventKind::Join, node, head, String::new);
    }

    /// Elects heads among `candidates` and attaches every other candidate to
    /// its nearest head. Candidates must not belong to any cluster.
    pub fn form_clusters(&mut self, t: f64, candidates: &[NodeId], medium: &mut Medium<'_>, rng: &mut SimRng) {
        let live: Vec<NodeId> = candidates.iter().copied().filter(|&c| medium.alive(c)).collect();
        if live.is_empty() {
            return;
        }
        let timers = draw_timers(live.len(), &self.params, rng);
        let heads = elect_heads(&live, &timers, medium.positions, self.params.radius);
        for &h in &heads {
            let listeners: Vec<NodeId> = live.iter().copied().filter(|&c| c != h).collect();
            self.send(medium, &ProtocolMessage::new(MessageKind::HeadClaim, h), &listeners);
            self.clusters.insert(h, ClusterState::new(h));
            self.head_of[h] = Some(h);
            self.log(t, EventKind::HeadElected, h, h, String::new);
        }
        for &c in &live {
            if self.head_of[c].is_some() {
                continue;
            }
            // The race guarantees some head is in range.
            let h = nearest_head(c, heads.iter().copied(), medium.positions, self.params.radius)
                .expect("every non-head heard a claim");
            self.join(t, c, h, medium);
        }
    }

    /// Next sampler for the cluster headed by `head`, rebuilding and
    /// announcing the schedule as needed. `None` when every member is dead.
    pub fn next_sampler(
        &mut self,
        t: f64,
        head: NodeId,
        announce: Announce,
        medium: &mut Medium<'_>,
        rng: &mut SimRng,
    ) -> Option<NodeId> {
        let params = self.params.clone();
        loop {
            let cluster = self.clusters.get_mut(&head)?;
            while let Some(s) = cluster.schedule.pop_front() {
                if cluster.members.contains(&s) && medium.alive(s) {
                    if announce == Announce::Unicast && s != head {
                        let msg = ProtocolMessage::new(MessageKind::Schedule, head);
                        self.send(medium, &msg, &[s]);
                    }
                    self.log(t, EventKind::Sample, s, head, String::new);
                    return Some(s);
                }
            }
            let schedule = build_schedule(
                &cluster.members,
                medium.ledgers,
                params.schedule_horizon,
                params.weight_exponent,
                rng,
            );
            if schedule.is_empty() {
                return None;
            }
            cluster.schedule = schedule.iter().copied().collect();
            if announce == Announce::Broadcast {
                let to: Vec<NodeId> = cluster.members.iter().copied().filter(|&m| m != head).collect();
                let msg = ProtocolMessage {
                    kind: MessageKind::Schedule,
                    sender: head,
                    payload: Payload::Schedule(schedule),
                };
                self.send(medium, &msg, &to);
            }
        }
    }

    /// Every live non-head member asks its head for a fix.
    pub fn request_fixes(&mut self, head: NodeId, medium: &mut Medium<'_>) {
        let Some(cluster) = self.clusters.get(&head) else {
            return;
        };
        let members: Vec<NodeId> = cluster.members.iter().copied().filter(|&m| m != head).collect();
        for m in members {
            self.send(medium, &ProtocolMessage::new(MessageKind::FixRequest, m), &[head]);
        }
    }

    fn record_miss(&mut self, t: f64, head: NodeId, node: NodeId) {
        let cap = self.params.max_missed;
        if let Some(c) = self.clusters.get_mut(&head) {
            let m = c.missed.entry(node).or_insert(0);
            *m = (*m + 1).min(cap);
            let count = *m;
            self.log(t, EventKind::Miss, node, head, || count.to_string());
        }
    }

    /// Sampler reports `fix` to the head, which broadcasts it to the cluster.
    pub fn distribute_fix(&mut self, t: f64, head: NodeId, fix: &GpsFix, medium: &mut Medium<'_>) -> Delivery {
        let Some(cluster) = self.clusters.get(&head) else {
            return Delivery::default();
        };
        let others: Vec<NodeId> = cluster
            .members
            .iter()
            .copied()
            .filter(|&m| m != head && medium.alive(m))
            .collect();
        let sampler = fix.sampler_id;
        let mut delivery = Delivery::default();

        let head_has_fix = if !medium.alive(head) {
            false
        } else if sampler == head {
            true
        } else {
            let msg = ProtocolMessage {
                kind: MessageKind::FixReport,
                sender: sampler,
                payload: Payload::Fix(*fix),
            };
            !self.send(medium, &msg, &[head]).is_empty()
        };
        delivery.head_has_fix = head_has_fix;

        if head_has_fix {
            let msg = ProtocolMessage {
                kind: MessageKind::FixBroadcast,
                sender: head,
                payload: Payload::Fix(*fix),
            };
            let got = self.send(medium, &msg, &others);
            for &m in &others {
                if got.contains(&m) {
                    if let Some(c) = self.clusters.get_mut(&head) {
                        c.missed.insert(m, 0);
                    }
                } else {
                    self.record_miss(t, head, m);
                    delivery.missed.push(m);
                }
            }
            delivery.receivers = got;
        } else {
            for &m in &others {
                self.record_miss(t, head, m);
                delivery.missed.push(m);
            }
        }
        delivery
    }

    /// Drops dead nodes, re-elects where heads died, moves members that
    /// missed too many updates and folds lone heads into nearby clusters.
    pub fn tick_membership(&mut self, t: f64, medium: &mut Medium<'_>, rng: &mut SimRng) {
        // Deaths.
        for head in self.heads() {
            let dead: Vec<NodeId> = self.clusters[&head]
                .members
                .iter()
                .copied()
                .filter(|&m| !medium.alive(m))
                .collect();
            if dead.is_empty() {
                continue;
            }
            for &d in &dead {
                self.log(t, EventKind::Death, d, head, String::new);
                self.head_of[d] = None;
            }
            if dead.contains(&head) {
                let survivors: Vec<NodeId> = self.clusters[&head]
                    .members
                    .iter()
                    .copied()
                    .filter(|&m| medium.alive(m))
                    .collect();
                self.clusters.remove(&head);
                for &s in &survivors {
                    self.head_of[s] = None;
                    self.log(t, EventKind::HeadLost, s, head, String::new);
                }
                self.form_clusters(t, &survivors, medium, rng);
            } else if let Some(c) = self.clusters.get_mut(&head) {
                for &d in &dead {
                    c.remove(d);
                }
            }
        }

        // Departures after too many consecutive misses.
        let mut leaving: Vec<(NodeId, NodeId)> = Vec::new();
        for (head, c) in &self.clusters {
            for (&m, &count) in &c.missed {
                if count >= self.params.max_missed && m != *head {
                    leaving.push((m, *head));
                }
            }
        }
        leaving.sort_unstable();
        let mut homeless = Vec::new();
        for &(m, old) in &leaving {
            if let Some(c) = self.clusters.get_mut(&old) {
                c.remove(m);
            }
            self.head_of[m] = None;
            self.log(t, EventKind::Leave, m, old, String::new);
        }
        for &(m, old) in &leaving {
            let heads = self.heads().into_iter().filter(|&h| h != old);
            match nearest_head(m, heads, medium.positions, self.params.radius) {
                Some(h) => self.join(t, m, h, medium),
                None => homeless.push(m),
            }
        }
        if !homeless.is_empty() {
            self.form_clusters(t, &homeless, medium, rng);
        }

        // Stray live nodes (none expected) start their own election.
        let stray: Vec<NodeId> = (0..self.head_of.len())
            .filter(|&i| self.head_of[i].is_none() && medium.alive(i))
            .collect();
        if !stray.is_empty() {
            self.form_clusters(t, &stray, medium, rng);
        }

        if self.params.merge_singletons {
            self.merge_singletons(t, medium);
        }
    }

    fn merge_singletons(&mut self, t: f64, medium: &mut Medium<'_>) {
        for head in self.heads() {
            if self.clusters.get(&head).is_none_or(|c| c.size() != 1) {
                continue;
            }
            let target = self
                .clusters
                .iter()
                .filter(|(&h, _)| h != head && medium.in_range(head, h) && medium.alive(h))
                .max_by(|a, b| a.1.size().cmp(&b.1.size()).then(b.0.cmp(a.0)))
                .map(|(&h, _)| h);
            if let Some(h) = target {
                self.clusters.remove(&head);
                self.log(t, EventKind::Merge, head, h, String::new);
                self.join(t, head, h, medium);
            }
        }
    }

    /// Every live node is in exactly one cluster whose head is recorded for it.
    pub fn is_partition(&self, ledgers: &[EnergyLedger]) -> bool {
        let mut seen = vec![0usize; self.head_of.len()];
        for (head, c) in &self.clusters {
            if !c.members.contains(head) {
                return false;
            }
            for &m in &c.members {
                seen[m] += 1;
                if self.head_of[m] != Some(*head) {
                    return false;
                }
            }
        }
        (0..seen.len()).all(|i| if ledgers[i].alive() { seen[i] == 1 } else { seen[i] <= 1 })
    }
}
