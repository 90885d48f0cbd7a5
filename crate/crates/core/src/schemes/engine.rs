use crate::energy::{accmag_cost_per_second, gps_fix_cost, radio_msg_cost, Category, EnergyLedger};
use crate::estimation::{
    build_q, build_r, imu_velocity_update, interpolate_track, kf_predict, kf_update, HeldPosition, KfModel, KfState,
    ReceiverContext,
};
use crate::movement::GroundTruthTrace;
use crate::protocol::{Announce, Medium, MessageKind, Network, ProtocolMessage};
use crate::rng::{stream, SimRng, Stream};
use crate::sensors::{sample_gps, sample_world_accel, GpsFix};
use crate::{NodeId, Result, Vec3};

use super::score::ErrorStats;
use super::uncertainty::{cluster_uncertainty, UncertaintyTracker};
use super::{CkfScoring, NodeResult, ProcessNoise, RunOptions, RunResult, SchemeConfig, SchemeKind, SimParams};

/// Immutable inputs of a run plus derived constants.
struct Ctx<'a> {
    trace: &'a GroundTruthTrace,
    scheme: SchemeConfig,
    params: &'a SimParams,
    opts: RunOptions,
    dt: f64,
    gps_cost: f64,
    msg_cost: f64,
    accmag_cost: f64,
    model: KfModel,
}

struct NodeState {
    fixes: u64,
    tracker: UncertaintyTracker,
    held: HeldPosition,
    /// Adopted `(t, position)` pairs for interpolation scoring.
    samples: Vec<(f64, Vec3)>,
    kf: Option<KfState>,
    sacc: f64,
    /// Prediction steps since the control input was last taken from a fix.
    held_steps: u32,
    death_s: Option<f64>,
    errors: ErrorStats,
    track: Vec<Vec3>,
}

impl NodeState {
    fn new() -> Self {
        Self {
            fixes: 0,
            tracker: UncertaintyTracker::new(0.0, 0.0, 0.0),
            held: HeldPosition::new(Vec3::zeros(), f64::NEG_INFINITY),
            samples: Vec::new(),
            kf: None,
            sacc: 0.0,
            held_steps: 0,
            death_s: None,
            errors: ErrorStats::default(),
            track: Vec::new(),
        }
    }

    fn push_sample(&mut self, t: f64, p: Vec3) {
        match self.samples.last_mut() {
            Some(last) if last.0 == t => last.1 = p,
            _ => self.samples.push((t, p)),
        }
    }

    /// Adopts a GPS fix, either taken by this node (`own`) or relayed.
    fn adopt_fix(&mut self, ctx: &Ctx<'_>, fix: &GpsFix, own: bool, bound: f64, t: f64) -> Result<()> {
        let e0 = if own { fix.pacc } else { fix.pacc + bound };
        self.tracker.reset(t, e0, fix.velocity.norm());
        self.held.adopt(fix.position, t);
        self.sacc = fix.sacc;
        self.held_steps = 0;
        if !ctx.scheme.kind.uses_kf() {
            self.push_sample(t, fix.position);
            return Ok(());
        }
        let rctx = ReceiverContext {
            is_sampler: own,
            cluster_radius: ctx.params.protocol.radius,
            staleness: t - fix.timestamp,
            kappa: ctx.params.estimation.kappa,
        };
        let r = build_r(fix, &rctx);
        let next = match &self.kf {
            None => KfState::from_fix(fix, r),
            Some(kf) => {
                let mut post = kf_update(kf, fix.position, &ctx.model, &r)?;
                post.u = fix.velocity;
                post
            }
        };
        if ctx.params.estimation.ckf_scoring == CkfScoring::Interpolated {
            self.push_sample(t, next.x);
        }
        self.kf = Some(next);
        Ok(())
    }

    /// Adopts a neighbour's position estimate believed good to `e0` metres.
    fn adopt_estimate(&mut self, position: Vec3, e0: f64, v_bar: f64, t: f64) {
        self.tracker.reset(t, e0, v_bar);
        self.held.adopt(position, t);
        self.push_sample(t, position);
    }
}

pub(super) struct Engine<'a> {
    ctx: Ctx<'a>,
    seed: u64,
    nodes: Vec<NodeState>,
    ledgers: Vec<EnergyLedger>,
    positions: Vec<Vec3>,
    net: Network,
    gps_rng: SimRng,
    imu_rng: SimRng,
    proto_rng: SimRng,
    cluster_ticks: f64,
}

impl<'a> Engine<'a> {
    pub(super) fn new(
        trace: &'a GroundTruthTrace,
        scheme: SchemeConfig,
        params: &'a SimParams,
        seed: u64,
        opts: RunOptions,
    ) -> Self {
        let n = trace.n_nodes();
        let dt = trace.step_s();
        let mut net = Network::new(n, params.protocol.clone());
        if opts.record_events {
            net = net.with_event_log();
        }
        Self {
            ctx: Ctx {
                trace,
                scheme,
                params,
                opts,
                dt,
                gps_cost: gps_fix_cost(&params.energy),
                msg_cost: radio_msg_cost(&params.energy),
                accmag_cost: accmag_cost_per_second(&params.energy),
                model: KfModel { dt },
            },
            seed,
            nodes: (0..n).map(|_| NodeState::new()).collect(),
            ledgers: (0..n).map(|_| EnergyLedger::new(params.energy.battery_j)).collect(),
            positions: vec![Vec3::zeros(); n],
            net,
            gps_rng: stream(seed, Stream::Gps),
            imu_rng: stream(seed, Stream::Imu),
            proto_rng: stream(seed, Stream::Protocol),
            cluster_ticks: 0.0,
        }
    }

    fn n(&self) -> usize {
        self.nodes.len()
    }

    fn interval_ticks(&self) -> usize {
        let iv = self.ctx.scheme.interval_s.unwrap_or(1.0);
        ((iv / self.ctx.dt).round() as usize).max(1)
    }

    fn limit(&self) -> f64 {
        self.ctx.scheme.limit_m.unwrap_or(f64::INFINITY)
    }

    fn medium(&mut self) -> (Medium<'_>, &mut Network, &mut SimRng) {
        (
            Medium {
                positions: &self.positions,
                ledgers: &mut self.ledgers,
                msg_cost: self.ctx.msg_cost,
                radius: self.ctx.params.protocol.radius,
            },
            &mut self.net,
            &mut self.proto_rng,
        )
    }

    pub(super) fn run(mut self) -> Result<RunResult> {
        let len = self.ctx.trace.len();
        let kind = self.ctx.scheme.kind;
        for k in 0..len {
            let t = k as f64 * self.ctx.dt;
            for (i, p) in self.positions.iter_mut().enumerate() {
                *p = self.ctx.trace.at(k, i).position;
            }
            if self.ledgers.iter().any(|l| l.alive()) {
                self.upkeep();
                if k > 0 {
                    self.propagate(k)?;
                }
                if k == 0 {
                    self.initial_lock(t)?;
                } else {
                    self.sample(k, t)?;
                }
                self.note_deaths(t);
            }
            if kind.uses_clusters() {
                self.cluster_ticks += self.net.cluster_count() as f64;
            }
            self.record(k);
        }
        self.finish()
    }

    fn upkeep(&mut self) {
        let dt = self.ctx.dt;
        let imu = self.ctx.scheme.kind.uses_imu();
        for l in self.ledgers.iter_mut().filter(|l| l.alive()) {
            l.misc_charge(dt, &self.ctx.params.energy);
            if imu && l.alive() {
                l.charge(Category::AccMag, self.ctx.accmag_cost * dt);
            }
        }
    }

    fn note_deaths(&mut self, t: f64) {
        for (node, l) in self.nodes.iter_mut().zip(&self.ledgers) {
            if !l.alive() && node.death_s.is_none() {
                node.death_s = Some(t);
            }
        }
    }

    /// Kalman prediction from `k - 1` to `k`, then the inertial velocity update.
    fn propagate(&mut self, k: usize) -> Result<()> {
        if !self.ctx.scheme.kind.uses_kf() {
            return Ok(());
        }
        let imu = self.ctx.scheme.kind.uses_imu();
        let dt = self.ctx.dt;
        for i in 0..self.n() {
            if !self.ledgers[i].alive() {
                continue;
            }
            let node = &mut self.nodes[i];
            let Some(kf) = node.kf.as_ref() else { continue };
            let std_v = self
                .ctx
                .params
                .estimation
                .std_v
                .map(Vec3::from)
                .unwrap_or(Vec3::repeat(node.sacc));
            node.held_steps += 1;
            let mut q = build_q(std_v, dt);
            if self.ctx.params.estimation.process_noise == ProcessNoise::Coherent {
                q *= (2 * node.held_steps - 1) as f64;
            }
            let mut next = kf_predict(kf, kf.u, &self.ctx.model, &q)?;
            if imu {
                let a = sample_world_accel(self.ctx.trace.accel(k - 1, i), &self.ctx.params.imu, &mut self.imu_rng);
                next.u = imu_velocity_update(next.u, a, dt);
            }
            node.kf = Some(next);
        }
        Ok(())
    }

    /// Charges a GPS lock; the fix only exists if the node survives the lock.
    fn try_fix(&mut self, i: NodeId, k: usize, t: f64) -> Option<GpsFix> {
        let ledger = &mut self.ledgers[i];
        if !ledger.alive() {
            return None;
        }
        let affordable = ledger.can_afford(self.ctx.gps_cost);
        ledger.charge(Category::Gps, self.ctx.gps_cost);
        if !affordable {
            return None;
        }
        self.nodes[i].fixes += 1;
        Some(sample_gps(
            self.ctx.trace.at(k, i),
            t,
            i,
            &self.ctx.params.gps,
            &mut self.gps_rng,
        ))
    }

    fn own_fix(&mut self, i: NodeId, k: usize, t: f64) -> Result<Option<GpsFix>> {
        match self.try_fix(i, k, t) {
            Some(fix) => {
                self.nodes[i].adopt_fix(&self.ctx, &fix, true, 0.0, t)?;
                Ok(Some(fix))
            }
            None => Ok(None),
        }
    }

    fn initial_lock(&mut self, t: f64) -> Result<()> {
        for i in 0..self.n() {
            self.own_fix(i, 0, t)?;
        }
        if self.ctx.scheme.kind.uses_clusters() {
            let ids: Vec<NodeId> = (0..self.n()).collect();
            let (mut medium, net, rng) = self.medium();
            net.form_clusters(t, &ids, &mut medium, rng);
        }
        Ok(())
    }

    fn sample(&mut self, k: usize, t: f64) -> Result<()> {
        let kind = self.ctx.scheme.kind;
        let periodic_instant = !kind.is_dynamic() && k.is_multiple_of(self.interval_ticks());
        match kind {
            SchemeKind::IndividualPeriodic => {
                if periodic_instant {
                    for i in 0..self.n() {
                        self.own_fix(i, k, t)?;
                    }
                }
            }
            SchemeKind::DynamicIndividual => {
                let limit = self.limit();
                for i in 0..self.n() {
                    if self.ledgers[i].alive() && self.refresh(i, t) >= limit {
                        self.own_fix(i, k, t)?;
                    }
                }
            }
            SchemeKind::DynamicBaselineVm => self.vm_tick(k, t)?,
            _ => {
                {
                    let (mut medium, net, rng) = self.medium();
                    net.tick_membership(t, &mut medium, rng);
                }
                let announce = match kind {
                    SchemeKind::ClusterStandard => Announce::Broadcast,
                    _ => Announce::Unicast,
                };
                for head in self.net.heads() {
                    if kind.is_dynamic() {
                        if !self.cluster_triggered(head, t) {
                            continue;
                        }
                    } else if !periodic_instant {
                        continue;
                    }
                    self.cluster_sample(head, k, t, announce)?;
                }
            }
        }
        Ok(())
    }

    /// Updates and returns node `i`'s current uncertainty.
    fn refresh(&mut self, i: NodeId, t: f64) -> f64 {
        let tr = &mut self.nodes[i].tracker;
        tr.u_now = tr.at(t);
        tr.u_now
    }

    fn cluster_triggered(&mut self, head: NodeId, t: f64) -> bool {
        let Some(c) = self.net.cluster(head) else { return false };
        let members: Vec<NodeId> = c.members.iter().copied().filter(|&m| self.ledgers[m].alive()).collect();
        let us: Vec<f64> = members.iter().map(|&m| self.refresh(m, t)).collect();
        !us.is_empty() && cluster_uncertainty(&us) >= self.limit()
    }

    fn cluster_sample(&mut self, head: NodeId, k: usize, t: f64, announce: Announce) -> Result<()> {
        let periodic_ckf = matches!(
            self.ctx.scheme.kind,
            SchemeKind::ClusterCkf | SchemeKind::ClusterCkfAccMag
        );
        let sampler = {
            let (mut medium, net, rng) = self.medium();
            if periodic_ckf {
                net.request_fixes(head, &mut medium);
            }
            net.next_sampler(t, head, announce, &mut medium, rng)
        };
        let Some(s) = sampler else { return Ok(()) };
        let Some(fix) = self.own_fix(s, k, t)? else {
            return Ok(());
        };
        let delivery = {
            let (mut medium, net, _) = self.medium();
            net.distribute_fix(t, head, &fix, &mut medium)
        };
        let bound = self.ctx.params.protocol.radius;
        if delivery.head_has_fix && head != s {
            self.nodes[head].adopt_fix(&self.ctx, &fix, false, bound, t)?;
        }
        for r in delivery.receivers {
            if r != s {
                self.nodes[r].adopt_fix(&self.ctx, &fix, false, bound, t)?;
            }
        }
        Ok(())
    }

    /// Neighbour-request baseline: ask first, sample and broadcast if nobody can help.
    fn vm_tick(&mut self, k: usize, t: f64) -> Result<()> {
        let limit = self.limit();
        let vm = self.ctx.params.vm.clone();
        let n = self.n();
        for i in 0..n {
            if !self.ledgers[i].alive() || self.refresh(i, t) < vm.trigger_fraction * limit {
                continue;
            }
            let others: Vec<NodeId> = (0..n).filter(|&j| j != i).collect();
            let heard = {
                let (mut medium, net, _) = self.medium();
                net.send(&mut medium, &ProtocolMessage::new(MessageKind::FixRequest, i), &others)
            };
            let mut best: Option<(f64, NodeId)> = None;
            for &j in &heard {
                let uj = self.refresh(j, t);
                if uj + vm.distance_bound > limit {
                    continue;
                }
                let got = {
                    let (mut medium, net, _) = self.medium();
                    net.send(&mut medium, &ProtocolMessage::new(MessageKind::FixReport, j), &[i])
                };
                if !got.is_empty() && best.is_none_or(|(bu, _)| uj < bu) {
                    best = Some((uj, j));
                }
            }
            if let Some((uj, j)) = best {
                let (pos, v_bar) = (self.nodes[j].held.position, self.nodes[j].tracker.v_bar);
                self.nodes[i].adopt_estimate(pos, uj + vm.distance_bound, v_bar, t);
                continue;
            }
            let Some(fix) = self.own_fix(i, k, t)? else { continue };
            let got = {
                let (mut medium, net, _) = self.medium();
                net.send(
                    &mut medium,
                    &ProtocolMessage {
                        kind: MessageKind::FixBroadcast,
                        sender: i,
                        payload: crate::protocol::Payload::Fix(fix),
                    },
                    &others,
                )
            };
            for j in got {
                if fix.pacc + vm.distance_bound < self.refresh(j, t) {
                    self.nodes[j].adopt_fix(&self.ctx, &fix, false, vm.distance_bound, t)?;
                }
            }
        }
        Ok(())
    }

    fn record(&mut self, k: usize) {
        if !self.ctx.scheme.kind.uses_kf() || self.ctx.params.estimation.ckf_scoring == CkfScoring::Interpolated {
            return;
        }
        for (i, node) in self.nodes.iter_mut().enumerate() {
            let x = node.kf.as_ref().map(|kf| kf.x).unwrap_or(node.held.position);
            node.errors.push((x - self.ctx.trace.at(k, i).position).norm());
            if self.ctx.opts.keep_tracks {
                node.track.push(x);
            }
        }
    }

    fn finish(mut self) -> Result<RunResult> {
        let len = self.ctx.trace.len();
        let dt = self.ctx.dt;
        let kind = self.ctx.scheme.kind;
        let interpolated = !kind.uses_kf() || self.ctx.params.estimation.ckf_scoring == CkfScoring::Interpolated;
        if interpolated {
            for (i, node) in self.nodes.iter_mut().enumerate() {
                let track = interpolate_track(&node.samples, len, dt);
                for (k, p) in track.iter().enumerate() {
                    node.errors.push((p - self.ctx.trace.at(k, i).position).norm());
                }
                if self.ctx.opts.keep_tracks {
                    node.track = track;
                }
            }
        }

        let mut all = ErrorStats::default();
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (node, ledger) in self.nodes.iter().zip(&self.ledgers) {
            all.merge(&node.errors);
            let mut energy_j = [0.0; 5];
            for c in Category::ALL {
                energy_j[c as usize] = ledger.consumed(c);
            }
            nodes.push(NodeResult {
                mean_error_m: node.errors.mean(),
                energy_j,
                fixes: node.fixes,
                alive_s: node.death_s.unwrap_or(len as f64 * dt),
                death_s: node.death_s,
                conserved: ledger.is_conserved(),
            });
        }
        let n = nodes.len() as f64;
        let total_energy_j: f64 = nodes.iter().map(|r| r.total_energy()).sum();
        let mean_clusters = if kind.uses_clusters() {
            self.cluster_ticks / len as f64
        } else {
            0.0
        };
        let tracks = self
            .ctx
            .opts
            .keep_tracks
            .then(|| self.nodes.iter_mut().map(|nd| std::mem::take(&mut nd.track)).collect());
        Ok(RunResult {
            scheme: self.ctx.scheme,
            seed: self.seed,
            mean_error_m: all.mean(),
            std_error_m: all.std(),
            total_energy_j,
            mean_energy_j: total_energy_j / n,
            mean_fixes: nodes.iter().map(|r| r.fixes as f64).sum::<f64>() / n,
            mean_clusters,
            messages_sent: self.net.total_sent(),
            messages_received: self.net.total_received(),
            nodes,
            tracks,
            events: self.net.events().to_vec(),
        })
    }
}
