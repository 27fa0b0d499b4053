//! Discrete-event simulation of the daisy-chain base station.
//!
//! The array is split into `C` clusters of `B` antennas. Each cluster holds
//! its rows of `H` and its own observations; the only things that cross a
//! link are estimate tokens and, during RLS preprocessing, the `Γ` matrix.
//! Clusters process resource elements in order, so while cluster `c` works on
//! RE `r`, cluster `c − 1` can already work on RE `r + 1`.
//!
//! Time is counted in abstract ticks. A cluster spends `re_cost` ticks per
//! resource element and `prep_cost` ticks on RLS preprocessing, which starts
//! as soon as `Γ` arrives from the previous cluster.

use crate::detectors::{ChainEstimate, Detector, EstimateVector, Gamma, RlsCoeff};
use crate::signal_model::{ChannelMatrix, ReceivedVector};
use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;

/// Timeline CSV schema version.
pub const TIMELINE_SCHEMA_VERSION: u32 = 1;

/// Array and cluster geometry, `M = C · B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub m_antennas: usize,
    pub k_users: usize,
    pub c_clusters: usize,
    pub b_per_cluster: usize,
}

impl TopologyConfig {
    pub fn new(m_antennas: usize, k_users: usize, c_clusters: usize) -> Result<Self> {
        if c_clusters == 0 || m_antennas == 0 || !m_antennas.is_multiple_of(c_clusters) {
            return Err(Error::Partition {
                m: m_antennas,
                c: c_clusters,
            });
        }
        if k_users == 0 {
            return Err(Error::Dimension("K must be >= 1".into()));
        }
        Ok(Self {
            m_antennas,
            k_users,
            c_clusters,
            b_per_cluster: m_antennas / c_clusters,
        })
    }
}

/// One cluster of antennas with its local CSI.
#[derive(Debug, Clone)]
pub struct ClusterNode {
    id: usize,
    first_antenna: usize,
    k: usize,
    local_csi: Vec<C64>,
    precomp: Option<Vec<RlsCoeff>>,
}

impl ClusterNode {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn b(&self) -> usize {
        self.local_csi.len() / self.k
    }

    /// Global index of this cluster's first antenna.
    pub fn first_antenna(&self) -> usize {
        self.first_antenna
    }

    pub fn precomp(&self) -> Option<&[RlsCoeff]> {
        self.precomp.as_deref()
    }

    fn rows(&self) -> impl Iterator<Item = &[C64]> {
        self.local_csi.chunks_exact(self.k)
    }

    fn prepare(&mut self, gamma: &mut Gamma) -> Result<()> {
        let coeffs = self
            .local_csi
            .chunks_exact(self.k)
            .map(|h| gamma.absorb(h))
            .collect::<Result<Vec<_>>>()?;
        self.precomp = Some(coeffs);
        Ok(())
    }

    /// Largest prediction error of the incoming estimate over this cluster.
    fn incoming_error(&self, state: &ChainEstimate, y: &[C64]) -> f64 {
        self.rows()
            .zip(y)
            .map(|(h, &yn)| (yn - crate::linalg::dot_t(h, state.predictor())).norm())
            .fold(0.0, f64::max)
    }

    fn update(&self, detector: &Detector, state: &mut ChainEstimate, y: &[C64]) -> Result<()> {
        for (i, (h, &yn)) in self.rows().zip(y).enumerate() {
            let coeff = self.precomp.as_ref().map(|p| &p[i]);
            detector.absorb(state, h, yn, coeff)?;
        }
        Ok(())
    }
}

/// Clusters in link order; the last one feeds the baseband sink.
#[derive(Debug, Clone)]
pub struct DaisyChain {
    k: usize,
    nodes: Vec<ClusterNode>,
}

impl DaisyChain {
    pub fn k_users(&self) -> usize {
        self.k
    }

    pub fn m_antennas(&self) -> usize {
        self.nodes.iter().map(ClusterNode::b).sum()
    }

    pub fn clusters(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[ClusterNode] {
        &self.nodes
    }
}

/// Splits `h` row-wise over `C` clusters: cluster `c` gets rows `[cB, (c+1)B)`.
pub fn build_chain(topology: &TopologyConfig, h: &ChannelMatrix) -> Result<DaisyChain> {
    let t = TopologyConfig::new(topology.m_antennas, topology.k_users, topology.c_clusters)?;
    if t.b_per_cluster != topology.b_per_cluster {
        return Err(Error::Partition {
            m: topology.m_antennas,
            c: topology.c_clusters,
        });
    }
    if h.m_antennas() != t.m_antennas || h.k_users() != t.k_users {
        return Err(Error::Dimension(format!(
            "topology is {}x{}, channel is {}x{}",
            t.m_antennas,
            t.k_users,
            h.m_antennas(),
            h.k_users()
        )));
    }
    let k = t.k_users;
    let b = t.b_per_cluster;
    let nodes = (0..t.c_clusters)
        .map(|c| ClusterNode {
            id: c,
            first_antenna: c * b,
            k,
            local_csi: h.as_slice()[c * b * k..(c + 1) * b * k].to_vec(),
            precomp: None,
        })
        .collect();
    Ok(DaisyChain { k, nodes })
}

/// Appends the clusters of `extra` after the last cluster of `chain`.
pub fn extend_chain(chain: DaisyChain, extra: DaisyChain) -> Result<DaisyChain> {
    if extra.nodes.is_empty() {
        return Ok(chain);
    }
    if extra.k != chain.k {
        return Err(Error::UserCountMismatch {
            expected: chain.k,
            got: extra.k,
        });
    }
    let mut next_antenna = chain.m_antennas();
    let mut nodes = chain.nodes;
    for mut node in extra.nodes {
        node.id = nodes.len();
        node.first_antenna = next_antenna;
        node.precomp = None;
        next_antenna += node.b();
        nodes.push(node);
    }
    Ok(DaisyChain { k: chain.k, nodes })
}

/// What a cluster does when it judges its incoming estimate good enough.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerSavePolicy {
    /// Forward the incoming estimate unchanged.
    Freeze,
    /// Send the estimate straight to the sink and stop the chain for this RE.
    EarlyExit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSave {
    pub policy: PowerSavePolicy,
    /// A cluster skips when `max |ε_n|` over its antennas is below this.
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotConfig {
    pub re_cost: u64,
    pub prep_cost: u64,
    pub power_save: Option<PowerSave>,
    pub capture_messages: bool,
}

impl Default for SlotConfig {
    fn default() -> Self {
        Self {
            re_cost: 1,
            prep_cost: 0,
            power_save: None,
            capture_messages: false,
        }
    }
}

/// Enables power save on `config`.
pub fn apply_power_save(
    config: SlotConfig,
    policy: PowerSavePolicy,
    threshold: f64,
) -> Result<SlotConfig> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "power-save threshold must be >= 0, got {threshold}"
        )));
    }
    Ok(SlotConfig {
        power_save: Some(PowerSave { policy, threshold }),
        ..config
    })
}

/// Estimate token passed between clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMessage {
    pub estimate: EstimateVector,
    /// ASGD's raw iterate `x̂_n`.
    pub raw_iterate: Option<Vec<C64>>,
    pub re_id: usize,
    pub terminated: bool,
}

impl TokenMessage {
    fn from_state(state: &ChainEstimate, re_id: usize, terminated: bool) -> Self {
        Self {
            estimate: state.estimate().clone(),
            raw_iterate: state.raw_iterate().map(<[C64]>::to_vec),
            re_id,
            terminated,
        }
    }

    /// Complex words carried: `K`, or `2K` with the ASGD raw iterate.
    pub fn payload_words(&self) -> usize {
        self.estimate.values.len() + self.raw_iterate.as_ref().map_or(0, Vec::len)
    }

    pub fn payload(&self) -> impl Iterator<Item = &C64> {
        self.estimate
            .values
            .iter()
            .chain(self.raw_iterate.iter().flatten())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Cluster(usize),
    Sink,
}

/// Everything that crosses a link during a slot.
#[derive(Debug, Clone, PartialEq)]
pub enum LinkMessage {
    Gamma {
        from: usize,
        to: usize,
        gamma: Gamma,
    },
    Token {
        from: usize,
        to: Endpoint,
        token: TokenMessage,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TimelineEntry {
    pub cluster_id: usize,
    pub re_id: usize,
    pub start_tick: u64,
    pub end_tick: u64,
    pub skipped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrepEntry {
    pub cluster_id: usize,
    pub start_tick: u64,
    pub end_tick: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineReport {
    pub clusters: usize,
    /// Sorted by cluster, then RE.
    pub entries: Vec<TimelineEntry>,
    pub prep: Vec<PrepEntry>,
    /// Ticks between the first and the last cluster starting their first RE;
    /// `None` if the last cluster never ran (early exit).
    pub pipeline_delay: Option<u64>,
    pub total_ticks: u64,
}

impl TimelineReport {
    fn entry(&self, cluster: usize, re: usize) -> Option<&TimelineEntry> {
        self.entries
            .iter()
            .find(|e| e.cluster_id == cluster && e.re_id == re)
    }

    fn first_start(&self, cluster: usize) -> Option<u64> {
        self.entries
            .iter()
            .filter(|e| e.cluster_id == cluster)
            .map(|e| e.start_tick)
            .min()
    }

    /// Checks in-order processing per cluster and that no cluster starts an
    /// RE before its predecessor finished it.
    pub fn check_causality(&self) -> std::result::Result<(), String> {
        for c in 0..self.clusters {
            let mine: Vec<_> = self.entries.iter().filter(|e| e.cluster_id == c).collect();
            for w in mine.windows(2) {
                if w[1].re_id <= w[0].re_id || w[1].start_tick < w[0].end_tick {
                    return Err(format!(
                        "cluster {c} processed RE {} out of order",
                        w[1].re_id
                    ));
                }
            }
            if c == 0 {
                continue;
            }
            for e in mine {
                match self.entry(c - 1, e.re_id) {
                    Some(prev) if prev.end_tick <= e.start_tick => {}
                    Some(_) => {
                        return Err(format!(
                            "cluster {c} started RE {} before cluster {} finished it",
                            e.re_id,
                            c - 1
                        ))
                    }
                    None => return Err(format!("cluster {c} saw RE {} out of nowhere", e.re_id)),
                }
            }
        }
        Ok(())
    }

    /// Columns: `cluster_id,re_id,start_tick,end_tick,skipped_flag,schema_version`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "cluster_id",
            "re_id",
            "start_tick",
            "end_tick",
            "skipped_flag",
            "schema_version",
        ])?;
        for e in &self.entries {
            w.write_record([
                e.cluster_id.to_string(),
                e.re_id.to_string(),
                e.start_tick.to_string(),
                e.end_tick.to_string(),
                (e.skipped as u8).to_string(),
                TIMELINE_SCHEMA_VERSION.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SlotOutcome {
    /// Estimate delivered to the sink, per RE.
    pub estimates: Vec<EstimateVector>,
    pub timeline: TimelineReport,
    /// Captured link traffic (empty unless `capture_messages`).
    pub messages: Vec<LinkMessage>,
    /// Cluster-RE pairs where power save suppressed the update.
    pub skipped_cluster_steps: usize,
}

enum EventKind {
    GammaArrives(Gamma),
    TokenArrives { re: usize, state: ChainEstimate },
    Finished,
}

struct Event {
    time: u64,
    seq: u64,
    cluster: usize,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

enum Task {
    Prep(Gamma),
    Re {
        re: usize,
        state: ChainEstimate,
        terminated: bool,
    },
}

struct NodeRuntime {
    queue: VecDeque<(usize, ChainEstimate)>,
    current: Option<Task>,
    prep_ready: bool,
}

struct Scheduler<'a> {
    chain: &'a mut DaisyChain,
    detector: &'a Detector,
    batch: &'a [ReceivedVector],
    config: SlotConfig,
    heap: BinaryHeap<Reverse<Event>>,
    seq: u64,
    nodes: Vec<NodeRuntime>,
    delivered: Vec<Option<EstimateVector>>,
    entries: Vec<TimelineEntry>,
    prep: Vec<PrepEntry>,
    messages: Vec<LinkMessage>,
    skipped: usize,
}

impl Scheduler<'_> {
    fn push(&mut self, time: u64, cluster: usize, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Reverse(Event {
            time,
            seq: self.seq,
            cluster,
            kind,
        }));
    }

    fn local_obs(&self, cluster: usize, re: usize) -> &[C64] {
        let node = &self.chain.nodes[cluster];
        let start = node.first_antenna;
        &self.batch[re].samples[start..start + node.b()]
    }

    fn run(mut self) -> Result<SlotOutcome> {
        while let Some(Reverse(ev)) = self.heap.pop() {
            let c = ev.cluster;
            match ev.kind {
                EventKind::GammaArrives(gamma) => {
                    debug_assert!(self.nodes[c].current.is_none());
                    let end = ev.time + self.config.prep_cost;
                    self.prep.push(PrepEntry {
                        cluster_id: c,
                        start_tick: ev.time,
                        end_tick: end,
                    });
                    self.nodes[c].current = Some(Task::Prep(gamma));
                    self.push(end, c, EventKind::Finished);
                }
                EventKind::TokenArrives { re, state } => {
                    self.nodes[c].queue.push_back((re, state));
                    self.try_start(c, ev.time)?;
                }
                EventKind::Finished => {
                    match self.nodes[c].current.take() {
                        Some(Task::Prep(mut gamma)) => {
                            self.chain.nodes[c].prepare(&mut gamma)?;
                            self.nodes[c].prep_ready = true;
                            if c + 1 < self.chain.nodes.len() {
                                if self.config.capture_messages {
                                    self.messages.push(LinkMessage::Gamma {
                                        from: c,
                                        to: c + 1,
                                        gamma: gamma.clone(),
                                    });
                                }
                                self.push(ev.time, c + 1, EventKind::GammaArrives(gamma));
                            }
                        }
                        Some(Task::Re {
                            re,
                            state,
                            terminated,
                        }) => self.forward(c, re, state, terminated, ev.time),
                        None => unreachable!("finish without task"),
                    }
                    self.try_start(c, ev.time)?;
                }
            }
        }
        let estimates = self
            .delivered
            .into_iter()
            .map(|e| e.ok_or_else(|| Error::InvalidParameter("RE never reached the sink".into())))
            .collect::<Result<Vec<_>>>()?;
        self.entries.sort_by_key(|e| (e.cluster_id, e.re_id));
        let clusters = self.chain.nodes.len();
        let total_ticks = self
            .entries
            .iter()
            .map(|e| e.end_tick)
            .chain(self.prep.iter().map(|p| p.end_tick))
            .max()
            .unwrap_or(0);
        let mut timeline = TimelineReport {
            clusters,
            entries: self.entries,
            prep: self.prep,
            pipeline_delay: None,
            total_ticks,
        };
        timeline.pipeline_delay =
            match (timeline.first_start(0), timeline.first_start(clusters - 1)) {
                (Some(a), Some(b)) => Some(b - a),
                _ => None,
            };
        Ok(SlotOutcome {
            estimates,
            timeline,
            messages: self.messages,
            skipped_cluster_steps: self.skipped,
        })
    }

    fn try_start(&mut self, c: usize, now: u64) -> Result<()> {
        let rt = &mut self.nodes[c];
        if rt.current.is_some() || !rt.prep_ready {
            return Ok(());
        }
        let Some((re, mut state)) = rt.queue.pop_front() else {
            return Ok(());
        };
        let node = &self.chain.nodes[c];
        let y = self.local_obs(c, re);
        let mut skipped = false;
        let mut terminated = false;
        match self.config.power_save {
            // the first cluster always updates: its input is only the initial value
            Some(ps) if c > 0 && node.incoming_error(&state, y) < ps.threshold => {
                skipped = true;
                terminated = ps.policy == PowerSavePolicy::EarlyExit;
            }
            _ => node.update(self.detector, &mut state, y)?,
        }
        if skipped {
            self.skipped += 1;
        }
        let end = now + self.config.re_cost;
        self.entries.push(TimelineEntry {
            cluster_id: c,
            re_id: re,
            start_tick: now,
            end_tick: end,
            skipped,
        });
        self.nodes[c].current = Some(Task::Re {
            re,
            state,
            terminated,
        });
        self.push(end, c, EventKind::Finished);
        Ok(())
    }

    fn forward(&mut self, c: usize, re: usize, state: ChainEstimate, terminated: bool, now: u64) {
        let last = c + 1 == self.chain.nodes.len();
        let to = if terminated || last {
            Endpoint::Sink
        } else {
            Endpoint::Cluster(c + 1)
        };
        if self.config.capture_messages {
            self.messages.push(LinkMessage::Token {
                from: c,
                to,
                token: TokenMessage::from_state(&state, re, terminated),
            });
        }
        match to {
            Endpoint::Sink => self.delivered[re] = Some(state.into_estimate()),
            Endpoint::Cluster(next) => self.push(now, next, EventKind::TokenArrives { re, state }),
        }
    }
}

/// Runs one slot of `re_batch` resource elements (one coherence block)
/// through the chain.
///
/// Detection results are bit-identical to [`crate::detectors::run_chain`]
/// over the concatenated array whenever power save is off.
pub fn simulate_slot(
    chain: &mut DaisyChain,
    detector: &Detector,
    re_batch: &[ReceivedVector],
    s0: &EstimateVector,
    config: &SlotConfig,
) -> Result<SlotOutcome> {
    detector.validate()?;
    let m = chain.m_antennas();
    if chain.nodes.is_empty() {
        return Err(Error::Dimension("empty chain".into()));
    }
    if let Some(bad) = re_batch.iter().find(|y| y.samples.len() != m) {
        return Err(Error::Dimension(format!(
            "received vector has {} samples, chain has {m} antennas",
            bad.samples.len()
        )));
    }
    if s0.k() != chain.k {
        return Err(Error::UserCountMismatch {
            expected: chain.k,
            got: s0.k(),
        });
    }
    let needs_prep = detector.needs_precomp();
    for node in chain.nodes.iter_mut() {
        node.precomp = None;
    }
    let clusters = chain.nodes.len();
    let k = chain.k;
    let mut sched = Scheduler {
        chain,
        detector,
        batch: re_batch,
        config: *config,
        heap: BinaryHeap::new(),
        seq: 0,
        nodes: (0..clusters)
            .map(|_| NodeRuntime {
                queue: VecDeque::new(),
                current: None,
                prep_ready: !needs_prep,
            })
            .collect(),
        delivered: vec![None; re_batch.len()],
        entries: Vec::new(),
        prep: Vec::new(),
        messages: Vec::new(),
        skipped: 0,
    };
    if needs_prep {
        sched.push(0, 0, EventKind::GammaArrives(Gamma::identity(k)));
    }
    for re in 0..re_batch.len() {
        let state = detector.start(s0.clone())?;
        sched.push(0, 0, EventKind::TokenArrives { re, state });
    }
    sched.run()
}
