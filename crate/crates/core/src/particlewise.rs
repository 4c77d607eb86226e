//! Particle-wise (labeled) construction.
//!
//! Particle (x, i) carries a putative trajectory (Exp(1) holding times, jumps
//! drawn from p(·)) and a rate-λ sleep clock, both indexed by its inner time.
//! Inner time runs only while the particle is active. A sleep mark succeeds
//! when the particle is alone at its site; an arrival reactivates a passive
//! particle immediately.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SiteConfiguration;
use crate::lattice::{BoxRegion, InitialField, JumpKernel, Site};
use crate::rng::{exponential, Lineage, Purpose, RngStream};

/// Label (x, i): initial site and rank among the particles starting there,
/// with i ≥ 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    pub site: Site,
    pub index: u32,
}

impl Label {
    pub fn new(site: Site, index: u32) -> Self {
        Label { site, index }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParticleState {
    Active,
    Passive,
}

/// Shared randomness of all particles: trajectories and clocks are keyed by
/// the label whose randomness a particle uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleRandomness {
    pub kernel: JumpKernel,
    pub lambda: f64,
    pub seed: u64,
}

impl ParticleRandomness {
    pub fn new(kernel: JumpKernel, lambda: f64, seed: u64) -> Self {
        ParticleRandomness {
            kernel,
            lambda,
            seed,
        }
    }

    /// Putative trajectory of `source` as (inner jump time, support index).
    pub fn trajectory(&self, source: &Label) -> PutativeTrajectory<'_> {
        PutativeTrajectory {
            kernel: &self.kernel,
            rng: RngStream::new(Lineage::particle(
                self.seed,
                Purpose::Trajectory,
                &source.site,
                source.index,
            )),
            time: 0.0,
        }
    }

    /// Sleep-clock marks of `source` in inner time.
    pub fn sleep_clock(&self, source: &Label) -> SleepClock {
        SleepClock {
            rate: self.lambda,
            rng: RngStream::new(Lineage::particle(
                self.seed,
                Purpose::SleepClock,
                &source.site,
                source.index,
            )),
            time: 0.0,
        }
    }
}

/// Lazy jump sequence of a putative trajectory.
#[derive(Clone, Debug)]
pub struct PutativeTrajectory<'a> {
    kernel: &'a JumpKernel,
    rng: RngStream,
    time: f64,
}

impl Iterator for PutativeTrajectory<'_> {
    type Item = (f64, usize);

    fn next(&mut self) -> Option<(f64, usize)> {
        self.time += exponential(&mut self.rng, 1.0);
        Some((self.time, self.kernel.sample_index(&mut self.rng)))
    }
}

/// Lazy Poisson(λ) marks.
#[derive(Clone, Debug)]
pub struct SleepClock {
    rate: f64,
    rng: RngStream,
    time: f64,
}

impl Iterator for SleepClock {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        self.time += exponential(&mut self.rng, self.rate);
        Some(self.time)
    }
}

/// A particle present at time 0: its identity, where it starts, and whose
/// randomness it uses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticleInit {
    pub label: Label,
    pub start: Site,
    pub source: Label,
}

impl ParticleInit {
    /// Particle starting at its own label site with its own randomness.
    pub fn native(label: Label) -> Self {
        ParticleInit {
            start: label.site.clone(),
            source: label.clone(),
            label,
        }
    }
}

/// Source of initial counts η_0(x).
pub trait InitialCounts {
    fn count(&self, x: &Site) -> u32;
}

impl InitialCounts for InitialField {
    fn count(&self, x: &Site) -> u32 {
        InitialField::count(self, x)
    }
}

/// Finitely supported initial condition.
impl InitialCounts for BTreeMap<Site, u32> {
    fn count(&self, x: &Site) -> u32 {
        self.get(x).copied().unwrap_or(0)
    }
}

/// η_0 ∧ K.
#[derive(Clone, Debug)]
pub struct Capped<F> {
    pub field: F,
    pub cap: u32,
}

impl<F: InitialCounts> InitialCounts for Capped<F> {
    fn count(&self, x: &Site) -> u32 {
        self.field.count(x).min(self.cap)
    }
}

/// Particles (x, i), i ≤ η_0(x), for x in `sites`.
pub fn particles_on<'a>(
    field: &impl InitialCounts,
    sites: impl IntoIterator<Item = &'a Site>,
) -> Vec<ParticleInit> {
    let mut out = Vec::new();
    for x in sites {
        for i in 1..=field.count(x) {
            out.push(ParticleInit::native(Label::new(x.clone(), i)));
        }
    }
    out
}

/// Particles (x, i), i ≤ counts, for a configuration on a box.
pub fn particles_from_config(config: &SiteConfiguration) -> Vec<ParticleInit> {
    let mut out = Vec::new();
    for (k, x) in config.window().sites().enumerate() {
        for i in 1..=config.count(k) {
            out.push(ParticleInit::native(Label::new(x.clone(), i)));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabeledEventKind {
    Jump { from: Site },
    Sleep,
    Wake,
}

impl LabeledEventKind {
    fn name(&self) -> &'static str {
        match self {
            LabeledEventKind::Jump { .. } => "jump",
            LabeledEventKind::Sleep => "sleep",
            LabeledEventKind::Wake => "wake",
        }
    }
}

/// One entry of the labeled event log; `site` is the particle's location
/// after the event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledEvent {
    pub time: f64,
    pub label: Label,
    pub kind: LabeledEventKind,
    pub site: Site,
}

/// Change of the labeled occupancy at one site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistoryKind {
    Initial,
    Arrive,
    Depart,
    Sleep,
    Wake,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub time: f64,
    pub label: Label,
    pub kind: HistoryKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleFinal {
    pub label: Label,
    pub position: Site,
    pub state: ParticleState,
    /// Jumped out of the freezing window.
    pub frozen: bool,
    pub inner_time: f64,
}

/// Result of a labeled simulation on [0, horizon].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledRun {
    pub horizon: f64,
    /// (label, starting site), sorted by label.
    pub initial: Vec<(Label, Site)>,
    pub events: Vec<LabeledEvent>,
    pub finals: Vec<ParticleFinal>,
    /// No active particle left (before the horizon).
    pub absorbed: bool,
}

impl LabeledRun {
    /// Labeled history at `z` up to time `t` (inclusive).
    pub fn history_at(&self, z: &Site, t: f64) -> Vec<HistoryEntry> {
        let mut out: Vec<HistoryEntry> = self
            .initial
            .iter()
            .filter(|(_, s)| s == z)
            .map(|(l, _)| HistoryEntry {
                time: 0.0,
                label: l.clone(),
                kind: HistoryKind::Initial,
            })
            .collect();
        for e in self.events.iter().take_while(|e| e.time <= t) {
            match &e.kind {
                LabeledEventKind::Jump { from } => {
                    if from == z {
                        out.push(HistoryEntry {
                            time: e.time,
                            label: e.label.clone(),
                            kind: HistoryKind::Depart,
                        });
                    }
                    if &e.site == z {
                        out.push(HistoryEntry {
                            time: e.time,
                            label: e.label.clone(),
                            kind: HistoryKind::Arrive,
                        });
                    }
                }
                LabeledEventKind::Sleep | LabeledEventKind::Wake => {
                    if &e.site == z {
                        out.push(HistoryEntry {
                            time: e.time,
                            label: e.label.clone(),
                            kind: if e.kind == LabeledEventKind::Sleep {
                                HistoryKind::Sleep
                            } else {
                                HistoryKind::Wake
                            },
                        });
                    }
                }
            }
        }
        out
    }

    /// Histories up to `t` at every site that appears in the run.
    pub fn histories(&self, t: f64) -> BTreeMap<Site, Vec<HistoryEntry>> {
        let mut sites: Vec<&Site> = self.initial.iter().map(|(_, s)| s).collect();
        for e in self.events.iter().take_while(|e| e.time <= t) {
            sites.push(&e.site);
            if let LabeledEventKind::Jump { from } = &e.kind {
                sites.push(from);
            }
        }
        sites.sort();
        sites.dedup();
        sites
            .into_iter()
            .map(|z| (z.clone(), self.history_at(z, t)))
            .collect()
    }

    /// Labeled occupancy at time `t`: for each occupied site, the particles
    /// present and their states.
    pub fn occupancy_at(&self, t: f64) -> BTreeMap<Site, Vec<(Label, ParticleState)>> {
        let mut where_: BTreeMap<Label, (Site, ParticleState)> = self
            .initial
            .iter()
            .map(|(l, s)| (l.clone(), (s.clone(), ParticleState::Active)))
            .collect();
        for e in self.events.iter().take_while(|e| e.time <= t) {
            let entry = where_.get_mut(&e.label).expect("logged particle");
            match e.kind {
                LabeledEventKind::Jump { .. } => entry.0 = e.site.clone(),
                LabeledEventKind::Sleep => entry.1 = ParticleState::Passive,
                LabeledEventKind::Wake => entry.1 = ParticleState::Active,
            }
        }
        let mut out: BTreeMap<Site, Vec<(Label, ParticleState)>> = BTreeMap::new();
        for (l, (s, st)) in where_ {
            out.entry(s).or_default().push((l, st));
        }
        out
    }

    /// Site counts and sleep flags at time `t` on `window`; particles outside
    /// it are recorded as exited at their location.
    pub fn counting_projection(&self, window: BoxRegion, t: f64) -> SiteConfiguration {
        let mut config = SiteConfiguration::empty(window);
        for (site, present) in self.occupancy_at(t) {
            match window.index_of(&site) {
                Some(i) => {
                    config.counts_mut()[i] = present.len() as u32;
                    if present.len() == 1 && present[0].1 == ParticleState::Passive {
                        config.sleeping_mut()[i] = true;
                    }
                }
                None => {
                    for _ in &present {
                        config.record_exit(site.clone());
                    }
                }
            }
        }
        config
    }

    /// Sites visited by `label` up to time `t`, including its start.
    pub fn visited_by(&self, label: &Label, t: f64) -> Vec<Site> {
        let mut out: Vec<Site> = self
            .initial
            .iter()
            .filter(|(l, _)| l == label)
            .map(|(_, s)| s.clone())
            .collect();
        for e in self.events.iter().take_while(|e| e.time <= t) {
            if &e.label == label {
                out.push(e.site.clone());
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// CSV event log: time, label coordinates, label index, event, site.
    pub fn events_csv(&self) -> String {
        let dim = self.initial.first().map(|(l, _)| l.site.dim()).unwrap_or(1);
        let mut out = String::from("time");
        for k in 0..dim {
            let _ = write!(out, ",label_x{k}");
        }
        out.push_str(",label_i,event");
        for k in 0..dim {
            let _ = write!(out, ",site_x{k}");
        }
        out.push('\n');
        for e in &self.events {
            let _ = write!(out, "{:.17e}", e.time);
            for c in e.label.site.coords() {
                let _ = write!(out, ",{c}");
            }
            let _ = write!(out, ",{},{}", e.label.index, e.kind.name());
            for c in e.site.coords() {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

struct Particle<'a> {
    pos: Site,
    state: ParticleState,
    inner: f64,
    last_real: f64,
    next_jump: (f64, usize),
    next_sleep: f64,
    trajectory: PutativeTrajectory<'a>,
    clock: SleepClock,
    frozen: bool,
    version: u64,
}

impl Particle<'_> {
    fn next_time(&self) -> f64 {
        self.last_real + (self.next_jump.0.min(self.next_sleep) - self.inner)
    }
}

#[derive(Clone, Copy, Debug)]
struct Pending {
    time: f64,
    index: usize,
    version: u64,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // particles are stored in label order, so ties go to the smaller label
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.index.cmp(&other.index))
            .then(self.version.cmp(&other.version))
    }
}

/// Event-driven labeled dynamics on [0, horizon]. With `freeze` set,
/// particles that jump out of the box stop there for good (the restricted
/// process); otherwise the system lives on all of Z^d.
pub fn simulate_labeled(
    inits: &[ParticleInit],
    randomness: &ParticleRandomness,
    horizon: f64,
    freeze: Option<&BoxRegion>,
) -> LabeledRun {
    let mut inits: Vec<&ParticleInit> = inits.iter().collect();
    inits.sort_by(|a, b| a.label.cmp(&b.label));

    let mut particles: Vec<Particle<'_>> = inits
        .iter()
        .map(|p| {
            let mut trajectory = randomness.trajectory(&p.source);
            let mut clock = randomness.sleep_clock(&p.source);
            let next_jump = trajectory.next().expect("infinite trajectory");
            let next_sleep = clock.next().expect("infinite clock");
            let frozen = freeze.is_some_and(|b| !b.contains(&p.start));
            Particle {
                pos: p.start.clone(),
                state: ParticleState::Active,
                inner: 0.0,
                last_real: 0.0,
                next_jump,
                next_sleep,
                trajectory,
                clock,
                frozen,
                version: 0,
            }
        })
        .collect();

    let mut occupancy: HashMap<Site, Vec<usize>> = HashMap::new();
    let mut heap = BinaryHeap::new();
    for (k, p) in particles.iter().enumerate() {
        if !p.frozen {
            occupancy.entry(p.pos.clone()).or_default().push(k);
            heap.push(Reverse(Pending {
                time: p.next_time(),
                index: k,
                version: 0,
            }));
        }
    }

    let mut events = Vec::new();
    while let Some(Reverse(ev)) = heap.pop() {
        if ev.time > horizon {
            heap.push(Reverse(ev));
            break;
        }
        let p = &mut particles[ev.index];
        if ev.version != p.version || p.state != ParticleState::Active || p.frozen {
            continue;
        }
        let t = ev.time;
        let label = inits[ev.index].label.clone();
        if p.next_jump.0 < p.next_sleep {
            p.inner = p.next_jump.0;
            p.last_real = t;
            let offset = randomness.kernel.offset(p.next_jump.1);
            p.next_jump = p.trajectory.next().expect("infinite trajectory");
            let from = std::mem::replace(&mut p.pos, Site(Vec::new()));
            let to = from.offset(offset);
            p.pos = to.clone();
            if let Some(v) = occupancy.get_mut(&from) {
                v.retain(|&q| q != ev.index);
                if v.is_empty() {
                    occupancy.remove(&from);
                }
            }
            events.push(LabeledEvent {
                time: t,
                label,
                kind: LabeledEventKind::Jump { from },
                site: to.clone(),
            });
            if freeze.is_some_and(|b| !b.contains(&to)) {
                p.frozen = true;
                continue;
            }
            p.version += 1;
            heap.push(Reverse(Pending {
                time: p.next_time(),
                index: ev.index,
                version: p.version,
            }));
            let here = occupancy.entry(to.clone()).or_default();
            // a passive particle is always alone
            if let [q] = here.as_slice() {
                let q = *q;
                if particles[q].state == ParticleState::Passive {
                    let sleeper = &mut particles[q];
                    sleeper.state = ParticleState::Active;
                    sleeper.last_real = t;
                    sleeper.version += 1;
                    heap.push(Reverse(Pending {
                        time: sleeper.next_time(),
                        index: q,
                        version: sleeper.version,
                    }));
                    events.push(LabeledEvent {
                        time: t,
                        label: inits[q].label.clone(),
                        kind: LabeledEventKind::Wake,
                        site: to.clone(),
                    });
                }
            }
            here.push(ev.index);
        } else {
            p.inner = p.next_sleep;
            p.last_real = t;
            p.next_sleep = p.clock.next().expect("infinite clock");
            let alone = occupancy.get(&p.pos).is_some_and(|v| v.len() == 1);
            if alone {
                p.state = ParticleState::Passive;
                events.push(LabeledEvent {
                    time: t,
                    label,
                    kind: LabeledEventKind::Sleep,
                    site: p.pos.clone(),
                });
            } else {
                p.version += 1;
                heap.push(Reverse(Pending {
                    time: p.next_time(),
                    index: ev.index,
                    version: p.version,
                }));
            }
        }
    }

    let absorbed = particles
        .iter()
        .all(|p| p.frozen || p.state == ParticleState::Passive);
    let finals = particles
        .iter()
        .zip(&inits)
        .map(|(p, i)| ParticleFinal {
            label: i.label.clone(),
            position: p.pos.clone(),
            state: p.state,
            frozen: p.frozen,
            // inner time reached by the horizon
            inner_time: if p.state == ParticleState::Active && !p.frozen && horizon.is_finite() {
                p.inner + (horizon - p.last_real).max(0.0)
            } else {
                p.inner
            },
        })
        .collect();
    LabeledRun {
        horizon,
        initial: inits
            .iter()
            .map(|p| (p.label.clone(), p.start.clone()))
            .collect(),
        events,
        finals,
        absorbed,
    }
}

/// Labeled history at `z` on [0, horizon] for the initial condition η_0·1_W.
pub fn finite_volume_window(
    field: &impl InitialCounts,
    w: &[Site],
    z: &Site,
    horizon: f64,
    randomness: &ParticleRandomness,
) -> Vec<HistoryEntry> {
    let inits = particles_on(field, w);
    simulate_labeled(&inits, randomness, horizon, None).history_at(z, horizon)
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum VolumeError {
    #[error("site {0} repeated in the volume sequence")]
    Repeated(Site),
    #[error("volume sequence sets are not nested")]
    NotNested,
}

/// Order in which the sites of a sup-norm shell are enumerated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShellOrder {
    Lexicographic,
    ReverseLexicographic,
}

/// Increasing volumes W_n = {x_1, …, x_n}.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeSequence {
    sites: Vec<Site>,
}

impl VolumeSequence {
    pub fn new(sites: Vec<Site>) -> Result<Self, VolumeError> {
        let mut seen = std::collections::HashSet::new();
        for x in &sites {
            if !seen.insert(x.clone()) {
                return Err(VolumeError::Repeated(x.clone()));
            }
        }
        Ok(VolumeSequence { sites })
    }

    /// Flattens nested finite sets into single-site increments.
    pub fn from_nested(sets: &[Vec<Site>]) -> Result<Self, VolumeError> {
        let mut sites: Vec<Site> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for set in sets {
            if !seen.iter().all(|x| set.contains(x)) {
                return Err(VolumeError::NotNested);
            }
            let mut fresh: Vec<&Site> = set.iter().filter(|x| !seen.contains(*x)).collect();
            fresh.sort();
            fresh.dedup();
            for x in fresh {
                seen.insert(x.clone());
                sites.push(x.clone());
            }
        }
        Ok(VolumeSequence { sites })
    }

    /// Anchor-shifted boxes w + V_r for r = 0..=radius, one site at a time.
    pub fn spiral(dim: usize, anchor: &Site, radius: u32, order: ShellOrder) -> Self {
        let mut sites = Vec::new();
        for r in 0..=radius {
            let b = BoxRegion::new(r, dim);
            let mut shell: Vec<Site> = b.sites().filter(|x| x.sup_norm() == r as u64).collect();
            if order == ShellOrder::ReverseLexicographic {
                shell.reverse();
            }
            sites.extend(shell.into_iter().map(|x| x.offset(anchor)));
        }
        VolumeSequence { sites }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// W_n; W_0 is empty.
    pub fn prefix(&self, n: usize) -> &[Site] {
        &self.sites[..n.min(self.sites.len())]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stabilization {
    At(usize),
    NotStabilized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub stabilization: Stabilization,
    /// History at z for W_{max_n}.
    pub history: Vec<HistoryEntry>,
}

/// Least n* ≤ max_n such that the history at `z` on [0, horizon] is the same
/// for all W_n, n* ≤ n ≤ max_n; `NotStabilized` when W_{max_n−1} and
/// W_{max_n} already disagree.
pub fn well_definedness_probe(
    field: &impl InitialCounts,
    sequence: &VolumeSequence,
    z: &Site,
    horizon: f64,
    max_n: usize,
    randomness: &ParticleRandomness,
) -> ProbeResult {
    let max_n = max_n.min(sequence.len());
    let histories: Vec<Vec<HistoryEntry>> = (0..=max_n)
        .map(|n| finite_volume_window(field, sequence.prefix(n), z, horizon, randomness))
        .collect();
    let last = &histories[max_n];
    let mut n_star = max_n;
    while n_star > 0 && histories[n_star - 1] == *last {
        n_star -= 1;
    }
    let stabilization = if max_n > 0 && n_star == max_n {
        Stabilization::NotStabilized
    } else {
        Stabilization::At(n_star)
    };
    ProbeResult {
        stabilization,
        history: last.clone(),
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ReachError {
    #[error("window radius {radius} is below 4 × distance {distance}")]
    WindowTooSmall { radius: u32, distance: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachExperiment {
    pub kernel: JumpKernel,
    pub lambda: f64,
    pub law: crate::lattice::InitialLaw,
    /// L: sup-norm distance to reach.
    pub distance: u64,
    /// n: the system is restricted to V_n.
    pub radius: u32,
    pub samples: u64,
    pub seed: u64,
    /// Put particle (o, 1) at the origin when η_0(o) = 0.
    pub occupy_origin: bool,
    /// K: initial counts are capped at K when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachEstimate {
    pub samples: u64,
    pub reached: u64,
    pub absorbed_first: u64,
    /// Samples in which (o, 1) does not exist.
    pub absent: u64,
    pub estimate: f64,
    /// Half-width of the normal 95% interval.
    pub ci_half_width: f64,
    /// Largest sup-norm distance of (o, 1) in each sample; `None` if absent.
    pub max_distances: Vec<Option<u64>>,
}

impl ReachEstimate {
    /// Fraction of samples reaching distance `l`, from the same samples.
    pub fn fraction_reaching(&self, l: u64) -> f64 {
        let hits = self
            .max_distances
            .iter()
            .filter(|d| d.is_some_and(|d| d >= l))
            .count();
        hits as f64 / self.samples.max(1) as f64
    }
}

/// Largest sup-norm distance from its start reached by `label` during a run.
pub fn max_excursion(run: &LabeledRun, label: &Label) -> Option<u64> {
    let start = run.initial.iter().find(|(l, _)| l == label)?.1.clone();
    let mut best = 0;
    for e in &run.events {
        if &e.label == label {
            best = best.max(e.site.minus(&start).sup_norm());
        }
    }
    Some(best)
}

/// Monte Carlo estimate of the probability that particle (o, 1) reaches
/// sup-norm distance L before the system restricted to V_n is absorbed.
pub fn particle_reach_probability(exp: &ReachExperiment) -> Result<ReachEstimate, ReachError> {
    if (exp.radius as u64) < 4 * exp.distance {
        return Err(ReachError::WindowTooSmall {
            radius: exp.radius,
            distance: exp.distance,
        });
    }
    let dim = exp.kernel.dim();
    let window = BoxRegion::new(exp.radius, dim);
    let origin = Site::origin(dim);
    let first = Label::new(origin.clone(), 1);
    let max_distances: Vec<Option<u64>> = (0..exp.samples)
        .into_par_iter()
        .map(|r| {
            let seed = crate::stats::replica_seed(exp.seed, &[r]);
            let field = Capped {
                field: InitialField::new(exp.law.clone(), seed),
                cap: exp.truncation.unwrap_or(u32::MAX),
            };
            let sites: Vec<Site> = window.sites().collect();
            let mut inits = particles_on(&field, &sites);
            if exp.occupy_origin && field.count(&origin) == 0 {
                inits.push(ParticleInit::native(first.clone()));
            }
            let randomness = ParticleRandomness::new(exp.kernel.clone(), exp.lambda, seed);
            let run = simulate_labeled(&inits, &randomness, f64::INFINITY, Some(&window));
            max_excursion(&run, &first)
        })
        .collect();
    let samples = exp.samples;
    let reached = max_distances
        .iter()
        .filter(|d| d.is_some_and(|d| d >= exp.distance))
        .count() as u64;
    let absent = max_distances.iter().filter(|d| d.is_none()).count() as u64;
    let p = reached as f64 / samples.max(1) as f64;
    Ok(ReachEstimate {
        samples,
        reached,
        absorbed_first: samples - reached - absent,
        absent,
        estimate: p,
        ci_half_width: 1.959_963_984_540_054 * (p * (1.0 - p) / samples.max(1) as f64).sqrt(),
        max_distances,
    })
}
