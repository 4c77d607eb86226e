//! Coupled systems: the two-color (blue/red) dynamics used to compare exit
//! counts across domains, influence sets of single particles, and the I/J
//! branching process that dominates them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clock::LocalClocks;
use crate::config::SiteConfiguration;
use crate::lattice::{BoxRegion, JumpKernel, Site};
use crate::particlewise::{
    particles_on, simulate_labeled, InitialCounts, Label, ParticleInit, ParticleRandomness,
};
use crate::rng::{exponential, Lineage, Purpose, RngStream};
use crate::sitewise::{draw_instruction, EventKind, Instruction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Color {
    Blue,
    Red,
}

impl Color {
    fn slot(self) -> usize {
        match self {
            Color::Blue => 0,
            Color::Red => 1,
        }
    }
}

/// Shared randomness and geometry of a two-color run. Blue instruction stacks
/// and clocks use the same streams as the single-color site-wise engine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoColorSetup {
    pub kernel: JumpKernel,
    pub lambda: f64,
    pub seed: u64,
    /// Blue particles turn red when they leave `u`.
    pub u: BoxRegion,
    /// Particles landing outside this box freeze there.
    pub freeze: Option<BoxRegion>,
    /// Seed of the clocks when it differs from the tape seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoColorEvent {
    pub time: f64,
    pub site: Site,
    pub color: Color,
    pub kind: EventKind,
    /// A blue particle left U and became red.
    pub converted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoColorRun {
    pub events: Vec<TwoColorEvent>,
    pub blue: BTreeMap<Site, u32>,
    pub red: BTreeMap<Site, u32>,
    pub sleepers: BTreeMap<Site, Color>,
    pub frozen: BTreeMap<Site, u64>,
    /// Per-site blue and red toppling counts.
    pub h_blue: BTreeMap<Site, u64>,
    pub h_red: BTreeMap<Site, u64>,
    pub initial_blue: u64,
    /// Initial blue count minus current blue count.
    pub m_u: u64,
    pub absorbed: bool,
}

impl TwoColorRun {
    /// First time at which some per-site blue or red toppling count of
    /// `self` exceeds the one of `other`, comparing at every event time.
    pub fn first_undominated_time(&self, other: &TwoColorRun) -> Option<f64> {
        let mut excess: HashMap<(Site, Color), i64> = HashMap::new();
        let mut deficit = 0usize;
        let (mut i, mut j) = (0, 0);
        while i < self.events.len() || j < other.events.len() {
            let t = match (self.events.get(i), other.events.get(j)) {
                (Some(a), Some(b)) => a.time.min(b.time),
                (Some(a), None) => a.time,
                (None, Some(b)) => b.time,
                (None, None) => unreachable!(),
            };
            let mut bump = |e: &TwoColorEvent, d: i64| {
                let v = excess.entry((e.site.clone(), e.color)).or_insert(0);
                let before = *v > 0;
                *v += d;
                match (before, *v > 0) {
                    (false, true) => deficit += 1,
                    (true, false) => deficit -= 1,
                    _ => {}
                }
            };
            while let Some(e) = self.events.get(i).filter(|e| e.time == t) {
                bump(e, 1);
                i += 1;
            }
            while let Some(e) = other.events.get(j).filter(|e| e.time == t) {
                bump(e, -1);
                j += 1;
            }
            if deficit > 0 {
                return Some(t);
            }
        }
        None
    }

    /// M_U at time `t`.
    pub fn m_u_at(&self, t: f64) -> u64 {
        self.events
            .iter()
            .take_while(|e| e.time <= t)
            .filter(|e| e.converted)
            .count() as u64
    }

    /// Color-blind site configuration on `window`.
    pub fn projection(&self, window: BoxRegion) -> SiteConfiguration {
        let mut config = SiteConfiguration::empty(window);
        let mut outside: BTreeMap<Site, u64> = self.frozen.clone();
        for (site, n) in self.blue.iter().chain(&self.red) {
            match window.index_of(site) {
                Some(i) => config.counts_mut()[i] += n,
                None => *outside.entry(site.clone()).or_insert(0) += *n as u64,
            }
        }
        for (site, _) in &self.sleepers {
            if let Some(i) = window.index_of(site) {
                config.sleeping_mut()[i] = true;
            }
        }
        for (site, n) in outside {
            for _ in 0..n {
                config.record_exit(site.clone());
            }
        }
        config
    }
}

#[derive(Debug, Default)]
struct Cell {
    count: [u32; 2],
    sleeper: Option<Color>,
    clock: [Option<usize>; 2],
    tape: [Option<RngStream>; 2],
    h: [u64; 2],
}

impl Cell {
    fn total(&self) -> u32 {
        self.count[0] + self.count[1]
    }

    fn active(&self, c: Color) -> u32 {
        self.count[c.slot()] - u32::from(self.sleeper == Some(c))
    }
}

struct Engine<'a> {
    setup: &'a TwoColorSetup,
    cells: HashMap<Site, Cell>,
    keys: Vec<(Site, Color)>,
    clocks: LocalClocks,
}

impl Engine<'_> {
    fn add(&mut self, site: &Site, color: Color, n: u32) {
        let cell = self.cells.entry(site.clone()).or_default();
        if n > 0 {
            cell.sleeper = None;
        }
        cell.count[color.slot()] += n;
    }

    fn refresh(&mut self, site: &Site, now: f64) {
        let seed = self.setup.clock_seed.unwrap_or(self.setup.seed);
        let cell = self.cells.get_mut(site).expect("known cell");
        for color in [Color::Blue, Color::Red] {
            let speed = cell.active(color);
            let key = match cell.clock[color.slot()] {
                Some(k) => k,
                None if speed == 0 => continue,
                None => {
                    let purpose = match color {
                        Color::Blue => Purpose::Clock,
                        Color::Red => Purpose::ClockRed,
                    };
                    let k = self.clocks.add(RngStream::new(Lineage::site(seed, purpose, site)));
                    self.keys.push((site.clone(), color));
                    cell.clock[color.slot()] = Some(k);
                    k
                }
            };
            self.clocks.set_speed(key, speed, now);
        }
    }
}

/// Continuous-time two-color dynamics up to `horizon`. Each site runs one
/// clock per color at rate (1+λ) times the number of active particles of
/// that color; a firing consumes the next instruction of that color. A Sleep
/// succeeds only if the site holds exactly one particle of either color, and
/// any arrival wakes a sleeper.
pub fn run_two_color(
    setup: &TwoColorSetup,
    blue: &BTreeMap<Site, u32>,
    red: &BTreeMap<Site, u32>,
    horizon: f64,
) -> TwoColorRun {
    let mut engine = Engine {
        setup,
        cells: HashMap::new(),
        keys: Vec::new(),
        clocks: LocalClocks::new(1.0 + setup.lambda),
    };
    let mut frozen: BTreeMap<Site, u64> = BTreeMap::new();
    let mut initial_blue = 0;
    // initial blue outside U starts red; initial particles outside the
    // freezing box start frozen
    for (color, init) in [(Color::Blue, blue), (Color::Red, red)] {
        for (site, &n) in init {
            if n == 0 {
                continue;
            }
            if setup.freeze.is_some_and(|b| !b.contains(site)) {
                *frozen.entry(site.clone()).or_insert(0) += n as u64;
                continue;
            }
            let c = if color == Color::Blue && setup.u.contains(site) {
                initial_blue += n as u64;
                Color::Blue
            } else {
                Color::Red
            };
            engine.add(site, c, n);
        }
    }
    let mut sites: Vec<Site> = engine.cells.keys().cloned().collect();
    sites.sort();
    for s in &sites {
        engine.refresh(s, 0.0);
    }

    let mut events = Vec::new();
    while let Some((t, key)) = engine.clocks.next_firing(horizon) {
        let (site, color) = engine.keys[key].clone();
        let cell = engine.cells.get_mut(&site).expect("known cell");
        let rng = cell.tape[color.slot()].get_or_insert_with(|| {
            let purpose = match color {
                Color::Blue => Purpose::Tape,
                Color::Red => Purpose::TapeRed,
            };
            RngStream::new(Lineage::site(setup.seed, purpose, &site))
        });
        let ins = draw_instruction(&setup.kernel, setup.lambda, rng);
        cell.h[color.slot()] += 1;
        let mut converted = false;
        let kind = match ins {
            Instruction::Sleep => {
                if cell.total() == 1 {
                    cell.sleeper = Some(color);
                    EventKind::Sleep
                } else {
                    EventKind::Discard
                }
            }
            Instruction::Jump(j) => {
                cell.count[color.slot()] -= 1;
                let target = site.offset(setup.kernel.offset(j));
                let new_color = if color == Color::Blue && !setup.u.contains(&target) {
                    converted = true;
                    Color::Red
                } else {
                    color
                };
                if setup.freeze.is_some_and(|b| !b.contains(&target)) {
                    *frozen.entry(target).or_insert(0) += 1;
                    EventKind::Exit
                } else {
                    engine.add(&target, new_color, 1);
                    engine.refresh(&target, t);
                    EventKind::Jump
                }
            }
        };
        engine.refresh(&site, t);
        events.push(TwoColorEvent {
            time: t,
            site,
            color,
            kind,
            converted,
        });
    }

    let mut run = TwoColorRun {
        events,
        blue: BTreeMap::new(),
        red: BTreeMap::new(),
        sleepers: BTreeMap::new(),
        frozen,
        h_blue: BTreeMap::new(),
        h_red: BTreeMap::new(),
        initial_blue,
        m_u: 0,
        absorbed: engine.clocks.all_stopped(),
    };
    let mut current_blue = 0;
    for (site, cell) in engine.cells {
        if cell.count[0] > 0 {
            run.blue.insert(site.clone(), cell.count[0]);
            current_blue += cell.count[0] as u64;
        }
        if cell.count[1] > 0 {
            run.red.insert(site.clone(), cell.count[1]);
        }
        if let Some(c) = cell.sleeper {
            run.sleepers.insert(site.clone(), c);
        }
        if cell.h[0] > 0 {
            run.h_blue.insert(site.clone(), cell.h[0]);
        }
        if cell.h[1] > 0 {
            run.h_red.insert(site, cell.h[1]);
        }
    }
    run.m_u = initial_blue - current_blue;
    run
}

/// Exit counts M_U from one coupled trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotonicityTrial {
    /// Process restricted to U (particles freeze outside U).
    pub restricted: u64,
    /// Initial condition on U', free dynamics.
    pub middle: u64,
    /// Initial condition on U'', free dynamics.
    pub outer: u64,
}

/// The three coupled systems sharing tapes and clocks: η_0 restricted to U
/// under P_[U], and η_0 on U' and U'' with free dynamics. Particles starting
/// in U are blue, the others red.
#[allow(clippy::too_many_arguments)]
pub fn coupled_runs(
    kernel: &JumpKernel,
    lambda: f64,
    eta0: &impl InitialCounts,
    u: BoxRegion,
    u1: BoxRegion,
    u2: BoxRegion,
    horizon: f64,
    seed: u64,
) -> [TwoColorRun; 3] {
    let setup = |freeze| TwoColorSetup {
        kernel: kernel.clone(),
        lambda,
        seed,
        u,
        freeze,
        clock_seed: None,
    };
    let blue: BTreeMap<Site, u32> = u.sites().map(|x| {
        let n = eta0.count(&x);
        (x, n)
    }).collect();
    let red_on = |outer: BoxRegion| -> BTreeMap<Site, u32> {
        outer
            .sites()
            .filter(|x| !u.contains(x))
            .map(|x| {
                let n = eta0.count(&x);
                (x, n)
            })
            .collect()
    };
    [
        run_two_color(&setup(Some(u)), &blue, &BTreeMap::new(), horizon),
        run_two_color(&setup(None), &blue, &red_on(u1), horizon),
        run_two_color(&setup(None), &blue, &red_on(u2), horizon),
    ]
}

/// Exit counts of [`coupled_runs`].
#[allow(clippy::too_many_arguments)]
pub fn coupled_monotonicity_trial(
    kernel: &JumpKernel,
    lambda: f64,
    eta0: &impl InitialCounts,
    u: BoxRegion,
    u1: BoxRegion,
    u2: BoxRegion,
    horizon: f64,
    seed: u64,
) -> MonotonicityTrial {
    let [restricted, middle, outer] = coupled_runs(kernel, lambda, eta0, u, u1, u2, horizon, seed);
    MonotonicityTrial {
        restricted: restricted.m_u,
        middle: middle.m_u,
        outer: outer.m_u,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRecord {
    pub source: Label,
    pub horizon: f64,
    pub sites: BTreeSet<Site>,
}

/// Sites whose labeled history on [0, t] changes when particle (x, i) is
/// removed from the finite configuration π. In the reduced system the
/// particle labeled (x, j), j ≥ i, uses the randomness of (x, j + 1); it is
/// the same physical particle as (x, j + 1) of π, and histories are compared
/// under that identification.
pub fn influence_set(
    pi: &BTreeMap<Site, u32>,
    source: &Label,
    horizon: f64,
    randomness: &ParticleRandomness,
) -> InfluenceRecord {
    let mut record = InfluenceRecord {
        source: source.clone(),
        horizon,
        sites: BTreeSet::new(),
    };
    if source.index == 0 || source.index > pi.count(&source.site) {
        return record;
    }
    let full = particles_on(pi, pi.keys());
    let reduced: Vec<ParticleInit> = full.iter().filter(|p| &p.label != source).cloned().collect();
    let a = simulate_labeled(&full, randomness, horizon, None).histories(horizon);
    let b = simulate_labeled(&reduced, randomness, horizon, None).histories(horizon);
    let empty = Vec::new();
    for z in a.keys().chain(b.keys()) {
        if a.get(z).unwrap_or(&empty) != b.get(z).unwrap_or(&empty) {
            record.sites.insert(z.clone());
        }
    }
    record
}

/// CSV site list stamped with a time: `time,x0,...`.
pub fn sites_csv<'a>(time: f64, sites: impl IntoIterator<Item = &'a Site>, dim: usize) -> String {
    let mut out = String::from("time");
    for k in 0..dim {
        let _ = write!(out, ",x{k}");
    }
    out.push('\n');
    for s in sites {
        let _ = write!(out, "{time}");
        for c in s.coords() {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

/// Default cap on the branching population.
pub const DEFAULT_POPULATION_CAP: u64 = 10_000_000;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BranchingError {
    #[error("population exceeded the cap of {cap} at time {time}")]
    PopulationGuard { cap: u64, time: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchKind {
    I,
    J,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationPoint {
    pub time: f64,
    pub i_count: u64,
    pub j_count: u64,
    pub sites: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchingRun {
    pub horizon: f64,
    /// Z̃_t: sites holding an I or J particle at the horizon.
    pub sites: BTreeSet<Site>,
    pub i_count: u64,
    pub j_count: u64,
    /// Population after every event, starting at time 0.
    pub history: Vec<PopulationPoint>,
    /// Earliest time an I particle stood at each site.
    pub first_i_visit: BTreeMap<Site, f64>,
    /// (site, creation time) of every J particle.
    pub j_births: Vec<(Site, f64)>,
}

impl BranchingRun {
    pub fn population(&self) -> u64 {
        self.i_count + self.j_count
    }
}

/// Exact simulation of the I/J system from one I particle at the origin.
/// I particles jump at rate 1 with kernel p; on a jump the mover leaves a J
/// at the site it left and a new I at the site it lands on. Every I and J
/// creates a new I at its own site at rate λ. J particles never move.
pub fn run_branching_dominator(
    kernel: &JumpKernel,
    lambda: f64,
    horizon: f64,
    cap: u64,
    seed: u64,
) -> Result<BranchingRun, BranchingError> {
    let mut rng = RngStream::new(Lineage::indexed(seed, Purpose::Branching, &[]));
    let origin = Site::origin(kernel.dim());
    let mut is: Vec<Site> = vec![origin.clone()];
    let mut js: Vec<Site> = Vec::new();
    let mut sites: BTreeSet<Site> = BTreeSet::from([origin.clone()]);
    let mut first_i_visit = BTreeMap::from([(origin, 0.0)]);
    let mut j_births = Vec::new();
    let mut history = vec![PopulationPoint {
        time: 0.0,
        i_count: 1,
        j_count: 0,
        sites: 1,
    }];
    let mut t = 0.0;
    loop {
        let ni = is.len() as f64;
        let nj = js.len() as f64;
        let rate = ni * (1.0 + lambda) + nj * lambda;
        t += exponential(&mut rng, rate);
        if t > horizon {
            break;
        }
        let u = rng.random::<f64>() * rate;
        if u < ni {
            let k = (u as usize).min(is.len() - 1);
            let from = is[k].clone();
            let to = from.offset(kernel.offset(kernel.sample_index(&mut rng)));
            is[k] = to.clone();
            is.push(to.clone());
            js.push(from.clone());
            j_births.push((from, t));
            first_i_visit.entry(to.clone()).or_insert(t);
            sites.insert(to);
        } else {
            // spawn: uniform over all I and J particles
            let k = (((u - ni) / lambda) as usize).min(is.len() + js.len() - 1);
            let at = if k < is.len() { is[k].clone() } else { js[k - is.len()].clone() };
            is.push(at);
        }
        let pop = (is.len() + js.len()) as u64;
        history.push(PopulationPoint {
            time: t,
            i_count: is.len() as u64,
            j_count: js.len() as u64,
            sites: sites.len() as u64,
        });
        if pop > cap {
            return Err(BranchingError::PopulationGuard { cap, time: t });
        }
    }
    Ok(BranchingRun {
        horizon,
        sites,
        i_count: is.len() as u64,
        j_count: js.len() as u64,
        history,
        first_i_visit,
        j_births,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sitewise::{run_continuous, RandomTape};

    fn right() -> JumpKernel {
        JumpKernel::nearest_neighbor_1d(1.0).unwrap()
    }

    fn at(pairs: &[(i64, u32)]) -> BTreeMap<Site, u32> {
        pairs.iter().map(|&(x, n)| (Site(vec![x]), n)).collect()
    }

    #[test]
    fn lone_blue_exits_when_it_jumps_first() {
        for seed in 0..100 {
            let setup = TwoColorSetup {
                kernel: right(),
                lambda: 0.5,
                seed,
                u: BoxRegion::new(0, 1),
                freeze: None,
                clock_seed: None,
            };
            let run = run_two_color(&setup, &at(&[(0, 1)]), &BTreeMap::new(), f64::INFINITY);
            let first = &run.events[0];
            assert_eq!(run.m_u, u64::from(first.kind == EventKind::Jump));
            assert_eq!(run.m_u, u64::from(first.converted));
        }
    }

    #[test]
    fn blue_only_matches_sitewise_clock_run() {
        let k = JumpKernel::nearest_neighbor_1d(0.5).unwrap();
        let w = BoxRegion::new(2, 1);
        for seed in 0..40 {
            let counts = vec![1, 0, 2, 1, 0];
            let config = SiteConfiguration::from_counts(w, counts.clone()).unwrap();
            let tape = RandomTape::new(&k, 0.8, w, seed);
            let reference = run_continuous(&k, config, tape, 0.8, seed, f64::INFINITY).unwrap();
            let setup = TwoColorSetup {
                kernel: k.clone(),
                lambda: 0.8,
                seed,
                u: w,
                freeze: Some(w),
                clock_seed: None,
            };
            let blue: BTreeMap<Site, u32> = w.sites().zip(counts).collect();
            let run = run_two_color(&setup, &blue, &BTreeMap::new(), f64::INFINITY);
            assert_eq!(run.events.len(), reference.events.len());
            for (a, b) in run.events.iter().zip(&reference.events) {
                assert_eq!(a.time, b.time);
                assert_eq!(a.site, w.site_at(b.site));
                assert_eq!(a.kind, b.kind);
            }
            assert_eq!(run.projection(w), reference.final_config);
            assert_eq!(run.m_u, reference.final_config.exited_total());
        }
    }

    #[test]
    fn m_u_grows_with_time() {
        let setup = TwoColorSetup {
            kernel: JumpKernel::nearest_neighbor_1d(0.5).unwrap(),
            lambda: 1.0,
            seed: 3,
            u: BoxRegion::new(1, 1),
            freeze: Some(BoxRegion::new(3, 1)),
            clock_seed: None,
        };
        let run = run_two_color(&setup, &at(&[(-1, 1), (0, 2), (1, 1)]), &at(&[(2, 1), (-3, 2)]), f64::INFINITY);
        let mut last = 0;
        for e in &run.events {
            let m = run.m_u_at(e.time);
            assert!(m >= last);
            last = m;
        }
        assert_eq!(last, run.m_u);
    }

    #[test]
    fn extra_red_can_lower_blue_topplings() {
        // the second red doubles the red clock speed, both reds leave, and
        // the blue Sleep that was discarded in the base run now succeeds
        let setup = TwoColorSetup {
            kernel: JumpKernel::nearest_neighbor_1d(0.5).unwrap(),
            lambda: 1.0,
            seed: 3026492334639834692,
            u: BoxRegion::new(0, 1),
            freeze: Some(BoxRegion::new(2, 1)),
            clock_seed: None,
        };
        let blue = at(&[(0, 1)]);
        let base = run_two_color(&setup, &blue, &at(&[(0, 1)]), 2.51);
        let more = run_two_color(&setup, &blue, &at(&[(0, 2)]), 2.51);
        let t = base.first_undominated_time(&more).expect("violation");
        assert!((t - 2.5023).abs() < 1e-3);
        assert_eq!(base.h_blue[&Site(vec![0])], 2);
        assert_eq!(more.h_blue[&Site(vec![0])], 1);
        assert_eq!(more.sleepers.get(&Site(vec![0])), Some(&Color::Blue));
        assert!(more.first_undominated_time(&more).is_none());
    }

    #[test]
    fn empty_trial_is_zero() {
        let t = coupled_monotonicity_trial(
            &right(),
            1.0,
            &BTreeMap::<Site, u32>::new(),
            BoxRegion::new(1, 1),
            BoxRegion::new(2, 1),
            BoxRegion::new(4, 1),
            f64::INFINITY,
            1,
        );
        assert_eq!(t, MonotonicityTrial { restricted: 0, middle: 0, outer: 0 });
    }

    #[test]
    fn influence_basic_cases() {
        let r = ParticleRandomness::new(JumpKernel::nearest_neighbor_1d(0.5).unwrap(), 1.0, 5);
        let pi = at(&[(0, 1), (2, 1)]);
        let none = influence_set(&pi, &Label::new(Site(vec![0]), 2), 3.0, &r);
        assert!(none.sites.is_empty());
        let now = influence_set(&pi, &Label::new(Site(vec![0]), 1), 0.0, &r);
        assert_eq!(now.sites, BTreeSet::from([Site(vec![0])]));
    }

    #[test]
    fn influence_of_lone_particle_is_its_range() {
        for seed in 0..30 {
            let r = ParticleRandomness::new(JumpKernel::nearest_neighbor_1d(0.5).unwrap(), 0.3, seed);
            let label = Label::new(Site(vec![1]), 1);
            let pi = at(&[(1, 1)]);
            let rec = influence_set(&pi, &label, 4.0, &r);
            let run = simulate_labeled(&[ParticleInit::native(label.clone())], &r, 4.0, None);
            let visited: BTreeSet<Site> = run.visited_by(&label, 4.0).into_iter().collect();
            assert_eq!(rec.sites, visited);
        }
    }

    #[test]
    fn branching_at_time_zero() {
        let run = run_branching_dominator(&right(), 0.5, 0.0, 100, 1).unwrap();
        assert_eq!(run.sites.len(), 1);
        assert_eq!(run.population(), 1);
    }

    #[test]
    fn branching_guard_trips() {
        let k = JumpKernel::simple_symmetric(2).unwrap();
        let err = run_branching_dominator(&k, 2.0, 10.0, 1000, 1).unwrap_err();
        assert!(matches!(err, BranchingError::PopulationGuard { cap: 1000, .. }));
    }

    #[test]
    fn j_sites_were_visited_by_i() {
        let k = JumpKernel::nearest_neighbor_1d(0.5).unwrap();
        for seed in 0..50 {
            let run = run_branching_dominator(&k, 1.0, 1.0, DEFAULT_POPULATION_CAP, seed).unwrap();
            for (site, t) in &run.j_births {
                assert!(run.first_i_visit[site] < *t);
            }
            assert!(run.history.windows(2).all(|w| w[1].i_count + w[1].j_count > w[0].i_count + w[0].j_count));
        }
    }
}
