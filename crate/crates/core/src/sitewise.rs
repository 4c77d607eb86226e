//! Site-wise (Diaconis-Fulton) construction on a box.
//!
//! Randomness lives on sites: each site of the window owns a stream of
//! instructions, `Jump(y)` with probability p(y)/(1+λ) and `Sleep` with
//! probability λ/(1+λ). Toppling an unstable site consumes its next
//! instruction. Particles that jump out of the window freeze at their landing
//! site.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clock::LocalClocks;
use crate::config::SiteConfiguration;
use crate::lattice::{BoxRegion, JumpKernel, Site};
use crate::rng::{Lineage, Purpose, RngStream};

/// Default cap on topplings per stabilization.
pub const DEFAULT_TOPPLING_BUDGET: u64 = 1_000_000_000;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SitewiseError {
    #[error("illegal toppling at stable site {0}")]
    IllegalToppling(Site),
    #[error("toppling budget of {0} exceeded")]
    BudgetExceeded(u64),
    #[error("rolling order needs a bias direction")]
    MissingBias,
    #[error("bias direction has dimension {0}, window has dimension {1}")]
    BiasDimension(usize, usize),
    #[error("kernel dimension {0} does not match window dimension {1}")]
    KernelDimension(usize, usize),
}

/// One instruction of a site's stack. `Jump` holds an index into the kernel
/// support.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Instruction {
    Jump(usize),
    Sleep,
}

/// Draws one instruction with a single uniform variate.
pub fn draw_instruction<R: Rng + ?Sized>(kernel: &JumpKernel, lambda: f64, rng: &mut R) -> Instruction {
    let sleep = lambda / (1.0 + lambda);
    let u: f64 = rng.random();
    if u < sleep {
        Instruction::Sleep
    } else {
        Instruction::Jump(kernel.index_for((u - sleep) / (1.0 - sleep)))
    }
}

/// Per-site instruction stacks, consumed in order.
pub trait InstructionTape {
    fn next_instruction(&mut self, site: usize) -> Instruction;

    fn consumed(&self, site: usize) -> u64;
}

/// Lazily generated i.i.d. instruction stacks keyed by (seed, site).
#[derive(Clone, Debug)]
pub struct RandomTape {
    window: BoxRegion,
    kernel: JumpKernel,
    lambda: f64,
    seed: u64,
    streams: Vec<Option<RngStream>>,
    consumed: Vec<u64>,
}

impl RandomTape {
    pub fn new(kernel: &JumpKernel, lambda: f64, window: BoxRegion, seed: u64) -> Self {
        let n = window.volume();
        RandomTape {
            window,
            kernel: kernel.clone(),
            lambda,
            seed,
            streams: vec![None; n],
            consumed: vec![0; n],
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Fresh copy of the same tape with nothing consumed.
    pub fn regenerate(&self) -> Self {
        RandomTape::new(&self.kernel, self.lambda, self.window, self.seed)
    }
}

impl InstructionTape for RandomTape {
    fn next_instruction(&mut self, site: usize) -> Instruction {
        let window = &self.window;
        let seed = self.seed;
        let rng = self.streams[site].get_or_insert_with(|| {
            RngStream::new(Lineage::site(seed, Purpose::Tape, &window.site_at(site)))
        });
        self.consumed[site] += 1;
        draw_instruction(&self.kernel, self.lambda, rng)
    }

    fn consumed(&self, site: usize) -> u64 {
        self.consumed[site]
    }
}

/// Explicit instruction stacks, for hand-traced cases. After a site's script
/// runs out, `then` is repeated; with no `then` an exhausted script panics.
#[derive(Clone, Debug)]
pub struct ScriptedTape {
    scripts: Vec<Vec<Instruction>>,
    then: Option<Instruction>,
    consumed: Vec<u64>,
}

impl ScriptedTape {
    pub fn new(scripts: Vec<Vec<Instruction>>, then: Option<Instruction>) -> Self {
        let n = scripts.len();
        ScriptedTape {
            scripts,
            then,
            consumed: vec![0; n],
        }
    }

    /// Every site repeats the same instruction forever.
    pub fn constant(volume: usize, instruction: Instruction) -> Self {
        ScriptedTape::new(vec![Vec::new(); volume], Some(instruction))
    }
}

impl InstructionTape for ScriptedTape {
    fn next_instruction(&mut self, site: usize) -> Instruction {
        let k = self.consumed[site] as usize;
        self.consumed[site] += 1;
        match self.scripts[site].get(k) {
            Some(&ins) => ins,
            None => self
                .then
                .unwrap_or_else(|| panic!("instruction script exhausted at site index {site}")),
        }
    }

    fn consumed(&self, site: usize) -> u64 {
        self.consumed[site]
    }
}

/// Where a jumping particle ended up.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Landing {
    Inside {
        index: usize,
        /// Particles at the target before the arrival.
        previous: u32,
        /// The arrival woke a sleeper.
        woke: bool,
    },
    Exited(Site),
}

/// Effect of one toppling.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Toppled {
    Jumped(Landing),
    Slept,
    /// Sleep instruction at a site with two or more particles.
    Discarded,
}

/// Counts of consumed instructions by effect.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTally {
    pub jumps: u64,
    pub exits: u64,
    pub wakeups: u64,
    pub sleeps: u64,
    pub discarded: u64,
}

/// Configuration, odometer and tape of one site-wise system.
#[derive(Clone, Debug)]
pub struct Sitewise<T> {
    kernel: JumpKernel,
    config: SiteConfiguration,
    odometer: Vec<u64>,
    tape: T,
    // target index for (site, support entry); None when outside the window
    targets: Vec<Option<u32>>,
    tally: InstructionTally,
}

impl<T: InstructionTape> Sitewise<T> {
    pub fn new(kernel: &JumpKernel, config: SiteConfiguration, tape: T) -> Result<Self, SitewiseError> {
        let window = *config.window();
        if kernel.dim() != window.dim {
            return Err(SitewiseError::KernelDimension(kernel.dim(), window.dim));
        }
        let k = kernel.support().len();
        let mut targets = Vec::with_capacity(window.volume() * k);
        for x in window.sites() {
            for (y, _) in kernel.support() {
                targets.push(window.index_of(&x.offset(y)).map(|i| i as u32));
            }
        }
        Ok(Sitewise {
            kernel: kernel.clone(),
            odometer: vec![0; window.volume()],
            config,
            tape,
            targets,
            tally: InstructionTally::default(),
        })
    }

    pub fn config(&self) -> &SiteConfiguration {
        &self.config
    }

    pub fn odometer(&self) -> &[u64] {
        &self.odometer
    }

    pub fn tape(&self) -> &T {
        &self.tape
    }

    pub fn tally(&self) -> InstructionTally {
        self.tally
    }

    pub fn window(&self) -> BoxRegion {
        *self.config.window()
    }

    pub fn into_parts(self) -> (SiteConfiguration, Vec<u64>, T) {
        (self.config, self.odometer, self.tape)
    }

    /// Performs the next instruction at an unstable window site.
    pub fn topple(&mut self, site: usize) -> Result<Toppled, SitewiseError> {
        if !self.config.is_unstable(site) {
            return Err(SitewiseError::IllegalToppling(
                self.config.window().site_at(site),
            ));
        }
        let ins = self.tape.next_instruction(site);
        self.odometer[site] += 1;
        let outcome = match ins {
            Instruction::Jump(j) => {
                self.tally.jumps += 1;
                self.config.counts_mut()[site] -= 1;
                let k = self.kernel.support().len();
                match self.targets[site * k + j] {
                    Some(t) => {
                        let t = t as usize;
                        let previous = self.config.count(t);
                        let woke = self.config.is_sleeping(t);
                        self.config.counts_mut()[t] += 1;
                        self.config.sleeping_mut()[t] = false;
                        if woke {
                            self.tally.wakeups += 1;
                        }
                        Toppled::Jumped(Landing::Inside {
                            index: t,
                            previous,
                            woke,
                        })
                    }
                    None => {
                        self.tally.exits += 1;
                        let to = self
                            .config
                            .window()
                            .site_at(site)
                            .offset(self.kernel.offset(j));
                        self.config.record_exit(to.clone());
                        Toppled::Jumped(Landing::Exited(to))
                    }
                }
            }
            Instruction::Sleep => {
                if self.config.count(site) == 1 {
                    self.tally.sleeps += 1;
                    self.config.sleeping_mut()[site] = true;
                    Toppled::Slept
                } else {
                    self.tally.discarded += 1;
                    Toppled::Discarded
                }
            }
        };
        Ok(outcome)
    }

    /// Applies a sequence of topplings, failing on the first illegal one.
    pub fn topple_sequence(&mut self, sites: &[usize]) -> Result<(), SitewiseError> {
        for &x in sites {
            self.topple(x)?;
        }
        Ok(())
    }

    fn guard(&self, budget: u64) -> Result<(), SitewiseError> {
        let done: u64 = self.odometer.iter().sum();
        if done >= budget {
            Err(SitewiseError::BudgetExceeded(budget))
        } else {
            Ok(())
        }
    }

    /// Worklist stabilization: each popped site is toppled until stable and
    /// sites made unstable by arrivals are pushed.
    pub fn stabilize_greedy(&mut self, budget: u64) -> Result<(), SitewiseError> {
        let n = self.config.counts().len();
        let mut queued = vec![false; n];
        let mut stack: Vec<usize> = (0..n).rev().filter(|&i| self.config.is_unstable(i)).collect();
        for &i in &stack {
            queued[i] = true;
        }
        let mut done: u64 = self.odometer.iter().sum();
        while let Some(i) = stack.pop() {
            queued[i] = false;
            while self.config.is_unstable(i) {
                if done >= budget {
                    return Err(SitewiseError::BudgetExceeded(budget));
                }
                done += 1;
                if let Toppled::Jumped(Landing::Inside { index, .. }) = self.topple(i)? {
                    if !queued[index] && index != i && self.config.is_unstable(index) {
                        queued[index] = true;
                        stack.push(index);
                    }
                }
            }
        }
        Ok(())
    }

    /// Stabilization choosing a uniformly random unstable site at every step.
    pub fn stabilize_random(&mut self, seed: u64, budget: u64) -> Result<(), SitewiseError> {
        let mut rng = RngStream::new(Lineage::indexed(seed, Purpose::Strategy, &[0]));
        let n = self.config.counts().len();
        let mut pos = vec![usize::MAX; n];
        let mut list = Vec::new();
        for i in 0..n {
            if self.config.is_unstable(i) {
                pos[i] = list.len();
                list.push(i);
            }
        }
        let mut done: u64 = self.odometer.iter().sum();
        while !list.is_empty() {
            if done >= budget {
                return Err(SitewiseError::BudgetExceeded(budget));
            }
            done += 1;
            let i = list[rng.random_range(0..list.len())];
            let touched = match self.topple(i)? {
                Toppled::Jumped(Landing::Inside { index, .. }) => Some(index),
                _ => None,
            };
            for s in std::iter::once(i).chain(touched) {
                let unstable = self.config.is_unstable(s);
                if unstable && pos[s] == usize::MAX {
                    pos[s] = list.len();
                    list.push(s);
                } else if !unstable && pos[s] != usize::MAX {
                    let p = pos[s];
                    let last = *list.last().unwrap();
                    list.swap_remove(p);
                    if last != s {
                        pos[last] = p;
                    }
                    pos[s] = usize::MAX;
                }
            }
        }
        Ok(())
    }

    /// The three-stage rolling strategy along direction `v`; see
    /// [`RollingTally`] for the bookkeeping it returns.
    pub fn stabilize_rolling(&mut self, v: &[i64], budget: u64) -> Result<RollingTally, SitewiseError> {
        let window = self.window();
        if v.len() != window.dim {
            return Err(SitewiseError::BiasDimension(v.len(), window.dim));
        }
        let order = rolling_order(&window, v);
        let mut rank = vec![0usize; order.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        let mut tally = RollingTally::default();
        let start: u64 = self.odometer.iter().sum();

        // Stage 1: topple once every site holding two or more particles,
        // until none is left.
        loop {
            let crowded: Vec<usize> = (0..order.len())
                .filter(|&i| self.config.count(i) >= 2)
                .collect();
            if crowded.is_empty() {
                break;
            }
            for i in crowded {
                self.guard(budget)?;
                self.topple(i)?;
            }
        }
        let after_stage1: u64 = self.odometer.iter().sum();
        tally.stage1_topplings = after_stage1 - start;

        // Stage 2: roll the particle at x_i until it exits, parks on an empty
        // site of A_i = {x_{i+1}, …}, or falls asleep.
        for (step, &xi) in order.iter().enumerate() {
            if !self.config.is_unstable(xi) {
                continue;
            }
            tally.steps_with_particle += 1;
            let mut cur = xi;
            loop {
                self.guard(budget)?;
                match self.topple(cur)? {
                    Toppled::Jumped(Landing::Exited(_)) => {
                        tally.exited += 1;
                        break;
                    }
                    Toppled::Jumped(Landing::Inside { index, previous, .. }) => {
                        if previous == 0 && rank[index] > step {
                            tally.parked += 1;
                            break;
                        }
                        cur = index;
                    }
                    Toppled::Slept => {
                        tally.left_behind += 1;
                        tally.sleep_ranks.push((step as u32, rank[cur] as u32));
                        break;
                    }
                    Toppled::Discarded => {}
                }
            }
        }
        let after_stage2: u64 = self.odometer.iter().sum();
        tally.stage2_topplings = after_stage2 - after_stage1;

        // Stage 3: whatever is still active.
        self.stabilize_greedy(budget)?;
        tally.stage3_topplings = self.odometer.iter().sum::<u64>() - after_stage2;
        Ok(tally)
    }
}

/// Window indices sorted by x·v ascending, ties in lexicographic order.
pub fn rolling_order(window: &BoxRegion, v: &[i64]) -> Vec<usize> {
    let mut order: Vec<(i64, usize)> = window
        .sites()
        .enumerate()
        .map(|(i, x)| (x.dot(v), i))
        .collect();
    order.sort_unstable();
    order.into_iter().map(|(_, i)| i).collect()
}

/// Bookkeeping of the rolling strategy.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingTally {
    pub stage1_topplings: u64,
    pub stage2_topplings: u64,
    pub stage3_topplings: u64,
    /// Steps of stage 2 that found an active particle at x_i.
    pub steps_with_particle: u64,
    pub exited: u64,
    pub parked: u64,
    /// N: particles left behind asleep during stage 2.
    pub left_behind: u64,
    /// (step, rank of the site where the particle fell asleep), 0-based.
    pub sleep_ranks: Vec<(u32, u32)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    GreedySweep,
    /// Leveling, rolling along the kernel bias, then finishing.
    Rolling,
    RandomOrder { seed: u64 },
}

/// Result of stabilizing a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizationReport {
    pub strategy: Strategy,
    pub initial_total: u64,
    pub final_config: SiteConfiguration,
    pub odometer: Vec<u64>,
    /// M: particles that left the window.
    pub exit_count: u64,
    /// N: particles left behind in stage 2 (rolling only).
    pub left_behind: Option<u64>,
    pub rolling: Option<RollingTally>,
    pub tally: InstructionTally,
    pub topplings: u64,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

/// Stabilizes `config` in its window with the given strategy.
pub fn stabilize<T: InstructionTape>(
    kernel: &JumpKernel,
    config: SiteConfiguration,
    tape: T,
    strategy: Strategy,
    budget: u64,
) -> Result<StabilizationReport, SitewiseError> {
    match strategy {
        Strategy::Rolling => {
            let v = kernel.bias().ok_or(SitewiseError::MissingBias)?.to_vec();
            stabilize_rolling(kernel, config, tape, &v, budget)
        }
        _ => {
            let started = Instant::now();
            let initial_total = config.interior_total();
            let mut sys = Sitewise::new(kernel, config, tape)?;
            match strategy {
                Strategy::GreedySweep => sys.stabilize_greedy(budget)?,
                Strategy::RandomOrder { seed } => sys.stabilize_random(seed, budget)?,
                Strategy::Rolling => unreachable!(),
            }
            Ok(report(sys, strategy, initial_total, None, started))
        }
    }
}

/// Rolling stabilization along an explicit direction `v`.
pub fn stabilize_rolling<T: InstructionTape>(
    kernel: &JumpKernel,
    config: SiteConfiguration,
    tape: T,
    v: &[i64],
    budget: u64,
) -> Result<StabilizationReport, SitewiseError> {
    let started = Instant::now();
    let initial_total = config.interior_total();
    let mut sys = Sitewise::new(kernel, config, tape)?;
    let tally = sys.stabilize_rolling(v, budget)?;
    Ok(report(sys, Strategy::Rolling, initial_total, Some(tally), started))
}

fn report<T: InstructionTape>(
    sys: Sitewise<T>,
    strategy: Strategy,
    initial_total: u64,
    rolling: Option<RollingTally>,
    started: Instant,
) -> StabilizationReport {
    let tally = sys.tally();
    let (final_config, odometer, _) = sys.into_parts();
    let topplings = odometer.iter().sum();
    StabilizationReport {
        strategy,
        initial_total,
        exit_count: initial_total - final_config.interior_total(),
        left_behind: rolling.as_ref().map(|r| r.left_behind),
        rolling,
        final_config,
        odometer,
        tally,
        topplings,
        wall_time_secs: started.elapsed().as_secs_f64(),
    }
}

/// What a clock firing did.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Jump,
    Exit,
    Sleep,
    Discard,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClockEvent {
    pub time: f64,
    pub site: usize,
    pub kind: EventKind,
}

/// Continuous-time run: one event per toppling, in time order.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousRun {
    pub events: Vec<ClockEvent>,
    pub final_config: SiteConfiguration,
    pub odometer: Vec<u64>,
    /// No active particle is left in the window.
    pub absorbed: bool,
}

/// Clock-driven evolution up to `horizon`: the clock of each site runs in
/// local time at rate 1+λ, local time growing at the number of active
/// particles present, and every mark topples the site.
pub fn run_continuous<T: InstructionTape>(
    kernel: &JumpKernel,
    config: SiteConfiguration,
    tape: T,
    lambda: f64,
    clock_seed: u64,
    horizon: f64,
) -> Result<ContinuousRun, SitewiseError> {
    let window = *config.window();
    let mut sys = Sitewise::new(kernel, config, tape)?;
    let mut clocks = LocalClocks::new(1.0 + lambda);
    for x in window.sites() {
        clocks.add(RngStream::new(Lineage::site(clock_seed, Purpose::Clock, &x)));
    }
    for i in 0..window.volume() {
        clocks.set_speed(i, sys.config().active(i), 0.0);
    }
    let mut events = Vec::new();
    while let Some((t, i)) = clocks.next_firing(horizon) {
        let kind = match sys.topple(i)? {
            Toppled::Jumped(Landing::Inside { index, .. }) => {
                clocks.set_speed(index, sys.config().active(index), t);
                EventKind::Jump
            }
            Toppled::Jumped(Landing::Exited(_)) => EventKind::Exit,
            Toppled::Slept => EventKind::Sleep,
            Toppled::Discarded => EventKind::Discard,
        };
        clocks.set_speed(i, sys.config().active(i), t);
        events.push(ClockEvent { time: t, site: i, kind });
    }
    let absorbed = sys.config().is_stable();
    let (final_config, odometer, _) = sys.into_parts();
    Ok(ContinuousRun {
        events,
        final_config,
        odometer,
        absorbed,
    })
}
