use std::collections::BTreeMap;

use arw_core::config::SiteConfiguration;
use arw_core::couplings::{
    influence_set, run_branching_dominator, run_two_color, BranchingRun, TwoColorSetup, DEFAULT_POPULATION_CAP,
};
use arw_core::lattice::{BoxRegion, InitialField, InitialLaw, JumpKernel, Site};
use arw_core::particlewise::{particles_on, simulate_labeled, Label, ParticleRandomness};
use arw_core::sitewise::{stabilize, RandomTape, Strategy, DEFAULT_TOPPLING_BUDGET};
use arw_core::stats::{replica_seed, tv_distance, Moments};

fn population_at(run: &BranchingRun, t: f64) -> u64 {
    let p = run.history.iter().take_while(|p| p.time <= t).last().unwrap();
    p.i_count + p.j_count
}

fn finite_config(seed: u64) -> BTreeMap<Site, u32> {
    let field = InitialField::new(InitialLaw::bernoulli(0.5).unwrap(), seed);
    let mut pi: BTreeMap<Site, u32> = BoxRegion::new(4, 1)
        .sites()
        .map(|x| {
            let n = field.count(&x);
            (x, n)
        })
        .filter(|&(_, n)| n > 0)
        .collect();
    pi.entry(Site(vec![0])).or_insert(1);
    pi
}

#[test]
fn sites_outside_the_influence_set_see_the_same_counts() {
    let horizon = 1.5;
    for seed in 0..200 {
        let r = ParticleRandomness::new(JumpKernel::nearest_neighbor_1d(0.5).unwrap(), 0.7, seed);
        let pi = finite_config(seed);
        let source = Label::new(Site(vec![0]), 1);
        let z = influence_set(&pi, &source, horizon, &r);
        assert!(z.sites.contains(&Site(vec![0])));
        let full = particles_on(&pi, pi.keys());
        let reduced: Vec<_> = full.iter().filter(|p| p.label != source).cloned().collect();
        let a = simulate_labeled(&full, &r, horizon, None);
        let b = simulate_labeled(&reduced, &r, horizon, None);
        let mut times: Vec<f64> = a.events.iter().chain(&b.events).map(|e| e.time).collect();
        times.push(0.0);
        times.push(horizon);
        let w = BoxRegion::new(40, 1);
        for t in times {
            let ca = a.counting_projection(w, t);
            let cb = b.counting_projection(w, t);
            for (k, x) in w.sites().enumerate() {
                if !z.sites.contains(&x) {
                    assert_eq!(ca.count(k), cb.count(k), "seed {seed} site {x} t {t}");
                    assert_eq!(ca.is_sleeping(k), cb.is_sleeping(k));
                }
            }
        }
    }
}

#[test]
fn influence_at_time_zero_is_the_source_site() {
    let r = ParticleRandomness::new(JumpKernel::nearest_neighbor_1d(0.5).unwrap(), 0.7, 3);
    let pi = finite_config(3);
    let z = influence_set(&pi, &Label::new(Site(vec![0]), 1), 0.0, &r);
    assert_eq!(z.sites.into_iter().collect::<Vec<_>>(), vec![Site(vec![0])]);
    let missing = influence_set(&pi, &Label::new(Site(vec![0]), 9), 5.0, &r);
    assert!(missing.sites.is_empty());
}

#[test]
fn influence_is_dominated_by_the_branching_sites() {
    let kernel = JumpKernel::nearest_neighbor_1d(0.5).unwrap();
    let (lambda, t, samples) = (0.5, 1.0, 10_000u64);
    let probes: Vec<i64> = (-4..=4).collect();
    let mut influence = vec![0u64; probes.len()];
    let mut branching = vec![0u64; probes.len()];
    for k in 0..samples {
        let seed = replica_seed(21, &[k]);
        let r = ParticleRandomness::new(kernel.clone(), lambda, seed);
        let z = influence_set(&finite_config(seed), &Label::new(Site(vec![0]), 1), t, &r);
        let b = run_branching_dominator(&kernel, lambda, t, DEFAULT_POPULATION_CAP, seed).unwrap();
        for (j, &a) in probes.iter().enumerate() {
            influence[j] += z.sites.contains(&Site(vec![a])) as u64;
            branching[j] += b.sites.contains(&Site(vec![a])) as u64;
        }
    }
    let n = samples as f64;
    for (j, &a) in probes.iter().enumerate() {
        let pi = influence[j] as f64 / n;
        let pb = branching[j] as f64 / n;
        let sigma = ((pi * (1.0 - pi) + pb * (1.0 - pb)) / n).sqrt();
        assert!(pi <= pb + 3.0 * sigma, "site {a}: {pi} > {pb}");
    }
}

#[test]
fn color_blind_two_color_law_matches_sitewise() {
    let kernel = JumpKernel::nearest_neighbor_1d(0.5).unwrap();
    let lambda = 1.0;
    let w = BoxRegion::new(1, 1);
    let samples = 100_000u64;
    let key = |c: &SiteConfiguration| (c.counts().to_vec(), c.sleeping().to_vec(), format!("{:?}", c.exited()));
    let mut two = BTreeMap::new();
    let mut one = BTreeMap::new();
    let blue = BTreeMap::from([(Site(vec![0]), 1u32)]);
    let red = BTreeMap::from([(Site(vec![-1]), 1u32), (Site(vec![1]), 1)]);
    for k in 0..samples {
        let setup = TwoColorSetup {
            kernel: kernel.clone(),
            lambda,
            seed: replica_seed(5, &[k, 0]),
            u: BoxRegion::new(0, 1),
            freeze: Some(w),
            clock_seed: None,
        };
        let run = run_two_color(&setup, &blue, &red, f64::INFINITY);
        assert!(run.absorbed);
        *two.entry(key(&run.projection(w))).or_insert(0u64) += 1;
        let c = SiteConfiguration::from_counts(w, vec![1, 1, 1]).unwrap();
        let tape = RandomTape::new(&kernel, lambda, w, replica_seed(5, &[k, 1]));
        let s = stabilize(&kernel, c, tape, Strategy::GreedySweep, DEFAULT_TOPPLING_BUDGET).unwrap();
        *one.entry(key(&s.final_config)).or_insert(0u64) += 1;
    }
    let tv = tv_distance(&two, &one);
    assert!(tv <= 0.02, "TV {tv}");
}

#[test]
fn exits_from_u_only_accumulate() {
    let kernel = JumpKernel::nearest_neighbor_1d(0.6).unwrap();
    for seed in 0..50 {
        let setup = TwoColorSetup {
            kernel: kernel.clone(),
            lambda: 0.5,
            seed,
            u: BoxRegion::new(2, 1),
            freeze: None,
            clock_seed: None,
        };
        let blue: BTreeMap<Site, u32> = BoxRegion::new(2, 1).sites().map(|x| (x, 1)).collect();
        let red = BTreeMap::from([(Site(vec![3]), 2u32), (Site(vec![-4]), 1)]);
        let run = run_two_color(&setup, &blue, &red, 10.0);
        let mut last = 0;
        for t in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 10.0] {
            let m = run.m_u_at(t);
            assert!(m >= last);
            last = m;
        }
        assert_eq!(last, run.m_u);
        assert!(run.blue.keys().all(|x| setup.u.contains(x)));
    }
}

#[test]
fn branching_mean_matches_linear_growth() {
    let kernel = JumpKernel::nearest_neighbor_1d(0.5).unwrap();
    for (lambda, t) in [(0.5, 0.5), (0.5, 1.0), (1.0, 0.5), (1.0, 1.0)] {
        let mut m = Moments::new();
        for k in 0..10_000 {
            let run = run_branching_dominator(&kernel, lambda, t, DEFAULT_POPULATION_CAP, replica_seed(8, &[k])).unwrap();
            m.push(run.population() as f64);
        }
        let (i, j) = arw_oracle::branching_mean(lambda, t);
        assert!((m.mean - (i + j)).abs() <= 3.0 * m.std_error(), "λ={lambda} t={t}: {} vs {}", m.mean, i + j);
    }
}

#[test]
fn branching_population_grows_with_time_and_lambda() {
    let kernel = JumpKernel::simple_symmetric(2).unwrap();
    let times = [0.25, 0.5, 0.75, 1.0];
    let lambdas = [0.25, 0.5, 1.0];
    let mut grid = Vec::new();
    for &lambda in &lambdas {
        let mut per_t = vec![Moments::new(); times.len()];
        for k in 0..10_000 {
            let run = run_branching_dominator(&kernel, lambda, 1.0, DEFAULT_POPULATION_CAP, replica_seed(9, &[k])).unwrap();
            let pops: Vec<u64> = times.iter().map(|&t| population_at(&run, t)).collect();
            // one run gives the whole path, so growth in t is exact
            assert!(pops.windows(2).all(|w| w[0] <= w[1]));
            for (m, p) in per_t.iter_mut().zip(pops) {
                m.push(p as f64);
            }
        }
        grid.push(per_t);
    }
    for t in 0..times.len() {
        for l in 1..lambdas.len() {
            let (lo, hi) = (&grid[l - 1][t], &grid[l][t]);
            let sigma = (lo.std_error().powi(2) + hi.std_error().powi(2)).sqrt();
            assert!(hi.mean + 3.0 * sigma >= lo.mean, "t={} λ={}", times[t], lambdas[l]);
        }
    }
}
