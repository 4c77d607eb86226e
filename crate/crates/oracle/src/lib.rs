//! Reference values computed directly from their definitions.
//!
//! Nothing here depends on the simulation crate: occupation laws come from
//! dense linear solves, clock races from closed forms, and critical values
//! from series expansions.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Law of ℓ, the number of times k ≥ 0 a nearest-neighbor walk started at
/// 0 spends in {x ≤ 0}, on the state space {−m, …, m}. Steps are −1, 0, +1
/// with probabilities `down`, `stay`, `up`. Walks that pass m are treated as
/// gone for good; walks that pass −m are dropped, so the entries sum to
/// slightly less than 1. Entry k is P(ℓ = k) for k ≤ kmax.
pub fn occupation_law(down: f64, stay: f64, up: f64, m: usize, kmax: usize) -> Vec<f64> {
    let m = m as i64;
    let n = (2 * m + 1) as usize;
    let idx = |x: i64| (x + m) as usize;
    // a[x] = P_x(ℓ = k) for the current k
    let step = |prev: &DVector<f64>, k: usize| -> DVector<f64> {
        let get_prev = |x: i64| -> f64 {
            if x > m {
                if k == 1 {
                    1.0
                } else {
                    0.0
                }
            } else if x < -m {
                0.0
            } else {
                prev[idx(x)]
            }
        };
        let mut a = DVector::zeros(n);
        // x ≤ 0: the visit at x is counted, the rest of the walk makes k − 1
        if k >= 1 {
            for x in -m..=0 {
                a[idx(x)] = down * get_prev(x - 1) + stay * get_prev(x) + up * get_prev(x + 1);
            }
        }
        // x > 0: harmonic in x with boundary values a[0] and the right end
        let size = m as usize;
        let mut mat = DMatrix::<f64>::zeros(size, size);
        let mut rhs = DVector::<f64>::zeros(size);
        for x in 1..=m {
            let r = (x - 1) as usize;
            mat[(r, r)] = 1.0 - stay;
            if x > 1 {
                mat[(r, r - 1)] = -down;
            } else {
                rhs[r] += down * a[idx(0)];
            }
            if x < m {
                mat[(r, r + 1)] = -up;
            } else if k == 0 {
                rhs[r] += up;
            }
        }
        let sol = mat.lu().solve(&rhs).expect("nonsingular system");
        for x in 1..=m {
            a[idx(x)] = sol[(x - 1) as usize];
        }
        a
    };
    let mut out = Vec::with_capacity(kmax + 1);
    let mut a = step(&DVector::zeros(n), 0);
    out.push(a[idx(0)]);
    for k in 1..=kmax {
        a = step(&a, k);
        out.push(a[idx(0)]);
    }
    out
}

/// E[(1+λ)^{-ℓ}] from an occupation law.
pub fn f_from_law(law: &[f64], lambda: f64) -> f64 {
    law.iter()
        .enumerate()
        .map(|(k, p)| p * (1.0 + lambda).powi(-(k as i32)))
        .sum()
}

/// F for the nearest-neighbor walk with P(+1) = `up`, P(−1) = 1 − `up`.
pub fn f_nearest_neighbor(up: f64, lambda: f64) -> f64 {
    f_from_law(&occupation_law(1.0 - up, 0.0, up, 60, 400), lambda)
}

/// E[M] for one particle on V_0 with p(+1) = 1: it leaves iff its first
/// instruction is a jump.
pub fn single_site_exit_mean(lambda: f64) -> f64 {
    1.0 / (1.0 + lambda)
}

/// Probability that a lone particle with p(+1) = 1 makes L jumps before its
/// first sleep mark: each jump-versus-sleep race is won with 1/(1+λ).
pub fn lone_particle_reach(lambda: f64, distance: u32) -> f64 {
    (1.0 + lambda).powi(-(distance as i32))
}

/// P(K ≤ x) for the Kolmogorov distribution.
pub fn kolmogorov_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut s = 0.0;
    for k in 1..200 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    1.0 - 2.0 * s
}

/// Asymptotic critical value of √n·D_n at level `alpha`, divided by √n.
pub fn ks_critical(alpha: f64, n: usize) -> f64 {
    let (mut lo, mut hi) = (0.2, 3.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_cdf(mid) < 1.0 - alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi / (n as f64).sqrt()
}

/// Expected (I, J) counts at time t from one I particle: the means solve
/// d/dt (i, j) = ((1+λ) i + λ j, i).
pub fn branching_mean(lambda: f64, t: f64) -> (f64, f64) {
    let a = Matrix2::new(1.0 + lambda, lambda, 1.0, 0.0);
    let v = (a * t).exp() * Vector2::new(1.0, 0.0);
    (v[0], v[1])
}

/// e^{2(1+λ)t}.
pub fn branching_bound(lambda: f64, t: f64) -> f64 {
    (2.0 * (1.0 + lambda) * t).exp()
}

/// Band of half-width `sigmas` standard errors around the mean of a site
/// average of `sites` i.i.d. Poisson(μ) counts.
pub fn poisson_average_band(mu: f64, sites: usize, sigmas: f64) -> (f64, f64) {
    let h = sigmas * (mu / sites as f64).sqrt();
    (mu - h, mu + h)
}

/// A named reference value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub name: String,
    pub description: String,
    pub value: serde_json::Value,
}

fn fixture(name: &str, description: &str, value: serde_json::Value) -> Fixture {
    Fixture {
        name: name.into(),
        description: description.into(),
        value,
    }
}

/// Every reference value used by the test suites.
pub fn all_fixtures() -> Vec<Fixture> {
    let law = occupation_law(0.25, 0.0, 0.75, 60, 400);
    let f_075: Vec<_> = [0.1, 0.2, 0.5]
        .iter()
        .map(|&l| json!({"lambda": l, "f": f_from_law(&law, l)}))
        .collect();
    let branching: Vec<_> = [(0.5, 0.5), (0.5, 1.0), (1.0, 0.5), (1.0, 1.0)]
        .iter()
        .map(|&(l, t)| {
            let (i, j) = branching_mean(l, t);
            json!({"lambda": l, "t": t, "mean_i": i, "mean_j": j, "bound": branching_bound(l, t)})
        })
        .collect();
    vec![
        fixture(
            "occupation-law-0.75",
            "P(l = k), k = 0..40, for p(+1) = 0.75 from 0, states -60..60",
            json!(law.iter().take(41).collect::<Vec<_>>()),
        ),
        fixture("f-nearest-neighbor-0.75", "F_v for p(+1) = 0.75", json!(f_075)),
        fixture(
            "f-right-walk",
            "F_v for p(+1) = 1",
            json!([0.1, 0.25, 1.0].iter().map(|&l| json!({"lambda": l, "f": 1.0 / (1.0 + l)})).collect::<Vec<_>>()),
        ),
        fixture(
            "single-site-exit-mean",
            "E[M] for one particle on V_0 with p(+1) = 1",
            json!([0.1, 0.5, 1.0].iter().map(|&l| json!({"lambda": l, "mean": single_site_exit_mean(l)})).collect::<Vec<_>>()),
        ),
        fixture(
            "lone-particle-reach",
            "P(reach L) for one particle with p(+1) = 1, lambda = 1",
            json!((0..=4).map(|l| json!({"distance": l, "p": lone_particle_reach(1.0, l)})).collect::<Vec<_>>()),
        ),
        fixture(
            "ks-critical-99",
            "99% Kolmogorov-Smirnov critical value for n = 10^4",
            json!({"n": 10000, "critical": ks_critical(0.01, 10_000)}),
        ),
        fixture("branching-mean", "mean I/J populations and the growth bound", json!(branching)),
        fixture(
            "poisson-average-v8-d2",
            "3-sigma band of the site average of Poisson(0.5) over V_8 in d = 2",
            json!(poisson_average_band(0.5, 289, 3.0)),
        ),
    ]
}
