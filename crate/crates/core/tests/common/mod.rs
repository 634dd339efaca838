//! Shared generators and brute-force oracles for the integration tests.
#![allow(dead_code)]

use gridswitch::case::{BranchRecord, CaseDocument};
use gridswitch::{Bus, Generator, Network};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random connected network: a random spanning tree plus up to `n` extra
/// branches (parallels allowed), reactances in [0.01, 0.5] pu.
pub fn random_network(rng: &mut ChaCha8Rng, min_bus: usize, max_bus: usize) -> Network {
    let n = rng.gen_range(min_bus..=max_bus);
    let mut branches = Vec::new();
    let record = |rng: &mut ChaCha8Rng, from: usize, to: usize| BranchRecord {
        from,
        to,
        x_pu: rng.gen_range(0.01..=0.5),
        rating_mw: rng.gen_range(30.0..300.0),
        in_service: true,
    };
    for i in 2..=n {
        let j = rng.gen_range(1..i);
        branches.push(record(rng, j, i));
    }
    for _ in 0..rng.gen_range(0..=n) {
        let f = rng.gen_range(1..=n);
        let t = rng.gen_range(1..=n);
        if f != t {
            branches.push(record(rng, f, t));
        }
    }
    branches.shuffle(rng);
    let buses: Vec<Bus> = (1..=n)
        .map(|id| Bus { id, load_mw: if rng.gen_bool(0.6) { rng.gen_range(0.0..100.0) } else { 0.0 } })
        .collect();
    let total_load: f64 = buses.iter().map(|b| b.load_mw).sum();
    let mut generators: Vec<Generator> = (1..=rng.gen_range(1..=(n / 3).max(1)))
        .map(|id| Generator {
            id,
            bus: rng.gen_range(1..=n),
            pmin_mw: 0.0,
            pmax_mw: rng.gen_range(50.0..300.0),
            cost_per_mwh: rng.gen_range(1.0..50.0),
        })
        .collect();
    let cap: f64 = generators.iter().map(|g| g.pmax_mw).sum();
    if cap < 1.2 * total_load {
        generators[0].pmax_mw += 1.2 * total_load - cap;
    }
    let slack = generators[0].bus;
    Network::from_document(CaseDocument { base_mva: 100.0, slack_bus: slack, buses, branches, generators })
        .expect("generated network is valid")
}

/// Random injections summing to zero, in bus order.
pub fn random_injections(rng: &mut ChaCha8Rng, net: &Network) -> Vec<f64> {
    let mut p: Vec<f64> = (0..net.buses().len()).map(|_| rng.gen_range(-100.0..100.0)).collect();
    let s: f64 = p.iter().sum();
    p[net.slack_index()] -= s;
    p
}

/// `min c'x, A x = b, l <= x <= u`.
#[derive(Clone, Debug)]
pub struct SmallLp {
    pub c: Vec<f64>,
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
}

/// Random bounded LP with at most `max_vars` variables and fewer rows than
/// columns. Most are feasible by construction; roughly one in six gets a
/// random right-hand side that may be infeasible.
pub fn random_lp(rng: &mut ChaCha8Rng, max_vars: usize) -> SmallLp {
    let n = rng.gen_range(1..=max_vars);
    let m = rng.gen_range(0..n.min(4));
    let bounds: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let l = rng.gen_range(-5.0..5.0);
            (l, l + rng.gen_range(0.0..10.0))
        })
        .collect();
    // small integers keep degenerate ties and exact-zero entries common
    let a = DMatrix::from_fn(m, n, |_, _| f64::from(rng.gen_range(-3i32..=3)));
    let c: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(-5i32..=5))).collect();
    let b = if rng.gen_ratio(1, 6) {
        (0..m).map(|_| rng.gen_range(-20.0..20.0)).collect()
    } else {
        let x0 = DVector::from_iterator(n, bounds.iter().map(|&(l, u)| rng.gen_range(l..=u)));
        (&a * x0).iter().copied().collect()
    };
    SmallLp { c, a, b, bounds }
}

/// Optimum by enumerating every basic solution: choose a row basis among the
/// columns, fix the rest at a bound, solve, keep the feasible points.
/// Returns `None` when no vertex is feasible.
pub fn vertex_oracle(lp: &SmallLp) -> Option<(f64, Vec<f64>)> {
    let (m, n) = lp.a.shape();
    // drop dependent rows so every vertex has exactly `rank` basic columns
    let rank = if m == 0 { 0 } else { lp.a.rank(1e-9) };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for basic in subsets(n, rank) {
        let nonbasic: Vec<usize> = (0..n).filter(|j| !basic.contains(j)).collect();
        for mask in 0..(1u32 << nonbasic.len()) {
            let mut x = vec![0.0; n];
            for (k, &j) in nonbasic.iter().enumerate() {
                x[j] = if mask >> k & 1 == 1 { lp.bounds[j].1 } else { lp.bounds[j].0 };
            }
            if rank > 0 {
                let ab = lp.a.select_columns(&basic);
                let mut rhs = DVector::from_column_slice(&lp.b);
                for &j in &nonbasic {
                    rhs -= lp.a.column(j) * x[j];
                }
                // least squares on the full row set, then verify the residual
                let Some(sol) = ab.clone().svd(true, true).solve(&rhs, 1e-12).ok() else { continue };
                if (&ab * &sol - &rhs).amax() > 1e-7 || ab.rank(1e-9) < rank {
                    continue;
                }
                for (k, &j) in basic.iter().enumerate() {
                    x[j] = sol[k];
                }
            } else if m > 0 {
                let ax = &lp.a * DVector::from_column_slice(&x);
                if (0..m).any(|i| (ax[i] - lp.b[i]).abs() > 1e-7) {
                    continue;
                }
            }
            if x.iter().zip(&lp.bounds).any(|(&v, &(l, u))| v < l - 1e-7 || v > u + 1e-7) {
                continue;
            }
            let obj: f64 = lp.c.iter().zip(&x).map(|(c, v)| c * v).sum();
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, x));
            }
        }
    }
    best
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in start..n {
            cur.push(j);
            go(j + 1, n, k, cur, out);
            cur.pop();
        }
    }
    go(0, n, k, &mut cur, &mut out);
    out
}
