//! Dense bounded-variable primal simplex.
//!
//! Solves `min c'x  s.t.  A x = b,  l <= x <= u` with every bound finite.
//! Phase 1 starts from all variables at their lower bound plus one artificial
//! per row; both phases price with Bland's rule (lowest eligible index enters,
//! lowest-index basic variable leaves on ratio ties), so a given problem
//! always lands on the same vertex. The final point is re-solved from the
//! basis with an LU factorization and checked for primal feasibility and
//! complementary slackness before it is returned.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("problem is infeasible")]
    Infeasible,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("variable {0} has an infinite, NaN or inverted bound")]
    Bound(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Basic structural variables, one per row (`None` where an artificial
    /// remained basic on a redundant row).
    pub basis: Vec<Option<usize>>,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
}

impl LpProblem {
    pub fn solve(&self) -> Result<LpSolution, LpError> {
        solve_lp(&self.c, &self.a_eq, &self.b_eq, &self.bounds)
    }
}

const PIVOT_TOL: f64 = 1e-9;
const MAX_ITERATIONS: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq)]
enum State {
    Basic,
    Lower,
    Upper,
}

struct Tableau {
    m: usize,
    /// structural + artificial columns
    n: usize,
    t: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<State>,
    /// current value of every variable (basic entries kept in sync)
    x: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    barred: Vec<bool>,
    d: Vec<f64>,
    iterations: usize,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.n + j]
    }

    fn price(&mut self, cost: &[f64]) {
        for j in 0..self.n {
            let mut dj = cost[j];
            for i in 0..self.m {
                dj -= cost[self.basis[i]] * self.at(i, j);
            }
            self.d[j] = dj;
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.n;
        let p = self.t[r * n + q];
        for j in 0..n {
            self.t[r * n + j] /= p;
        }
        let (before, rest) = self.t.split_at_mut(r * n);
        let (row_r, after) = rest.split_at_mut(n);
        for row in before.chunks_mut(n).chain(after.chunks_mut(n)) {
            let f = row[q];
            if f != 0.0 {
                for (a, b) in row.iter_mut().zip(row_r.iter()) {
                    *a -= f * b;
                }
            }
        }
        let f = self.d[q];
        if f != 0.0 {
            for (a, b) in self.d.iter_mut().zip(row_r.iter()) {
                *a -= f * b;
            }
        }
    }

    /// Runs Bland-rule simplex iterations until no eligible entering variable remains.
    fn run(&mut self, dual_tol: f64) -> Result<(), LpError> {
        loop {
            if self.iterations >= MAX_ITERATIONS {
                return Err(LpError::Numerical("iteration limit reached".into()));
            }
            let entering = (0..self.n).find_map(|j| {
                if self.barred[j] || self.lower[j] == self.upper[j] {
                    return None;
                }
                match self.state[j] {
                    State::Lower if self.d[j] < -dual_tol => Some((j, 1.0)),
                    State::Upper if self.d[j] > dual_tol => Some((j, -1.0)),
                    _ => None,
                }
            });
            let Some((q, dir)) = entering else {
                return Ok(());
            };
            self.iterations += 1;

            let mut step = self.upper[q] - self.lower[q];
            let mut leave: Option<usize> = None;
            for i in 0..self.m {
                let alpha = dir * self.at(i, q);
                let b = self.basis[i];
                let room = if alpha > PIVOT_TOL {
                    (self.x[b] - self.lower[b]) / alpha
                } else if alpha < -PIVOT_TOL {
                    (self.upper[b] - self.x[b]) / -alpha
                } else {
                    continue;
                };
                let room = room.max(0.0);
                let tie = 1e-12 * (1.0 + step.abs().min(room.abs()));
                if room < step - tie {
                    step = room;
                    leave = Some(i);
                } else if (room - step).abs() <= tie {
                    if let Some(l) = leave {
                        if b < self.basis[l] {
                            leave = Some(i);
                        }
                    }
                    step = step.min(room);
                }
            }
            if !step.is_finite() {
                return Err(LpError::Numerical("unbounded direction".into()));
            }

            for i in 0..self.m {
                let a = self.at(i, q);
                if a != 0.0 {
                    let b = self.basis[i];
                    self.x[b] -= dir * a * step;
                }
            }
            self.x[q] += dir * step;

            match leave {
                None => {
                    self.state[q] = if dir > 0.0 { State::Upper } else { State::Lower };
                    self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                }
                Some(r) => {
                    let out = self.basis[r];
                    let to_lower = dir * self.at(r, q) > 0.0;
                    self.state[out] = if to_lower { State::Lower } else { State::Upper };
                    self.x[out] = if to_lower { self.lower[out] } else { self.upper[out] };
                    self.state[q] = State::Basic;
                    self.basis[r] = q;
                    self.pivot(r, q);
                }
            }
        }
    }
}

/// Solves `min c'x s.t. a_eq x = b_eq, bounds.0 <= x <= bounds.1`.
pub fn solve_lp(c: &[f64], a_eq: &DMatrix<f64>, b_eq: &[f64], bounds: &[(f64, f64)]) -> Result<LpSolution, LpError> {
    let nv = c.len();
    let m = b_eq.len();
    if a_eq.nrows() != m || (m > 0 && a_eq.ncols() != nv) || bounds.len() != nv {
        return Err(LpError::Dimension(format!(
            "c has {nv} entries, A is {}x{}, b has {m}, bounds has {}",
            a_eq.nrows(),
            a_eq.ncols(),
            bounds.len()
        )));
    }
    for (j, &(l, u)) in bounds.iter().enumerate() {
        if !(l.is_finite() && u.is_finite() && l <= u) {
            return Err(LpError::Bound(j));
        }
    }
    if c.iter().chain(b_eq).chain(a_eq.iter()).any(|v| !v.is_finite()) {
        return Err(LpError::Dimension("non-finite coefficient".into()));
    }

    let n = nv + m;
    let mut x: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    x.resize(n, 0.0);
    let mut sign = vec![1.0; m];
    let mut t = vec![0.0; m * n];
    for i in 0..m {
        let resid = b_eq[i] - (0..nv).map(|j| a_eq[(i, j)] * x[j]).sum::<f64>();
        sign[i] = if resid < 0.0 { -1.0 } else { 1.0 };
        for j in 0..nv {
            t[i * n + j] = sign[i] * a_eq[(i, j)];
        }
        t[i * n + nv + i] = 1.0;
        x[nv + i] = resid.abs();
    }
    let initial_infeasibility: f64 = x[nv..].iter().sum();

    let mut lower: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let mut upper: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    lower.resize(n, 0.0);
    upper.resize(n, f64::INFINITY);
    let mut state = vec![State::Lower; nv];
    state.resize(n, State::Basic);
    let mut barred = vec![false; nv];
    barred.resize(n, true);

    let mut tab =
        Tableau { m, n, t, basis: (nv..n).collect(), state, x, lower, upper, barred, d: vec![0.0; n], iterations: 0 };

    // phase 1
    let mut phase1_cost = vec![0.0; nv];
    phase1_cost.resize(n, 1.0);
    tab.price(&phase1_cost);
    tab.run(1e-11)?;
    let infeasibility: f64 = (nv..n).map(|j| tab.x[j]).sum();
    if infeasibility > 1e-9 * initial_infeasibility.max(1.0) {
        return Err(LpError::Infeasible);
    }

    // drive zero-level artificials out of the basis
    for r in 0..m {
        if tab.basis[r] < nv {
            continue;
        }
        let row_max = (0..nv).map(|j| tab.at(r, j).abs()).fold(0.0, f64::max);
        let q = (0..nv).find(|&j| tab.state[j] != State::Basic && tab.at(r, j).abs() > 1e-7 * row_max.max(1e-300));
        let art = tab.basis[r];
        match q {
            Some(q) if row_max > PIVOT_TOL => {
                tab.state[art] = State::Lower;
                tab.x[art] = 0.0;
                tab.state[q] = State::Basic;
                tab.basis[r] = q;
                tab.pivot(r, q);
            }
            _ => {} // redundant row; its artificial stays basic at zero
        }
    }
    for j in nv..n {
        tab.upper[j] = 0.0;
        if tab.state[j] != State::Basic {
            tab.x[j] = 0.0;
        }
    }

    // phase 2
    let mut cost = c.to_vec();
    cost.resize(n, 0.0);
    let cmax = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    tab.price(&cost);
    tab.run(1e-9 * cmax.max(1.0))?;

    finish(c, a_eq, b_eq, bounds, &sign, &tab)
}

/// Recomputes the basic solution by LU and verifies optimality conditions.
fn finish(
    c: &[f64],
    a_eq: &DMatrix<f64>,
    b_eq: &[f64],
    bounds: &[(f64, f64)],
    sign: &[f64],
    tab: &Tableau,
) -> Result<LpSolution, LpError> {
    let nv = c.len();
    let m = b_eq.len();
    let column = |j: usize| -> DVector<f64> {
        if j < nv {
            a_eq.column(j).into_owned()
        } else {
            let mut e = DVector::zeros(m);
            e[j - nv] = sign[j - nv];
            e
        }
    };

    let mut x: Vec<f64> = (0..nv).map(|j| tab.x[j]).collect();
    for j in 0..nv {
        if tab.state[j] != State::Basic {
            x[j] = if tab.state[j] == State::Lower { bounds[j].0 } else { bounds[j].1 };
        }
    }
    if m > 0 {
        let mut basis_mat = DMatrix::zeros(m, m);
        for (k, &j) in tab.basis.iter().enumerate() {
            basis_mat.set_column(k, &column(j));
        }
        let mut rhs = DVector::from_column_slice(b_eq);
        for (j, &xj) in x.iter().enumerate().take(nv) {
            if tab.state[j] != State::Basic && xj != 0.0 {
                rhs -= a_eq.column(j) * xj;
            }
        }
        let lu = basis_mat.clone().lu();
        let xb = lu.solve(&rhs).ok_or_else(|| LpError::Numerical("singular basis".into()))?;

        let scale = 1.0 + b_eq.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (k, &j) in tab.basis.iter().enumerate() {
            let v = xb[k];
            if j < nv {
                let (l, u) = bounds[j];
                let tol = 1e-7 * scale.max(l.abs()).max(u.abs());
                if v < l - tol || v > u + tol {
                    return Err(LpError::Numerical(format!("basic variable {j} = {v} outside [{l}, {u}]")));
                }
                x[j] = v.clamp(l, u);
            } else if v.abs() > 1e-7 * scale {
                return Err(LpError::Numerical(format!("artificial on row {} left at {v}", j - nv)));
            }
        }

        // complementary slackness: reduced costs must have the right sign
        let cb = DVector::from_iterator(m, tab.basis.iter().map(|&j| if j < nv { c[j] } else { 0.0 }));
        let y = basis_mat
            .transpose()
            .lu()
            .solve(&cb)
            .ok_or_else(|| LpError::Numerical("singular basis transpose".into()))?;
        let cmax = c.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        for j in 0..nv {
            if tab.state[j] == State::Basic || bounds[j].0 == bounds[j].1 {
                continue;
            }
            let dj = c[j] - a_eq.column(j).dot(&y);
            let tol = 1e-6 * cmax;
            let ok = match tab.state[j] {
                State::Lower => dj >= -tol,
                State::Upper => dj <= tol,
                State::Basic => true,
            };
            if !ok {
                return Err(LpError::Numerical(format!("reduced cost {dj} of variable {j} has the wrong sign")));
            }
        }
    }

    let objective = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Ok(LpSolution {
        x,
        objective,
        basis: tab.basis.iter().map(|&j| (j < nv).then_some(j)).collect(),
        iterations: tab.iterations,
    })
}
