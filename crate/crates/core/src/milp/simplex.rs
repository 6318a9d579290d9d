//! Bounded-variable revised simplex (primal and dual).
//!
//! Every row `i` gets a logical variable `r_i = s_i a_i x` bounded by the
//! row's relation, so the working system is `[S A | -I] (x, r) = 0` with the
//! all-logical starting basis. `s_i` scales each row to unit max-coefficient.

use alloc::vec;
use alloc::vec::Vec;

use super::lu::LuFactor;
use super::{LinearProgram, MilpError, Relation};

const PRIMAL_TOL: f64 = 1e-8;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const STALL_LIMIT: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum VarState {
    Basic,
    Lower,
    Upper,
    Free,
}

/// Basis heading and nonbasic states, enough to warm start a later solve.
#[derive(Debug, Clone)]
pub(crate) struct BasisSnapshot {
    basis: Vec<usize>,
    state: Vec<VarState>,
}

pub(crate) struct Simplex {
    m: usize,
    n: usize,
    col_start: Vec<usize>,
    cols: Vec<(usize, f64)>,
    logical: Vec<(usize, f64)>,
    row_scale: Vec<f64>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    lu: LuFactor,
    iterations: usize,
    iteration_limit: usize,
    y: Vec<f64>,
    d: Vec<f64>,
    alpha: Vec<f64>,
    cb: Vec<f64>,
}

struct Ratio {
    theta: f64,
    leave: Option<(usize, f64, VarState)>,
}

impl Simplex {
    pub fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.num_constraints();
        let mut row_scale = vec![1.0; m];
        let mut per_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut lo = Vec::with_capacity(n + m);
        let mut hi = Vec::with_capacity(n + m);
        lo.extend_from_slice(lp.lower());
        hi.extend_from_slice(lp.upper());
        for (i, c) in lp.constraints().iter().enumerate() {
            let amax = c.coeffs.iter().fold(0.0f64, |a, &(_, v)| a.max(v.abs()));
            let s = if amax > 0.0 { 1.0 / amax } else { 1.0 };
            row_scale[i] = s;
            for &(j, v) in &c.coeffs {
                if v != 0.0 {
                    per_col[j].push((i, v * s));
                }
            }
            let b = c.rhs * s;
            let (l, h) = match c.relation {
                Relation::Le => (f64::NEG_INFINITY, b),
                Relation::Ge => (b, f64::INFINITY),
                Relation::Eq => (b, b),
            };
            lo.push(l);
            hi.push(h);
        }
        let mut col_start = Vec::with_capacity(n + 1);
        let mut cols: Vec<(usize, f64)> = Vec::new();
        col_start.push(0);
        for mut col in per_col {
            col.sort_by_key(|e| e.0);
            // merge duplicate entries of a row
            let begin = cols.len();
            for (r, v) in col {
                if cols.len() > begin && cols[cols.len() - 1].0 == r {
                    let last = cols.len() - 1;
                    cols[last].1 += v;
                } else {
                    cols.push((r, v));
                }
            }
            col_start.push(cols.len());
        }
        let mut cost = Vec::with_capacity(n + m);
        cost.extend_from_slice(lp.objective());
        cost.resize(n + m, 0.0);
        let mut s = Self {
            m,
            n,
            col_start,
            cols,
            logical: (0..m).map(|i| (i, -1.0)).collect(),
            row_scale,
            cost,
            lo,
            hi,
            x: vec![0.0; n + m],
            state: vec![VarState::Lower; n + m],
            basis: (n..n + m).collect(),
            lu: LuFactor::default(),
            iterations: 0,
            iteration_limit: 0,
            y: vec![0.0; m],
            d: vec![0.0; n + m],
            alpha: vec![0.0; m],
            cb: vec![0.0; m],
        };
        for j in 0..n {
            s.state[j] = s.default_state(j);
            s.place_nonbasic(j);
        }
        for j in n..n + m {
            s.state[j] = VarState::Basic;
        }
        s
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    fn col(&self, j: usize) -> &[(usize, f64)] {
        if j < self.n {
            &self.cols[self.col_start[j]..self.col_start[j + 1]]
        } else {
            core::slice::from_ref(&self.logical[j - self.n])
        }
    }

    fn default_state(&self, j: usize) -> VarState {
        if self.lo[j].is_finite() {
            VarState::Lower
        } else if self.hi[j].is_finite() {
            VarState::Upper
        } else {
            VarState::Free
        }
    }

    /// Put a nonbasic variable on the bound named by its state, moving it to
    /// a finite one if that bound no longer exists.
    fn place_nonbasic(&mut self, j: usize) {
        let st = match self.state[j] {
            VarState::Lower if self.lo[j].is_finite() => VarState::Lower,
            VarState::Upper if self.hi[j].is_finite() => VarState::Upper,
            _ => self.default_state(j),
        };
        self.state[j] = st;
        self.x[j] = match st {
            VarState::Lower => self.lo[j],
            VarState::Upper => self.hi[j],
            _ => 0.0,
        };
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lo[j] = lo;
        self.hi[j] = hi;
        if self.state[j] != VarState::Basic {
            self.place_nonbasic(j);
        }
    }

    pub fn snapshot(&self) -> BasisSnapshot {
        BasisSnapshot {
            basis: self.basis.clone(),
            state: self.state.clone(),
        }
    }

    pub fn load(&mut self, snap: &BasisSnapshot) -> Result<(), MilpError> {
        self.basis.clone_from(&snap.basis);
        self.state.clone_from(&snap.state);
        for j in 0..self.n + self.m {
            if self.state[j] != VarState::Basic {
                self.place_nonbasic(j);
            }
        }
        self.refactor()
    }

    fn refactor(&mut self) -> Result<(), MilpError> {
        for _ in 0..4 {
            let n = self.n;
            let (starts, entries, logical) = (&self.col_start, &self.cols, &self.logical);
            let cols: Vec<&[(usize, f64)]> = self
                .basis
                .iter()
                .map(|&j| {
                    if j < n {
                        &entries[starts[j]..starts[j + 1]]
                    } else {
                        core::slice::from_ref(&logical[j - n])
                    }
                })
                .collect();
            let result = self.lu.factor(self.m, &cols);
            match result {
                Ok(()) => {
                    self.recompute_basics();
                    return Ok(());
                }
                Err(deficient) => {
                    for (pos, row) in deficient {
                        let out = self.basis[pos];
                        self.state[out] = VarState::Lower;
                        self.place_nonbasic(out);
                        let slack = self.n + row;
                        self.basis[pos] = slack;
                        self.state[slack] = VarState::Basic;
                    }
                }
            }
        }
        Err(MilpError::Numerical {
            what: "basis repair did not converge",
            pivot: 0.0,
        })
    }

    /// Recompute basic values from the nonbasic ones.
    fn recompute_basics(&mut self) {
        let mut v = vec![0.0; self.m];
        for j in 0..self.n + self.m {
            if self.state[j] == VarState::Basic || self.x[j] == 0.0 {
                continue;
            }
            let xj = self.x[j];
            for &(r, a) in self.col(j) {
                v[r] -= a * xj;
            }
        }
        let mut z = vec![0.0; self.m];
        self.lu.ftran_dense(&v, &mut z);
        for (p, &j) in self.basis.iter().enumerate() {
            self.x[j] = z[p];
        }
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let x = self.x[j];
        if x < self.lo[j] - PRIMAL_TOL {
            x - self.lo[j]
        } else if x > self.hi[j] + PRIMAL_TOL {
            x - self.hi[j]
        } else {
            0.0
        }
    }

    fn primal_feasible(&self) -> bool {
        self.basis.iter().all(|&j| self.infeasibility(j) == 0.0)
    }

    /// Fill `y` (row duals) and `d` (reduced costs). In phase 1 the basic
    /// costs are the gradients of the sum of infeasibilities.
    fn compute_duals(&mut self, phase1: bool) {
        for p in 0..self.m {
            let j = self.basis[p];
            self.cb[p] = if phase1 {
                let inf = self.infeasibility(j);
                if inf < 0.0 {
                    -1.0
                } else if inf > 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.cost[j]
            };
        }
        let mut cb = core::mem::take(&mut self.cb);
        self.lu.btran(&mut cb, &mut self.y);
        self.cb = cb;
        for j in 0..self.n {
            if self.state[j] == VarState::Basic {
                self.d[j] = 0.0;
                continue;
            }
            let c = if phase1 { 0.0 } else { self.cost[j] };
            let mut s = c;
            for e in self.col_start[j]..self.col_start[j + 1] {
                let (r, a) = self.cols[e];
                s -= a * self.y[r];
            }
            self.d[j] = s;
        }
        for i in 0..self.m {
            let j = self.n + i;
            self.d[j] = if self.state[j] == VarState::Basic { 0.0 } else { self.y[i] };
        }
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lo[j] == self.hi[j]
    }

    fn dual_feasible(&self) -> bool {
        (0..self.n + self.m).all(|j| {
            if self.is_fixed(j) {
                return true;
            }
            match self.state[j] {
                VarState::Basic => true,
                VarState::Lower => self.d[j] >= -DUAL_TOL,
                VarState::Upper => self.d[j] <= DUAL_TOL,
                VarState::Free => self.d[j].abs() <= DUAL_TOL,
            }
        })
    }

    fn maybe_refactor(&mut self) -> Result<(), MilpError> {
        if self.lu.eta_count() >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    fn tick(&mut self) -> Result<(), MilpError> {
        self.iterations += 1;
        if self.iterations > self.iteration_limit {
            return Err(MilpError::IterationLimit(self.iteration_limit));
        }
        Ok(())
    }

    fn set_limit(&mut self) {
        self.iteration_limit = self.iterations + 50 * (self.n + self.m) + 10_000;
    }

    /// Solve from the current basis: primal phase 1 then phase 2.
    pub fn solve_from_scratch(&mut self) -> Result<LpStatus, MilpError> {
        self.set_limit();
        self.refactor()?;
        self.primal()
    }

    /// Re-solve after bound changes, preferring the dual simplex when the
    /// basis is still dual feasible.
    pub fn reoptimize(&mut self) -> Result<LpStatus, MilpError> {
        self.set_limit();
        self.recompute_basics();
        if self.primal_feasible() {
            return self.primal();
        }
        self.compute_duals(false);
        if self.dual_feasible() {
            match self.dual()? {
                LpStatus::Optimal => {
                    self.compute_duals(false);
                    if self.dual_feasible() {
                        return Ok(LpStatus::Optimal);
                    }
                }
                // confirm with the primal phase 1 below
                LpStatus::Infeasible | LpStatus::Unbounded => {}
            }
        }
        self.primal()
    }

    fn choose_entering(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.n + self.m {
            let dj = self.d[j];
            let dir = match self.state[j] {
                VarState::Basic => continue,
                _ if self.is_fixed(j) => continue,
                VarState::Lower if dj < -DUAL_TOL => 1.0,
                VarState::Upper if dj > DUAL_TOL => -1.0,
                VarState::Free if dj.abs() > DUAL_TOL => -dj.signum(),
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            if dj.abs() > best_score {
                best_score = dj.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    /// Harris two-pass ratio test for entering variable `q` moving in
    /// direction `dir`; `alpha` holds `B⁻¹ a_q`. `None` means an unbounded ray.
    fn primal_ratio(&self, q: usize, dir: f64, phase1: bool, bland: bool) -> Option<Ratio> {
        // (position, signed distance to the blocking bound, |alpha|, target, state)
        let mut cands: Vec<(usize, f64, f64, f64, VarState)> = Vec::new();
        let mut theta_max = f64::INFINITY;
        for p in 0..self.m {
            let a = self.alpha[p];
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let j = self.basis[p];
            let x = self.x[j];
            // basic moves by -dir * a per unit step
            let moving_up = dir * a < 0.0;
            let (lo, hi) = (self.lo[j], self.hi[j]);
            let target = if moving_up {
                if phase1 && x < lo - PRIMAL_TOL {
                    Some((lo, VarState::Lower))
                } else if x <= hi + PRIMAL_TOL && hi.is_finite() {
                    Some((hi, VarState::Upper))
                } else {
                    None
                }
            } else if phase1 && x > hi + PRIMAL_TOL {
                Some((hi, VarState::Upper))
            } else if x >= lo - PRIMAL_TOL && lo.is_finite() {
                Some((lo, VarState::Lower))
            } else {
                None
            };
            if let Some((t, st)) = target {
                let dist = if moving_up { t - x } else { x - t };
                theta_max = theta_max.min((dist + PRIMAL_TOL) / a.abs());
                cands.push((p, dist, a.abs(), t, st));
            }
        }
        let mut chosen: Option<(usize, f64, f64, f64, VarState)> = None;
        for &c in &cands {
            if c.1 / c.2 > theta_max {
                continue;
            }
            let better = match chosen {
                None => true,
                Some(b) if bland => self.basis[c.0] < self.basis[b.0],
                Some(b) => c.2 > b.2,
            };
            if better {
                chosen = Some(c);
            }
        }
        let range = self.hi[q] - self.lo[q];
        let pivot_theta = chosen.map(|c| (c.1 / c.2).max(0.0));
        match pivot_theta {
            Some(t) if !(range.is_finite() && range <= t) => Some(Ratio {
                theta: t,
                leave: chosen.map(|c| (c.0, c.3, c.4)),
            }),
            _ if range.is_finite() => Some(Ratio {
                theta: range,
                leave: None,
            }),
            _ => None,
        }
    }

    fn ftran_column(&mut self, q: usize) {
        let mut alpha = core::mem::take(&mut self.alpha);
        let col: Vec<(usize, f64)> = self.col(q).to_vec();
        self.lu.ftran(&col, &mut alpha);
        self.alpha = alpha;
    }

    fn pivot(&mut self, q: usize, step: f64, leave: Option<(usize, f64, VarState)>) {
        for p in 0..self.m {
            let a = self.alpha[p];
            if a != 0.0 {
                let j = self.basis[p];
                self.x[j] -= step * a;
            }
        }
        self.x[q] += step;
        match leave {
            None => {
                // bound flip
                self.state[q] = if self.state[q] == VarState::Lower {
                    VarState::Upper
                } else {
                    VarState::Lower
                };
                self.place_nonbasic(q);
            }
            Some((p, target, st)) => {
                let out = self.basis[p];
                self.x[out] = target;
                self.state[out] = st;
                self.basis[p] = q;
                self.state[q] = VarState::Basic;
                let alpha = core::mem::take(&mut self.alpha);
                self.lu.update(p, &alpha);
                self.alpha = alpha;
            }
        }
    }

    fn primal(&mut self) -> Result<LpStatus, MilpError> {
        let mut degenerate = 0usize;
        let mut retried = false;
        loop {
            self.maybe_refactor()?;
            let phase1 = !self.primal_feasible();
            self.compute_duals(phase1);
            let bland = degenerate > STALL_LIMIT;
            let Some((q, dir)) = self.choose_entering(bland) else {
                if phase1 {
                    return Ok(LpStatus::Infeasible);
                }
                return Ok(LpStatus::Optimal);
            };
            self.ftran_column(q);
            let Some(ratio) = self.primal_ratio(q, dir, phase1, bland) else {
                if phase1 {
                    if retried {
                        return Err(MilpError::Numerical {
                            what: "phase 1 ray",
                            pivot: 0.0,
                        });
                    }
                    retried = true;
                    self.refactor()?;
                    continue;
                }
                return Ok(LpStatus::Unbounded);
            };
            if ratio.theta <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(q, dir * ratio.theta, ratio.leave);
            self.tick()?;
        }
    }

    fn dual(&mut self) -> Result<LpStatus, MilpError> {
        let mut rho = vec![0.0; self.m];
        let mut row = vec![0.0; self.n + self.m];
        loop {
            self.maybe_refactor()?;
            let mut leave: Option<(usize, f64)> = None;
            let mut worst = 0.0;
            for p in 0..self.m {
                let inf = self.infeasibility(self.basis[p]);
                if inf.abs() > worst {
                    worst = inf.abs();
                    leave = Some((p, inf));
                }
            }
            let Some((r, delta)) = leave else {
                return Ok(LpStatus::Optimal);
            };
            self.compute_duals(false);
            let mut er = vec![0.0; self.m];
            er[r] = 1.0;
            self.lu.btran(&mut er, &mut rho);
            for j in 0..self.n + self.m {
                if self.state[j] == VarState::Basic || self.is_fixed(j) {
                    row[j] = 0.0;
                    continue;
                }
                row[j] = self.col(j).iter().map(|&(i, a)| a * rho[i]).sum();
            }
            // candidates: (j, |d_j|, |alpha_rj|)
            let mut theta_max = f64::INFINITY;
            let mut cands: Vec<(usize, f64, f64)> = Vec::new();
            for j in 0..self.n + self.m {
                let a = row[j];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let dj = self.d[j];
                let ok = match self.state[j] {
                    VarState::Lower => (delta < 0.0 && a < 0.0) || (delta > 0.0 && a > 0.0),
                    VarState::Upper => (delta < 0.0 && a > 0.0) || (delta > 0.0 && a < 0.0),
                    VarState::Free => true,
                    VarState::Basic => false,
                };
                if !ok {
                    continue;
                }
                let dist = match self.state[j] {
                    VarState::Lower => dj.max(0.0),
                    VarState::Upper => (-dj).max(0.0),
                    _ => dj.abs(),
                };
                theta_max = theta_max.min((dist + DUAL_TOL) / a.abs());
                cands.push((j, dist, a.abs()));
            }
            let mut chosen: Option<(usize, f64, f64)> = None;
            for &c in &cands {
                if c.1 / c.2 > theta_max {
                    continue;
                }
                if chosen.is_none_or(|b| c.2 > b.2) {
                    chosen = Some(c);
                }
            }
            let Some((q, _, _)) = chosen else {
                return Ok(LpStatus::Infeasible);
            };
            self.ftran_column(q);
            let arq = self.alpha[r];
            if arq.abs() <= PIVOT_TOL || (arq - row[q]).abs() > 1e-6 * (1.0 + arq.abs()) {
                if self.lu.eta_count() == 0 {
                    return Err(MilpError::Numerical {
                        what: "dual simplex pivot mismatch",
                        pivot: arq,
                    });
                }
                self.refactor()?;
                continue;
            }
            let p_var = self.basis[r];
            let (target, st) = if delta < 0.0 {
                (self.lo[p_var], VarState::Lower)
            } else {
                (self.hi[p_var], VarState::Upper)
            };
            let step = (self.x[p_var] - target) / arq;
            self.pivot(q, step, Some((r, target, st)));
            self.tick()?;
        }
    }

    /// Structural variable values.
    pub fn primal_values(&self) -> Vec<f64> {
        self.x[..self.n].to_vec()
    }

    /// Row duals (in the original row scaling) and structural reduced costs
    /// at the current basis.
    pub fn dual_values(&mut self) -> (Vec<f64>, Vec<f64>) {
        self.compute_duals(false);
        let duals = self.y.iter().zip(&self.row_scale).map(|(y, s)| y * s).collect();
        (duals, self.d[..self.n].to_vec())
    }
}
