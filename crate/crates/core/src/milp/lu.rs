//! Sparse LU factorization of a simplex basis with product-form updates.
//!
//! The basis is a list of columns (one per basis position). Factorization is
//! left-looking: columns are processed singletons first, then by increasing
//! count, and each pivot is chosen by threshold partial pivoting with a
//! preference for sparse rows. Basis changes append eta columns that are
//! applied after the LU solve until the next refactorization.

use alloc::vec;
use alloc::vec::Vec;

const PIVOT_THRESHOLD: f64 = 0.1;
const SINGULAR_TOL: f64 = 1e-11;
const DROP_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct LuFactor {
    m: usize,
    // step k pivots row `pivot_row[k]` on basis position `pivot_pos[k]`
    pivot_row: Vec<usize>,
    pivot_pos: Vec<usize>,
    u_diag: Vec<f64>,
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    // steps with a non-empty L column, in pivot order
    l_steps: Vec<usize>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    etas: Vec<Eta>,
    work: Vec<f64>,
}

/// Positions whose columns were linearly dependent, each paired with an
/// unpivoted row whose unit column can replace it.
pub(crate) type Deficiency = Vec<(usize, usize)>;

impl LuFactor {
    pub fn eta_count(&self) -> usize {
        self.etas.len()
    }

    /// Factor the basis given as sparse columns `(row, value)`. On rank
    /// deficiency returns the dependent positions with replacement rows.
    pub fn factor(&mut self, m: usize, columns: &[&[(usize, f64)]]) -> Result<(), Deficiency> {
        debug_assert_eq!(columns.len(), m);
        self.m = m;
        self.pivot_row.clear();
        self.pivot_pos.clear();
        self.u_diag.clear();
        self.u_start.clear();
        self.u_idx.clear();
        self.u_val.clear();
        self.l_steps.clear();
        self.l_start.clear();
        self.l_idx.clear();
        self.l_val.clear();
        self.etas.clear();
        self.u_start.push(0);
        self.l_start.push(0);
        self.work.clear();
        self.work.resize(m, 0.0);

        let mut row_count = vec![0usize; m];
        for col in columns {
            for &(r, _) in col.iter() {
                row_count[r] += 1;
            }
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&p| (columns[p].len(), p));

        let mut row_step = vec![usize::MAX; m];
        let mut pattern: Vec<usize> = Vec::new();
        let mut in_pattern = vec![false; m];
        let mut dependent: Vec<usize> = Vec::new();

        for &pos in &order {
            let x = &mut self.work;
            pattern.clear();
            for &(r, v) in columns[pos] {
                x[r] += v;
                if !in_pattern[r] {
                    in_pattern[r] = true;
                    pattern.push(r);
                }
            }
            for (li, &step) in self.l_steps.iter().enumerate() {
                let v = x[self.pivot_row[step]];
                if v == 0.0 {
                    continue;
                }
                for e in self.l_start[li]..self.l_start[li + 1] {
                    let r = self.l_idx[e];
                    x[r] -= self.l_val[e] * v;
                    if !in_pattern[r] {
                        in_pattern[r] = true;
                        pattern.push(r);
                    }
                }
            }
            let mut max_abs = 0.0f64;
            for &r in &pattern {
                if row_step[r] == usize::MAX {
                    max_abs = max_abs.max(x[r].abs());
                }
            }
            if max_abs < SINGULAR_TOL {
                dependent.push(pos);
                for &r in &pattern {
                    x[r] = 0.0;
                    in_pattern[r] = false;
                }
                continue;
            }
            let mut pivot_r = usize::MAX;
            for &r in &pattern {
                if row_step[r] != usize::MAX || x[r].abs() < PIVOT_THRESHOLD * max_abs {
                    continue;
                }
                let better = pivot_r == usize::MAX
                    || row_count[r] < row_count[pivot_r]
                    || (row_count[r] == row_count[pivot_r]
                        && (x[r].abs() > x[pivot_r].abs() || (x[r].abs() == x[pivot_r].abs() && r < pivot_r)));
                if better {
                    pivot_r = r;
                }
            }
            let step = self.pivot_row.len();
            let piv = x[pivot_r];
            for &r in &pattern {
                let v = x[r];
                if r == pivot_r || v.abs() <= DROP_TOL {
                    continue;
                }
                if row_step[r] != usize::MAX {
                    self.u_idx.push(r);
                    self.u_val.push(v);
                }
            }
            self.u_start.push(self.u_idx.len());
            self.u_diag.push(piv);
            let l_begin = self.l_idx.len();
            for &r in &pattern {
                let v = x[r];
                if r != pivot_r && row_step[r] == usize::MAX && v.abs() > DROP_TOL {
                    self.l_idx.push(r);
                    self.l_val.push(v / piv);
                }
            }
            if self.l_idx.len() > l_begin {
                self.l_steps.push(step);
                self.l_start.push(self.l_idx.len());
            }
            row_step[pivot_r] = step;
            self.pivot_row.push(pivot_r);
            self.pivot_pos.push(pos);
            for &r in &pattern {
                x[r] = 0.0;
                in_pattern[r] = false;
            }
        }
        if dependent.is_empty() {
            return Ok(());
        }
        let free_rows: Vec<usize> = (0..m).filter(|&r| row_step[r] == usize::MAX).collect();
        Err(dependent.into_iter().zip(free_rows).collect())
    }

    /// Solve `B z = a` for a sparse right-hand side; `out` is indexed by
    /// basis position.
    pub fn ftran(&mut self, a: &[(usize, f64)], out: &mut [f64]) {
        let x = &mut self.work;
        for &(r, v) in a {
            x[r] += v;
        }
        self.ftran_work(out);
    }

    /// Solve `B z = a` for a dense right-hand side indexed by row.
    pub fn ftran_dense(&mut self, a: &[f64], out: &mut [f64]) {
        self.work.copy_from_slice(a);
        self.ftran_work(out);
    }

    fn ftran_work(&mut self, out: &mut [f64]) {
        let x = &mut self.work;
        for (li, &step) in self.l_steps.iter().enumerate() {
            let v = x[self.pivot_row[step]];
            if v == 0.0 {
                continue;
            }
            for e in self.l_start[li]..self.l_start[li + 1] {
                x[self.l_idx[e]] -= self.l_val[e] * v;
            }
        }
        for k in (0..self.m).rev() {
            let r = self.pivot_row[k];
            let v = x[r];
            if v == 0.0 {
                continue;
            }
            let w = v / self.u_diag[k];
            x[r] = w;
            for e in self.u_start[k]..self.u_start[k + 1] {
                x[self.u_idx[e]] -= self.u_val[e] * w;
            }
        }
        for k in 0..self.m {
            let r = self.pivot_row[k];
            out[self.pivot_pos[k]] = x[r];
            x[r] = 0.0;
        }
        for eta in &self.etas {
            let zr = out[eta.pos];
            if zr == 0.0 {
                continue;
            }
            let zr = zr / eta.pivot;
            out[eta.pos] = zr;
            for &(i, v) in &eta.entries {
                out[i] -= v * zr;
            }
        }
    }

    /// Solve `Bᵀ y = c` where `c` is indexed by basis position; `c` is
    /// overwritten and `out` receives `y` indexed by row.
    pub fn btran(&mut self, c: &mut [f64], out: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let mut s = c[eta.pos];
            for &(i, v) in &eta.entries {
                s -= v * c[i];
            }
            c[eta.pos] = s / eta.pivot;
        }
        for k in 0..self.m {
            let mut s = c[self.pivot_pos[k]];
            for e in self.u_start[k]..self.u_start[k + 1] {
                s -= self.u_val[e] * out[self.u_idx[e]];
            }
            out[self.pivot_row[k]] = s / self.u_diag[k];
        }
        for (li, &step) in self.l_steps.iter().enumerate().rev() {
            let mut s = 0.0;
            for e in self.l_start[li]..self.l_start[li + 1] {
                s += self.l_val[e] * out[self.l_idx[e]];
            }
            out[self.pivot_row[step]] -= s;
        }
    }

    /// Record a basis change at `pos`, where `alpha = B⁻¹ a_q` is the entering
    /// column in position space.
    pub fn update(&mut self, pos: usize, alpha: &[f64]) {
        let entries = alpha
            .iter()
            .enumerate()
            .filter(|&(i, v)| i != pos && v.abs() > DROP_TOL)
            .map(|(i, &v)| (i, v))
            .collect();
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            entries,
        });
    }
}
