use alloc::collections::BinaryHeap;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::simplex::{BasisSnapshot, LpStatus, Simplex};
use super::{MilpError, MilpProblem, MilpSolution, Status, INTEGRALITY_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BnbOptions {
    /// Relative optimality gap at which a node is pruned.
    pub gap_tol: f64,
    pub integrality_tol: f64,
    /// Maximum number of LP relaxations solved.
    pub node_limit: usize,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-6,
            integrality_tol: INTEGRALITY_TOL,
            node_limit: 200_000,
        }
    }
}

struct Node {
    parent: usize,
    fixings: Vec<(usize, f64)>,
    basis: Option<Rc<BasisSnapshot>>,
}

/// Heap key: lowest bound first, newest node on ties (depth-first dive).
#[derive(PartialEq)]
struct Key {
    bound: f64,
    id: usize,
}

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.id.cmp(&other.id))
    }
}

fn prunable(bound: f64, incumbent: Option<f64>, gap_tol: f64) -> bool {
    match incumbent {
        Some(inc) => bound >= inc - gap_tol * inc.abs().max(1.0),
        None => false,
    }
}

/// Best-first branch-and-bound over the binary variables of `problem`.
///
/// Branches on the fractional binary closest to 0.5 (lowest index on ties)
/// and explores the child that rounds the current value first. Each child is
/// warm started from its parent's optimal basis with the dual simplex.
pub fn solve_milp(problem: &MilpProblem, opts: &BnbOptions) -> Result<MilpSolution, MilpError> {
    problem.validate()?;
    let lp = &problem.lp;
    let binaries = problem.binaries();
    let mut simplex = Simplex::new(lp);
    let mut current = vec![f64::NAN; lp.num_vars()];

    let mut nodes: Vec<Node> = vec![Node {
        parent: usize::MAX,
        fixings: Vec::new(),
        basis: None,
    }];
    let mut heap = BinaryHeap::new();
    heap.push(Key {
        bound: f64::NEG_INFINITY,
        id: 0,
    });
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut solved = 0usize;
    let mut last_solved = usize::MAX;
    let mut hit_limit = false;

    while let Some(key) = heap.pop() {
        let inc = incumbent.as_ref().map(|i| i.0);
        if prunable(key.bound, inc, opts.gap_tol) {
            continue;
        }
        if solved >= opts.node_limit {
            heap.push(key);
            hit_limit = true;
            break;
        }
        let node = core::mem::replace(
            &mut nodes[key.id],
            Node {
                parent: usize::MAX,
                fixings: Vec::new(),
                basis: None,
            },
        );
        for &b in binaries {
            current[b] = f64::NAN;
        }
        for &(b, v) in &node.fixings {
            current[b] = v;
        }
        for &b in binaries {
            let (lo, hi) = if current[b].is_nan() {
                (0.0, 1.0)
            } else {
                (current[b], current[b])
            };
            simplex.set_bounds(b, lo, hi);
        }
        let status = if solved == 0 {
            simplex.solve_from_scratch()?
        } else {
            if node.parent != last_solved {
                if let Some(basis) = &node.basis {
                    simplex.load(basis)?;
                }
            }
            simplex.reoptimize()?
        };
        solved += 1;
        last_solved = key.id;
        match status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                return Ok(MilpSolution::without_point(
                    Status::Unbounded,
                    solved,
                    simplex.iterations(),
                ));
            }
            LpStatus::Optimal => {}
        }
        let x = simplex.primal_values();
        let obj = lp.objective_value(&x);
        if prunable(obj, inc, opts.gap_tol) {
            continue;
        }
        let mut branch: Option<(usize, f64)> = None;
        for &b in binaries {
            let v = x[b];
            let frac = (v - libm::round(v)).abs();
            if frac <= opts.integrality_tol {
                continue;
            }
            let dist = (v - 0.5).abs();
            let better = match branch {
                None => true,
                Some((bb, bv)) => dist < (bv - 0.5).abs() || (dist == (bv - 0.5).abs() && b < bb),
            };
            if better {
                branch = Some((b, v));
            }
        }
        match branch {
            None => {
                let mut xi = x;
                for &b in binaries {
                    xi[b] = libm::round(xi[b]);
                }
                let obj = lp.objective_value(&xi);
                if incumbent.as_ref().is_none_or(|i| obj < i.0) {
                    incumbent = Some((obj, xi));
                }
            }
            Some((b, v)) => {
                let near = if v >= 0.5 { 1.0 } else { 0.0 };
                let snap = Rc::new(simplex.snapshot());
                for value in [1.0 - near, near] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((b, value));
                    nodes.push(Node {
                        parent: key.id,
                        fixings,
                        basis: Some(snap.clone()),
                    });
                    heap.push(Key {
                        bound: obj,
                        id: nodes.len() - 1,
                    });
                }
            }
        }
    }

    let iterations = simplex.iterations();
    let open_bound = heap
        .iter()
        .map(|k| k.bound)
        .fold(f64::INFINITY, f64::min);
    match incumbent {
        None if hit_limit => Ok(MilpSolution::without_point(Status::NodeLimit, solved, iterations)),
        None => Ok(MilpSolution::without_point(Status::Infeasible, solved, iterations)),
        Some((objective, x)) => Ok(MilpSolution {
            status: if hit_limit { Status::NodeLimit } else { Status::Optimal },
            objective,
            x,
            row_duals: Vec::new(),
            reduced_costs: Vec::new(),
            bound: if hit_limit { open_bound.min(objective) } else { objective },
            nodes: solved,
            lp_iterations: iterations,
        }),
    }
}
