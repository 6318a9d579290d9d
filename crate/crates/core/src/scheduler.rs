//! Stochastic sliding-window charge/discharge scheduling.
//!
//! One window is a MILP over `w` periods and `|S|` demand scenarios sharing
//! a single dispatch plan:
//!
//! * per period `i`: dispatch `P_i ∈ [-p_d, p_c]`, charge indicator `S_i`,
//!   product `Ax_i = S_i·P_i` (six big-M rows) and SOC `X_i` with
//!   `X_i = X_{i-1} + (η_c - 1/η_d)·Ax_i + P_i/η_d`;
//! * per period and scenario: imbalance `Im = Sp - D̃m - P`, its absolute
//!   value `U ≥ ±Im`, and the tariff segments `Z_k` with `Im = Σ Z_k`.
//!
//! Segments fill from the origin outwards: a saturation binary per inner
//! segment lets the next one open, and a side binary keeps shortage and
//! surplus segments from being active together. The objective is
//! `Σ_s Pr(s) Σ_i [c0·U - c1·Σ_k PS_k·Z_k]`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::milp::{self, BnbOptions, LinearProgram, MilpError, MilpProblem, MilpSolution, Relation, Status};
use crate::scengen::ScenarioSet;
use crate::tariff::{Segment, Side};
use crate::{BatterySpec, ImbalanceTariff};

pub const DEFAULT_C0: f64 = 0.1;
pub const DEFAULT_C1: f64 = 1.0;

/// Extra room (kWh) left on tightened outer-segment widths.
const WIDTH_MARGIN: f64 = 1.0;
const SOC_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("invalid window input: {0}")]
    InvalidInput(String),
    #[error("window at period {t} is infeasible ({status:?})")]
    Infeasible { t: usize, status: Status },
    #[error("solver failed at period {t}: {source}")]
    Solver { t: usize, source: MilpError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowInput {
    /// Current period index (for diagnostics and seeding).
    pub t: usize,
    /// Contracted supply `Sp_i` for `i = t..t+w-1`.
    pub contracted: Vec<f64>,
    pub scenarios: ScenarioSet,
    /// Aggregated battery.
    pub battery: BatterySpec,
    /// SOC before period `t` (kWh).
    pub soc_now: f64,
    pub tariff: ImbalanceTariff,
    pub c0: f64,
    pub c1: f64,
}

impl WindowInput {
    pub fn window(&self) -> usize {
        self.contracted.len()
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        let bad = |m: String| Err(ScheduleError::InvalidInput(m));
        let w = self.window();
        if w == 0 {
            return bad("window must contain at least one period".into());
        }
        if self.scenarios.window() != w || self.scenarios.perturbations().iter().any(|p| p.len() != w) {
            return bad(format!("scenario window length differs from contract window {w}"));
        }
        if self.scenarios.is_empty() {
            return bad("need at least one scenario".into());
        }
        if self.contracted.iter().any(|v| !v.is_finite()) || self.scenarios.baseline().iter().any(|v| !v.is_finite()) {
            return bad("contract and forecast values must be finite".into());
        }
        if !(self.c0 >= 0.0 && self.c1 >= 0.0 && self.c0.is_finite() && self.c1.is_finite()) {
            return bad(format!("weights must be finite and >= 0 (c0={}, c1={})", self.c0, self.c1));
        }
        if let Err(e) = self.battery.validate() {
            return bad(format!("{e}"));
        }
        let (lo, hi) = (self.battery.soc_min(), self.battery.soc_max());
        if !(self.soc_now >= lo - SOC_TOL && self.soc_now <= hi + SOC_TOL) {
            return bad(format!("initial SOC {} outside [{lo}, {hi}]", self.soc_now));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerOptions {
    /// Relax the segment binaries to `[0, 1]`. The tariff is convex, so the
    /// relaxation has the same optimum; integral indicators are rebuilt from
    /// the segment values afterwards. Only the charge indicators are branched.
    pub relax_segment_binaries: bool,
    pub bnb: BnbOptions,
}

impl Default for SchedulerOptions {
    fn default() -> Self {
        Self {
            relax_segment_binaries: true,
            bnb: BnbOptions::default(),
        }
    }
}

/// Variable indices of a window problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowLayout {
    pub window: usize,
    pub scenarios: usize,
    pub p: Vec<usize>,
    pub s: Vec<usize>,
    pub ax: Vec<usize>,
    pub x: Vec<usize>,
    /// Indexed by `i * scenarios + s` from here on.
    pub im: Vec<usize>,
    pub u: Vec<usize>,
    /// Segment variables in tariff price order.
    pub z: Vec<Vec<usize>>,
    /// Shortage saturation binaries (innermost first), then surplus ones,
    /// then the side binary (1 = surplus half active).
    pub y: Vec<Vec<usize>>,
}

impl WindowLayout {
    pub fn cell(&self, i: usize, s: usize) -> usize {
        i * self.scenarios + s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowProblem {
    pub milp: MilpProblem,
    pub layout: WindowLayout,
}

/// First-period dispatch and a summary of the window solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchDecision {
    /// Energy moved in period `t` (+ charge, − discharge), kWh.
    pub p_first: f64,
    pub soc_next: f64,
    pub expected_objective: f64,
    /// `Im_{t,s}` at the solution, per scenario.
    pub per_scenario_imbalance: Vec<f64>,
    /// Planned dispatch for the whole window.
    pub plan: Vec<f64>,
    pub nodes: usize,
    pub lp_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolvedWindow {
    pub decision: DispatchDecision,
    pub problem: WindowProblem,
    pub solution: MilpSolution,
}

fn segment_widths(segs: &[Segment], side: Side, reach: f64) -> Vec<(usize, f64)> {
    // (index in price order, width), innermost first, outermost tightened
    let mut out: Vec<(usize, f64)> = segs
        .iter()
        .enumerate()
        .filter(|(_, s)| s.side == side)
        .map(|(k, s)| (k, s.width))
        .collect();
    out.sort_by_key(|&(k, _)| segs[k].depth);
    let inner: f64 = out[..out.len() - 1].iter().map(|&(_, w)| w).sum();
    let last = out.len() - 1;
    let needed = (reach - inner).max(0.0) + WIDTH_MARGIN;
    out[last].1 = out[last].1.min(needed);
    out
}

/// Assemble the window MILP.
pub fn build_problem(input: &WindowInput, opts: &SchedulerOptions) -> Result<WindowProblem, ScheduleError> {
    input.validate()?;
    let w = input.window();
    let ns = input.scenarios.len();
    let b = &input.battery;
    let (pc, pd) = (b.power_charge_kw, b.power_discharge_kw);
    let (eta_c, eta_d) = (b.eta_charge, b.eta_discharge);
    let segs = input.tariff.segments();
    let half = input.tariff.half();
    let mut milp = MilpProblem::default();
    let mut layout = WindowLayout {
        window: w,
        scenarios: ns,
        p: Vec::with_capacity(w),
        s: Vec::with_capacity(w),
        ax: Vec::with_capacity(w),
        x: Vec::with_capacity(w),
        im: Vec::with_capacity(w * ns),
        u: Vec::with_capacity(w * ns),
        z: Vec::with_capacity(w * ns),
        y: Vec::with_capacity(w * ns),
    };

    for i in 0..w {
        let lp = &mut milp.lp;
        let p = lp.add_named_var(format!("P_{i}"), 0.0, -pd, pc);
        // Ax = max(P, 0) on integral points; the bounds and the `Ax >= P` row
        // below keep the relaxation from discharging with charge efficiency.
        let ax = lp.add_named_var(format!("Ax_{i}"), 0.0, 0.0, pc);
        let x = lp.add_named_var(format!("X_{i}"), 0.0, b.soc_min(), b.soc_max());
        let s = milp.add_binary(0.0);
        milp.lp.set_var_name(s, format!("S_{i}"));
        layout.p.push(p);
        layout.s.push(s);
        layout.ax.push(ax);
        layout.x.push(x);
    }
    let lp = &mut milp.lp;
    for i in 0..w {
        let (p, s, ax, x) = (layout.p[i], layout.s[i], layout.ax[i], layout.x[i]);
        // SOC recursion
        let mut row = vec![(x, 1.0), (ax, -(eta_c - 1.0 / eta_d)), (p, -1.0 / eta_d)];
        let rhs = if i == 0 {
            input.soc_now.clamp(b.soc_min(), b.soc_max())
        } else {
            row.push((layout.x[i - 1], -1.0));
            0.0
        };
        let r = lp.add_constraint(row, Relation::Eq, rhs);
        lp.set_row_name(r, format!("soc_{i}"));
        // S = 1 iff P >= 0, Ax = S·P
        let rows = [
            (vec![(s, pd), (p, -1.0)], pd),
            (vec![(s, -pc), (p, 1.0)], 0.0),
            (vec![(s, pd), (ax, 1.0), (p, -1.0)], pd),
            (vec![(s, pd), (ax, -1.0), (p, 1.0)], pd),
            (vec![(s, -pc), (ax, 1.0)], 0.0),
            (vec![(s, -pc), (ax, -1.0)], 0.0),
        ];
        for (k, (coeffs, rhs)) in rows.into_iter().enumerate() {
            let r = lp.add_constraint(coeffs, Relation::Le, rhs);
            lp.set_row_name(r, format!("mld{}_{i}", k + 1));
        }
        let r = lp.add_constraint(vec![(ax, 1.0), (p, -1.0)], Relation::Ge, 0.0);
        lp.set_row_name(r, format!("pos_{i}"));
    }

    for i in 0..w {
        for sc in 0..ns {
            let prob = input.scenarios.probability(sc);
            let dm = input.scenarios.demand(sc, i);
            let base = input.contracted[i] - dm;
            let short_reach = (pc - base).max(0.0);
            let surplus_reach = (base + pd).max(0.0);
            let lp = &mut milp.lp;
            let im = lp.add_named_var(format!("Im_{i}_{sc}"), 0.0, f64::NEG_INFINITY, f64::INFINITY);
            let u = lp.add_named_var(format!("U_{i}_{sc}"), prob * input.c0, 0.0, f64::INFINITY);
            let mut z = vec![0usize; segs.len()];
            let shortage = segment_widths(&segs, Side::Shortage, short_reach);
            let surplus = segment_widths(&segs, Side::Surplus, surplus_reach);
            for &(k, width) in &shortage {
                z[k] = lp.add_named_var(
                    format!("Z_{i}_{sc}_{}", k + 1),
                    prob * input.c1 * segs[k].cost_coefficient(),
                    -width,
                    0.0,
                );
            }
            for &(k, width) in &surplus {
                z[k] = lp.add_named_var(
                    format!("Z_{i}_{sc}_{}", k + 1),
                    prob * input.c1 * segs[k].cost_coefficient(),
                    0.0,
                    width,
                );
            }
            let p = layout.p[i];
            let r = lp.add_constraint(vec![(im, 1.0), (p, 1.0)], Relation::Eq, base);
            lp.set_row_name(r, format!("imb_{i}_{sc}"));
            let mut row = vec![(im, 1.0)];
            row.extend(z.iter().map(|&zk| (zk, -1.0)));
            let r = lp.add_constraint(row, Relation::Eq, 0.0);
            lp.set_row_name(r, format!("seg_{i}_{sc}"));
            lp.add_constraint(vec![(u, 1.0), (im, -1.0)], Relation::Ge, 0.0);
            lp.add_constraint(vec![(u, 1.0), (im, 1.0)], Relation::Ge, 0.0);

            let mut ys = Vec::with_capacity(2 * half - 1);
            for (side, widths) in [(Side::Shortage, &shortage), (Side::Surplus, &surplus)] {
                let sign = if side == Side::Shortage { -1.0 } else { 1.0 };
                for d in 0..half - 1 {
                    let y = milp.add_binary(0.0);
                    let tag = if side == Side::Shortage { "n" } else { "p" };
                    milp.lp.set_var_name(y, format!("Y_{i}_{sc}_{tag}{d}"));
                    let (k_in, w_in) = widths[d];
                    let (k_out, w_out) = widths[d + 1];
                    // inner saturated when y = 1: sign·Z_in >= w_in·y
                    milp.lp
                        .add_constraint(vec![(z[k_in], sign), (y, -w_in)], Relation::Ge, 0.0);
                    // outer open only when y = 1: sign·Z_out <= w_out·y
                    milp.lp
                        .add_constraint(vec![(z[k_out], sign), (y, -w_out)], Relation::Le, 0.0);
                    ys.push(y);
                }
            }
            let side = milp.add_binary(0.0);
            milp.lp.set_var_name(side, format!("Y_{i}_{sc}_side"));
            let (kp, wp) = surplus[0];
            let (kn, wn) = shortage[0];
            milp.lp
                .add_constraint(vec![(z[kp], 1.0), (side, -wp)], Relation::Le, 0.0);
            milp.lp
                .add_constraint(vec![(z[kn], 1.0), (side, -wn)], Relation::Ge, -wn);
            ys.push(side);

            layout.im.push(im);
            layout.u.push(u);
            layout.z.push(z);
            layout.y.push(ys);
        }
    }

    if opts.relax_segment_binaries {
        let keep: Vec<usize> = layout.s.clone();
        let mut relaxed = MilpProblem::new(milp.lp.clone());
        for j in keep {
            relaxed.mark_binary(j);
        }
        milp = relaxed;
    }
    Ok(WindowProblem { milp, layout })
}

/// Build, solve and extract the first-period dispatch.
pub fn solve_window(input: &WindowInput, opts: &SchedulerOptions) -> Result<SolvedWindow, ScheduleError> {
    let problem = build_problem(input, opts)?;
    let mut solution =
        milp::solve_milp(&problem.milp, &opts.bnb).map_err(|source| ScheduleError::Solver { t: input.t, source })?;
    if solution.x.is_empty() {
        return Err(ScheduleError::Infeasible {
            t: input.t,
            status: solution.status,
        });
    }
    if opts.relax_segment_binaries {
        canonical_segments(input, &problem.layout, &mut solution.x);
    }
    let b = &input.battery;
    let lay = &problem.layout;
    let plan: Vec<f64> = lay
        .p
        .iter()
        .map(|&j| snap(solution.x[j]).clamp(-b.power_discharge_kw, b.power_charge_kw))
        .collect();
    let p_first = plan[0];
    let soc_next = b
        .step(input.soc_now, p_first)
        .clamp(b.soc_min(), b.soc_max());
    let per_scenario_imbalance = (0..lay.scenarios)
        .map(|s| solution.x[lay.im[lay.cell(0, s)]])
        .collect();
    let decision = DispatchDecision {
        p_first,
        soc_next,
        expected_objective: solution.objective,
        per_scenario_imbalance,
        plan,
        nodes: solution.nodes,
        lp_iterations: solution.lp_iterations,
    };
    Ok(SolvedWindow {
        decision,
        problem,
        solution,
    })
}

/// Rewrite every cell's segments as the inside-out fill of its imbalance and
/// set the segment binaries to match. For a convex tariff this fill is the
/// cheapest decomposition, so an optimal relaxed solution keeps its cost.
fn canonical_segments(input: &WindowInput, lay: &WindowLayout, x: &mut [f64]) {
    let segs = input.tariff.segments();
    let half = input.tariff.half();
    for c in 0..lay.im.len() {
        let im = x[lay.im[c]];
        let z = &lay.z[c];
        let y = &lay.y[c];
        let mut rest = im.abs();
        for d in 0..half {
            let k = if im < 0.0 { half - 1 - d } else { half + d };
            let other = if im < 0.0 { half + d } else { half - 1 - d };
            let take = if d + 1 == half { rest } else { rest.min(segs[k].width) };
            rest -= take;
            x[z[k]] = if im < 0.0 { -take } else { take };
            x[z[other]] = 0.0;
            if d + 1 < half {
                let full = take >= segs[k].width;
                let yi = if im < 0.0 { d } else { half - 1 + d };
                x[y[yi]] = if full { 1.0 } else { 0.0 };
                let yo = if im < 0.0 { half - 1 + d } else { d };
                x[y[yo]] = 0.0;
            }
        }
        x[y[2 * (half - 1)]] = if im > 0.0 { 1.0 } else { 0.0 };
    }
}

fn snap(v: f64) -> f64 {
    if v.abs() < 1e-9 {
        0.0
    } else {
        v
    }
}

/// Problems found by [`verify_solution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Finding {
    /// Segment cost disagrees with the scalar tariff.
    CostMismatch { i: usize, s: usize, encoded: f64, oracle: f64 },
    /// Segment `k` (price order) is open while the one inside it is not full,
    /// or both halves are active.
    FillOrder { i: usize, s: usize, k: usize },
    /// `Ax_i` differs from `S_i·P_i`.
    Product { i: usize, ax: f64, expected: f64 },
    /// `Im_{i,s}` differs from `Sp_i - D̃m_{i,s} - P_i` or from `Σ_k Z_k`.
    Identity { i: usize, s: usize, residual: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub findings: Vec<Finding>,
}

impl VerificationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Check a solution against the scalar tariff, the segment fill order and
/// the product identity.
pub fn verify_solution(input: &WindowInput, problem: &WindowProblem, x: &[f64]) -> VerificationReport {
    const COST_TOL: f64 = 1e-4;
    const TOL: f64 = 1e-6;
    let lay = &problem.layout;
    let segs = input.tariff.segments();
    let half = input.tariff.half();
    let mut findings = Vec::new();
    for i in 0..lay.window {
        let (p, s, ax) = (x[lay.p[i]], x[lay.s[i]], x[lay.ax[i]]);
        let expected = libm::round(s) * p;
        if (ax - expected).abs() > TOL * (1.0 + p.abs()) {
            findings.push(Finding::Product { i, ax, expected });
        }
        for sc in 0..lay.scenarios {
            let c = lay.cell(i, sc);
            let im = x[lay.im[c]];
            let z: Vec<f64> = lay.z[c].iter().map(|&j| x[j]).collect();
            let base = input.contracted[i] - input.scenarios.demand(sc, i);
            let r1 = im - (base - p);
            let r2 = im - z.iter().sum::<f64>();
            let residual = if r1.abs() > r2.abs() { r1 } else { r2 };
            if residual.abs() > TOL * (1.0 + im.abs()) {
                findings.push(Finding::Identity { i, s: sc, residual });
            }
            let encoded: f64 = segs.iter().zip(&z).map(|(sg, zk)| sg.cost_coefficient() * zk).sum();
            let oracle = input.tariff.cost(im);
            if (encoded - oracle).abs() > COST_TOL {
                findings.push(Finding::CostMismatch {
                    i,
                    s: sc,
                    encoded,
                    oracle,
                });
            }
            // fill order per side, innermost segment at index half-1 / half
            let short_active = (0..half).any(|d| z[half - 1 - d] < -TOL);
            let surplus_active = (0..half).any(|d| z[half + d] > TOL);
            if short_active && surplus_active {
                findings.push(Finding::FillOrder { i, s: sc, k: half });
            }
            for d in 1..half {
                let (kin, kout) = (half - d, half - 1 - d);
                if z[kout] < -TOL && z[kin] > -segs[kin].width + TOL {
                    findings.push(Finding::FillOrder { i, s: sc, k: kout });
                }
                let (kin, kout) = (half + d - 1, half + d);
                if z[kout] > TOL && z[kin] < segs[kin].width - TOL {
                    findings.push(Finding::FillOrder { i, s: sc, k: kout });
                }
            }
        }
    }
    VerificationReport { findings }
}

/// `Σ_s Pr(s) Σ_i [c0·|Im⁰| + c1·IC(Im⁰)]` with `Im⁰ = Sp - D̃m`: the window
/// objective when the battery stays idle.
pub fn idle_objective(input: &WindowInput) -> f64 {
    let mut total = 0.0;
    for s in 0..input.scenarios.len() {
        let mut acc = 0.0;
        for i in 0..input.window() {
            let im = input.contracted[i] - input.scenarios.demand(s, i);
            acc += input.c0 * im.abs() + input.c1 * input.tariff.cost(im);
        }
        total += input.scenarios.probability(s) * acc;
    }
    total
}

/// Convenience wrapper: continuous relaxation of a window problem.
pub fn relaxation(problem: &WindowProblem) -> LinearProgram {
    problem.milp.relaxation()
}
