//! Dense simplex for `max/min c.x  s.t.  C x <= d` with free variables.
//!
//! The LP is solved through its dual `min d.y  s.t.  C^T y = c, y >= 0`. That
//! tableau has one row per primal variable, and primal dimensions are tiny here
//! (state dimension plus one) while constraint counts grow with the controller,
//! so each pivot touches `dim * rows` entries. The primal point is read off the
//! simplex multipliers and polished by solving the active system.

use nalgebra::{DMatrix, DVector};

use crate::context::{Context, Tolerances};
use crate::error::{Error, Result};
use crate::polytope::HPolytope;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, point: Vec<f64> },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn point(&self) -> Option<&[f64]> {
        match self {
            LpOutcome::Optimal { point, .. } => Some(point),
            _ => None,
        }
    }
}

const PIVOT_EPS: f64 = 1e-10;
const COST_EPS: f64 = 1e-10;
const PHASE1_EPS: f64 = 1e-9;
const DEGENERATE_SWITCH: usize = 30;
const MAX_VIOLATION: f64 = 1e-7;

/// Optimize a linear objective over `p`.
pub fn solve_lp(objective: &[f64], p: &HPolytope, sense: Sense, ctx: &Context) -> Result<LpOutcome> {
    if objective.len() != p.dim() {
        return Err(Error::dim(format!(
            "objective has length {} but polytope lives in R^{}",
            objective.len(),
            p.dim()
        )));
    }
    ctx.stats.count_lp();
    let c: Vec<f64> = match sense {
        Sense::Maximize => objective.to_vec(),
        Sense::Minimize => objective.iter().map(|v| -v).collect(),
    };
    let out = maximize(p.dim(), p.coeffs(), p.offsets(), &c, ctx.tol())?;
    Ok(match (sense, out) {
        (Sense::Minimize, LpOutcome::Optimal { value, point }) => LpOutcome::Optimal {
            value: -value,
            point,
        },
        (_, other) => other,
    })
}

/// Row-major constraint data after dropping zero rows and scaling each row to unit inf-norm.
struct Scaled {
    rows: Vec<f64>,
    rhs: Vec<f64>,
}

fn scale_rows(dim: usize, a: &[f64], d: &[f64], tol: &Tolerances) -> Option<Scaled> {
    let mut rows = Vec::with_capacity(a.len());
    let mut rhs = Vec::with_capacity(d.len());
    for (row, &di) in a.chunks_exact(dim.max(1)).zip(d) {
        let s = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if s == 0.0 || dim == 0 {
            if di < -tol.feas {
                return None;
            }
            continue;
        }
        rows.extend(row.iter().map(|v| v / s));
        rhs.push(di / s);
    }
    Some(Scaled { rows, rhs })
}

fn maximize(dim: usize, a: &[f64], d: &[f64], c: &[f64], tol: &Tolerances) -> Result<LpOutcome> {
    let Some(sc) = scale_rows(dim, a, d, tol) else {
        return Ok(LpOutcome::Infeasible);
    };
    match dual_simplex(dim, &sc, c)? {
        DualResult::Solved(x) => {
            let value = dot(c, &x);
            Ok(LpOutcome::Optimal { value, point: x })
        }
        DualResult::DualUnbounded => Ok(LpOutcome::Infeasible),
        DualResult::DualInfeasible => {
            // Primal is infeasible or unbounded; a zero objective tells them apart.
            let zero = vec![0.0; dim];
            match dual_simplex(dim, &sc, &zero)? {
                DualResult::Solved(_) => Ok(LpOutcome::Unbounded),
                _ => Ok(LpOutcome::Infeasible),
            }
        }
    }
}

enum DualResult {
    Solved(Vec<f64>),
    DualUnbounded,
    DualInfeasible,
}

struct Tableau {
    /// Number of rows (= primal dimension).
    rows: usize,
    /// Number of dual variables `y` (= primal constraints); artificial columns follow.
    ny: usize,
    width: usize,
    /// `rows x (width + 1)`, last column is the right-hand side.
    t: Vec<f64>,
    /// Reduced costs, last entry is minus the objective value.
    obj: Vec<f64>,
    basis: Vec<usize>,
    bland: bool,
    degenerate: usize,
    iterations: usize,
}

enum Phase {
    Optimal,
    Unbounded,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, j: usize) -> f64 {
        self.t[r * (self.width + 1) + j]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.t[r * (self.width + 1) + self.width]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width + 1;
        let p = self.t[pr * w + pc];
        for j in 0..w {
            self.t[pr * w + j] /= p;
        }
        self.t[pr * w + pc] = 1.0;
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f != 0.0 {
                for j in 0..w {
                    self.t[r * w + j] -= f * self.t[pr * w + j];
                }
                self.t[r * w + pc] = 0.0;
            }
        }
        let f = self.obj[pc];
        if f != 0.0 {
            for j in 0..w {
                self.obj[j] -= f * self.t[pr * w + j];
            }
            self.obj[pc] = 0.0;
        }
        for r in 0..self.rows {
            let idx = r * w + self.width;
            if self.t[idx] < 0.0 && self.t[idx] > -PIVOT_EPS {
                self.t[idx] = 0.0;
            }
        }
        self.basis[pr] = pc;
    }

    fn set_costs(&mut self, cost: &[f64]) {
        let w = self.width + 1;
        self.obj.clear();
        self.obj.extend_from_slice(cost);
        self.obj.push(0.0);
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for j in 0..w {
                    self.obj[j] -= cb * self.t[r * w + j];
                }
            }
        }
    }

    fn entering(&self) -> Option<usize> {
        if self.bland {
            (0..self.ny).find(|&j| self.obj[j] < -COST_EPS)
        } else {
            let mut best = None;
            let mut best_val = -COST_EPS;
            for j in 0..self.ny {
                if self.obj[j] < best_val {
                    best_val = self.obj[j];
                    best = Some(j);
                }
            }
            best
        }
    }

    fn leaving(&self, e: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for r in 0..self.rows {
            let a = self.at(r, e);
            if a <= PIVOT_EPS {
                continue;
            }
            let ratio = self.rhs(r).max(0.0) / a;
            best = match best {
                None => Some((r, ratio, a)),
                Some((br, bratio, ba)) => {
                    let tie = (ratio - bratio).abs() <= 1e-12 * (1.0 + bratio.abs());
                    let better = if tie {
                        if self.bland {
                            self.basis[r] < self.basis[br]
                        } else {
                            a > ba
                        }
                    } else {
                        ratio < bratio
                    };
                    if better {
                        Some((r, ratio, a))
                    } else {
                        Some((br, bratio, ba))
                    }
                }
            };
        }
        best.map(|(r, ratio, _)| (r, ratio))
    }

    fn run(&mut self) -> Result<Phase> {
        let cap = 2000 + 50 * (self.ny + self.rows);
        loop {
            self.iterations += 1;
            if self.iterations > cap {
                return Err(Error::Solver(format!(
                    "no convergence after {cap} pivots ({} rows, {} columns)",
                    self.rows, self.ny
                )));
            }
            let Some(e) = self.entering() else {
                return Ok(Phase::Optimal);
            };
            let Some((r, ratio)) = self.leaving(e) else {
                return Ok(Phase::Unbounded);
            };
            if ratio <= 1e-12 {
                self.degenerate += 1;
                if self.degenerate > DEGENERATE_SWITCH {
                    self.bland = true;
                }
            }
            self.pivot(r, e);
        }
    }
}

fn dual_simplex(dim: usize, sc: &Scaled, c: &[f64]) -> Result<DualResult> {
    let ny = sc.rhs.len();
    let width = ny + dim;
    let cscale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cscale = if cscale > 0.0 { cscale } else { 1.0 };

    let mut t = vec![0.0; dim * (width + 1)];
    let mut flip = vec![false; dim];
    for r in 0..dim {
        flip[r] = c[r] < 0.0;
        let sgn = if flip[r] { -1.0 } else { 1.0 };
        let base = r * (width + 1);
        for i in 0..ny {
            t[base + i] = sgn * sc.rows[i * dim + r];
        }
        t[base + ny + r] = 1.0;
        t[base + width] = c[r].abs() / cscale;
    }
    let mut tab = Tableau {
        rows: dim,
        ny,
        width,
        t,
        obj: Vec::with_capacity(width + 1),
        basis: (ny..ny + dim).collect(),
        bland: false,
        degenerate: 0,
        iterations: 0,
    };

    // Phase 1: minimize the sum of artificials.
    let mut cost1 = vec![0.0; width];
    cost1[ny..].iter_mut().for_each(|v| *v = 1.0);
    tab.set_costs(&cost1);
    if -tab.obj[width] > PHASE1_EPS {
        tab.run()?;
        if -tab.obj[width] > PHASE1_EPS {
            return Ok(DualResult::DualInfeasible);
        }
    }

    // Drive artificials out of the basis where possible; rows where that fails are
    // linearly dependent and keep a zero-level artificial that can never leave.
    for r in 0..dim {
        if tab.basis[r] < ny {
            continue;
        }
        let mut best = None;
        let mut best_abs = 1e-9;
        for j in 0..ny {
            let a = tab.at(r, j).abs();
            if a > best_abs {
                best_abs = a;
                best = Some(j);
            }
        }
        if let Some(j) = best {
            tab.pivot(r, j);
        }
    }

    // Phase 2 with the real costs; artificials never re-enter (entering() scans y only).
    let mut cost2 = vec![0.0; width];
    cost2[..ny].copy_from_slice(&sc.rhs);
    tab.set_costs(&cost2);
    tab.degenerate = 0;
    tab.bland = false;
    if let Phase::Unbounded = tab.run()? {
        return Ok(DualResult::DualUnbounded);
    }

    let mut x: Vec<f64> = (0..dim)
        .map(|r| {
            let pi = -tab.obj[ny + r];
            if flip[r] {
                -pi
            } else {
                pi
            }
        })
        .collect();

    // Polish: solve the active system when the basis consists of constraints only.
    if dim > 0 && tab.basis.iter().all(|&b| b < ny) {
        let m = DMatrix::from_fn(dim, dim, |r, j| sc.rows[tab.basis[r] * dim + j]);
        let rhs = DVector::from_iterator(dim, tab.basis.iter().map(|&b| sc.rhs[b]));
        if let Some(sol) = m.lu().solve(&rhs) {
            let cand: Vec<f64> = sol.iter().copied().collect();
            if cand.iter().all(|v| v.is_finite()) && violation(dim, sc, &cand) <= violation(dim, sc, &x) {
                x = cand;
            }
        }
    }

    let viol = violation(dim, sc, &x);
    let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if viol.is_nan() || viol > MAX_VIOLATION * scale {
        return Err(Error::Solver(format!(
            "returned point violates constraints by {viol:.3e}"
        )));
    }
    Ok(DualResult::Solved(x))
}

fn violation(dim: usize, sc: &Scaled, x: &[f64]) -> f64 {
    sc.rows
        .chunks_exact(dim.max(1))
        .zip(&sc.rhs)
        .map(|(row, d)| dot(row, x) - d)
        .fold(0.0f64, f64::max)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
