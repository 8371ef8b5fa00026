//! Adaptive ε-bounding boxes (L-TLLBox), method selection, and multi-step
//! bounding-box propagation.
//!
//! L-TLLBox starts from a hypercube around `X_t` and asks for a tight box on the
//! controller output over the cube's part of `X_t`. When that box, pushed through
//! `B`, is narrower than ε in every state coordinate, the cube is settled;
//! otherwise it is split into `2^n` half-size cubes. At the depth where cubes are
//! small enough for the Lipschitz argument, a cube is settled without querying
//! the controller's output range.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::Context;
use crate::error::{Error, Result};
use crate::exact::one_step_exact_bbox;
use crate::grid::{cube_relation, lipschitz_piece_box, one_step_grid_bbox, CubeRelation};
use crate::polytope::{interval_matvec, BoundingBox, HPolytope};
use crate::tll::{LtiSystem, TllController};
use crate::verifier::output_box_unless;

/// One-step bounding-box algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExactBox,
    Grid,
    #[serde(rename = "ltllbox")]
    LTllBox,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ExactBox => "exact_box",
            Method::Grid => "grid",
            Method::LTllBox => "ltllbox",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fixed method, or per-step automatic selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodChoice {
    Fixed(Method),
    Auto,
}

impl FromStr for MethodChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact_box" | "exact-box" => Ok(MethodChoice::Fixed(Method::ExactBox)),
            "grid" => Ok(MethodChoice::Fixed(Method::Grid)),
            "ltllbox" => Ok(MethodChoice::Fixed(Method::LTllBox)),
            "auto" => Ok(MethodChoice::Auto),
            other => Err(Error::arg(format!(
                "unknown method '{other}' (expected exact_box, grid, ltllbox or auto)"
            ))),
        }
    }
}

/// Predicted operation count of a method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub method: Method,
    pub predicted_ops: f64,
}

/// The method picked for one step together with both closed-form estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen: CostEstimate,
    pub exact_box: CostEstimate,
    pub grid: CostEstimate,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Cost model of one LP with `rows` constraints in `dim` variables.
pub fn lp_cost(rows: f64, dim: f64, ctx: &Context) -> f64 {
    rows * dim.powf(ctx.config.lp_dim_exponent)
}

/// `m^{n+2} n^2 M N^{2n+3} LP(m N^2 + N_X, n) / n!`
pub fn exact_box_cost(n: usize, m: usize, big_n: usize, big_m: usize, rows: usize, ctx: &Context) -> f64 {
    let (nf, mf, bn) = (n as f64, m as f64, big_n as f64);
    mf.powi(n as i32 + 2) * nf * nf * big_m as f64 * bn.powi(2 * n as i32 + 3)
        * lp_cost(mf * bn * bn + rows as f64, nf, ctx)
        / factorial(n)
}

/// `(2 ext 2 ||B|| lip / ε)^n LP(2n, n)`, at least one cube.
pub fn grid_cost(n: usize, ext: f64, b_norm: f64, lip: f64, epsilon: f64, ctx: &Context) -> f64 {
    let cubes = (2.0 * ext * 2.0 * b_norm * lip / epsilon).powi(n as i32).max(1.0);
    cubes * lp_cost(2.0 * n as f64, n as f64, ctx)
}

/// Pick the cheaper of the exact-box and grid methods by their closed-form
/// costs, or L-TLLBox when the two are within the configured band.
pub fn select_method(
    sys: &LtiSystem,
    ctrl: &TllController,
    x_t: &HPolytope,
    epsilon: f64,
    ctx: &Context,
) -> Result<Selection> {
    check_epsilon(epsilon)?;
    let n = sys.state_dim();
    let ext = x_t.center_extent(ctx)?.extent;
    let exact = CostEstimate {
        method: Method::ExactBox,
        predicted_ops: exact_box_cost(
            n,
            ctrl.output_dim(),
            ctrl.num_functions(),
            ctrl.num_groups(),
            x_t.num_rows(),
            ctx,
        ),
    };
    let grid = CostEstimate {
        method: Method::Grid,
        predicted_ops: grid_cost(n, ext.max(0.0), sys.b_norm(), ctrl.lipschitz_bound(), epsilon, ctx),
    };
    let (lo, hi) = if exact.predicted_ops <= grid.predicted_ops {
        (exact, grid)
    } else {
        (grid, exact)
    };
    let chosen = if hi.predicted_ops <= ctx.config.auto_band * lo.predicted_ops {
        CostEstimate {
            method: Method::LTllBox,
            predicted_ops: lo.predicted_ops,
        }
    } else {
        lo
    };
    Ok(Selection {
        chosen,
        exact_box: exact,
        grid,
    })
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::arg(format!("epsilon must be positive and finite, got {epsilon}")));
    }
    Ok(())
}

/// Depth at which cubes of the root edge `2 ext` are small enough that the
/// controller varies by at most `ε / (2 ||B||)` on each.
pub fn max_depth(ext: f64, b_norm: f64, lip: f64, epsilon: f64) -> u32 {
    let gain = b_norm * lip;
    if gain == 0.0 || ext <= 0.0 {
        return 0;
    }
    let edge = epsilon / (2.0 * gain);
    let mut k = (2.0 * ext / edge).log2().ceil().max(0.0) as u32;
    while 2.0 * ext / 2f64.powi(k as i32) > edge {
        k += 1;
    }
    k
}

struct Recursion<'a> {
    sys: &'a LtiSystem,
    ctrl: &'a TllController,
    x_t: &'a HPolytope,
    epsilon: f64,
    k_max: u32,
    ctx: &'a Context,
    leaves: AtomicU64,
    nodes: AtomicU64,
}

impl Recursion<'_> {
    fn visit(&self, center: Vec<f64>, half: f64, depth: u32) -> Result<BoundingBox> {
        self.visit_inner(&center, half, depth).map_err(|e| match e {
            Error::Solver(msg) if !msg.starts_with("node ") => {
                Error::Solver(format!("node at depth {depth} centered at {center:?}: {msg}"))
            }
            other => other,
        })
    }

    fn visit_inner(&self, center: &[f64], half: f64, depth: u32) -> Result<BoundingBox> {
        let n = center.len();
        let halves = vec![half; n];
        let cube = BoundingBox {
            lo: center.iter().map(|c| c - half).collect(),
            hi: center.iter().map(|c| c + half).collect(),
        };
        let region = match cube_relation(self.x_t, center, &halves, self.ctx.tol().feas) {
            CubeRelation::Outside => return Ok(BoundingBox::empty(n)),
            CubeRelation::Inside => cube.to_polytope()?,
            CubeRelation::Boundary => self.x_t.intersect(&cube.to_polytope()?)?,
        };
        if !region.is_feasible(self.ctx)? {
            return Ok(BoundingBox::empty(n));
        }
        self.nodes.fetch_add(1, Ordering::Relaxed);
        self.ctx.stats.count_nodes(1);
        if depth >= self.k_max {
            self.leaves.fetch_add(1, Ordering::Relaxed);
            return Ok(lipschitz_piece_box(self.sys, self.ctrl, &region, self.epsilon, self.ctx)?
                .unwrap_or_else(|| BoundingBox::empty(n)));
        }
        let b = self.sys.b();
        let eps = self.epsilon;
        let too_wide = |hi: &[f64], min_ub: &[f64]| {
            (0..n).any(|i| {
                let w: f64 = (0..hi.len()).map(|k| b[(i, k)].abs() * (hi[k] - min_ub[k])).sum();
                w >= eps
            })
        };
        if let Some(out) = output_box_unless(self.ctrl, &region, eps / 2.0, self.ctx, too_wide)? {
            let u = interval_matvec(b, &out.bounds)?;
            if u.widths().iter().all(|w| *w < eps) {
                self.leaves.fetch_add(1, Ordering::Relaxed);
                let abox = region.image_bbox(self.sys.a(), &vec![0.0; n], self.ctx)?;
                return Ok(abox.add(&u));
            }
        }
        let q = half / 2.0;
        let children = (0..1usize << n)
            .into_par_iter()
            .map(|p| {
                let c: Vec<f64> = center
                    .iter()
                    .enumerate()
                    .map(|(i, c)| if p >> i & 1 == 1 { c + q } else { c - q })
                    .collect();
                self.visit(c, q, depth + 1)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(children
            .iter()
            .fold(BoundingBox::empty(n), |acc, b| acc.merged(b)))
    }
}

/// Statistics of one L-TLLBox run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LTllBoxRun {
    pub max_depth: u32,
    pub nodes: u64,
    pub leaves: u64,
}

/// An ε-bounding box of the one-step reachable set by adaptive subdivision.
pub fn one_step_ltllbox(
    sys: &LtiSystem,
    ctrl: &TllController,
    x_t: &HPolytope,
    epsilon: f64,
    ctx: &Context,
) -> Result<BoundingBox> {
    Ok(one_step_ltllbox_run(sys, ctrl, x_t, epsilon, ctx)?.0)
}

/// [`one_step_ltllbox`] with recursion statistics.
pub fn one_step_ltllbox_run(
    sys: &LtiSystem,
    ctrl: &TllController,
    x_t: &HPolytope,
    epsilon: f64,
    ctx: &Context,
) -> Result<(BoundingBox, LTllBoxRun)> {
    check_epsilon(epsilon)?;
    sys.check_controller(ctrl.input_dim(), ctrl.output_dim())?;
    sys.check_controller(x_t.dim(), ctrl.output_dim())?;
    let n = sys.state_dim();
    let bb = x_t.bbox(ctx)?;
    if bb.is_empty() {
        return Ok((BoundingBox::empty(n), LTllBoxRun::default()));
    }
    let ce = bb.center_extent();
    let k_max = max_depth(ce.extent, sys.b_norm(), ctrl.lipschitz_bound(), epsilon);
    let rec = Recursion {
        sys,
        ctrl,
        x_t,
        epsilon,
        k_max,
        ctx,
        leaves: AtomicU64::new(0),
        nodes: AtomicU64::new(0),
    };
    let out = rec.visit(ce.center, ce.extent, 0)?;
    let run = LTllBoxRun {
        max_depth: k_max,
        nodes: rec.nodes.load(Ordering::Relaxed),
        leaves: rec.leaves.load(Ordering::Relaxed),
    };
    let cap = 2f64.powi((k_max as usize * n) as i32);
    assert!(
        run.leaves as f64 <= cap,
        "subdivision produced {} leaves, more than 2^(K n) = {cap}",
        run.leaves
    );
    Ok((out, run))
}

/// One step of bounding-box reachability with a fixed method.
pub fn one_step_box(
    sys: &LtiSystem,
    ctrl: &TllController,
    x_t: &HPolytope,
    epsilon: f64,
    method: Method,
    ctx: &Context,
) -> Result<BoundingBox> {
    match method {
        Method::ExactBox => one_step_exact_bbox(sys, ctrl, x_t, ctx),
        Method::Grid => one_step_grid_bbox(sys, ctrl, ctrl.lipschitz_bound(), x_t, epsilon, ctx),
        Method::LTllBox => one_step_ltllbox(sys, ctrl, x_t, epsilon, ctx),
    }
}

/// Boxes `B_1..B_T` with the method used at each step (and the cost estimates
/// when the method was chosen automatically).
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub boxes: Vec<BoundingBox>,
    pub methods: Vec<Method>,
    pub selections: Vec<Option<Selection>>,
}

/// ε-bounding-box propagation from `B_0 = X_0` for `steps` steps. A failing
/// step aborts with the boxes computed so far.
pub fn propagate(
    sys: &LtiSystem,
    ctrl: &TllController,
    x0: &HPolytope,
    epsilon: f64,
    steps: usize,
    method: MethodChoice,
    ctx: &Context,
) -> Result<Propagation> {
    check_epsilon(epsilon)?;
    if steps == 0 {
        return Err(Error::arg("the number of steps must be at least 1"));
    }
    let mut out = Propagation {
        boxes: Vec::with_capacity(steps),
        methods: Vec::with_capacity(steps),
        selections: Vec::with_capacity(steps),
    };
    let mut current = x0.clone();
    for step in 1..=steps {
        let result = (|| {
            let (m, sel) = match method {
                MethodChoice::Fixed(m) => (m, None),
                MethodChoice::Auto => {
                    let s = select_method(sys, ctrl, &current, epsilon, ctx)?;
                    (s.chosen.method, Some(s))
                }
            };
            let b = one_step_box(sys, ctrl, &current, epsilon, m, ctx)?;
            Ok((m, sel, b))
        })();
        match result {
            Ok((m, sel, b)) => {
                current = b.to_polytope()?;
                out.boxes.push(b);
                out.methods.push(m);
                out.selections.push(sel);
            }
            Err(source) => {
                return Err(Error::Step {
                    step,
                    partial: out.boxes,
                    source: Box::new(source),
                })
            }
        }
    }
    Ok(out)
}
