//! Output ranges of TLL controllers over polytopes.
//!
//! Upper bounds are exact: the maximum of a min-group over a polytope is an
//! epigraph LP, and the network maximum is the largest group maximum. Lower
//! bounds go through a decision procedure: `NN >= a` on `P` holds iff every cell
//! of the arrangement `{l_i(x) = a}` inside `P` has some group whose members are
//! all above `a`. Bisection on `a` turns the decision into a bracketed minimum.

use crate::arrangement::{enumerate_cells, Hyperplane, Sign};
use crate::context::Context;
use crate::error::{Error, Result};
use crate::lp::{LpOutcome, Sense};
use crate::polytope::{BoundingBox, HPolytope};
use crate::tll::{ScalarTll, TllController};

/// Exact range of every local function over a polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionRanges {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub argmin: Vec<Vec<f64>>,
    pub argmax: Vec<Vec<f64>>,
}

impl FunctionRanges {
    /// `2N` LPs. Errors when `p` is empty or unbounded.
    pub fn compute(tll: &ScalarTll, p: &HPolytope, ctx: &Context) -> Result<Self> {
        let nf = tll.num_functions();
        let mut r = FunctionRanges {
            min: Vec::with_capacity(nf),
            max: Vec::with_capacity(nf),
            argmin: Vec::with_capacity(nf),
            argmax: Vec::with_capacity(nf),
        };
        for i in 0..nf {
            for sense in [Sense::Minimize, Sense::Maximize] {
                match p.lp(tll.weight(i), sense, ctx)? {
                    LpOutcome::Optimal { value, point } => {
                        let v = value + tll.bias(i);
                        if sense == Sense::Minimize {
                            r.min.push(v);
                            r.argmin.push(point);
                        } else {
                            r.max.push(v);
                            r.argmax.push(point);
                        }
                    }
                    LpOutcome::Infeasible => return Err(Error::invalid("input set is empty")),
                    LpOutcome::Unbounded => return Err(Error::Unbounded),
                }
            }
        }
        Ok(r)
    }
}

/// Answer to the query `NN(x) >= a` for all `x` in `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundCheck {
    pub holds: bool,
    /// A point of the set with `NN < a` when the bound fails.
    pub counterexample: Option<Vec<f64>>,
    /// Arrangement cells examined.
    pub cells: usize,
}

/// Per-output bounds on a controller's range over a polytope. `hi` is the exact
/// maximum; `lo` is within `tol` below the exact minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputBox {
    pub bounds: BoundingBox,
    pub tol: f64,
}

/// Sets thinner than this multiple of the cell tolerance are widened before
/// searching for a minimum, so that the arrangement still has full-dimensional cells.
const THIN_FACTOR: f64 = 2.0;
const INFLATE_FACTOR: f64 = 4.0;

fn widened_if_thin(p: &HPolytope, ctx: &Context) -> Result<Option<HPolytope>> {
    let tol = ctx.tol().cell;
    match p.chebyshev_center(ctx)? {
        None => Err(Error::invalid("input set is empty")),
        Some((_, r)) if r < THIN_FACTOR * tol => Ok(Some(p.inflate(INFLATE_FACTOR * tol))),
        Some(_) => Ok(None),
    }
}

/// Decide `NN(x) >= a` on `P` given the local-function ranges over `P`.
fn check_lower_bound(
    tll: &ScalarTll,
    p: &HPolytope,
    ranges: &FunctionRanges,
    a: f64,
    ctx: &Context,
) -> Result<LowerBoundCheck> {
    let holds = |cells| LowerBoundCheck {
        holds: true,
        counterexample: None,
        cells,
    };
    let fails = |x: Vec<f64>, cells| LowerBoundCheck {
        holds: false,
        counterexample: Some(x),
        cells,
    };
    if tll.selectors().iter().any(|s| s.iter().all(|&i| ranges.min[i] >= a)) {
        return Ok(holds(0));
    }
    for x in &ranges.argmin {
        if tll.eval_unchecked(x) < a {
            return Ok(fails(x.clone(), 0));
        }
    }
    let groups: Vec<&Vec<usize>> = tll
        .selectors()
        .iter()
        .filter(|s| s.iter().all(|&i| ranges.max[i] > a))
        .collect();
    if groups.is_empty() {
        return Ok(fails(ranges.argmin[0].clone(), 0));
    }
    let mut plane_of = vec![usize::MAX; tll.num_functions()];
    let mut planes = Vec::new();
    for s in &groups {
        for &i in s.iter() {
            if ranges.min[i] < a && plane_of[i] == usize::MAX {
                plane_of[i] = planes.len();
                planes.push(Hyperplane::new(tll.weight(i).to_vec(), a - tll.bias(i)));
            }
        }
    }
    let cells = enumerate_cells(&planes, p, ctx)?;
    let arr = cells.arrangement().clone();
    let mut count = 0;
    for cell in cells {
        let cell = cell?;
        count += 1;
        let above = |i: usize| {
            plane_of[i] == usize::MAX || arr.original_sign(&cell.signs, plane_of[i]) == Some(Sign::Pos)
        };
        if !groups.iter().any(|s| s.iter().all(|&i| above(i))) {
            return Ok(fails(cell.witness, count));
        }
    }
    Ok(holds(count))
}

/// Whether `NN(x) >= a` for every `x` in `P`, with a violating point otherwise.
/// Sets without interior are widened by a few cell tolerances first, so a `true`
/// answer is always sound for `P` itself.
pub fn verify_lower_bound(tll: &ScalarTll, p: &HPolytope, a: f64, ctx: &Context) -> Result<LowerBoundCheck> {
    check_dim(tll, p)?;
    let wide = widened_if_thin(p, ctx)?;
    let q = wide.as_ref().unwrap_or(p);
    let ranges = FunctionRanges::compute(tll, q, ctx)?;
    check_lower_bound(tll, q, &ranges, a, ctx)
}

fn check_dim(tll: &ScalarTll, p: &HPolytope) -> Result<()> {
    if tll.input_dim() != p.dim() {
        return Err(Error::dim(format!(
            "controller input dimension is {} but the set lives in R^{}",
            tll.input_dim(),
            p.dim()
        )));
    }
    Ok(())
}

/// Maximum over `P` of one min-group, by the epigraph LP. `None` when `P` is empty.
fn group_max(tll: &ScalarTll, group: &[usize], p: &HPolytope, ctx: &Context) -> Result<Option<(f64, Vec<f64>)>> {
    let n = p.dim();
    let mut lifted = HPolytope::universe(n + 1);
    let mut row = vec![0.0; n + 1];
    for (r, d) in p.rows() {
        row[..n].copy_from_slice(r);
        row[n] = 0.0;
        lifted.push_row(&row, d);
    }
    for &i in group {
        for (dst, w) in row[..n].iter_mut().zip(tll.weight(i)) {
            *dst = -w;
        }
        row[n] = 1.0;
        lifted.push_row(&row, tll.bias(i));
    }
    let mut obj = vec![0.0; n + 1];
    obj[n] = 1.0;
    match lifted.lp(&obj, Sense::Maximize, ctx)? {
        LpOutcome::Optimal { value, mut point } => {
            point.truncate(n);
            Ok(Some((value, point)))
        }
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => Err(Error::Unbounded),
    }
}

fn max_with_ranges(
    tll: &ScalarTll,
    p: &HPolytope,
    ranges: &FunctionRanges,
    ctx: &Context,
) -> Result<(f64, Vec<f64>)> {
    let mut order: Vec<(f64, usize)> = tll
        .selectors()
        .iter()
        .enumerate()
        .map(|(j, s)| (s.iter().map(|&i| ranges.max[i]).fold(f64::INFINITY, f64::min), j))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (bound, j) in order {
        if best.as_ref().is_some_and(|(v, _)| bound <= *v) {
            break;
        }
        if let Some((v, x)) = group_max(tll, &tll.selectors()[j], p, ctx)? {
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, x));
            }
        }
    }
    best.ok_or_else(|| Error::invalid("input set is empty"))
}

/// Exact maximum of the network over `P` and a point attaining it.
pub fn output_argmax(tll: &ScalarTll, p: &HPolytope, ctx: &Context) -> Result<(f64, Vec<f64>)> {
    check_dim(tll, p)?;
    let ranges = FunctionRanges::compute(tll, p, ctx)?;
    max_with_ranges(tll, p, &ranges, ctx)
}

/// Exact maximum of the network over `P`.
pub fn output_max(tll: &ScalarTll, p: &HPolytope, ctx: &Context) -> Result<f64> {
    Ok(output_argmax(tll, p, ctx)?.0)
}

fn min_with_ranges(tll: &ScalarTll, q: &HPolytope, ranges: &FunctionRanges, tol: f64, ctx: &Context) -> Result<f64> {
    let ce = q.center_extent(ctx)?;
    let mut hi = f64::INFINITY;
    for x in &ranges.argmin {
        hi = hi.min(tll.eval_unchecked(x));
    }
    let lattice_lo = tll
        .selectors()
        .iter()
        .map(|s| s.iter().map(|&i| ranges.min[i]).fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    let lip_lo = tll.eval_unchecked(&ce.center) - tll.lipschitz_bound() * 2.0 * ce.extent;
    let mut lo = lattice_lo.max(lip_lo).min(hi);
    while hi - lo > tol {
        let a = 0.5 * (lo + hi);
        if a <= lo || a >= hi {
            break;
        }
        let check = check_lower_bound(tll, q, ranges, a, ctx)?;
        if check.holds {
            lo = a;
        } else {
            let v = check
                .counterexample
                .map_or(a, |x| tll.eval_unchecked(&x));
            hi = v.min(a).max(lo);
        }
    }
    Ok(lo)
}

/// A lower bound `lo` with `lo <= min_P NN <= lo + tol`.
pub fn output_min(tll: &ScalarTll, p: &HPolytope, tol: f64, ctx: &Context) -> Result<f64> {
    check_dim(tll, p)?;
    check_tol(tol)?;
    let wide = widened_if_thin(p, ctx)?;
    let q = wide.as_ref().unwrap_or(p);
    let ranges = FunctionRanges::compute(tll, q, ctx)?;
    min_with_ranges(tll, q, &ranges, tol, ctx)
}

fn check_tol(tol: f64) -> Result<()> {
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::arg(format!("tolerance must be positive and finite, got {tol}")));
    }
    Ok(())
}

/// Per output `[output_min(tol), output_max]`.
pub fn output_box(ctrl: &TllController, p: &HPolytope, tol: f64, ctx: &Context) -> Result<OutputBox> {
    Ok(output_box_unless(ctrl, p, tol, ctx, |_, _| false)?.expect("never rejected"))
}

/// Like [`output_box`], but first computes the exact maxima `hi` and attained
/// values `min_ub >= min` per output and returns `None` without running the
/// minimum search when `too_wide(hi, min_ub)` holds.
pub(crate) fn output_box_unless(
    ctrl: &TllController,
    p: &HPolytope,
    tol: f64,
    ctx: &Context,
    too_wide: impl Fn(&[f64], &[f64]) -> bool,
) -> Result<Option<OutputBox>> {
    check_tol(tol)?;
    let wide = widened_if_thin(p, ctx)?;
    let q = wide.as_ref().unwrap_or(p);
    let mut hi = Vec::with_capacity(ctrl.output_dim());
    let mut min_ub = Vec::with_capacity(ctrl.output_dim());
    let mut min_ranges = Vec::with_capacity(ctrl.output_dim());
    for tll in ctrl.components() {
        check_dim(tll, p)?;
        let ranges = FunctionRanges::compute(tll, p, ctx)?;
        hi.push(max_with_ranges(tll, p, &ranges, ctx)?.0);
        let ranges = match &wide {
            None => ranges,
            Some(q) => FunctionRanges::compute(tll, q, ctx)?,
        };
        min_ub.push(
            ranges
                .argmin
                .iter()
                .map(|x| tll.eval_unchecked(x))
                .fold(f64::INFINITY, f64::min),
        );
        min_ranges.push(ranges);
    }
    if too_wide(&hi, &min_ub) {
        return Ok(None);
    }
    let mut lo = Vec::with_capacity(ctrl.output_dim());
    for ((tll, ranges), h) in ctrl.components().iter().zip(&min_ranges).zip(&hi) {
        lo.push(min_with_ranges(tll, q, ranges, tol, ctx)?.min(*h));
    }
    Ok(Some(OutputBox {
        bounds: BoundingBox { lo, hi },
        tol,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tll::tests::abs_tll;

    fn interval(lo: f64, hi: f64) -> HPolytope {
        BoundingBox::new(vec![lo], vec![hi]).unwrap().to_polytope().unwrap()
    }

    fn unit_square() -> HPolytope {
        BoundingBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap().to_polytope().unwrap()
    }

    #[test]
    fn abs_lower_bounds() {
        let ctx = Context::default();
        let t = abs_tll();
        assert!(verify_lower_bound(&t, &interval(-1.0, 1.0), -0.5, &ctx).unwrap().holds);
        let r = verify_lower_bound(&t, &interval(-1.0, 1.0), 0.5, &ctx).unwrap();
        assert!(!r.holds);
        assert!(r.counterexample.unwrap()[0].abs() < 0.5);
    }

    #[test]
    fn abs_extrema() {
        let ctx = Context::default();
        let t = abs_tll();
        assert!((output_max(&t, &interval(-1.0, 1.0), &ctx).unwrap() - 1.0).abs() < 1e-9);
        let lo = output_min(&t, &interval(-1.0, 1.0), 1e-3, &ctx).unwrap();
        assert!((-1e-3..=0.0).contains(&lo), "{lo}");
    }

    #[test]
    fn single_affine_extrema() {
        let ctx = Context::default();
        let t = ScalarTll::new(vec![vec![1.0, 0.0]], vec![0.0], vec![vec![0]]).unwrap();
        assert!((output_max(&t, &unit_square(), &ctx).unwrap() - 1.0).abs() < 1e-9);
        let lo = output_min(&t, &unit_square(), 1e-6, &ctx).unwrap();
        assert!((-1.0 - 1e-6..=-1.0 + 1e-9).contains(&lo), "{lo}");
    }

    #[test]
    fn minimum_needs_search() {
        // max(min(x, 1 - x), min(-x, x + 1)) on [-1, 1] has minimum 0 at x = 0 and
        // no group is above 0 over the whole interval.
        let ctx = Context::default();
        let t = ScalarTll::new(
            vec![vec![1.0], vec![-1.0], vec![-1.0], vec![1.0]],
            vec![0.0, 1.0, 0.0, 1.0],
            vec![vec![0, 1], vec![2, 3]],
        )
        .unwrap();
        let lo = output_min(&t, &interval(-1.0, 1.0), 1e-4, &ctx).unwrap();
        assert!((-1e-4..=0.0).contains(&lo), "{lo}");
        assert!(verify_lower_bound(&t, &interval(-1.0, 1.0), -1e-3, &ctx).unwrap().holds);
        assert!(!verify_lower_bound(&t, &interval(-1.0, 1.0), 1e-3, &ctx).unwrap().holds);
    }

    #[test]
    fn thin_set_is_handled() {
        let ctx = Context::default();
        let t = abs_tll();
        let point = interval(0.25, 0.25);
        let lo = output_min(&t, &point, 1e-3, &ctx).unwrap();
        assert!((0.25 - 1e-3 - 1e-6..=0.25).contains(&lo), "{lo}");
    }

    #[test]
    fn output_box_of_multi_output() {
        let ctx = Context::default();
        let neg = ScalarTll::new(vec![vec![-1.0], vec![1.0]], vec![0.0, 0.0], vec![vec![0, 1], vec![0, 1]]).unwrap();
        let ctrl = TllController::new(vec![abs_tll(), neg]).unwrap();
        let b = output_box(&ctrl, &interval(-1.0, 2.0), 1e-3, &ctx).unwrap();
        assert!((b.bounds.hi[0] - 2.0).abs() < 1e-9 && b.bounds.lo[0] <= 0.0 && b.bounds.lo[0] >= -1e-3);
        assert!((b.bounds.hi[1] - 0.0).abs() < 1e-9 && b.bounds.lo[1] <= -2.0 && b.bounds.lo[1] >= -2.0 - 1e-3);
    }

    #[test]
    fn bad_tolerance() {
        let ctx = Context::default();
        assert!(matches!(
            output_min(&abs_tll(), &interval(-1.0, 1.0), 0.0, &ctx),
            Err(Error::Argument(_))
        ));
    }
}
