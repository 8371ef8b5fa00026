//! One-step ε-bounding boxes by uniform Lipschitz gridding of the state set.
//!
//! The bounding box of `X_t` is covered by cubes small enough that the
//! controller moves by at most `ε / (2 ||B||)` inside each one. Every cube that
//! meets `X_t` contributes the box of `A (Q ∩ X_t)` shifted by the control at one
//! of its points and widened by `ε / 2`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::context::Context;
use crate::error::{Error, Result};
use crate::lp::dot;
use crate::polytope::{BoundingBox, HPolytope};
use crate::tll::{FeedbackController, LtiSystem};

/// Geometry of the uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub epsilon: f64,
    pub lip: f64,
    pub b_norm: f64,
    /// Cube edge, `None` when `||B|| lip = 0` and a single cell covers everything.
    pub width: Option<f64>,
    /// Closed-form estimate `(2 ext 2 ||B|| lip / ε)^n`.
    pub estimate: f64,
    /// Cubes per coordinate actually laid out over the bounding box.
    pub per_axis: Vec<u64>,
}

impl GridSpec {
    pub fn new(epsilon: f64, lip: f64, b_norm: f64, domain: &BoundingBox) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::arg(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        if !lip.is_finite() || lip < 0.0 {
            return Err(Error::arg(format!("Lipschitz constant must be non-negative, got {lip}")));
        }
        let n = domain.dim();
        let ext = domain.center_extent().extent;
        let gain = b_norm * lip;
        if gain == 0.0 {
            return Ok(Self {
                epsilon,
                lip,
                b_norm,
                width: None,
                estimate: 1.0,
                per_axis: vec![1; n],
            });
        }
        let width = epsilon / (2.0 * gain);
        let per_axis = domain
            .widths()
            .iter()
            .map(|w| ((w / width).ceil() as u64).max(1))
            .collect();
        Ok(Self {
            epsilon,
            lip,
            b_norm,
            width: Some(width),
            estimate: (2.0 * ext / width).powi(n as i32),
            per_axis,
        })
    }

    pub fn is_single_cell(&self) -> bool {
        self.width.is_none()
    }

    pub fn cube_count(&self) -> f64 {
        self.per_axis.iter().map(|&k| k as f64).product()
    }
}

/// Box of `A y` for `y` ranging over the axis-aligned box `[c - h, c + h]`.
fn linear_box_image(a: &DMatrix<f64>, c: &[f64], h: &[f64]) -> BoundingBox {
    let n = a.nrows();
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for i in 0..n {
        let mut mid = 0.0;
        let mut rad = 0.0;
        for j in 0..a.ncols() {
            mid += a[(i, j)] * c[j];
            rad += a[(i, j)].abs() * h[j];
        }
        lo[i] = mid - rad;
        hi[i] = mid + rad;
    }
    BoundingBox { lo, hi }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CubeRelation {
    Inside,
    Outside,
    Boundary,
}

/// Classify the cube `[c - h, c + h]` against `p` with exact per-row interval bounds.
pub(crate) fn cube_relation(p: &HPolytope, c: &[f64], h: &[f64], tol: f64) -> CubeRelation {
    let mut inside = true;
    for (row, d) in p.rows() {
        let mid = dot(row, c);
        let rad: f64 = row.iter().zip(h).map(|(r, w)| r.abs() * w).sum();
        if mid - rad > d + tol {
            return CubeRelation::Outside;
        }
        if mid + rad > d {
            inside = false;
        }
    }
    if inside {
        CubeRelation::Inside
    } else {
        CubeRelation::Boundary
    }
}

/// Contribution of one piece `P` of the state set whose points are all within
/// `ε / (2 ||B||)` of each other in control: box(A P) + B mu(q) ± ε/2, where `q`
/// is the Chebyshev center of `P`. `None` when `P` is empty.
pub(crate) fn lipschitz_piece_box(
    sys: &LtiSystem,
    mu: &dyn FeedbackController,
    p: &HPolytope,
    epsilon: f64,
    ctx: &Context,
) -> Result<Option<BoundingBox>> {
    let Some((q, _)) = p.chebyshev_center(ctx)? else {
        return Ok(None);
    };
    let n = sys.state_dim();
    let abox = p.image_bbox(sys.a(), &vec![0.0; n], ctx)?;
    if abox.is_empty() {
        return Ok(None);
    }
    let u = mu.control(&q);
    let bu: Vec<f64> = (0..n)
        .map(|i| (0..u.len()).map(|k| sys.b()[(i, k)] * u[k]).sum())
        .collect();
    Ok(Some(abox.translate(&bu).inflate(epsilon / 2.0)))
}

/// An ε-bounding box of `{A x + B mu(x) : x in X_t}` for a controller with
/// Lipschitz constant at most `lip` (max-norm on both sides).
pub fn one_step_grid_bbox(
    sys: &LtiSystem,
    mu: &dyn FeedbackController,
    lip: f64,
    x_t: &HPolytope,
    epsilon: f64,
    ctx: &Context,
) -> Result<BoundingBox> {
    sys.check_controller(mu.input_dim(), mu.output_dim())?;
    sys.check_controller(x_t.dim(), mu.output_dim())?;
    let n = sys.state_dim();
    let domain = x_t.bbox(ctx)?;
    if domain.is_empty() {
        GridSpec::new(epsilon, lip, sys.b_norm(), &BoundingBox::point(&vec![0.0; n]))?;
        return Ok(BoundingBox::empty(n));
    }
    let spec = GridSpec::new(epsilon, lip, sys.b_norm(), &domain)?;
    let count = spec.cube_count();
    if count > ctx.config.cube_cap {
        return Err(Error::Cost {
            estimate: count,
            cap: ctx.config.cube_cap,
            hint: "grid would visit too many cubes; use exact-box or ltllbox, or raise epsilon".into(),
        });
    }
    let Some(width) = spec.width else {
        ctx.stats.count_nodes(1);
        return Ok(lipschitz_piece_box(sys, mu, x_t, epsilon, ctx)?.unwrap_or_else(|| BoundingBox::empty(n)));
    };
    let total = count as u64;
    ctx.stats.count_nodes(total);
    let half = vec![width / 2.0; n];
    let per_axis = &spec.per_axis;
    let tol = ctx.tol().feas;
    let b = sys.b();
    let boxes = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut rest = idx;
            let mut center = vec![0.0; n];
            for i in 0..n {
                let k = rest % per_axis[i];
                rest /= per_axis[i];
                center[i] = domain.lo[i] + (k as f64 + 0.5) * width;
            }
            match cube_relation(x_t, &center, &half, tol) {
                CubeRelation::Outside => Ok(None),
                CubeRelation::Inside => {
                    let u = mu.control(&center);
                    let bu: Vec<f64> = (0..n)
                        .map(|i| (0..u.len()).map(|k| b[(i, k)] * u[k]).sum())
                        .collect();
                    Ok(Some(
                        linear_box_image(sys.a(), &center, &half)
                            .translate(&bu)
                            .inflate(epsilon / 2.0),
                    ))
                }
                CubeRelation::Boundary => {
                    let lo: Vec<f64> = center.iter().map(|c| c - width / 2.0).collect();
                    let hi: Vec<f64> = center.iter().map(|c| c + width / 2.0).collect();
                    let cube = BoundingBox { lo, hi }.to_polytope()?;
                    lipschitz_piece_box(sys, mu, &x_t.intersect(&cube)?, epsilon, ctx)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(boxes
        .iter()
        .flatten()
        .fold(BoundingBox::empty(n), |acc, b| acc.merged(b)))
}
