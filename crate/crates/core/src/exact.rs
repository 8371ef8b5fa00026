//! Exact one-step reachable sets and exact one-step bounding boxes.
//!
//! The input set is split by the arrangement of all pairwise differences of local
//! functions (per output). Inside each cell the controller is a single affine map,
//! so the closed loop is affine there as well.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrangement::{enumerate_cells, Cell, Hyperplane, Sign};
use crate::context::Context;
use crate::error::Result;
use crate::polytope::{BoundingBox, HPolytope};
use crate::tll::{LtiSystem, TllController};

/// One polytope of a reachable set, tagged with the cell it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachPiece {
    pub polytope: HPolytope,
    pub signs: Vec<Sign>,
    /// Active local function per output (0-based).
    pub active: Vec<usize>,
}

/// A reachable set as a union of (possibly overlapping) polytopes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReachSet {
    pub pieces: Vec<ReachPiece>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReachPieceJson {
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    pub signs: Vec<String>,
    /// 1-based, one per output.
    pub active: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReachSetJson {
    pub pieces: Vec<ReachPieceJson>,
}

impl ReachSet {
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        self.pieces.iter().any(|p| p.polytope.contains(y, tol))
    }

    pub fn bbox(&self, ctx: &Context) -> Result<BoundingBox> {
        let n = self.pieces.first().map_or(0, |p| p.polytope.dim());
        let boxes = self
            .pieces
            .par_iter()
            .map(|p| p.polytope.bbox(ctx))
            .collect::<Result<Vec<_>>>()?;
        Ok(boxes.iter().fold(BoundingBox::empty(n), |acc, b| acc.merged(b)))
    }

    pub fn to_json(&self) -> ReachSetJson {
        ReachSetJson {
            pieces: self
                .pieces
                .iter()
                .map(|p| ReachPieceJson {
                    c: p.polytope.to_rows(),
                    d: p.polytope.offsets().to_vec(),
                    signs: p.signs.iter().map(|s| s.as_char().to_string()).collect(),
                    active: p.active.iter().map(|i| i + 1).collect(),
                })
                .collect(),
        }
    }
}

/// The hyperplanes `l_i^k(x) = l_j^k(x)` for every output `k` and `i < j`.
pub fn difference_hyperplanes(ctrl: &TllController) -> Vec<Hyperplane> {
    let mut out = Vec::new();
    for c in ctrl.components() {
        let nf = c.num_functions();
        for i in 0..nf {
            for j in i + 1..nf {
                let normal = c.weight(i).iter().zip(c.weight(j)).map(|(a, b)| a - b).collect();
                out.push(Hyperplane::new(normal, c.bias(j) - c.bias(i)));
            }
        }
    }
    out
}

/// Cells of the controller's pairwise-difference arrangement inside `domain`,
/// each with its active local functions attached.
pub fn controller_cells(ctrl: &TllController, domain: &HPolytope, ctx: &Context) -> Result<Vec<Cell>> {
    let planes = difference_hyperplanes(ctrl);
    enumerate_cells(&planes, domain, ctx)?
        .map(|c| {
            c.map(|mut c| {
                c.active = Some(ctrl.active_indices(&c.witness));
                c
            })
        })
        .collect()
}

fn closed_loop_map(sys: &LtiSystem, ctrl: &TllController, active: &[usize]) -> (DMatrix<f64>, Vec<f64>) {
    let (w, b) = ctrl.affine_piece(active);
    let map = sys.a() + sys.b() * w;
    let shift: DVector<f64> = sys.b() * b;
    (map, shift.iter().copied().collect())
}

/// Checks at a few interior points that the controller agrees with the cell's
/// affine piece.
fn check_constant_piece(ctrl: &TllController, cell: &Cell, active: &[usize]) {
    let n = cell.witness.len();
    let (w, b) = ctrl.affine_piece(active);
    for k in 0..3 {
        let mut x = cell.witness.clone();
        if k > 0 {
            x[(k - 1) % n] += if k == 1 { 0.5 } else { -0.5 } * cell.radius;
        }
        let affine = &w * DVector::from_column_slice(&x) + &b;
        let nn = ctrl.eval(&x).expect("dimension checked by caller");
        for (a, v) in affine.iter().zip(&nn) {
            debug_assert!(
                (a - v).abs() <= 1e-7 * (1.0 + v.abs()),
                "controller is not affine on a cell: {a} vs {v}"
            );
        }
    }
}

/// The exact one-step reachable set `{A x + B NN(x) : x in X_t}` as a union of polytopes.
pub fn one_step_exact(sys: &LtiSystem, ctrl: &TllController, x_t: &HPolytope, ctx: &Context) -> Result<ReachSet> {
    sys.check_controller(ctrl.input_dim(), ctrl.output_dim())?;
    sys.check_controller(x_t.dim(), ctrl.output_dim())?;
    let cells = controller_cells(ctrl, x_t, ctx)?;
    let mut pieces = cells
        .par_iter()
        .map(|cell| {
            let active = cell.active.clone().unwrap_or_default();
            if cfg!(debug_assertions) {
                check_constant_piece(ctrl, cell, &active);
            }
            let (map, shift) = closed_loop_map(sys, ctrl, &active);
            let polytope = cell.region.affine_image(&map, &shift, ctx)?;
            Ok(ReachPiece {
                polytope,
                signs: cell.signs.clone(),
                active,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    pieces.sort_by(|a, b| a.signs.cmp(&b.signs));
    Ok(ReachSet { pieces })
}

/// The exact bounding box of the one-step reachable set (2n LPs per cell).
pub fn one_step_exact_bbox(
    sys: &LtiSystem,
    ctrl: &TllController,
    x_t: &HPolytope,
    ctx: &Context,
) -> Result<BoundingBox> {
    sys.check_controller(ctrl.input_dim(), ctrl.output_dim())?;
    sys.check_controller(x_t.dim(), ctrl.output_dim())?;
    let cells = controller_cells(ctrl, x_t, ctx)?;
    let boxes = cells
        .par_iter()
        .map(|cell| {
            let active = cell.active.as_deref().unwrap_or_default();
            let (map, shift) = closed_loop_map(sys, ctrl, active);
            cell.region.image_bbox(&map, &shift, ctx)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(boxes
        .iter()
        .fold(BoundingBox::empty(sys.state_dim()), |acc, b| acc.merged(b)))
}

/// Per output, the local functions that are active on some cell inside `domain`.
pub fn realized_functions(ctrl: &TllController, domain: &HPolytope, ctx: &Context) -> Result<Vec<BTreeSet<usize>>> {
    let mut out = vec![BTreeSet::new(); ctrl.output_dim()];
    for cell in controller_cells(ctrl, domain, ctx)? {
        for (set, i) in out.iter_mut().zip(cell.active.unwrap_or_default()) {
            set.insert(i);
        }
    }
    Ok(out)
}

/// Whether every local function of every output is realized inside `domain`.
pub fn is_non_degenerate(ctrl: &TllController, domain: &HPolytope, ctx: &Context) -> Result<bool> {
    Ok(realized_functions(ctrl, domain, ctx)?
        .iter()
        .all(|s| s.len() == ctrl.num_functions()))
}
