//! H-representation polytopes, axis-aligned boxes and the LP-backed set calculus
//! used by every reachability method.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::context::Context;
use crate::error::{Error, Result};
use crate::lp::{dot, solve_lp, LpOutcome, Sense};

/// `{x : C x <= d}` with `C` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope {
    dim: usize,
    coeffs: Vec<f64>,
    offsets: Vec<f64>,
}

/// Midpoint, per-coordinate half widths and their maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterExtent {
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub extent: f64,
}

impl HPolytope {
    pub fn from_rows(dim: usize, rows: &[Vec<f64>], offsets: &[f64]) -> Result<Self> {
        if rows.len() != offsets.len() {
            return Err(Error::dim(format!(
                "{} constraint rows but {} offsets",
                rows.len(),
                offsets.len()
            )));
        }
        let mut coeffs = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::dim(format!(
                    "constraint row {i} has length {} (expected {dim})",
                    r.len()
                )));
            }
            coeffs.extend_from_slice(r);
        }
        Self::from_parts(dim, coeffs, offsets.to_vec())
    }

    pub fn from_parts(dim: usize, coeffs: Vec<f64>, offsets: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::dim("polytope dimension must be at least 1"));
        }
        if coeffs.len() != offsets.len() * dim {
            return Err(Error::dim("coefficient data does not match row count"));
        }
        if coeffs.iter().chain(&offsets).any(|v| !v.is_finite()) {
            return Err(Error::invalid("polytope data must be finite"));
        }
        Ok(Self {
            dim,
            coeffs,
            offsets,
        })
    }

    /// All of `R^dim` (no constraints).
    pub fn universe(dim: usize) -> Self {
        Self {
            dim,
            coeffs: Vec::new(),
            offsets: Vec::new(),
        }
    }

    /// Canonical empty set: a single `0 . x <= -1` row.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            coeffs: vec![0.0; dim],
            offsets: vec![-1.0],
        }
    }

    pub fn from_box(b: &BoundingBox) -> Result<Self> {
        if b.is_empty() {
            return Ok(Self::empty(b.dim()));
        }
        let n = b.dim();
        let mut p = Self::universe(n);
        for i in 0..n {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            p.push_row(&row, b.hi[i]);
            row[i] = -1.0;
            p.push_row(&row, -b.lo[i]);
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.offsets.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coeffs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn offset(&self, i: usize) -> f64 {
        self.offsets[i]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.coeffs
            .chunks_exact(self.dim)
            .zip(self.offsets.iter().copied())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.coeffs.chunks_exact(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub(crate) fn push_row(&mut self, row: &[f64], offset: f64) {
        debug_assert_eq!(row.len(), self.dim);
        self.coeffs.extend_from_slice(row);
        self.offsets.push(offset);
    }

    /// Membership with per-row slack `tol * max(1, ||row||_inf)`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.rows().all(|(r, d)| {
            let s = r.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            dot(r, x) <= d + tol * s
        })
    }

    /// Concatenate the constraints of both polytopes.
    pub fn intersect(&self, other: &HPolytope) -> Result<HPolytope> {
        if self.dim != other.dim {
            return Err(Error::dim(format!(
                "cannot intersect polytopes in R^{} and R^{}",
                self.dim, other.dim
            )));
        }
        let mut out = self.clone();
        out.coeffs.extend_from_slice(&other.coeffs);
        out.offsets.extend_from_slice(&other.offsets);
        Ok(out)
    }

    /// Push every facet outward by `delta` (Euclidean distance).
    pub fn inflate(&self, delta: f64) -> HPolytope {
        let mut out = self.clone();
        for i in 0..out.num_rows() {
            let nrm = norm2(self.row(i));
            out.offsets[i] += delta * nrm;
        }
        out
    }

    pub fn lp(&self, objective: &[f64], sense: Sense, ctx: &Context) -> Result<LpOutcome> {
        solve_lp(objective, self, sense, ctx)
    }

    pub fn is_feasible(&self, ctx: &Context) -> Result<bool> {
        let zero = vec![0.0; self.dim];
        Ok(matches!(
            self.lp(&zero, Sense::Maximize, ctx)?,
            LpOutcome::Optimal { .. }
        ))
    }

    /// Center and radius of the largest inscribed Euclidean ball, `None` when empty.
    pub fn chebyshev_center(&self, ctx: &Context) -> Result<Option<(Vec<f64>, f64)>> {
        let n = self.dim;
        let mut lifted = HPolytope::universe(n + 1);
        let mut row = vec![0.0; n + 1];
        for (r, d) in self.rows() {
            row[..n].copy_from_slice(r);
            row[n] = norm2(r);
            lifted.push_row(&row, d);
        }
        row.iter_mut().for_each(|v| *v = 0.0);
        row[n] = -1.0;
        lifted.push_row(&row, 0.0);
        let mut obj = vec![0.0; n + 1];
        obj[n] = 1.0;
        match lifted.lp(&obj, Sense::Maximize, ctx)? {
            LpOutcome::Optimal { point, .. } => {
                let r = point[n].max(0.0);
                Ok(Some((point[..n].to_vec(), r)))
            }
            LpOutcome::Infeasible => Ok(None),
            LpOutcome::Unbounded => Err(Error::Unbounded),
        }
    }

    /// Exact axis-aligned bounding box via `2n` LPs; the empty box when infeasible.
    pub fn bbox(&self, ctx: &Context) -> Result<BoundingBox> {
        let n = self.dim;
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        let mut e = vec![0.0; n];
        for i in 0..n {
            e[i] = 1.0;
            match self.lp(&e, Sense::Maximize, ctx)? {
                LpOutcome::Optimal { value, .. } => hi[i] = value,
                LpOutcome::Infeasible => return Ok(BoundingBox::empty(n)),
                LpOutcome::Unbounded => return Err(Error::Unbounded),
            }
            match self.lp(&e, Sense::Minimize, ctx)? {
                LpOutcome::Optimal { value, .. } => lo[i] = value,
                LpOutcome::Infeasible => return Ok(BoundingBox::empty(n)),
                LpOutcome::Unbounded => return Err(Error::Unbounded),
            }
            e[i] = 0.0;
        }
        Ok(BoundingBox { lo, hi })
    }

    /// Bounding box of `{M x + c : x in P}` from `2k` LPs over `P` (`M` is `k x n`).
    pub fn image_bbox(&self, map: &DMatrix<f64>, shift: &[f64], ctx: &Context) -> Result<BoundingBox> {
        if map.ncols() != self.dim || map.nrows() != shift.len() {
            return Err(Error::dim(format!(
                "map is {}x{}, shift has length {}, polytope lives in R^{}",
                map.nrows(),
                map.ncols(),
                shift.len(),
                self.dim
            )));
        }
        let k = map.nrows();
        let mut lo = vec![0.0; k];
        let mut hi = vec![0.0; k];
        for i in 0..k {
            let obj: Vec<f64> = map.row(i).iter().copied().collect();
            match self.lp(&obj, Sense::Maximize, ctx)? {
                LpOutcome::Optimal { value, .. } => hi[i] = value + shift[i],
                LpOutcome::Infeasible => return Ok(BoundingBox::empty(k)),
                LpOutcome::Unbounded => return Err(Error::Unbounded),
            }
            match self.lp(&obj, Sense::Minimize, ctx)? {
                LpOutcome::Optimal { value, .. } => lo[i] = value + shift[i],
                LpOutcome::Infeasible => return Ok(BoundingBox::empty(k)),
                LpOutcome::Unbounded => return Err(Error::Unbounded),
            }
        }
        Ok(BoundingBox { lo, hi })
    }

    pub fn center_extent(&self, ctx: &Context) -> Result<CenterExtent> {
        let b = self.bbox(ctx)?;
        if b.is_empty() {
            return Err(Error::arg("center/extent of an empty polytope"));
        }
        Ok(b.center_extent())
    }

    /// Drop every row implied by the remaining ones. Rows are tested in order against
    /// the rows still kept, so exact duplicates collapse to one copy.
    pub fn remove_redundant(&self, ctx: &Context) -> Result<HPolytope> {
        let n = self.dim;
        let tol = ctx.tol().lp.max(ctx.tol().feas);
        let mut kept: Vec<usize> = Vec::new();
        let mut candidates: Vec<usize> = Vec::new();
        for (i, (r, d)) in self.rows().enumerate() {
            let s = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if s == 0.0 {
                if d < -ctx.tol().feas {
                    return Ok(HPolytope::empty(n));
                }
                continue;
            }
            candidates.push(i);
        }
        if !self.is_feasible(ctx)? {
            return Ok(HPolytope::empty(n));
        }
        let mut alive: Vec<bool> = vec![true; self.num_rows()];
        for (pos, &i) in candidates.iter().enumerate() {
            let mut rest = HPolytope::universe(n);
            for &j in kept.iter().chain(&candidates[pos + 1..]) {
                if alive[j] {
                    rest.push_row(self.row(j), self.offset(j));
                }
            }
            let row = self.row(i);
            let s = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let redundant = match rest.lp(row, Sense::Maximize, ctx)? {
                LpOutcome::Optimal { value, .. } => value <= self.offset(i) + tol * s,
                _ => false,
            };
            if redundant {
                alive[i] = false;
            } else {
                kept.push(i);
            }
        }
        let mut out = HPolytope::universe(n);
        for i in kept {
            out.push_row(self.row(i), self.offset(i));
        }
        Ok(out)
    }

    /// Exact H-representation of `{M x + c : x in P}` for square `M`.
    ///
    /// Invertible maps are applied directly; singular ones go through Fourier–Motzkin
    /// elimination of `x` from `{C x <= d, y = M x + c}`, pruning redundant rows after
    /// each eliminated variable. Lower-dimensional images come out as paired rows.
    pub fn affine_image(&self, map: &DMatrix<f64>, shift: &[f64], ctx: &Context) -> Result<HPolytope> {
        let n = self.dim;
        if map.nrows() != n || map.ncols() != n || shift.len() != n {
            return Err(Error::dim(format!(
                "affine map must be {n}x{n} with a length-{n} shift"
            )));
        }
        let norm = inf_norm(map);
        let det = map.determinant();
        if norm > 0.0 && det.abs() > ctx.tol().sing_rel * norm {
            if let Some(inv) = map.clone().try_inverse() {
                let mut out = HPolytope::universe(n);
                let mut row = vec![0.0; n];
                for (r, d) in self.rows() {
                    // row' = r M^{-1}, offset' = d + r M^{-1} c
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = (0..n).map(|k| r[k] * inv[(k, j)]).sum();
                    }
                    let off = d + dot(&row, shift);
                    out.push_row(&row, off);
                }
                return Ok(out);
            }
        }
        fourier_motzkin_image(self, map, shift, ctx)
    }
}

fn fourier_motzkin_image(
    p: &HPolytope,
    map: &DMatrix<f64>,
    shift: &[f64],
    ctx: &Context,
) -> Result<HPolytope> {
    let n = p.dim();
    let k = map.nrows();
    // Variables: x_1..x_n followed by y_1..y_k.
    let w = n + k;
    let mut sys = HPolytope::universe(w);
    let mut row = vec![0.0; w];
    for (r, d) in p.rows() {
        row.iter_mut().for_each(|v| *v = 0.0);
        row[..n].copy_from_slice(r);
        sys.push_row(&row, d);
    }
    for i in 0..k {
        row.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..n {
            row[j] = -map[(i, j)];
        }
        row[n + i] = 1.0;
        sys.push_row(&row, shift[i]);
        row.iter_mut().for_each(|v| *v = -*v);
        sys.push_row(&row, -shift[i]);
    }

    // Eliminate x_1..x_n, always from the front so the remaining layout is
    // (x_{j+1}..x_n, y).
    for _ in 0..n {
        let dim = sys.dim();
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut next = HPolytope::universe(dim - 1);
        for (r, d) in sys.rows() {
            let a = r[0];
            if a > 1e-14 {
                pos.push((r, d));
            } else if a < -1e-14 {
                neg.push((r, d));
            } else {
                next.push_row(&r[1..], d);
            }
        }
        let mut comb = vec![0.0; dim - 1];
        for &(rp, dp) in &pos {
            for &(rn, dn) in &neg {
                let sp = 1.0 / rp[0];
                let sn = -1.0 / rn[0];
                for j in 1..dim {
                    comb[j - 1] = rp[j] * sp + rn[j] * sn;
                }
                next.push_row(&comb, dp * sp + dn * sn);
            }
        }
        sys = normalize_rows(&next).remove_redundant(ctx)?;
    }
    Ok(sys)
}

/// Scale every nonzero row to unit inf-norm.
fn normalize_rows(p: &HPolytope) -> HPolytope {
    let mut out = HPolytope::universe(p.dim());
    for (r, d) in p.rows() {
        let s = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if s > 0.0 {
            let scaled: Vec<f64> = r.iter().map(|v| v / s).collect();
            out.push_row(&scaled, d / s);
        } else {
            out.push_row(r, d);
        }
    }
    out
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Induced inf-norm (max absolute row sum).
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Axis-aligned box `[lo_1, hi_1] x ... x [lo_n, hi_n]`.
///
/// The empty box (`lo = +inf`, `hi = -inf`) is the identity for [`BoundingBox::merge`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::dim("box bounds have different lengths"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l.is_nan() || h.is_nan() || l > h) {
            return Err(Error::invalid("box requires lo <= hi in every coordinate"));
        }
        Ok(Self { lo, hi })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            lo: vec![f64::INFINITY; n],
            hi: vec![f64::NEG_INFINITY; n],
        }
    }

    pub fn point(x: &[f64]) -> Self {
        Self {
            lo: x.to_vec(),
            hi: x.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| l > h)
    }

    /// Coordinate-wise hull of both boxes.
    pub fn merge(&mut self, other: &BoundingBox) {
        for i in 0..self.dim() {
            self.lo[i] = self.lo[i].min(other.lo[i]);
            self.hi[i] = self.hi[i].max(other.hi[i]);
        }
    }

    pub fn merged(mut self, other: &BoundingBox) -> BoundingBox {
        self.merge(other);
        self
    }

    /// Minkowski sum.
    pub fn add(&self, other: &BoundingBox) -> BoundingBox {
        if self.is_empty() || other.is_empty() {
            return BoundingBox::empty(self.dim());
        }
        BoundingBox {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a + b).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn translate(&self, v: &[f64]) -> BoundingBox {
        BoundingBox {
            lo: self.lo.iter().zip(v).map(|(a, b)| a + b).collect(),
            hi: self.hi.iter().zip(v).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn inflate(&self, r: f64) -> BoundingBox {
        BoundingBox {
            lo: self.lo.iter().map(|a| a - r).collect(),
            hi: self.hi.iter().map(|a| a + r).collect(),
        }
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    /// Product of the widths (area in the plane).
    pub fn volume(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.widths().iter().product()
    }

    pub fn center_extent(&self) -> CenterExtent {
        let center: Vec<f64> = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect();
        let half_widths: Vec<f64> = self.widths().iter().map(|w| 0.5 * w).collect();
        let extent = half_widths.iter().copied().fold(0.0, f64::max);
        CenterExtent {
            center,
            half_widths,
            extent,
        }
    }

    pub fn contains_point(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }

    pub fn contains_box(&self, other: &BoundingBox, tol: f64) -> bool {
        other.is_empty()
            || (0..self.dim()).all(|i| other.lo[i] >= self.lo[i] - tol && other.hi[i] <= self.hi[i] + tol)
    }

    /// Largest distance between corresponding faces.
    pub fn max_face_gap(&self, other: &BoundingBox) -> f64 {
        (0..self.dim())
            .map(|i| {
                (self.lo[i] - other.lo[i])
                    .abs()
                    .max((self.hi[i] - other.hi[i]).abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn to_polytope(&self) -> Result<HPolytope> {
        HPolytope::from_box(self)
    }
}

/// Exact box `{B u : u in U}` by sign-split interval arithmetic.
pub fn interval_matvec(b: &DMatrix<f64>, u: &BoundingBox) -> Result<BoundingBox> {
    if b.ncols() != u.dim() {
        return Err(Error::dim(format!(
            "matrix has {} columns but box lives in R^{}",
            b.ncols(),
            u.dim()
        )));
    }
    if u.is_empty() {
        return Ok(BoundingBox::empty(b.nrows()));
    }
    let mut lo = vec![0.0; b.nrows()];
    let mut hi = vec![0.0; b.nrows()];
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            let a = b[(i, j)];
            if a >= 0.0 {
                lo[i] += a * u.lo[j];
                hi[i] += a * u.hi[j];
            } else {
                lo[i] += a * u.hi[j];
                hi[i] += a * u.lo[j];
            }
        }
    }
    Ok(BoundingBox { lo, hi })
}
