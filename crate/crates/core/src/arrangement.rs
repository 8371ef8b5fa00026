//! Full-dimensional cells of a hyperplane arrangement inside a compact polytope.
//!
//! Cells are found by breadth-first search over sign vectors: starting from the
//! sign vector of an interior point, one hyperplane sign is flipped at a time and
//! every candidate is validated with an inscribed-ball LP. Candidates whose ball
//! radius is below the cell tolerance are not reported, but the search still
//! passes through them so that cells separated only by a sliver stay reachable.

use std::collections::{HashSet, VecDeque};

use crate::context::Context;
use crate::error::{Error, Result};
use crate::lp::{dot, LpOutcome, Sense};
use crate::polytope::{norm2, BoundingBox, HPolytope};
use crate::tll::TllController;

/// The hyperplane `{x : normal . x = offset}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Hyperplane {
    pub fn new(normal: Vec<f64>, offset: f64) -> Self {
        Self { normal, offset }
    }

    /// `normal . x - offset`
    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) - self.offset
    }

    fn range_over(&self, b: &BoundingBox) -> (f64, f64) {
        let mut lo = -self.offset;
        let mut hi = -self.offset;
        for (w, (l, h)) in self.normal.iter().zip(b.lo.iter().zip(&b.hi)) {
            let (p, q) = (w * l, w * h);
            lo += p.min(q);
            hi += p.max(q);
        }
        (lo, hi)
    }
}

/// Side of a hyperplane: `Pos` is `normal . x > offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Neg,
    Pos,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Neg => Sign::Pos,
            Sign::Pos => Sign::Neg,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Sign::Neg => '-',
            Sign::Pos => '+',
        }
    }
}

/// Where an input hyperplane ended up after normalization and merging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlaneRef {
    /// Same as merged plane `index`, possibly with the normal negated.
    Merged { index: usize, flipped: bool },
    /// Zero normal: the sign is the same everywhere (`None` when `0 = 0`).
    Constant(Option<Sign>),
}

/// A normalized, duplicate-free list of hyperplanes with a map from the input list.
#[derive(Debug, Clone, PartialEq)]
pub struct Arrangement {
    planes: Vec<Hyperplane>,
    origin: Vec<PlaneRef>,
}

impl Arrangement {
    /// Scales each plane to unit max-norm normal with the first nonzero entry
    /// positive, then merges planes equal within `tol`.
    pub fn new(input: &[Hyperplane], tol: f64) -> Self {
        let mut planes: Vec<Hyperplane> = Vec::new();
        let mut origin = Vec::with_capacity(input.len());
        for h in input {
            let scale = h.normal.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if scale == 0.0 {
                let s = if h.offset < 0.0 {
                    Some(Sign::Pos)
                } else if h.offset > 0.0 {
                    Some(Sign::Neg)
                } else {
                    None
                };
                origin.push(PlaneRef::Constant(s));
                continue;
            }
            let lead = h.normal.iter().find(|v| **v != 0.0).copied().unwrap_or(1.0);
            let flipped = lead < 0.0;
            let f = if flipped { -1.0 / scale } else { 1.0 / scale };
            let norm = Hyperplane {
                normal: h.normal.iter().map(|v| v * f).collect(),
                offset: h.offset * f,
            };
            let found = planes.iter().position(|p| {
                (p.offset - norm.offset).abs() <= tol * (1.0 + p.offset.abs())
                    && p.normal.iter().zip(&norm.normal).all(|(a, b)| (a - b).abs() <= tol)
            });
            let index = found.unwrap_or_else(|| {
                planes.push(norm);
                planes.len() - 1
            });
            origin.push(PlaneRef::Merged { index, flipped });
        }
        Self { planes, origin }
    }

    pub fn planes(&self) -> &[Hyperplane] {
        &self.planes
    }

    pub fn origin(&self) -> &[PlaneRef] {
        &self.origin
    }

    /// Sign of input plane `k` on a cell with merged sign vector `signs`.
    pub fn original_sign(&self, signs: &[Sign], k: usize) -> Option<Sign> {
        match self.origin[k] {
            PlaneRef::Merged { index, flipped } => {
                let s = signs[index];
                Some(if flipped { s.flip() } else { s })
            }
            PlaneRef::Constant(s) => s,
        }
    }
}

/// A full-dimensional cell of an arrangement restricted to a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// One sign per merged hyperplane.
    pub signs: Vec<Sign>,
    /// The closed cell: domain plus the signed half-spaces that can bind.
    pub region: HPolytope,
    /// Interior point with clearance at least `radius` from every bounding plane.
    pub witness: Vec<f64>,
    pub radius: f64,
    /// Active local function index per controller output, when attached.
    pub active: Option<Vec<usize>>,
}

/// Enumerate the cells of the arrangement of `planes` inside `domain`.
pub fn enumerate_cells<'c>(planes: &[Hyperplane], domain: &HPolytope, ctx: &'c Context) -> Result<Cells<'c>> {
    Cells::new(Arrangement::new(planes, ctx.tol().dedup), domain.clone(), ctx)
}

/// Per output, the index of the local function that is active at `witness`.
pub fn active_function(ctrl: &TllController, witness: &[f64]) -> Vec<usize> {
    ctrl.active_indices(witness)
}

/// Lazy breadth-first stream of cells. Stops after the first error.
pub struct Cells<'c> {
    ctx: &'c Context,
    arr: Arrangement,
    domain: HPolytope,
    domain_norms: Vec<f64>,
    /// Per merged plane: the sign when constant over the domain.
    fixed: Vec<Option<Sign>>,
    crossing: Vec<usize>,
    queue: VecDeque<Vec<bool>>,
    visited: HashSet<Vec<u64>>,
    failed: bool,
}

struct Candidate {
    radius: f64,
    witness: Vec<f64>,
}

fn key(bits: &[bool]) -> Vec<u64> {
    let mut k = vec![0u64; bits.len().div_ceil(64).max(1)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            k[i / 64] |= 1 << (i % 64);
        }
    }
    k
}

/// Fixed, deterministic directions used to nudge a seed point off degenerate spots.
fn nudge_direction(n: usize, k: usize) -> Vec<f64> {
    const PHI: f64 = 0.618_033_988_749_894_8;
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            let t = ((i + 1) as f64 * PHI * (k + 1) as f64 + 0.5 * k as f64).fract();
            2.0 * t - 1.0
        })
        .collect();
    let s = norm2(&v).max(1e-300);
    v.iter_mut().for_each(|x| *x /= s);
    v
}

impl<'c> Cells<'c> {
    fn new(arr: Arrangement, domain: HPolytope, ctx: &'c Context) -> Result<Self> {
        let n = domain.dim();
        if let Some(h) = arr.planes.iter().find(|h| h.normal.len() != n) {
            return Err(Error::dim(format!(
                "hyperplane has dimension {} but the domain lives in R^{n}",
                h.normal.len()
            )));
        }
        let domain_norms = domain.rows().map(|(r, _)| norm2(r)).collect();
        let mut cells = Self {
            ctx,
            fixed: vec![None; arr.planes.len()],
            arr,
            domain,
            domain_norms,
            crossing: Vec::new(),
            queue: VecDeque::new(),
            visited: HashSet::new(),
            failed: false,
        };
        let tol = ctx.tol().cell;
        let Some((center, radius)) = cells.domain.chebyshev_center(ctx)? else {
            return Ok(cells);
        };
        if radius < tol {
            return Ok(cells);
        }
        let bb = cells.domain.bbox(ctx)?;
        for (k, h) in cells.arr.planes.iter().enumerate() {
            let (lo, hi) = h.range_over(&bb);
            let margin = tol * norm2(&h.normal);
            let sign = if hi <= margin {
                Some(Sign::Neg)
            } else if lo >= -margin {
                Some(Sign::Pos)
            } else {
                let max = cells.domain.lp(&h.normal, Sense::Maximize, ctx)?;
                let min = cells.domain.lp(&h.normal, Sense::Minimize, ctx)?;
                match (max, min) {
                    (LpOutcome::Optimal { value: hi, .. }, LpOutcome::Optimal { value: lo, .. }) => {
                        if hi - h.offset <= margin {
                            Some(Sign::Neg)
                        } else if lo - h.offset >= -margin {
                            Some(Sign::Pos)
                        } else {
                            None
                        }
                    }
                    (LpOutcome::Unbounded, _) | (_, LpOutcome::Unbounded) => return Err(Error::Unbounded),
                    _ => return Ok(cells),
                }
            };
            match sign {
                Some(s) => cells.fixed[k] = Some(s),
                None => cells.crossing.push(k),
            }
        }
        let mut seeds = vec![center.clone()];
        for k in 0..4 {
            let d = nudge_direction(n, k);
            seeds.push(center.iter().zip(&d).map(|(c, v)| c + 0.5 * radius * v).collect());
        }
        for p in seeds {
            let bits: Vec<bool> = cells
                .crossing
                .iter()
                .map(|&k| cells.arr.planes[k].eval(&p) >= 0.0)
                .collect();
            if cells.visited.insert(key(&bits)) {
                cells.queue.push_back(bits);
            }
        }
        Ok(cells)
    }

    pub fn arrangement(&self) -> &Arrangement {
        &self.arr
    }

    /// Indices (into the merged planes) of the planes that cut the domain.
    pub fn crossing(&self) -> &[usize] {
        &self.crossing
    }

    /// Sign of each merged plane that is constant over the domain.
    pub fn fixed_signs(&self) -> &[Option<Sign>] {
        &self.fixed
    }

    fn signed_row(&self, k: usize, pos: bool) -> (Vec<f64>, f64) {
        let h = &self.arr.planes[k];
        if pos {
            (h.normal.iter().map(|v| -v).collect(), -h.offset)
        } else {
            (h.normal.clone(), h.offset)
        }
    }

    fn inscribed_ball(&self, bits: &[bool]) -> Result<Option<Candidate>> {
        let n = self.domain.dim();
        let mut lifted = HPolytope::universe(n + 1);
        let mut row = vec![0.0; n + 1];
        for ((r, d), nr) in self.domain.rows().zip(&self.domain_norms) {
            row[..n].copy_from_slice(r);
            row[n] = *nr;
            lifted.push_row(&row, d);
        }
        for (&k, &pos) in self.crossing.iter().zip(bits) {
            let (r, d) = self.signed_row(k, pos);
            row[..n].copy_from_slice(&r);
            row[n] = norm2(&r);
            lifted.push_row(&row, d);
        }
        let mut obj = vec![0.0; n + 1];
        obj[n] = 1.0;
        match lifted.lp(&obj, Sense::Maximize, self.ctx)? {
            LpOutcome::Optimal { value, point } => Ok(Some(Candidate {
                radius: value,
                witness: point[..n].to_vec(),
            })),
            LpOutcome::Infeasible => Ok(None),
            LpOutcome::Unbounded => Err(Error::Unbounded),
        }
    }

    fn region(&self, bits: &[bool], keep: impl Fn(usize) -> bool) -> HPolytope {
        let mut p = self.domain.clone();
        for (j, (&k, &pos)) in self.crossing.iter().zip(bits).enumerate() {
            if keep(j) {
                let (r, d) = self.signed_row(k, pos);
                p.push_row(&r, d);
            }
        }
        p
    }

    /// Validate one candidate; queue its neighbours when it is at least thin.
    fn visit(&mut self, bits: Vec<bool>) -> Result<Option<Cell>> {
        let tol = self.ctx.tol().cell;
        let Some(cand) = self.inscribed_ball(&bits)? else {
            return Ok(None);
        };
        if cand.radius <= -tol {
            return Ok(None);
        }
        let full = self.region(&bits, |_| true);
        let bb = full.bbox(self.ctx)?;
        if bb.is_empty() {
            return Ok(None);
        }
        let touching: Vec<bool> = self
            .crossing
            .iter()
            .map(|&k| {
                let (lo, hi) = self.arr.planes[k].range_over(&bb);
                lo <= tol && hi >= -tol
            })
            .collect();
        for (j, &t) in touching.iter().enumerate() {
            if t {
                let mut nb = bits.clone();
                nb[j] = !nb[j];
                if self.visited.insert(key(&nb)) {
                    self.queue.push_back(nb);
                }
            }
        }
        if cand.radius < tol {
            return Ok(None);
        }
        let region = self.region(&bits, |j| touching[j]);
        let mut signs: Vec<Sign> = self.fixed.iter().map(|s| s.unwrap_or(Sign::Pos)).collect();
        for (&k, &pos) in self.crossing.iter().zip(&bits) {
            signs[k] = if pos { Sign::Pos } else { Sign::Neg };
        }
        Ok(Some(Cell {
            signs,
            region,
            witness: cand.witness,
            radius: cand.radius,
            active: None,
        }))
    }
}

impl Iterator for Cells<'_> {
    type Item = Result<Cell>;

    fn next(&mut self) -> Option<Result<Cell>> {
        if self.failed {
            return None;
        }
        while let Some(bits) = self.queue.pop_front() {
            match self.visit(bits) {
                Ok(Some(c)) => return Some(Ok(c)),
                Ok(None) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
        None
    }
}
