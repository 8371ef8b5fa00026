//! Independent reference implementations used as test oracles. None of these
//! call into the LP solver or the arrangement code.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tllreach::{BoundingBox, HPolytope, Hyperplane, ScalarTll, TllController};

/// Nested-loop evaluation of `max_j min_{i in s_j} (w_i . x + b_i)`.
pub fn brute_eval(t: &ScalarTll, x: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for s in t.selectors() {
        let mut group = f64::INFINITY;
        for &i in s {
            let mut v = t.bias(i);
            for (w, xi) in t.weight(i).iter().zip(x) {
                v += w * xi;
            }
            if v < group {
                group = v;
            }
        }
        if group > best {
            best = group;
        }
    }
    best
}

pub fn brute_eval_ctrl(c: &TllController, x: &[f64]) -> Vec<f64> {
    c.components().iter().map(|t| brute_eval(t, x)).collect()
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Vertices of a bounded planar polytope by intersecting every pair of
/// constraint lines and keeping the feasible intersections.
pub fn vertices_2d(p: &HPolytope) -> Vec<[f64; 2]> {
    assert_eq!(p.dim(), 2);
    let rows: Vec<(&[f64], f64)> = p.rows().collect();
    let scale = rows
        .iter()
        .map(|(r, d)| max_norm(r).max(d.abs()))
        .fold(1.0f64, f64::max);
    let mut out: Vec<[f64; 2]> = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let (a, da) = rows[i];
            let (b, db) = rows[j];
            let det = a[0] * b[1] - a[1] * b[0];
            if det.abs() < 1e-12 * max_norm(a).max(1e-300) * max_norm(b).max(1e-300) {
                continue;
            }
            let x = (da * b[1] - a[1] * db) / det;
            let y = (a[0] * db - da * b[0]) / det;
            let ok = rows
                .iter()
                .all(|(r, d)| r[0] * x + r[1] * y <= d + 1e-9 * scale.max(1.0) * (1.0 + x.abs() + y.abs()));
            if ok && !out.iter().any(|v| (v[0] - x).abs() < 1e-9 && (v[1] - y).abs() < 1e-9) {
                out.push([x, y]);
            }
        }
    }
    out
}

pub fn vertex_box(vs: &[[f64; 2]]) -> BoundingBox {
    let mut lo = vec![f64::INFINITY; 2];
    let mut hi = vec![f64::NEG_INFINITY; 2];
    for v in vs {
        for i in 0..2 {
            lo[i] = lo[i].min(v[i]);
            hi[i] = hi[i].max(v[i]);
        }
    }
    BoundingBox { lo, hi }
}

/// Direct constraint check without any tolerance scaling.
pub fn inside(p: &HPolytope, x: &[f64], tol: f64) -> bool {
    p.rows().all(|(r, d)| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() <= d + tol)
}

/// Uniform samples from a planar polytope by rejection from its vertex box.
pub fn sample_2d(p: &HPolytope, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let bb = vertex_box(&vertices_2d(p));
    let mut out = Vec::with_capacity(count);
    let mut tries = 0usize;
    while out.len() < count {
        tries += 1;
        assert!(tries < 1000 * count + 100_000, "rejection sampling stalled");
        let x = vec![rng.gen_range(bb.lo[0]..=bb.hi[0]), rng.gen_range(bb.lo[1]..=bb.hi[1])];
        if inside(p, &x, 0.0) {
            out.push(x);
        }
    }
    out
}

/// A random bounded planar polytope: `k` tangent lines of a circle with random
/// angles, plus a bounding square so it is always compact.
pub fn random_polytope_2d(k: usize, rng: &mut ChaCha8Rng) -> HPolytope {
    let cx = rng.gen_range(-1.0..1.0);
    let cy = rng.gen_range(-1.0..1.0);
    let mut rows = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
    let h = rng.gen_range(0.8..1.5);
    let mut d = vec![cx + h, -cx + h, cy + h, -cy + h];
    for _ in 0..k {
        let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let r = rng.gen_range(0.5..1.2);
        let (s, c) = a.sin_cos();
        rows.push(vec![c, s]);
        d.push(c * cx + s * cy + r);
    }
    HPolytope::from_rows(2, &rows, &d).unwrap()
}

/// The closed-loop successor `A x + B NN(x)` computed by plain loops.
pub fn closed_loop(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>, c: &TllController, x: &[f64]) -> Vec<f64> {
    let u = brute_eval_ctrl(c, x);
    (0..a.nrows())
        .map(|i| {
            (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum::<f64>() + (0..b.ncols()).map(|k| b[(i, k)] * u[k]).sum::<f64>()
        })
        .collect()
}

/// Exact minimum and maximum of a scalar TLL over a planar polytope. The
/// function is affine between the lines `l_i = l_j`, so both extrema are
/// attained where two of those lines or constraint lines cross inside `p`.
pub fn tll_extrema_2d(t: &ScalarTll, p: &HPolytope) -> (f64, f64) {
    let mut lines: Vec<([f64; 2], f64)> = p.rows().map(|(r, d)| ([r[0], r[1]], d)).collect();
    for i in 0..t.num_functions() {
        for j in i + 1..t.num_functions() {
            let (wi, wj) = (t.weight(i), t.weight(j));
            let w = [wi[0] - wj[0], wi[1] - wj[1]];
            if max_norm(&w) > 1e-12 {
                lines.push((w, t.bias(j) - t.bias(i)));
            }
        }
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for a in 0..lines.len() {
        for b in a + 1..lines.len() {
            let ((u, du), (v, dv)) = (lines[a], lines[b]);
            let det = u[0] * v[1] - u[1] * v[0];
            if det.abs() < 1e-12 * max_norm(&u) * max_norm(&v) {
                continue;
            }
            let x = [(du * v[1] - u[1] * dv) / det, (u[0] * dv - du * v[0]) / det];
            if inside(p, &x, 1e-9) {
                let f = brute_eval(t, &x);
                lo = lo.min(f);
                hi = hi.max(f);
            }
        }
    }
    (lo, hi)
}

/// A regular `k x k` grid over an axis-aligned box, boundaries included.
pub fn grid_2d(b: &BoundingBox, k: usize) -> impl Iterator<Item = [f64; 2]> + '_ {
    (0..k).flat_map(move |i| {
        (0..k).map(move |j| {
            let s = i as f64 / (k - 1) as f64;
            let t = j as f64 / (k - 1) as f64;
            [b.lo[0] + s * (b.hi[0] - b.lo[0]), b.lo[1] + t * (b.hi[1] - b.lo[1])]
        })
    })
}

/// Area of the convex polygon with the given vertices (any order).
pub fn polygon_area(vs: &[[f64; 2]]) -> f64 {
    if vs.len() < 3 {
        return 0.0;
    }
    let cx = vs.iter().map(|v| v[0]).sum::<f64>() / vs.len() as f64;
    let cy = vs.iter().map(|v| v[1]).sum::<f64>() / vs.len() as f64;
    let mut sorted = vs.to_vec();
    sorted.sort_by(|a, b| (a[1] - cy).atan2(a[0] - cx).total_cmp(&(b[1] - cy).atan2(b[0] - cx)));
    let mut a = 0.0;
    for i in 0..sorted.len() {
        let p = sorted[i];
        let q = sorted[(i + 1) % sorted.len()];
        a += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * a.abs()
}

/// Number of sign vectors whose closed region has positive area, by brute force
/// over all `2^K` vectors and vertex enumeration.
pub fn brute_force_cell_count(planes: &[Hyperplane], domain: &HPolytope) -> usize {
    let k = planes.len();
    let mut count = 0;
    for mask in 0u32..(1 << k) {
        let mut p = domain.clone();
        for (j, h) in planes.iter().enumerate() {
            let other = if mask >> j & 1 == 1 {
                HPolytope::from_rows(2, &[h.normal.iter().map(|v| -v).collect()], &[-h.offset]).unwrap()
            } else {
                HPolytope::from_rows(2, std::slice::from_ref(&h.normal), &[h.offset]).unwrap()
            };
            p = p.intersect(&other).unwrap();
        }
        if polygon_area(&vertices_2d(&p)) > 1e-10 {
            count += 1;
        }
    }
    count
}

/// `k` lines in general position and a square holding all their crossings.
pub fn generic_lines(k: usize, rng: &mut ChaCha8Rng) -> (Vec<Hyperplane>, HPolytope) {
    let planes: Vec<Hyperplane> = (0..k)
        .map(|_| {
            let a: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            Hyperplane::new(vec![a.cos(), a.sin()], rng.gen_range(-1.0..1.0))
        })
        .collect();
    let mut reach: f64 = 2.0;
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (&planes[i], &planes[j]);
            let det = a.normal[0] * b.normal[1] - a.normal[1] * b.normal[0];
            let x = (a.offset * b.normal[1] - a.normal[1] * b.offset) / det;
            let y = (a.normal[0] * b.offset - a.offset * b.normal[0]) / det;
            reach = reach.max(x.abs()).max(y.abs());
        }
    }
    let l = 2.0 * reach;
    let domain = BoundingBox::new(vec![-l, -l], vec![l, l]).unwrap().to_polytope().unwrap();
    (planes, domain)
}
