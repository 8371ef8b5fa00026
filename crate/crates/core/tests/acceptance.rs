//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits with a
//! non-zero status when any of them fails.

mod common;

use std::time::{Duration, Instant};

use common::{
    brute_eval, brute_eval_ctrl, brute_force_cell_count, closed_loop, generic_lines, max_norm, sample_2d,
    tll_extrema_2d, vertices_2d,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tllreach::exact::controller_cells;
use tllreach::io::{to_json_string, ReachResultJson};
use tllreach::random::{random_controller, random_rotation, rotated_box};
use tllreach::{
    enumerate_cells, one_step_exact, one_step_exact_bbox, one_step_grid_bbox, one_step_ltllbox, output_max,
    output_min, propagate, random_problem, realized_functions, verify_lower_bound, BoundingBox, Context, Method,
    MethodChoice,
};

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Instances shared by the first two criteria: n = 2, m = 1, N = M in {4, 8}.
fn small_instances() -> Vec<(usize, u64)> {
    [4usize, 8].iter().flat_map(|&k| (0..10).map(move |s| (k, 1000 * k as u64 + s))).collect()
}

fn exact_soundness() -> Outcome {
    let start = Instant::now();
    let ctx = Context::default();
    let mut worst = 0.0f64;
    for (k, seed) in small_instances() {
        let (c, s, x0) = random_problem(2, 1, k, k, seed).map_err(|e| e.to_string())?;
        let reach = one_step_exact(&s, &c, &x0, &ctx).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in sample_2d(&x0, 10_000, &mut rng) {
            let y = closed_loop(s.a(), s.b(), &c, &x);
            let v = reach
                .pieces
                .iter()
                .map(|p| p.polytope.rows().map(|(r, d)| r[0] * y[0] + r[1] * y[1] - d).fold(f64::MIN, f64::max))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(v);
            ensure(reach.contains(&y, 1e-7), || format!("N={k} seed={seed}: image {y:?} outside the piece union"))?;
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(60), || format!("took {t:?}"))?;
    Ok(format!("20 instances x 10^4 samples, worst violation {worst:.1e}, {:.2}s", t.as_secs_f64()))
}

fn box_agreement() -> Outcome {
    let ctx = Context::default();
    let eps = 0.1;
    let (mut gap_grid, mut gap_ltll) = (0.0f64, 0.0f64);
    for (k, seed) in small_instances() {
        let (c, s, x0) = random_problem(2, 1, k, k, seed).map_err(|e| e.to_string())?;
        let exact = one_step_exact_bbox(&s, &c, &x0, &ctx).map_err(|e| e.to_string())?;
        let grid = one_step_grid_bbox(&s, &c, c.lipschitz_bound(), &x0, eps, &ctx).map_err(|e| e.to_string())?;
        let ltll = one_step_ltllbox(&s, &c, &x0, eps, &ctx).map_err(|e| e.to_string())?;
        for (name, b, gap) in [("grid", &grid, &mut gap_grid), ("ltllbox", &ltll, &mut gap_ltll)] {
            ensure(b.contains_box(&exact, 1e-7), || format!("{name} misses the exact box, seed {seed}"))?;
            let g = b.max_face_gap(&exact);
            *gap = gap.max(g);
            ensure(g <= eps + 1e-7, || format!("{name} face gap {g} > eps, seed {seed}"))?;
        }
    }
    Ok(format!("max face gap grid {gap_grid:.4}, ltllbox {gap_ltll:.4} (eps {eps})"))
}

fn verifier_equivalence() -> Outcome {
    let ctx = Context::default();
    let tol = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for pair in 0..50 {
        let big_n = rng.gen_range(1..=6);
        let c = random_controller(2, 1, big_n, rng.gen_range(1..=6), &mut rng).map_err(|e| e.to_string())?;
        let t = &c.components()[0];
        let q = random_rotation(2, &mut rng);
        let center = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let h = rng.gen_range(0.05..0.12);
        let p = rotated_box(&q, &center, h).map_err(|e| e.to_string())?;

        // Extrema over every cell of the pairwise-difference arrangement.
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for cell in controller_cells(&c, &p, &ctx).map_err(|e| e.to_string())? {
            let i = cell.active.as_ref().expect("active set")[0];
            for v in vertices_2d(&cell.region) {
                let f = t.local(i, &v);
                lo = lo.min(f);
                hi = hi.max(f);
            }
        }
        let (vlo, vhi) = tll_extrema_2d(t, &p);
        ensure((lo - vlo).abs() < 1e-7 && (hi - vhi).abs() < 1e-7, || {
            format!("pair {pair}: cell oracle [{lo}, {hi}] disagrees with vertex oracle [{vlo}, {vhi}]")
        })?;
        let got_hi = output_max(t, &p, &ctx).map_err(|e| e.to_string())?;
        let got_lo = output_min(t, &p, tol, &ctx).map_err(|e| e.to_string())?;
        worst = worst.max((got_hi - hi).abs()).max((got_lo - lo).abs());
        ensure((got_hi - hi).abs() <= tol + 1e-7, || format!("pair {pair}: max {got_hi} vs {hi}"))?;
        ensure(got_lo <= lo + 1e-7 && got_lo >= lo - tol - 1e-7, || format!("pair {pair}: min {got_lo} vs {lo}"))?;

        // 317^2 >= 10^5 points on a regular grid in the box's own frame.
        let k = 317;
        let mut sampled = f64::INFINITY;
        for a in 0..k {
            for b in 0..k {
                let u = [h * (2.0 * a as f64 / (k - 1) as f64 - 1.0), h * (2.0 * b as f64 / (k - 1) as f64 - 1.0)];
                let x = [
                    center[0] + q[(0, 0)] * u[0] + q[(0, 1)] * u[1],
                    center[1] + q[(1, 0)] * u[0] + q[(1, 1)] * u[1],
                ];
                sampled = sampled.min(brute_eval(t, &x));
            }
        }
        for (a, expect) in [(sampled - 1e-3, true), (sampled + 1e-3, false)] {
            let r = verify_lower_bound(t, &p, a, &ctx).map_err(|e| e.to_string())?;
            ensure(r.holds == expect, || format!("pair {pair}: NN >= {a} answered {}", r.holds))?;
        }
    }
    Ok(format!("50 pairs, worst extremum error {worst:.1e} (tol {tol:.0e})"))
}

fn lipschitz_bound() -> Outcome {
    let ctx = Context::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_ratio = 0.0f64;
    for _ in 0..20 {
        let c = random_controller(2, 1, rng.gen_range(1..10), rng.gen_range(1..10), &mut rng)
            .map_err(|e| e.to_string())?;
        let l = c.lipschitz_bound();
        for _ in 0..10_000 {
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let y = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let q = (brute_eval_ctrl(&c, &x)[0] - brute_eval_ctrl(&c, &y)[0]).abs() / max_norm(&[x[0] - y[0], x[1] - y[1]]);
            worst_ratio = worst_ratio.max(q / l);
            ensure(q <= l * (1.0 + 1e-12), || format!("quotient {q} exceeds bound {l}"))?;
        }
    }
    let domain = BoundingBox::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap().to_polytope().unwrap();
    let mut found = 0;
    let mut worst_gap = 0.0f64;
    for _ in 0..500 {
        if found == 10 {
            break;
        }
        let big_n = rng.gen_range(2..=5);
        let c = random_controller(2, 1, big_n, rng.gen_range(1..=5), &mut rng).map_err(|e| e.to_string())?;
        if realized_functions(&c, &domain, &ctx).map_err(|e| e.to_string())?[0].len() != big_n {
            continue;
        }
        found += 1;
        let t = &c.components()[0];
        let mut best = 0.0f64;
        for cell in controller_cells(&c, &domain, &ctx).map_err(|e| e.to_string())? {
            let w = t.weight(cell.active.as_ref().expect("active set")[0]);
            let step = 0.9 * cell.radius / std::f64::consts::SQRT_2;
            let dir = [if w[0] >= 0.0 { 1.0 } else { -1.0 }, if w[1] >= 0.0 { 1.0 } else { -1.0 }];
            let x = &cell.witness;
            let y = [x[0] + step * dir[0], x[1] + step * dir[1]];
            best = best.max((brute_eval(t, &y) - brute_eval(t, x)).abs() / step);
        }
        let gap = (c.lipschitz_bound() - best).abs();
        worst_gap = worst_gap.max(gap);
        ensure(gap <= 1e-6, || format!("in-cell quotient {best} vs bound {}", c.lipschitz_bound()))?;
    }
    ensure(found == 10, || format!("only {found} non-degenerate controllers found"))?;
    Ok(format!(
        "max sampled quotient/bound {worst_ratio:.4}; 10 non-degenerate controllers, worst tightness gap {worst_gap:.1e}"
    ))
}

fn arrangement_count() -> Outcome {
    let ctx = Context::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..=12 {
        for _ in 0..3 {
            let (planes, domain) = generic_lines(k, &mut rng);
            let got = enumerate_cells(&planes, &domain, &ctx).map_err(|e| e.to_string())?.count();
            let formula = 1 + k + k * k.saturating_sub(1) / 2;
            let brute = brute_force_cell_count(&planes, &domain);
            ensure(got == formula && got == brute, || format!("K={k}: got {got}, formula {formula}, brute force {brute}"))?;
        }
    }
    Ok("K = 0..12, 3 line sets each".into())
}

fn propagation_soundness() -> Outcome {
    let ctx = Context::default();
    let mut slowest = Duration::ZERO;
    let mut total = Duration::ZERO;
    for k in [8usize, 16, 24, 32] {
        for seed in 0..10u64 {
            let (c, s, x0) = random_problem(2, 1, k, k, seed).map_err(|e| e.to_string())?;
            let start = Instant::now();
            let p = propagate(&s, &c, &x0, 0.1, 3, MethodChoice::Fixed(Method::LTllBox), &ctx)
                .map_err(|e| format!("N={k} seed={seed}: {e}"))?;
            let t = start.elapsed();
            slowest = slowest.max(t);
            total += t;
            ensure(t < Duration::from_secs(600), || format!("N={k} seed={seed} took {t:?}"))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for mut x in sample_2d(&x0, 10_000, &mut rng) {
                for (step, b) in p.boxes.iter().enumerate() {
                    x = closed_loop(s.a(), s.b(), &c, &x);
                    ensure(b.contains_point(&x, 1e-9), || {
                        format!("N={k} seed={seed}: state {x:?} escapes box {}", step + 1)
                    })?;
                }
            }
        }
    }
    Ok(format!(
        "40 instances, T=3, 10^4 trajectories each; slowest {:.2}s, total {:.2}s",
        slowest.as_secs_f64(),
        total.as_secs_f64()
    ))
}

fn determinism() -> Outcome {
    let max_threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).max(8);
    let run = |threads: usize, k: usize, seed: u64, choice: MethodChoice| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        pool.install(|| {
            let ctx = Context::default();
            let (c, s, x0) = random_problem(2, 1, k, k, seed).map_err(|e| e.to_string())?;
            let p = propagate(&s, &c, &x0, 0.1, 3, choice, &ctx).map_err(|e| e.to_string())?;
            let mut out = ReachResultJson::new(&p, ctx.stats.snapshot(), None);
            let pieces = one_step_exact(&s, &c, &x0, &ctx).map_err(|e| e.to_string())?;
            out.pieces = Some(pieces.to_json().pieces);
            Ok(to_json_string(&out))
        })
    };
    let mut runs = 0;
    for (k, seed) in [(8usize, 1u64), (16, 2), (24, 3), (32, 4)] {
        for choice in [MethodChoice::Fixed(Method::LTllBox), MethodChoice::Auto] {
            let reference = run(max_threads, k, seed, choice)?;
            for threads in [max_threads, 1] {
                ensure(run(threads, k, seed, choice)? == reference, || {
                    format!("N={k} seed={seed} {choice:?}: output differs with {threads} threads")
                })?;
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} repeated runs byte-identical (1 and {max_threads} threads)"))
}

fn main() {
    let criteria: [(&str, Check); 7] = [
        ("exact reach soundness", exact_soundness),
        ("box cross-method agreement", box_agreement),
        ("verifier oracle equivalence", verifier_equivalence),
        ("Lipschitz bound sound and tight", lipschitz_bound),
        ("planar arrangement count", arrangement_count),
        ("propagation soundness", propagation_soundness),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
