//! Acceptance criteria 1-12. Each test prints one `criterion N: PASS|FAIL ...` line and
//! fails when the criterion does.

use std::fs;
use std::time::{Duration, Instant};

use batchelor_core::diagnostics::{
    batchelor_curve, correlation_series, flux_report, flux_series_term, n0_term_closed_form, offdiagonal_sum,
    projected_correlation, projected_correlation_dual, projection_sandwich, OffDiagonalConfig,
};
use batchelor_core::evolution::{
    continuous_solution, discrete_step, duhamel_solution, effective_forcing, max_difference, ForcingSpec, TimeProfile,
};
use batchelor_core::fields::{KernelSpec, ScalarClosure};
use batchelor_core::geometry::{
    backward_generation, bad_generation_counts, build_singularity, children_of, forward_generation, jacobian_sums,
    multi_intersections, singular_crossings, spanning_spacing, GenerationOptions, TorusSegment, DEFAULT_GUARD,
};
use batchelor_core::norms::{transfer_decay_series, CurveDictionary, QuadOptions};
use batchelor_core::torus::{
    branch_matrix, branch_spectra, cone_invariance_check, derivative_cocycle, forward_map, inverse_map, iterate, BranchId,
    Direction, TorusPoint,
};
use batchelor_lab::{run, Experiment, ExperimentConfig};
use batchelor_lab_acceptance::{p, random_stable, report, serial};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn criterion_01_exact_dynamics() {
    let _serial = serial();
    let t = Instant::now();
    let mut fails = Vec::new();
    let mut worst_det: f64 = 0.0;
    for a in [4.0, 8.0, 8.5, 16.0, 32.0, 64.0] {
        let q = p(a);
        for direction in [Direction::Forward, Direction::Backward] {
            for index in 1..=4 {
                worst_det = worst_det.max((branch_matrix(BranchId { index, direction }, &q).linear.det() - 1.0).abs());
            }
        }
    }
    if worst_det > 1e-12 {
        fails.push(format!("det error {worst_det:e}"));
    }
    let mut worst_round: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for a in [4.0, 8.0, 8.5, 16.0, 32.0] {
        let q = p(a);
        for _ in 0..10_000 {
            let z = TorusPoint::new(rng.gen(), rng.gen());
            worst_round = worst_round.max(inverse_map(forward_map(z, &q), &q).dist(&z));
            worst_round = worst_round.max(forward_map(inverse_map(z, &q), &q).dist(&z));
        }
    }
    if worst_round > 1e-12 {
        fails.push(format!("round trip {worst_round:e}"));
    }
    let z = TorusPoint::new(0.25, 0.25);
    let fp = forward_map(z, &p(8.0)).dist(&z);
    if fp > 1e-12 {
        fails.push(format!("fixed point off by {fp:e}"));
    }
    for a in [16.0, 32.0, 64.0] {
        for b in branch_spectra(&p(a)) {
            let lu = b.lambda_u.abs();
            let distinct = (b.lambda_u - b.lambda_s).abs() > 1e-9;
            if !(distinct && lu >= a * a - 3.0 && lu <= a * a + 3.0 && ((b.lambda_u * b.lambda_s).abs() - 1.0).abs() < 1e-9)
            {
                fails.push(format!("eigenvalues at alpha={a} branch {}: {:?}", b.branch, b));
            }
        }
        let rep = cone_invariance_check(&p(a), 10_000, 7);
        if !rep.passed() {
            fails.push(format!("cone check at alpha={a}: {} failures", rep.failures.len()));
        }
    }
    report(
        1,
        fails.is_empty(),
        t,
        Duration::from_secs(5),
        format!("det err {worst_det:.1e}, round trip {worst_round:.1e}, fixed point {fp:.1e}; {}", fails.join("; ")),
    );
}

#[test]
fn criterion_02_geometry_exact() {
    let _serial = serial();
    let t = Instant::now();
    let mut fails = Vec::new();
    let mut worst_len: f64 = 0.0;
    for a in [8.0, 16.0] {
        let q = p(a);
        let fam = build_singularity(Direction::Backward, &q);
        if fam.segments.len() != 6 {
            fails.push(format!("alpha={a}: {} segments", fam.segments.len()));
        }
        let want = (a * a + 0.25f64).sqrt();
        for s in fam.segments.iter().filter(|s| s.dir[0] != 0.0 && s.dir[1] != 0.0) {
            worst_len = worst_len.max((s.length - want).abs());
        }
        let m = multi_intersections(1, &q, 1e-9, DEFAULT_GUARD).unwrap();
        let targets = [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)];
        let all_hit = targets.iter().all(|(x, y)| m.points.iter().any(|z| z.dist(&TorusPoint::new(*x, *y)) < 1e-10));
        if m.points.len() != 4 || !all_hit {
            fails.push(format!("alpha={a}: M1 = {:?}", m.points));
        }
        let sp = spanning_spacing(&q);
        let want_sp = 1.0 / (2.0 * (1.0 + a * a).sqrt());
        if (sp - want_sp).abs() > 1e-10 {
            fails.push(format!("alpha={a}: spacing {sp} vs {want_sp}"));
        }
    }
    if worst_len > 1e-10 {
        fails.push(format!("slanted length off sqrt(a^2+1/4) by {worst_len:.4}"));
    }
    report(2, fails.is_empty(), t, Duration::from_secs(1), fails.join("; "));
}

#[test]
fn criterion_03_counting_bounds() {
    let _serial = serial();
    let t = Instant::now();
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut max_short = 0;
    let mut max_cross = 0;
    // C0: most bad children of a single admissible curve, measured on the random sample at alpha = 16.
    let mut c0 = 0;
    for a in [16.0, 32.0] {
        let q = p(a);
        for _ in 0..500 {
            let w = random_stable(&mut rng, &q, 2.0);
            let g = backward_generation(&w, 1, &q, &GenerationOptions::default()).unwrap();
            let counts = &bad_generation_counts(&g)[1];
            max_short = max_short.max(counts.max_short_per_parent);
            if a == 16.0 {
                c0 = c0.max(counts.max_bad_per_parent);
            }
            let short = random_stable(&mut rng, &q, 1.0 / (4.0 * a));
            max_cross = max_cross.max(singular_crossings(&short, &q, Direction::Backward));
        }
    }
    if max_short > 10 {
        fails.push(format!("#S(W) = {max_short}"));
    }
    if max_cross > 3 {
        fails.push(format!("#(W cap S-) = {max_cross}"));
    }

    // Exact children of every sampled parent at levels 0..=4, i.e. bad curves at levels 1..=5.
    let q = p(16.0);
    let mut per_level = vec![0usize; 6];
    for s in 0..20u64 {
        let w = random_stable(&mut rng, &q, 2.0);
        let g = backward_generation(&w, 4, &q, &GenerationOptions::sampled(300, s)).unwrap();
        for (k, lvl) in g.levels.iter().enumerate() {
            for (i, r) in lvl.iter().enumerate() {
                let bad = children_of(r, i, k, &q, Direction::Backward).iter().filter(|c| !c.is_good()).count();
                per_level[k + 1] = per_level[k + 1].max(bad);
            }
        }
    }
    if per_level[1..].iter().any(|&c| c > c0) {
        fails.push(format!("bad per parent {:?} exceeds C0 = {c0}", &per_level[1..]));
    }

    let mut fwd = Vec::new();
    let q = p(32.0);
    let a = 32.0f64;
    for s in 0..5u64 {
        let y: f64 = rng.gen();
        let w = TorusSegment::new(TorusPoint::new(rng.gen(), y), [1.0, 0.0], 1.0 + rng.gen::<f64>());
        let g = forward_generation(&w, 4, &q, &GenerationOptions::sampled(2000, s)).unwrap();
        for n in 1..=4 {
            let bound = 4.0 * (2.0 * a).powi(2 * n as i32);
            let r = g.short_long_ratio(n);
            if g.count(n) > bound || r > 160.0 / (a * a) {
                fails.push(format!("forward n={n}: count {:.3e} vs {bound:.3e}, r_n {r:.3e}", g.count(n)));
            }
            if s == 0 {
                fwd.push(format!("n{n}: {:.2e}/{:.2e} r={r:.1e}", g.count(n), bound));
            }
        }
    }

    let q = p(8.0);
    let mut cs = Vec::new();
    for n in 1..=3 {
        let m = multi_intersections(n, &q, 1e-9, DEFAULT_GUARD).unwrap();
        let c = m.points.len() as f64 / 16f64.powi(2 * n as i32);
        cs.push(format!("{c:.4}"));
        if c > 10.0 {
            fails.push(format!("M_{n}: C = {c}"));
        }
    }
    report(
        3,
        fails.is_empty(),
        t,
        Duration::from_secs(120),
        format!(
            "#S max {max_short}, crossings max {max_cross}, C0 {c0} per level {:?}, forward [{}], M_n C [{}]; {}",
            &per_level[1..],
            fwd.join(", "),
            cs.join(", "),
            fails.join("; ")
        ),
    );
}

#[test]
fn criterion_04_jacobian_complexity() {
    let _serial = serial();
    let t = Instant::now();
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let q = p(16.0);
    let mut worst: f64 = 0.0;
    for s in 0..10u64 {
        let w = random_stable(&mut rng, &q, 2.0);
        let g = backward_generation(&w, 3, &q, &GenerationOptions::sampled(500, s)).unwrap();
        let root = w;
        for n in 1..=3 {
            for r in g.level(n) {
                let seg = r.segment;
                let mid = seg.point_at(seg.length / 2.0);
                // Forward iteration of a stable tangent loses ~alpha^4 digits per step, so
                // measure from the image side: DT^{-n} at T^n(mid) only expands W's tangent.
                let top = iterate(mid, n, Direction::Forward, &q);
                let c = derivative_cocycle(top, n, Direction::Backward, &q);
                let v = c.matrix.apply(root.dir);
                let image = seg.length / v[0].hypot(v[1]);
                worst = worst.max((seg.length * r.jacobian - image).abs() / image);
            }
        }
    }
    if worst > 1e-9 {
        fails.push(format!("|W_i||J| vs |T(W_i)| relative error {worst:e}"));
    }
    let mut max_sum: f64 = 0.0;
    for s in 0..100u64 {
        let w = TorusSegment::new(TorusPoint::new(rng.gen(), 0.0), [0.0, 1.0], 1.0);
        let g = backward_generation(&w, 6, &q, &GenerationOptions::sampled(1000, s)).unwrap();
        for n in 0..=6 {
            max_sum = max_sum.max(jacobian_sums(&g, n, 0.0).0);
        }
    }
    if max_sum > 3.0 {
        fails.push(format!("Jacobian sum {max_sum}"));
    }
    report(
        4,
        fails.is_empty(),
        t,
        Duration::from_secs(60),
        format!("relative error {worst:.1e}, max sum |J| {max_sum:.4}; {}", fails.join("; ")),
    );
}

#[test]
fn criterion_05_mixing_decay() {
    let _serial = serial();
    let t = Instant::now();
    let f = ScalarClosure::unit_sine_y();
    let mut fails = Vec::new();
    let mut rates = Vec::new();
    let mut detail = Vec::new();
    for a in [8.0, 16.0, 32.0] {
        let s = correlation_series(&f, &f, 4, 8192, &p(a)).unwrap();
        let used: Vec<(usize, f64)> = s.rows.iter().filter(|r| r.n >= 1 && !r.aliased).map(|r| (r.n, r.value)).collect();
        detail.push(format!(
            "alpha={a}: unaliased {:?}, rate {:.3}",
            used.iter().map(|(n, v)| format!("{n}:{v:.1e}")).collect::<Vec<_>>(),
            s.fit.rate
        ));
        if used.windows(2).any(|w| w[1].1 >= w[0].1) {
            fails.push(format!("alpha={a} not monotone"));
        }
        if !s.fit.is_defined() {
            fails.push(format!("alpha={a}: fit undefined ({} usable points)", s.fit.used));
        }
        rates.push(s.fit.rate);
    }
    if !(rates[0] < rates[1] && rates[1] < rates[2]) {
        fails.push(format!("rates not increasing: {rates:?}"));
    }
    report(5, fails.is_empty(), t, Duration::from_secs(300), format!("{}; {}", detail.join(" | "), fails.join("; ")));
}

#[test]
fn criterion_06_projected_mixing() {
    let _serial = serial();
    let t = Instant::now();
    let f = ScalarClosure::unit_sine_y();
    let g = ScalarClosure::sine_x(1.0, 1).add(&f);
    let q = p(16.0);
    let grid = 1024;
    let mut fails = Vec::new();
    let mut worst_dual: f64 = 0.0;
    for (n, m) in [(0, 1), (1, 2), (2, 3)] {
        let ker = KernelSpec::new(16.0);
        let a = projected_correlation(&g, &f, n, m, &ker, grid, &q).unwrap().value;
        let b = projected_correlation_dual(&g, &f, n, m, &ker, grid, &q).unwrap();
        worst_dual = worst_dual.max((a - b).abs());
    }
    if worst_dual > 1e-9 {
        fails.push(format!("duality error {worst_dual:e}"));
    }
    let cutoffs = [8.0, 16.0, 32.0, 64.0];
    let mut maxima = Vec::new();
    let mut rows = Vec::new();
    for n in 1..=3 {
        let vals: Vec<(f64, bool)> = cutoffs
            .iter()
            .map(|c| {
                let v = projected_correlation(&f, &f, n, n + 1, &KernelSpec::new(*c), grid, &q).unwrap();
                (v.value.abs(), v.aliased)
            })
            .collect();
        for w in vals.windows(2) {
            if w[1].0 > 1.1 * w[0].0 && w[1].0 > 1e-14 {
                fails.push(format!("n={n}: grows with N ({:.3e} -> {:.3e})", w[0].0, w[1].0));
            }
        }
        let mx = vals.iter().map(|v| v.0).fold(0.0, f64::max);
        rows.push(format!("n={n} max {mx:.3e} alias {}", vals.iter().any(|v| v.1)));
        maxima.push(mx);
    }
    if !(maxima[1] < maxima[0] && maxima[2] < maxima[1]) {
        fails.push(format!("maxima not decaying: {maxima:?}"));
    }
    report(
        6,
        fails.is_empty(),
        t,
        Duration::from_secs(300),
        format!("duality err {worst_dual:.1e}; {}; {}", rows.join(", "), fails.join("; ")),
    );
}

#[test]
fn criterion_07_cumulative_batchelor() {
    let _serial = serial();
    let t = Instant::now();
    let f = ScalarClosure::unit_sine_y();
    let cutoffs: Vec<f64> = (4..=64).map(|n| n as f64).collect();
    let mut fails = Vec::new();
    let mut slopes = Vec::new();
    let mut detail = Vec::new();
    for a in [8.0, 16.0] {
        let r = batchelor_curve(&f, 6, &cutoffs, (4.0, 64.0), 4096, &p(a)).unwrap();
        detail.push(format!("alpha={a}: slope {:.4} R2 {:.3} aliased {}", r.slope, r.r_squared, r.field_aliased));
        if !(r.r_squared >= 0.9) {
            fails.push(format!("alpha={a}: R2 {:.3}", r.r_squared));
        }
        slopes.push(r.slope);
    }
    let ratio = slopes[0] / slopes[1];
    let (lo, hi) = (4.0 / 3.0 * 0.65, 4.0 / 3.0 * 1.35);
    if !(ratio >= lo && ratio <= hi) {
        fails.push(format!("slope ratio {ratio:.3} outside [{lo:.3}, {hi:.3}]"));
    }
    let cfg = OffDiagonalConfig::new(32.0, 6, None).unwrap();
    let off = offdiagonal_sum(&f, &KernelSpec::new(32.0), &cfg, 4096, &p(16.0)).unwrap();
    let frac = off.value / off.diagonal;
    if !(frac < 0.25) {
        fails.push(format!("off-diagonal fraction {frac:.3}"));
    }
    report(
        7,
        fails.is_empty(),
        t,
        Duration::from_secs(600),
        format!("{}; ratio {ratio:.3}; offdiag/diag {frac:.4}; {}", detail.join(", "), fails.join("; ")),
    );
}

#[test]
fn criterion_08_flux() {
    let _serial = serial();
    let t = Instant::now();
    let forcing = ForcingSpec::<f64>::default_separable();
    let mut fails = Vec::new();
    let rep = flux_report(&forcing, &[8.0, 16.0, 32.0, 64.0], 6, 64, 256, &p(32.0)).unwrap();
    let eta = TimeProfile::Bump { mass: 1.0 };
    let closed = 1.0 * eta.first_moment();
    let first = rep.first_term.value;
    if (first - closed).abs() > 1e-8 || (first - 0.25).abs() > 1e-8 {
        fails.push(format!("first term {first:.10} vs |h|^2 int eta (t-1/2) = {closed:.10} and 1/4"));
    }
    let mut n0 = Vec::new();
    for a in [8.0, 16.0] {
        let v = flux_series_term(&forcing, 0, 16, 1024, &p(a)).unwrap().value;
        n0.push(format!("{a}:{v:.1e}"));
        if v.abs() > 1e-8 {
            fails.push(format!("n=0 term at alpha={a}: {v:e}"));
        }
    }
    for a in [8.0, 8.5, 16.0, 33.0] {
        let v = flux_series_term(&forcing, 0, 16, 1024, &p(a)).unwrap().value;
        if v.abs() > 2.0 / a {
            fails.push(format!("|n=0| at alpha={a}: {v:e} > 2/alpha"));
        }
        if (v - n0_term_closed_form(a)).abs() > 1e-6 {
            fails.push(format!("n=0 at alpha={a}: {v:e} vs closed form {:e}", n0_term_closed_form(a)));
        }
    }
    let tn: Vec<f64> = rep.t_n.iter().map(|(_, x)| x.value).collect();
    if tn.iter().any(|v| !(*v > 0.0)) {
        fails.push(format!("T_N not positive: {tn:?}"));
    }
    let (d_hi, d_lo) = ((tn[3] - tn[2]).abs(), (tn[1] - tn[0]).abs());
    if !(d_hi < d_lo) {
        fails.push(format!("|T64 - T32| = {d_hi:e} not below |T16 - T8| = {d_lo:e}"));
    }
    report(
        8,
        fails.is_empty(),
        t,
        Duration::from_secs(600),
        format!("first {first:.10}, n0 [{}], T_N {tn:?}; {}", n0.join(", "), fails.join("; ")),
    );
}

#[test]
fn criterion_09_projection_sandwich() {
    let _serial = serial();
    let t = Instant::now();
    let r = projection_sandwich(1024, 100, 9).unwrap();
    report(
        9,
        r.c1 <= 16.0 && r.samples == 100,
        t,
        Duration::from_secs(60),
        format!("C1 {:.4} (left {:.4}, right {:.4}) over {} fields", r.c1, r.left_constant, r.right_constant, r.samples),
    );
}

#[test]
fn criterion_10_continuous_discrete() {
    let _serial = serial();
    let t = Instant::now();
    let q = p(16.0);
    let forcing = ForcingSpec::<f64>::default_separable();
    let f_eff = effective_forcing(&forcing, &q, 64).unwrap().field;
    let zero = ScalarClosure::zero();
    let mut rho = zero.clone();
    let mut worst: f64 = 0.0;
    let mut worst_direct: f64 = 0.0;
    for n in 1..=4 {
        rho = discrete_step(&rho, &f_eff, &q);
        let c = continuous_solution(&zero, &forcing, n as f64, &q, 64).unwrap();
        worst = worst.max(max_difference(&c, &rho, 1000, n as u64));
        let d = duhamel_solution(&zero, &forcing, n as f64, &q, 64);
        worst_direct = worst_direct.max(max_difference(&d, &rho, 1000, 100 + n as u64));
    }
    report(
        10,
        worst <= 1e-8 && worst_direct <= 1e-8,
        t,
        Duration::from_secs(120),
        format!("reduced form {worst:.1e}, direct time integral {worst_direct:.1e}"),
    );
}

#[test]
fn criterion_11_anisotropic_decay() {
    let _serial = serial();
    let t = Instant::now();
    let f = ScalarClosure::unit_sine_y();
    let mut fails = Vec::new();
    let mut rates = Vec::new();
    let mut detail = Vec::new();
    for a in [16.0, 32.0] {
        let q = p(a);
        let dict = CurveDictionary::default_for(&q, 1);
        let s = transfer_decay_series(&f, 4, &dict, &q, &QuadOptions::default()).unwrap();
        let v: Vec<f64> = s.estimates.iter().map(|e| e.value).collect();
        detail.push(format!(
            "alpha={a}: [{}] fallback from n={:?}",
            v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", "),
            s.estimates.iter().position(|e| e.fallback)
        ));
        if v[1..].windows(2).any(|w| w[1] >= w[0]) {
            fails.push(format!("alpha={a}: not strictly decreasing over n=1..4"));
        }
        rates.push(s.fit.rate);
    }
    if !(rates[1] > rates[0]) {
        fails.push(format!("rate(32) {:.3} not above rate(16) {:.3}", rates[1], rates[0]));
    }
    report(11, fails.is_empty(), t, Duration::from_secs(300), format!("{}; {}", detail.join(" | "), fails.join("; ")));
}

#[test]
fn criterion_12_determinism() {
    let _serial = serial();
    let t = Instant::now();
    let configs = [
        (Experiment::Mixing, "alpha = 8, 16\nn_max = 2\ngrid = 512\n"),
        (Experiment::ProjectedMixing, "alpha = 16\nn_max = 2\ngrid = 256\ncutoffs = 8, 16\n"),
        (Experiment::Batchelor, "alpha = 8, 16\nn = 3\ngrid = 256\ncutoffs = 4, 8, 16, 32\n"),
        (Experiment::Flux, "alpha = 16\nn_max = 2\ngrid = 64\nnodes = 16\ncutoffs = 8, 16\n"),
        (Experiment::Geometry, "alpha = 8\nn = 2\ncap = 500\n"),
        (Experiment::Norms, "alpha = 16\nn_max = 1\ndict_vertical = 8\ndict_random = 8\npairs = 16\n"),
        (Experiment::Evolve, "alpha = 8\nn_max = 3\ngrid = 128\n"),
    ];
    let dir = tempfile::tempdir().unwrap();
    let mut fails = Vec::new();
    let mut files = 0;
    for (e, text) in configs {
        let cfg = ExperimentConfig::from_text(e, text).unwrap();
        let a = dir.path().join(format!("{e}_a"));
        let b = dir.path().join(format!("{e}_b"));
        let ma = run(&cfg, &a).unwrap();
        run(&cfg, &b).unwrap();
        for name in ma.files.iter().filter(|n| n.ends_with(".csv") || n.ends_with(".svg")) {
            files += 1;
            if fs::read(a.join(name)).unwrap() != fs::read(b.join(name)).unwrap() {
                fails.push(format!("{e}: {name} differs"));
            }
        }
    }
    report(
        12,
        fails.is_empty() && files > 0,
        t,
        Duration::from_secs(600),
        format!("{files} output files compared; {}", fails.join("; ")),
    );
}
