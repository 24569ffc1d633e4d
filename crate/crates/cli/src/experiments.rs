//! The named experiments.

use std::path::{Path, PathBuf};
use std::time::Instant;

use batchelor_core::diagnostics::{
    batchelor_curve, correlation_series, flux_report, offdiagonal_sum, projected_correlation,
    projected_correlation_dual, OffDiagonalConfig,
};
use batchelor_core::evolution::{evolution_report, EvolutionConfig, ForcingSpec, TimeProfile};
use batchelor_core::fields::{KernelSpec, ScalarClosure};
use batchelor_core::geometry::{
    backward_generation, build_singularity, multi_intersections, GenerationOptions, GenerationRecord, GeometryError,
    LengthClass, Quality, SegmentClass, TorusSegment,
};
use batchelor_core::norms::{
    strong_stable_estimate, transfer_decay_series, unstable_norm_estimate, CurveDictionary, PairDictionary,
    QuadOptions,
};
use batchelor_core::torus::{Direction, MapParams, TorusPoint};

use crate::config::{Experiment, ExperimentConfig, FieldKind, PlotKind};
use crate::csv::{flag, num, Table};
use crate::error::CliError;
use crate::output::{write_atomic, RunManifest};
use crate::svg::render_svg;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run<'_> {
    fn stage<R>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<R, CliError>) -> Result<R, CliError> {
        let t = Instant::now();
        let r = f(self);
        self.manifest.stages.push((name.to_string(), t.elapsed().as_secs_f64()));
        r
    }

    fn table(&mut self, name: &str, t: &Table, plot: Option<PlotKind>) -> Result<(), CliError> {
        let text = t.render();
        write_atomic(&self.dir, name, text.as_bytes())?;
        self.manifest.files.push(name.to_string());
        if let (Some(kind), true) = (plot, self.cfg.svg) {
            let svg = render_svg(t, name, kind)?;
            let svg_name = format!("{}.svg", name.trim_end_matches(".csv"));
            write_atomic(&self.dir, &svg_name, svg.as_bytes())?;
            self.manifest.files.push(svg_name);
        }
        Ok(())
    }
}

fn field(cfg: &ExperimentConfig) -> ScalarClosure<f64> {
    match cfg.field {
        FieldKind::SineX => ScalarClosure::sine_x(cfg.field_amplitude, cfg.field_k),
        FieldKind::SineY => ScalarClosure::sine_y(cfg.field_amplitude, cfg.field_k),
    }
}

fn params(alpha: f64) -> Result<MapParams<f64>, CliError> {
    MapParams::new(alpha).map_err(|e| CliError::field("alpha", e.to_string()))
}

fn tag(alpha: f64) -> String {
    format!("alpha{alpha}")
}

fn geometry_error(stage: &str, e: GeometryError) -> CliError {
    match e {
        GeometryError::Guard { .. } => CliError::Guard { stage: stage.into(), msg: e.to_string() },
        other => CliError::compute(stage, other),
    }
}

const SEGMENT_HEADER: [&str; 9] =
    ["anchor_x", "anchor_y", "dir_x", "dir_y", "length", "word", "jacobian", "class", "quality"];

fn segment_row(
    s: &TorusSegment<f64>,
    word: &[u8],
    jacobian: f64,
    class: SegmentClass,
    quality: &str,
) -> Vec<String> {
    let word = if word.is_empty() { "-".to_string() } else { word.iter().map(|b| b.to_string()).collect() };
    let class = match class {
        SegmentClass::Stable => "stable",
        SegmentClass::Unstable => "unstable",
        SegmentClass::Neither => "neither",
    };
    vec![
        num(s.anchor.x),
        num(s.anchor.y),
        num(s.dir[0]),
        num(s.dir[1]),
        num(s.length),
        word,
        num(jacobian),
        class.into(),
        quality.into(),
    ]
}

fn record_quality(r: &GenerationRecord<f64>) -> &'static str {
    match (r.length_class, r.quality) {
        (LengthClass::Long, Quality::Good) => "long-good",
        (LengthClass::Long, Quality::Bad) => "long-bad",
        (LengthClass::Short, Quality::Good) => "short-good",
        (LengthClass::Short, Quality::Bad) => "short-bad",
    }
}

fn mixing(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    let f = field(cfg);
    for &a in &cfg.alphas {
        let p = params(a)?;
        let name = format!("mixing_{}", tag(a));
        let s = run.stage(&name, |_| correlation_series(&f, &f, cfg.n_max, cfg.grid, &p).map_err(|e| CliError::compute("mixing", e)))?;
        let mut t = Table::new(&["n", "value", "alias"]);
        for r in &s.rows {
            t.push(vec![r.n.to_string(), num(r.value), flag(r.aliased)]);
        }
        run.manifest.flag(format!("alias.{name}"), s.rows.iter().any(|r| r.aliased));
        run.manifest.flag(format!("fit_rate.{name}"), num(s.fit.rate));
        run.table(&format!("{name}.csv"), &t, Some(PlotKind::SemilogDecay))?;
    }
    Ok(())
}

fn projected(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    let f = field(cfg);
    for &a in &cfg.alphas {
        let p = params(a)?;
        let name = format!("projected_{}", tag(a));
        let t = run.stage(&name, |_| {
            let mut t = Table::new(&["n", "m", "N", "value", "dual", "alias"]);
            let mut any = false;
            for n in 1..=cfg.n_max {
                let m = n + cfg.gap;
                for &c in &cfg.cutoffs {
                    let ker = KernelSpec::new(c);
                    let v = projected_correlation(&f, &f, n, m, &ker, cfg.grid, &p)
                        .map_err(|e| CliError::compute("projected-mixing", e))?;
                    let d = projected_correlation_dual(&f, &f, n, m, &ker, cfg.grid, &p)
                        .map_err(|e| CliError::compute("projected-mixing", e))?;
                    any |= v.aliased;
                    t.push(vec![n.to_string(), m.to_string(), num(c), num(v.value), num(d), flag(v.aliased)]);
                }
            }
            Ok((t, any))
        })?;
        run.manifest.flag(format!("alias.{name}"), t.1);
        run.table(&format!("{name}.csv"), &t.0, None)?;
    }
    Ok(())
}

fn batchelor(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    let f = field(cfg);
    let mut summary =
        Table::new(&["alpha", "slope", "intercept", "r_squared", "slope_log_alpha", "offdiag", "diag"]);
    let mut slopes = Vec::new();
    for &a in &cfg.alphas {
        let p = params(a)?;
        let name = format!("batchelor_{}", tag(a));
        let (rep, off) = run.stage(&name, |_| {
            let rep = batchelor_curve(&f, cfg.n, &cfg.cutoffs, cfg.fit_window, cfg.grid, &p)
                .map_err(|e| CliError::compute("batchelor", e))?;
            let oc = OffDiagonalConfig::new(cfg.offdiag_cutoff, cfg.n.max(1), None)
                .map_err(|e| CliError::compute("batchelor", e))?;
            let off = offdiagonal_sum(&f, &KernelSpec::new(cfg.offdiag_cutoff), &oc, cfg.grid, &p)
                .map_err(|e| CliError::compute("batchelor", e))?;
            Ok((rep, off))
        })?;
        let mut t = Table::new(&["N", "mass", "alias"]);
        for i in 0..rep.cutoffs.len() {
            t.push(vec![num(rep.cutoffs[i]), num(rep.masses[i]), flag(rep.cutoff_alias[i] || rep.field_aliased)]);
        }
        run.manifest.flag(format!("alias.{name}"), rep.field_aliased || rep.cutoff_alias.iter().any(|b| *b));
        run.manifest.flag(format!("alias.offdiag_{}", tag(a)), off.aliased);
        summary.push(vec![
            num(a),
            num(rep.slope),
            num(rep.intercept),
            num(rep.r_squared),
            num(rep.slope_log_alpha),
            num(off.value),
            num(off.diagonal),
        ]);
        slopes.push(rep.slope);
        run.table(&format!("{name}.csv"), &t, Some(PlotKind::MassVsLogN))?;
    }
    if slopes.len() >= 2 {
        let nan = num(f64::NAN);
        summary.push(vec!["ratio".into(), num(slopes[0] / slopes[1]), nan.clone(), nan.clone(), nan.clone(), nan.clone(), nan]);
    }
    run.table("batchelor_summary.csv", &summary, None)
}

fn flux(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    let forcing = ForcingSpec::Separable { eta: TimeProfile::Bump { mass: cfg.eta_mass }, h: field(cfg) };
    for &a in &cfg.alphas {
        let p = params(a)?;
        let name = format!("flux_{}", tag(a));
        let rep = run.stage(&name, |_| {
            flux_report(&forcing, &cfg.cutoffs, cfg.n_max, cfg.nodes, cfg.grid, &p).map_err(|e| CliError::compute("flux", e))
        })?;
        let mut t = Table::new(&["term", "value", "error_est"]);
        t.push(vec!["first".into(), num(rep.first_term.value), num(rep.first_term.error_est)]);
        t.push(vec!["n0".into(), num(rep.n0_term.value), num(rep.n0_term.error_est)]);
        for (i, term) in rep.tail_terms.iter().enumerate() {
            t.push(vec![format!("n{}", i + 1), num(term.value), num(term.error_est)]);
        }
        for (c, term) in &rep.t_n {
            t.push(vec![format!("T_{c}"), num(term.value), num(term.error_est)]);
        }
        t.push(vec!["limit".into(), num(rep.limit), num(f64::NAN)]);
        run.table(&format!("{name}.csv"), &t, None)?;
    }
    Ok(())
}

fn geometry(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    for &a in &cfg.alphas {
        let p = params(a)?;
        let fam = build_singularity(Direction::Backward, &p);
        let mut t = Table::new(&SEGMENT_HEADER);
        for s in &fam.segments {
            t.push(segment_row(s, &[], 1.0, s.classify(&p), "-"));
        }
        run.table(&format!("singularity_{}.csv", tag(a)), &t, Some(PlotKind::SegmentsOverlay))?;

        let name = format!("multi_intersections_{}", tag(a));
        let m = run.stage(&name, |_| multi_intersections(cfg.n, &p, cfg.tol, cfg.guard).map_err(|e| geometry_error("geometry", e)))?;
        let mut t = Table::new(&["x", "y"]);
        let mut pts: Vec<TorusPoint<f64>> = m.points.clone();
        pts.sort_by(|u, v| u.x.total_cmp(&v.x).then(u.y.total_cmp(&v.y)));
        for z in &pts {
            t.push(vec![num(z.x), num(z.y)]);
        }
        run.table(&format!("{name}.csv"), &t, None)?;

        let name = format!("generation_{}", tag(a));
        let w = TorusSegment::new(TorusPoint::new(cfg.w_x, 0.0), [0.0, 1.0], 1.0);
        let opts = GenerationOptions { cap: cfg.cap, seed: cfg.seed, guard: cfg.guard };
        let g = run.stage(&name, |_| backward_generation(&w, cfg.n, &p, &opts).map_err(|e| geometry_error("geometry", e)))?;
        run.manifest.flag(format!("sampled.{name}"), g.sampled);
        let mut t = Table::new(&SEGMENT_HEADER);
        for r in g.level(cfg.n) {
            t.push(segment_row(&r.segment, &r.word, r.jacobian, r.segment.classify(&p), record_quality(r)));
        }
        run.table(&format!("{name}.csv"), &t, Some(PlotKind::SegmentsOverlay))?;
    }
    Ok(())
}

fn norms(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    let f = field(cfg);
    let opts = QuadOptions::default();
    for &a in &cfg.alphas {
        let p = params(a)?;
        let name = format!("norms_{}", tag(a));
        let dict = CurveDictionary::new(&p, cfg.dict_vertical, cfg.dict_random, cfg.seed);
        let pairs = PairDictionary::new(&p, cfg.pairs, cfg.seed);
        let (series, strong, unstable) = run.stage(&name, |_| {
            let s = transfer_decay_series(&f, cfg.n_max, &dict, &p, &opts).map_err(|e| CliError::compute("norms", e))?;
            let st = strong_stable_estimate(&f, &dict, &cfg.norm, &opts);
            let un = unstable_norm_estimate(&f, &pairs, &cfg.norm, &opts);
            Ok((s, st, un))
        })?;
        let mut t = Table::new(&["n", "weak_estimate", "dict_size", "seed"]);
        for (n, e) in series.estimates.iter().enumerate() {
            t.push(vec![n.to_string(), num(e.value), e.dict_size.to_string(), e.seed.to_string()]);
        }
        run.manifest.flag(format!("guard.panel_fallback.{name}"), series.estimates.iter().any(|e| e.fallback));
        run.manifest.flag(format!("fit_rate.{name}"), num(series.fit.rate));
        run.manifest.flag(format!("strong_stable.{name}"), num(strong.value));
        run.manifest.flag(format!("unstable.{name}"), num(unstable.value));
        run.manifest.flag(format!("unstable_argmax_separation.{name}"), num(unstable.argmax_separation));
        run.table(&format!("{name}.csv"), &t, Some(PlotKind::SemilogDecay))?;
    }
    Ok(())
}

fn evolve(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    let f = field(cfg);
    for &a in &cfg.alphas {
        let name = format!("evolve_{}", tag(a));
        let ec = EvolutionConfig { alpha: a, n_steps: cfg.n_max, kappa: cfg.kappa, m: cfg.grid };
        let rows = run.stage(&name, |_| evolution_report(&f, &ec).map_err(|e| CliError::compute("evolve", e)))?;
        let mut t = Table::new(&["n", "l2_mass", "h_minus1", "h_minus3", "alias"]);
        for r in &rows {
            t.push(vec![r.n.to_string(), num(r.l2_mass), num(r.h_minus1), num(r.h_minus3), flag(r.aliased)]);
        }
        run.manifest.flag(format!("alias.{name}"), rows.iter().any(|r| r.aliased));
        run.table(&format!("{name}.csv"), &t, None)?;
    }
    Ok(())
}

fn render(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    let input = cfg.input.as_ref().expect("validated");
    let kind = cfg.kind.expect("validated");
    let text = std::fs::read_to_string(input).map_err(|e| CliError::io(input, e))?;
    let src = input.display().to_string();
    let t = Table::parse(&src, &text)?;
    let svg = render_svg(&t, &src, kind)?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let name = format!("{stem}.{}.svg", kind.name());
    write_atomic(&run.dir, &name, svg.as_bytes())?;
    run.manifest.files.push(name);
    Ok(())
}

/// Run a validated configuration into `dir`. The manifest is written last, also
/// after a guard abort.
pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<RunManifest, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut r = Run {
        cfg,
        dir: dir.to_path_buf(),
        manifest: RunManifest {
            config: cfg.echo().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            version: VERSION.to_string(),
            ..Default::default()
        },
    };
    let t = Instant::now();
    let res = match cfg.experiment {
        Experiment::Mixing => mixing(&mut r),
        Experiment::ProjectedMixing => projected(&mut r),
        Experiment::Batchelor => batchelor(&mut r),
        Experiment::Flux => flux(&mut r),
        Experiment::Geometry => geometry(&mut r),
        Experiment::Norms => norms(&mut r),
        Experiment::Evolve => evolve(&mut r),
        Experiment::Render => render(&mut r),
    };
    r.manifest.stages.push(("total".into(), t.elapsed().as_secs_f64()));
    r.manifest.status = match &res {
        Ok(()) => "ok".into(),
        Err(e @ CliError::Guard { .. }) => {
            r.manifest.flag("guard_abort", e.to_string());
            "guard-abort".into()
        }
        Err(_) => "error".into(),
    };
    if res.is_ok() || matches!(res, Err(CliError::Guard { .. })) {
        write_atomic(dir, "manifest.txt", r.manifest.render().as_bytes())?;
    }
    res.map(|()| r.manifest)
}
