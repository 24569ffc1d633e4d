//! Segment calculus on the torus: singularity sets, generation decompositions under
//! `T^{-1}` and `T`, and multi-intersection points.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::real::Real;
use crate::torus::{
    branch_id, branch_matrix, iterate, kink_sign, wrap, ConeKind, ConeSpec, Direction, MapParams, TorusPoint,
};

pub const DEFAULT_GUARD: usize = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("level {level} would hold about {projected} segments, above the guard {guard}; use the sampled mode")]
    Guard { level: usize, projected: usize, guard: usize },
    #[error("segment precondition violated: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentClass {
    Stable,
    Unstable,
    Neither,
}

/// Straight segment `anchor + t dir`, `t in [0, length]`, taken in the universal
/// cover and projected to the torus. Long segments wrap as many times as needed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusSegment<T> {
    pub anchor: TorusPoint<T>,
    pub dir: [T; 2],
    pub length: T,
}

impl<T: Real> TorusSegment<T> {
    pub fn new(anchor: TorusPoint<T>, dir: [T; 2], length: T) -> Self {
        let n = dir[0].hypot(dir[1]);
        Self { anchor, dir: [dir[0] / n, dir[1] / n], length }
    }

    /// Segment between two lifted points.
    pub fn from_lifted(a: [T; 2], b: [T; 2]) -> Self {
        let d = [b[0] - a[0], b[1] - a[1]];
        Self::new(TorusPoint::new(a[0], a[1]), d, d[0].hypot(d[1]))
    }

    pub fn lifted_point(&self, t: T) -> [T; 2] {
        [self.anchor.x + t * self.dir[0], self.anchor.y + t * self.dir[1]]
    }

    pub fn lifted_end(&self) -> [T; 2] {
        self.lifted_point(self.length)
    }

    pub fn point_at(&self, t: T) -> TorusPoint<T> {
        let v = self.lifted_point(t);
        TorusPoint::new(v[0], v[1])
    }

    pub fn classify(&self, p: &MapParams<T>) -> SegmentClass {
        if ConeSpec::standard(ConeKind::Stable, p).contains(self.dir) {
            SegmentClass::Stable
        } else if ConeSpec::standard(ConeKind::Unstable, p).contains(self.dir) {
            SegmentClass::Unstable
        } else {
            SegmentClass::Neither
        }
    }

    pub fn is_long(&self) -> bool {
        self.length >= T::one() && self.length <= T::c(2.0) + T::c(1e-12)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFamily<T> {
    pub segments: Vec<TorusSegment<T>>,
    pub label: String,
}

/// The six-segment minimal decomposition of the singular set of `T^{-1}`
/// (`Backward`) or of `T` (`Forward`).
pub fn build_singularity<T: Real>(direction: Direction, p: &MapParams<T>) -> SegmentFamily<T> {
    let a = p.alpha;
    let h = T::half();
    let o = T::zero();
    let one = T::one();
    let slant = h * (a * a + one).sqrt();
    match direction {
        Direction::Backward => SegmentFamily {
            label: "S-".into(),
            segments: vec![
                TorusSegment::new(TorusPoint::new(o, o), [one, o], one),
                TorusSegment::new(TorusPoint::new(o, h), [one, o], one),
                // T2 of {x = 0}, lower and upper halves.
                TorusSegment::new(TorusPoint::new(a * h, o), [-a, one], slant),
                TorusSegment::new(TorusPoint::new(o, h), [a, one], slant),
                // T2 of {x = 1/2}.
                TorusSegment::new(TorusPoint::new(h + a * h, o), [-a, one], slant),
                TorusSegment::new(TorusPoint::new(h, h), [a, one], slant),
            ],
        },
        Direction::Forward => SegmentFamily {
            label: "S+".into(),
            segments: vec![
                TorusSegment::new(TorusPoint::new(o, o), [o, one], one),
                TorusSegment::new(TorusPoint::new(h, o), [o, one], one),
                // T1^{-1} of {y = 0} and {y = 1/2}, left and right halves.
                TorusSegment::new(TorusPoint::new(o, -a * h), [one, a], slant),
                TorusSegment::new(TorusPoint::new(h, o), [one, -a], slant),
                TorusSegment::new(TorusPoint::new(o, h - a * h), [one, a], slant),
                TorusSegment::new(TorusPoint::new(h, h), [one, -a], slant),
            ],
        },
    }
}

// Parameters in (t0, t1) where v0 + dv t lands on a multiple of 1/2.
fn half_crossings<T: Real>(v0: T, dv: T, t0: T, t1: T, eps: T, out: &mut Vec<T>) {
    if dv == T::zero() {
        return;
    }
    let (a, b) = (v0 + dv * t0, v0 + dv * t1);
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let two = T::c(2.0);
    let mut k = (lo * two).ceil();
    let kmax = (hi * two).floor();
    while k <= kmax {
        let t = (k / two - v0) / dv;
        if t > t0 + eps && t < t1 - eps {
            out.push(t);
        }
        k = k + T::one();
    }
}

/// Arclength parameters where `seg` meets the singular set of one step in `dir`.
pub fn cut_params<T: Real>(seg: &TorusSegment<T>, p: &MapParams<T>, dir: Direction) -> Vec<T> {
    let eps = T::c(1e-12);
    let [x0, y0] = [seg.anchor.x, seg.anchor.y];
    let [dx, dy] = seg.dir;
    let a = p.alpha;
    let h = T::half();
    // First kink coordinate: y for T^{-1}, x for T.
    let (f0, df, g0, dg) = match dir {
        Direction::Backward => (y0, dy, x0, dx),
        Direction::Forward => (x0, dx, y0, dy),
    };
    let mut first = Vec::new();
    half_crossings(f0, df, T::zero(), seg.length, eps, &mut first);
    first.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut all = first.clone();
    let mut bounds = Vec::with_capacity(first.len() + 2);
    bounds.push(T::zero());
    bounds.extend(first.iter().copied());
    bounds.push(seg.length);
    for w in bounds.windows(2) {
        let mid = (w[0] + w[1]) * h;
        let fm = f0 + df * mid;
        let s = T::c(kink_sign(wrap(fm)) as f64);
        let k0 = fm.floor();
        // Second coordinate after the first shear, affine on this piece.
        let sign = match dir {
            Direction::Backward => -s,
            Direction::Forward => s,
        };
        let c0 = g0 + sign * a * (f0 - k0 - h);
        let c1 = dg + sign * a * df;
        half_crossings(c0, c1, w[0], w[1], eps, &mut all);
    }
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup_by(|a, b| (*a - *b).abs() <= eps);
    all
}

/// Number of points of `seg ∩ S^∓` (the singular set crossed by one step).
pub fn singular_crossings<T: Real>(seg: &TorusSegment<T>, p: &MapParams<T>, dir: Direction) -> usize {
    cut_params(seg, p, dir).len()
}

/// Image of one smooth piece with its branch index and stretch factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedPiece<T> {
    pub image: TorusSegment<T>,
    pub branch: u8,
    pub stretch: T,
    /// Length of the piece before mapping.
    pub source_length: T,
}

fn map_piece<T: Real>(seg: &TorusSegment<T>, t0: T, t1: T, p: &MapParams<T>, dir: Direction) -> MappedPiece<T> {
    let mid = (t0 + t1) * T::half();
    let zm = seg.point_at(mid);
    let id = branch_id(zm, p, dir);
    let a = branch_matrix(id, p).linear;
    let w = iterate(zm, 1, dir, p);
    let v = a.apply(seg.dir);
    let s = v[0].hypot(v[1]);
    let u = [v[0] / s, v[1] / s];
    let len = (t1 - t0) * s;
    let back = len * T::half();
    let anchor = TorusPoint::new(w.x - back * u[0], w.y - back * u[1]);
    MappedPiece { image: TorusSegment { anchor, dir: u, length: len }, branch: id.index, stretch: s, source_length: t1 - t0 }
}

/// Smooth pieces of one step: arclength ranges `[t0, t1]` on `seg` with their images.
pub fn smooth_pieces<T: Real>(seg: &TorusSegment<T>, p: &MapParams<T>, dir: Direction) -> Vec<(T, T, MappedPiece<T>)> {
    let cuts = cut_params(seg, p, dir);
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut t0 = T::zero();
    for t1 in cuts.into_iter().chain(std::iter::once(seg.length)) {
        if t1 - t0 >= T::c(1e-12) {
            out.push((t0, t1, map_piece(seg, t0, t1, p, dir)));
        }
        t0 = t1;
    }
    out
}

/// Split into `ceil(L/2)` equal pieces when longer than 2, so each has length in `(1, 2]`.
pub fn subdivide<T: Real>(seg: &TorusSegment<T>) -> Vec<TorusSegment<T>> {
    let two = T::c(2.0);
    if seg.length <= two {
        return vec![*seg];
    }
    let k = (seg.length / two).ceil().to_usize().unwrap_or(1).max(1);
    let piece = seg.length / T::c(k as f64);
    (0..k)
        .map(|i| {
            let v = seg.lifted_point(piece * T::c(i as f64));
            TorusSegment { anchor: TorusPoint::new(v[0], v[1]), dir: seg.dir, length: piece }
        })
        .collect()
}

/// One generation step of `seg`: cut, map each piece, subdivide, in arclength order.
/// Returns the children and the number of degenerate fragments dropped.
pub fn children_chain<T: Real>(
    seg: &TorusSegment<T>,
    p: &MapParams<T>,
    dir: Direction,
) -> (Vec<(TorusSegment<T>, MappedPiece<T>)>, usize) {
    let cuts = cut_params(seg, p, dir);
    let mut out = Vec::new();
    let mut dropped = 0;
    let mut t0 = T::zero();
    for t1 in cuts.into_iter().chain(std::iter::once(seg.length)) {
        if t1 - t0 < T::c(1e-12) {
            dropped += 1;
            t0 = t1;
            continue;
        }
        let mp = map_piece(seg, t0, t1, p, dir);
        for s in subdivide(&mp.image) {
            out.push((s, mp));
        }
        t0 = t1;
    }
    (out, dropped)
}

// First or last child without building the whole chain.
fn end_child<T: Real>(seg: &TorusSegment<T>, p: &MapParams<T>, dir: Direction, last: bool) -> TorusSegment<T> {
    let cuts = cut_params(seg, p, dir);
    let (t0, t1) = if last {
        (cuts.last().copied().unwrap_or(T::zero()), seg.length)
    } else {
        (T::zero(), cuts.first().copied().unwrap_or(seg.length))
    };
    let mp = map_piece(seg, t0, t1, p, dir);
    let parts = subdivide(&mp.image);
    if last {
        *parts.last().unwrap()
    } else {
        parts[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthClass {
    Long,
    Short,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quality {
    Good,
    Bad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord<T> {
    pub segment: TorusSegment<T>,
    /// Branch indices, oldest step first.
    pub word: Vec<u8>,
    /// `|J_W T^{±n}|`, the arclength contraction back to level 0.
    pub jacobian: T,
    pub length_class: LengthClass,
    pub quality: Quality,
    /// Index of the parent in the previous level.
    pub parent: Option<usize>,
    /// `(level, index)` of the most recent good strict ancestor.
    pub last_good: Option<(usize, usize)>,
    /// Number of level-0 segments this record stands for (1 unless sampled).
    pub weight: f64,
    /// Neighbouring segments along the connected image curve.
    pub neighbors: [Option<TorusSegment<T>>; 2],
}

impl<T: Real> GenerationRecord<T> {
    pub fn is_good(&self) -> bool {
        self.quality == Quality::Good
    }

    pub fn is_long(&self) -> bool {
        self.length_class == LengthClass::Long
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationOptions {
    /// Keep at most this many records per level by seeded systematic sampling.
    pub cap: Option<usize>,
    pub seed: u64,
    pub guard: usize,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        Self { cap: None, seed: 0, guard: DEFAULT_GUARD }
    }
}

impl GenerationOptions {
    pub fn sampled(cap: usize, seed: u64) -> Self {
        Self { cap: Some(cap), seed, guard: DEFAULT_GUARD }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation<T> {
    pub direction: Direction,
    pub levels: Vec<Vec<GenerationRecord<T>>>,
    pub dropped: usize,
    pub sampled: bool,
}

impl<T: Real> Generation<T> {
    pub fn level(&self, n: usize) -> &[GenerationRecord<T>] {
        &self.levels[n]
    }

    /// Weighted segment count at level `n` (exact when not sampled).
    pub fn count(&self, n: usize) -> f64 {
        self.levels[n].iter().map(|r| r.weight).sum()
    }

    pub fn short_count(&self, n: usize) -> f64 {
        self.levels[n].iter().filter(|r| !r.is_long()).map(|r| r.weight).sum()
    }

    pub fn long_count(&self, n: usize) -> f64 {
        self.levels[n].iter().filter(|r| r.is_long()).map(|r| r.weight).sum()
    }

    pub fn total_length(&self, n: usize) -> f64 {
        self.levels[n].iter().map(|r| r.weight * r.segment.length.f64()).sum()
    }

    /// Short-to-long ratio `r_n`.
    pub fn short_long_ratio(&self, n: usize) -> f64 {
        self.short_count(n) / self.long_count(n)
    }
}

fn norm_bound<T: Real>(p: &MapParams<T>) -> f64 {
    let a = p.alpha.f64();
    a * a + 2.0 * a + 1.0
}

/// Iterate the cut-map-subdivide construction `n` times from `w`.
pub fn generate<T: Real>(
    w: &TorusSegment<T>,
    n: usize,
    p: &MapParams<T>,
    dir: Direction,
    opts: &GenerationOptions,
) -> Result<Generation<T>, GeometryError> {
    let root = GenerationRecord {
        segment: *w,
        word: Vec::new(),
        jacobian: T::one(),
        length_class: if w.is_long() { LengthClass::Long } else { LengthClass::Short },
        quality: Quality::Bad,
        parent: None,
        last_good: None,
        weight: 1.0,
        neighbors: [None, None],
    };
    let mut levels = vec![vec![root]];
    let mut dropped = 0;
    let a = p.alpha.f64();
    for lvl in 1..=n {
        let prev = &levels[lvl - 1];
        if opts.cap.is_none() {
            let projected: f64 = prev
                .iter()
                .map(|r| {
                    let l = r.segment.length.f64();
                    norm_bound(p) * l + (4.0 * a + 8.0) * l + 3.0
                })
                .sum();
            if projected > opts.guard as f64 {
                return Err(GeometryError::Guard { level: lvl, projected: projected as usize, guard: opts.guard });
            }
        }
        let expanded: Vec<(Vec<GenerationRecord<T>>, usize)> = prev
            .par_iter()
            .enumerate()
            .map(|(pi, r)| expand(r, pi, lvl, p, dir))
            .collect();
        let mut next = Vec::with_capacity(expanded.iter().map(|e| e.0.len()).sum());
        for (kids, d) in expanded {
            dropped += d;
            next.extend(kids);
        }
        if let Some(cap) = opts.cap {
            if next.len() > cap {
                next = systematic_sample(next, cap, opts.seed ^ (lvl as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            }
        }
        levels.push(next);
    }
    Ok(Generation { direction: dir, levels, dropped, sampled: opts.cap.is_some() })
}

fn expand<T: Real>(
    r: &GenerationRecord<T>,
    pi: usize,
    lvl: usize,
    p: &MapParams<T>,
    dir: Direction,
) -> (Vec<GenerationRecord<T>>, usize) {
    let (chain, dropped) = children_chain(&r.segment, p, dir);
    let left = r.neighbors[0].map(|s| end_child(&s, p, dir, true));
    let right = r.neighbors[1].map(|s| end_child(&s, p, dir, false));
    let last_good = if r.is_good() { Some((lvl - 1, pi)) } else { r.last_good };
    let len = chain.len();
    let kids = (0..len)
        .map(|j| {
            let (seg, mp) = chain[j];
            let before = if j > 0 { Some(chain[j - 1].0) } else { left };
            let after = if j + 1 < len { Some(chain[j + 1].0) } else { right };
            let long = seg.is_long();
            let good = long
                && before.map(|s| s.is_long()).unwrap_or(false)
                && after.map(|s| s.is_long()).unwrap_or(false);
            let mut word = r.word.clone();
            word.push(mp.branch);
            GenerationRecord {
                segment: seg,
                word,
                jacobian: r.jacobian / mp.stretch,
                length_class: if long { LengthClass::Long } else { LengthClass::Short },
                quality: if good { Quality::Good } else { Quality::Bad },
                parent: Some(pi),
                last_good,
                weight: r.weight,
                neighbors: [before, after],
            }
        })
        .collect();
    (kids, dropped)
}

/// Exact children of record `index` at `level`, as the next generation would hold
/// them before any sampling.
pub fn children_of<T: Real>(
    r: &GenerationRecord<T>,
    index: usize,
    level: usize,
    p: &MapParams<T>,
    dir: Direction,
) -> Vec<GenerationRecord<T>> {
    expand(r, index, level + 1, p, dir).0
}

fn systematic_sample<T: Real>(recs: Vec<GenerationRecord<T>>, cap: usize, seed: u64) -> Vec<GenerationRecord<T>> {
    let n = recs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: f64 = rng.gen();
    let step = n as f64 / cap as f64;
    let mut out = Vec::with_capacity(cap);
    for j in 0..cap {
        let i = (((j as f64 + u) * step) as usize).min(n - 1);
        let mut r = recs[i].clone();
        r.weight *= step;
        out.push(r);
    }
    out
}

/// `Ψ_n(W)`: backward generations of a stable admissible segment.
pub fn backward_generation<T: Real>(
    w: &TorusSegment<T>,
    n: usize,
    p: &MapParams<T>,
    opts: &GenerationOptions,
) -> Result<Generation<T>, GeometryError> {
    if w.classify(p) != SegmentClass::Stable || w.length > T::c(2.0) || !(w.length > T::zero()) {
        return Err(GeometryError::Precondition(format!(
            "backward generation needs a stable-cone segment with length in (0, 2], got {:?} of length {}",
            w.classify(p),
            w.length
        )));
    }
    generate(w, n, p, Direction::Backward, opts)
}

/// `Ψ_n^+(W)`: forward generations of an unstable segment with length in `[1, 2]`.
pub fn forward_generation<T: Real>(
    w: &TorusSegment<T>,
    n: usize,
    p: &MapParams<T>,
    opts: &GenerationOptions,
) -> Result<Generation<T>, GeometryError> {
    if w.classify(p) != SegmentClass::Unstable || !w.is_long() {
        return Err(GeometryError::Precondition(format!(
            "forward generation needs an unstable-cone segment with length in [1, 2], got {:?} of length {}",
            w.classify(p),
            w.length
        )));
    }
    generate(w, n, p, Direction::Forward, opts)
}

/// `(Σ |W_i|^η |J|, Σ over short pieces)` at level `n`, weighted when sampled.
pub fn jacobian_sums<T: Real>(g: &Generation<T>, n: usize, eta: f64) -> (f64, f64) {
    let mut total = 0.0;
    let mut short = 0.0;
    for r in g.level(n) {
        let v = r.weight * r.segment.length.f64().powf(eta) * r.jacobian.f64();
        total += v;
        if !r.is_long() {
            short += v;
        }
    }
    (total, short)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelBadCounts {
    pub level: usize,
    pub total: usize,
    pub good: usize,
    /// `#I_n`: bad with no good ancestor.
    pub no_good_ancestor: usize,
    /// `Σ_V #I_{n,k}(V)` for `k = 1..level-1`, index `k - 1`.
    pub by_gap: Vec<usize>,
    /// `max_V #I_{n,k}(V)`, same indexing.
    pub max_by_gap: Vec<usize>,
    /// Largest number of bad children of a single parent.
    pub max_bad_per_parent: usize,
    /// Largest number of short children of a single parent.
    pub max_short_per_parent: usize,
}

impl LevelBadCounts {
    /// The good, no-good-ancestor and gap classes are a partition.
    pub fn partition_holds(&self) -> bool {
        self.good + self.no_good_ancestor + self.by_gap.iter().sum::<usize>() == self.total
    }
}

/// Ancestry partition of every level. Per-`V` maxima are exact only when not sampled.
pub fn bad_generation_counts<T: Real>(g: &Generation<T>) -> Vec<LevelBadCounts> {
    (0..g.levels.len())
        .map(|lvl| {
            let recs = &g.levels[lvl];
            let mut out = LevelBadCounts {
                level: lvl,
                total: recs.len(),
                good: 0,
                no_good_ancestor: 0,
                by_gap: vec![0; lvl.saturating_sub(1)],
                max_by_gap: vec![0; lvl.saturating_sub(1)],
                max_bad_per_parent: 0,
                max_short_per_parent: 0,
            };
            let mut per_v: HashMap<(usize, usize), usize> = HashMap::new();
            let mut bad_parent: HashMap<usize, usize> = HashMap::new();
            let mut short_parent: HashMap<usize, usize> = HashMap::new();
            for r in recs {
                if !r.is_long() {
                    if let Some(pi) = r.parent {
                        *short_parent.entry(pi).or_default() += 1;
                    }
                }
                if r.is_good() {
                    out.good += 1;
                    continue;
                }
                if let Some(pi) = r.parent {
                    *bad_parent.entry(pi).or_default() += 1;
                }
                match r.last_good {
                    None => out.no_good_ancestor += 1,
                    Some(v) => {
                        let k = lvl - v.0;
                        out.by_gap[k - 1] += 1;
                        *per_v.entry(v).or_default() += 1;
                    }
                }
            }
            for (v, c) in per_v {
                let k = lvl - v.0;
                out.max_by_gap[k - 1] = out.max_by_gap[k - 1].max(c);
            }
            out.max_bad_per_parent = bad_parent.values().copied().max().unwrap_or(0);
            out.max_short_per_parent = short_parent.values().copied().max().unwrap_or(0);
            out
        })
        .collect()
}

fn cross<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    a[0] * b[1] - a[1] * b[0]
}

/// Intersections of two closed segments in the plane (no wrapping).
fn planar_intersections<T: Real>(
    p0: [T; 2],
    r: [T; 2],
    la: T,
    q0: [T; 2],
    s: [T; 2],
    lb: T,
    tol: T,
    points: &mut Vec<[T; 2]>,
    overlaps: &mut Vec<([T; 2], [T; 2])>,
) {
    let qp = [q0[0] - p0[0], q0[1] - p0[1]];
    let den = cross(r, s);
    if den.abs() > T::c(1e-14) {
        let t = cross(qp, s) / den;
        let u = cross(qp, r) / den;
        if t >= -tol && t <= la + tol && u >= -tol && u <= lb + tol {
            points.push([p0[0] + t * r[0], p0[1] + t * r[1]]);
        }
        return;
    }
    // Parallel: collinear only if the offset is along r.
    if cross(qp, r).abs() > tol {
        return;
    }
    let dot = r[0] * s[0] + r[1] * s[1];
    let u0 = qp[0] * r[0] + qp[1] * r[1];
    let u1 = u0 + dot * lb;
    let (lo, hi) = if u0 < u1 { (u0, u1) } else { (u1, u0) };
    let start = lo.max(T::zero());
    let end = hi.min(la);
    if end < start - tol {
        return;
    }
    let a = [p0[0] + start * r[0], p0[1] + start * r[1]];
    let b = [p0[0] + end * r[0], p0[1] + end * r[1]];
    if end - start <= tol {
        points.push(a);
    } else {
        overlaps.push((a, b));
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Intersections<T> {
    pub points: Vec<TorusPoint<T>>,
    /// Collinear overlaps as endpoint pairs.
    pub overlaps: Vec<(TorusPoint<T>, TorusPoint<T>)>,
}

/// All intersections on the torus, found over every relevant lift of `b`.
pub fn segment_intersections<T: Real>(a: &TorusSegment<T>, b: &TorusSegment<T>) -> Intersections<T> {
    let tol = T::c(1e-12);
    let bbox = |s: &TorusSegment<T>| {
        let p = s.lifted_point(T::zero());
        let q = s.lifted_end();
        ([p[0].min(q[0]), p[1].min(q[1])], [p[0].max(q[0]), p[1].max(q[1])])
    };
    let (alo, ahi) = bbox(a);
    let (blo, bhi) = bbox(b);
    let kx0 = (alo[0] - bhi[0]).floor().to_i64().unwrap_or(0) - 1;
    let kx1 = (ahi[0] - blo[0]).ceil().to_i64().unwrap_or(0) + 1;
    let ky0 = (alo[1] - bhi[1]).floor().to_i64().unwrap_or(0) - 1;
    let ky1 = (ahi[1] - blo[1]).ceil().to_i64().unwrap_or(0) + 1;
    let mut pts = Vec::new();
    let mut ovs = Vec::new();
    let bp = b.lifted_point(T::zero());
    for kx in kx0..=kx1 {
        for ky in ky0..=ky1 {
            let q0 = [bp[0] + T::c(kx as f64), bp[1] + T::c(ky as f64)];
            planar_intersections(a.lifted_point(T::zero()), a.dir, a.length, q0, b.dir, b.length, tol, &mut pts, &mut ovs);
        }
    }
    let to_pt = |v: [T; 2]| TorusPoint::new(v[0], v[1]);
    let mut out = Intersections {
        points: Vec::new(),
        overlaps: ovs.into_iter().map(|(u, v)| (to_pt(u), to_pt(v))).collect(),
    };
    for p in pts.into_iter().map(to_pt) {
        if !out.points.iter().any(|q| q.dist(&p) < T::c(1e-10)) {
            out.points.push(p);
        }
    }
    out
}

/// Smallest perpendicular distance between overlapping lifts of two parallel segments.
pub fn parallel_gap<T: Real>(a: &TorusSegment<T>, b: &TorusSegment<T>) -> Option<T> {
    if cross(a.dir, b.dir).abs() > T::c(1e-12) {
        return None;
    }
    let nrm = [-a.dir[1], a.dir[0]];
    let pa = a.lifted_point(T::zero());
    let pb = b.lifted_point(T::zero());
    let reach = (a.length + b.length).ceil().to_i64().unwrap_or(1) + 1;
    let mut best: Option<T> = None;
    for kx in -reach..=reach {
        for ky in -reach..=reach {
            let q = [pb[0] + T::c(kx as f64) - pa[0], pb[1] + T::c(ky as f64) - pa[1]];
            let gap = (q[0] * nrm[0] + q[1] * nrm[1]).abs();
            if gap < T::c(1e-12) {
                continue;
            }
            // Projections along the common direction must overlap.
            let u0 = q[0] * a.dir[0] + q[1] * a.dir[1];
            let u1 = u0 + b.length * (b.dir[0] * a.dir[0] + b.dir[1] * a.dir[1]);
            let (lo, hi) = if u0 < u1 { (u0, u1) } else { (u1, u0) };
            if hi.min(a.length) - lo.max(T::zero()) <= T::zero() {
                continue;
            }
            best = Some(best.map_or(gap, |g: T| g.min(gap)));
        }
    }
    best
}

/// Spacing between adjacent parallel spanning curves of `S^-`.
pub fn spanning_spacing<T: Real>(p: &MapParams<T>) -> T {
    let fam = build_singularity(Direction::Backward, p);
    let slanted = &fam.segments[2..];
    let mut best = T::infinity();
    for a in slanted {
        for b in slanted {
            if let Some(g) = parallel_gap(a, b) {
                best = best.min(g);
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiIntersectionSet<T> {
    pub points: Vec<TorusPoint<T>>,
    pub n: usize,
    pub tol: T,
    /// Segments per family `k = 0..n-1`.
    pub family_sizes: Vec<usize>,
}

/// The `S^-` segments cut into pieces with length in `[1, 2]`, ready for `Ψ^+`.
pub fn singularity_pieces<T: Real>(p: &MapParams<T>) -> Vec<TorusSegment<T>> {
    build_singularity(Direction::Backward, p).segments.iter().flat_map(subdivide).collect()
}

/// Superset of the multi-intersection points of `S_n^-`: all pairwise intersections
/// between distinct segments of the families `T^k S^-`, `k < n`, built from `Ψ_k^+`.
pub fn multi_intersections<T: Real>(
    n: usize,
    p: &MapParams<T>,
    tol: T,
    guard: usize,
) -> Result<MultiIntersectionSet<T>, GeometryError> {
    if n == 0 {
        return Err(GeometryError::Precondition("n must be at least 1".into()));
    }
    let mut segs: Vec<TorusSegment<T>> = build_singularity(Direction::Backward, p).segments;
    let mut family_sizes = vec![segs.len()];
    if n > 1 {
        let starts = singularity_pieces(p);
        let opts = GenerationOptions { cap: None, seed: 0, guard };
        let gens: Vec<Generation<T>> = starts
            .iter()
            .map(|w| generate(w, n - 1, p, Direction::Forward, &opts))
            .collect::<Result<_, _>>()?;
        for k in 1..n {
            let fam: Vec<TorusSegment<T>> =
                gens.iter().flat_map(|g| g.level(k).iter().map(|r| r.segment)).collect();
            family_sizes.push(fam.len());
            segs.extend(fam);
        }
    }
    if segs.len() > guard {
        return Err(GeometryError::Guard { level: n, projected: segs.len(), guard });
    }
    let raw = all_pairwise_points(&segs, tol);
    Ok(MultiIntersectionSet { points: dedup_points(raw, tol), n, tol, family_sizes })
}

struct Clip<T> {
    seg: usize,
    a: [T; 2],
    b: [T; 2],
}

// Pieces of `s` inside unit cells, translated into [0,1]², plus copies across the
// boundary when an endpoint sits on it.
fn clip_to_square<T: Real>(id: usize, s: &TorusSegment<T>, out: &mut Vec<Clip<T>>) {
    let p = s.lifted_point(T::zero());
    let mut ts = vec![T::zero(), s.length];
    for c in 0..2 {
        if s.dir[c] != T::zero() {
            let v0 = p[c];
            let v1 = p[c] + s.dir[c] * s.length;
            let (lo, hi) = if v0 < v1 { (v0, v1) } else { (v1, v0) };
            let mut k = lo.ceil();
            while k <= hi.floor() {
                let t = (k - v0) / s.dir[c];
                if t > T::zero() && t < s.length {
                    ts.push(t);
                }
                k = k + T::one();
            }
        }
    }
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let edge = T::c(1e-9);
    for w in ts.windows(2) {
        if w[1] - w[0] <= T::c(1e-13) {
            continue;
        }
        let mid = s.lifted_point((w[0] + w[1]) * T::half());
        let shift = [mid[0].floor(), mid[1].floor()];
        let a0 = s.lifted_point(w[0]);
        let b0 = s.lifted_point(w[1]);
        let a = [a0[0] - shift[0], a0[1] - shift[1]];
        let b = [b0[0] - shift[0], b0[1] - shift[1]];
        out.push(Clip { seg: id, a, b });
        for c in 0..2 {
            let near_hi = a[c] >= T::one() - edge || b[c] >= T::one() - edge;
            let near_lo = a[c] <= edge || b[c] <= edge;
            let mut sh = [T::zero(); 2];
            if near_hi {
                sh[c] = -T::one();
                out.push(Clip { seg: id, a: [a[0] + sh[0], a[1] + sh[1]], b: [b[0] + sh[0], b[1] + sh[1]] });
            }
            if near_lo {
                sh[c] = T::one();
                out.push(Clip { seg: id, a: [a[0] + sh[0], a[1] + sh[1]], b: [b[0] + sh[0], b[1] + sh[1]] });
            }
        }
        // Corner copies for pieces touching two sides.
        let corner = |v: [T; 2]| {
            (v[0] <= edge || v[0] >= T::one() - edge) && (v[1] <= edge || v[1] >= T::one() - edge)
        };
        if corner(a) || corner(b) {
            let v = if corner(a) { a } else { b };
            let sx = if v[0] <= edge { T::one() } else { -T::one() };
            let sy = if v[1] <= edge { T::one() } else { -T::one() };
            out.push(Clip { seg: id, a: [a[0] + sx, a[1] + sy], b: [b[0] + sx, b[1] + sy] });
        }
    }
}

fn all_pairwise_points<T: Real>(segs: &[TorusSegment<T>], tol: T) -> Vec<[T; 2]> {
    let mut clips = Vec::new();
    for (i, s) in segs.iter().enumerate() {
        clip_to_square(i, s, &mut clips);
    }
    let cols = 64usize;
    let colw = T::one() / T::c(cols as f64);
    // Column index ranges, with one column of slack for boundary copies.
    let mut buckets: Vec<Vec<(T, T, usize)>> = vec![Vec::new(); cols + 2];
    for (ci, c) in clips.iter().enumerate() {
        let (x0, x1) = if c.a[0] < c.b[0] { (c.a[0], c.b[0]) } else { (c.b[0], c.a[0]) };
        let lo = ((x0 - tol) / colw).floor().to_i64().unwrap_or(0).clamp(-1, cols as i64);
        let hi = ((x1 + tol) / colw).floor().to_i64().unwrap_or(0).clamp(-1, cols as i64);
        for col in lo..=hi {
            let cx0 = T::c(col as f64) * colw - tol;
            let cx1 = cx0 + colw + tol + tol;
            let (ya, yb) = y_range_in(c, cx0, cx1);
            buckets[(col + 1) as usize].push((ya - tol, yb + tol, ci));
        }
    }
    let per_col: Vec<Vec<[T; 2]>> = buckets
        .into_par_iter()
        .map(|mut b| {
            b.sort_by(|u, v| u.0.partial_cmp(&v.0).unwrap().then(u.2.cmp(&v.2)));
            let mut pts = Vec::new();
            let mut ovs = Vec::new();
            for i in 0..b.len() {
                let (_, ymax, ci) = b[i];
                for &(ylo, _, cj) in &b[i + 1..] {
                    if ylo > ymax {
                        break;
                    }
                    let (u, v) = (&clips[ci], &clips[cj]);
                    if u.seg == v.seg {
                        continue;
                    }
                    let (r, la) = unit_dir(u.a, u.b);
                    let (s, lb) = unit_dir(v.a, v.b);
                    planar_intersections(u.a, r, la, v.a, s, lb, tol, &mut pts, &mut ovs);
                }
            }
            for (a, b) in ovs {
                pts.push(a);
                pts.push(b);
            }
            pts
        })
        .collect();
    per_col.into_iter().flatten().collect()
}

fn unit_dir<T: Real>(a: [T; 2], b: [T; 2]) -> ([T; 2], T) {
    let d = [b[0] - a[0], b[1] - a[1]];
    let l = d[0].hypot(d[1]);
    ([d[0] / l, d[1] / l], l)
}

fn y_range_in<T: Real>(c: &Clip<T>, x0: T, x1: T) -> (T, T) {
    let (a, b) = (c.a, c.b);
    let dx = b[0] - a[0];
    if dx.abs() < T::c(1e-15) {
        return (a[1].min(b[1]), a[1].max(b[1]));
    }
    let y_at = |x: T| a[1] + (b[1] - a[1]) * (x - a[0]) / dx;
    let (lo, hi) = if a[0] < b[0] { (a[0], b[0]) } else { (b[0], a[0]) };
    let xa = x0.max(lo);
    let xb = x1.min(hi);
    let (ya, yb) = (y_at(xa), y_at(xb));
    (ya.min(yb), ya.max(yb))
}

/// Merge points closer than `tol` in the torus metric; output sorted.
pub fn dedup_points<T: Real>(raw: Vec<[T; 2]>, tol: T) -> Vec<TorusPoint<T>> {
    let cells = (T::one() / tol).floor().to_i64().unwrap_or(1).max(1);
    let key = |p: &TorusPoint<T>| {
        let cx = (p.x / tol).floor().to_i64().unwrap_or(0).rem_euclid(cells);
        let cy = (p.y / tol).floor().to_i64().unwrap_or(0).rem_euclid(cells);
        (cx, cy)
    };
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut kept: Vec<TorusPoint<T>> = Vec::new();
    let mut pts: Vec<TorusPoint<T>> = raw
        .into_iter()
        .filter(|v| v[0].is_finite() && v[1].is_finite())
        .map(|v| TorusPoint::new(v[0], v[1]))
        .collect();
    pts.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(a.y.partial_cmp(&b.y).unwrap()));
    for p in pts {
        let (cx, cy) = key(&p);
        let mut dup = false;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                let k = ((cx + dx).rem_euclid(cells), (cy + dy).rem_euclid(cells));
                if let Some(list) = grid.get(&k) {
                    if list.iter().any(|&i| kept[i].dist(&p) <= tol) {
                        dup = true;
                        break 'scan;
                    }
                }
            }
        }
        if !dup {
            grid.entry((cx, cy)).or_default().push(kept.len());
            kept.push(p);
        }
    }
    kept
}
