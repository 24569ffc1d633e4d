//! Mixing-rate fits, projected correlations, off-diagonal sums, cumulative spectra
//! and the energy flux.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::evolution::{effective_forcing, partial_sum_rho, EvolutionError, ForcingSpec, TimeProfile};
use crate::fields::{
    alias_flag, bump_hat, check_grid, cumulative_mass, project_mollified, project_sharp, sample, sobolev_norm, to_grid,
    to_spectrum, FieldError, GridField, KernelSpec, ScalarClosure, SpectralField, Transform, wavenumber,
};
use crate::quad::half_period_rule;
use crate::real::Real;
use crate::torus::{flow_map, iterate, Direction, MapParams, TorusPoint};

pub const FIT_FLOOR: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error("time {t} outside the window [{lo}, 1]")]
    Window { t: f64, lo: f64 },
    #[error("{0}")]
    Config(String),
}

/// Least-squares fit of `log|value|` against `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub samples: Vec<(usize, f64)>,
    /// Base-e decay per step (minus the slope). NaN with fewer than two usable samples.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub used: usize,
}

impl DecayFit {
    pub fn from_samples(samples: Vec<(usize, f64)>) -> Self {
        let pts: Vec<(f64, f64)> = samples
            .iter()
            .filter(|(_, v)| v.abs() > FIT_FLOOR && v.is_finite())
            .map(|(n, v)| (*n as f64, v.abs().ln()))
            .collect();
        let used = pts.len();
        match ols(&pts) {
            Some((slope, intercept, r2)) => Self { samples, rate: -slope, intercept, r_squared: r2, used },
            None => Self { samples, rate: f64::NAN, intercept: f64::NAN, r_squared: 0.0, used },
        }
    }

    pub fn is_defined(&self) -> bool {
        self.rate.is_finite()
    }
}

/// `(slope, intercept, R²)`; `None` with fewer than two distinct abscissae.
pub fn ols(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    Some((slope, my - slope * mx, r2))
}

/// Grid mean of `f` at the `M x M` nodes, summed row by row in fixed order.
pub fn grid_mean<T: Real>(m: usize, f: impl Fn(TorusPoint<T>) -> T + Sync) -> T {
    let inv = T::one() / T::c(m as f64);
    let rows: Vec<T> = (0..m)
        .into_par_iter()
        .map(|i| {
            let x = T::c(i as f64) * inv;
            (0..m).map(|j| f(TorusPoint { x, y: T::c(j as f64) * inv })).sum::<T>()
        })
        .collect();
    rows.into_iter().sum::<T>() / T::c((m * m) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingRow {
    pub n: usize,
    pub value: f64,
    pub grid: usize,
    pub aliased: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub rows: Vec<MixingRow>,
    /// Fit over the rows without an alias flag.
    pub fit: DecayFit,
}

fn grid_for(scale: f64, m_max: usize) -> usize {
    let want = (4.0 * scale).max(64.0);
    let mut m = 64usize;
    while (m as f64) < want && m < m_max {
        m *= 2;
    }
    m.min(m_max)
}

/// `|⟨f∘T^{-n}, g⟩|` for `n = 0..=n_max`. Each `n` uses the smallest power-of-two grid
/// with `α^{2n} ≤ M/4`, capped at `m_max`.
pub fn correlation_series<T: Real>(
    f: &ScalarClosure<T>,
    g: &ScalarClosure<T>,
    n_max: usize,
    m_max: usize,
    p: &MapParams<T>,
) -> Result<CorrelationSeries, DiagnosticsError> {
    check_grid(m_max)?;
    let k = f.base_frequency().max(g.base_frequency()).max(1) as f64;
    let rows: Vec<MixingRow> = (0..=n_max)
        .map(|n| {
            let scale = k * p.alpha.f64().powi(2 * n as i32);
            let m = grid_for(scale, m_max);
            let v = grid_mean(m, |z| f.eval(iterate(z, n, Direction::Backward, p)) * g.eval(z));
            MixingRow { n, value: v.f64().abs(), grid: m, aliased: alias_flag(scale, m) }
        })
        .collect();
    let fit = DecayFit::from_samples(rows.iter().filter(|r| !r.aliased).map(|r| (r.n, r.value)).collect());
    Ok(CorrelationSeries { rows, fit })
}

pub fn flow_window<T: Real>(p: &MapParams<T>) -> f64 {
    0.5 + p.alpha.f64().powf(-0.5)
}

/// `|⟨f∘T^{-n}, g∘Φ_{0,t}⟩|` on the `M x M` grid, with its alias flag.
pub fn flowed_correlation<T: Real>(
    f: &ScalarClosure<T>,
    g: &ScalarClosure<T>,
    n: usize,
    t: T,
    m: usize,
    p: &MapParams<T>,
) -> Result<(f64, bool), DiagnosticsError> {
    let lo = flow_window(p);
    if !(t.f64() >= lo - 1e-15 && t.f64() <= 1.0) {
        return Err(DiagnosticsError::Window { t: t.f64(), lo });
    }
    check_grid(m)?;
    let v = grid_mean(m, |z| f.eval(iterate(z, n, Direction::Backward, p)) * g.eval(flow_map(T::zero(), t, z, p)));
    let k = f.base_frequency().max(g.base_frequency()).max(1) as f64;
    let scale = k * p.alpha.f64().powi(2 * (n as i32 + 1));
    Ok((v.f64().abs(), alias_flag(scale, m)))
}

fn pulled_spectrum<T: Real>(f: &ScalarClosure<T>, n: usize, m: usize, p: &MapParams<T>) -> Result<SpectralField<T>, FieldError> {
    let g = sample(&f.pullback(n, p), m)?;
    Ok(to_spectrum(&g))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedValue {
    /// Signed inner product.
    pub value: f64,
    pub aliased: bool,
}

/// `⟨P_{≤N}(f∘T^{-n}), P_{≤N}(g∘T^{-m})⟩` through sample, FFT and multiplier.
pub fn projected_correlation<T: Real>(
    f: &ScalarClosure<T>,
    g: &ScalarClosure<T>,
    n: usize,
    m: usize,
    ker: &KernelSpec<T>,
    grid: usize,
    p: &MapParams<T>,
) -> Result<ProjectedValue, DiagnosticsError> {
    if !(ker.n.f64() < grid as f64 / 2.0) {
        return Err(FieldError::Cutoff { cutoff: ker.n.f64(), half: grid / 2 }.into());
    }
    let a = project_mollified(&pulled_spectrum(f, n, grid, p)?, ker);
    let b = project_mollified(&pulled_spectrum(g, m, grid, p)?, ker);
    Ok(ProjectedValue { value: a.inner(&b)?.f64(), aliased: a.aliased || b.aliased })
}

/// The same number by duality: `⟨g∘T^{-(m-n)}, P²(f∘T^{-n})∘T^n⟩` for `m ≥ n`.
/// The composition with `T^n` is a lookup in the sampled `P²(f∘T^{-n})`.
pub fn projected_correlation_dual<T: Real>(
    f: &ScalarClosure<T>,
    g: &ScalarClosure<T>,
    n: usize,
    m: usize,
    ker: &KernelSpec<T>,
    grid: usize,
    p: &MapParams<T>,
) -> Result<f64, DiagnosticsError> {
    if m < n {
        return Err(DiagnosticsError::Config(format!("duality route needs m >= n, got n={n}, m={m}")));
    }
    let s = pulled_spectrum(f, n, grid, p)?;
    let pp = project_mollified(&project_mollified(&s, ker), ker);
    let field: GridField<T> = to_grid(&pp);
    let v = grid_mean(grid, |z| {
        g.eval(iterate(z, m - n, Direction::Backward, p)) * field.value_at(iterate(z, n, Direction::Forward, p))
    });
    Ok(v.f64())
}

/// Evaluate independent cells in parallel; results keep the input order.
pub fn batch<C: Sync, R: Send>(cells: &[C], f: impl Fn(&C) -> R + Sync + Send) -> Vec<R> {
    cells.par_iter().map(f).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffDiagonalConfig {
    pub n: f64,
    pub n_max: usize,
    /// Mixing rate `c` in `n_* = 3 log N / (c log α)`.
    pub rate: f64,
}

impl OffDiagonalConfig {
    pub const DEFAULT_RATE: f64 = 0.25;

    pub fn new(n: f64, n_max: usize, rate: Option<f64>) -> Result<Self, DiagnosticsError> {
        if n_max < 1 {
            return Err(DiagnosticsError::Config("n_max must be at least 1".into()));
        }
        let rate = rate.filter(|r| r.is_finite() && *r > 0.0).unwrap_or(Self::DEFAULT_RATE);
        Ok(Self { n, n_max, rate })
    }

    /// First natural number above `3 log N / (c log α)`.
    pub fn n_star(&self, alpha: f64) -> usize {
        let v = 3.0 * self.n.ln() / (self.rate * alpha.ln());
        (v.floor() as usize) + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffDiagonalReport {
    pub value: f64,
    /// `Σ_{n=0}^{n_max} ‖P(f∘T^{-n})‖²`.
    pub diagonal: f64,
    pub n_star: usize,
    pub aliased: bool,
}

/// `|Σ_n Σ_{m<n} ⟨a_n, a_m⟩|` and `Σ ‖a_n‖²` for a sequence of spectra.
pub fn offdiagonal_of<T: Real>(spectra: impl IntoIterator<Item = SpectralField<T>>) -> Result<(f64, f64), FieldError> {
    let mut acc: Option<SpectralField<T>> = None;
    let mut off = 0.0;
    let mut diag = 0.0;
    for s in spectra {
        diag += s.l2_norm_sq().f64();
        match acc.as_mut() {
            None => acc = Some(s),
            Some(a) => {
                off += s.inner(a)?.f64();
                a.coeffs.par_iter_mut().zip(s.coeffs.par_iter()).for_each(|(x, y)| *x = *x + *y);
                a.aliased |= s.aliased;
            }
        }
    }
    Ok((off.abs(), diag))
}

/// Truncated off-diagonal double sum of `P_{≤N}(f∘T^{-n})`.
pub fn offdiagonal_sum<T: Real>(
    f: &ScalarClosure<T>,
    ker: &KernelSpec<T>,
    cfg: &OffDiagonalConfig,
    grid: usize,
    p: &MapParams<T>,
) -> Result<OffDiagonalReport, DiagnosticsError> {
    let mut aliased = false;
    let mut err = None;
    let spectra = (0..=cfg.n_max).map_while(|n| match pulled_spectrum(f, n, grid, p) {
        Ok(s) => {
            aliased |= s.aliased;
            Some(project_mollified(&s, ker))
        }
        Err(e) => {
            err = Some(e);
            None
        }
    });
    let (value, diagonal) = offdiagonal_of(spectra)?;
    if let Some(e) = err {
        return Err(e.into());
    }
    Ok(OffDiagonalReport { value, diagonal, n_star: cfg.n_star(p.alpha.f64()), aliased })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchelorReport {
    pub alpha: f64,
    pub n_steps: usize,
    pub grid: usize,
    pub cutoffs: Vec<f64>,
    pub masses: Vec<f64>,
    /// Per cutoff: set when `N ≥ M/4`.
    pub cutoff_alias: Vec<bool>,
    /// The sampled `ρ_n` oscillates faster than the grid resolves.
    pub field_aliased: bool,
    pub fit_window: (f64, f64),
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_log_alpha: f64,
}

/// Cumulative mass of `ρ_n = Σ_{k≤n} f∘T^{-k}` and its fit against `log N` over
/// the cutoffs in `fit_window` without an alias flag.
pub fn batchelor_curve<T: Real>(
    f: &ScalarClosure<T>,
    n_steps: usize,
    cutoffs: &[f64],
    fit_window: (f64, f64),
    grid: usize,
    p: &MapParams<T>,
) -> Result<BatchelorReport, DiagnosticsError> {
    if cutoffs.is_empty() {
        return Err(DiagnosticsError::Config("cutoffs must not be empty".into()));
    }
    let rho = partial_sum_rho(f, n_steps, p);
    let g = sample(&rho, grid)?;
    let s = to_spectrum(&g);
    let cs: Vec<T> = cutoffs.iter().map(|c| T::c(*c)).collect();
    let masses: Vec<f64> = cumulative_mass(&s, &cs)?.into_iter().map(|(_, v)| v.f64()).collect();
    let cutoff_alias: Vec<bool> = cutoffs.iter().map(|c| *c >= grid as f64 / 4.0).collect();
    let pts: Vec<(f64, f64)> = cutoffs
        .iter()
        .zip(&masses)
        .zip(&cutoff_alias)
        .filter(|((c, _), a)| **c >= fit_window.0 && **c <= fit_window.1 && !**a)
        .map(|((c, m), _)| (c.ln(), *m))
        .collect();
    let (slope, intercept, r_squared) = ols(&pts).unwrap_or((f64::NAN, f64::NAN, 0.0));
    let alpha = p.alpha.f64();
    Ok(BatchelorReport {
        alpha,
        n_steps,
        grid,
        cutoffs: cutoffs.to_vec(),
        masses,
        cutoff_alias,
        field_aliased: g.aliased,
        fit_window,
        slope,
        intercept,
        r_squared,
        slope_log_alpha: slope * alpha.ln(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxTerm {
    pub value: f64,
    pub error_est: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxReport {
    /// `∫₀¹∫₀ᵗ ⟨F_s∘φ_{t,s}, F_t⟩ ds dt`.
    pub first_term: FluxTerm,
    /// `n = 0` term of the series.
    pub n0_term: FluxTerm,
    /// Terms `n = 1..=n_max`.
    pub tail_terms: Vec<FluxTerm>,
    /// `(N, 𝒯_N)` from the truncated `ρ_∞`.
    pub t_n: Vec<(f64, FluxTerm)>,
    pub limit: f64,
}

fn eta_rule(eta: &TimeProfile, nodes: usize) -> Vec<(f64, f64)> {
    half_period_rule(0.0, 1.0, nodes).into_iter().filter(|(t, _)| eta.eval(*t) != 0.0).collect()
}

fn first_term<T: Real>(eta: &TimeProfile, h: &ScalarClosure<T>, nodes: usize, grid: usize, p: &MapParams<T>) -> f64 {
    let mut total = 0.0;
    for (t, wt) in eta_rule(eta, nodes) {
        let et = eta.eval(t);
        for (s, ws) in half_period_rule(0.0, t, nodes) {
            let es = eta.eval(s);
            if es == 0.0 {
                continue;
            }
            let (tt, ss) = (T::c(t), T::c(s));
            let ip = grid_mean(grid, |z| h.eval(flow_map(tt, ss, z, p)) * h.eval(z)).f64();
            total += wt * ws * et * es * ip;
        }
    }
    total
}

fn series_term<T: Real>(
    f_eff: &ScalarClosure<T>,
    n: usize,
    eta: &TimeProfile,
    h: &ScalarClosure<T>,
    nodes: usize,
    grid: usize,
    p: &MapParams<T>,
) -> f64 {
    eta_rule(eta, nodes)
        .into_iter()
        .map(|(t, w)| {
            let tt = T::c(t);
            let ip = grid_mean(grid, |z| {
                f_eff.eval(iterate(flow_map(tt, T::zero(), z, p), n, Direction::Backward, p)) * h.eval(z)
            });
            w * eta.eval(t) * ip.f64()
        })
        .sum()
}

// ρ_∞(t) truncated after n_max series terms.
fn rho_infinity<T: Real>(
    forcing: &ForcingSpec<T>,
    f_eff: &ScalarClosure<T>,
    t: T,
    n_max: usize,
    nodes: usize,
    p: &MapParams<T>,
) -> ScalarClosure<T> {
    let mut terms: Vec<(T, ScalarClosure<T>)> = half_period_rule(0.0, t.f64(), nodes)
        .into_iter()
        .filter_map(|(s, w)| {
            let fs = forcing.at(T::c(s));
            if let ForcingSpec::Separable { eta, .. } = forcing {
                if eta.eval(s) == 0.0 {
                    return None;
                }
            }
            Some((T::c(w), fs.compose(vec![Transform::Flow { from: t, to: T::c(s) }], *p)))
        })
        .collect();
    let series = partial_sum_rho(f_eff, n_max, p);
    terms.push((T::one(), series.compose(vec![Transform::Flow { from: t, to: T::zero() }], *p)));
    ScalarClosure::sum(terms)
}

/// Flux decomposition and `𝒯_N` at each cutoff for separable forcing.
pub fn flux_report<T: Real>(
    forcing: &ForcingSpec<T>,
    cutoffs: &[f64],
    n_max: usize,
    nodes: usize,
    grid: usize,
    p: &MapParams<T>,
) -> Result<FluxReport, DiagnosticsError> {
    let (eta, h) = separable(forcing)?;
    forcing.validate()?;
    check_grid(grid)?;
    if cutoffs.is_empty() {
        return Err(DiagnosticsError::Config("cutoffs must not be empty".into()));
    }
    for c in cutoffs {
        if !(*c >= 1.0 && *c < grid as f64 / 2.0) {
            return Err(FieldError::Cutoff { cutoff: *c, half: grid / 2 }.into());
        }
    }
    let f_eff = effective_forcing(forcing, p, nodes)?.field;
    let coarse_nodes = (nodes / 2).max(1);
    let term = |build: &dyn Fn(usize) -> f64| {
        let a = build(coarse_nodes);
        let b = build(nodes);
        FluxTerm { value: b, error_est: (a - b).abs() }
    };
    let first = term(&|q| first_term(eta, h, q, grid, p));
    let n0 = term(&|q| series_term(&f_eff, 0, eta, h, q, grid, p));
    let tails: Vec<FluxTerm> =
        (1..=n_max).map(|n| term(&|q| series_term(&f_eff, n, eta, h, q, grid, p))).collect();
    let limit = first.value + n0.value + tails.iter().map(|t| t.value).sum::<f64>();
    let h_spec = to_spectrum(&sample(h, grid)?);
    let t_of = |q: usize| -> Result<Vec<f64>, DiagnosticsError> {
        let mut acc = vec![0.0; cutoffs.len()];
        for (t, w) in eta_rule(eta, q) {
            let rho = rho_infinity(forcing, &f_eff, T::c(t), n_max, q, p);
            let s = to_spectrum(&sample(&rho, grid)?);
            for (slot, c) in acc.iter_mut().zip(cutoffs) {
                let proj = project_sharp(&s, T::c(*c))?;
                *slot += w * eta.eval(t) * proj.inner(&h_spec)?.f64();
            }
        }
        Ok(acc)
    };
    let coarse = t_of(coarse_nodes)?;
    let fine = t_of(nodes)?;
    let t_n = cutoffs
        .iter()
        .zip(coarse.iter().zip(&fine))
        .map(|(c, (a, b))| (*c, FluxTerm { value: *b, error_est: (a - b).abs() }))
        .collect();
    Ok(FluxReport { first_term: first, n0_term: n0, tail_terms: tails, t_n, limit })
}

fn separable<T: Real>(forcing: &ForcingSpec<T>) -> Result<(&TimeProfile, &ScalarClosure<T>), DiagnosticsError> {
    match forcing {
        ForcingSpec::Separable { eta, h } => Ok((eta, h)),
        _ => Err(DiagnosticsError::Config("flux needs separable forcing".into())),
    }
}

/// One series term `∫₀¹ ⟨f_α∘T^{-n}∘φ_{t,0}, F_t⟩ dt` with its node-halving error.
pub fn flux_series_term<T: Real>(
    forcing: &ForcingSpec<T>,
    n: usize,
    nodes: usize,
    grid: usize,
    p: &MapParams<T>,
) -> Result<FluxTerm, DiagnosticsError> {
    let (eta, h) = separable(forcing)?;
    check_grid(grid)?;
    let f_eff = effective_forcing(forcing, p, nodes)?.field;
    let a = series_term(&f_eff, n, eta, h, (nodes / 2).max(1), grid, p);
    let b = series_term(&f_eff, n, eta, h, nodes, grid, p);
    Ok(FluxTerm { value: b, error_est: (a - b).abs() })
}

/// Closed form of the `n = 0` term for `∫η = 1` and `h = √2 sin(2πy)`.
pub fn n0_term_closed_form(alpha: f64) -> f64 {
    let x = std::f64::consts::PI * alpha;
    x.sin() / x
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    /// Smallest `C` making the left inequality hold on every sample.
    pub left_constant: f64,
    /// Smallest `C` on the scan grid making the right inequality hold on every sample.
    pub right_constant: f64,
    pub c1: f64,
    pub samples: usize,
}

/// Random real field with Gaussian coefficients on `1 ≤ |k| ≤ band`, unit `L²` norm.
pub fn random_band_limited<T: Real>(grid: usize, band: usize, decay: f64, seed: u64) -> Result<SpectralField<T>, FieldError> {
    check_grid(grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = vec![num_complex::Complex::new(T::zero(), T::zero()); grid * grid];
    let b = band as i64;
    let idx = |k: i64| k.rem_euclid(grid as i64) as usize;
    for kx in -b..=b {
        for ky in 0..=b {
            if ky == 0 && kx <= 0 {
                continue;
            }
            let r2 = kx * kx + ky * ky;
            if r2 > b * b {
                continue;
            }
            let amp = (1.0 + r2 as f64).powf(-decay / 2.0);
            let (u1, u2): (f64, f64) = (rng.gen::<f64>().max(1e-300), rng.gen());
            let rad = (-2.0 * u1.ln()).sqrt();
            let c = num_complex::Complex::new(
                T::c(amp * rad * (2.0 * std::f64::consts::PI * u2).cos()),
                T::c(amp * rad * (2.0 * std::f64::consts::PI * u2).sin()),
            );
            coeffs[idx(kx) * grid + idx(ky)] = c;
            coeffs[idx(-kx) * grid + idx(-ky)] = c.conj();
        }
    }
    let s = SpectralField { m: grid, coeffs, aliased: false };
    let norm = s.l2_norm_sq().sqrt();
    Ok(s.multiply(|_, _| T::one() / norm))
}

/// Measure the constant in
/// `(1/C)‖P_{≤√N} g‖² − ‖g‖²_{H^{-1}}/N ≤ ‖Π_{≤N} g‖² ≤ C ‖P_{≤CN} g‖²`
/// over `count` random band-limited fields and cutoffs `N ≤ M/8`.
/// Mode energies folded onto `(|kx|, |ky|)`, for repeated mollified norms with an even,
/// separable kernel.
struct ModeEnergies {
    kmax: usize,
    folded: Vec<f64>,
}

impl ModeEnergies {
    fn new(s: &SpectralField<f64>) -> Self {
        let m = s.m;
        let total = s.l2_norm_sq();
        // Round-off residue outside the band: at most M² modes below 1e-28 of the total, so
        // dropping them changes norms by well under 1e-18 relative.
        let floor = total * 1e-28;
        let mut kept = Vec::new();
        let mut kmax = 0;
        for i in 0..m {
            for j in 0..m {
                let e = s.coeffs[i * m + j].norm_sqr();
                if e > floor {
                    let (kx, ky) = (wavenumber(i, m).unsigned_abs() as usize, wavenumber(j, m).unsigned_abs() as usize);
                    kmax = kmax.max(kx).max(ky);
                    kept.push((kx, ky, e));
                }
            }
        }
        let w = kmax + 1;
        let mut folded = vec![0.0; w * w];
        for (kx, ky, e) in kept {
            folded[kx * w + ky] += e;
        }
        Self { kmax, folded }
    }

    /// `‖Φ_N f‖²` for the bump multiplier at cutoff `n`.
    fn mollified(&self, n: f64) -> f64 {
        let w = self.kmax + 1;
        let table: Vec<f64> = (0..w).map(|k| bump_hat(k as f64 / n).powi(2)).collect();
        self.folded
            .chunks_exact(w)
            .zip(&table)
            .map(|(row, tx)| tx * row.iter().zip(&table).map(|(e, ty)| e * ty).sum::<f64>())
            .sum()
    }
}

pub fn projection_sandwich(grid: usize, count: usize, seed: u64) -> Result<SandwichReport, DiagnosticsError> {
    check_grid(grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cutoffs: Vec<f64> = (1..).map(|e| 2f64.powi(e)).take_while(|n| *n <= grid as f64 / 8.0).collect();
    let scan: Vec<f64> = (0..=600).map(|i| 1.01f64.powi(i)).collect();
    let mut left: f64 = 1.0;
    // For each scan value, whether the right inequality held on every sample so far.
    let mut right_ok = vec![true; scan.len()];
    for _ in 0..count {
        let band = rng.gen_range(2..=grid / 4);
        let decay = rng.gen_range(0.0..2.0);
        let s0: SpectralField<f64> = random_band_limited(grid, band, decay, rng.gen())?;
        // Round trip through the grid so every quantity comes from the sampled field.
        let s = to_spectrum(&to_grid(&s0));
        let hm1 = sobolev_norm(&s, -1.0).powi(2);
        let modes = ModeEnergies::new(&s);
        for &n in &cutoffs {
            let sharp = project_sharp(&s, n)?.l2_norm_sq();
            let low = modes.mollified(n.sqrt());
            left = left.max(low / (sharp + hm1 / n));
            for (ok, c) in right_ok.iter_mut().zip(&scan) {
                if *ok {
                    *ok = sharp <= c * modes.mollified(c * n) * (1.0 + 1e-12);
                }
            }
        }
    }
    // Smallest scan value from which the inequality holds for all larger ones.
    let mut right = f64::INFINITY;
    for (ok, c) in right_ok.iter().zip(&scan).rev() {
        if *ok {
            right = *c;
        } else {
            break;
        }
    }
    Ok(SandwichReport { left_constant: left, right_constant: right, c1: left.max(right), samples: count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::bump_hat_direct;

    fn p(a: f64) -> MapParams<f64> {
        MapParams::new(a).unwrap()
    }

    #[test]
    fn fit_recovers_rate() {
        let s: Vec<(usize, f64)> = (0..6).map(|n| (n, 3.0 * (-1.7 * n as f64).exp())).collect();
        let fit = DecayFit::from_samples(s);
        assert!((fit.rate - 1.7).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let fit = DecayFit::from_samples(vec![(0, 1.0), (1, 1e-20)]);
        assert!(!fit.is_defined());
        assert_eq!(fit.used, 1);
    }

    #[test]
    fn correlation_at_zero_is_norm() {
        let f = ScalarClosure::<f64>::unit_sine_y();
        let s = correlation_series(&f, &f, 0, 256, &p(16.0)).unwrap();
        assert!((s.rows[0].value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_small_after_two_steps() {
        let f = ScalarClosure::<f64>::unit_sine_y();
        let q = p(16.0);
        let v = grid_mean(2048, |z| f.eval(iterate(z, 2, Direction::Backward, &q)) * f.eval(z));
        assert!(v.abs() < 1e-2);
        let s = correlation_series(&f, &f, 2, 2048, &q).unwrap();
        assert!(s.rows[2].value < 1e-2);
        assert!(s.rows[2].aliased);
    }

    #[test]
    fn first_correlation_matches_closed_form() {
        // ⟨f∘T^{-1}, f⟩ for f = √2 sin 2πy reduces to Re ∫ e^{-2πiα|u-1/2|} du = sin(πα)/(πα).
        let f = ScalarClosure::<f64>::unit_sine_y();
        for a in [8.5, 9.25] {
            let s = correlation_series(&f, &f, 1, 4096, &p(a)).unwrap();
            assert!((s.rows[1].value - n0_term_closed_form(a).abs()).abs() < 1e-4, "{a}");
        }
    }

    #[test]
    fn flowed_correlation_at_one_is_next_step() {
        let f = ScalarClosure::<f64>::unit_sine_y();
        let g = ScalarClosure::sine_x(std::f64::consts::SQRT_2, 1).add(&f);
        let q = p(16.0);
        let (v, _) = flowed_correlation(&f, &g, 1, 1.0, 512, &q).unwrap();
        let direct = grid_mean(512, |z| f.eval(iterate(z, 2, Direction::Backward, &q)) * g.eval(z)).abs();
        assert!((v - direct).abs() < 1e-10);
        assert!(flowed_correlation(&f, &g, 1, 0.6, 512, &q).is_err());
    }

    #[test]
    fn flowed_correlation_matches_offset_quadrature() {
        let f = ScalarClosure::<f64>::unit_sine_y();
        let q = p(64.0);
        let (v1, _) = flowed_correlation(&f, &f, 1, 0.75, 1024, &q).unwrap();
        // Cell-centred oracle at higher resolution.
        let m = 2048;
        let rows: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|i| {
                (0..m)
                    .map(|j| {
                        let z = TorusPoint::new((i as f64 + 0.5) / m as f64, (j as f64 + 0.5) / m as f64);
                        f.eval(iterate(z, 1, Direction::Backward, &q)) * f.eval(flow_map(0.0, 0.75, z, &q))
                    })
                    .sum()
            })
            .collect();
        let oracle = (rows.iter().sum::<f64>() / (m * m) as f64).abs();
        assert!((v1 - oracle).abs() < 5e-3, "{v1} vs {oracle}");
    }

    #[test]
    fn projected_zero_steps_is_mollified_norm() {
        let f = ScalarClosure::<f64>::unit_sine_y();
        let ker = KernelSpec::new(8.0);
        let v = projected_correlation(&f, &f, 0, 0, &ker, 64, &p(16.0)).unwrap();
        let want = (bump_hat_direct(0.0) * bump_hat_direct(1.0 / 8.0)).powi(2);
        assert!((v.value - want).abs() < 1e-10);
        assert!(v.value <= 1.0);
    }

    #[test]
    fn duality_identity() {
        let f = ScalarClosure::<f64>::unit_sine_y();
        let g = ScalarClosure::sine_x(1.0, 1).add(&f);
        let q = p(16.0);
        for (n, m) in [(0, 1), (1, 2), (1, 3)] {
            let ker = KernelSpec::new(16.0);
            let a = projected_correlation(&g, &f, n, m, &ker, 256, &q).unwrap().value;
            let b = projected_correlation_dual(&g, &f, n, m, &ker, 256, &q).unwrap();
            assert!((a - b).abs() < 1e-9, "{n} {m}: {a} {b}");
        }
    }

    #[test]
    fn offdiagonal_single_term() {
        let f = ScalarClosure::<f64>::unit_sine_y();
        let q = p(8.0);
        let ker = KernelSpec::new(8.0);
        let cfg = OffDiagonalConfig::new(8.0, 1, None).unwrap();
        let r = offdiagonal_sum(&f, &ker, &cfg, 256, &q).unwrap();
        let direct = projected_correlation(&f, &f, 1, 0, &ker, 256, &q).unwrap().value.abs();
        assert!((r.value - direct).abs() < 1e-14);
        assert!(OffDiagonalConfig::new(8.0, 0, None).is_err());
    }

    #[test]
    fn offdiagonal_vanishes_for_orthogonal_family() {
        let specs = (1..5).map(|k| to_spectrum(&sample(&ScalarClosure::<f64>::sine_y(1.0, k), 64).unwrap()));
        let (off, diag) = offdiagonal_of(specs).unwrap();
        assert!(off < 1e-14);
        assert!((diag - 2.0).abs() < 1e-12);
    }

    #[test]
    fn n_star_threshold() {
        let cfg = OffDiagonalConfig::new(32.0, 6, None).unwrap();
        assert_eq!(cfg.n_star(16.0), 16);
    }

    #[test]
    fn batchelor_single_mode_steps() {
        let f = ScalarClosure::<f64>::unit_sine_y();
        let r = batchelor_curve(&f, 0, &[1.0, 1.5, 2.0, 10.0], (1.0, 10.0), 64, &p(8.0)).unwrap();
        for m in &r.masses {
            assert!((m - 1.0).abs() < 1e-12);
        }
        assert!(batchelor_curve(&f, 0, &[], (1.0, 10.0), 64, &p(8.0)).is_err());
    }

    #[test]
    fn batchelor_masses_nondecreasing() {
        let f = ScalarClosure::<f64>::unit_sine_y();
        let cutoffs: Vec<f64> = (1..=64).map(|n| n as f64).collect();
        let r = batchelor_curve(&f, 3, &cutoffs, (4.0, 64.0), 512, &p(8.0)).unwrap();
        assert!(r.masses.windows(2).all(|w| w[1] >= w[0]));
        assert!(r.slope > 0.0);
    }

    #[test]
    fn flux_terms_match_closed_forms() {
        let forcing = ForcingSpec::<f64>::default_separable();
        for a in [8.0, 16.0] {
            let r = flux_report(&forcing, &[1.0, 4.0], 1, 64, 64, &p(a)).unwrap();
            assert!(r.n0_term.value.abs() < 1e-12, "{a}: {}", r.n0_term.value);
            // The forcing never leaves its own mode during (1/2, 1).
            assert!((r.first_term.value - 0.5).abs() < 1e-10, "{:?}", r.first_term);
        }
        let t = flux_series_term(&forcing, 0, 16, 1024, &p(8.5)).unwrap();
        assert!((t.value - n0_term_closed_form(8.5)).abs() < 1e-4);
    }

    #[test]
    fn flux_limit_matches_resolved_spectrum() {
        let forcing = ForcingSpec::<f64>::default_separable();
        let r = flux_report(&forcing, &[1.0, 2.0, 8.0], 2, 16, 128, &p(8.0)).unwrap();
        for (_, t) in &r.t_n {
            assert!((t.value - r.limit).abs() < 1e-9, "{} vs {}", t.value, r.limit);
        }
        assert!(flux_report(&ForcingSpec::<f64>::Pulsed(ScalarClosure::zero()), &[1.0], 1, 8, 64, &p(8.0)).is_err());
    }

    #[test]
    fn sandwich_constant_is_moderate() {
        let r = projection_sandwich(128, 10, 3).unwrap();
        assert!(r.c1 >= 1.0 && r.c1 <= 16.0, "{r:?}");
    }
}
