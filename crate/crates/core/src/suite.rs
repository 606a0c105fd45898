//! The verification suite: a declarative registry of checks sharing one
//! Bryant solve, a deterministic JSON report and the plot tables.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    asymptotic_constants, bishop_gromov_scan, bryant_curve_limits, bryant_sandwich,
    cigar_line_angle_profile, cigar_line_curve_limits, linear_fit, product_sandwich, AngleProfile,
    AsymptoticReport, CURVE_LIMIT_TOL,
};
use crate::bryant::{integrate, seed, seed_with_hessian, SolitonProfile, UNIT_CENTRAL_HESSIAN};
use crate::error::LabError;
use crate::levelset::{
    area_ode_check, coarea_second_derivative_check, default_step, diameter_drop_bound,
    growth_tables, km_crossing, level_grid, record, records, volume_record, write_levels_csv, Spacing,
};
use crate::models::{
    cigar_tail_constant, cylinder_slice_evolution, potential_family_residual,
    potential_rigidity_probe, random_family_pairs, standard_perturbations, ModelSpace,
    SliceEvolution,
};
use crate::pick::{audit, pick_points, PickOptions, PickSchedule, PickSequence};

/// Tolerance on the conserved drift at the reference `tol = 1e-10`; scales
/// linearly with `tol`.
const DRIFT_PER_TOL: f64 = 10.0;
/// Same for the pointwise soliton residual.
const RESIDUAL_PER_TOL: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub r_max: f64,
    pub tol: f64,
    pub eps_seed: f64,
    /// Window for the asymptotic fits.
    pub asymptotic_window: [f64; 2],
    /// Levels `λ` whose doubling ratios are checked.
    pub doubling_window: [f64; 2],
    /// Window on which `D/λ` must decrease.
    pub diameter_window: [f64; 2],
    /// Level grid for the monotonicity and closure scans.
    pub level_range: [f64; 2],
    pub level_count: usize,
    /// Tip curvatures of the cigar lines exercised.
    pub rhat: Vec<f64>,
    /// Cap mesh `(n_u, n_θ)` for point picking.
    pub pick_mesh: [usize; 2],
    pub j_max: usize,
    pub angle_samples: usize,
    pub cylinder_radius: f64,
    pub family_seed: u64,
    pub out: PathBuf,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            r_max: 220.0,
            tol: 1e-10,
            eps_seed: 1e-4,
            asymptotic_window: [50.0, 200.0],
            doubling_window: [50.0, 100.0],
            diameter_window: [10.0, 200.0],
            level_range: [1.0, 200.0],
            level_count: 200,
            rhat: vec![0.5],
            pick_mesh: [48, 64],
            j_max: 6,
            angle_samples: 61,
            cylinder_radius: 1.5,
            family_seed: 7,
            out: PathBuf::from("lab-out"),
        }
    }
}

impl SuiteConfig {
    pub fn load(path: &Path) -> Result<Self, LabError> {
        let cfg: Self = serde_json::from_reader(File::open(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Everything positive and every window ordered. Whether the windows fit
    /// the integration range is decided per check, after the solve.
    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |m: String| Err(LabError::InvalidParameter(m));
        if !(self.r_max >= 10.0 && self.r_max.is_finite()) {
            return bad(format!("r_max must be at least 10, got {}", self.r_max));
        }
        if !(self.tol >= 1e-12 && self.tol <= 1e-6) {
            return bad(format!("tol must lie in [1e-12, 1e-6], got {}", self.tol));
        }
        if !(self.eps_seed > 0.0 && self.eps_seed <= 1e-3) {
            return bad(format!("eps_seed must lie in (0, 1e-3], got {}", self.eps_seed));
        }
        for (name, w) in [
            ("asymptotic_window", self.asymptotic_window),
            ("doubling_window", self.doubling_window),
            ("diameter_window", self.diameter_window),
            ("level_range", self.level_range),
        ] {
            if !(w[0] > 0.0 && w[1] > w[0] && w[1].is_finite()) {
                return bad(format!("{name} must satisfy 0 < lo < hi, got {w:?}"));
            }
        }
        if self.level_count < 2 || self.angle_samples < 2 || self.j_max == 0 {
            return bad("level_count, angle_samples and j_max must be positive".into());
        }
        if self.rhat.is_empty() || self.rhat.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
            return bad(format!("rhat values must lie in (0, 1), got {:?}", self.rhat));
        }
        if self.pick_mesh.iter().any(|&n| n < 8) {
            return bad(format!("pick_mesh too coarse: {:?}", self.pick_mesh));
        }
        if !(self.cylinder_radius > 0.0) {
            return bad("cylinder_radius must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    MeasuredOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Expected {
    Value(f64),
    Band([f64; 2]),
}

impl Expected {
    fn admits(&self, x: f64, tol: f64) -> bool {
        match *self {
            Expected::Value(v) => (x - v).abs() <= tol,
            Expected::Band([lo, hi]) => x >= lo - tol && x <= hi + tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check_id: String,
    pub statement: String,
    pub status: Status,
    /// The first entry is the graded value; the rest are diagnostics.
    pub measured: Vec<f64>,
    pub expected: Expected,
    pub tolerance: f64,
    pub note: String,
}

impl CheckResult {
    /// `pass` only when the graded value sits inside `expected ± tolerance`.
    pub fn is_consistent(&self) -> bool {
        self.status != Status::Pass
            || self
                .measured
                .first()
                .is_some_and(|&m| self.expected.admits(m, self.tolerance))
    }
}

/// What a check computed, before the registry attaches its identity.
struct Outcome {
    measured: Vec<f64>,
    expected: Expected,
    tolerance: f64,
    conditions: bool,
    measured_only: bool,
    note: String,
}

impl Outcome {
    fn new(graded: f64, expected: Expected, tolerance: f64) -> Self {
        Self {
            measured: vec![graded],
            expected,
            tolerance,
            conditions: true,
            measured_only: false,
            note: String::new(),
        }
    }

    fn with(mut self, extra: impl IntoIterator<Item = f64>) -> Self {
        self.measured.extend(extra);
        self
    }

    fn require(mut self, ok: bool, what: &str) -> Self {
        if !ok {
            self.conditions = false;
            self.push_note(&format!("failed: {what}"));
        }
        self
    }

    fn note(mut self, text: &str) -> Self {
        self.push_note(text);
        self
    }

    fn push_note(&mut self, text: &str) {
        if !self.note.is_empty() {
            self.note.push_str("; ");
        }
        self.note.push_str(text);
    }
}

/// What a check needs from the shared solve.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Need {
    Nothing,
    Profile { level: f64, radius: f64 },
}

type Run = fn(&SuiteContext) -> Result<Outcome, LabError>;

pub struct CheckDef {
    pub id: &'static str,
    pub statement: &'static str,
    /// Acceptance criterion the check belongs to.
    pub criterion: u8,
    need: fn(&SuiteConfig) -> Need,
    run: Run,
}

/// Shared inputs, each computed at most once per suite run.
pub struct SuiteContext {
    pub config: SuiteConfig,
    profile: OnceLock<Result<Arc<SolitonProfile>, String>>,
    asymptotics: OnceLock<Result<AsymptoticReport, String>>,
    angles: OnceLock<Result<Vec<(f64, AngleProfile)>, String>>,
    pick: OnceLock<Result<PickSequence, String>>,
}

impl SuiteContext {
    pub fn new(config: SuiteConfig) -> Self {
        Self {
            config,
            profile: OnceLock::new(),
            asymptotics: OnceLock::new(),
            angles: OnceLock::new(),
            pick: OnceLock::new(),
        }
    }

    /// The Bryant profile solved with the configured seed, `r_max` and `tol`.
    pub fn profile(&self) -> Result<Arc<SolitonProfile>, LabError> {
        self.profile
            .get_or_init(|| {
                let c = &self.config;
                seed(c.eps_seed)
                    .and_then(|s| integrate(&s, c.r_max, c.tol))
                    .map(Arc::new)
                    .map_err(|e| e.to_string())
            })
            .clone()
            .map_err(LabError::InvalidParameter)
    }

    fn asymptotics(&self) -> Result<AsymptoticReport, LabError> {
        self.asymptotics
            .get_or_init(|| {
                self.profile()
                    .and_then(|p| asymptotic_constants(&p, self.config.asymptotic_window))
                    .map_err(|e| e.to_string())
            })
            .clone()
            .map_err(LabError::InvalidParameter)
    }

    pub fn angle_profiles(&self) -> Result<Vec<(f64, AngleProfile)>, LabError> {
        self.angles
            .get_or_init(|| {
                self.config
                    .rhat
                    .iter()
                    .map(|&rh| {
                        let m = ModelSpace::cigar_line_from_rhat(rh)?;
                        Ok((rh, cigar_line_angle_profile(&m, 100.0, 20.0, self.config.angle_samples)?))
                    })
                    .collect::<Result<Vec<_>, LabError>>()
                    .map_err(|e| e.to_string())
            })
            .clone()
            .map_err(LabError::InvalidParameter)
    }

    pub fn pick_sequence(&self) -> Result<PickSequence, LabError> {
        self.pick
            .get_or_init(|| {
                ModelSpace::cigar_line_from_rhat(self.config.rhat[0])
                    .and_then(|m| pick_points(&m, &self.pick_options()))
                    .map_err(|e| e.to_string())
            })
            .clone()
            .map_err(LabError::InvalidParameter)
    }

    fn pick_options(&self) -> PickOptions {
        PickOptions {
            schedule: PickSchedule::default(),
            j_max: self.config.j_max,
            mesh: (self.config.pick_mesh[0], self.config.pick_mesh[1]),
        }
    }

    fn fd_levels(&self) -> Vec<f64> {
        let hi = self.config.level_range[1];
        [0.025, 0.1, 0.25, 0.5, 1.0].iter().map(|f| f * hi).collect()
    }
}

fn needs_level(level: f64) -> Need {
    Need::Profile { level, radius: 0.0 }
}

fn needs_radius(radius: f64) -> Need {
    Need::Profile { level: 0.0, radius }
}

fn strictly_monotone(v: &[f64], increasing: bool) -> bool {
    v.windows(2)
        .all(|p| if increasing { p[1] > p[0] } else { p[1] < p[0] })
}

// ---------------------------------------------------------------- checks

fn check_profile_residual(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let p = ctx.profile()?;
    let metric = p.metric();
    let radii: Vec<f64> = p.radii().collect();
    let mut worst: f64 = 0.0;
    // nodes and interval midpoints; the midpoints test the interpolant
    for pair in radii.windows(2) {
        for r in [pair[1], 0.5 * (pair[0] + pair[1])] {
            worst = worst.max(metric.soliton_residual(p.as_ref(), r)?.max_abs());
        }
    }
    let tol = RESIDUAL_PER_TOL * ctx.config.tol;
    Ok(Outcome::new(worst, Expected::Value(0.0), tol).with([p.r_max(), radii.len() as f64]))
}

fn check_conserved_drift(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let p = ctx.profile()?;
    let radii: Vec<f64> = p.radii().collect();
    let mut worst: f64 = 0.0;
    for pair in radii.windows(2) {
        for r in [pair[1], 0.5 * (pair[0] + pair[1])] {
            let st = p.state_at(r)?;
            worst = worst.max((st.scalar_curvature() + st.fp * st.fp - p.r_origin()).abs());
        }
    }
    let tol = DRIFT_PER_TOL * ctx.config.tol;
    Ok(Outcome::new(worst, Expected::Value(0.0), tol)
        .with([p.max_drift()])
        .note(&format!("tolerance {DRIFT_PER_TOL}·tol")))
}

fn level_records(ctx: &SuiteContext) -> Result<Vec<crate::levelset::LevelSetRecord>, LabError> {
    let c = &ctx.config;
    let grid = level_grid(c.level_range[0], c.level_range[1], c.level_count, Spacing::Linear)?;
    let p = ctx.profile()?;
    records(&p, &grid)
}

fn check_detii_decreasing(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let recs = level_records(ctx)?;
    let d: Vec<f64> = recs.iter().map(|r| r.detii_integral).collect();
    let violations = d.windows(2).filter(|p| p[1] >= p[0]).count();
    let worst = d.windows(2).map(|p| p[1] - p[0]).fold(f64::NEG_INFINITY, f64::max);
    Ok(Outcome::new(violations as f64, Expected::Value(0.0), 0.0)
        .with([worst, recs.len() as f64, d[0], d[d.len() - 1]]))
}

fn check_km_increasing(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let recs = level_records(ctx)?;
    let k: Vec<f64> = recs.iter().map(|r| r.km_integral).collect();
    let p = ctx.profile()?;
    let half = km_crossing(&p, 2.0 * PI)?.unwrap_or(f64::INFINITY);
    let bounded = k.iter().all(|&v| v > 0.0 && v < 4.0 * PI);
    Ok(Outcome::new(half, Expected::Band([0.0, 100.0]), 0.0)
        .with([k[0], k[k.len() - 1]])
        .require(strictly_monotone(&k, true), "∫K_M strictly increasing")
        .require(bounded, "∫K_M inside (0, 4π)")
        .note(&format!("∫K_M first exceeds 2π at λ = {half:.4}")))
}

fn check_gauss_bonnet(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let recs = level_records(ctx)?;
    let worst = recs
        .iter()
        .map(|r| (r.km_integral + r.detii_integral - 4.0 * PI).abs())
        .fold(0.0, f64::max);
    Ok(Outcome::new(worst, Expected::Value(0.0), 1e-9))
}

fn doubling_ratios(ctx: &SuiteContext) -> Result<(Vec<f64>, Vec<f64>), LabError> {
    let p = ctx.profile()?;
    let [lo, hi] = ctx.config.doubling_window;
    let grid = level_grid(lo, hi, 26, Spacing::Linear)?;
    let rows = grid
        .par_iter()
        .map(|&l| {
            let a = record(&p, l)?.area;
            let a2 = record(&p, 2.0 * l)?.area;
            let v = volume_record(&p, l)?.volume;
            let v2 = volume_record(&p, 2.0 * l)?.volume;
            Ok((a2 / a, v2 / v))
        })
        .collect::<Result<Vec<_>, LabError>>()?;
    Ok(rows.into_iter().unzip())
}

fn farthest_from(v: &[f64], target: f64) -> f64 {
    v.iter()
        .copied()
        .max_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
        .expect("non-empty")
}

fn min_max(v: &[f64]) -> [f64; 2] {
    v.iter().fold([f64::INFINITY, f64::NEG_INFINITY], |[lo, hi], &x| [lo.min(x), hi.max(x)])
}

fn check_area_doubling(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let (a, _) = doubling_ratios(ctx)?;
    Ok(Outcome::new(farthest_from(&a, 2.0), Expected::Band([1.9, 2.1]), 0.0).with(min_max(&a)))
}

fn check_volume_doubling(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let (_, v) = doubling_ratios(ctx)?;
    Ok(Outcome::new(farthest_from(&v, 4.0), Expected::Band([3.6, 4.4]), 0.0).with(min_max(&v)))
}

/// Worst relative error at `h` and the smallest improvement factor at `h/2`.
fn fd_convergence(ctx: &SuiteContext, err: impl Fn(f64, f64) -> Result<f64, LabError> + Sync) -> Result<(f64, f64), LabError> {
    let pairs = ctx
        .fd_levels()
        .par_iter()
        .map(|&l| {
            let h = default_step(l);
            Ok((err(l, h)?, err(l, h / 2.0)?))
        })
        .collect::<Result<Vec<_>, LabError>>()?;
    let worst = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    let gain = pairs.iter().map(|p| p.0 / p.1).fold(f64::INFINITY, f64::min);
    Ok((worst, gain))
}

fn check_area_rate(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let p = ctx.profile()?;
    let (worst, gain) = fd_convergence(ctx, |l, h| Ok(area_ode_check(&p, l, h)?.rel_error()))?;
    Ok(Outcome::new(worst, Expected::Value(0.0), 1e-4)
        .with([gain])
        .require(gain >= 3.5, "error improves about 4× at h/2")
        .note("h = 1e-3·λ"))
}

fn check_coarea_second(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let p = ctx.profile()?;
    let mut sandwich = true;
    for l in ctx.fd_levels() {
        sandwich &= coarea_second_derivative_check(&p, l, default_step(l))?.sandwich_holds();
    }
    let (worst, gain) = fd_convergence(ctx, |l, h| {
        Ok(coarea_second_derivative_check(&p, l, h)?.rel_error())
    })?;
    Ok(Outcome::new(worst, Expected::Value(0.0), 1e-4)
        .with([gain])
        .require(gain >= 3.5, "error improves about 4× at h/2")
        .require(sandwich, "(1-δ)·rhs ≤ V'' ≤ rhs")
        .note("h = 1e-3·λ"))
}

fn check_scalar_decreasing(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let p = ctx.profile()?;
    let radii: Vec<f64> = (0..=4000).map(|i| 200.0 * i as f64 / 4000.0).collect();
    let r: Vec<f64> = radii
        .iter()
        .map(|&x| p.scalar_curvature(x))
        .collect::<Result<_, _>>()?;
    let tail: Vec<(f64, f64)> = radii
        .iter()
        .zip(&r)
        .filter(|(x, _)| **x >= 50.0)
        .map(|(x, v)| (x.ln(), v.ln()))
        .collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = tail.into_iter().unzip();
    let exponent = linear_fit(&lx, &ly).0;
    Ok(Outcome::new(r[r.len() - 1], Expected::Band([0.0, 0.05]), 0.0)
        .with([exponent])
        .require(strictly_monotone(&r, false), "R strictly decreasing in r")
        .require((exponent + 1.0).abs() <= 0.1, "decay exponent within 0.1 of -1")
        .note(&format!("R(200) and log-log decay exponent {exponent:.4} on [50, 200]")))
}

fn check_rs_band(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let rep = ctx.asymptotics()?;
    let g = rep.get("R*s").expect("R*s report");
    let [lo, hi] = [g.first.min(g.last), g.first.max(g.last)];
    Ok(Outcome::new(g.constant, Expected::Band([0.1, 10.0]), 0.0)
        .with([lo, hi, g.spread])
        .require(lo >= 0.1 && hi <= 10.0, "R·s inside [0.1, 10] across the window")
        .require(g.spread <= 0.1, "window spread ≤ 10%"))
}

fn check_diameter_sublinear(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let p = ctx.profile()?;
    let [lo, hi] = ctx.config.diameter_window;
    let grid = level_grid(lo, hi, 100, Spacing::Log)?;
    let ratio: Vec<f64> = records(&p, &grid)?
        .iter()
        .map(|r| r.diameter_inner / r.lambda)
        .collect();
    let end = ratio[ratio.len() - 1];
    Ok(Outcome::new(end, Expected::Band([0.0, 0.25]), 0.0)
        .with([ratio[0]])
        .require(strictly_monotone(&ratio, false), "D/λ strictly decreasing"))
}

fn check_diameter_sqrt(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let rep = ctx.asymptotics()?;
    let g = rep.get("D/sqrt(s)").expect("D/sqrt(s) report");
    Ok(Outcome::new(g.spread, Expected::Value(0.0), 0.1).with([g.constant, g.exponent]))
}

fn check_rd2_constant(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let rep = ctx.asymptotics()?;
    let g = rep.get("R*D^2").expect("R*D^2 report");
    let pi2 = PI * PI;
    Ok(Outcome::new(g.constant, Expected::Band([pi2, 3.0 * pi2]), 0.0)
        .with([rep.rd2_over_pi2, g.spread])
        .require(g.spread <= 0.1, "window spread ≤ 10%")
        .note(&format!(
            "flag: C/π² = {:.4}; a limit of π² is not what this profile shows, 2π² (the scalar curvature of the round sphere of radius 1/π) is",
            rep.rd2_over_pi2
        )))
}

fn check_affine_family(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let m = ModelSpace::cigar_line_from_rhat(ctx.config.rhat[0])?;
    let mut worst: f64 = 0.0;
    for (c1, c2) in random_family_pairs(ctx.config.family_seed, 10) {
        worst = worst.max(potential_family_residual(&m, c1, c2)?);
    }
    Ok(Outcome::new(worst, Expected::Value(0.0), 1e-10))
}

fn check_rigidity(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let m = ModelSpace::cigar_line_from_rhat(ctx.config.rhat[0])?;
    let eps = [1e-2, 1e-3, 1e-4];
    let mut slopes = Vec::new();
    for (_, p) in standard_perturbations() {
        let res: Vec<f64> = eps
            .iter()
            .map(|&e| Ok(potential_rigidity_probe(&m, p.as_ref(), e)?.residual.ln()))
            .collect::<Result<_, LabError>>()?;
        let le: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
        slopes.push(linear_fit(&le, &res).0);
    }
    Ok(Outcome::new(farthest_from(&slopes, 1.0), Expected::Value(1.0), 0.1).with(slopes))
}

fn check_slice_extinction(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let a0 = ctx.config.cylinder_radius;
    let ev: SliceEvolution = cylinder_slice_evolution(a0, a0 * a0, 201)?;
    let exact = a0 * a0 / 2.0;
    let last = ev.samples.last().expect("samples");
    Ok(Outcome::new(ev.extinction_time, Expected::Value(exact), 1e-12 * exact)
        .with([last.area])
        .require(ev.extinct && last.area == 0.0, "area reaches zero")
        .require(ev.bound_holds(), "dA/dτ ≤ -½∫R da at every step"))
}

fn check_angle_profile(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let profiles = ctx.angle_profiles()?;
    let (rh, first) = &profiles[0];
    let bound = |rh: f64| (1.0 - rh).sqrt() + 0.05;
    let mut out = Outcome::new(first.min_cos, Expected::Band([0.0, bound(*rh)]), 0.0);
    for (rh, prof) in &profiles {
        let axis = prof.samples[0].cos_theta;
        out = out
            .with([prof.min_cos, axis])
            .require(prof.holds_everywhere, &format!("pre-limit inequality at R̂ = {rh}"))
            .require(prof.min_cos <= bound(*rh), &format!("min cos θ ≤ √(1-R̂) + 0.05 at R̂ = {rh}"))
            .require((axis - 1.0).abs() < 1e-9, &format!("cos θ = 1 on the axis at R̂ = {rh}"));
    }
    Ok(out)
}

fn check_bryant_sandwich(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let p = ctx.profile()?;
    let rep = bryant_sandwich(&p, 0.05)?;
    let at200 = p.state_at(200.0)?.f / 200.0;
    let s_bar = rep.s_bar.unwrap_or(f64::INFINITY);
    Ok(Outcome::new(at200, Expected::Band([0.95, 1.0]), 0.0)
        .with([rep.worst_upper, s_bar])
        .require(rep.worst_upper < 1.0, "f < s everywhere")
        .require(s_bar <= 200.0, "f/s ≥ 0.95 beyond a measured s̄ ≤ 200")
        .note(&format!("s̄(0.05) = {s_bar:.3}")))
}

fn check_product_sandwich(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let rh = ctx.config.rhat[0];
    let m = ModelSpace::cigar_line_from_rhat(rh)?;
    let (worst, axis) = product_sandwich(&m, 1000.0)?;
    Ok(Outcome::new(axis, Expected::Value((1.0 - rh).sqrt()), 1e-12)
        .with([worst])
        .require(worst < 1.0, "f(p) - f(O) < d(p, O) on the grid"))
}

fn check_volume_ratio(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let p = ctx.profile()?;
    let radii = level_grid(1.0, 200.0, 20, Spacing::Log)?;
    let scan = bishop_gromov_scan(&p, &radii)?;
    Ok(Outcome::new(scan.alpha_at_max, Expected::Band([0.0, 0.05]), 0.0)
        .with([scan.worst_increase, scan.alpha_decay_exponent])
        .require(scan.worst_increase < 0.0, "ratio strictly decreasing at all radii")
        .require(
            (scan.alpha_decay_exponent + 1.0).abs() <= 0.2,
            "α decays like 1/r",
        ))
}

fn check_point_picking(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let seq = ctx.pick_sequence()?;
    let m = ModelSpace::cigar_line_from_rhat(ctx.config.rhat[0])?;
    let a = audit(&m, &seq)?;
    let n = seq.points.len() as f64;
    Ok(Outcome::new(n, Expected::Band([1.0, ctx.config.j_max as f64]), 0.0)
        .with([seq.growth_slope, a.mesh_change])
        .with(seq.points.iter().map(|p| p.r2_scalar))
        .require(a.all_hold(), "independent audit of (a)-(d)")
        .note(&format!("mesh change at double resolution {:.2e}", a.mesh_change)))
}

fn check_pick_refusal(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let m = ModelSpace::BryantNumeric(ctx.profile()?);
    match pick_points(&m, &ctx.pick_options()) {
        Err(LabError::BoundedCurvatureDiameter { bound, slope }) => {
            Ok(Outcome::new(slope, Expected::Band([-0.5, 0.5]), 0.0)
                .with([bound])
                .note(&format!("refused: R·D² ≤ {bound:.4}")))
        }
        Err(e) => Ok(Outcome::new(f64::NAN, Expected::Band([-0.5, 0.5]), 0.0)
            .require(false, &format!("typed refusal, got: {e}"))),
        Ok(_) => Ok(Outcome::new(f64::NAN, Expected::Band([-0.5, 0.5]), 0.0)
            .require(false, "typed refusal, got a sequence")),
    }
}

fn check_diameter_drop(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let p = ctx.profile()?;
    let drops = (0..10)
        .map(|i| {
            let b = 10.0 + 20.0 * i as f64;
            diameter_drop_bound(&p, (2.0 * b).min(200.0), b)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let min_slack = drops.iter().map(|d| d.slack).fold(f64::INFINITY, f64::min);
    let betas: Vec<f64> = drops.iter().filter(|d| d.b >= 50.0).map(|d| d.beta_b).collect();
    let beta_ok = betas.iter().all(|b| (b - 1.0).abs() <= 0.1);
    Ok(Outcome::new(min_slack, Expected::Band([0.0, f64::MAX]), 0.0)
        .with(min_max(&betas))
        .require(beta_ok, "β_b within 10% of 1 for b ≥ 50"))
}

fn check_homothety(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let c = &ctx.config;
    let p = ctx.profile()?;
    // a profile with four times the curvature at O is the unit one shrunk by 1/2
    let k: f64 = 4.0;
    let mu = 1.0 / k;
    let root = mu.sqrt();
    let r_cmp = c.r_max.min(50.0);
    let scaled = integrate(
        &seed_with_hessian(c.eps_seed * root, k * UNIT_CENTRAL_HESSIAN)?,
        (r_cmp * root).max(10.0),
        c.tol,
    )?;
    // w and f' scale with √μ and 1/√μ, f is invariant
    let mut worst: f64 = 0.0;
    let mut worst_rd2: f64 = 0.0;
    for i in 1..=200 {
        let r = r_cmp * i as f64 / 200.0;
        let a = p.state_at(r)?;
        let b = scaled.state_at(root * r)?;
        worst = worst
            .max((b.w / root - a.w).abs() / a.w)
            .max((b.f - a.f).abs() / a.f)
            .max((b.fp * root - a.fp).abs() / a.fp);
        let rd2_a = a.scalar_curvature() * a.w * a.w;
        let rd2_b = b.scalar_curvature() * b.w * b.w;
        worst_rd2 = worst_rd2.max((rd2_b - rd2_a).abs() / rd2_a);
    }
    Ok(Outcome::new(worst, Expected::Value(0.0), 1e-6)
        .with([worst_rd2])
        .require(worst_rd2 <= 1e-6, "R·D² invariant under the homothety"))
}

fn check_bryant_curve(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let p = ctx.profile()?;
    let rec = bryant_curve_limits(&p)?;
    Ok(Outcome::new(rec.closure, Expected::Value(0.0), CURVE_LIMIT_TOL)
        .with([rec.zeta, rec.r_limit, rec.spread])
        .require((rec.zeta - 1.0).abs() <= CURVE_LIMIT_TOL, "ζ → 1")
        .require(rec.r_limit <= CURVE_LIMIT_TOL, "R_Γ → 0")
        .require(rec.gradient_nondecreasing, "|∇f| nondecreasing along the curve"))
}

fn check_cigar_line_curves(ctx: &SuiteContext) -> Result<Outcome, LabError> {
    let rh = ctx.config.rhat[0];
    let m = ModelSpace::cigar_line_from_rhat(rh)?;
    let axis = cigar_line_curve_limits(&m, (0.0, 0.0), 200.0)?;
    let off = cigar_line_curve_limits(&m, (0.0, 8.0), 200.0)?;
    Ok(Outcome::new(axis.zeta, Expected::Value((1.0 - rh).sqrt()), 1e-9)
        .with([axis.r_limit, off.zeta, off.r_limit, off.closure])
        .require((axis.r_limit - rh).abs() <= 1e-9, "R_Γ = R̂ on the axis")
        .require(off.zeta > 1.0 - 1e-3 && off.r_limit < 1e-3, "ζ → 1, R_Γ → 0 off the axis")
        .require(off.closure.abs() <= CURVE_LIMIT_TOL, "ζ² + R_Γ = 1 off the axis")
        .require(axis.gradient_nondecreasing && off.gradient_nondecreasing, "|∇f| nondecreasing"))
}

fn check_cigar_tail(_: &SuiteContext) -> Result<Outcome, LabError> {
    let v = cigar_tail_constant(1.0, 20.0);
    Ok(Outcome::new(v, Expected::Value(16.0), 1e-9))
}

fn nothing(_: &SuiteConfig) -> Need {
    Need::Nothing
}

/// The registry. Ids are unique and sorted on output.
pub fn registry() -> Vec<CheckDef> {
    macro_rules! check {
        ($id:literal, $crit:literal, $stmt:literal, $need:expr, $run:ident) => {
            CheckDef {
                id: $id,
                statement: $stmt,
                criterion: $crit,
                need: $need,
                run: $run,
            }
        };
    }
    vec![
        check!("profile-residual", 1,
            "the integrated profile satisfies Ric = Hess f pointwise",
            |_| Need::Profile { level: 0.0, radius: 0.0 }, check_profile_residual),
        check!("conserved-drift", 1,
            "R + |∇f|² stays equal to R(O) = 1 along the profile",
            |_| Need::Profile { level: 0.0, radius: 0.0 }, check_conserved_drift),
        check!("detii-decreasing", 2,
            "∫ det II over S_λ is strictly decreasing in λ",
            |c| needs_level(c.level_range[1]), check_detii_decreasing),
        check!("km-increasing-bounded", 3,
            "∫ K_M(e₁, e₂) over S_λ increases inside (0, 4π) and passes 2π by λ = 100",
            |c| needs_level(c.level_range[1]), check_km_increasing),
        check!("gauss-bonnet-closure", 4,
            "∫ K_M + ∫ det II = 4π on every level sphere",
            |c| needs_level(c.level_range[1]), check_gauss_bonnet),
        check!("area-doubling", 5,
            "A_λ grows linearly: A_{2λ}/A_λ near 2",
            |c| needs_level(2.0 * c.doubling_window[1]), check_area_doubling),
        check!("volume-doubling", 5,
            "V_λ grows quadratically: V_{2λ}/V_λ near 4",
            |c| needs_level(2.0 * c.doubling_window[1]), check_volume_doubling),
        check!("area-rate-identity", 6,
            "dA/dλ = ∫ H/|∇f| over S_λ",
            |c| needs_level(c.level_range[1] * 1.001), check_area_rate),
        check!("coarea-second-derivative", 6,
            "d/dλ ∫ 1/|∇f| = 2∫ K_M/|∇f|³, sandwiched between 2∫K_M and 2∫K_M/(1 − δ)",
            |c| needs_level(c.level_range[1] * 1.001), check_coarea_second),
        check!("scalar-decreasing-radial", 7,
            "R decreases along the radial curve and decays like 1/s",
            |_| needs_radius(200.0), check_scalar_decreasing),
        check!("curvature-distance-band", 8,
            "R·s stays in a fixed band [1/c, c]",
            |c| needs_level(c.asymptotic_window[1]), check_rs_band),
        check!("diameter-sublinear", 9,
            "D_λ/λ decreases toward 0",
            |c| needs_level(c.diameter_window[1]), check_diameter_sublinear),
        check!("diameter-sqrt-growth", 9,
            "D_λ is comparable to √s",
            |c| needs_level(c.asymptotic_window[1]), check_diameter_sqrt),
        check!("curvature-diameter-constant", 10,
            "R·D_λ² converges to a finite constant C",
            |c| needs_level(c.asymptotic_window[1]), check_rd2_constant),
        check!("affine-family-residual", 11,
            "c₁ + c₂ s + 2 ln cosh(aσ) is a potential for every (c₁, c₂)",
            nothing, check_affine_family),
        check!("rigidity-first-order", 11,
            "non-affine perturbations of the potential break the soliton equation at first order",
            nothing, check_rigidity),
        check!("slice-extinction", 12,
            "the round sphere factor of the cylinder shrinks to zero area at τ = a₀²/2",
            nothing, check_slice_extinction),
        check!("angle-profile", 13,
            "|∇f(q)| cos θ ≥ (f(q) − f(O))/s, with cos θ bounded away from 1 on far levels",
            nothing, check_angle_profile),
        check!("sandwich-bryant", 14,
            "(1 − δ)s ≤ f < s far out on the Bryant soliton",
            |_| needs_radius(200.0), check_bryant_sandwich),
        check!("sandwich-product", 14,
            "f/s equals |∇f| along the axis of the cigar line",
            nothing, check_product_sandwich),
        check!("volume-ratio-monotone", 15,
            "vol B(O, r)/(ω₃ r³) decreases and tends to 0",
            |_| needs_radius(200.0), check_volume_ratio),
        check!("point-picking", 16,
            "picked points satisfy the curvature pinching, growth and disjointness properties",
            nothing, check_point_picking),
        check!("pick-refusal-bryant", 16,
            "picking refuses on the Bryant profile because R·D² stays bounded",
            |c| needs_level(c.asymptotic_window[1]), check_pick_refusal),
        check!("diameter-drop-inequality", 17,
            "D_b ≥ D_a − 2β_b(a − b) with β_b → 1",
            |_| needs_level(200.0), check_diameter_drop),
        check!("homothety-covariance", 18,
            "profiles with different R(O) agree after rescaling",
            |_| Need::Profile { level: 0.0, radius: 0.0 }, check_homothety),
        check!("curve-limit-bryant", 7,
            "ζ_Γ² + R_Γ = R(O) on the radial curve, with ζ_Γ = 1 and R_Γ = 0",
            |c| needs_level(c.asymptotic_window[1]), check_bryant_curve),
        check!("curve-limit-cigar-line", 13,
            "ζ_Γ² + R_Γ = 1 on integral curves of the cigar line",
            nothing, check_cigar_line_curves),
        check!("cigar-tail-constant", 11,
            "R e^{2aσ} → 16a² on the cigar",
            nothing, check_cigar_tail),
    ]
}

/// Profile summary attached to the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub r_max: f64,
    pub lambda_max: f64,
    pub nodes: usize,
    pub max_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub profile: Option<ProfileSummary>,
    pub checks: Vec<CheckResult>,
    pub passed: usize,
    pub failed: usize,
    pub measured_only: usize,
}

impl SuiteReport {
    pub fn any_failed(&self) -> bool {
        self.failed > 0
    }
}

pub struct SuiteRun {
    pub report: SuiteReport,
    /// Milliseconds per check id, kept out of the report so that it stays
    /// byte-identical across runs.
    pub timings: BTreeMap<String, u64>,
}

fn run_one(ctx: &SuiteContext, def: &CheckDef) -> CheckResult {
    let base = |status, measured, note: String| CheckResult {
        check_id: def.id.to_string(),
        statement: def.statement.to_string(),
        status,
        measured,
        expected: Expected::Value(f64::NAN),
        tolerance: 0.0,
        note,
    };
    if let Need::Profile { level, radius } = (def.need)(&ctx.config) {
        let p = match ctx.profile() {
            Ok(p) => p,
            Err(e) => return base(Status::Fail, vec![], format!("profile unavailable: {e}")),
        };
        if level > p.lambda_max() || radius > p.r_max() {
            let want = if level > p.lambda_max() {
                format!("λ = {level}")
            } else {
                format!("r = {radius}")
            };
            return base(
                Status::MeasuredOnly,
                vec![p.lambda_max(), p.r_max()],
                format!(
                    "window too short: needs {want}, profile reaches λ = {:.3} at r = {}; raise r_max",
                    p.lambda_max(),
                    p.r_max()
                ),
            );
        }
    }
    match (def.run)(ctx) {
        Ok(o) => {
            let admitted = o.expected.admits(o.measured[0], o.tolerance);
            let status = if o.measured_only {
                Status::MeasuredOnly
            } else if admitted && o.conditions {
                Status::Pass
            } else {
                Status::Fail
            };
            let mut note = o.note;
            if !admitted && !o.measured_only {
                let msg = "graded value outside expected ± tolerance";
                note = if note.is_empty() { msg.into() } else { format!("{msg}; {note}") };
            }
            CheckResult {
                check_id: def.id.to_string(),
                statement: def.statement.to_string(),
                status,
                measured: o.measured,
                expected: o.expected,
                tolerance: o.tolerance,
                note,
            }
        }
        Err(LabError::WindowTooShort { min, max, reason }) => base(
            Status::MeasuredOnly,
            vec![min, max],
            format!("window too short: {reason}"),
        ),
        Err(e) => base(Status::Fail, vec![], e.to_string()),
    }
}

/// Which registry entries a selector picks: `all` or one exact id.
pub fn select(selector: &str) -> Result<Vec<CheckDef>, LabError> {
    let all = registry();
    if selector == "all" {
        return Ok(all);
    }
    let picked: Vec<CheckDef> = all.into_iter().filter(|d| d.id == selector).collect();
    if picked.is_empty() {
        return Err(LabError::InvalidParameter(format!(
            "unknown check id {selector:?}; run `lab verify all` or see docs/traceability.md"
        )));
    }
    Ok(picked)
}

/// Run the given checks. The profile is solved first (when any check needs
/// it); the checks then run in parallel and the report is sorted by id.
pub fn run_checks(ctx: &SuiteContext, defs: &[CheckDef]) -> SuiteRun {
    if defs.iter().any(|d| (d.need)(&ctx.config) != Need::Nothing) {
        let _ = ctx.profile();
    }
    let mut results: Vec<(CheckResult, u64)> = defs
        .par_iter()
        .map(|d| {
            let t = Instant::now();
            let r = run_one(ctx, d);
            (r, t.elapsed().as_millis() as u64)
        })
        .collect();
    results.sort_by(|a, b| a.0.check_id.cmp(&b.0.check_id));
    let timings = results.iter().map(|(r, ms)| (r.check_id.clone(), *ms)).collect();
    let checks: Vec<CheckResult> = results.into_iter().map(|(r, _)| r).collect();
    let count = |s: Status| checks.iter().filter(|c| c.status == s).count();
    let profile = ctx.profile.get().and_then(|p| p.as_ref().ok()).map(|p| ProfileSummary {
        r_max: p.r_max(),
        lambda_max: p.lambda_max(),
        nodes: p.len(),
        max_drift: p.max_drift(),
    });
    SuiteRun {
        report: SuiteReport {
            config: ctx.config.clone(),
            profile,
            passed: count(Status::Pass),
            failed: count(Status::Fail),
            measured_only: count(Status::MeasuredOnly),
            checks,
        },
        timings,
    }
}

pub fn run_suite(config: SuiteConfig) -> Result<SuiteRun, LabError> {
    config.validate()?;
    let ctx = SuiteContext::new(config);
    Ok(run_checks(&ctx, &registry()))
}

/// Write `report.json` and `timings.json` into `dir`.
pub fn write_report(run: &SuiteRun, dir: &Path) -> Result<(), LabError> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("report.json"))?);
    serde_json::to_writer_pretty(&mut w, &run.report)?;
    let mut t = BufWriter::new(File::create(dir.join("timings.json"))?);
    serde_json::to_writer_pretty(&mut t, &run.timings)?;
    Ok(())
}

pub const GROWTH_HEADER: [&str; 8] = [
    "lambda",
    "area",
    "volume",
    "diameter",
    "R",
    "R_times_lambda",
    "area_doubling",
    "volume_doubling",
];

/// Write the plot tables into `dir` and return the files written. Tables
/// whose inputs are unavailable are skipped and listed with the reason.
pub fn emit_plots(ctx: &SuiteContext, dir: &Path) -> Result<(Vec<PathBuf>, Vec<String>), LabError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut skipped = Vec::new();
    let c = &ctx.config;

    match ctx.profile() {
        Ok(p) => {
            let hi = c.level_range[1].min(p.lambda_max());
            let lo = c.level_range[0].min(0.5 * hi);
            let grid = level_grid(lo, hi, c.level_count, Spacing::Linear)?;
            let path = dir.join("levels.csv");
            write_levels_csv(&p, &grid, BufWriter::new(File::create(&path)?))?;
            written.push(path);

            match growth_tables(&p, &level_grid(1.0, hi, 100, Spacing::Log)?) {
                Ok(rows) => {
                    let path = dir.join("growth.csv");
                    let mut w = csv::Writer::from_path(&path)?;
                    w.write_record(GROWTH_HEADER)?;
                    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
                    for r in rows {
                        w.write_record([
                            r.lambda.to_string(),
                            r.area.to_string(),
                            r.volume.to_string(),
                            r.diameter.to_string(),
                            r.scalar.to_string(),
                            r.scalar_times_lambda.to_string(),
                            opt(r.area_doubling),
                            opt(r.volume_doubling),
                        ])?;
                    }
                    w.flush()?;
                    written.push(path);
                }
                Err(e) => skipped.push(format!("growth.csv: {e}")),
            }
        }
        Err(e) => {
            skipped.push(format!("levels.csv: {e}"));
            skipped.push(format!("growth.csv: {e}"));
        }
    }

    let profiles = ctx.angle_profiles()?;
    let path = dir.join("angles.csv");
    profiles[0].1.write_csv(BufWriter::new(File::create(&path)?))?;
    written.push(path);

    let a0 = c.cylinder_radius;
    let path = dir.join("slices.csv");
    cylinder_slice_evolution(a0, a0 * a0, 201)?.write_csv(BufWriter::new(File::create(&path)?))?;
    written.push(path);

    let path = dir.join("pick.csv");
    ctx.pick_sequence()?.write_csv(BufWriter::new(File::create(&path)?))?;
    written.push(path);

    Ok((written, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_ids_are_unique_and_cover_all_criteria() {
        let defs = registry();
        assert!(defs.len() >= 20);
        let mut ids: Vec<&str> = defs.iter().map(|d| d.id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), defs.len());
        for c in 1..=18 {
            assert!(defs.iter().any(|d| d.criterion == c), "criterion {c}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(SuiteConfig::default().validate().is_ok());
        let bad = SuiteConfig {
            tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SuiteConfig {
            asymptotic_window: [200.0, 50.0],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_round_trips_with_defaults() {
        let cfg: SuiteConfig = serde_json::from_str(r#"{"r_max": 40}"#).unwrap();
        assert_eq!(cfg.r_max, 40.0);
        assert_eq!(cfg.tol, 1e-10);
        assert!(serde_json::from_str::<SuiteConfig>(r#"{"rmax": 40}"#).is_err());
    }

    #[test]
    fn unknown_selector_is_rejected() {
        assert!(select("nope").is_err());
        assert_eq!(select("gauss-bonnet-closure").unwrap().len(), 1);
    }

    #[test]
    fn expected_admits() {
        assert!(Expected::Value(1.0).admits(1.05, 0.1));
        assert!(!Expected::Band([0.0, 1.0]).admits(1.2, 0.1));
    }
}
