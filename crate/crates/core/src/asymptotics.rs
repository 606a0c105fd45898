//! Asymptotic constants of the Bryant soliton and the angle, sandwich and
//! volume-ratio diagnostics on the explicit models.

use std::f64::consts::PI;
use std::io::Write;
use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::Serialize;

use crate::bryant::SolitonProfile;
use crate::error::LabError;
use crate::geodesic::{product_geodesic, GeodesicOptions, ProductPoint, WarpedPoint};
use crate::levelset::{level_grid, record, volume_record, Spacing};
use crate::models::ModelSpace;
use crate::ode::{self, StepControl};
use crate::warped::{ln_cosh, ProductField};

/// Samples per fitting window.
const WINDOW_SAMPLES: usize = 41;

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `(max - min)/|mean|`.
pub fn relative_spread(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    (hi - lo) / mean.abs()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub quantity: String,
    pub window: [f64; 2],
    /// Log–log slope against λ.
    pub exponent: f64,
    /// `C` in the fit `C λ^exponent`.
    pub prefactor: f64,
    /// Mean over the second half of the window: the running limit estimate.
    pub constant: f64,
    /// Relative spread over the second half of the window.
    pub diagnostic: f64,
    /// Relative spread over the whole window.
    pub spread: f64,
    /// Mean over the last quarter of the window.
    pub refit_constant: f64,
    pub first: f64,
    pub last: f64,
}

impl GrowthReport {
    fn from_samples(quantity: &str, lambdas: &[f64], values: &[f64]) -> Self {
        let lx: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
        let ly: Vec<f64> = values.iter().map(|v| v.abs().ln()).collect();
        let (exponent, icept) = linear_fit(&lx, &ly);
        let half = &values[values.len() / 2..];
        let quarter = &values[3 * values.len() / 4..];
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Self {
            quantity: quantity.to_string(),
            window: [lambdas[0], lambdas[lambdas.len() - 1]],
            exponent,
            prefactor: icept.exp(),
            constant: mean(half),
            diagnostic: relative_spread(half),
            spread: relative_spread(values),
            refit_constant: mean(quarter),
            first: values[0],
            last: values[values.len() - 1],
        }
    }

    /// Refitting on the tail moves the constant by no more than the diagnostic.
    pub fn is_consistent(&self) -> bool {
        self.exponent.is_finite()
            && self.constant.is_finite()
            && self.diagnostic >= 0.0
            && ((self.refit_constant - self.constant) / self.constant).abs() <= self.diagnostic + 1e-15
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticReport {
    pub window: [f64; 2],
    pub reports: Vec<GrowthReport>,
    /// `D_λ/λ` strictly decreasing over the window samples.
    pub diameter_ratio_decreasing: bool,
    /// `C / π²` for `C` the `R·D²` constant.
    pub rd2_over_pi2: f64,
}

impl AsymptoticReport {
    pub fn get(&self, quantity: &str) -> Option<&GrowthReport> {
        self.reports.iter().find(|r| r.quantity == quantity)
    }
}

fn check_window(profile: &SolitonProfile, window: [f64; 2]) -> Result<(), LabError> {
    let [lo, hi] = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(LabError::InvalidParameter(format!("bad window [{lo}, {hi}]")));
    }
    if hi > profile.lambda_max() {
        return Err(LabError::WindowTooShort {
            min: lo,
            max: hi,
            reason: format!(
                "profile reaches only λ = {:.3}; raise r_max",
                profile.lambda_max()
            ),
        });
    }
    if hi < 2.0 * lo {
        return Err(LabError::WindowTooShort {
            min: lo,
            max: hi,
            reason: "window must span at least a factor of 2 for stable fits".into(),
        });
    }
    Ok(())
}

/// Fits of `R·s`, `D/√s`, `D/λ`, `R·D²`, `A/λ`, `V/λ²` and `R` over a window
/// of levels. `s = r` is the distance to the origin and `D = π w`.
pub fn asymptotic_constants(profile: &SolitonProfile, window: [f64; 2]) -> Result<AsymptoticReport, LabError> {
    check_window(profile, window)?;
    let lambdas = level_grid(window[0], window[1], WINDOW_SAMPLES, Spacing::Log)?;
    let rows: Vec<[f64; 7]> = lambdas
        .par_iter()
        .map(|&l| {
            let rec = record(profile, l)?;
            let vol = volume_record(profile, l)?.volume;
            let (s, d, r) = (rec.r, rec.diameter_inner, rec.scalar);
            Ok([r * s, d / s.sqrt(), d / l, r * d * d, rec.area / l, vol / (l * l), r])
        })
        .collect::<Result<_, LabError>>()?;
    let names = ["R*s", "D/sqrt(s)", "D/lambda", "R*D^2", "A/lambda", "V/lambda^2", "R"];
    let reports: Vec<GrowthReport> = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let v: Vec<f64> = rows.iter().map(|row| row[k]).collect();
            GrowthReport::from_samples(name, &lambdas, &v)
        })
        .collect();
    let decreasing = rows.windows(2).all(|p| p[1][2] < p[0][2]);
    let rd2 = reports[3].constant;
    Ok(AsymptoticReport {
        window,
        reports,
        diameter_ratio_decreasing: decreasing,
        rd2_over_pi2: rd2 / (PI * PI),
    })
}

/// Extrapolate `y(λ)` to `λ = ∞` from samples at `λ, λ/2, λ/4`, treating `y`
/// as a polynomial in `1/λ`. Returns the linear and quadratic estimates.
pub fn richardson_inverse(y1: f64, y2: f64, y4: f64) -> (f64, f64) {
    (2.0 * y1 - y2, (8.0 * y1 - 6.0 * y2 + y4) / 3.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveLimitRecord {
    pub curve: String,
    pub zeta: f64,
    pub r_limit: f64,
    /// `ζ² + R_Γ - R(O)`.
    pub closure: f64,
    /// Gap between the linear and quadratic extrapolations (largest of ζ, R).
    pub spread: f64,
    pub gradient_nondecreasing: bool,
    /// Last sampled values, before extrapolation.
    pub zeta_last: f64,
    pub r_last: f64,
}

/// Tolerance on the extrapolation spread before reporting slow convergence.
pub const CURVE_LIMIT_TOL: f64 = 5e-3;

fn limit_record(
    curve: String,
    samples: [(f64, f64); 3],
    r_origin: f64,
    nondecreasing: bool,
) -> Result<CurveLimitRecord, LabError> {
    let [(z1, r1), (z2, r2), (z4, r4)] = samples;
    let (zl, zq) = richardson_inverse(z1, z2, z4);
    let (rl, rq) = richardson_inverse(r1, r2, r4);
    let zeta = zq.min(r_origin.sqrt());
    let r_limit = rq.max(0.0);
    let spread = (zl - zq).abs().max((rl - rq).abs());
    if spread > CURVE_LIMIT_TOL {
        return Err(LabError::SlowConvergence {
            what: format!("{curve} limits"),
            lo: zl.min(zq),
            hi: zl.max(zq),
        });
    }
    Ok(CurveLimitRecord {
        curve,
        zeta,
        r_limit,
        closure: zeta * zeta + r_limit - r_origin,
        spread,
        gradient_nondecreasing: nondecreasing,
        zeta_last: z1,
        r_last: r1,
    })
}

/// Limits along the radial integral curve of the Bryant soliton.
pub fn bryant_curve_limits(profile: &SolitonProfile) -> Result<CurveLimitRecord, LabError> {
    let lmax = profile.lambda_max();
    let at = |l: f64| -> Result<(f64, f64), LabError> {
        let st = profile.state_at(profile.invert_potential(l)?)?;
        Ok((st.fp, st.scalar_curvature()))
    };
    let grid = level_grid(1.0, lmax, 200, Spacing::Log)?;
    let mut nondecreasing = true;
    let mut prev = 0.0;
    for &l in &grid {
        let z = at(l)?.0;
        nondecreasing &= z >= prev;
        prev = z;
    }
    limit_record(
        "bryant-radial".into(),
        [at(lmax)?, at(lmax / 2.0)?, at(lmax / 4.0)?],
        profile.r_origin(),
        nondecreasing,
    )
}

/// Limits along the integral curve of `∇f/|∇f|²` on the cigar line starting
/// at `(s₀, σ₀)`, followed for `span` units of `f`.
pub fn cigar_line_curve_limits(
    model: &ModelSpace,
    start: (f64, f64),
    span: f64,
) -> Result<CurveLimitRecord, LabError> {
    let f = model.product_potential().ok_or_else(|| {
        LabError::InvalidParameter("curve limits need a product model".into())
    })?;
    let metric = model.product_metric().expect("product model");
    if !matches!(model, ModelSpace::CigarLine { slope, .. } if *slope > 0.0) {
        return Err(LabError::InvalidParameter("cigar line needs a positive slope".into()));
    }
    let (s0, x0) = start;
    let l0 = f.value(s0, x0);
    let rhs = |_l: f64, y: &[f64; 2]| {
        let (gs, gx) = f.gradient(y[0], y[1].max(0.0));
        let n2 = gs * gs + gx * gx;
        [gs / n2, gx / n2]
    };
    let ctl = StepControl::new(1e-11, 1e-13);
    let targets = [l0 + span / 4.0, l0 + span / 2.0, l0 + span];
    let mut states = Vec::with_capacity(3);
    let mut y = [s0, x0];
    let mut l = l0;
    let mut nondecreasing = true;
    let mut prev = 0.0;
    for &t in &targets {
        ode::integrate(&rhs, l, y, t, 1e-3, &ctl, |_, yy, _| {
            let (gs, gx) = f.gradient(yy[0], yy[1].max(0.0));
            let g = gs.hypot(gx);
            nondecreasing &= g >= prev * (1.0 - 1e-12);
            prev = g;
            y = *yy;
            ControlFlow::Continue(())
        })?;
        l = t;
        let (gs, gx) = f.gradient(y[0], y[1].max(0.0));
        let scalar = metric.curvature_at(y[1].max(0.0))?.scalar;
        states.push((gs.hypot(gx), scalar));
    }
    limit_record(
        format!("cigar-line from (s={s0}, sigma={x0})"),
        [states[2], states[1], states[0]],
        1.0,
        nondecreasing,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub delta: f64,
    /// Largest `f/s` over all samples; must stay below 1.
    pub worst_upper: f64,
    /// Smallest sampled `s` beyond which `f/s ≥ 1 - δ` at every later sample.
    pub s_bar: Option<f64>,
    pub ratio_at_end: f64,
    pub s_end: f64,
}

/// `f/s` along the radial direction of the Bryant soliton, where `s = r`.
pub fn bryant_sandwich(profile: &SolitonProfile, delta: f64) -> Result<SandwichReport, LabError> {
    let radii: Vec<f64> = (1..=400)
        .map(|i| profile.r_max() * i as f64 / 400.0)
        .collect();
    let ratios: Vec<f64> = radii
        .iter()
        .map(|&r| Ok(profile.state_at(r)?.f / r))
        .collect::<Result<_, LabError>>()?;
    let worst_upper = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s_bar = None;
    for (i, &r) in radii.iter().enumerate().rev() {
        if ratios[i] >= 1.0 - delta {
            s_bar = Some(r);
        } else {
            break;
        }
    }
    Ok(SandwichReport {
        delta,
        worst_upper,
        s_bar,
        ratio_at_end: *ratios.last().expect("samples"),
        s_end: *radii.last().expect("samples"),
    })
}

/// `f(p) - f(O)` against `d(p, O)` on a product model with origin at
/// `(0, tip)`: returns the largest ratio over a grid and the ratio along the
/// `s`-axis at `s = s_axis`.
pub fn product_sandwich(model: &ModelSpace, s_axis: f64) -> Result<(f64, f64), LabError> {
    let f = model.product_potential().ok_or_else(|| {
        LabError::InvalidParameter("product sandwich needs a product model".into())
    })?;
    let mut worst: f64 = f64::NEG_INFINITY;
    for i in 0..60 {
        for j in 0..60 {
            let s = -50.0 + 100.0 * i as f64 / 59.0;
            let x = 50.0 * j as f64 / 59.0;
            let d = s.hypot(x);
            if d > 1e-9 {
                worst = worst.max((f.value(s, x) - f.value(0.0, 0.0)) / d);
            }
        }
    }
    Ok((worst, (f.value(s_axis, 0.0) - f.value(0.0, 0.0)) / s_axis))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AngleSample {
    pub sigma: f64,
    pub s: f64,
    pub cos_theta: f64,
    /// `|∇f(q)| cos θ`
    pub lhs: f64,
    /// `(f(q) - f(base))/length`
    pub rhs: f64,
}

impl AngleSample {
    pub fn holds(&self) -> bool {
        self.lhs >= self.rhs * (1.0 - 1e-12) - 1e-14
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngleProfile {
    pub level: f64,
    pub base_s: f64,
    pub samples: Vec<AngleSample>,
    pub min_cos: f64,
    pub holds_everywhere: bool,
}

impl AngleProfile {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), LabError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sigma", "cos_theta"])?;
        for s in &self.samples {
            w.write_record([s.sigma.to_string(), s.cos_theta.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Angle between `∇f` and the arriving minimizing geodesic from the base
/// point `(base_s, tip)` at one target `(s, σ)` of a product model.
pub fn product_angle(model: &ModelSpace, base_s: f64, s: f64, sigma: f64) -> Result<AngleSample, LabError> {
    let f = model.product_potential().ok_or_else(|| {
        LabError::InvalidParameter("angle check needs a product model".into())
    })?;
    let metric = model.product_metric().expect("product model");
    let g = product_geodesic(
        &metric,
        ProductPoint {
            s: base_s,
            fiber: WarpedPoint::polar(0.0, 0.0),
        },
        ProductPoint {
            s,
            fiber: WarpedPoint::polar(sigma, 0.0),
        },
        GeodesicOptions::default(),
    )?;
    let (gs, gx) = f.gradient(s, sigma);
    let norm = gs.hypot(gx);
    let t = g.end_tangent;
    let cos = (gs * t.line + gx * t.radial) / norm;
    Ok(AngleSample {
        sigma,
        s,
        cos_theta: cos,
        lhs: norm * cos,
        rhs: (f.value(s, sigma) - f.value(base_s, 0.0)) / g.length,
    })
}

/// The angle profile along the level `{f = λ}` of the cigar line, seen from
/// `(-L, tip)`, for targets in front of the base (`s ≥ -L`).
pub fn cigar_line_angle_profile(
    model: &ModelSpace,
    base_distance: f64,
    level: f64,
    samples: usize,
) -> Result<AngleProfile, LabError> {
    let ModelSpace::CigarLine { scale: a, slope: c2 } = *model else {
        return Err(LabError::InvalidParameter("angle profile needs a cigar-line model".into()));
    };
    if !(c2 > 0.0) || samples < 2 {
        return Err(LabError::InvalidParameter("need a positive slope and ≥ 2 samples".into()));
    }
    let base_s = -base_distance;
    let fbar = |x: f64| 2.0 * ln_cosh(a * x);
    // largest σ with s(σ) ≥ base_s, by bisection on the increasing f̄
    let budget = level - c2 * base_s;
    let (mut lo, mut hi) = (0.0, budget / a + 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if fbar(mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sigma_end = lo;
    let out: Vec<AngleSample> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let x = sigma_end * i as f64 / (samples - 1) as f64;
            let s = (level - fbar(x)) / c2;
            product_angle(model, base_s, s, x)
        })
        .collect::<Result<_, _>>()?;
    let min_cos = out.iter().map(|s| s.cos_theta).fold(f64::INFINITY, f64::min);
    let holds = out.iter().all(AngleSample::holds);
    Ok(AngleProfile {
        level,
        base_s,
        samples: out,
        min_cos,
        holds_everywhere: holds,
    })
}

/// Bryant: base at the origin, targets on `S_λ`. Geodesics are radial, so
/// the arrival direction is `N` itself.
pub fn bryant_angle(profile: &SolitonProfile, level: f64) -> Result<AngleSample, LabError> {
    let r = profile.invert_potential(level)?;
    let st = profile.state_at(r)?;
    Ok(AngleSample {
        sigma: r,
        s: r,
        cos_theta: 1.0,
        lhs: st.fp,
        rhs: st.f / r,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BishopGromovScan {
    pub radii: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Largest `ratio[i+1] - ratio[i]`.
    pub worst_increase: f64,
    pub alpha_at_max: f64,
    /// Log–log slope of the ratio over the second half of the radii.
    pub alpha_decay_exponent: f64,
}

impl BishopGromovScan {
    pub fn non_increasing(&self) -> bool {
        self.worst_increase <= 0.0
    }
}

/// `vol B(O, r)/(ω₃ r³)` with `ω₃ = 4π/3`.
pub fn bishop_gromov_scan(profile: &SolitonProfile, radii: &[f64]) -> Result<BishopGromovScan, LabError> {
    if radii.len() < 4 || radii.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(LabError::InvalidParameter("need at least 4 increasing radii".into()));
    }
    let omega3 = 4.0 * PI / 3.0;
    let ratios: Vec<f64> = radii
        .iter()
        .map(|&r| Ok(profile.volume_to(r)? / (omega3 * r.powi(3))))
        .collect::<Result<_, LabError>>()?;
    let worst = ratios
        .windows(2)
        .map(|p| p[1] - p[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let h = radii.len() / 2;
    let lx: Vec<f64> = radii[h..].iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = ratios[h..].iter().map(|v| v.ln()).collect();
    Ok(BishopGromovScan {
        radii: radii.to_vec(),
        alpha_at_max: *ratios.last().expect("radii"),
        ratios,
        worst_increase: worst,
        alpha_decay_exponent: linear_fit(&lx, &ly).0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bryant::{integrate, seed};
    use approx::assert_relative_eq;
    use std::sync::OnceLock;

    fn profile() -> &'static SolitonProfile {
        static P: OnceLock<SolitonProfile> = OnceLock::new();
        P.get_or_init(|| integrate(&seed(1e-4).unwrap(), 60.0, 1e-10).unwrap())
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = x.map(|v| 3.0 * v - 1.0);
        let (m, b) = linear_fit(&x, &y);
        assert_relative_eq!(m, 3.0);
        assert_relative_eq!(b, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn richardson_is_exact_on_quadratics() {
        let y = |x: f64| 2.0 + 3.0 * x - 5.0 * x * x;
        let (lin, quad) = richardson_inverse(y(0.01), y(0.02), y(0.04));
        assert_relative_eq!(quad, 2.0, max_relative = 1e-13);
        assert!((lin - 2.0).abs() > 1e-5);
    }

    #[test]
    fn window_guards() {
        let p = profile();
        assert!(matches!(
            asymptotic_constants(p, [50.0, 500.0]),
            Err(LabError::WindowTooShort { .. })
        ));
        assert!(matches!(
            asymptotic_constants(p, [20.0, 30.0]),
            Err(LabError::WindowTooShort { .. })
        ));
    }

    #[test]
    fn reports_are_self_consistent() {
        let rep = asymptotic_constants(profile(), [20.0, 55.0]).unwrap();
        assert_eq!(rep.reports.len(), 7);
        assert!(rep.reports.iter().all(GrowthReport::is_consistent));
        assert!(rep.diameter_ratio_decreasing);
    }

    #[test]
    fn cigar_line_axis_curve_is_exact() {
        let m = ModelSpace::cigar_line_from_rhat(0.5).unwrap();
        let c = cigar_line_curve_limits(&m, (0.0, 0.0), 100.0).unwrap();
        assert_relative_eq!(c.zeta, 0.5f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(c.r_limit, 0.5, max_relative = 1e-12);
        assert!(c.closure.abs() < 1e-12);
    }

    #[test]
    fn cigar_line_off_axis_curve_escapes() {
        let m = ModelSpace::cigar_line_from_rhat(0.5).unwrap();
        let c = cigar_line_curve_limits(&m, (0.0, 8.0), 200.0).unwrap();
        assert!(c.zeta > 0.999 && c.r_limit < 1e-3, "{c:?}");
        assert!(c.gradient_nondecreasing);
    }

    #[test]
    fn angle_matches_closed_form_on_axis() {
        let m = ModelSpace::cigar_line_from_rhat(0.5).unwrap();
        let c2 = 0.5f64.sqrt();
        let a = product_angle(&m, -100.0, 20.0 / c2, 0.0).unwrap();
        assert_relative_eq!(a.cos_theta, 1.0, max_relative = 1e-12);
        assert!(a.holds());
        // off axis: cos θ = (c₂Δs + f̄'σ)/(len |∇f|)
        let (s, x) = (3.0, 5.0);
        let aa = 0.5f64.sqrt() / 2.0;
        let fp = 2.0 * aa * (aa * x).tanh();
        let len = (s + 100.0f64).hypot(x);
        let exact = (c2 * (s + 100.0) + fp * x) / (len * c2.hypot(fp));
        let got = product_angle(&m, -100.0, s, x).unwrap().cos_theta;
        assert_relative_eq!(got, exact, max_relative = 1e-12);
    }

    #[test]
    fn bishop_gromov_near_pole_is_euclidean() {
        let s = bishop_gromov_scan(profile(), &[1e-3, 2e-3, 3e-3, 4e-3]).unwrap();
        assert_relative_eq!(s.ratios[0], 1.0, max_relative = 1e-6);
        assert!(s.non_increasing());
    }
}
