//! Geometry of the level sets `S_λ = {f = λ}` of the Bryant soliton.
//!
//! `S_λ` is the round sphere `r = r(λ)` of radius `w`. Its normal is `∂r`, so
//! both principal curvatures equal `w'/w`, and with `K_M(e₁, e₂) = (1 - w'²)/w²`:
//!
//! ```text
//! A_λ = 4π w²             ∫ det II = 4π w'²         ∫ K_M = 4π(1 - w'²)
//! H   = 2w'/w             ∫ 1/|∇f| = 4π w²/f'       dr/dλ = 1/f'
//! ```

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bryant::SolitonProfile;
use crate::error::LabError;
use crate::geodesic::{warped_geodesic, GeodesicOptions, WarpedPoint};

const FOUR_PI: f64 = 4.0 * PI;

/// Smallest level accepted by the finite-difference checks; below it `f' → 0`
/// and both sides of the coarea identities blow up like `λ^{-1/2}`.
pub const FD_LAMBDA_FLOOR: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSetRecord {
    pub lambda: f64,
    pub r: f64,
    pub area: f64,
    /// `π w`, the inner diameter of the round level sphere.
    pub diameter_inner: f64,
    pub grad_norm: f64,
    pub mean_curvature: f64,
    #[serde(rename = "detII_integral")]
    pub detii_integral: f64,
    pub km_integral: f64,
    #[serde(rename = "induced_K_integral")]
    pub induced_k_integral: f64,
    /// Scalar curvature on the level.
    #[serde(rename = "R")]
    pub scalar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeRecord {
    pub lambda: f64,
    pub volume: f64,
    pub coarea_flux: f64,
}

fn check_level(profile: &SolitonProfile, lambda: f64) -> Result<(), LabError> {
    if !(lambda > 0.0 && lambda <= profile.lambda_max()) {
        return Err(LabError::Range {
            what: "level λ",
            value: lambda,
            min: 0.0,
            max: profile.lambda_max(),
        });
    }
    Ok(())
}

pub fn record(profile: &SolitonProfile, lambda: f64) -> Result<LevelSetRecord, LabError> {
    check_level(profile, lambda)?;
    let r = profile.invert_potential(lambda)?;
    let st = profile.state_at(r)?;
    let (w, wp, q) = (st.w, st.wp, st.q);
    let area = FOUR_PI * w * w;
    let detii = FOUR_PI * wp * wp;
    let km = FOUR_PI * q * (2.0 - q);
    // intrinsic Gauss curvature 1/w² of the round sphere times its area
    let induced = (1.0 / (w * w)) * area;
    let rec = LevelSetRecord {
        lambda,
        r,
        area,
        diameter_inner: PI * w,
        grad_norm: st.fp,
        mean_curvature: 2.0 * wp / w,
        detii_integral: detii,
        km_integral: km,
        induced_k_integral: induced,
        scalar: st.scalar_curvature(),
    };
    let fail = |what: &str| {
        Err(LabError::Invariant {
            what: format!("level {lambda}: {what}"),
            r,
        })
    };
    if (km + detii - induced).abs() > 1e-10 * FOUR_PI {
        return fail("Gauss equation closure");
    }
    if !(detii > 0.0 && detii <= FOUR_PI) {
        return fail("∫det II outside (0, 4π]");
    }
    if !(0.0..FOUR_PI).contains(&km) {
        return fail("∫K_M outside [0, 4π)");
    }
    if !(st.fp >= 0.0 && st.fp < 1.0) {
        return fail("|∇f| outside [0, 1)");
    }
    Ok(rec)
}

pub fn volume_record(profile: &SolitonProfile, lambda: f64) -> Result<VolumeRecord, LabError> {
    check_level(profile, lambda)?;
    let r = profile.invert_potential(lambda)?;
    let st = profile.state_at(r)?;
    Ok(VolumeRecord {
        lambda,
        volume: profile.volume_to(r)?,
        coarea_flux: FOUR_PI * st.w * st.w / st.fp,
    })
}

/// Distance in the soliton between antipodal points of `S_λ`.
pub fn ambient_diameter(profile: &Arc<SolitonProfile>, lambda: f64) -> Result<f64, LabError> {
    let r = profile.invert_potential(lambda)?;
    let metric = profile.metric();
    Ok(warped_geodesic(
        &metric,
        WarpedPoint::spherical(r, 0.0, 0.0),
        WarpedPoint::spherical(r, PI, 0.0),
        GeodesicOptions::with_tol(1e-8),
    )?
    .length)
}

/// Finite-difference step for level `λ`.
pub fn default_step(lambda: f64) -> f64 {
    1e-3 * lambda
}

fn check_stencil(profile: &SolitonProfile, lambda: f64, h: f64) -> Result<(), LabError> {
    if !(h > 0.0 && h < 0.5 * lambda) {
        return Err(LabError::InvalidParameter(format!(
            "step h = {h} must lie in (0, λ/2) at λ = {lambda}"
        )));
    }
    if lambda < FD_LAMBDA_FLOOR {
        return Err(LabError::Range {
            what: "level λ for finite-difference checks",
            value: lambda,
            min: FD_LAMBDA_FLOOR,
            max: profile.lambda_max(),
        });
    }
    check_level(profile, lambda + h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AreaOdeCheck {
    pub lambda: f64,
    pub h: f64,
    /// Centered difference of `A_λ`.
    pub lhs: f64,
    /// `∫ H/|∇f| da = 8π w w'/f'`.
    pub rhs: f64,
    pub km_integral: f64,
}

impl AreaOdeCheck {
    pub fn rel_error(&self) -> f64 {
        ((self.lhs - self.rhs) / self.rhs).abs()
    }
}

pub fn area_ode_check(profile: &SolitonProfile, lambda: f64, h: f64) -> Result<AreaOdeCheck, LabError> {
    check_stencil(profile, lambda, h)?;
    let area = |l: f64| -> Result<f64, LabError> {
        let w = profile.state_at(profile.invert_potential(l)?)?.w;
        Ok(FOUR_PI * w * w)
    };
    let lhs = (area(lambda + h)? - area(lambda - h)?) / (2.0 * h);
    let rec = record(profile, lambda)?;
    let st = profile.state_at(rec.r)?;
    Ok(AreaOdeCheck {
        lambda,
        h,
        lhs,
        rhs: rec.area * rec.mean_curvature / rec.grad_norm,
        km_integral: FOUR_PI * st.q * (2.0 - st.q),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoareaCheck {
    pub lambda: f64,
    pub h: f64,
    /// Centered difference of `∫ 1/|∇f|`.
    pub lhs: f64,
    /// `2 ∫ K_M/|∇f|³ = 8π(1 - w'²)/f'³`.
    pub rhs: f64,
    pub km_integral: f64,
    /// `1 - f'³`, taken at the lower stencil point `λ - h`.
    pub delta: f64,
}

impl CoareaCheck {
    pub fn rel_error(&self) -> f64 {
        ((self.lhs - self.rhs) / self.rhs).abs()
    }

    /// `2∫K_M < lhs ≤ 2∫K_M/(1 - δ)`.
    pub fn sandwich_holds(&self) -> bool {
        2.0 * self.km_integral < self.lhs && self.lhs <= 2.0 * self.km_integral / (1.0 - self.delta)
    }
}

pub fn coarea_second_derivative_check(
    profile: &SolitonProfile,
    lambda: f64,
    h: f64,
) -> Result<CoareaCheck, LabError> {
    check_stencil(profile, lambda, h)?;
    let flux = |l: f64| -> Result<f64, LabError> { Ok(volume_record(profile, l)?.coarea_flux) };
    let lhs = (flux(lambda + h)? - flux(lambda - h)?) / (2.0 * h);
    let st = profile.state_at(profile.invert_potential(lambda)?)?;
    let km = FOUR_PI * st.q * (2.0 - st.q);
    let fp_lo = profile.state_at(profile.invert_potential(lambda - h)?)?.fp;
    Ok(CoareaCheck {
        lambda,
        h,
        lhs,
        rhs: 2.0 * km / st.fp.powi(3),
        km_integral: km,
        delta: 1.0 - fp_lo.powi(3),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityScan {
    pub levels: usize,
    /// Largest `detII[i+1] - detII[i]`; negative when strictly decreasing.
    pub worst_detii_increase: f64,
    /// Largest `km[i] - km[i+1]`; negative when strictly increasing.
    pub worst_km_decrease: f64,
    /// Largest `R[i+1] - R[i]`; negative when strictly decreasing.
    pub worst_scalar_increase: f64,
    pub violations: usize,
    pub detii_first: f64,
    pub detii_last: f64,
    pub km_first: f64,
    pub km_last: f64,
    /// First grid level where `∫K_M` exceeds `2π`, if any.
    pub km_half_level: Option<f64>,
}

pub fn detii_monotonicity_scan(
    profile: &SolitonProfile,
    grid: &[f64],
) -> Result<MonotonicityScan, LabError> {
    if grid.len() < 2 || grid.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(LabError::InvalidParameter("level grid must be strictly increasing".into()));
    }
    let recs = records(profile, grid)?;
    let mut scan = MonotonicityScan {
        levels: recs.len(),
        worst_detii_increase: f64::NEG_INFINITY,
        worst_km_decrease: f64::NEG_INFINITY,
        worst_scalar_increase: f64::NEG_INFINITY,
        violations: 0,
        detii_first: recs[0].detii_integral,
        detii_last: recs[recs.len() - 1].detii_integral,
        km_first: recs[0].km_integral,
        km_last: recs[recs.len() - 1].km_integral,
        km_half_level: recs
            .iter()
            .find(|r| r.km_integral > 0.5 * FOUR_PI)
            .map(|r| r.lambda),
    };
    for p in recs.windows(2) {
        let d = p[1].detii_integral - p[0].detii_integral;
        let k = p[0].km_integral - p[1].km_integral;
        let s = p[1].scalar - p[0].scalar;
        scan.worst_detii_increase = scan.worst_detii_increase.max(d);
        scan.worst_km_decrease = scan.worst_km_decrease.max(k);
        scan.worst_scalar_increase = scan.worst_scalar_increase.max(s);
        scan.violations += usize::from(d >= 0.0) + usize::from(k >= 0.0) + usize::from(s >= 0.0);
    }
    Ok(scan)
}

/// The level where `∫K_M` crosses `target`, by bisection on the increasing
/// map `λ ↦ ∫K_M`. `None` when the crossing is outside `(0, λ_max]`.
pub fn km_crossing(profile: &SolitonProfile, target: f64) -> Result<Option<f64>, LabError> {
    let km = |l: f64| record(profile, l).map(|r| r.km_integral);
    let (mut lo, mut hi) = (1e-9, profile.lambda_max());
    if km(lo)? >= target || km(hi)? < target {
        return Ok(None);
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if km(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Records over a grid, evaluated in parallel.
pub fn records(profile: &SolitonProfile, grid: &[f64]) -> Result<Vec<LevelSetRecord>, LabError> {
    grid.par_iter().map(|&l| record(profile, l)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthRow {
    pub lambda: f64,
    pub area: f64,
    pub volume: f64,
    pub diameter: f64,
    #[serde(rename = "R")]
    pub scalar: f64,
    #[serde(rename = "R_times_lambda")]
    pub scalar_times_lambda: f64,
    /// `A_{2λ}/A_λ`, when `2λ` is reachable.
    pub area_doubling: Option<f64>,
    /// `V_{2λ}/V_λ`, when `2λ` is reachable.
    pub volume_doubling: Option<f64>,
}

pub fn growth_tables(profile: &SolitonProfile, grid: &[f64]) -> Result<Vec<GrowthRow>, LabError> {
    if profile.lambda_max() < 50.0 {
        return Err(LabError::WindowTooShort {
            min: 50.0,
            max: profile.lambda_max(),
            reason: "growth tables need levels up to at least λ = 50; raise r_max".into(),
        });
    }
    grid.par_iter()
        .map(|&l| {
            let rec = record(profile, l)?;
            let vol = volume_record(profile, l)?.volume;
            let (ad, vd) = if 2.0 * l <= profile.lambda_max() {
                let r2 = record(profile, 2.0 * l)?;
                let v2 = volume_record(profile, 2.0 * l)?.volume;
                (Some(r2.area / rec.area), Some(v2 / vol))
            } else {
                (None, None)
            };
            Ok(GrowthRow {
                lambda: l,
                area: rec.area,
                volume: vol,
                diameter: rec.diameter_inner,
                scalar: rec.scalar,
                scalar_times_lambda: rec.scalar * l,
                area_doubling: ad,
                volume_doubling: vd,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiameterDrop {
    pub a: f64,
    pub b: f64,
    pub d_a: f64,
    pub d_b: f64,
    /// `max_{x ∈ S_b} d(x, S_{b-1}) = r(b) - r(b-1)`.
    pub beta_b: f64,
    /// `D_a - 2β_b(a - b)`.
    pub lower_bound: f64,
    pub slack: f64,
}

pub fn diameter_drop_bound(profile: &SolitonProfile, a: f64, b: f64) -> Result<DiameterDrop, LabError> {
    if !(b > 1.0 && a >= b) {
        return Err(LabError::InvalidParameter(format!(
            "need a ≥ b > 1, got a = {a}, b = {b}"
        )));
    }
    let ra = record(profile, a)?;
    let rb = record(profile, b)?;
    let beta = rb.r - profile.invert_potential(b - 1.0)?;
    let lower = ra.diameter_inner - 2.0 * beta * (a - b);
    Ok(DiameterDrop {
        a,
        b,
        d_a: ra.diameter_inner,
        d_b: rb.diameter_inner,
        beta_b: beta,
        lower_bound: lower,
        slack: rb.diameter_inner - lower,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

impl std::str::FromStr for Spacing {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self, LabError> {
        match s {
            "linear" => Ok(Self::Linear),
            "log" => Ok(Self::Log),
            other => Err(LabError::InvalidParameter(format!("unknown spacing '{other}'"))),
        }
    }
}

pub fn level_grid(min: f64, max: f64, count: usize, spacing: Spacing) -> Result<Vec<f64>, LabError> {
    if !(min > 0.0 && max > min) || count < 2 {
        return Err(LabError::InvalidParameter(format!(
            "need 0 < min < max and count ≥ 2, got {min}, {max}, {count}"
        )));
    }
    let n = (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            let t = i as f64 / n;
            match spacing {
                Spacing::Linear => min + (max - min) * t,
                Spacing::Log => min * (max / min).powf(t),
            }
        })
        .collect())
}

pub const LEVELS_HEADER: [&str; 10] = [
    "lambda",
    "r",
    "area",
    "diameter",
    "grad_norm",
    "detII_int",
    "km_int",
    "volume",
    "R",
    "R_times_lambda",
];

pub fn write_levels_csv<W: Write>(profile: &SolitonProfile, grid: &[f64], out: W) -> Result<(), LabError> {
    let recs = records(profile, grid)?;
    let vols: Vec<VolumeRecord> = grid
        .par_iter()
        .map(|&l| volume_record(profile, l))
        .collect::<Result<_, _>>()?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LEVELS_HEADER)?;
    for (r, v) in recs.iter().zip(&vols) {
        w.write_record(
            [
                r.lambda,
                r.r,
                r.area,
                r.diameter_inner,
                r.grad_norm,
                r.detii_integral,
                r.km_integral,
                v.volume,
                r.scalar,
                r.scalar * r.lambda,
            ]
            .map(|x| x.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
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
    fn small_level_limits() {
        let r = record(profile(), 1e-6).unwrap();
        assert_relative_eq!(r.detii_integral, FOUR_PI, max_relative = 1e-5);
        assert!(r.km_integral < 1e-4);
        assert_relative_eq!(r.induced_k_integral, FOUR_PI, max_relative = 1e-14);
    }

    #[test]
    fn level_zero_and_beyond_are_rejected() {
        assert!(record(profile(), 0.0).is_err());
        assert!(record(profile(), profile().lambda_max() * 1.01).is_err());
    }

    #[test]
    fn mean_curvature_times_gradient_is_twice_tangential_ricci() {
        let p = Arc::new(profile().clone());
        for l in [0.5, 3.0, 20.0, 50.0] {
            let rec = record(&p, l).unwrap();
            let (_, k) = p.query(rec.r).unwrap();
            assert_relative_eq!(rec.mean_curvature * rec.grad_norm, 2.0 * k.ric_tan, max_relative = 1e-9);
        }
    }

    #[test]
    fn area_flux_matches_finite_difference() {
        let c = area_ode_check(profile(), 30.0, default_step(30.0)).unwrap();
        assert!(c.rel_error() < 1e-5, "{c:?}");
        assert!(c.rhs > 2.0 * c.km_integral);
    }

    #[test]
    fn coarea_floor_and_sandwich() {
        assert!(coarea_second_derivative_check(profile(), 1e-3, 1e-6).is_err());
        let c = coarea_second_derivative_check(profile(), 30.0, default_step(30.0)).unwrap();
        assert!(c.rel_error() < 1e-4 && c.rhs > 0.0);
        assert!(c.sandwich_holds(), "{c:?}");
    }

    #[test]
    fn flux_matches_volume_derivative() {
        let l = 25.0;
        let h = 1e-2;
        let dv = (volume_record(profile(), l + h).unwrap().volume
            - volume_record(profile(), l - h).unwrap().volume)
            / (2.0 * h);
        assert_relative_eq!(dv, volume_record(profile(), l).unwrap().coarea_flux, max_relative = 1e-6);
    }

    #[test]
    fn area_flux_sandwich() {
        for l in [1.0, 10.0, 40.0] {
            let rec = record(profile(), l).unwrap();
            let flux = volume_record(profile(), l).unwrap().coarea_flux;
            let delta = 1.0 - rec.grad_norm;
            assert!(rec.area < flux && flux <= rec.area / (1.0 - delta) * (1.0 + 1e-14));
        }
    }

    #[test]
    fn diameter_drop_degenerate_case() {
        let d = diameter_drop_bound(profile(), 20.0, 20.0).unwrap();
        assert_eq!(d.slack, 0.0);
        assert!(diameter_drop_bound(profile(), 20.0, 0.5).is_err());
    }

    #[test]
    fn ambient_diameter_is_at_most_inner() {
        let p = Arc::new(profile().clone());
        let rec = record(&p, 10.0).unwrap();
        let amb = ambient_diameter(&p, 10.0).unwrap();
        assert!(amb <= rec.diameter_inner * (1.0 + 1e-9) && amb > 0.5 * rec.diameter_inner);
    }

    #[test]
    fn grids_and_csv() {
        let g = level_grid(1.0, 100.0, 3, Spacing::Log).unwrap();
        assert_relative_eq!(g[1], 10.0, max_relative = 1e-14);
        assert!(level_grid(0.0, 1.0, 3, Spacing::Linear).is_err());
        let mut buf = vec![];
        write_levels_csv(profile(), &[1.0, 2.0], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "lambda,r,area,diameter,grad_norm,detII_int,km_int,volume,R,R_times_lambda"
        );
    }

    #[test]
    fn km_crossing_lands_where_slope_is_one_over_root_two() {
        let p = profile();
        let l = km_crossing(p, 2.0 * PI).unwrap().unwrap();
        let st = p.state_at(p.invert_potential(l).unwrap()).unwrap();
        assert!((st.wp - 0.5f64.sqrt()).abs() < 1e-9, "{}", st.wp);
        assert!(km_crossing(p, 4.0 * PI).unwrap().is_none());
    }
}
