//! Rotationally symmetric metrics `dr² + w(r)² g_{S^{n-1}}` (n = 2, 3), their
//! products with a line, and the curvature of both.
//!
//! Curvature comes from the closed warped-product formulas
//!
//! ```text
//! K_rad = -w''/w            (planes containing ∂r)
//! K_sph = (1 - w'²)/w²      (planes tangent to the orbit sphere, n = 3)
//! ```
//!
//! The derivation is written out in `docs/curvature.md`. In dimension 2 there
//! is a single sectional curvature, the Gauss curvature `-w''/w`; it is stored
//! in `k_sph` and `k_rad` is left empty.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::LabError;

/// Value and first two derivatives of a warp function at one radius, plus
/// `1 - w'²` computed without cancellation near the pole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpJet {
    pub w: f64,
    pub dw: f64,
    pub d2w: f64,
    pub one_minus_dw2: f64,
}

/// A warp function `w(r)` with a smooth pole at `r = 0`.
pub trait Warp: Send + Sync + fmt::Debug {
    fn jet(&self, r: f64) -> WarpJet;
    /// Sectional curvature at the pole, where every formula above is 0/0.
    fn pole_curvature(&self) -> f64;
    /// Largest admissible radius (inclusive). `f64::INFINITY` for complete ends.
    fn domain_max(&self) -> f64;
}

/// Potential depending on the radial coordinate only.
pub trait RadialPotential: Send + Sync + fmt::Debug {
    /// `(f, f', f'')` at radius `r`.
    fn jet(&self, r: f64) -> (f64, f64, f64);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dim {
    Two,
    Three,
}

/// `w(r) = r`: flat space in polar form.
#[derive(Debug, Clone, Copy)]
pub struct EuclideanWarp;

impl Warp for EuclideanWarp {
    fn jet(&self, r: f64) -> WarpJet {
        WarpJet {
            w: r,
            dw: 1.0,
            d2w: 0.0,
            one_minus_dw2: 0.0,
        }
    }
    fn pole_curvature(&self) -> f64 {
        0.0
    }
    fn domain_max(&self) -> f64 {
        f64::INFINITY
    }
}

/// `w(σ) = tanh(aσ)/a`: the cigar `dσ² + a⁻² tanh²(aσ) dθ²`.
#[derive(Debug, Clone, Copy)]
pub struct CigarWarp {
    pub scale: f64,
}

pub(crate) fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

/// `ln cosh x` without overflow for large `|x|`.
pub(crate) fn ln_cosh(x: f64) -> f64 {
    let ax = x.abs();
    ax + (-2.0 * ax).exp().ln_1p() - std::f64::consts::LN_2
}

impl Warp for CigarWarp {
    fn jet(&self, r: f64) -> WarpJet {
        let a = self.scale;
        let t = (a * r).tanh();
        let s2 = sech(a * r).powi(2);
        WarpJet {
            w: t / a,
            dw: s2,
            d2w: -2.0 * a * s2 * t,
            one_minus_dw2: t * t * (1.0 + s2),
        }
    }
    fn pole_curvature(&self) -> f64 {
        2.0 * self.scale * self.scale
    }
    fn domain_max(&self) -> f64 {
        f64::INFINITY
    }
}

/// `w(σ) = a sin(σ/a)`: the round sphere of radius `a`.
#[derive(Debug, Clone, Copy)]
pub struct SphereWarp {
    pub radius: f64,
}

impl Warp for SphereWarp {
    fn jet(&self, r: f64) -> WarpJet {
        let a = self.radius;
        let (s, c) = (r / a).sin_cos();
        WarpJet {
            w: a * s,
            dw: c,
            d2w: -s / a,
            one_minus_dw2: s * s,
        }
    }
    fn pole_curvature(&self) -> f64 {
        1.0 / (self.radius * self.radius)
    }
    fn domain_max(&self) -> f64 {
        std::f64::consts::PI * self.radius
    }
}

/// `f = 2 ln cosh(aσ)`, the cigar's Ricci potential.
#[derive(Debug, Clone, Copy)]
pub struct LogCoshPotential {
    pub scale: f64,
}

impl RadialPotential for LogCoshPotential {
    fn jet(&self, r: f64) -> (f64, f64, f64) {
        let a = self.scale;
        (
            2.0 * ln_cosh(a * r),
            2.0 * a * (a * r).tanh(),
            2.0 * a * a * sech(a * r).powi(2),
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroPotential;

impl RadialPotential for ZeroPotential {
    fn jet(&self, _r: f64) -> (f64, f64, f64) {
        (0.0, 0.0, 0.0)
    }
}

/// Pointwise curvature of a warped or product metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub r: f64,
    #[serde(rename = "K_rad", skip_serializing_if = "Option::is_none", default)]
    pub k_rad: Option<f64>,
    #[serde(rename = "K_sph")]
    pub k_sph: f64,
    #[serde(rename = "Ric_rad")]
    pub ric_rad: f64,
    #[serde(rename = "Ric_tan")]
    pub ric_tan: f64,
    #[serde(rename = "R")]
    pub scalar: f64,
    /// Sectional curvature of any plane containing the line factor.
    #[serde(rename = "K_line", skip_serializing_if = "Option::is_none", default)]
    pub k_line: Option<f64>,
    #[serde(rename = "Ric_line", skip_serializing_if = "Option::is_none", default)]
    pub ric_line: Option<f64>,
}

/// Soliton-equation residual `∇∇f - Ric`, split by direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonResidual {
    pub radial: f64,
    pub tangential: f64,
    /// Largest line-factor component (`ss` and `sσ`); zero for warped metrics.
    pub line: f64,
}

impl SolitonResidual {
    pub fn max_abs(&self) -> f64 {
        self.radial
            .abs()
            .max(self.tangential.abs())
            .max(self.line.abs())
    }
}

/// `dr² + w(r)² g_{S^{dim-1}}`.
#[derive(Debug, Clone)]
pub struct WarpedMetric {
    pub dim: Dim,
    pub warp: Arc<dyn Warp>,
}

impl WarpedMetric {
    pub fn new(dim: Dim, warp: Arc<dyn Warp>) -> Self {
        Self { dim, warp }
    }

    pub fn domain_max(&self) -> f64 {
        self.warp.domain_max()
    }

    fn check_domain(&self, r: f64) -> Result<(), LabError> {
        if !(r >= 0.0 && r <= self.domain_max()) {
            return Err(LabError::Range {
                what: "radius",
                value: r,
                min: 0.0,
                max: self.domain_max(),
            });
        }
        Ok(())
    }

    pub fn curvature_at(&self, r: f64) -> Result<CurvatureSample, LabError> {
        self.check_domain(r)?;
        let (k_rad, k_sph) = if r == 0.0 {
            let k0 = self.warp.pole_curvature();
            (k0, k0)
        } else {
            let j = self.warp.jet(r);
            (-j.d2w / j.w, j.one_minus_dw2 / (j.w * j.w))
        };
        Ok(match self.dim {
            Dim::Three => CurvatureSample {
                r,
                k_rad: Some(k_rad),
                k_sph,
                ric_rad: 2.0 * k_rad,
                ric_tan: k_rad + k_sph,
                scalar: 4.0 * k_rad + 2.0 * k_sph,
                k_line: None,
                ric_line: None,
            },
            Dim::Two => CurvatureSample {
                r,
                k_rad: None,
                k_sph: k_rad,
                ric_rad: k_rad,
                ric_tan: k_rad,
                scalar: 2.0 * k_rad,
                k_line: None,
                ric_line: None,
            },
        })
    }

    /// Hessian of a radial potential in the radial and (unit) tangential
    /// directions: `(f'', f' w'/w)`.
    pub fn hessian(&self, potential: &dyn RadialPotential, r: f64) -> (f64, f64) {
        let (_, fp, fpp) = potential.jet(r);
        if r == 0.0 {
            return (fpp, fpp);
        }
        let j = self.warp.jet(r);
        (fpp, fp * j.dw / j.w)
    }

    pub fn soliton_residual(
        &self,
        potential: &dyn RadialPotential,
        r: f64,
    ) -> Result<SolitonResidual, LabError> {
        let k = self.curvature_at(r)?;
        let (h_rad, h_tan) = self.hessian(potential, r);
        Ok(SolitonResidual {
            radial: h_rad - k.ric_rad,
            tangential: h_tan - k.ric_tan,
            line: 0.0,
        })
    }

    /// `R + |∇f|²`.
    pub fn conserved_quantity(
        &self,
        potential: &dyn RadialPotential,
        r: f64,
    ) -> Result<f64, LabError> {
        let k = self.curvature_at(r)?;
        let (_, fp, _) = potential.jet(r);
        Ok(k.scalar + fp * fp)
    }
}

/// A θ-independent function on `ℝ × fiber`, with gradient and Hessian in the
/// `(s, σ)` coordinates.
pub trait ProductField: Send + Sync {
    fn value(&self, s: f64, sigma: f64) -> f64;
    /// `(∂s f, ∂σ f)`
    fn gradient(&self, s: f64, sigma: f64) -> (f64, f64);
    /// `(∂ss f, ∂sσ f, ∂σσ f)`
    fn hessian(&self, s: f64, sigma: f64) -> (f64, f64, f64);
}

/// `c₁ + c₂ s + φ(σ)` with `φ` a radial potential on the fiber.
#[derive(Debug, Clone)]
pub struct AffinePotential {
    pub offset: f64,
    pub slope: f64,
    pub fiber: Arc<dyn RadialPotential>,
}

impl ProductField for AffinePotential {
    fn value(&self, s: f64, sigma: f64) -> f64 {
        self.offset + self.slope * s + self.fiber.jet(sigma).0
    }
    fn gradient(&self, _s: f64, sigma: f64) -> (f64, f64) {
        (self.slope, self.fiber.jet(sigma).1)
    }
    fn hessian(&self, _s: f64, sigma: f64) -> (f64, f64, f64) {
        (0.0, 0.0, self.fiber.jet(sigma).2)
    }
}

/// `ds² + g_fiber` with a two-dimensional rotationally symmetric fiber.
#[derive(Debug, Clone)]
pub struct ProductMetric {
    pub fiber: WarpedMetric,
}

impl ProductMetric {
    pub fn new(fiber_warp: Arc<dyn Warp>) -> Self {
        Self {
            fiber: WarpedMetric::new(Dim::Two, fiber_warp),
        }
    }

    /// Curvature at fiber radius `sigma`; independent of `s` and θ.
    pub fn curvature_at(&self, sigma: f64) -> Result<CurvatureSample, LabError> {
        let k = self.fiber.curvature_at(sigma)?;
        Ok(CurvatureSample {
            r: sigma,
            k_rad: None,
            k_sph: k.k_sph,
            ric_rad: k.k_sph,
            ric_tan: k.k_sph,
            scalar: 2.0 * k.k_sph,
            k_line: Some(0.0),
            ric_line: Some(0.0),
        })
    }

    /// Hessian in the orthonormal frame `(∂s, ∂σ, w⁻¹∂θ)`:
    /// `(ss, sσ, σσ, θθ)`.
    pub fn hessian(&self, f: &dyn ProductField, s: f64, sigma: f64) -> [f64; 4] {
        let (hss, hsx, hxx) = f.hessian(s, sigma);
        let htt = if sigma == 0.0 {
            hxx
        } else {
            let j = self.fiber.warp.jet(sigma);
            f.gradient(s, sigma).1 * j.dw / j.w
        };
        [hss, hsx, hxx, htt]
    }

    pub fn soliton_residual(
        &self,
        f: &dyn ProductField,
        s: f64,
        sigma: f64,
    ) -> Result<SolitonResidual, LabError> {
        let k = self.curvature_at(sigma)?;
        let [hss, hsx, hxx, htt] = self.hessian(f, s, sigma);
        Ok(SolitonResidual {
            radial: hxx - k.ric_rad,
            tangential: htt - k.ric_tan,
            line: hss.abs().max(hsx.abs()),
        })
    }

    pub fn conserved_quantity(
        &self,
        f: &dyn ProductField,
        s: f64,
        sigma: f64,
    ) -> Result<f64, LabError> {
        let k = self.curvature_at(sigma)?;
        let (gs, gx) = f.gradient(s, sigma);
        Ok(k.scalar + gs * gs + gx * gx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Gauss curvature of `dr² + G(r) dθ²` from the metric component alone:
    /// `K = -(√G)''/√G`, with both derivatives taken by central differences.
    fn fd_gauss_curvature(g: impl Fn(f64) -> f64, r: f64, h: f64) -> f64 {
        let sq = |x: f64| g(x).sqrt();
        -(sq(r + h) - 2.0 * sq(r) + sq(r - h)) / (h * h) / sq(r)
    }

    /// Orbit-plane curvature of a 3D warped metric via the Gauss equation for
    /// the orbit sphere: intrinsic `1/w²` minus `det II = (w'/w)²`, with `w'`
    /// from a fourth-order central difference of `G = w²`.
    fn fd_orbit_curvature(g: impl Fn(f64) -> f64, r: f64, h: f64) -> f64 {
        let gr = g(r);
        let dg = (g(r - 2.0 * h) - 8.0 * g(r - h) + 8.0 * g(r + h) - g(r + 2.0 * h)) / (12.0 * h);
        let dw = dg / (2.0 * gr.sqrt());
        1.0 / gr - dw * dw / gr
    }

    /// Cigar curvature in the conformal (x, y) chart,
    /// `e^{2u}(dx² + dy²)` with `u = -½ ln(1 + x² + y²)`, `K = -e^{-2u} Δu`.
    fn fd_cigar_conformal(x: f64, y: f64, h: f64) -> f64 {
        let u = |x: f64, y: f64| -0.5 * (1.0 + x * x + y * y).ln();
        let lap = |h: f64| {
            (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h) - 4.0 * u(x, y)) / (h * h)
        };
        // one Richardson step removes the h² term
        -(4.0 * lap(h / 2.0) - lap(h)) / 3.0 / (2.0 * u(x, y)).exp()
    }

    #[test]
    fn cigar_tip_scalar_curvature_is_four() {
        let m = WarpedMetric::new(Dim::Two, Arc::new(CigarWarp { scale: 1.0 }));
        let k = m.curvature_at(0.0).unwrap();
        assert_relative_eq!(k.scalar, 4.0, max_relative = 1e-15);
        assert!(k.k_rad.is_none());
        // conformal chart oracle at the tip
        assert_relative_eq!(2.0 * fd_cigar_conformal(0.0, 0.0, 1e-3), 4.0, max_relative = 1e-5);
    }

    #[test]
    fn cigar_matches_conformal_chart_oracle() {
        let m = WarpedMetric::new(Dim::Two, Arc::new(CigarWarp { scale: 1.0 }));
        for i in 0..120 {
            let rho = 0.05 + 0.025 * i as f64;
            // ρ = arcsinh r in the polar form of the (x, y) chart
            let x = rho.sinh();
            let oracle = fd_cigar_conformal(x * 0.6, x * 0.8, 1e-3 * (1.0 + x));
            let k = m.curvature_at(rho).unwrap().k_sph;
            assert_relative_eq!(k, oracle, max_relative = 1e-5);
        }
    }

    #[test]
    fn closed_form_models_match_metric_component_oracle() {
        let cases: Vec<(Dim, Arc<dyn Warp>, f64)> = vec![
            (Dim::Two, Arc::new(CigarWarp { scale: 1.0 }), 6.0),
            (Dim::Two, Arc::new(CigarWarp { scale: 0.35 }), 12.0),
            (Dim::Two, Arc::new(SphereWarp { radius: 2f64.sqrt() }), 4.0),
            (Dim::Three, Arc::new(SphereWarp { radius: 1.3 }), 3.8),
        ];
        for (dim, warp, rmax) in cases {
            let m = WarpedMetric::new(dim, warp.clone());
            let g = |r: f64| warp.jet(r).w.powi(2);
            for i in 0..100 {
                let r = 0.05 + (rmax - 0.1) * i as f64 / 99.0;
                let h = 1e-3;
                let k = m.curvature_at(r).unwrap();
                let rad = fd_gauss_curvature(g, r, h);
                match dim {
                    Dim::Two => assert_relative_eq!(k.k_sph, rad, max_relative = 1e-5),
                    Dim::Three => {
                        assert_relative_eq!(k.k_rad.unwrap(), rad, max_relative = 1e-5);
                        let sph = fd_orbit_curvature(g, r, h);
                        assert_relative_eq!(k.k_sph, sph, max_relative = 1e-5);
                    }
                }
            }
        }
    }

    #[test]
    fn three_dim_ricci_and_scalar_identities() {
        let m = WarpedMetric::new(Dim::Three, Arc::new(SphereWarp { radius: 1.0 }));
        let k = m.curvature_at(0.7).unwrap();
        assert_relative_eq!(k.ric_rad, 2.0 * k.k_rad.unwrap());
        assert_relative_eq!(k.ric_tan, k.k_rad.unwrap() + k.k_sph);
        assert_relative_eq!(k.scalar, 6.0, max_relative = 1e-14);
    }

    #[test]
    fn cigar_potential_solves_soliton_equation() {
        let m = WarpedMetric::new(Dim::Two, Arc::new(CigarWarp { scale: 1.0 }));
        let f = LogCoshPotential { scale: 1.0 };
        for i in 0..200 {
            let rho = 0.1 * i as f64;
            let res = m.soliton_residual(&f, rho).unwrap();
            assert!(res.max_abs() < 1e-14, "rho {rho}: {res:?}");
            assert_relative_eq!(m.conserved_quantity(&f, rho).unwrap(), 4.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn cylinder_with_zero_potential_is_not_a_soliton() {
        let a = 2f64.sqrt();
        let p = ProductMetric::new(Arc::new(SphereWarp { radius: a }));
        let zero = AffinePotential {
            offset: 0.0,
            slope: 0.0,
            fiber: Arc::new(ZeroPotential),
        };
        let res = p.soliton_residual(&zero, 3.0, 1.1).unwrap();
        let k = p.curvature_at(1.1).unwrap();
        assert_relative_eq!(res.tangential, -k.ric_tan);
        assert!(res.tangential < 0.0);
        assert_relative_eq!(k.scalar, 1.0, max_relative = 1e-14);
        assert_eq!(k.k_line, Some(0.0));
        assert_eq!(k.ric_line, Some(0.0));
    }

    #[test]
    fn out_of_domain_is_range_error() {
        let m = WarpedMetric::new(Dim::Two, Arc::new(SphereWarp { radius: 1.0 }));
        assert!(matches!(m.curvature_at(4.0), Err(LabError::Range { .. })));
        assert!(matches!(m.curvature_at(-0.1), Err(LabError::Range { .. })));
    }

    #[test]
    fn curvature_sample_json_is_flat() {
        let m = WarpedMetric::new(Dim::Three, Arc::new(SphereWarp { radius: 1.0 }));
        let k = m.curvature_at(0.5).unwrap();
        let v: serde_json::Value = serde_json::to_value(k).unwrap();
        for key in ["r", "K_rad", "K_sph", "Ric_rad", "Ric_tan", "R"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: CurvatureSample = serde_json::from_value(v).unwrap();
        assert_eq!(back, k);
    }

    #[test]
    fn ln_cosh_is_stable() {
        assert_relative_eq!(ln_cosh(0.3), 0.3f64.cosh().ln(), max_relative = 1e-14);
        assert_relative_eq!(ln_cosh(1000.0), 1000.0 - std::f64::consts::LN_2);
    }
}
