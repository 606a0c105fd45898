//! Minimizing geodesics on warped and product metrics.
//!
//! Two points of a rotationally symmetric space together with the pole span a
//! totally geodesic meridian plane `dr² + w(r)² dφ²`, so every two-point
//! problem reduces to that surface. There we shoot from the first point: a
//! geodesic leaving at angle `α` to `∂r` has Clairaut constant `L = w sin α`,
//! and with `φ` as parameter
//!
//! ```text
//! dr/dφ = v_r w²/L,   dv_r/dφ = w' L/w,   ds/dφ = w²/L
//! ```
//!
//! where `v_r = ṙ` is the radial part of the unit tangent. The launch angle is
//! scanned, sign changes of `r(Δφ) - r₂` are bisected, and the shortest hit is
//! kept. On a product `ℝ × fiber` the geodesic is a straight line in `s`
//! times a fiber geodesic.

use std::ops::ControlFlow;

use crate::error::LabError;
use crate::ode::{self, StepControl};
use crate::warped::{ProductMetric, WarpedMetric};

/// A point given by its radius and a unit direction from the pole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpedPoint {
    pub r: f64,
    pub dir: [f64; 3],
}

impl WarpedPoint {
    /// Polar coordinates on a surface.
    pub fn polar(r: f64, theta: f64) -> Self {
        Self {
            r,
            dir: [theta.cos(), theta.sin(), 0.0],
        }
    }

    /// Spherical coordinates in dimension three.
    pub fn spherical(r: f64, polar: f64, azimuth: f64) -> Self {
        let (sp, cp) = polar.sin_cos();
        Self {
            r,
            dir: [sp * azimuth.cos(), sp * azimuth.sin(), cp],
        }
    }

    /// Angle between the directions of two points, in `[0, π]`.
    pub fn angle_to(&self, other: &Self) -> f64 {
        let [a0, a1, a2] = self.dir;
        let [b0, b1, b2] = other.dir;
        let cross = [a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0];
        let sin = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
        let cos = a0 * b0 + a1 * b1 + a2 * b2;
        sin.atan2(cos)
    }
}

/// A point of `ℝ × fiber`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductPoint {
    pub s: f64,
    pub fiber: WarpedPoint,
}

/// Unit tangent split into line, radial and tangential parts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tangent {
    pub line: f64,
    pub radial: f64,
    pub tangential: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicPath {
    pub length: f64,
    pub start_tangent: Tangent,
    pub end_tangent: Tangent,
}

#[derive(Debug, Clone, Copy)]
pub struct GeodesicOptions {
    /// Relative accuracy of the endpoint match and of the length.
    pub tol: f64,
    /// Launch angles sampled before bracketing.
    pub samples: usize,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            samples: 96,
        }
    }
}

impl GeodesicOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Shot {
    r: f64,
    v_r: f64,
    length: f64,
}

enum ShotOutcome {
    Landed(Shot),
    /// Left every reasonable neighbourhood outward; counts as overshoot.
    Escaped,
    /// Fell into the pole or off the domain; no continuation.
    Lost,
}

struct Shooter<'a> {
    metric: &'a WarpedMetric,
    r1: f64,
    dphi: f64,
    r_cap: f64,
    ctl: StepControl,
}

impl Shooter<'_> {
    fn shoot(&self, alpha: f64) -> ShotOutcome {
        let warp = &self.metric.warp;
        let r_dom = self.metric.domain_max();
        let ell = warp.jet(self.r1).w * alpha.sin();
        if !(ell > 0.0) {
            return ShotOutcome::Lost;
        }
        let sys = |_phi: f64, y: &[f64; 3]| {
            let j = warp.jet(y[0].max(0.0).min(r_dom));
            let w2 = j.w * j.w;
            [y[1] * w2 / ell, j.dw * ell / j.w, w2 / ell]
        };
        let mut out = ShotOutcome::Lost;
        let mut escaped = false;
        let mut last = [self.r1, alpha.cos(), 0.0];
        let res = ode::integrate(
            &sys,
            0.0,
            last,
            self.dphi,
            self.dphi * 1e-3,
            &self.ctl,
            |_, y, _| {
                if y[0] > self.r_cap {
                    escaped = true;
                    return ControlFlow::Break(());
                }
                if !(y[0] > 0.0 && y[0] <= r_dom) {
                    return ControlFlow::Break(());
                }
                last = *y;
                ControlFlow::Continue(())
            },
        );
        if escaped {
            return ShotOutcome::Escaped;
        }
        if res.is_ok() {
            // renormalize the radial speed against drift of |tangent| = 1
            let w_end = warp.jet(last[0]).w;
            let tang = ell / w_end;
            let v_r = last[1].signum() * (1.0 - tang * tang).max(0.0).sqrt();
            out = ShotOutcome::Landed(Shot {
                r: last[0],
                v_r: if v_r == 0.0 { last[1] } else { v_r },
                length: last[2],
            });
        }
        out
    }

    fn miss(&self, o: &ShotOutcome, r2: f64) -> Option<f64> {
        match o {
            ShotOutcome::Landed(s) => Some(s.r - r2),
            ShotOutcome::Escaped => Some(self.r_cap - r2),
            ShotOutcome::Lost => None,
        }
    }
}

/// Minimizing geodesic between two points of a warped metric.
pub fn warped_geodesic(
    metric: &WarpedMetric,
    p: WarpedPoint,
    q: WarpedPoint,
    opts: GeodesicOptions,
) -> Result<GeodesicPath, LabError> {
    let dom = metric.domain_max();
    for r in [p.r, q.r] {
        if !(r >= 0.0 && r <= dom) {
            return Err(LabError::Range {
                what: "geodesic endpoint radius",
                value: r,
                min: 0.0,
                max: dom,
            });
        }
    }
    if !(opts.tol > 0.0) {
        return Err(LabError::InvalidParameter("geodesic resolution must be positive".into()));
    }
    let dphi = p.angle_to(&q);
    let radial = |from: f64, to: f64| {
        let sgn = if to >= from { 1.0 } else { -1.0 };
        let t = Tangent {
            radial: sgn,
            ..Tangent::default()
        };
        GeodesicPath {
            length: (to - from).abs(),
            start_tangent: t,
            end_tangent: t,
        }
    };
    if p.r == 0.0 || q.r == 0.0 || dphi <= 1e-15 {
        return Ok(radial(p.r, q.r));
    }
    if p == q {
        return Ok(radial(p.r, p.r));
    }

    // through the pole: a geodesic only when the points are opposite
    let via_pole = p.r + q.r;
    let mut best: Option<GeodesicPath> = None;
    if (std::f64::consts::PI - dphi).abs() <= 1e-12 {
        best = Some(GeodesicPath {
            length: via_pole,
            start_tangent: Tangent {
                radial: -1.0,
                ..Tangent::default()
            },
            end_tangent: Tangent {
                radial: 1.0,
                ..Tangent::default()
            },
        });
    }

    let shooter = Shooter {
        metric,
        r1: p.r,
        dphi,
        r_cap: 4.0 * (p.r.max(q.r) + via_pole) + 10.0,
        ctl: StepControl::new(opts.tol * 1e-2, opts.tol * 1e-4),
    };
    let r_tol = opts.tol * (1.0 + q.r);
    let n = opts.samples.max(8);
    let alphas: Vec<f64> = (1..n)
        .map(|i| std::f64::consts::PI * i as f64 / n as f64)
        .collect();
    let misses: Vec<Option<f64>> = alphas
        .iter()
        .map(|&a| shooter.miss(&shooter.shoot(a), q.r))
        .collect();

    for i in 0..alphas.len() - 1 {
        let (Some(m0), Some(m1)) = (misses[i], misses[i + 1]) else {
            continue;
        };
        if m0.signum() == m1.signum() && m0 != 0.0 && m1 != 0.0 {
            continue;
        }
        let (mut lo, mut hi, mut m_lo) = (alphas[i], alphas[i + 1], m0);
        let mut hit = None;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let o = shooter.shoot(mid);
            let Some(m) = shooter.miss(&o, q.r) else {
                break;
            };
            if let ShotOutcome::Landed(s) = o {
                if m.abs() <= r_tol {
                    hit = Some((mid, s));
                    break;
                }
            }
            if m.signum() == m_lo.signum() {
                lo = mid;
                m_lo = m;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        if let Some((alpha, s)) = hit {
            if best.is_none_or(|b| s.length < b.length) {
                let (sa, ca) = alpha.sin_cos();
                best = Some(GeodesicPath {
                    length: s.length,
                    start_tangent: Tangent {
                        line: 0.0,
                        radial: ca,
                        tangential: sa,
                    },
                    end_tangent: Tangent {
                        line: 0.0,
                        radial: s.v_r,
                        tangential: metric.warp.jet(p.r).w * sa / metric.warp.jet(s.r).w,
                    },
                });
            }
        }
    }

    best.ok_or(LabError::GeodesicNotConverged {
        best_bound: via_pole,
    })
}

/// Minimizing geodesic on `ℝ × fiber`.
pub fn product_geodesic(
    metric: &ProductMetric,
    p: ProductPoint,
    q: ProductPoint,
    opts: GeodesicOptions,
) -> Result<GeodesicPath, LabError> {
    let fiber = warped_geodesic(&metric.fiber, p.fiber, q.fiber, opts)?;
    let ds = q.s - p.s;
    let length = ds.hypot(fiber.length);
    if length == 0.0 {
        return Ok(GeodesicPath {
            length,
            start_tangent: Tangent::default(),
            end_tangent: Tangent::default(),
        });
    }
    let (a, b) = (ds / length, fiber.length / length);
    let lift = |t: Tangent| Tangent {
        line: a,
        radial: b * t.radial,
        tangential: b * t.tangential,
    };
    Ok(GeodesicPath {
        length,
        start_tangent: lift(fiber.start_tangent),
        end_tangent: lift(fiber.end_tangent),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warped::{CigarWarp, Dim, EuclideanWarp, SphereWarp};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn plane() -> WarpedMetric {
        WarpedMetric::new(Dim::Two, Arc::new(EuclideanWarp))
    }

    #[test]
    fn radial_segments_are_exact() {
        let m = WarpedMetric::new(Dim::Three, Arc::new(SphereWarp { radius: 2.0 }));
        let g = warped_geodesic(
            &m,
            WarpedPoint::spherical(0.0, 0.0, 0.0),
            WarpedPoint::spherical(1.7, 0.3, 1.1),
            GeodesicOptions::default(),
        )
        .unwrap();
        assert_eq!(g.length, 1.7);
        assert_eq!(g.end_tangent.radial, 1.0);
    }

    #[test]
    fn flat_plane_matches_law_of_cosines() {
        let m = plane();
        for (r1, r2, t) in [(1.0, 2.0, 0.7), (3.0, 0.5, 2.0), (1.0, 1.0, 3.0), (2.0, 5.0, 0.05)] {
            let g = warped_geodesic(
                &m,
                WarpedPoint::polar(r1, 0.0),
                WarpedPoint::polar(r2, t),
                GeodesicOptions::default(),
            )
            .unwrap();
            let exact = (r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * f64::cos(t)).sqrt();
            assert_relative_eq!(g.length, exact, max_relative = 1e-7);
        }
    }

    #[test]
    fn sphere_matches_great_circle_distance() {
        let a = 1.5;
        let m = WarpedMetric::new(Dim::Two, Arc::new(SphereWarp { radius: a }));
        // pole at the north pole, r = a·colatitude
        let (c1, c2, dl) = (0.6, 1.9, 1.2);
        let g = warped_geodesic(
            &m,
            WarpedPoint::polar(a * c1, 0.0),
            WarpedPoint::polar(a * c2, dl),
            GeodesicOptions::default(),
        )
        .unwrap();
        let cosd = c1.cos() * c2.cos() + c1.sin() * c2.sin() * f64::cos(dl);
        assert_relative_eq!(g.length, a * cosd.acos(), max_relative = 1e-7);
    }

    #[test]
    fn opposite_points_through_pole() {
        let g = warped_geodesic(
            &plane(),
            WarpedPoint::polar(1.0, 0.0),
            WarpedPoint::polar(2.0, PI),
            GeodesicOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(g.length, 3.0, max_relative = 1e-12);
    }

    #[test]
    fn reversal_preserves_length_on_cigar() {
        let m = WarpedMetric::new(Dim::Two, Arc::new(CigarWarp { scale: 1.0 }));
        let p = WarpedPoint::polar(0.8, 0.0);
        let q = WarpedPoint::polar(2.5, 1.3);
        let o = GeodesicOptions::default();
        let a = warped_geodesic(&m, p, q, o).unwrap().length;
        let b = warped_geodesic(&m, q, p, o).unwrap().length;
        assert_relative_eq!(a, b, max_relative = 1e-7);
        assert!(a < 0.8 + 2.5 && a > 2.5 - 0.8);
    }

    #[test]
    fn product_line_and_tangent() {
        let m = ProductMetric::new(Arc::new(CigarWarp { scale: 0.5 }));
        let o = WarpedPoint::polar(0.0, 0.0);
        let g = product_geodesic(
            &m,
            ProductPoint { s: 0.0, fiber: o },
            ProductPoint { s: 7.5, fiber: o },
            GeodesicOptions::default(),
        )
        .unwrap();
        assert_eq!(g.length, 7.5);
        assert_eq!(g.end_tangent.line, 1.0);
        let g = product_geodesic(
            &m,
            ProductPoint { s: -3.0, fiber: o },
            ProductPoint {
                s: 1.0,
                fiber: WarpedPoint::polar(3.0, 0.4),
            },
            GeodesicOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(g.length, 5.0, max_relative = 1e-14);
        assert_relative_eq!(g.end_tangent.line, 0.8);
        assert_relative_eq!(g.end_tangent.radial, 0.6);
    }

    #[test]
    fn out_of_domain_endpoint_is_rejected() {
        let m = WarpedMetric::new(Dim::Two, Arc::new(SphereWarp { radius: 1.0 }));
        let err = warped_geodesic(
            &m,
            WarpedPoint::polar(1.0, 0.0),
            WarpedPoint::polar(4.0, 0.5),
            GeodesicOptions::default(),
        );
        assert!(matches!(err, Err(LabError::Range { .. })));
    }
}
