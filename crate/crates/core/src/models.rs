//! The explicit model geometries: the cigar, cigar × line, the round
//! cylinder `ℝ × S²`, and the numerically integrated Bryant soliton.

use std::io::Write;
use std::ops::ControlFlow;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bryant::SolitonProfile;
use crate::error::LabError;
use crate::ode::{self, StepControl};
use crate::warped::{
    ln_cosh, AffinePotential, CigarWarp, Dim, LogCoshPotential, ProductField, ProductMetric,
    SphereWarp, WarpedMetric, ZeroPotential,
};

#[derive(Debug, Clone)]
pub enum ModelSpace {
    /// `dσ² + a⁻² tanh²(aσ) dθ²` with potential `2 ln cosh(aσ)`.
    Cigar { scale: f64 },
    /// `ds² +` cigar, potential `c₂ s + 2 ln cosh(aσ)`.
    CigarLine { scale: f64, slope: f64 },
    /// `ds² + a² g_{S²}`.
    RoundCylinder { radius: f64 },
    BryantNumeric(Arc<SolitonProfile>),
}

/// Config-file form of a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    /// Alternative to `scale`/`slope` for `cigar-line`: the tip curvature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Saved profile for `bryant`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<PathBuf>,
}

fn positive(what: &str, v: Option<f64>) -> Result<f64, LabError> {
    match v {
        Some(x) if x > 0.0 && x.is_finite() => Ok(x),
        Some(x) => Err(LabError::InvalidParameter(format!("{what} must be positive, got {x}"))),
        None => Err(LabError::InvalidParameter(format!("{what} is required"))),
    }
}

pub fn make_model(spec: &ModelSpec) -> Result<ModelSpace, LabError> {
    match spec.model.as_str() {
        "cigar" => Ok(ModelSpace::Cigar {
            scale: positive("scale", spec.scale.or(Some(1.0)))?,
        }),
        "cigar-line" => match (spec.rhat, spec.scale) {
            (Some(rhat), None) => ModelSpace::cigar_line_from_rhat(rhat),
            (None, scale) => {
                let slope = spec.slope.unwrap_or(0.0);
                if !slope.is_finite() {
                    return Err(LabError::InvalidParameter("slope must be finite".into()));
                }
                Ok(ModelSpace::CigarLine {
                    scale: positive("scale", scale)?,
                    slope,
                })
            }
            (Some(_), Some(_)) => Err(LabError::InvalidParameter(
                "give either rhat or scale/slope for cigar-line, not both".into(),
            )),
        },
        "round-cylinder" => Ok(ModelSpace::RoundCylinder {
            radius: positive("radius", spec.radius)?,
        }),
        "bryant" => {
            let path = spec.profile.as_ref().ok_or_else(|| {
                LabError::InvalidParameter("bryant model needs a saved profile path".into())
            })?;
            Ok(ModelSpace::BryantNumeric(Arc::new(SolitonProfile::load_json(path)?)))
        }
        other => Err(LabError::InvalidParameter(format!("unknown model '{other}'"))),
    }
}

impl ModelSpace {
    /// Cigar × line whose tip has scalar curvature `rhat`, with the slope
    /// making `R + |∇f|² = 1`.
    pub fn cigar_line_from_rhat(rhat: f64) -> Result<Self, LabError> {
        if !(rhat > 0.0 && rhat <= 1.0) {
            return Err(LabError::Range {
                what: "rhat",
                value: rhat,
                min: 0.0,
                max: 1.0,
            });
        }
        Ok(Self::CigarLine {
            scale: rhat.sqrt() / 2.0,
            slope: (1.0 - rhat).sqrt(),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Cigar { .. } => "cigar",
            Self::CigarLine { .. } => "cigar-line",
            Self::RoundCylinder { .. } => "round-cylinder",
            Self::BryantNumeric(_) => "bryant",
        }
    }

    /// The rotationally symmetric metric, for the models that are one.
    pub fn warped_metric(&self) -> Option<WarpedMetric> {
        match self {
            Self::Cigar { scale } => Some(WarpedMetric::new(
                Dim::Two,
                Arc::new(CigarWarp { scale: *scale }),
            )),
            Self::BryantNumeric(p) => Some(p.metric()),
            _ => None,
        }
    }

    /// The product metric, for the models with a line factor.
    pub fn product_metric(&self) -> Option<ProductMetric> {
        match self {
            Self::CigarLine { scale, .. } => Some(ProductMetric::new(Arc::new(CigarWarp {
                scale: *scale,
            }))),
            Self::RoundCylinder { radius } => Some(ProductMetric::new(Arc::new(SphereWarp {
                radius: *radius,
            }))),
            _ => None,
        }
    }

    /// Canonical potential on product models: `c₂ s + 2 ln cosh(aσ)` on the
    /// cigar line, zero on the cylinder.
    pub fn product_potential(&self) -> Option<AffinePotential> {
        match self {
            Self::CigarLine { scale, slope } => Some(AffinePotential {
                offset: 0.0,
                slope: *slope,
                fiber: Arc::new(LogCoshPotential { scale: *scale }),
            }),
            Self::RoundCylinder { .. } => Some(AffinePotential {
                offset: 0.0,
                slope: 0.0,
                fiber: Arc::new(ZeroPotential),
            }),
            _ => None,
        }
    }

    /// Scalar curvature at radius (or fiber radius) `r`.
    pub fn scalar_curvature(&self, r: f64) -> Result<f64, LabError> {
        if let Some(m) = self.warped_metric() {
            return Ok(m.curvature_at(r)?.scalar);
        }
        Ok(self.product_metric().expect("product model").curvature_at(r)?.scalar)
    }
}

fn cigar_line_parts(model: &ModelSpace) -> Result<(f64, f64), LabError> {
    match model {
        ModelSpace::CigarLine { scale, slope } => Ok((*scale, *slope)),
        other => Err(LabError::InvalidParameter(format!(
            "operation needs a cigar-line model, got {}",
            other.name()
        ))),
    }
}

/// The `(s, σ)` test grid: `n × n` points covering `|s| ≤ 20` and the cigar
/// out to where its curvature has decayed by `e⁻¹²`.
pub fn test_grid(scale: f64, n: usize) -> Vec<(f64, f64)> {
    let sig_max = 6.0 / scale;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let s = -20.0 + 40.0 * i as f64 / (n - 1) as f64;
        for j in 0..n {
            out.push((s, sig_max * j as f64 / (n - 1) as f64));
        }
    }
    out
}

/// Sup of the soliton residual of `c₁ + c₂ s + 2 ln cosh(aσ)` over the
/// 50×50 test grid.
pub fn potential_family_residual(model: &ModelSpace, c1: f64, c2: f64) -> Result<f64, LabError> {
    let (a, _) = cigar_line_parts(model)?;
    let metric = model.product_metric().expect("cigar line");
    let f = AffinePotential {
        offset: c1,
        slope: c2,
        fiber: Arc::new(LogCoshPotential { scale: a }),
    };
    let mut worst: f64 = 0.0;
    for (s, sigma) in test_grid(a, 50) {
        worst = worst.max(metric.soliton_residual(&f, s, sigma)?.max_abs());
    }
    Ok(worst)
}

/// `count` reproducible `(c₁, c₂)` pairs in `[-10, 10]²`.
pub fn random_family_pairs(seed: u64, count: usize) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)))
        .collect()
}

pub type Perturbation = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Canonical potential plus `ε·p`, with derivatives of `p` by central
/// differences.
struct Perturbed<'a> {
    base: AffinePotential,
    eps: f64,
    p: &'a Perturbation,
    h: f64,
}

impl ProductField for Perturbed<'_> {
    fn value(&self, s: f64, sigma: f64) -> f64 {
        self.base.value(s, sigma) + self.eps * (self.p)(s, sigma)
    }
    fn gradient(&self, s: f64, sigma: f64) -> (f64, f64) {
        let (gs, gx) = self.base.gradient(s, sigma);
        let h = self.h;
        let p = self.p;
        let ps = (p(s + h, sigma) - p(s - h, sigma)) / (2.0 * h);
        let px = (p(s, sigma + h) - p(s, sigma - h)) / (2.0 * h);
        (gs + self.eps * ps, gx + self.eps * px)
    }
    fn hessian(&self, s: f64, sigma: f64) -> (f64, f64, f64) {
        let (hss, hsx, hxx) = self.base.hessian(s, sigma);
        let h = self.h;
        let p = self.p;
        let c = p(s, sigma);
        let pss = (p(s + h, sigma) - 2.0 * c + p(s - h, sigma)) / (h * h);
        let pxx = (p(s, sigma + h) - 2.0 * c + p(s, sigma - h)) / (h * h);
        let psx = (p(s + h, sigma + h) - p(s + h, sigma - h) - p(s - h, sigma + h)
            + p(s - h, sigma - h))
            / (4.0 * h * h);
        (
            hss + self.eps * pss,
            hsx + self.eps * psx,
            hxx + self.eps * pxx,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RigidityProbe {
    pub eps: f64,
    pub residual: f64,
    /// `residual / ε`.
    pub kappa: f64,
}

/// Largest deviation of `p` from its least-squares affine-in-`s` fit on the
/// test grid, relative to `1 + max|p|`.
pub fn affine_deviation(scale: f64, p: &Perturbation) -> f64 {
    let grid = test_grid(scale, 50);
    let n = grid.len() as f64;
    let (mut ss, mut sp, mut s2, mut spp, mut pmax) = (0.0, 0.0, 0.0, 0.0, 0.0f64);
    for &(s, x) in &grid {
        let v = p(s, x);
        ss += s;
        sp += v;
        s2 += s * s;
        spp += s * v;
        pmax = pmax.max(v.abs());
    }
    let slope = (n * spp - ss * sp) / (n * s2 - ss * ss);
    let icept = (sp - slope * ss) / n;
    grid.iter()
        .map(|&(s, x)| (p(s, x) - icept - slope * s).abs())
        .fold(0.0, f64::max)
        / (1.0 + pmax)
}

/// Soliton residual of the canonical potential plus `ε·p` over the test grid.
pub fn potential_rigidity_probe(
    model: &ModelSpace,
    p: &Perturbation,
    eps: f64,
) -> Result<RigidityProbe, LabError> {
    let (a, _) = cigar_line_parts(model)?;
    if !(eps > 0.0) {
        return Err(LabError::InvalidParameter("amplitude must be positive".into()));
    }
    let deviation = affine_deviation(a, p);
    if deviation <= 1e-9 {
        return Err(LabError::AffinePerturbation { deviation });
    }
    let metric = model.product_metric().expect("cigar line");
    let f = Perturbed {
        base: model.product_potential().expect("cigar line"),
        eps,
        p,
        h: 1e-3,
    };
    let mut worst: f64 = 0.0;
    for (s, sigma) in test_grid(a, 50) {
        // keep the σ stencil on the manifold
        let sigma = sigma.max(f.h);
        worst = worst.max(metric.soliton_residual(&f, s, sigma)?.max_abs());
    }
    Ok(RigidityProbe {
        eps,
        residual: worst,
        kappa: worst / eps,
    })
}

/// The five fixed non-affine perturbations used by the rigidity check.
pub fn standard_perturbations() -> Vec<(&'static str, Box<Perturbation>)> {
    vec![
        ("s^2", Box::new(|s: f64, _x: f64| s * s)),
        ("sin(sigma)", Box::new(|_s: f64, x: f64| x.sin())),
        ("sigma^2", Box::new(|_s: f64, x: f64| x * x)),
        ("s*sigma^2", Box::new(|s: f64, x: f64| s * x * x)),
        ("cos(s)", Box::new(|s: f64, _x: f64| s.cos())),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SliceSample {
    pub tau: f64,
    pub area: f64,
    /// `dA/dτ`
    pub area_rate: f64,
    /// `-½ ∫ R da` over the slice.
    pub half_curvature_bound: f64,
}

/// Area of a cross-sectional sphere of `ℝ × S²` under Ricci flow.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceEvolution {
    pub radius: f64,
    pub extinction_time: f64,
    /// True when `τ_max` reached the extinction time.
    pub extinct: bool,
    pub samples: Vec<SliceSample>,
}

impl SliceEvolution {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), LabError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tau", "area"])?;
        for s in &self.samples {
            w.write_record([s.tau.to_string(), s.area.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Every sample satisfies `dA/dτ ≤ -½∫R da` and area strictly decreases.
    pub fn bound_holds(&self) -> bool {
        self.samples.iter().all(|s| s.area_rate <= s.half_curvature_bound)
            && self.samples.windows(2).all(|p| p[1].area < p[0].area)
    }
}

/// Evolve `u = a²` of the sphere factor by `du/dτ = -2 u K` with `K = 1/u`,
/// sampling `steps` uniform times in `[0, min(τ_max, T)]`.
pub fn cylinder_slice_evolution(
    radius: f64,
    tau_max: f64,
    steps: usize,
) -> Result<SliceEvolution, LabError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(LabError::InvalidParameter(format!(
            "radius must be positive, got {radius}"
        )));
    }
    if !(tau_max > 0.0) || steps < 2 {
        return Err(LabError::InvalidParameter("need τ_max > 0 and at least 2 steps".into()));
    }
    let u0 = radius * radius;
    let rhs = |_t: f64, y: &[f64; 1]| [-2.0 * y[0] * (1.0 / y[0])];
    let ctl = StepControl::new(1e-12, 1e-14);

    // the flow is linear in u; locate extinction from the rate at τ = 0
    let rate0 = rhs(0.0, &[u0])[0];
    let extinction_time = -u0 / rate0;
    let extinct = tau_max >= extinction_time;
    let tau_end = tau_max.min(extinction_time);

    let sample = |tau: f64, u: f64| {
        let k = 1.0 / u;
        let area = 4.0 * std::f64::consts::PI * u;
        SliceSample {
            tau,
            area,
            area_rate: 4.0 * std::f64::consts::PI * (-2.0 * u * k),
            half_curvature_bound: -0.5 * (2.0 * k) * area,
        }
    };
    let mut samples = vec![sample(0.0, u0)];
    let mut u = u0;
    let mut t = 0.0;
    for i in 1..steps {
        let t_next = tau_end * i as f64 / (steps - 1) as f64;
        if extinct && i == steps - 1 {
            samples.push(SliceSample {
                tau: extinction_time,
                area: 0.0,
                area_rate: -8.0 * std::f64::consts::PI,
                half_curvature_bound: -4.0 * std::f64::consts::PI,
            });
            break;
        }
        ode::integrate(&rhs, t, [u], t_next, (t_next - t) * 0.1, &ctl, |_, y, _| {
            u = y[0];
            ControlFlow::Continue(())
        })?;
        t = t_next;
        samples.push(sample(t, u));
    }
    Ok(SliceEvolution {
        radius,
        extinction_time,
        extinct,
        samples,
    })
}

/// `R(σ) e^{2aσ}` on the cigar, which tends to `16a²`.
pub fn cigar_tail_constant(scale: f64, sigma: f64) -> f64 {
    let a = scale;
    let r = 4.0 * a * a * (-2.0 * ln_cosh(a * sigma)).exp();
    r * (2.0 * a * sigma).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn spec(json: &str) -> ModelSpec {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn make_model_from_json() {
        let m = make_model(&spec(r#"{"model": "cigar-line", "scale": 0.3, "slope": 0.8}"#)).unwrap();
        assert!(matches!(m, ModelSpace::CigarLine { scale, slope } if scale == 0.3 && slope == 0.8));
        let m = make_model(&spec(r#"{"model": "cigar-line", "rhat": 0.5}"#)).unwrap();
        let (a, c2) = cigar_line_parts(&m).unwrap();
        assert_relative_eq!(a, 0.5f64.sqrt() / 2.0);
        assert_relative_eq!(c2, 0.5f64.sqrt());
        assert!(make_model(&spec(r#"{"model": "round-cylinder", "radius": -1}"#)).is_err());
        assert!(make_model(&spec(r#"{"model": "cigar", "scale": 0}"#)).is_err());
        assert!(make_model(&spec(r#"{"model": "torus"}"#)).is_err());
    }

    #[test]
    fn cigar_curvature_closed_form() {
        let m = ModelSpace::Cigar { scale: 1.0 };
        assert_relative_eq!(m.scalar_curvature(0.0).unwrap(), 4.0);
        for s in [0.3, 1.0, 2.5, 7.0] {
            let sech = 1.0 / f64::cosh(s);
            assert_relative_eq!(m.scalar_curvature(s).unwrap(), 4.0 * sech * sech, max_relative = 1e-13);
        }
    }

    #[test]
    fn round_cylinder_scalar_curvature() {
        let m = ModelSpace::RoundCylinder {
            radius: 2f64.sqrt(),
        };
        for s in [0.1, 1.0, 3.0] {
            assert_relative_eq!(m.scalar_curvature(s).unwrap(), 1.0, max_relative = 1e-14);
        }
        let k = m.product_metric().unwrap().curvature_at(0.5).unwrap();
        assert_eq!(k.k_line, Some(0.0));
    }

    #[test]
    fn cigar_line_conserved_quantity_is_one() {
        let m = ModelSpace::cigar_line_from_rhat(0.5).unwrap();
        let pm = m.product_metric().unwrap();
        let f = m.product_potential().unwrap();
        for (s, x) in test_grid(0.5f64.sqrt() / 2.0, 12) {
            assert_relative_eq!(pm.conserved_quantity(&f, s, x).unwrap(), 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn family_residuals_vanish() {
        let m = ModelSpace::cigar_line_from_rhat(0.5).unwrap();
        assert!(potential_family_residual(&m, 0.0, 0.0).unwrap() <= 1e-10);
        assert!(potential_family_residual(&m, 7.0, -3.0).unwrap() <= 1e-10);
        let m = ModelSpace::cigar_line_from_rhat(0.36).unwrap();
        assert!(potential_family_residual(&m, 0.0, 1.0).unwrap() <= 1e-10);
    }

    #[test]
    fn rigidity_probe_detects_perturbations() {
        let m = ModelSpace::cigar_line_from_rhat(0.5).unwrap();
        let p = potential_rigidity_probe(&m, &|s: f64, _x: f64| s * s, 1e-3).unwrap();
        assert!(p.residual >= 1e-3 * (1.0 - 1e-6), "{p:?}");
        let err = potential_rigidity_probe(&m, &|s: f64, _x: f64| 5.0 + 2.0 * s, 0.1).unwrap_err();
        assert!(matches!(err, LabError::AffinePerturbation { .. }));
        let m = ModelSpace::Cigar { scale: 1.0 };
        assert!(potential_rigidity_probe(&m, &|s: f64, _x: f64| s * s, 1e-3).is_err());
    }

    #[test]
    fn slice_evolution_examples() {
        let a0 = 2f64.sqrt();
        let e = cylinder_slice_evolution(a0, 2.0, 101).unwrap();
        assert_relative_eq!(e.samples[0].area, 8.0 * PI, max_relative = 1e-14);
        assert_eq!(e.extinction_time, a0 * a0 / 2.0);
        assert_relative_eq!(e.extinction_time, 1.0, max_relative = f64::EPSILON);
        assert!(e.extinct);
        assert_eq!(e.samples.last().unwrap().area, 0.0);
        assert!(e.bound_holds());

        let e = cylinder_slice_evolution(1.0, 0.25, 11).unwrap();
        let s0 = e.samples[0];
        assert_relative_eq!(s0.area_rate, -8.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(s0.half_curvature_bound, -4.0 * PI, max_relative = 1e-14);
        assert!(!e.extinct);
        assert_relative_eq!(e.samples[10].area, 4.0 * PI * (1.0 - 0.5), max_relative = 1e-10);
    }

    #[test]
    fn slices_csv_header() {
        let e = cylinder_slice_evolution(1.0, 1.0, 5).unwrap();
        let mut buf = vec![];
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("tau,area\n"));
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn cigar_tail_approaches_cylinder() {
        let a = 0.7;
        let c = cigar_tail_constant(a, 30.0);
        assert_relative_eq!(c, 16.0 * a * a, max_relative = 1e-9);
        let w = CigarWarp { scale: a };
        use crate::warped::Warp;
        assert_relative_eq!(w.jet(40.0).w, 1.0 / a, max_relative = 1e-12);
    }

    #[test]
    fn random_pairs_are_reproducible() {
        assert_eq!(random_family_pairs(7, 10), random_family_pairs(7, 10));
        assert_ne!(random_family_pairs(7, 10), random_family_pairs(8, 10));
    }
}
