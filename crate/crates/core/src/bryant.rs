//! The three-dimensional Bryant steady soliton, built by integrating the
//! rotationally symmetric reduction of `Ric = ∇∇f` outward from the pole.
//!
//! With `g = dr² + w(r)² g_{S²}` and `f = f(r)` the soliton equation splits into
//!
//! ```text
//! radial:      f''        = -2 w''/w
//! tangential:  f' w'/w    = -w''/w + (1 - w'²)/w²
//! ```
//!
//! which we integrate as a first-order system in `(w, q, f, f')` where
//! `q = 1 - w'`. Carrying `q` instead of `w'` keeps `1 - w'² = q(2 - q)`
//! free of cancellation near the pole, where `q ~ r²/12`.
//!
//! Normalization: `R(O) = 1` and `f(O) = 0`. At a smooth pole `Ric(O) = c·g`
//! by isotropy, so `R(O) = 3c` and `f''(0) = c = 1/3`.

use std::ops::ControlFlow;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::LabError;
use crate::ode::{self, StepControl};
use crate::warped::{Dim, RadialPotential, Warp, WarpJet, WarpedMetric};

/// Central Hessian `f''(0)` giving `R(O) = 1`.
pub const UNIT_CENTRAL_HESSIAN: f64 = 1.0 / 3.0;
pub const DEFAULT_EPS: f64 = 1e-4;
pub const DEFAULT_R_MAX: f64 = 200.0;
pub const DEFAULT_TOL: f64 = 1e-10;
/// Step cap. Keeps the cubic Hermite interpolant accurate well below the
/// integration tolerance, including its derivative.
pub const DEFAULT_H_MAX: f64 = 0.02;

/// Taylor coefficients of the regular solution at the pole:
/// `w = r + a₃r³ + a₅r⁵`, `f' = c r + b₃ r³`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PoleSeries {
    c: f64,
    a3: f64,
    a5: f64,
    b3: f64,
}

impl PoleSeries {
    fn new(c: f64) -> Self {
        // Order-by-order substitution into the two equations above:
        //   r²: 12 a₃ = -c
        //   r⁴: 30 a₅ = -15a₃² - b₃ - 4a₃c,   3b₃ + a₃c = -40 a₅
        Self {
            c,
            a3: -c / 12.0,
            a5: 29.0 * c * c / 2400.0,
            b3: -2.0 * c * c / 15.0,
        }
    }

    /// `[w, q, f, f']` at radius `r`.
    fn state(&self, r: f64) -> [f64; 4] {
        let r2 = r * r;
        [
            r * (1.0 + r2 * (self.a3 + r2 * self.a5)),
            -r2 * (3.0 * self.a3 + 5.0 * self.a5 * r2),
            r2 * (0.5 * self.c + 0.25 * self.b3 * r2),
            r * (self.c + self.b3 * r2),
        ]
    }

    /// Derivatives of `state` taken from the polynomials themselves.
    fn state_derivative(&self, r: f64) -> [f64; 4] {
        let r2 = r * r;
        let [_, q, _, fp] = self.state(r);
        [
            1.0 - q,
            -r * (6.0 * self.a3 + 20.0 * self.a5 * r2),
            fp,
            self.c + 3.0 * self.b3 * r2,
        ]
    }

    fn volume(&self, r: f64) -> f64 {
        // ∫ 4π w² with w = r + a₃r³ (the r⁷ terms are below rounding here)
        4.0 * std::f64::consts::PI * (r.powi(3) / 3.0 + 0.4 * self.a3 * r.powi(5))
    }
}

/// Right-hand side of the system in `(w, q, f, f')`.
pub fn soliton_rhs(y: &[f64; 4]) -> [f64; 4] {
    let [w, q, _, fp] = *y;
    let dq = -q * (2.0 - q) / w + fp * (1.0 - q);
    [1.0 - q, dq, fp, 2.0 * dq / w]
}

/// Scalar curvature from the state: `R = 4 f' w'/w - 2(1 - w'²)/w²`.
pub fn scalar_from_state(y: &[f64; 4]) -> f64 {
    let [w, q, _, fp] = *y;
    4.0 * fp * (1.0 - q) / w - 2.0 * q * (2.0 - q) / (w * w)
}

/// Initial state off the pole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSeed {
    pub eps: f64,
    pub central_hessian: f64,
    pub w3: f64,
    pub w: f64,
    pub wp: f64,
    q: f64,
    pub f: f64,
    pub fp: f64,
}

impl SeriesSeed {
    fn state(&self) -> [f64; 4] {
        [self.w, self.q, self.f, self.fp]
    }

    /// Residuals `(radial, tangential)` of the soliton ODE evaluated on the
    /// truncated series at the seed radius.
    pub fn ode_defect(&self) -> (f64, f64) {
        let s = PoleSeries::new(self.central_hessian);
        let [w, q, _, fp] = s.state(self.eps);
        let d = s.state_derivative(self.eps);
        let x = 1.0 - q;
        let dx = -d[1];
        let radial = d[3] + 2.0 * dx / w;
        let tangential = fp * x / w + dx / w - q * (2.0 - q) / (w * w);
        (radial, tangential)
    }
}

pub fn seed(eps: f64) -> Result<SeriesSeed, LabError> {
    seed_with_hessian(eps, UNIT_CENTRAL_HESSIAN)
}

/// Seed for a general central Hessian `c` (so `R(O) = 3c`).
pub fn seed_with_hessian(eps: f64, c: f64) -> Result<SeriesSeed, LabError> {
    if !(eps > 0.0 && eps <= 1e-3) {
        return Err(LabError::Range {
            what: "seed radius",
            value: eps,
            min: 0.0,
            max: 1e-3,
        });
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(LabError::InvalidParameter(format!(
            "central Hessian must be positive, got {c}"
        )));
    }
    let s = PoleSeries::new(c);
    let [w, q, f, fp] = s.state(eps);
    Ok(SeriesSeed {
        eps,
        central_hessian: c,
        w3: s.a3,
        w,
        wp: 1.0 - q,
        q,
        f,
        fp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    r: f64,
    y: [f64; 4],
    dy: [f64; 4],
}

/// Interpolated state of the profile at one radius, with second derivatives
/// from the ODE right-hand side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileState {
    pub r: f64,
    pub w: f64,
    pub wp: f64,
    /// `1 - w'`, carried separately for accuracy near the pole.
    pub q: f64,
    pub wpp: f64,
    pub f: f64,
    pub fp: f64,
    pub fpp: f64,
}

impl ProfileState {
    pub fn scalar_curvature(&self) -> f64 {
        if self.r == 0.0 {
            return 6.0 * self.fpp / 2.0;
        }
        scalar_from_state(&[self.w, self.q, self.f, self.fp])
    }
}

/// Integrator settings beyond the tolerance.
#[derive(Debug, Clone, Copy)]
pub struct IntegrateOptions {
    pub h_max: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            h_max: DEFAULT_H_MAX,
        }
    }
}

/// Sampled Bryant soliton.
#[derive(Debug, Clone)]
pub struct SolitonProfile {
    central_hessian: f64,
    eps: f64,
    tol: f64,
    max_drift: f64,
    nodes: Vec<Node>,
    /// Cumulative `∫₀^{r_i} 4π w²` at each node.
    volume: Vec<f64>,
}

pub fn integrate(seed: &SeriesSeed, r_max: f64, tol: f64) -> Result<SolitonProfile, LabError> {
    integrate_with(seed, r_max, tol, IntegrateOptions::default())
}

pub fn integrate_with(
    seed: &SeriesSeed,
    r_max: f64,
    tol: f64,
    opts: IntegrateOptions,
) -> Result<SolitonProfile, LabError> {
    if !(r_max >= 10.0 && r_max.is_finite()) {
        return Err(LabError::Range {
            what: "r_max",
            value: r_max,
            min: 10.0,
            max: f64::INFINITY,
        });
    }
    if !(1e-12..=1e-6).contains(&tol) {
        return Err(LabError::Range {
            what: "tol",
            value: tol,
            min: 1e-12,
            max: 1e-6,
        });
    }
    let r_origin = 3.0 * seed.central_hessian;
    let ctl = StepControl::new(tol, tol * 1e-6).with_h_max(opts.h_max);
    let mut nodes: Vec<Node> = Vec::with_capacity((r_max / opts.h_max) as usize + 64);
    let mut violation: Option<(String, f64)> = None;
    let mut max_drift: f64 = 0.0;

    let sys = |_r: f64, y: &[f64; 4]| soliton_rhs(y);
    let res = ode::integrate(
        &sys,
        seed.eps,
        seed.state(),
        r_max,
        seed.eps * 0.05,
        &ctl,
        |r, y, dy| {
            let [w, q, _, fp] = *y;
            let what = if !(w > 0.0) {
                Some("w > 0")
            } else if !(0.0..1.0).contains(&q) {
                Some("0 < w' <= 1")
            } else if !(dy[1] > 0.0) {
                Some("w' strictly decreasing")
            } else if !(fp >= 0.0 && fp * fp < r_origin) {
                Some("0 <= f' < √R(O)")
            } else if !(dy[3] > 0.0) {
                Some("f' strictly increasing")
            } else {
                None
            };
            if let Some(what) = what {
                violation = Some((what.to_string(), r));
                return ControlFlow::Break(());
            }
            max_drift = max_drift.max((scalar_from_state(y) + fp * fp - r_origin).abs());
            nodes.push(Node { r, y: *y, dy: *dy });
            ControlFlow::Continue(())
        },
    );
    if let Some((what, r)) = violation {
        return Err(LabError::Invariant { what, r });
    }
    res?;

    let profile = SolitonProfile::from_nodes(seed.central_hessian, seed.eps, tol, nodes)?;
    debug_assert!((profile.max_drift - max_drift).abs() <= f64::EPSILON * 8.0);
    if profile.max_drift > 10.0 * tol {
        return Err(LabError::Invariant {
            what: format!(
                "conserved quantity drift {:e} exceeds 10·tol",
                profile.max_drift
            ),
            r: r_max,
        });
    }
    Ok(profile)
}

fn hermite(t: f64, h: f64, y0: f64, m0: f64, y1: f64, m1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * m0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * m1
}

fn hermite_slope(t: f64, h: f64, y0: f64, m0: f64, y1: f64, m1: f64) -> f64 {
    let t2 = t * t;
    ((6.0 * t2 - 6.0 * t) * y0 + (-6.0 * t2 + 6.0 * t) * y1) / h
        + (3.0 * t2 - 4.0 * t + 1.0) * m0
        + (3.0 * t2 - 2.0 * t) * m1
}

// 4-point Gauss–Legendre on [0, 1]; exact for the degree-6 integrand w_herm².
const GL4: [(f64, f64); 4] = [
    (0.069_431_844_202_973_71, 0.173_927_422_568_726_93),
    (0.330_009_478_207_571_87, 0.326_072_577_431_273_07),
    (0.669_990_521_792_428_1, 0.326_072_577_431_273_07),
    (0.930_568_155_797_026_3, 0.173_927_422_568_726_93),
];

impl SolitonProfile {
    fn from_nodes(c: f64, eps: f64, tol: f64, nodes: Vec<Node>) -> Result<Self, LabError> {
        if nodes.len() < 2 {
            return Err(LabError::InvalidParameter("profile needs at least two nodes".into()));
        }
        if nodes.windows(2).any(|p| !(p[1].r > p[0].r)) {
            return Err(LabError::InvalidParameter("profile grid must be strictly increasing".into()));
        }
        let r_origin = 3.0 * c;
        let max_drift = nodes
            .iter()
            .map(|n| (scalar_from_state(&n.y) + n.y[3] * n.y[3] - r_origin).abs())
            .fold(0.0, f64::max);
        let mut p = Self {
            central_hessian: c,
            eps,
            tol,
            max_drift,
            nodes,
            volume: vec![],
        };
        p.volume = p.cumulative_volume();
        Ok(p)
    }

    fn cumulative_volume(&self) -> Vec<f64> {
        let mut acc = PoleSeries::new(self.central_hessian).volume(self.eps);
        let mut out = Vec::with_capacity(self.nodes.len());
        out.push(acc);
        for pair in self.nodes.windows(2) {
            acc += Self::interval_volume(&pair[0], &pair[1], 1.0);
            out.push(acc);
        }
        out
    }

    /// `∫ 4π w²` over the first fraction `frac` of the interval `[a, b]`.
    fn interval_volume(a: &Node, b: &Node, frac: f64) -> f64 {
        let h = b.r - a.r;
        let span = h * frac;
        GL4.iter()
            .map(|&(x, wt)| {
                let t = x * frac;
                let w = hermite(t, h, a.y[0], a.dy[0], b.y[0], b.dy[0]);
                wt * w * w
            })
            .sum::<f64>()
            * span
            * 4.0
            * std::f64::consts::PI
    }

    pub fn central_hessian(&self) -> f64 {
        self.central_hessian
    }

    /// `R(O)`.
    pub fn r_origin(&self) -> f64 {
        3.0 * self.central_hessian
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn r_max(&self) -> f64 {
        self.nodes.last().expect("non-empty").r
    }

    /// `f(r_max)`, the largest reachable level.
    pub fn lambda_max(&self) -> f64 {
        self.nodes.last().expect("non-empty").y[2]
    }

    /// Largest `|R + f'² - R(O)|` over the grid.
    pub fn max_drift(&self) -> f64 {
        self.max_drift
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Grid radii.
    pub fn radii(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().map(|n| n.r)
    }

    /// Node states, exactly as integrated.
    pub fn node_states(&self) -> impl Iterator<Item = ProfileState> + '_ {
        self.nodes.iter().map(Self::node_state)
    }

    fn node_state(n: &Node) -> ProfileState {
        ProfileState {
            r: n.r,
            w: n.y[0],
            wp: 1.0 - n.y[1],
            q: n.y[1],
            wpp: -n.dy[1],
            f: n.y[2],
            fp: n.y[3],
            fpp: n.dy[3],
        }
    }

    fn check_range(&self, r: f64) -> Result<(), LabError> {
        if !(r >= 0.0 && r <= self.r_max()) {
            return Err(LabError::Range {
                what: "radius",
                value: r,
                min: 0.0,
                max: self.r_max(),
            });
        }
        Ok(())
    }

    fn interval(&self, r: f64) -> usize {
        let i = self.nodes.partition_point(|n| n.r <= r);
        i.clamp(1, self.nodes.len() - 1) - 1
    }

    /// Interpolated state at `r`. Below the seed radius the pole series is used.
    pub fn state_at(&self, r: f64) -> Result<ProfileState, LabError> {
        self.check_range(r)?;
        if r < self.eps {
            let s = PoleSeries::new(self.central_hessian);
            let y = s.state(r);
            let d = s.state_derivative(r);
            return Ok(ProfileState {
                r,
                w: y[0],
                wp: 1.0 - y[1],
                q: y[1],
                wpp: -d[1],
                f: y[2],
                fp: y[3],
                fpp: d[3],
            });
        }
        let i = self.interval(r);
        let (a, b) = (&self.nodes[i], &self.nodes[i + 1]);
        if r == a.r {
            return Ok(Self::node_state(a));
        }
        if r == b.r {
            return Ok(Self::node_state(b));
        }
        let h = b.r - a.r;
        let t = (r - a.r) / h;
        let mut y = [0.0; 4];
        for (k, v) in y.iter_mut().enumerate() {
            *v = hermite(t, h, a.y[k], a.dy[k], b.y[k], b.dy[k]);
        }
        let dy = soliton_rhs(&y);
        Ok(ProfileState {
            r,
            w: y[0],
            wp: 1.0 - y[1],
            q: y[1],
            wpp: -dy[1],
            f: y[2],
            fp: y[3],
            fpp: dy[3],
        })
    }

    /// Interpolated state together with its curvature.
    pub fn query(
        self: &Arc<Self>,
        r: f64,
    ) -> Result<(ProfileState, crate::warped::CurvatureSample), LabError> {
        let st = self.state_at(r)?;
        let k = self.metric().curvature_at(r)?;
        Ok((st, k))
    }

    pub fn metric(self: &Arc<Self>) -> WarpedMetric {
        WarpedMetric::new(Dim::Three, self.clone())
    }

    /// Scalar curvature at `r`.
    pub fn scalar_curvature(&self, r: f64) -> Result<f64, LabError> {
        Ok(self.state_at(r)?.scalar_curvature())
    }

    /// `f(r)` with the interpolant's own slope, used for Newton inversion.
    fn potential_and_slope(&self, r: f64) -> (f64, f64) {
        if r < self.eps {
            let s = PoleSeries::new(self.central_hessian);
            return (s.state(r)[2], s.state(r)[3]);
        }
        let i = self.interval(r);
        let (a, b) = (&self.nodes[i], &self.nodes[i + 1]);
        let h = b.r - a.r;
        let t = (r - a.r) / h;
        (
            hermite(t, h, a.y[2], a.dy[2], b.y[2], b.dy[2]),
            hermite_slope(t, h, a.y[2], a.dy[2], b.y[2], b.dy[2]),
        )
    }

    /// The radius of the level set `f = λ`.
    pub fn invert_potential(&self, lambda: f64) -> Result<f64, LabError> {
        if lambda == 0.0 {
            return Ok(0.0);
        }
        if !(lambda > 0.0 && lambda <= self.lambda_max()) {
            return Err(LabError::Range {
                what: "level λ (integrate to a larger r_max to reach it)",
                value: lambda,
                min: 0.0,
                max: self.lambda_max(),
            });
        }
        let (mut lo, mut hi) = if lambda < self.nodes[0].y[2] {
            (0.0, self.eps)
        } else {
            let i = self.nodes.partition_point(|n| n.y[2] < lambda);
            if i < self.nodes.len() && self.nodes[i].y[2] == lambda {
                return Ok(self.nodes[i].r);
            }
            (self.nodes[i - 1].r, self.nodes[i].r)
        };
        // start from the series guess near the pole, midpoint otherwise
        let mut r = if hi <= self.eps {
            (2.0 * lambda / self.central_hessian).sqrt().min(hi)
        } else {
            0.5 * (lo + hi)
        };
        for _ in 0..100 {
            let (fv, slope) = self.potential_and_slope(r);
            let g = fv - lambda;
            if g > 0.0 {
                hi = r;
            } else {
                lo = r;
            }
            let mut next = r - g / slope;
            if !(next > lo && next < hi) || slope <= 0.0 {
                next = 0.5 * (lo + hi);
            }
            if (next - r).abs() <= 4.0 * f64::EPSILON * r.max(1e-300) {
                return Ok(next);
            }
            r = next;
        }
        Ok(r)
    }

    /// `vol B(O, r) = ∫₀^r 4π w²`, exact for the interpolant.
    pub fn volume_to(&self, r: f64) -> Result<f64, LabError> {
        self.check_range(r)?;
        if r < self.eps {
            return Ok(PoleSeries::new(self.central_hessian).volume(r));
        }
        let i = self.interval(r);
        let (a, b) = (&self.nodes[i], &self.nodes[i + 1]);
        Ok(self.volume[i] + Self::interval_volume(a, b, (r - a.r) / (b.r - a.r)))
    }

    pub fn save_json(&self, path: &Path) -> Result<(), LabError> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), &self.to_file())?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, LabError> {
        let file = std::fs::File::open(path)?;
        let pf: ProfileFile = serde_json::from_reader(std::io::BufReader::new(file))?;
        Self::from_file(pf)
    }

    pub fn to_file(&self) -> ProfileFile {
        ProfileFile {
            normalization: Normalization {
                r_origin: self.r_origin(),
            },
            tol: self.tol,
            eps_seed: Some(self.eps),
            max_drift: Some(self.max_drift),
            grid: self
                .nodes
                .iter()
                .map(|n| GridRecord {
                    r: n.r,
                    w: n.y[0],
                    wp: 1.0 - n.y[1],
                    f: n.y[2],
                    fp: n.y[3],
                    q: Some(n.y[1]),
                })
                .collect(),
        }
    }

    pub fn from_file(pf: ProfileFile) -> Result<Self, LabError> {
        if !(pf.normalization.r_origin > 0.0) {
            return Err(LabError::InvalidParameter("R_origin must be positive".into()));
        }
        let first = pf
            .grid
            .first()
            .ok_or_else(|| LabError::InvalidParameter("empty grid".into()))?;
        let eps = pf.eps_seed.unwrap_or(first.r);
        let nodes = pf
            .grid
            .iter()
            .map(|g| {
                let y = [g.w, g.q.unwrap_or(1.0 - g.wp), g.f, g.fp];
                Node {
                    r: g.r,
                    y,
                    dy: soliton_rhs(&y),
                }
            })
            .collect();
        Self::from_nodes(pf.normalization.r_origin / 3.0, eps, pf.tol, nodes)
    }
}

impl Warp for SolitonProfile {
    fn jet(&self, r: f64) -> WarpJet {
        let st = self
            .state_at(r.min(self.r_max()))
            .expect("radius checked by the metric");
        WarpJet {
            w: st.w,
            dw: st.wp,
            d2w: st.wpp,
            one_minus_dw2: st.q * (2.0 - st.q),
        }
    }

    fn pole_curvature(&self) -> f64 {
        // Ric(O) = c g and K = Ric/2 in dimension three
        self.central_hessian / 2.0
    }

    fn domain_max(&self) -> f64 {
        self.r_max()
    }
}

impl RadialPotential for SolitonProfile {
    fn jet(&self, r: f64) -> (f64, f64, f64) {
        let st = self
            .state_at(r.min(self.r_max()))
            .expect("radius checked by the metric");
        (st.f, st.fp, st.fpp)
    }
}

/// On-disk profile.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProfileFile {
    pub normalization: Normalization,
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_seed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_drift: Option<f64>,
    pub grid: Vec<GridRecord>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Normalization {
    #[serde(rename = "R_origin")]
    pub r_origin: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct GridRecord {
    pub r: f64,
    pub w: f64,
    pub wp: f64,
    pub f: f64,
    pub fp: f64,
    /// `1 - wp` at full relative precision; optional.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

/// Difference in `w(r_probe)` between integrations seeded at `eps` and `eps/2`.
pub fn seed_sensitivity(eps: f64, tol: f64, r_probe: f64) -> Result<f64, LabError> {
    let run = |e: f64| -> Result<f64, LabError> {
        let s = seed(e)?;
        let ctl = StepControl::new(tol, tol * 1e-6).with_h_max(DEFAULT_H_MAX);
        let y = ode::integrate_to(&|_r: f64, y: &[f64; 4]| soliton_rhs(y), e, s.state(), r_probe, &ctl)?;
        Ok(y[0])
    };
    Ok((run(eps)? - run(eps / 2.0)?).abs())
}

/// Independent integration from the seed straight to `r`, returning
/// `[w, w', f, f']`. Used as an oracle for interpolated queries.
pub fn integrate_point(seed: &SeriesSeed, r: f64, tol: f64) -> Result<[f64; 4], LabError> {
    let ctl = StepControl::new(tol, tol * 1e-6);
    let y = ode::integrate_to(&|_r: f64, y: &[f64; 4]| soliton_rhs(y), seed.eps, seed.state(), r, &ctl)?;
    Ok([y[0], 1.0 - y[1], y[2], y[3]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn seed_matches_low_order_series() {
        let s = seed(1e-4).unwrap();
        let e: f64 = 1e-4;
        assert!((s.wp - (1.0 - e * e / 12.0)).abs() < 1e-15);
        assert!((s.fp - e / 3.0).abs() < 1e-12);
        assert_relative_eq!(s.w3, -1.0 / 36.0);
        assert_relative_eq!(s.f, e * e / 6.0, max_relative = 1e-7);
    }

    #[test]
    fn seed_defect_is_high_order() {
        // residuals of the truncated series shrink like ε⁴ (radial) and ε³
        // (tangential) or faster
        let d1 = seed(1e-3).unwrap().ode_defect();
        let d2 = seed(5e-4).unwrap().ode_defect();
        assert!(d1.0.abs() < 1e-9 && d1.1.abs() < 1e-9, "{d1:?}");
        assert!(d2.0.abs() <= d1.0.abs() / 7.0 || d2.0.abs() < 1e-15);
        assert!(d2.1.abs() <= d1.1.abs() / 7.0 || d2.1.abs() < 1e-15);
    }

    #[test]
    fn seed_tends_to_pole_conditions() {
        let s = seed(1e-9).unwrap();
        assert!(s.w < 2e-9 && (s.wp - 1.0).abs() < 1e-15 && s.f < 1e-17 && s.fp < 1e-9);
    }

    #[test]
    fn seed_rejects_out_of_range() {
        assert!(seed(0.0).is_err());
        assert!(seed(2e-3).is_err());
        assert!(seed(-1e-4).is_err());
    }

    #[test]
    fn integrate_rejects_bad_arguments() {
        let s = seed(1e-4).unwrap();
        assert!(integrate(&s, 5.0, 1e-10).is_err());
        assert!(integrate(&s, 50.0, 1e-3).is_err());
        assert!(integrate(&s, 50.0, 1e-14).is_err());
    }

    #[test]
    fn bad_seed_trips_invariant_monitor() {
        // w' > 1 at the start violates the positive-curvature invariants
        let mut s = seed(1e-4).unwrap();
        s.q = -1e-3;
        s.wp = 1.0 + 1e-3;
        let err = integrate(&s, 20.0, 1e-8).unwrap_err();
        assert!(matches!(err, LabError::Invariant { .. }), "{err}");
    }

    #[test]
    fn invert_round_trip_and_series_guess() {
        let p = integrate(&seed(1e-4).unwrap(), 20.0, 1e-10).unwrap();
        assert_eq!(p.invert_potential(0.0).unwrap(), 0.0);
        for r in [1e-5, 3e-3, 0.5, 2.0, 7.5, 19.0] {
            let lam = p.state_at(r).unwrap().f;
            assert_relative_eq!(p.invert_potential(lam).unwrap(), r, max_relative = 1e-10);
        }
        let lam = 1e-6;
        assert_relative_eq!(p.invert_potential(lam).unwrap(), (6.0 * lam).sqrt(), max_relative = 1e-5);
        assert!(p.invert_potential(p.lambda_max() + 1.0).is_err());
    }

    #[test]
    fn volume_matches_direct_quadrature() {
        let p = integrate(&seed(1e-4).unwrap(), 20.0, 1e-10).unwrap();
        // composite Simpson on the interpolant, fine grid
        let r_end = 13.3;
        let n = 20000;
        let h = r_end / n as f64;
        let g = |r: f64| 4.0 * std::f64::consts::PI * p.state_at(r).unwrap().w.powi(2);
        let mut acc = g(0.0) + g(r_end);
        for i in 1..n {
            acc += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc *= h / 3.0;
        assert_relative_eq!(p.volume_to(r_end).unwrap(), acc, max_relative = 1e-9);
    }

    #[test]
    fn json_round_trip_preserves_queries() {
        let p = integrate(&seed(1e-4).unwrap(), 12.0, 1e-9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        p.save_json(&path).unwrap();
        let q = SolitonProfile::load_json(&path).unwrap();
        assert_eq!(q.len(), p.len());
        for r in [1e-5, 0.3, 4.4, 11.9] {
            assert_eq!(p.state_at(r).unwrap(), q.state_at(r).unwrap());
        }
        let v: serde_json::Value = serde_json::from_reader(std::fs::File::open(&path).unwrap()).unwrap();
        assert_eq!(v["normalization"]["R_origin"], 1.0);
        for key in ["r", "w", "wp", "f", "fp"] {
            assert!(v["grid"][0].get(key).is_some());
        }
    }

    #[test]
    fn loads_minimal_schema_without_q() {
        let p = integrate(&seed(1e-4).unwrap(), 12.0, 1e-9).unwrap();
        let mut pf = p.to_file();
        pf.eps_seed = None;
        pf.max_drift = None;
        for g in &mut pf.grid {
            g.q = None;
        }
        let q = SolitonProfile::from_file(pf).unwrap();
        let a = p.state_at(5.0).unwrap();
        let b = q.state_at(5.0).unwrap();
        assert_relative_eq!(a.w, b.w, max_relative = 1e-14);
        assert_relative_eq!(a.scalar_curvature(), b.scalar_curvature(), max_relative = 1e-9);
    }
}
