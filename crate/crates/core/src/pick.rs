//! Blow-up point picking on the cigar line.
//!
//! Level sets of `f = c₂ s + f̄(σ)` are caps opening toward `s → -∞`; the
//! diameter `D(λ)` is taken on the part `s ≥ 0`, a disk of revolution with
//! pole at the cap center `(λ/c₂, σ = 0)`. Its metric in `σ` is
//! `(1 + f̄'²/c₂²) dσ² + w(σ)² dθ²`, and distances come from a graph mesh.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics::linear_fit;
use crate::bryant::SolitonProfile;
use crate::error::LabError;
use crate::levelset::{level_grid, record, Spacing};
use crate::mesh::RevolutionMesh;
use crate::models::ModelSpace;
use crate::warped::{sech, CigarWarp, Warp};

/// Cap mesh resolution `(n_u, n_θ)`; the Richardson check doubles both.
pub const CAP_MESH: (usize, usize) = (48, 64);

/// Log–log slope of `R·D²` below which it counts as bounded.
pub const BOUNDED_SLOPE: f64 = 0.5;

/// Largest `σ` on the level `λ` of a cigar line with the given scale.
pub fn cap_radius(scale: f64, level: f64) -> f64 {
    // acosh(e^t) = t + ln(1 + √(1 - e^{-2t})) with t = λ/2
    let t = 0.5 * level;
    (t + (1.0 + (-(-2.0 * t).exp_m1()).sqrt()).ln()) / scale
}

/// Mesh diameter of the level cap at `level`.
pub fn cap_diameter(scale: f64, slope: f64, level: f64, resolution: (usize, usize)) -> f64 {
    let warp = CigarWarp { scale };
    let mesh = RevolutionMesh::new(cap_radius(scale, level), resolution.0, resolution.1, |x| {
        let fp = 2.0 * scale * (scale * x).tanh();
        (1.0 + (fp / slope).powi(2), warp.jet(x).w.powi(2))
    });
    mesh.diameter()
}

/// `D(λ)` tabulated on a log grid of levels and extended on demand; the
/// table brackets inversions, which are then finished on the mesh itself.
struct DiameterTable {
    scale: f64,
    slope: f64,
    mesh: (usize, usize),
    levels: Vec<f64>,
    diam: Vec<f64>,
}

impl DiameterTable {
    fn new(scale: f64, slope: f64, mesh: (usize, usize)) -> Self {
        let mut t = Self {
            scale,
            slope,
            mesh,
            levels: vec![],
            diam: vec![],
        };
        t.extend(1e-2, 64.0, 48);
        t
    }

    fn diameter(&self, level: f64) -> f64 {
        cap_diameter(self.scale, self.slope, level, self.mesh)
    }

    fn extend(&mut self, lo: f64, hi: f64, count: usize) {
        let ratio = (hi / lo).ln();
        let new: Vec<f64> = (0..count)
            .map(|i| lo * (ratio * i as f64 / (count - 1) as f64).exp())
            .filter(|&l| self.levels.last().is_none_or(|&top| l > top))
            .collect();
        let d: Vec<f64> = new.par_iter().map(|&l| self.diameter(l)).collect();
        self.levels.extend(new);
        self.diam.extend(d);
    }

    /// Index `i` with `diam[i] ≤ target < diam[i+1]`.
    fn bracket(&mut self, target: f64) -> Result<usize, LabError> {
        if target <= self.diam[0] {
            return Err(LabError::InvalidParameter(format!(
                "cap diameter {target} below the tabulated range"
            )));
        }
        while *self.diam.last().expect("table") <= target {
            let top = *self.levels.last().expect("table");
            if top > 1e6 {
                return Err(LabError::InvalidParameter(format!(
                    "cap diameter {target} out of reach"
                )));
            }
            self.extend(top, 4.0 * top, 13);
        }
        Ok(self.diam.partition_point(|&d| d <= target) - 1)
    }

    /// Log–log interpolated level for `target`, without touching the mesh.
    fn estimate(&mut self, target: f64) -> Result<f64, LabError> {
        let i = self.bracket(target)?;
        let (l0, l1) = (self.levels[i].ln(), self.levels[i + 1].ln());
        let (d0, d1) = (self.diam[i].ln(), self.diam[i + 1].ln());
        Ok((l0 + (target.ln() - d0) * (l1 - l0) / (d1 - d0)).exp())
    }

    /// The level whose mesh diameter is `target`, by Illinois iteration
    /// inside the tabulated bracket.
    fn solve(&mut self, target: f64) -> Result<f64, LabError> {
        let i = self.bracket(target)?;
        let (mut a, mut b) = (self.levels[i], self.levels[i + 1]);
        let (mut fa, mut fb) = (self.diam[i] - target, self.diam[i + 1] - target);
        let mut side = 0;
        for _ in 0..60 {
            let c = (a * fb - b * fa) / (fb - fa);
            let fc = self.diameter(c) - target;
            if fc.abs() <= 1e-9 * target || (b - a) <= 1e-12 * b {
                return Ok(c);
            }
            if (fc < 0.0) == (fa < 0.0) {
                a = c;
                fa = fc;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            } else {
                b = c;
                fb = fc;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            }
        }
        Err(LabError::SlowConvergence {
            what: "cap diameter inversion".into(),
            lo: a,
            hi: b,
        })
    }
}

/// `ε_j = j^{-eps_exponent}`, `A_j = j^{area_exponent}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PickSchedule {
    pub eps_exponent: f64,
    pub area_exponent: f64,
}

impl Default for PickSchedule {
    fn default() -> Self {
        Self {
            eps_exponent: 0.5,
            area_exponent: 2.0,
        }
    }
}

impl PickSchedule {
    pub fn eps(&self, j: usize) -> f64 {
        (j as f64).powf(-self.eps_exponent)
    }

    pub fn area(&self, j: usize) -> f64 {
        (j as f64).powf(self.area_exponent)
    }

    /// `ε_j → 0`, `A_j → ∞` and `A_j ε_j² → ∞`.
    pub fn validate(&self) -> Result<(), LabError> {
        if self.eps_exponent > 0.0
            && self.area_exponent > 0.0
            && self.area_exponent - 2.0 * self.eps_exponent > 0.0
        {
            Ok(())
        } else {
            Err(LabError::InvalidParameter(format!(
                "schedule needs ε_j → 0, A_j → ∞ and A_j ε_j² → ∞; got exponents {} and {}",
                self.eps_exponent, self.area_exponent
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PickOptions {
    pub schedule: PickSchedule,
    /// Number of points to emit.
    pub j_max: usize,
    /// Cap mesh `(n_u, n_θ)`.
    pub mesh: (usize, usize),
}

impl Default for PickOptions {
    fn default() -> Self {
        Self {
            schedule: PickSchedule::default(),
            j_max: 6,
            mesh: CAP_MESH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PickPoint {
    pub j: usize,
    /// `q_j = (s, σ)`
    pub s: f64,
    pub sigma: f64,
    pub level: f64,
    pub radius: f64,
    pub eps: f64,
    pub area: f64,
    pub sigma_j: f64,
    pub delta: f64,
    /// `d(q_j, O)` with `O = (0, tip)`.
    pub distance: f64,
    /// `s_j / r_j`
    pub lambda: f64,
    pub scalar: f64,
    pub r2_scalar: f64,
    pub diameter: f64,
    pub diameter_fine: f64,
    /// Largest `R` over the ball found while picking.
    pub ball_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PickSequence {
    pub rhat: f64,
    pub schedule: PickSchedule,
    pub j_max: usize,
    /// Log–log slope of `R·D²` against `λ` on the cap centers.
    pub growth_slope: f64,
    pub points: Vec<PickPoint>,
}

impl PickSequence {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), LabError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "j", "s", "sigma", "radius", "eps", "A", "sigma_j", "delta", "distance", "lambda", "r2R",
        ])?;
        for p in &self.points {
            w.write_record(
                [
                    p.j as f64, p.s, p.sigma, p.radius, p.eps, p.area, p.sigma_j, p.delta,
                    p.distance, p.lambda, p.r2_scalar,
                ]
                .map(|v| v.to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

fn cigar_line_scalar(scale: f64, sigma: f64) -> f64 {
    4.0 * scale * scale * sech(scale * sigma).powi(2)
}

/// Sup of `R` over the fiber annulus `[σ - r, σ + r]`, a superset of the
/// ball of radius `r` about `(s, σ)`.
fn ball_sup(scale: f64, sigma: f64, r: f64, samples: usize) -> f64 {
    let lo = (sigma - r).max(0.0);
    let hi = sigma + r;
    (0..=samples)
        .map(|i| cigar_line_scalar(scale, lo + (hi - lo) * i as f64 / samples as f64))
        .fold(0.0, f64::max)
}

/// Measured growth of `R·D²` on a Bryant profile over the top of its range.
pub fn bryant_rd2_growth(profile: &SolitonProfile) -> Result<(f64, f64), LabError> {
    let lmax = profile.lambda_max();
    let grid = level_grid(lmax / 8.0, lmax, 12, Spacing::Log)?;
    let rd2: Vec<f64> = grid
        .iter()
        .map(|&l| {
            let rec = record(profile, l)?;
            Ok(rec.scalar * rec.diameter_inner.powi(2))
        })
        .collect::<Result<_, LabError>>()?;
    let lx: Vec<f64> = grid.iter().map(|l| l.ln()).collect();
    let ly: Vec<f64> = rd2.iter().map(|v| v.ln()).collect();
    Ok((rd2.iter().copied().fold(0.0, f64::max), linear_fit(&lx, &ly).0))
}

/// Pick `j_max` points `(q_j, r_j, δ_j)`: walk the schedule index `j` and
/// keep each point whose ball is disjoint from the ones already kept.
pub fn pick_points(model: &ModelSpace, opts: &PickOptions) -> Result<PickSequence, LabError> {
    let PickOptions {
        schedule,
        j_max,
        mesh,
    } = *opts;
    schedule.validate()?;
    if mesh.0 < 8 || mesh.1 < 8 {
        return Err(LabError::InvalidParameter(format!("cap mesh {mesh:?} too coarse")));
    }
    if j_max == 0 {
        return Err(LabError::InvalidParameter("j_max must be at least 1".into()));
    }
    let (a, c2) = match model {
        ModelSpace::CigarLine { scale, slope } if *slope > 0.0 => (*scale, *slope),
        ModelSpace::BryantNumeric(p) => {
            let (bound, slope) = bryant_rd2_growth(p)?;
            return Err(if slope < BOUNDED_SLOPE {
                LabError::BoundedCurvatureDiameter { bound, slope }
            } else {
                LabError::InvalidParameter(format!(
                    "R·D² grows with slope {slope:.3} on the profile, but picking is only meshed on the cigar line"
                ))
            });
        }
        other => {
            return Err(LabError::InvalidParameter(format!(
                "point picking needs a cigar-line model, got {}",
                other.name()
            )))
        }
    };
    let rhat = 4.0 * a * a;

    // measured precondition: R·D² unbounded along the cap centers
    let probe = [5.0, 20.0, 80.0];
    let d: Vec<f64> = probe.par_iter().map(|&l| cap_diameter(a, c2, l, mesh)).collect();
    let lx: Vec<f64> = probe.iter().map(|l: &f64| l.ln()).collect();
    let ly: Vec<f64> = d.iter().map(|v| (rhat * v * v).ln()).collect();
    let growth_slope = linear_fit(&lx, &ly).0;
    if growth_slope < BOUNDED_SLOPE {
        return Err(LabError::BoundedCurvatureDiameter {
            bound: rhat * d[2] * d[2],
            slope: growth_slope,
        });
    }

    let mut table = DiameterTable::new(a, c2, mesh);
    let scalar = cigar_line_scalar(a, 0.0);
    // the sup of R·D² over {D ≤ σ} is R̂σ², attained on the core
    let sigma_of = |k: usize| (schedule.area(k) / rhat).sqrt();
    let mut points: Vec<PickPoint> = Vec::with_capacity(j_max);
    let mut k = 0;
    while points.len() < j_max {
        k += 1;
        if k > 1_000_000 {
            return Err(LabError::SlowConvergence {
                what: "disjoint point search".into(),
                lo: points.len() as f64,
                hi: j_max as f64,
            });
        }
        let sigma_j = sigma_of(k);
        if sigma_j <= table.diam[0] {
            continue;
        }
        let radius = schedule.eps(k) * sigma_j;
        if let Some(p) = points.last() {
            // cheap screen on the table before solving on the mesh
            let s_est = table.estimate(sigma_j)? / c2;
            if s_est - radius < (p.s + p.radius) * (1.0 - 1e-3) {
                continue;
            }
        }
        let level = table.solve(sigma_j)?;
        let s = level / c2;
        let clear = points.iter().all(|p| (p.s - s).hypot(p.sigma) >= p.radius + radius);
        let grows = points
            .last()
            .is_none_or(|p| radius * radius * scalar > p.r2_scalar && s / radius > p.lambda);
        if !(clear && grows) {
            continue;
        }
        let eps = schedule.eps(k);
        let sup = ball_sup(a, 0.0, radius, 400);
        let delta = if sup <= scalar * (1.0 + 1e-12) {
            0.0
        } else {
            (1.0 - 3.0 * eps).powi(-2) - 1.0
        };
        points.push(PickPoint {
            j: k,
            s,
            sigma: 0.0,
            level,
            radius,
            eps,
            area: schedule.area(k),
            sigma_j,
            delta,
            distance: s,
            lambda: s / radius,
            scalar,
            r2_scalar: radius * radius * scalar,
            diameter: table.diameter(level),
            diameter_fine: cap_diameter(a, c2, level, (2 * mesh.0, 2 * mesh.1)),
            ball_sup: sup,
        });
    }
    Ok(PickSequence {
        rhat,
        schedule,
        j_max,
        growth_slope,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PickAudit {
    /// (a) per point: sup R over the ball against `(1 + δ_j) R(q_j)`.
    pub curvature_pinched: Vec<bool>,
    /// (b)
    pub r2_scalar_increasing: bool,
    /// (c)
    pub lambda_increasing: bool,
    /// (d)
    pub disjoint: bool,
    /// Largest relative change of `D` at double mesh resolution.
    pub mesh_change: f64,
    pub delta_formula_ok: bool,
}

impl PickAudit {
    pub fn all_hold(&self) -> bool {
        self.curvature_pinched.iter().all(|&b| b)
            && self.r2_scalar_increasing
            && self.lambda_increasing
            && self.disjoint
            && self.delta_formula_ok
    }
}

/// Re-check (a)–(d) from the emitted numbers, recomputing curvatures and
/// distances from the model rather than trusting the picker.
pub fn audit(model: &ModelSpace, seq: &PickSequence) -> Result<PickAudit, LabError> {
    let metric = model
        .product_metric()
        .ok_or_else(|| LabError::InvalidParameter("audit needs a product model".into()))?;
    let curv = |x: f64| metric.curvature_at(x).map(|c| c.scalar);
    let pts = &seq.points;
    let mut pinched = Vec::with_capacity(pts.len());
    let mut delta_ok = true;
    let mut r2 = Vec::with_capacity(pts.len());
    for p in pts {
        let rq = curv(p.sigma)?;
        let lo = (p.sigma - p.radius).max(0.0);
        let hi = p.sigma + p.radius;
        let n = 2000;
        let mut sup: f64 = 0.0;
        for i in 0..=n {
            sup = sup.max(curv(lo + (hi - lo) * i as f64 / n as f64)?);
        }
        pinched.push(sup <= (1.0 + p.delta) * rq * (1.0 + 1e-12));
        let second_case = (1.0 - 3.0 * p.eps).powi(-2) - 1.0;
        delta_ok &= p.delta == 0.0 || (3.0 * p.eps < 1.0 && (p.delta - second_case).abs() <= 1e-12 * second_case);
        r2.push(p.radius * p.radius * rq);
    }
    let r2_increasing = r2.windows(2).all(|w| w[1] > w[0]);
    let lambdas: Vec<f64> = pts.iter().map(|p| p.s.hypot(p.sigma) / p.radius).collect();
    let lambda_increasing = lambdas.windows(2).all(|w| w[1] > w[0]);
    let mut disjoint = true;
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            // distance on the product, fiber points on one meridian
            let d = (p.s - q.s).hypot(p.sigma - q.sigma);
            disjoint &= d >= p.radius + q.radius;
        }
    }
    let mesh_change = pts
        .iter()
        .map(|p| ((p.diameter_fine - p.diameter) / p.diameter_fine).abs())
        .fold(0.0, f64::max);
    Ok(PickAudit {
        curvature_pinched: pinched,
        r2_scalar_increasing: r2_increasing,
        lambda_increasing,
        disjoint,
        mesh_change,
        delta_formula_ok: delta_ok,
    })
}
