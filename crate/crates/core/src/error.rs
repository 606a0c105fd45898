use crate::ode::OdeError;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{what} = {value} outside [{min}, {max}]")]
    Range {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invariant violated at r = {r}: {what}")]
    Invariant { what: String, r: f64 },
    #[error("integration failed: {0}")]
    Ode(#[from] OdeError),
    #[error("geodesic solve did not converge; best length bound {best_bound}")]
    GeodesicNotConverged { best_bound: f64 },
    #[error("window [{min}, {max}] too short: {reason}")]
    WindowTooShort { min: f64, max: f64, reason: String },
    #[error("perturbation is affine in s (max deviation {deviation:e}); it lies in the potential family")]
    AffinePerturbation { deviation: f64 },
    #[error("R·D² bounded on the scanned window (max {bound}, log-log slope {slope:.3}); no blow-up sequence exists")]
    BoundedCurvatureDiameter { bound: f64, slope: f64 },
    #[error("slow convergence of {what}: last bracket [{lo}, {hi}]")]
    SlowConvergence { what: String, lo: f64, hi: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
