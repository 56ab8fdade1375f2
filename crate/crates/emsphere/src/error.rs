use thiserror::Error;

/// Error type shared by every module of the crate.
#[derive(Debug, Error)]
pub enum EmError {
    #[error("grid too small: need polynomial degree >= {min}, got {got}")]
    GridTooSmall { got: usize, min: usize },

    #[error("cannot parse sigma descriptor `{0}`")]
    SigmaParse(String),

    #[error("neglog offset must satisfy C > 1 so that s + C > 0 on [-1, 1], got C = {0}")]
    NeglogOffset(f64),

    #[error("sigma is not weight-normalized (weighted volume / V = {ratio:.12}); apply normalize_weight first")]
    SigmaNotNormalized { ratio: f64 },

    #[error("Kaehler positivity violated: metric ratio {min_ratio:.6e} at mu = {mu:.6}")]
    PositivityViolated { min_ratio: f64, mu: f64 },

    #[error("momentum profile not positive in the interior: psi = {psi:.6e} at mu = {mu:.6}")]
    DegenerateProfile { psi: f64, mu: f64 },

    #[error("no solution: obstruction integral is {obstruction:.6e} (must vanish)")]
    NoSolutionObstruction { obstruction: f64 },

    #[error("continuity method stalled at t = {t:.6} (osc = {osc:.4e}, obstruction = {obstruction:.4e})")]
    Stalled {
        t: f64,
        osc: f64,
        obstruction: f64,
        trace: Box<crate::em_solver::ContinuityTrace>,
    },

    #[error("heat flow broke down at s = {s:.6}: {reason}")]
    FlowBreakdown { s: f64, reason: String },

    #[error("heat flow time step unstable even after refinement to ds = {ds:.3e}")]
    StepInstability { ds: f64 },

    #[error("calibration failed: obstruction has no sign change on [{lo}, {hi}]")]
    CalibrationFailed { lo: f64, hi: f64 },

    #[error("trace too coarse for this diagnostic: {0}")]
    TraceTooCoarse(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, EmError>;
