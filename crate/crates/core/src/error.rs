use thiserror::Error;

/// Errors surfaced by the simulation stack.
///
/// Exit-code mapping for the CLI: `Config` → 3, `Diverged` and
/// `Immeasurable` → 2, everything else → 2 as a generic runtime failure.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated its domain (non-positive length, bad mask, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Scenario configuration rejected during parse or validation.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// Iterative IK failed to reach the target.
    #[error("ik did not converge after {iterations} iterations (best residual {best_residual:.3e} m)")]
    IkConvergence { iterations: usize, best_residual: f64 },

    /// Target outside the conservative reachable sphere.
    #[error("target {target:?} outside reachable radius {radius:.3} m")]
    Unreachable { target: [f64; 3], radius: f64 },

    /// Trajectory generation aborted at a tick.
    #[error("reference generation failed at tick {tick}: {source}")]
    TickFailure {
        tick: usize,
        #[source]
        source: Box<Error>,
    },

    /// Plant state left sanity bounds during simulation.
    #[error("simulation diverged at sensor tick {tick}: {detail}")]
    Diverged { tick: u64, detail: String },

    /// Probe response too small to estimate an impedance from.
    #[error("immeasurable response: displacement amplitude {amplitude:.3e} below 1e-9")]
    Immeasurable { amplitude: f64 },

    /// Not enough probe periods in the log for a fit.
    #[error("insufficient data: {got} samples, need {needed} (>= 5 periods after a 2-period discard)")]
    InsufficientData { got: usize, needed: usize },

    /// Controller asked to step backwards in time.
    #[error("timestamp regression: dt = {dt} must be > 0")]
    TimestampRegression { dt: f64 },

    /// I/O while writing logs or reading configs.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
