//! Joint communication and sensing beamforming for a multi-user MIMO-OFDM
//! base station whose users also act as bistatic radar receivers.
//!
//! The crate evaluates per-target delay-Doppler CRLBs aggregated over the BS
//! and every user, combines them in an alpha-fair utility, penalizes per-user
//! rate shortfalls, and minimizes the result with Riemannian conjugate
//! gradient on the total-power sphere.

pub mod beams;
pub mod channel_io;
pub mod error;
pub mod gradients;
pub mod manifold;
pub mod metrics;
pub mod optimizer;
pub mod presets;
pub mod scenario;

pub use beams::{BeamDims, BeamformingState};
pub use error::{IsacError, Result};
pub use gradients::{
    fd_gradient_oracle, grad_alpha_fairness, grad_objective, grad_rate, objective_and_gradient, relative_error,
    GradientVector, FD_STEP,
};
pub use manifold::{project_tangent, real_inner, retract, riemannian_grad, SpherePoint, TangentVector};
pub use metrics::{
    alpha_fairness, crlb, evaluate, fim, objective, rate, rate_penalty, sensing_noise_var, sinr, xi, Evaluation,
    Fim2x2, ObjectiveParams, SensingMode,
};
pub use optimizer::{
    armijo_search, init_beams, minimize, optimize, polak_ribiere_beta, ArmijoConfig, InitStrategy, IterationRecord,
    OptimizerConfig, RunResult, Termination,
};
pub use scenario::{
    steering_vector, ChannelModel, ChannelSet, GainModel, Geometry, Scenario, ScenarioConfig, SensingLinkGains,
    SystemParams,
};
