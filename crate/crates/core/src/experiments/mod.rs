//! Monte Carlo campaigns checking the reduced equations against the SPDE.

mod error_scaling;
mod stability;
pub mod stats;

pub use error_scaling::{
    case2_reference_sde, moment_compare_case2, run_error_scaling, CampaignSetup, Case, DOMAIN_AMPLITUDE,
    DOMAIN_REFERENCE, DOMAIN_SPDE, EpsErrorStats, ErrorReport, MomentReport,
    MomentStats,
};
pub use ou_test::{ou_chain, ou_variance_test, OuEpsAgreement, OuReport, OuTestConfig, OuVarianceEstimate};
pub use stability::{estimate_lyapunov, stability_scan, LyapunovConfig, LyapunovEstimate, StabilityPoint, StabilityReport};
