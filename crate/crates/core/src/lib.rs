//! Random wave functions in thermal equilibrium.
//!
//! The canonical ensemble at inverse temperature beta assigns the density
//! matrix rho_beta = e^{-beta H}/Z to a system with Hamiltonian H. This
//! crate samples wave functions whose distribution is the GAP measure built
//! over rho_beta: a Gaussian field with covariance rho_beta (G), adjusted
//! by the squared norm (GA), and projected to the unit sphere (GAP). For
//! exactly diagonalizable models (circle, Dirichlet box, finite custom
//! spectra) it then measures the regularity of the sampled functions:
//! Sobolev and exponentially weighted coefficient sums, smoothness
//! condition sums, increment scaling of the field, membership in the
//! domains of powers of H, and the Bohmian velocity fields the samples
//! generate.

pub mod bohmian;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod io;
pub mod rng;
pub mod sampler;
pub mod spectral;

pub use bohmian::{
    evolve_coefficients, integrate_trajectories, integrate_trajectory, velocity, velocity_sample,
    IntegrationTolerances, Trajectory, TrajectoryState, TrajectoryStatus, VelocitySample,
};
pub use diagnostics::{
    analytic_vector_expectation, analytic_vector_sum, domain_power_sum, exp_weighted_sum,
    expected_sum, gaussian_modulus_mc, gaussian_modulus_moment, holder_fit, increment_variance,
    sobolev_sum, spectral_domain_sum, theorem1_condition, theorem1_condition_analytic,
    AnalyticVectorReport, DiagnosticEntry, DiagnosticsReport, HolderEstimate,
};
pub use error::{GapError, Result};
pub use field::{
    energy_from_fourier, evaluate, evaluate_complex, evaluate_derivative, evaluate_request,
    fourier_from_energy, project_to_sector, symmetrize, EvaluationRequest, FourierImage,
    StripEvaluation,
};
pub use io::{
    read_trajectory, read_wave_function, sha256_hex, spectrum_document, spectrum_hash,
    spectrum_json, trajectory_csv, wave_function_csv, ModeRecord, SpectrumDocument,
    TrajectoryFooter, WaveFunctionHeader,
};
pub use rng::{RandomSeed, RNG_ALGORITHM};
pub use sampler::{
    draw_sample, estimate_covariance, sample_g, sample_ga, sample_gap, CovarianceEstimate,
    DiagonalEstimate, OffDiagonalEstimate, Provenance, SamplerKind, WaveFunction,
};
pub use spectral::{
    build_box_model, build_circle_model, build_custom_model, thermalize, thermalize_with,
    CustomEigenfunctions, CutoffPolicy, KernelValue, ModeIndex, ModelKind, SpectralModel, Symmetry,
    ThermalMode, ThermalSpectrum,
};
