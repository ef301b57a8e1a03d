//! Private linear regression: DP-SGD with a Rényi-DP accountant, PAC-privacy
//! anisotropic output perturbation, and the benchmark harness comparing them
//! at matched membership-inference posterior success rates.

pub mod bench;
pub mod dataio;
pub mod dp;
pub mod pac;
pub mod regression;
