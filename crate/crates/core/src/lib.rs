//! Signed graph archetypal autoencoder.
//!
//! Nodes of a signed network are embedded as convex combinations of `K`
//! learned archetypes, once for the positive ties (`Z`, with random effects
//! `gamma`) and once for the negative ties (`W`, with random effects
//! `delta`). A pair `(i, j)` with observed integer weight `y` is scored by a
//! Skellam likelihood whose two rates are
//!
//! ```text
//! lambda_pos = exp(gamma_i + gamma_j + <A z_i, A z_j>)
//! lambda_neg = exp(delta_i + delta_j + <A w_i, A w_j>)
//! ```
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: signed graphs, edge-list IO, sign-stratified link splits.
//! - [`skellam`]: log-Bessel, Skellam log-PMF and the pairwise negative
//!   log-likelihood with analytic rate derivatives.
//! - [`autodiff`]: a small reverse-mode tape over dense and sparse matrices.
//! - [`spectral`]: signed normalized Laplacian and Lanczos eigen-features.
//! - [`synth`]: planted 1-level / 2-level polarized network generators.
//! - [`model`]: GCN encoders, archetypal decoder, sampled training loop.
//! - [`eval`]: link-prediction scores, AUC-ROC, AUC-PR and NMI.
//! - [`viz`]: adjacency heatmaps and circular membership plots.
//!
//! A short end-to-end run:
//!
//! ```
//! use sgaae::model::{train, TrainConfig};
//! use sgaae::spectral::{node_features, FeatureConfig};
//! use sgaae::synth::GeneratorConfig;
//!
//! let planted = GeneratorConfig::two_community(40, 7).generate().unwrap();
//! let feats = node_features(&planted.graph, &FeatureConfig { dim: 8, ..Default::default() }).unwrap();
//! let cfg = TrainConfig { archetypes: 2, epochs: 20, hidden: 16, ..TrainConfig::default() };
//! let fit = train(&planted.graph, &feats, &cfg).unwrap();
//! assert_eq!(fit.loss_trace.len(), 20);
//! ```

pub mod autodiff;
pub mod eval;
pub mod graph;
pub mod model;
pub mod skellam;
pub mod sparse;
pub mod spectral;
pub mod synth;
pub mod textio;
pub mod viz;

pub use graph::{EdgeSplit, SignedGraph};
pub use model::{ModelParameters, NodeRepresentation, TrainedModel};
pub use skellam::SkellamRates;

// The guide's code listings are compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/signed-graphs.md")]
    mod signed_graphs {}
    #[doc = include_str!("../../../book/src/skellam.md")]
    mod skellam {}
    #[doc = include_str!("../../../book/src/archetypes.md")]
    mod archetypes {}
    #[doc = include_str!("../../../book/src/encoder.md")]
    mod encoder {}
    #[doc = include_str!("../../../book/src/spectral.md")]
    mod spectral {}
    #[doc = include_str!("../../../book/src/polarization.md")]
    mod polarization {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
}
