//! Black-box baselines over response similarity graphs and white-box
//! baselines over token log-probabilities.

mod eigen;
mod lexical;
mod spectral;
mod whitebox;

pub use eigen::{symmetric_eigen, EigenError, SpectralDecomposition};
pub use lexical::{lexsim_uncertainty, LcsF1, LexicalSimilarity};
pub use spectral::{
    deg_uncertainty, directional_entailment, ecc_uncertainty, eigv_uncertainty, laplacian, numsets,
    semantic_partition, similarity_matrix, SemanticPartition, SimilarityKind,
};
pub use whitebox::{cluster_entropy, mcse, msp, semantic_entropy};
