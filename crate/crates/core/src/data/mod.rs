//! Loading, preprocessing and generating input matrices.

pub mod io;
pub mod pca;
pub mod preprocess;
pub mod synthetic;

pub use io::{
    load_labeled, load_matrix, read_delimited, read_raw_binary, save_matrix, write_delimited,
    write_raw_binary, write_raw_binary_f32, LabeledMatrix, MatrixFormat, MATRIX_MAGIC,
};
pub use pca::{pca_fit, pca_fit_transform, PcaModel, PcaSolver, PCA_MAGIC};
pub use preprocess::{
    log1p_transform, normalize_rows, preprocess, standardize_clip, NormalizedRows,
    PreprocessConfig,
};
pub use synthetic::{gaussian_mixture, SyntheticConfig, SyntheticData};
