//! Dataset construction, loaders and the imbalanced split protocol.

pub mod csv_io;
mod dataset;
pub mod idx;
pub mod split;
pub mod toy;

pub use csv_io::{load_csv, load_labeled_rows, read_csv, read_labeled_rows, save_csv, write_csv};
pub use dataset::Dataset;
pub use idx::load_idx;
pub use split::{stratified_holdout, subsample_imbalanced, ImbalanceSpec, Standardizer};
pub use toy::{make_gaussian_toy, make_gaussian_toy_split, ClassGeometry, Component, Spread, ToyGeometry};
