//! Comparison baselines and balanced-dataset export.

pub mod export;
pub mod smote;
pub mod variants;

pub use export::{export_balanced_dataset, BalancedExport, ExportManifest, SyntheticRange};
pub use smote::{balancing_counts, interpolate, nearest_neighbors, smote_oversample, SmoteConfig};
pub use variants::{train_variant, AblationVariant, Toggles, VariantOutcome};
