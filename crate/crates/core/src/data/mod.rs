//! Shared numeric tables, scaling, and file ingestion.

mod matrix;
pub mod table;

pub use matrix::{
    class_counts, concat_columns, pad_columns, zscore_apply, zscore_fit, FeatureMatrix,
    LabeledDataset, SplitTag, ZScoreStats,
};
pub use table::{load_table, save_table, Table, TableFormat, TableOptions};
