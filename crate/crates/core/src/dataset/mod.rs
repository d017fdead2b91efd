//! Sample types, gRefCOCO-style file I/O, the synthetic scene generator and
//! corpus statistics.

pub mod io;
mod sample;
mod stats;
pub mod synthetic;

pub use io::{load_dataset, load_dataset_named, load_image, write_dataset, DatasetFiles, RgbImage};
pub use sample::{
    classify_sample, AnnId, GrexSample, ImageId, InstanceRecord, RefId, SampleKind, Split, TaxonomyCounts,
};
pub use stats::{sample_vocab_stats, vocab_stats, WordFrequency};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticDataset};
