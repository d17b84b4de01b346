//! Feature banks, their on-disk formats, episode sampling and synthetic data.

mod bank;
mod episodes;
mod format;
mod manifest;
mod synthetic;

pub use bank::{FeatureBank, Split, ViewDescriptor};
pub use episodes::{sample_episode, EpisodeDraw, EpisodeSpec, SplitMix64};
pub use format::{decode_bank, encode_binary, encode_text, load_bank, save_bank, BankFormat};
pub use manifest::{Manifest, ManifestSplits};
pub use synthetic::{gen_synthetic, SyntheticBanks, SyntheticSpec, OUTLIER_SCALE};
