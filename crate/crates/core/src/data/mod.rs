//! Corpora, the DSQF feature format, manifests, normalization, label-weighted
//! sampling, speaker-disjoint splits and the synthetic corpus generator.

mod corpus;
mod format;
mod prep;
mod synth;

pub use corpus::{
    load_corpus, save_corpus, Corpus, CorpusCounts, FeatureSequence, Manifest, ManifestEntry, Provenance,
    Utterance, LABEL_MAX, LABEL_MIN, MANIFEST_FILE, TYPICAL_LABEL,
};
pub use format::{
    decode_features, encode_features, read_feature_file, write_feature_file, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use prep::{
    apply_normalization, label_bin, normalize_frames, sampler_weights, split, zscore_frames, NormalizeMode,
    SamplerWeights, WeightedSampler,
};
pub use synth::{gen_synthetic_corpus, gen_with_hidden_labels, SyntheticSpec};
