//! Detection of device-identifier leakage in mobile application HTTP
//! traffic.
//!
//! The pipeline has five stages, each usable on its own:
//!
//! 1. **Labeling** ([`record`]): a payload check scans every record's
//!    request line, cookie, and body for a device profile's identifier
//!    values (raw and MD5/SHA1 hex digests, both cases) and splits traffic
//!    into suspicious and normal groups.
//! 2. **Distances** ([`distance`]): pairs of records are compared by
//!    destination (IP prefix, port, host edit distance) plus content
//!    (normalized compression distance over each field), summing to a
//!    packet distance in [0, 6].
//! 3. **Clustering** ([`cluster`]): group-average agglomerative clustering
//!    over a sample of suspicious records, flattened with a threshold cut.
//! 4. **Signatures** ([`signature`]): each cluster becomes a conjunction
//!    signature, the maximal byte tokens shared by all members; a record
//!    is detected when every token of some signature occurs in it.
//! 5. **Evaluation** ([`eval`]): TP/FN/FP percentages of a signature set
//!    against the rest of the dataset, over a range of sample sizes.
//!
//! [`corpus`] generates seeded synthetic ad-module traffic for
//! experiments, and [`config`] carries the knobs every stage echoes into
//! its outputs.

mod bytes;
pub mod cluster;
pub mod config;
pub mod corpus;
pub mod distance;
pub mod eval;
pub mod record;
pub mod signature;

pub use cluster::{agglomerate, cut, group_average, Dendrogram, FlatClusters, Merge};
pub use config::PipelineConfig;
pub use corpus::{generate_corpus, CorpusSpec, Template};
pub use distance::{
    content_distance, dest_distance, distance_matrix, host_distance, ip_distance, ncd,
    packet_distance, port_distance, DistanceMatrix,
};
pub use eval::{evaluate, reports_csv, run_experiment, sample_suspicious, EvalReport};
pub use record::{
    expand_identifier_variants, label_sensitive, parse_record, read_jsonl, write_jsonl,
    DeviceProfile, HttpRecord, SensitiveKind,
};
pub use signature::{
    common_tokens, detect, generate_signatures, matches, read_signatures, write_signatures,
    ConjunctionSignature, SignatureMetadata,
};
