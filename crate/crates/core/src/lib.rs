//! Lossless model-driven compression that stays decodable when the decoder's
//! next-token probabilities differ from the encoder's by a bounded
//! multiplicative factor.
//!
//! A token is coded as the bucket its probability falls in, plus the shortest
//! prefix of a per-token random bit string that separates it from every token
//! the decoder might confuse it with. See [`codec`] for the construction and
//! [`analysis`] for the length model used to choose buckets.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alphabet;
pub mod analysis;
pub mod bits;
pub mod buckets;
pub mod codec;
pub mod container;
pub mod error;
pub mod predictor;
pub mod rational;

pub use alphabet::{shared_prefix_len, AlphabetKind, LongformTable, TokenAlphabet, TokenId};
pub use buckets::{calibrate_huffman, BucketCode, BucketPartition, CodeKind, PartitionSpec};
pub use codec::{
    decode_sequence, decode_token, encode_sequence, encode_token, CodecParams, DecodeOutcome, EncodedSequence,
    TokenStats,
};
pub use container::{Container, Header, ModelBinding};
pub use error::{Error, Result};
pub use predictor::{
    perturb, MismatchCertificate, NGramModel, PerturbMode, Perturbed, PredictiveDistribution, Predictor, ReplaySource,
};
pub use rational::Rational;
