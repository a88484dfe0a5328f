//! Error-corrected margin-based cross-modal hashing.
//!
//! The crate is organised bottom-up:
//!
//! * [`gf2`], [`codes`]: GF(2) algebra, BCH construction and a bounded-distance
//!   decoding oracle.
//! * [`channel`]: BPSK/AWGN simulation and channel LLRs.
//! * [`bp`]: Tanner graphs and flooding sum-product decoding.
//! * [`necd`]: the unrolled, weighted BP decoder with training and BER evaluation.
//! * [`adcmh`]: the coupled image/attribute hash encoders and their objective.
//! * [`pipeline`]: alternating training of encoders and decoder.
//! * [`retrieval`]: Hamming ranking and MAP / NDCG evaluation.
//! * [`dataio`]: datasets, synthetic generation and text formats.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adcmh;
pub mod bp;
pub mod channel;
pub mod codes;
pub mod dataio;
pub mod error;
pub mod gf2;
pub mod mlp;
pub mod necd;
pub mod optim;
pub mod pipeline;
pub mod retrieval;

pub use error::{Error, Result};
