//! Bilayer protograph LDPC codes for half-duplex relay channels.

pub mod channel;
pub mod codec;
pub mod gf2;
pub mod lifting;
pub mod pexit;
pub mod protograph;
pub mod relay;
pub mod search;
pub mod sparse;
