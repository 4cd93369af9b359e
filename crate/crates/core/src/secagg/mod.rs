//! Shamir secret sharing and simulated secure summation.

mod codec;
mod field;
mod placement;
mod protocol;
mod shamir;

pub use codec::FixedPointCodec;
pub use field::{is_probable_prime, FieldElement, PrimeField, DEFAULT_PRIME};
pub use placement::{party_placement, EXTERNAL_PARTIES};
pub use protocol::{
    secure_aggregate, Endpoint, SecureAggregator, SessionDescriptor, Transcript, TranscriptRecord,
    TranscriptStats, MIN_CONTRIBUTORS,
};
pub use shamir::{
    detect_tampering, reconstruct, share, share_linear, share_with_coefficients, SecretShare,
    SharingParams, TamperCheck,
};
