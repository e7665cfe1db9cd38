//! Group key distribution over GF(p) and a deterministic harness for attacking it.
//!
//! The scheme transports per-group session keys inside polynomials that every
//! member reconstructs from sampled points. Its authentication story is known
//! to be broken in several independent ways; this crate implements the scheme
//! faithfully and then demonstrates each break as a scripted, replayable
//! network session:
//!
//! * group-tag collisions that abort key distribution for honest rosters,
//! * an insider recovering another member's long-term secret,
//! * undetected forgery of the broadcast group list,
//! * undetected forgery of delivered points plus the hashed key list.
//!
//! Everything is deterministic given a seed: field sampling, protocol runs,
//! adversary scripts, and batch trials all derive their randomness from
//! labelled ChaCha20 streams, so any transcript can be regenerated and
//! verified byte for byte.

pub mod attacks;
pub mod field;
pub mod netsim;
pub mod poly;
pub mod protocol;
pub mod scenario;
pub mod trials;

pub use field::{FieldElement, FieldError, FieldParams};
pub use poly::{LinearSystem, Point, PolyError, Polynomial};
