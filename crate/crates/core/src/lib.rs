//! Multilevel polar-coded space-shift keying.
//!
//! Building blocks for designing and simulating SSK links over i.i.d.
//! Rayleigh MIMO channels with one polar code per label bit level:
//!
//! * [`capacity`]: Monte-Carlo bit-level ergodic capacities and design-SNR search.
//! * [`construction`]: reliability estimation, capacity-rule rate allocation and
//!   segregation of a mother code into component codes.
//! * [`polar`]: encoder and successive-cancellation decoder.
//! * [`ssk_channel`]: label map, channel, and soft demappers.
//! * [`mlc_link`]: multilevel (multi-stage decoding) and BICM transceivers.
//! * [`sim`]: experiment drivers behind the `mlc-ssk` binary.
//!
//! Monte-Carlo work is split into units with their own counter-addressed
//! random streams, so every result is reproducible from its seed whatever
//! the number of worker threads (or with the `parallel` feature disabled).

pub mod capacity;
pub mod construction;
pub mod error;
pub mod mlc_link;
pub mod par;
pub mod polar;
pub mod rng;
pub mod sim;
pub mod ssk_channel;

pub use error::{Error, Result};
