//! Rough composite-tape compaction and rank-reduction autoencoders.

pub mod cli;
pub mod compaction;
pub mod error;
pub mod latent;
pub mod metrics;
pub mod pipeline;
pub mod profile;
pub mod synth;

pub use error::{Error, Result};

// Training allocates and frees multi-megabyte activations every step; the
// system allocator hands those back to the kernel and page-faults them in again.
#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;
