//! Pairwise speech quality assessment from absolute quality predictions.
//!
//! A single network scores each utterance of a pair; the difference of the two
//! scores is squashed into a preference in (-1, 1). Training combines a MOS
//! regression loss with a preference loss, or uses the preference loss alone
//! when absolute labels are unavailable.

pub mod backbone;
pub mod datamodel;
pub mod error;
pub mod eval;
pub mod pairgen;
pub mod pipeline;
pub mod samos;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
