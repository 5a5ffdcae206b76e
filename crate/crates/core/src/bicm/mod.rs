//! Bit-interleaved coded modulation: Gray QAM, interleaving and frame assembly.

mod constellation;
mod frame;
mod interleaver;

pub use constellation::Constellation;
pub use frame::{build_frame, FrameLayout, PilotBook, TxFrame};
pub use interleaver::Interleaver;
