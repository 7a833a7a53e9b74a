//! OFDM modem, synchronization sequences, RACH preambles and RSRP estimation.

mod grid;
mod ofdm;
mod rach;
mod rsrp;
mod ssb;

pub use grid::ResourceGrid;
pub use ofdm::{OfdmModem, OfdmSymbolBlock};
pub use rach::{
    build_rach_signal, gen_zc, Detection, PreambleBank, PreambleDetector, ZcPreamble,
    DEFAULT_DETECTION_THRESHOLD, N_PREAMBLES, RACH_CP_LEN, RACH_IFFT_SIZE, RACH_SIGNAL_LEN,
    SHIFT_SPACING, ZC_LEN,
};
pub use rsrp::{estimate_rsrp, sample_rsrp, Rsrp};
pub use ssb::{pss_sequence, sss_sequence, SsbBlock, PSS_LEN};
