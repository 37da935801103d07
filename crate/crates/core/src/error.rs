use thiserror::Error;

use crate::lattice::Dims;

/// Errors raised by the simulation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: Dims, actual: Dims },

    #[error("degenerate spin state: zero vector at occupied cell {cell}")]
    DegenerateSpin { cell: usize },

    #[error("demag kernel for {dims} needs about {required_bytes} bytes (limit {limit_bytes})")]
    GridTooLarge {
        dims: Dims,
        required_bytes: u64,
        limit_bytes: u64,
    },

    #[error("mask generation failed after {attempts} attempts")]
    MaskGeneration { attempts: usize },

    #[error("no reversal within sweep")]
    NoReversal,

    #[error("curve does not bracket H = 0")]
    NoZeroCrossing,

    #[error("curve schedules differ")]
    ScheduleMismatch,

    #[error("cooling stopped after {iterations} iterations with {n_vortex} vortices and {n_antiv} anti-vortices")]
    CoolingIncomplete {
        iterations: usize,
        n_vortex: usize,
        n_antiv: usize,
    },

    #[error(transparent)]
    Provider(#[from] ProviderError),

    #[error(transparent)]
    Frames(#[from] FrameError),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures of a demag provider. The simulation loop treats all of these as
/// fatal for the current run.
#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("cannot connect to provider at {addr}: {source}")]
    Connect {
        addr: String,
        source: std::io::Error,
    },

    #[error("provider timed out after {timeout_ms} ms")]
    Timeout { timeout_ms: u64 },

    #[error("provider connection lost: {0}")]
    ConnectionLost(String),

    #[error("malformed provider message: {0}")]
    Malformed(#[from] WireError),

    #[error("provider answered request {expected} with id {actual}")]
    IdMismatch { expected: u64, actual: u64 },

    #[error("provider returned a {actual_w}x{actual_w}x{actual_channels} frame for a {expected_w}x{expected_w}x{expected_channels} request")]
    FrameMismatch {
        expected_w: u16,
        expected_channels: u16,
        actual_w: u16,
        actual_channels: u16,
    },

    #[error("provider reported an error: {0}")]
    Remote(String),

    #[error("grid {0} is not representable as a square 2-layer frame")]
    UnsupportedGrid(Dims),

    #[error("provider output has wrong dimensions")]
    OutputDims,
}

/// Errors in the NMRQ/NMRS wire codec.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("unknown magic {0:02X?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    Version(u32),
    #[error("message truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("unknown dtype {0}")]
    DType(u8),
    #[error("unknown status {0}")]
    Status(u8),
    #[error("error message is not UTF-8")]
    Utf8,
    #[error("payload length {actual} does not match header ({expected})")]
    PayloadLength { expected: usize, actual: usize },
    #[error("{0} trailing bytes after message")]
    Trailing(usize),
    #[error("declared frame of {0} bytes exceeds the protocol limit")]
    Oversized(u64),
    #[error("unexpected {0} message")]
    Unexpected(&'static str),
}

/// Errors in the NMAG frame file format.
#[derive(Debug, Error)]
pub enum FrameError {
    #[error("not an NMAG file (magic {0:02X?})")]
    BadMagic([u8; 4]),
    #[error("unsupported NMAG version {0}")]
    Version(u32),
    #[error("NMAG file truncated at byte {at} (need {needed} more)")]
    Truncated { at: usize, needed: usize },
    #[error("NMAG checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("NMAG layout error: {0}")]
    Layout(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
