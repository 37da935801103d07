//! Out-of-process demag providers over the NMRQ/NMRS protocol.
//!
//! The client side is [`ExternalProvider`], a [`DemagProvider`] that ships the
//! spin frame of a square two-layer film to a server and blocks for the
//! field frame. The server side is [`Server`] plus a [`Handler`]; the crate
//! ships an echo handler and an FFT-backed one that mirrors the in-process
//! provider, so the client path can be checked against a known answer.
//! Field frames carry H_demag in Oe.

mod server;
pub mod wire;

use std::io::{self, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use crate::channels;
use crate::error::{ProviderError, Result, WireError};
use crate::fields::{DemagProvider, FieldMap};
use crate::lattice::{Dims, SpinField};

pub use server::{send_shutdown, EchoHandler, FftHandler, Handler, Server, ServerHandle};
pub use wire::{DType, Frame, Message, Payload};

pub const ADDR_ENV: &str = "NEURALMAG_PROVIDER_ADDR";
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderEndpoint {
    pub addr: String,
    pub timeout_ms: u64,
    pub dtype: DType,
}

impl ProviderEndpoint {
    pub fn new(addr: impl Into<String>) -> Self {
        Self {
            addr: addr.into(),
            timeout_ms: DEFAULT_TIMEOUT_MS,
            dtype: DType::F32,
        }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(ADDR_ENV).ok().filter(|a| !a.is_empty()).map(Self::new)
    }
}

/// Checks that `dims` is a square two-layer film and returns its width.
pub fn film_width(dims: Dims) -> Result<u16, ProviderError> {
    match u16::try_from(dims.nx) {
        Ok(w) if dims.nx == dims.ny && dims.nz == 2 && w > 0 => Ok(w),
        _ => Err(ProviderError::UnsupportedGrid(dims)),
    }
}

/// A demag provider served by another process.
///
/// One request is in flight at a time. Any failure leaves the output buffer
/// untouched and poisons the connection, so later calls fail fast.
#[derive(Debug)]
pub struct ExternalProvider {
    endpoint: ProviderEndpoint,
    stream: TcpStream,
    next_id: u64,
    broken: bool,
}

fn io_error(e: io::Error, timeout_ms: u64) -> ProviderError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => ProviderError::Timeout { timeout_ms },
        _ => ProviderError::ConnectionLost(e.to_string()),
    }
}

impl ExternalProvider {
    pub fn connect(endpoint: ProviderEndpoint) -> Result<Self, ProviderError> {
        let connect_err = |source| ProviderError::Connect {
            addr: endpoint.addr.clone(),
            source,
        };
        let timeout = Duration::from_millis(endpoint.timeout_ms.max(1));
        let addr = endpoint
            .addr
            .to_socket_addrs()
            .map_err(connect_err)?
            .next()
            .ok_or_else(|| connect_err(io::Error::new(io::ErrorKind::NotFound, "address resolved to nothing")))?;
        let stream = TcpStream::connect_timeout(&addr, timeout).map_err(connect_err)?;
        stream.set_read_timeout(Some(timeout)).map_err(connect_err)?;
        stream.set_write_timeout(Some(timeout)).map_err(connect_err)?;
        stream.set_nodelay(true).map_err(connect_err)?;
        Ok(Self {
            endpoint,
            stream,
            next_id: 1,
            broken: false,
        })
    }

    pub fn endpoint(&self) -> &ProviderEndpoint {
        &self.endpoint
    }

    /// Sends one frame and waits for the matching response frame.
    pub fn request_frame(&mut self, frame: Frame) -> Result<Frame, ProviderError> {
        if self.broken {
            return Err(ProviderError::ConnectionLost("connection unusable after an earlier failure".into()));
        }
        let result = self.exchange(frame);
        if result.is_err() {
            self.broken = true;
        }
        result
    }

    fn exchange(&mut self, frame: Frame) -> Result<Frame, ProviderError> {
        let timeout_ms = self.endpoint.timeout_ms;
        let id = self.next_id;
        self.next_id += 1;
        let (w, channels) = (frame.w, frame.channels);
        let bytes = wire::encode(&Message::Request { id, frame });
        self.stream.write_all(&bytes).map_err(|e| io_error(e, timeout_ms))?;
        let reply = wire::read_message(&mut self.stream).map_err(|e| match e {
            wire::ReadError::Closed => ProviderError::ConnectionLost("closed by provider".into()),
            wire::ReadError::Io(e) => io_error(e, timeout_ms),
            wire::ReadError::Wire(e) => ProviderError::Malformed(e),
        })?;
        let (rid, body) = match reply {
            Message::Response { id, body } => (id, body),
            Message::Request { .. } => return Err(WireError::Unexpected("request").into()),
            Message::Shutdown => return Err(WireError::Unexpected("shutdown").into()),
        };
        if rid != id {
            return Err(ProviderError::IdMismatch {
                expected: id,
                actual: rid,
            });
        }
        let out = body.map_err(ProviderError::Remote)?;
        if out.w != w || out.channels != channels {
            return Err(ProviderError::FrameMismatch {
                expected_w: w,
                expected_channels: channels,
                actual_w: out.w,
                actual_channels: out.channels,
            });
        }
        Ok(out)
    }
}

impl DemagProvider for ExternalProvider {
    fn demag_into(&mut self, spins: &SpinField, out: &mut FieldMap) -> Result<()> {
        let dims = spins.dims();
        let w = film_width(dims)?;
        if out.dims() != dims {
            return Err(ProviderError::OutputDims.into());
        }
        let payload = Payload::from_f64(&channels::pack(spins.as_slice(), dims), self.endpoint.dtype);
        let frame = Frame::new(w, wire::FILM_CHANNELS, payload).map_err(ProviderError::from)?;
        let reply = self.request_frame(frame)?;
        let h = channels::unpack(&reply.payload.to_f64(), dims)?;
        out.as_mut_slice().copy_from_slice(&h);
        Ok(())
    }

    fn label(&self) -> &str {
        "external"
    }
}
