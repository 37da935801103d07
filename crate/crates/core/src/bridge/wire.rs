//! NMRQ/NMRS/NMBY message codec.
//!
//! All integers little-endian; every message ends with a CRC32 of all
//! preceding bytes.
//!
//! ```text
//! request   "NMRQ" u32 version u64 id u16 w u16 channels u8 dtype  payload  u32 crc
//! response  "NMRS" u32 version u64 id u8 status=0 u16 w u16 channels u8 dtype  payload  u32 crc
//!           "NMRS" u32 version u64 id u8 status=1 u32 len  UTF-8 message  u32 crc
//! shutdown  "NMBY" u32 version  u32 crc
//! ```
//!
//! The payload holds `w * w * channels` values of the given dtype
//! (0 = f32, 1 = f64) in the layout of [`crate::channels`].

use std::io::{self, Read};

use crate::error::WireError;

pub const REQUEST_MAGIC: [u8; 4] = *b"NMRQ";
pub const RESPONSE_MAGIC: [u8; 4] = *b"NMRS";
pub const SHUTDOWN_MAGIC: [u8; 4] = *b"NMBY";
pub const VERSION: u32 = 1;
/// Channels of a two-layer film frame.
pub const FILM_CHANNELS: u16 = 6;
/// Upper bound on a single payload, guarding against hostile headers.
pub const MAX_PAYLOAD_BYTES: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DType {
    #[default]
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_code(c: u8) -> Result<Self, WireError> {
        match c {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            other => Err(WireError::DType(other)),
        }
    }

    pub fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Payload {
    pub fn dtype(&self) -> DType {
        match self {
            Payload::F32(_) => DType::F32,
            Payload::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_f64(values: &[f64], dtype: DType) -> Self {
        match dtype {
            DType::F32 => Payload::F32(values.iter().map(|&v| v as f32).collect()),
            DType::F64 => Payload::F64(values.to_vec()),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            Payload::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            Payload::F64(v) => v.clone(),
        }
    }
}

/// A `w x w x channels` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub w: u16,
    pub channels: u16,
    pub payload: Payload,
}

impl Frame {
    pub fn new(w: u16, channels: u16, payload: Payload) -> Result<Self, WireError> {
        let expected = frame_values(w, channels);
        if payload.len() != expected {
            return Err(WireError::PayloadLength {
                expected,
                actual: payload.len(),
            });
        }
        Ok(Self { w, channels, payload })
    }
}

fn frame_values(w: u16, channels: u16) -> usize {
    usize::from(w) * usize::from(w) * usize::from(channels)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Request { id: u64, frame: Frame },
    Response { id: u64, body: Result<Frame, String> },
    Shutdown,
}

fn put_frame_header(out: &mut Vec<u8>, f: &Frame) {
    out.extend_from_slice(&f.w.to_le_bytes());
    out.extend_from_slice(&f.channels.to_le_bytes());
    out.push(f.payload.dtype().code());
}

fn put_payload(out: &mut Vec<u8>, p: &Payload) {
    match p {
        Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        Payload::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
}

pub fn encode(msg: &Message) -> Vec<u8> {
    let mut out = Vec::new();
    match msg {
        Message::Request { id, frame } => {
            out.extend_from_slice(&REQUEST_MAGIC);
            out.extend_from_slice(&VERSION.to_le_bytes());
            out.extend_from_slice(&id.to_le_bytes());
            put_frame_header(&mut out, frame);
            put_payload(&mut out, &frame.payload);
        }
        Message::Response { id, body } => {
            out.extend_from_slice(&RESPONSE_MAGIC);
            out.extend_from_slice(&VERSION.to_le_bytes());
            out.extend_from_slice(&id.to_le_bytes());
            match body {
                Ok(frame) => {
                    out.push(0);
                    put_frame_header(&mut out, frame);
                    put_payload(&mut out, &frame.payload);
                }
                Err(text) => {
                    out.push(1);
                    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
                    out.extend_from_slice(text.as_bytes());
                }
            }
        }
        Message::Shutdown => {
            out.extend_from_slice(&SHUTDOWN_MAGIC);
            out.extend_from_slice(&VERSION.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Byte source for decoding: either a complete buffer or a stream that is
/// pulled from on demand. Everything consumed is retained for the checksum.
trait Source {
    fn take(&mut self, n: usize) -> Result<&[u8], WireError>;
    fn consumed(&self) -> &[u8];
}

struct SliceSource<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Source for SliceSource<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], WireError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(WireError::Truncated {
                needed: self.pos + n,
                available: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn consumed(&self) -> &[u8] {
        &self.bytes[..self.pos]
    }
}

struct StreamSource<'r, R> {
    reader: &'r mut R,
    buf: Vec<u8>,
    io_error: Option<io::Error>,
}

impl<R: Read> Source for StreamSource<'_, R> {
    fn take(&mut self, n: usize) -> Result<&[u8], WireError> {
        let start = self.buf.len();
        self.buf.resize(start + n, 0);
        let mut filled = 0;
        while filled < n {
            match self.reader.read(&mut self.buf[start + filled..]) {
                Ok(0) => break,
                Ok(k) => filled += k,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => {
                    self.buf.truncate(start + filled);
                    self.io_error = Some(e);
                    return Err(WireError::Truncated {
                        needed: start + n,
                        available: start + filled,
                    });
                }
            }
        }
        if filled < n {
            self.buf.truncate(start + filled);
            return Err(WireError::Truncated {
                needed: start + n,
                available: start + filled,
            });
        }
        Ok(&self.buf[start..])
    }

    fn consumed(&self) -> &[u8] {
        &self.buf
    }
}

fn u16_at(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn u32_at(b: &[u8]) -> u32 {
    u32::from_le_bytes(b[..4].try_into().expect("4 bytes"))
}

fn u64_at(b: &[u8]) -> u64 {
    u64::from_le_bytes(b[..8].try_into().expect("8 bytes"))
}

fn read_frame(src: &mut impl Source) -> Result<Frame, WireError> {
    let h = src.take(5)?;
    let (w, channels) = (u16_at(h), u16_at(&h[2..]));
    let dtype = DType::from_code(h[4])?;
    let n = frame_values(w, channels);
    let bytes = n as u64 * dtype.width() as u64;
    if bytes > MAX_PAYLOAD_BYTES {
        return Err(WireError::Oversized(bytes));
    }
    let raw = src.take(bytes as usize)?;
    let payload = match dtype {
        DType::F32 => Payload::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4"))).collect()),
        DType::F64 => Payload::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect()),
    };
    Ok(Frame { w, channels, payload })
}

fn decode_from(src: &mut impl Source) -> Result<Message, WireError> {
    let head = src.take(8)?;
    let magic: [u8; 4] = head[..4].try_into().expect("4 bytes");
    let version = u32_at(&head[4..]);
    if ![REQUEST_MAGIC, RESPONSE_MAGIC, SHUTDOWN_MAGIC].contains(&magic) {
        return Err(WireError::BadMagic(magic));
    }
    if version != VERSION {
        return Err(WireError::Version(version));
    }
    let msg = match magic {
        REQUEST_MAGIC => {
            let id = u64_at(src.take(8)?);
            Message::Request {
                id,
                frame: read_frame(src)?,
            }
        }
        RESPONSE_MAGIC => {
            let id = u64_at(src.take(8)?);
            let body = match src.take(1)?[0] {
                0 => Ok(read_frame(src)?),
                1 => {
                    let len = u32_at(src.take(4)?) as u64;
                    if len > MAX_PAYLOAD_BYTES {
                        return Err(WireError::Oversized(len));
                    }
                    let text = std::str::from_utf8(src.take(len as usize)?).map_err(|_| WireError::Utf8)?;
                    Err(text.to_string())
                }
                other => return Err(WireError::Status(other)),
            };
            Message::Response { id, body }
        }
        _ => Message::Shutdown,
    };
    let computed = crc32fast::hash(src.consumed());
    let stored = u32_at(src.take(4)?);
    if stored != computed {
        return Err(WireError::Checksum { stored, computed });
    }
    Ok(msg)
}

/// Decodes exactly one message occupying all of `bytes`.
pub fn decode(bytes: &[u8]) -> Result<Message, WireError> {
    let mut src = SliceSource { bytes, pos: 0 };
    let msg = decode_from(&mut src)?;
    match bytes.len() - src.pos {
        0 => Ok(msg),
        extra => Err(WireError::Trailing(extra)),
    }
}

/// Outcome of reading one message from a stream.
#[derive(Debug)]
pub enum ReadError {
    /// The peer closed the stream cleanly before a new message began.
    Closed,
    Io(io::Error),
    Wire(WireError),
}

/// Reads one message from a blocking stream.
pub fn read_message(reader: &mut impl Read) -> Result<Message, ReadError> {
    let mut src = StreamSource {
        reader,
        buf: Vec::new(),
        io_error: None,
    };
    match decode_from(&mut src) {
        Ok(m) => Ok(m),
        Err(e) => match src.io_error.take() {
            Some(io) => Err(ReadError::Io(io)),
            None if src.buf.is_empty() && matches!(e, WireError::Truncated { .. }) => Err(ReadError::Closed),
            None => Err(ReadError::Wire(e)),
        },
    }
}
