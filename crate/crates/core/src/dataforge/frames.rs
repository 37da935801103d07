//! The NMAG frame file.
//!
//! Little-endian throughout:
//!
//! ```text
//! "NMAG"  u32 version=1  u32 frame_count  u16 w  u16 channels=12
//! frame_count x { u64 meta_offset, w*w*12 f32 }
//! frame_count x metadata chunk (UTF-8 `key=value` lines, then a blank line)
//! u32 CRC32 of every preceding byte
//! ```
//!
//! `meta_offset` is the absolute position of the frame's metadata chunk.
//! The twelve channels are the six spin channels followed by the six field
//! channels, each laid out as in [`crate::channels`].

use std::fmt;
use std::path::Path;

use crate::channels;
use crate::error::{Error, FrameError, Result};
use crate::fields::FieldMap;
use crate::lattice::{Dims, SpinField};

pub const MAGIC: [u8; 4] = *b"NMAG";
pub const VERSION: u32 = 1;
pub const CHANNELS: usize = 12;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "val",
        })
    }
}

/// Provenance of one frame pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMeta {
    pub size: usize,
    pub sim: usize,
    pub iteration: usize,
    pub seed: u64,
    pub mask: String,
    pub h_ext: [f64; 3],
    pub ms: f64,
    pub cell_size_cm: f64,
    pub split: Split,
}

impl FrameMeta {
    fn to_text(&self) -> String {
        format!(
            "size={}\nsim={}\niteration={}\nseed={}\nmask={}\nh_ext={},{},{}\nms={}\ncell_size_cm={}\nsplit={}\n\n",
            self.size,
            self.sim,
            self.iteration,
            self.seed,
            self.mask,
            self.h_ext[0],
            self.h_ext[1],
            self.h_ext[2],
            self.ms,
            self.cell_size_cm,
            self.split
        )
    }

    fn parse(text: &str) -> std::result::Result<Self, FrameError> {
        let bad = |msg: String| FrameError::Layout(msg);
        let mut kv = std::collections::HashMap::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("metadata line `{line}`")))?;
            kv.insert(k, v);
        }
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| bad(format!("metadata key `{k}` missing")));
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> std::result::Result<T, FrameError> {
            v.parse().map_err(|_| FrameError::Layout(format!("metadata `{k}={v}`")))
        }
        let h: Vec<f64> = get("h_ext")?
            .split(',')
            .map(|v| num("h_ext", v))
            .collect::<std::result::Result<_, _>>()?;
        let h_ext: [f64; 3] = h.try_into().map_err(|_| bad("h_ext needs three components".into()))?;
        let split = match get("split")? {
            "train" => Split::Train,
            "val" => Split::Validation,
            other => return Err(bad(format!("split `{other}`"))),
        };
        Ok(Self {
            size: num("size", get("size")?)?,
            sim: num("sim", get("sim")?)?,
            iteration: num("iteration", get("iteration")?)?,
            seed: num("seed", get("seed")?)?,
            mask: get("mask")?.to_string(),
            h_ext,
            ms: num("ms", get("ms")?)?,
            cell_size_cm: num("cell_size_cm", get("cell_size_cm")?)?,
            split,
        })
    }
}

/// A `(m, H_demag)` training pair on a `w x w x 2` film.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    w: usize,
    data: Vec<f32>,
    pub meta: FrameMeta,
}

impl FramePair {
    pub fn new(spins: &SpinField, hdemag: &FieldMap, meta: FrameMeta) -> Result<Self> {
        let d = spins.dims();
        d.check(hdemag.dims())?;
        if d.nx != d.ny || d.nz != 2 {
            return Err(Error::InvalidParameter(format!("frames need a square 2-layer grid, got {d}")));
        }
        let data = channels::pack(spins.as_slice(), d)
            .into_iter()
            .chain(channels::pack(hdemag.as_slice(), d))
            .map(|v| v as f32)
            .collect();
        Ok(Self { w: d.nx, data, meta })
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.w, self.w, 2)
    }

    /// All twelve channels, spin channels first.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.w * self.w;
        &self.data[c * plane..(c + 1) * plane]
    }

    fn half(&self, second: bool) -> Vec<f64> {
        let n = self.data.len() / 2;
        let part = if second { &self.data[n..] } else { &self.data[..n] };
        part.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn spins(&self) -> SpinField {
        let d = self.dims();
        SpinField::from_vec(d, channels::unpack(&self.half(false), d).expect("frame sized at construction"))
            .expect("frame sized at construction")
    }

    pub fn hdemag(&self) -> FieldMap {
        let d = self.dims();
        FieldMap::from_vec(d, channels::unpack(&self.half(true), d).expect("frame sized at construction"))
            .expect("frame sized at construction")
    }
}

/// Serializes frames; all frames must share one `w`. An empty list gives a
/// valid file with `w = 0`.
pub fn encode_frames(frames: &[FramePair]) -> std::result::Result<Vec<u8>, FrameError> {
    let w = frames.first().map_or(0, |f| f.w);
    if let Some(f) = frames.iter().find(|f| f.w != w) {
        return Err(FrameError::Layout(format!("mixed frame sizes {w} and {}", f.w)));
    }
    let w16 = u16::try_from(w).map_err(|_| FrameError::Layout(format!("w = {w} exceeds u16")))?;
    let count = u32::try_from(frames.len()).map_err(|_| FrameError::Layout("too many frames".into()))?;
    let values = w * w * CHANNELS;
    let metas: Vec<String> = frames.iter().map(|f| f.meta.to_text()).collect();

    let frames_len = frames.len() * (8 + 4 * values);
    let mut out = Vec::with_capacity(HEADER_LEN + frames_len + metas.iter().map(String::len).sum::<usize>() + 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&w16.to_le_bytes());
    out.extend_from_slice(&(CHANNELS as u16).to_le_bytes());
    let mut meta_at = (HEADER_LEN + frames_len) as u64;
    for (f, m) in frames.iter().zip(&metas) {
        out.extend_from_slice(&meta_at.to_le_bytes());
        for v in &f.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        meta_at += m.len() as u64;
    }
    for m in &metas {
        out.extend_from_slice(m.as_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], FrameError> {
        let available = self.buf.len() - self.pos;
        if available < n {
            return Err(FrameError::Truncated {
                at: self.buf.len(),
                needed: n - available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> std::result::Result<u16, FrameError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> std::result::Result<u32, FrameError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, FrameError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses an NMAG file. Structure and truncation are checked before the
/// checksum, so a cut-off file reports truncation.
pub fn decode_frames(bytes: &[u8]) -> std::result::Result<Vec<FramePair>, FrameError> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let magic: [u8; 4] = c.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(FrameError::Version(version));
    }
    let count = c.u32()? as usize;
    let w = c.u16()? as usize;
    let channels = c.u16()? as usize;
    if channels != CHANNELS {
        return Err(FrameError::Layout(format!("{channels} channels, expected {CHANNELS}")));
    }
    let values = w * w * CHANNELS;
    let needed = HEADER_LEN as u64 + count as u64 * (8 + 4 * values as u64) + 4;
    if (bytes.len() as u64) < needed {
        return Err(FrameError::Truncated {
            at: bytes.len(),
            needed: (needed - bytes.len() as u64) as usize,
        });
    }
    let mut raw = Vec::with_capacity(count);
    for _ in 0..count {
        let offset = c.u64()?;
        let data: Vec<f32> = c
            .take(4 * values)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        raw.push((offset, data));
    }
    let mut metas = Vec::with_capacity(count);
    for (offset, _) in &raw {
        if *offset != c.pos as u64 {
            return Err(FrameError::Layout(format!("metadata offset {offset}, expected {}", c.pos)));
        }
        let rest = &bytes[c.pos..];
        let end = rest
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or(FrameError::Truncated {
                at: bytes.len(),
                needed: 2 + 4,
            })?;
        let text = std::str::from_utf8(c.take(end + 2)?).map_err(|_| FrameError::Layout("metadata is not UTF-8".into()))?;
        metas.push(text);
    }
    let body = c.pos;
    let stored = c.u32()?;
    if c.pos != bytes.len() {
        return Err(FrameError::Layout(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    let computed = crc32fast::hash(&bytes[..body]);
    if stored != computed {
        return Err(FrameError::Checksum { stored, computed });
    }
    raw.into_iter()
        .zip(metas)
        .map(|((_, data), text)| {
            Ok(FramePair {
                w,
                data,
                meta: FrameMeta::parse(text)?,
            })
        })
        .collect()
}

pub fn write_frames(frames: &[FramePair], path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_frames(frames)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_frames(path: impl AsRef<Path>) -> Result<Vec<FramePair>> {
    let bytes = std::fs::read(path)?;
    Ok(decode_frames(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{randomize_spins, GridSpec, Mask, Vec3};
    use proptest::prelude::*;

    fn meta(iteration: usize) -> FrameMeta {
        FrameMeta {
            size: 4,
            sim: 1,
            iteration,
            seed: 99,
            mask: "full".into(),
            h_ext: [120.5, -3.25, 0.0],
            ms: 1000.0,
            cell_size_cm: 3e-7,
            split: Split::Train,
        }
    }

    fn pair(seed: u64, iteration: usize) -> FramePair {
        let g = GridSpec::film(4);
        let m = randomize_spins(&g, &Mask::full(g.dims()), 1, seed).unwrap();
        let h = FieldMap::from_vec(g.dims(), m.as_slice().iter().map(|v| v * -1234.5).collect()).unwrap();
        FramePair::new(&m, &h, meta(iteration)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let frames = vec![pair(1, 0), pair(2, 7), pair(3, 9)];
        let bytes = encode_frames(&frames).unwrap();
        let back = decode_frames(&bytes).unwrap();
        assert_eq!(back, frames);
        assert_eq!(encode_frames(&back).unwrap(), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = encode_frames(&[pair(1, 0)]).unwrap();
        assert_eq!(&bytes[0..4], b"NMAG");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u16::from_le_bytes(bytes[12..14].try_into().unwrap()), 4);
        assert_eq!(u16::from_le_bytes(bytes[14..16].try_into().unwrap()), 12);
        let meta_at = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        assert_eq!(meta_at, 16 + 8 + 4 * 4 * 4 * 12);
        assert!(bytes[meta_at..].starts_with(b"size=4\n"));
    }

    #[test]
    fn empty_list_is_a_valid_file() {
        let bytes = encode_frames(&[]).unwrap();
        assert_eq!(bytes.len(), 20);
        assert!(decode_frames(&bytes).unwrap().is_empty());
    }

    #[test]
    fn damage_is_reported_distinctly() {
        let bytes = encode_frames(&[pair(1, 0), pair(2, 1)]).unwrap();
        for cut in [3, 10, 100, bytes.len() / 2, bytes.len() - 10, bytes.len() - 1] {
            assert!(matches!(decode_frames(&bytes[..cut]), Err(FrameError::Truncated { .. })), "cut {cut}");
        }
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(matches!(decode_frames(&b), Err(FrameError::BadMagic(_))));
        let mut b = bytes.clone();
        b[4] = 2;
        assert!(matches!(decode_frames(&b), Err(FrameError::Version(2))));
        let mut b = bytes.clone();
        b[40] ^= 0x10;
        assert!(matches!(decode_frames(&b), Err(FrameError::Checksum { .. })));
    }

    #[test]
    fn channels_are_spins_then_field() {
        let g = GridSpec::film(4);
        let m = SpinField::uniform(&Mask::full(g.dims()), Vec3::new(0.0, 1.0, 0.0)).unwrap();
        let mut h = FieldMap::zeros(g.dims());
        h.fill(Vec3::new(0.0, 0.0, -5.0));
        let f = FramePair::new(&m, &h, meta(0)).unwrap();
        assert!(f.channel(1).iter().all(|&v| v == 1.0));
        assert!(f.channel(4).iter().all(|&v| v == 1.0));
        assert!(f.channel(0).iter().all(|&v| v == 0.0));
        assert!(f.channel(8).iter().all(|&v| v == -5.0));
        assert!(f.channel(11).iter().all(|&v| v == -5.0));
        assert_eq!(f.spins(), m);
        assert_eq!(f.hdemag(), h);
    }

    #[test]
    fn rejects_non_film_grids() {
        let d = Dims::new(4, 3, 2);
        assert!(FramePair::new(&SpinField::zeros(d), &FieldMap::zeros(d), meta(0)).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_payloads_round_trip(vals in proptest::collection::vec(any::<f32>(), 2 * 3 * 3 * 12), it in any::<u32>()) {
            let frames: Vec<FramePair> = vals
                .chunks(3 * 3 * 12)
                .map(|c| FramePair { w: 3, data: c.to_vec(), meta: meta(it as usize) })
                .collect();
            let bytes = encode_frames(&frames).unwrap();
            let back = decode_frames(&bytes).unwrap();
            let bits = |f: &[FramePair]| f.iter().flat_map(|p| p.data.iter().map(|v| v.to_bits())).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back), bits(&frames));
            prop_assert_eq!(encode_frames(&back).unwrap(), bytes);
        }
    }
}
