//! Binary time-tag files.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field          |
//! |--------|------|----------------|
//! | 0      | 4    | magic `BFTT`   |
//! | 4      | 2    | version (1)    |
//! | 6      | 1    | channel count  |
//! | 7      | 1    | reserved (0)   |
//! | 8      | 8    | seed           |
//! | 16     | 8    | config hash    |
//! | 24     | 8    | trigger count  |
//! | 32     | 9·n  | records: channel `u8`, timestamp `u64` |
//!
//! Timestamps never decrease within a channel.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::model::{Channel, TimeTag};

pub const MAGIC: [u8; 4] = *b"BFTT";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;
pub const RECORD_LEN: usize = 9;

#[derive(Debug, Error)]
pub enum TagFileError {
    #[error("bad magic {found:?}, expected \"BFTT\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported tag file version {0}")]
    UnsupportedVersion(u16),
    #[error("file ends inside the {len}-byte header after {available} bytes")]
    TruncatedHeader { len: usize, available: usize },
    #[error("truncated record at byte offset {offset}: {available} of {RECORD_LEN} bytes present")]
    TruncatedRecord { offset: u64, available: usize },
    #[error("unknown channel id {id} at byte offset {offset}")]
    UnknownChannel { id: u8, offset: u64 },
    #[error(
        "timestamp on channel {channel} goes backwards at record {record} (byte offset {offset}): {previous} ps then {found} ps"
    )]
    NonMonotone {
        channel: u8,
        record: u64,
        offset: u64,
        previous: u64,
        found: u64,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Metadata carried in the file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TagFileHeader {
    pub seed: u64,
    pub config_hash: u64,
    /// Laser periods covered by the acquisition.
    pub trigger_count: u64,
}

impl TagFileHeader {
    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&VERSION.to_le_bytes());
        b[6] = Channel::COUNT;
        b[8..16].copy_from_slice(&self.seed.to_le_bytes());
        b[16..24].copy_from_slice(&self.config_hash.to_le_bytes());
        b[24..32].copy_from_slice(&self.trigger_count.to_le_bytes());
        b
    }

    fn decode(b: &[u8; HEADER_LEN]) -> Result<Self, TagFileError> {
        let magic: [u8; 4] = b[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(TagFileError::BadMagic { found: magic });
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(TagFileError::UnsupportedVersion(version));
        }
        let word = |at: usize| u64::from_le_bytes(b[at..at + 8].try_into().unwrap());
        Ok(Self {
            seed: word(8),
            config_hash: word(16),
            trigger_count: word(24),
        })
    }
}

/// Per-channel monotonicity check shared by reader and writer.
#[derive(Debug, Default)]
struct Monotone {
    last: [Option<u64>; Channel::COUNT as usize],
}

impl Monotone {
    fn check(&mut self, tag: TimeTag, record: u64, offset: u64) -> Result<(), TagFileError> {
        let slot = &mut self.last[tag.channel as usize];
        if let Some(prev) = *slot {
            if tag.timestamp_ps < prev {
                return Err(TagFileError::NonMonotone {
                    channel: tag.channel as u8,
                    record,
                    offset,
                    previous: prev,
                    found: tag.timestamp_ps,
                });
            }
        }
        *slot = Some(tag.timestamp_ps);
        Ok(())
    }
}

/// Streaming writer; call [`finish`](Self::finish) to flush.
pub struct TagWriter<W: Write> {
    inner: W,
    order: Monotone,
    records: u64,
}

impl TagWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, header: TagFileHeader) -> Result<Self, TagFileError> {
        Self::new(BufWriter::new(File::create(path)?), header)
    }
}

impl<W: Write> TagWriter<W> {
    pub fn new(mut inner: W, header: TagFileHeader) -> Result<Self, TagFileError> {
        inner.write_all(&header.encode())?;
        Ok(Self {
            inner,
            order: Monotone::default(),
            records: 0,
        })
    }

    pub fn write(&mut self, tag: TimeTag) -> Result<(), TagFileError> {
        let offset = HEADER_LEN as u64 + self.records * RECORD_LEN as u64;
        self.order.check(tag, self.records, offset)?;
        let mut rec = [0u8; RECORD_LEN];
        rec[0] = tag.channel as u8;
        rec[1..].copy_from_slice(&tag.timestamp_ps.to_le_bytes());
        self.inner.write_all(&rec)?;
        self.records += 1;
        Ok(())
    }

    pub fn records_written(&self) -> u64 {
        self.records
    }

    pub fn finish(mut self) -> Result<W, TagFileError> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Streaming reader yielding one tag at a time in constant memory.
pub struct TagReader<R: Read> {
    inner: R,
    header: TagFileHeader,
    order: Monotone,
    records: u64,
    failed: bool,
}

impl TagReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, TagFileError> {
        Self::new(BufReader::with_capacity(1 << 16, File::open(path)?))
    }
}

/// Reads until `buf` is full or the stream ends; returns the bytes read.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

impl<R: Read> TagReader<R> {
    pub fn new(mut inner: R) -> Result<Self, TagFileError> {
        let mut h = [0u8; HEADER_LEN];
        let got = read_full(&mut inner, &mut h)?;
        if got >= 4 && h[..4] != MAGIC {
            return Err(TagFileError::BadMagic {
                found: h[..4].try_into().unwrap(),
            });
        }
        if got < HEADER_LEN {
            return Err(TagFileError::TruncatedHeader {
                len: HEADER_LEN,
                available: got,
            });
        }
        Ok(Self {
            header: TagFileHeader::decode(&h)?,
            inner,
            order: Monotone::default(),
            records: 0,
            failed: false,
        })
    }

    pub fn header(&self) -> TagFileHeader {
        self.header
    }

    fn next_record(&mut self) -> Result<Option<TimeTag>, TagFileError> {
        let offset = HEADER_LEN as u64 + self.records * RECORD_LEN as u64;
        let mut rec = [0u8; RECORD_LEN];
        let got = read_full(&mut self.inner, &mut rec)?;
        if got == 0 {
            return Ok(None);
        }
        if got < RECORD_LEN {
            return Err(TagFileError::TruncatedRecord { offset, available: got });
        }
        let channel = Channel::from_u8(rec[0]).ok_or(TagFileError::UnknownChannel { id: rec[0], offset })?;
        let tag = TimeTag::new(channel, u64::from_le_bytes(rec[1..].try_into().unwrap()));
        self.order.check(tag, self.records, offset)?;
        self.records += 1;
        Ok(Some(tag))
    }
}

impl<R: Read> Iterator for TagReader<R> {
    type Item = Result<TimeTag, TagFileError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_record() {
            Ok(t) => t.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Writes every tag to `path`.
pub fn write_tags<'a>(
    path: impl AsRef<Path>,
    header: TagFileHeader,
    tags: impl IntoIterator<Item = &'a TimeTag>,
) -> Result<u64, TagFileError> {
    let mut w = TagWriter::create(path, header)?;
    for &t in tags {
        w.write(t)?;
    }
    let n = w.records_written();
    w.finish()?;
    Ok(n)
}

/// Reads a whole file into memory.
pub fn read_tags(path: impl AsRef<Path>) -> Result<(TagFileHeader, Vec<TimeTag>), TagFileError> {
    let reader = TagReader::open(path)?;
    let header = reader.header();
    let tags = reader.collect::<Result<Vec<_>, _>>()?;
    Ok((header, tags))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes(tags: &[TimeTag]) -> Vec<u8> {
        let mut w = TagWriter::new(Vec::new(), TagFileHeader::default()).unwrap();
        for &t in tags {
            w.write(t).unwrap();
        }
        w.finish().unwrap()
    }

    #[test]
    fn layout_is_packed_little_endian() {
        let b = bytes(&[TimeTag::new(Channel::DutSync, 0x0102_0304_0506_0708)]);
        assert_eq!(b.len(), HEADER_LEN + RECORD_LEN);
        assert_eq!(&b[..4], b"BFTT");
        assert_eq!(&b[4..8], &[1, 0, 3, 0]);
        assert_eq!(&b[32..], &[1, 8, 7, 6, 5, 4, 3, 2, 1]);
    }

    #[test]
    fn empty_record_section_is_valid() {
        let b = bytes(&[]);
        let r = TagReader::new(&b[..]).unwrap();
        assert_eq!(r.count(), 0);
    }

    #[test]
    fn truncation_names_offset() {
        let mut b = bytes(&[TimeTag::new(Channel::Otdr, 5), TimeTag::new(Channel::Otdr, 6)]);
        b.truncate(b.len() - 3);
        let res: Result<Vec<_>, _> = TagReader::new(&b[..]).unwrap().collect();
        match res {
            Err(TagFileError::TruncatedRecord { offset, available }) => {
                assert_eq!(offset, 41);
                assert_eq!(available, 6);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_unknown_channel() {
        let mut b = bytes(&[TimeTag::new(Channel::Otdr, 5)]);
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(TagReader::new(&bad[..]), Err(TagFileError::BadMagic { .. })));
        b[32] = 9;
        let res: Result<Vec<_>, _> = TagReader::new(&b[..]).unwrap().collect();
        assert!(matches!(res, Err(TagFileError::UnknownChannel { id: 9, offset: 32 })));
    }

    #[test]
    fn non_monotone_rejected_on_read_and_write() {
        let mut w = TagWriter::new(Vec::new(), TagFileHeader::default()).unwrap();
        w.write(TimeTag::new(Channel::Otdr, 10)).unwrap();
        w.write(TimeTag::new(Channel::DutSync, 3)).unwrap();
        assert!(matches!(
            w.write(TimeTag::new(Channel::Otdr, 9)),
            Err(TagFileError::NonMonotone { record: 2, .. })
        ));

        let mut b = bytes(&[TimeTag::new(Channel::Otdr, 10), TimeTag::new(Channel::Otdr, 11)]);
        b[41 + 1..].copy_from_slice(&2u64.to_le_bytes());
        let res: Result<Vec<_>, _> = TagReader::new(&b[..]).unwrap().collect();
        assert!(matches!(
            res,
            Err(TagFileError::NonMonotone {
                record: 1,
                offset: 41,
                previous: 10,
                found: 2,
                ..
            })
        ));
    }

    #[test]
    fn header_round_trip() {
        let h = TagFileHeader {
            seed: 42,
            config_hash: 0xdead_beef,
            trigger_count: 1_000_000,
        };
        let b = TagWriter::new(Vec::new(), h).unwrap().finish().unwrap();
        assert_eq!(TagReader::new(&b[..]).unwrap().header(), h);
        assert!(matches!(
            TagReader::new(&b[..10]),
            Err(TagFileError::TruncatedHeader { available: 10, .. })
        ));
    }
}
