//! Binary tag file format.
//!
//! ```text
//! header (16 bytes)
//!   0..4   magic "QTAG"
//!   4..6   version        u16 LE
//!   6..8   channel count  u16 LE
//!   8..16  record count   u64 LE
//! records (9 bytes each)
//!   0      channel        u8
//!   1..9   timestamp (ps) u64 LE
//! ```
//!
//! The run duration is not stored; a stream read back from disk reports
//! the timestamp of its last tag (or 0) as its duration.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::tags::{Channel, TagStream, TimeTag};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"QTAG";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
pub const RECORD_LEN: usize = 9;

/// Writes the stream and returns the number of bytes written.
pub fn write_tags<W: Write>(stream: &TagStream, mut dst: W) -> Result<u64> {
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    header[4..6].copy_from_slice(&VERSION.to_le_bytes());
    header[6..8].copy_from_slice(&(Channel::ALL.len() as u16).to_le_bytes());
    header[8..16].copy_from_slice(&(stream.len() as u64).to_le_bytes());
    dst.write_all(&header)?;

    let mut record = [0u8; RECORD_LEN];
    for tag in stream.tags() {
        record[0] = tag.channel.id();
        record[1..9].copy_from_slice(&tag.t.to_le_bytes());
        dst.write_all(&record)?;
    }
    dst.flush()?;
    Ok((HEADER_LEN + RECORD_LEN * stream.len()) as u64)
}

pub fn read_tags<R: Read>(mut src: R) -> Result<TagStream> {
    let mut header = [0u8; HEADER_LEN];
    src.read_exact(&mut header).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::MalformedHeader("file shorter than 16-byte header".into()),
        _ => Error::Io(e),
    })?;
    if &header[0..4] != MAGIC {
        return Err(Error::MalformedHeader(format!("bad magic {:?}", &header[0..4])));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(Error::MalformedHeader(format!("unsupported version {version}")));
    }
    let channel_count = u16::from_le_bytes([header[6], header[7]]);
    if channel_count == 0 || channel_count as usize > Channel::ALL.len() {
        return Err(Error::MalformedHeader(format!(
            "unsupported channel count {channel_count}"
        )));
    }
    let records = u64::from_le_bytes(header[8..16].try_into().expect("8-byte slice"));

    // Cap the up-front allocation; a corrupt count must not OOM us.
    let mut tags = Vec::with_capacity(records.min(1 << 24) as usize);
    let mut record = [0u8; RECORD_LEN];
    for index in 0..records {
        src.read_exact(&mut record).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::TruncatedRecord {
                index,
                expected: records,
            },
            _ => Error::Io(e),
        })?;
        let id = record[0];
        let channel = Channel::from_id(id)
            .filter(|_| (id as u16) < channel_count)
            .ok_or_else(|| Error::MalformedHeader(format!("record {index} has channel {id}")))?;
        let t = u64::from_le_bytes(record[1..9].try_into().expect("8-byte slice"));
        tags.push(TimeTag::new(channel, t));
    }
    let duration = tags.last().map_or(0, |tag| tag.t);
    Ok(TagStream::new(tags, duration)?)
}

pub fn write_tag_file(stream: &TagStream, path: impl AsRef<Path>) -> Result<u64> {
    let file = File::create(path)?;
    write_tags(stream, BufWriter::new(file))
}

pub fn read_tag_file(path: impl AsRef<Path>) -> Result<TagStream> {
    let file = File::open(path)?;
    read_tags(BufReader::new(file))
}
