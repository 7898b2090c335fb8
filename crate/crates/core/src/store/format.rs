//! Binary dump format, version 1. All integers and floats little-endian.
//!
//! ```text
//! "ACPD"  u32 version  u64 metadata_len  metadata (UTF-8 JSON)  u64 record_count
//! record: u32 id_len, id | u32 key_len, key | u8 evidence | u8 answer | f32 * L*K*d
//! ```

use std::io::{self, Read, Write};

use super::{validate_records, AnswerGroup, DumpError, DumpHeader, EvidenceGroup, InstanceRecord};

pub const DUMP_MAGIC: [u8; 4] = *b"ACPD";
pub const DUMP_VERSION: u32 = 1;

struct CountingWriter<W> {
    inner: W,
    written: u64,
}

impl<W: Write> CountingWriter<W> {
    fn put(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.inner.write_all(bytes)?;
        self.written += bytes.len() as u64;
        Ok(())
    }

    fn put_str(&mut self, s: &str) -> io::Result<()> {
        let len = u32::try_from(s.len())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "string longer than u32::MAX"))?;
        self.put(&len.to_le_bytes())?;
        self.put(s.as_bytes())
    }
}

/// Writes `header` and `records` in the dump format and returns the number of
/// bytes written. Everything is validated before the first byte goes out.
pub fn write_dump<W: Write>(header: &DumpHeader, records: &[InstanceRecord], sink: W) -> Result<u64, DumpError> {
    validate_records(header, records)?;
    let meta = serde_json::to_vec(header)?;

    let mut w = CountingWriter {
        inner: sink,
        written: 0,
    };
    w.put(&DUMP_MAGIC)?;
    w.put(&DUMP_VERSION.to_le_bytes())?;
    w.put(&(meta.len() as u64).to_le_bytes())?;
    w.put(&meta)?;
    w.put(&(records.len() as u64).to_le_bytes())?;

    let mut payload = Vec::with_capacity(header.values_per_record() * 4);
    for r in records {
        w.put_str(&r.instance_id)?;
        w.put_str(&r.question_key)?;
        w.put(&[r.evidence_group.code(), r.answer_group.code()])?;
        payload.clear();
        for v in &r.activations {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        w.put(&payload)?;
    }
    Ok(w.written)
}

fn fill<R: Read>(src: &mut R, buf: &mut [u8]) -> Result<bool, io::Error> {
    match src.read_exact(buf) {
        Ok(()) => Ok(true),
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Ok(false),
        Err(e) => Err(e),
    }
}

fn read_array<R: Read, const N: usize>(src: &mut R, what: &str) -> Result<[u8; N], DumpError> {
    let mut buf = [0u8; N];
    if !fill(src, &mut buf)? {
        return Err(DumpError::Truncated(what.to_string()));
    }
    Ok(buf)
}

/// Reads a full dump, validating the header and every record.
pub fn read_dump<R: Read>(mut source: R) -> Result<(DumpHeader, Vec<InstanceRecord>), DumpError> {
    let src = &mut source;
    let mut magic = [0u8; 4];
    let got = read_prefix(src, &mut magic)?;
    if got < 4 || magic != DUMP_MAGIC {
        return Err(DumpError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(read_array(src, "version")?);
    if version != DUMP_VERSION {
        return Err(DumpError::UnsupportedVersion(version));
    }
    let meta_len = u64::from_le_bytes(read_array(src, "metadata length")?);
    let meta = read_vec(src, meta_len).ok_or_else(|| DumpError::Truncated("metadata".into()))??;
    let header: DumpHeader = serde_json::from_slice(&meta)?;
    header.validate()?;
    let count = u64::from_le_bytes(read_array(src, "record count")?);

    let n_values = header.values_per_record();
    let mut payload = vec![0u8; n_values * 4];
    // Cap the pre-allocation; a corrupt count should fail on truncation, not OOM.
    let mut records = Vec::with_capacity(count.min(1 << 16) as usize);
    for index in 0..count {
        let truncated = || DumpError::TruncatedRecord { index };
        let instance_id = read_string(src, index)?;
        let question_key = read_string(src, index)?;
        let mut codes = [0u8; 2];
        if !fill(src, &mut codes)? {
            return Err(truncated());
        }
        let evidence_group = EvidenceGroup::from_code(codes[0]).ok_or(DumpError::InvalidCode {
            field: "evidence_group",
            code: codes[0],
            index,
        })?;
        let answer_group = AnswerGroup::from_code(codes[1]).ok_or(DumpError::InvalidCode {
            field: "answer_group",
            code: codes[1],
            index,
        })?;
        if !fill(src, &mut payload)? {
            return Err(truncated());
        }
        let activations = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        records.push(InstanceRecord {
            instance_id,
            question_key,
            evidence_group,
            answer_group,
            activations,
        });
    }

    let mut rest = Vec::new();
    src.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(DumpError::TrailingBytes(rest.len()));
    }
    validate_records(&header, &records)?;
    Ok((header, records))
}

fn read_prefix<R: Read>(src: &mut R, buf: &mut [u8]) -> Result<usize, io::Error> {
    let mut got = 0;
    while got < buf.len() {
        match src.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

/// `None` on EOF before `len` bytes.
fn read_vec<R: Read>(src: &mut R, len: u64) -> Option<Result<Vec<u8>, io::Error>> {
    let mut buf = Vec::new();
    match src.take(len).read_to_end(&mut buf) {
        Ok(n) if (n as u64) < len => None,
        Ok(_) => Some(Ok(buf)),
        Err(e) => Some(Err(e)),
    }
}

fn read_string<R: Read>(src: &mut R, index: u64) -> Result<String, DumpError> {
    let mut len = [0u8; 4];
    if !fill(src, &mut len)? {
        return Err(DumpError::TruncatedRecord { index });
    }
    let bytes = match read_vec(src, u32::from_le_bytes(len) as u64) {
        None => return Err(DumpError::TruncatedRecord { index }),
        Some(r) => r?,
    };
    String::from_utf8(bytes).map_err(|_| DumpError::Utf8 { index })
}
