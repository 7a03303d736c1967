//! On-disk RunSet cache.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "UAEC"  magic
//! u32     format version
//! u32     depth_cap
//! u64     step_cap
//! [32]    SHA-256 digest of the aux tape
//! u16+..  machine version string (length, UTF-8 bytes)
//! var+..  aux tape (bit length as varint, packed bytes MSB-first)
//! u64     record count
//! records:
//!   varint  prefix length in bits, then packed prefix bytes
//!   u8      status
//!   varint  output length in bits, then packed output bytes
//!   varint* emission profile, delta-encoded, one per output bit
//! u64     checksum: first 8 bytes of SHA-256 over everything above
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{RunRecord, RunSet};
use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::machine::{MachineConfig, Status, MACHINE_VERSION};

const MAGIC: &[u8; 4] = b"UAEC";
pub const CACHE_FORMAT_VERSION: u32 = 1;

/// SHA-256 over the aux tape's bit length (u64 LE) and its packed bytes.
pub fn aux_digest(aux: &Bits) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((aux.len() as u64).to_le_bytes());
    h.update(aux.to_bytes());
    h.finalize().into()
}

fn checksum(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Content-addressed file name for a configuration's cache.
pub fn cache_file_name(config: &MachineConfig) -> String {
    let version: String = MACHINE_VERSION
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!(
        "{version}-d{}-s{}-{}.uaec",
        config.depth_cap(),
        config.step_cap(),
        &hex(&aux_digest(config.aux_tape()))[..16]
    )
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn put_bits(out: &mut Vec<u8>, bits: &Bits) {
    put_varint(out, bits.len() as u64);
    out.extend_from_slice(&bits.to_bytes());
}

pub fn encode_runset(rs: &RunSet) -> Vec<u8> {
    let cfg = rs.config();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CACHE_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(cfg.depth_cap() as u32).to_le_bytes());
    out.extend_from_slice(&cfg.step_cap().to_le_bytes());
    out.extend_from_slice(&aux_digest(cfg.aux_tape()));
    let version = rs.machine_version().as_bytes();
    out.extend_from_slice(&(version.len() as u16).to_le_bytes());
    out.extend_from_slice(version);
    put_bits(&mut out, cfg.aux_tape());
    out.extend_from_slice(&(rs.records().len() as u64).to_le_bytes());
    for r in rs.records() {
        put_bits(&mut out, &r.consumed_prefix);
        out.push(r.status.to_byte());
        put_bits(&mut out, &r.output);
        let mut last = 0u32;
        for &e in &r.emission_profile {
            put_varint(&mut out, (e - last) as u64);
            last = e;
        }
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CacheCorrupt(format!("unexpected end of data at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.take(1)?[0];
            v |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::CacheCorrupt("varint too long".into()))
    }

    fn bits(&mut self) -> Result<Bits> {
        let len = self.varint()? as usize;
        let bytes = self.take(len.div_ceil(8))?;
        Ok(Bits::from_bytes(bytes, len))
    }
}

pub fn decode_runset(bytes: &[u8]) -> Result<RunSet> {
    if bytes.len() < MAGIC.len() + 8 || &bytes[..4] != MAGIC {
        return Err(Error::CacheCorrupt("missing UAEC magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    if checksum(body) != stored {
        return Err(Error::CacheCorrupt("checksum mismatch".into()));
    }

    let mut r = Reader { buf: body, pos: 4 };
    let format = r.u32()?;
    if format != CACHE_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: format!("format {CACHE_FORMAT_VERSION}"),
            found: format!("format {format}"),
        });
    }
    let depth_cap = r.u32()? as usize;
    let step_cap = r.u64()?;
    let digest: [u8; 32] = r.take(32)?.try_into().unwrap();
    let vlen = r.u16()? as usize;
    let version = std::str::from_utf8(r.take(vlen)?)
        .map_err(|_| Error::CacheCorrupt("machine version is not UTF-8".into()))?
        .to_string();
    if version != MACHINE_VERSION {
        return Err(Error::VersionMismatch {
            expected: MACHINE_VERSION.into(),
            found: version,
        });
    }
    let aux = r.bits()?;
    if aux_digest(&aux) != digest {
        return Err(Error::CacheCorrupt("aux tape does not match its digest".into()));
    }
    let config =
        MachineConfig::new(depth_cap, step_cap, aux).map_err(|e| Error::CacheCorrupt(format!("bad header: {e}")))?;

    let count = r.u64()? as usize;
    let mut records = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        let consumed_prefix = r.bits()?;
        let status = Status::from_byte(r.take(1)?[0]).ok_or_else(|| Error::CacheCorrupt("bad status byte".into()))?;
        let output = r.bits()?;
        let mut emission_profile = Vec::with_capacity(output.len());
        let mut last = 0u64;
        for _ in 0..output.len() {
            last += r.varint()?;
            emission_profile.push(u32::try_from(last).map_err(|_| Error::CacheCorrupt("emission overflow".into()))?);
        }
        records.push(RunRecord {
            consumed_prefix,
            status,
            output,
            emission_profile,
        });
    }
    if r.pos != body.len() {
        return Err(Error::CacheCorrupt("trailing bytes after records".into()));
    }
    Ok(RunSet::from_parts(config, records, version))
}

/// Writes atomically: a temp file in the destination directory, then rename.
pub fn save_runset(rs: &RunSet, dest: &Path) -> Result<()> {
    let bytes = encode_runset(rs);
    let dir = dest
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = dest.file_name().and_then(|n| n.to_str()).unwrap_or("runset");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dest)?;
    Ok(())
}

pub fn load_runset(src: &Path) -> Result<RunSet> {
    decode_runset(&fs::read(src)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::bits;
    use crate::enumerate::explore;

    fn sample() -> RunSet {
        explore(&MachineConfig::new(9, 30, bits("1011")).unwrap()).unwrap()
    }

    #[test]
    fn round_trip() {
        let rs = sample();
        assert_eq!(decode_runset(&encode_runset(&rs)).unwrap(), rs);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.uaec");
        save_runset(&rs, &path).unwrap();
        assert_eq!(load_runset(&path).unwrap(), rs);
    }

    #[test]
    fn wrong_machine_version() {
        let rs = sample();
        let other = RunSet::from_parts(rs.config().clone(), rs.records().to_vec(), "UTM-3/0".into());
        let err = decode_runset(&encode_runset(&other)).unwrap_err();
        assert!(matches!(err, Error::VersionMismatch { .. }), "{err}");
    }

    #[test]
    fn truncation_is_corruption() {
        let bytes = encode_runset(&sample());
        for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
            let err = decode_runset(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::CacheCorrupt(_)), "cut {cut}: {err}");
        }
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(decode_runset(&flipped), Err(Error::CacheCorrupt(_))));
    }

    #[test]
    fn file_names_are_keyed_by_aux() {
        let a = MachineConfig::unconditional(12, 200).unwrap();
        let b = a.with_aux(bits("1011"));
        assert_ne!(cache_file_name(&a), cache_file_name(&b));
        assert!(cache_file_name(&a).starts_with("UTM_3_1-d12-s200-"));
    }

    #[test]
    fn varints() {
        for v in [0u64, 1, 127, 128, 300, u32::MAX as u64, u64::MAX] {
            let mut out = Vec::new();
            put_varint(&mut out, v);
            let mut r = Reader { buf: &out, pos: 0 };
            assert_eq!(r.varint().unwrap(), v);
        }
    }
}
