//! Binary array container: magic `DLAB`, u32 version, u32 array count, then
//! per array a u32 name length, UTF-8 name, u32 rank, u64 extents and
//! little-endian f64 data. All integers are little-endian.

use std::io::{Read, Write};

use super::Tensor;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DLAB";
pub const CHECKPOINT_VERSION: u32 = 1;

fn write_err(e: std::io::Error) -> Error {
    Error::Format(format!("checkpoint write failed: {e}"))
}

pub fn write_arrays<W: Write>(mut w: W, arrays: &[(String, Tensor)]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, t) in arrays {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(write_err)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("truncated checkpoint while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn read_arrays<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("checkpoint read failed: {e}")))?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad checkpoint magic, expected DLAB".into()));
    }
    let version = c.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = c.u32("array count")?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = c.u32("name length")? as usize;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| Error::Format("array name is not UTF-8".into()))?
            .to_string();
        let rank = c.u32("rank")? as usize;
        let shape = (0..rank)
            .map(|_| c.u64("extent").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let numel = numel.ok_or_else(|| Error::Format(format!("array `{name}` too large")))?;
        let raw = c.take(numel.saturating_mul(8), "array data")?;
        let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Format(format!("array `{name}`: {e}")))?;
        out.push((name, t));
    }
    if c.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes in checkpoint", bytes.len() - c.pos)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            values in proptest::collection::vec(any::<f64>(), 1..40),
            name in "[a-z.]{0,12}",
        ) {
            let t = Tensor::from_vec(values);
            let arrays = vec![(name, t), ("w".to_string(), Tensor::identity(3))];
            let mut buf = Vec::new();
            write_arrays(&mut buf, &arrays).unwrap();
            let back = read_arrays(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), 2);
            for ((n0, t0), (n1, t1)) in arrays.iter().zip(&back) {
                prop_assert_eq!(n0, n1);
                prop_assert_eq!(t0.shape(), t1.shape());
                let bits0: Vec<u64> = t0.data().iter().map(|v| v.to_bits()).collect();
                let bits1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(bits0, bits1);
            }
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut buf = Vec::new();
        write_arrays(&mut buf, &[("a".into(), Tensor::zeros(&[2, 2]))]).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_arrays(bad.as_slice()).unwrap_err().to_string().contains("magic"));
        let cut = &buf[..buf.len() - 3];
        assert!(read_arrays(cut).unwrap_err().to_string().contains("truncated"));
    }
}
