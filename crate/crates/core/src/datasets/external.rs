//! `DLDS` record files.
//!
//! Layout, little-endian: magic `DLDS`, u32 version, u32 factor count, then
//! per factor a u32 name length, the UTF-8 name, a u8 kind (0 discrete, 1
//! continuous) and either a u32 cardinality or two f64 bounds. Then u64 record
//! count, u32 H, W, C, and per record the factor values (u32 1-based index or
//! f64) followed by `H·W·C` u8 pixels in row-major `[H, W, C]` order.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, Factor, FactorKind, FactorSpec, FactorValue, FactorValues};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const DLDS_MAGIC: &[u8; 4] = b"DLDS";
pub const DLDS_VERSION: u32 = 1;

/// Records loaded from a `DLDS` file.
#[derive(Clone, Debug)]
pub struct ExternalDataset {
    name: String,
    spec: FactorSpec,
    dims: (usize, usize, usize),
    factors: Vec<FactorValues>,
    pixels: Vec<Vec<u8>>,
    index: HashMap<Vec<u64>, usize>,
}

fn key(values: &FactorValues) -> Vec<u64> {
    values
        .values()
        .iter()
        .map(|v| match *v {
            FactorValue::Index(i) => i as u64,
            FactorValue::Real(x) => x.to_bits(),
        })
        .collect()
}

impl ExternalDataset {
    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Record `i` as an image in `[0, 1]` with its factors.
    pub fn get(&self, i: usize) -> Result<(Tensor, &FactorValues)> {
        let px = self.pixels.get(i).ok_or_else(|| Error::invalid(format!("record {i} of {}", self.len())))?;
        Ok((self.image(px), &self.factors[i]))
    }

    fn image(&self, px: &[u8]) -> Tensor {
        let (h, w, c) = self.dims;
        Tensor::from_parts(vec![h, w, c], px.iter().map(|&b| b as f64 / 255.0).collect())
    }
}

impl Dataset for ExternalDataset {
    fn name(&self) -> &str {
        &self.name
    }

    fn spec(&self) -> &FactorSpec {
        &self.spec
    }

    fn image_dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    /// Looks up the stored record with exactly these factors.
    fn render(&self, factors: &FactorValues) -> Result<Tensor> {
        let i = self
            .index
            .get(&key(factors))
            .ok_or_else(|| Error::invalid(format!("no stored record with factors {:?}", factors.values())))?;
        Ok(self.image(&self.pixels[*i]))
    }

    /// Uniform draw over the stored records.
    fn sample_factors(&self, rng: &mut dyn rand::RngCore) -> FactorValues {
        use rand::Rng;
        self.factors[rng.random_range(0..self.factors.len())].clone()
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a `DLDS` stream holding `images` (each `[H, W, C]` in `[0, 1]`) with
/// their factors.
pub fn export_records<W: Write>(
    mut w: W,
    spec: &FactorSpec,
    dims: (usize, usize, usize),
    records: &[(FactorValues, Tensor)],
) -> Result<()> {
    let (h, wd, c) = dims;
    let mut buf = Vec::new();
    buf.extend_from_slice(DLDS_MAGIC);
    buf.extend_from_slice(&DLDS_VERSION.to_le_bytes());
    buf.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    for f in spec.factors() {
        buf.extend_from_slice(&(f.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(f.name.as_bytes());
        match f.kind {
            FactorKind::Discrete { cardinality } => {
                buf.push(0);
                buf.extend_from_slice(&(cardinality as u32).to_le_bytes());
            }
            FactorKind::Continuous { lo, hi } => {
                buf.push(1);
                buf.extend_from_slice(&lo.to_le_bytes());
                buf.extend_from_slice(&hi.to_le_bytes());
            }
        }
    }
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for d in [h, wd, c] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for (values, image) in records {
        spec.check(values)?;
        if image.shape() != [h, wd, c] {
            return Err(Error::shape("export", format!("image {:?}, expected {:?}", image.shape(), [h, wd, c])));
        }
        for v in values.values() {
            match *v {
                FactorValue::Index(i) => buf.extend_from_slice(&(i as u32).to_le_bytes()),
                FactorValue::Real(x) => buf.extend_from_slice(&x.to_le_bytes()),
            }
        }
        buf.extend(image.data().iter().map(|&v| quantize(v)));
    }
    w.write_all(&buf).map_err(|e| Error::Format(format!("write failed: {e}")))
}

/// Renders `factors` from `dataset` and writes them to `path`.
pub fn write_external(path: &Path, dataset: &dyn Dataset, factors: &[FactorValues]) -> Result<()> {
    let records = factors
        .iter()
        .map(|f| Ok((f.clone(), dataset.render(f)?)))
        .collect::<Result<Vec<_>>>()?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    export_records(std::io::BufWriter::new(file), dataset.spec(), dataset.image_dims(), &records)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated file while reading {what}")))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Parses a `DLDS` stream.
pub fn read_external<R: Read>(mut r: R, name: &str) -> Result<ExternalDataset> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::Format(format!("read failed: {e}")))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4, "magic")? != DLDS_MAGIC {
        return Err(Error::Format("bad magic, expected `DLDS`".into()));
    }
    let version = cur.u32("version")?;
    if version != DLDS_VERSION {
        return Err(Error::Format(format!("unsupported version {version}, expected {DLDS_VERSION}")));
    }
    let n_factors = cur.u32("factor count")? as usize;
    let mut factors = Vec::with_capacity(n_factors.min(64));
    for k in 0..n_factors {
        let len = cur.u32("factor name length")? as usize;
        let fname = std::str::from_utf8(cur.take(len, "factor name")?)
            .map_err(|_| Error::Format(format!("factor {k} name is not UTF-8")))?
            .to_string();
        let kind = match cur.u8("factor kind")? {
            0 => FactorKind::Discrete { cardinality: cur.u32("cardinality")? as usize },
            1 => FactorKind::Continuous { lo: cur.f64("range")?, hi: cur.f64("range")? },
            other => return Err(Error::Format(format!("factor `{fname}` has unknown kind {other}"))),
        };
        factors.push(Factor { name: fname, kind });
    }
    let spec = FactorSpec::new(factors).map_err(|e| Error::Format(format!("invalid factor header: {e}")))?;
    let count = cur.u64("record count")? as usize;
    let h = cur.u32("height")? as usize;
    let w = cur.u32("width")? as usize;
    let c = cur.u32("channels")? as usize;
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::Format(format!("image dims {h}×{w}×{c} contain a zero")));
    }

    let mut values = Vec::with_capacity(count.min(1 << 20));
    let mut pixels = Vec::with_capacity(count.min(1 << 20));
    let mut seen_max = vec![0usize; spec.len()];
    for rec in 0..count {
        let mut fv = Vec::with_capacity(spec.len());
        for (k, f) in spec.factors().iter().enumerate() {
            match f.kind {
                FactorKind::Discrete { cardinality } => {
                    let i = cur.u32("factor index")? as usize;
                    if i < 1 || i > cardinality {
                        return Err(Error::Format(format!(
                            "record {rec}: factor `{}` index {i} outside 1..={cardinality}",
                            f.name
                        )));
                    }
                    seen_max[k] = seen_max[k].max(i);
                    fv.push(FactorValue::Index(i));
                }
                FactorKind::Continuous { lo, hi } => {
                    let x = cur.f64("factor value")?;
                    if !(lo..=hi).contains(&x) {
                        return Err(Error::Format(format!(
                            "record {rec}: factor `{}` value {x} outside [{lo}, {hi}]",
                            f.name
                        )));
                    }
                    fv.push(FactorValue::Real(x));
                }
            }
        }
        values.push(FactorValues(fv));
        pixels.push(cur.take(h * w * c, "pixels")?.to_vec());
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after the last record", bytes.len() - cur.pos)));
    }
    if count > 0 {
        for (f, &max) in spec.factors().iter().zip(&seen_max) {
            if let Some(card) = f.cardinality() {
                if max != card {
                    return Err(Error::Format(format!(
                        "factor `{}` declares cardinality {card} but the largest stored index is {max}",
                        f.name
                    )));
                }
            }
        }
    }
    let index = values.iter().enumerate().map(|(i, v)| (key(v), i)).collect();
    Ok(ExternalDataset { name: name.to_string(), spec, dims: (h, w, c), factors: values, pixels, index })
}

/// Loads a `DLDS` file from disk.
pub fn load_external(path: &Path) -> Result<ExternalDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("external");
    read_external(std::io::BufReader::new(file), name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{GridFactor, Gridworld};

    fn small() -> Gridworld {
        Gridworld::new(8, &[(GridFactor::PosX, 2), (GridFactor::PosY, 3)]).unwrap()
    }

    fn encoded(ds: &Gridworld) -> Vec<u8> {
        let records: Vec<_> =
            ds.spec().enumerate().unwrap().into_iter().map(|f| { let img = ds.render(&f).unwrap(); (f, img) }).collect();
        let mut buf = Vec::new();
        export_records(&mut buf, ds.spec(), ds.image_dims(), &records).unwrap();
        buf
    }

    #[test]
    fn round_trip_preserves_quantized_records() {
        let ds = small();
        let loaded = read_external(encoded(&ds).as_slice(), "grid").unwrap();
        assert_eq!(loaded.spec(), ds.spec());
        assert_eq!(loaded.len(), 6);
        for (i, f) in ds.spec().enumerate().unwrap().iter().enumerate() {
            let (img, stored) = loaded.get(i).unwrap();
            assert_eq!(stored, f);
            let expected = ds.render(f).unwrap().map(|v| quantize(v) as f64 / 255.0);
            assert_eq!(img, expected);
            assert_eq!(loaded.render(f).unwrap(), expected);
        }
    }

    #[test]
    fn wrong_magic_rejected() {
        let mut buf = encoded(&small());
        buf[0] = b'X';
        assert!(matches!(read_external(buf.as_slice(), "x"), Err(Error::Format(m)) if m.contains("magic")));
    }

    #[test]
    fn truncation_and_version_rejected() {
        let buf = encoded(&small());
        assert!(matches!(read_external(&buf[..buf.len() - 1], "x"), Err(Error::Format(m)) if m.contains("truncated")));
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(read_external(bad.as_slice(), "x"), Err(Error::Format(m)) if m.contains("version")));
    }

    #[test]
    fn cardinality_mismatch_rejected() {
        // Declare three x positions while only two are stored.
        let ds = small();
        let mut buf = encoded(&ds);
        // magic, version, count, name len, "posx", kind byte, then cardinality.
        let at = 4 + 4 + 4 + 4 + 4 + 1;
        buf[at..at + 4].copy_from_slice(&3u32.to_le_bytes());
        let err = read_external(buf.as_slice(), "x").unwrap_err();
        assert!(matches!(err, Error::Format(ref m) if m.contains("cardinality 3")), "{err}");
    }
}
