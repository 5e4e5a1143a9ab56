//! Binary parameter container.
//!
//! ```text
//! "WCCK" | version: u32 | entries: u32
//! entry: name_len: u32 | name: utf-8 | shape: 4 x u64 | dtype: u8 | payload
//! ```
//!
//! All integers and payload values are little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DType, ParamStore, Scalar, Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"WCCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Shape,
    pub dtype: DType,
    pub data: Vec<f64>,
}

impl Entry {
    pub fn tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_vec(self.shape, self.data.iter().map(|&v| T::of(v)).collect())
            .expect("entry shape checked on decode")
    }
}

pub fn encode<T: Scalar>(entries: &[(&str, &Tensor<T>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        for d in t.shape().dims() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.push(T::DTYPE as u8);
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::Truncated {
                what: "checkpoint",
                expected: self.pos.saturating_add(n),
                found: self.bytes.len(),
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Entry>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            what: "checkpoint",
            expected: u32::from_be_bytes(*MAGIC),
            found: u32::from_be_bytes(magic.try_into().unwrap()),
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("checkpoint entry name is not UTF-8".into()))?
            .to_string();
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = usize::try_from(r.u64()?)
                .map_err(|_| Error::Format(format!("`{name}`: dimension overflow")))?;
        }
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let tag = r.take(1)?[0];
        let dtype = DType::from_tag(tag)
            .ok_or_else(|| Error::Format(format!("`{name}`: unknown dtype tag {tag}")))?;
        let numel = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("`{name}`: shape overflow")))?;
        let payload = r.take(
            numel
                .checked_mul(dtype.size())
                .ok_or_else(|| Error::Format("payload overflow".into()))?,
        )?;
        let data = match dtype {
            DType::F32 => payload
                .chunks_exact(4)
                .map(|c| f32::read_le(c) as f64)
                .collect(),
            DType::F64 => payload.chunks_exact(8).map(f64::read_le).collect(),
        };
        entries.push(Entry {
            name,
            shape,
            dtype,
            data,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint entries",
            bytes.len() - r.pos
        )));
    }
    Ok(entries)
}

/// Writes every parameter of `store` (including running statistics), then
/// the `extra` tensors.
pub fn save_params<T: Scalar>(
    path: &Path,
    store: &ParamStore<T>,
    extra: &[(&str, &Tensor<T>)],
) -> Result<()> {
    let mut entries: Vec<(&str, &Tensor<T>)> = store
        .iter()
        .map(|(_, p)| (p.name.as_str(), &p.value))
        .collect();
    entries.extend_from_slice(extra);
    fs::write(path, encode(&entries))?;
    Ok(())
}

/// Restores every parameter of `store` by name, checking shapes, and returns
/// entries that are not parameters.
pub fn load_params<T: Scalar>(path: &Path, store: &mut ParamStore<T>) -> Result<Vec<Entry>> {
    let entries = decode(&fs::read(path)?)?;
    let mut extra = Vec::new();
    let mut seen = vec![false; store.len()];
    for e in entries {
        match store.find(&e.name) {
            Some(id) => {
                let want = store.value(id).shape();
                if want != e.shape {
                    return Err(Error::Format(format!(
                        "checkpoint `{}` is {}, model expects {want}",
                        e.name, e.shape
                    )));
                }
                store
                    .value_mut(id)
                    .data_mut()
                    .iter_mut()
                    .zip(&e.data)
                    .for_each(|(d, &v)| *d = T::of(v));
                seen[id.index()] = true;
            }
            None => extra.push(e),
        }
    }
    if let Some((_, p)) = store.iter().find(|(id, _)| !seen[id.index()]) {
        return Err(Error::Format(format!(
            "checkpoint has no entry for `{}`",
            p.name
        )));
    }
    Ok(extra)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ParamKind;

    fn store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.trainable(
            "a",
            ParamKind::ConvWeight,
            Tensor::from_fn(Shape::new(2, 1, 1, 3), |n, _, _, w| {
                (n * 3 + w) as f32 * 0.5
            }),
        );
        s.fixed(
            "b",
            ParamKind::RunningStat,
            Tensor::full(Shape::new(1, 1, 1, 1), -1.25),
        );
        s
    }

    #[test]
    fn layout_is_stable() {
        let s = store();
        let entries: Vec<_> = s.iter().map(|(_, p)| (p.name.as_str(), &p.value)).collect();
        let bytes = encode(&entries);
        assert_eq!(&bytes[..4], b"WCCK");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1u32.to_le_bytes());
        assert_eq!(bytes[16], b'a');
        assert_eq!(&bytes[17..25], &2u64.to_le_bytes());
        assert_eq!(bytes[49], 0);
        assert_eq!(&bytes[50..54], &0f32.to_le_bytes());
        let header = 4 + 4 + 4;
        let entry = |name: usize, n: usize| 4 + name + 32 + 1 + 4 * n;
        assert_eq!(bytes.len(), header + entry(1, 6) + entry(1, 1));
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.wcck");
        let s = store();
        let norm = Tensor::full(Shape::new(1, 1, 1, 2), 0.1307f32);
        save_params(&path, &s, &[("norm", &norm)]).unwrap();
        let mut t = store();
        for p in t.iter_mut() {
            p.value = Tensor::zeros(p.value.shape());
        }
        let extra = load_params(&path, &mut t).unwrap();
        for ((_, a), (_, b)) in s.iter().zip(t.iter()) {
            assert_eq!(a.value, b.value);
        }
        assert_eq!(extra.len(), 1);
        assert_eq!(extra[0].tensor::<f32>(), norm);
    }

    #[test]
    fn corrupt_files_rejected() {
        let s = store();
        let entries: Vec<_> = s.iter().map(|(_, p)| (p.name.as_str(), &p.value)).collect();
        let good = encode(&entries);
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::BadMagic { .. })));
        assert!(matches!(
            decode(&good[..good.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(decode(&long), Err(Error::Format(_))));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.wcck");
        fs::write(&path, &good).unwrap();
        let mut other = ParamStore::<f32>::new();
        other.trainable(
            "a",
            ParamKind::ConvWeight,
            Tensor::zeros(Shape::new(1, 1, 1, 3)),
        );
        assert!(matches!(
            load_params(&path, &mut other),
            Err(Error::Format(_))
        ));
        let mut more = store();
        more.trainable("c", ParamKind::Score, Tensor::zeros(Shape::new(1, 1, 1, 1)));
        assert!(load_params(&path, &mut more).is_err());
    }
}
