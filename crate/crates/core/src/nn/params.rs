use std::collections::{BTreeSet, HashMap};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MHW1";

/// Named parameters in insertion order, plus the set of frozen names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
    frozen: BTreeSet<String>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Argument(format!("parameter {name:?} already exists")));
        }
        let i = self.names.len();
        self.index.insert(name.clone(), i);
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(i)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.index_of(name)
            .map(|i| &self.tensors[i])
            .ok_or_else(|| Error::Argument(format!("unknown parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        match self.index_of(name) {
            Some(i) => Ok(&mut self.tensors[i]),
            None => Err(Error::Argument(format!("unknown parameter {name:?}"))),
        }
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub(crate) fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn freeze(&mut self, name: &str) -> Result<()> {
        self.get(name)?;
        self.frozen.insert(name.to_string());
        Ok(())
    }

    /// Freezes every parameter whose name starts with `prefix`.
    pub fn freeze_prefix(&mut self, prefix: &str) {
        for n in &self.names {
            if n.starts_with(prefix) {
                self.frozen.insert(n.clone());
            }
        }
    }

    pub fn freeze_all(&mut self) {
        self.frozen.extend(self.names.iter().cloned());
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }

    pub fn is_frozen_at(&self, i: usize) -> bool {
        self.frozen.contains(&self.names[i])
    }

    pub fn frozen(&self) -> &BTreeSet<String> {
        &self.frozen
    }

    /// Total number of scalar parameters.
    pub fn n_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn n_trainable_values(&self) -> usize {
        self.iter()
            .filter(|(n, _)| !self.is_frozen(n))
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Flat copy of every value, in parameter order.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.tensors.iter().map(|t| t.data().to_vec()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Vec<f64>]) -> Result<()> {
        if snapshot.len() != self.tensors.len() {
            return Err(Error::Shape("snapshot does not match parameter store".into()));
        }
        for (t, s) in self.tensors.iter_mut().zip(snapshot) {
            t.assign(s)?;
        }
        Ok(())
    }

    /// Copies every parameter of `other` in, renamed with `prefix`.
    pub fn extend_prefixed(&mut self, other: &ParamStore, prefix: &str) -> Result<()> {
        for (n, t) in other.iter() {
            let name = format!("{prefix}{n}");
            self.insert(name.clone(), t.clone())?;
            if other.is_frozen(n) {
                self.frozen.insert(name);
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        for (name, t) in self.iter() {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads an `MHW1` checkpoint; nothing is frozen in the result.
    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(std::fs::File::open(path)?))
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
        }
        let mut store = Self::new();
        loop {
            let mut len = [0u8; 4];
            // a clean end of file is only allowed between records
            match r.read(&mut len[..1])? {
                0 => break,
                _ => read_exact(r, &mut len[1..], "name length")?,
            }
            let mut name = vec![0u8; u32::from_le_bytes(len) as usize];
            read_exact(r, &mut name, "name")?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
            let rank = read_u32(r)? as usize;
            if rank > Tensor::MAX_RANK {
                return Err(Error::Format(format!("parameter {name:?} has rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                read_exact(r, &mut b, "dims")?;
                shape.push(usize::try_from(u64::from_le_bytes(b)).map_err(|_| Error::Format("dimension overflow".into()))?);
            }
            let count = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Format("dimension overflow".into()))?;
            let mut data = Vec::with_capacity(count.min(1 << 24));
            let mut b = [0u8; 8];
            for _ in 0..count {
                read_exact(r, &mut b, "values")?;
                data.push(f64::from_le_bytes(b));
            }
            let t = Tensor::new(shape, data).map_err(|e| Error::Format(format!("parameter {name:?}: {e}")))?;
            store
                .insert(name, t)
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(store)
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated checkpoint while reading {what}")),
        _ => Error::Io(e),
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, "header")?;
    Ok(u32::from_le_bytes(b))
}

/// Glorot-uniform matrix of shape `(fan_in, fan_out)`.
pub fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Tensor::matrix(fan_in, fan_out, data).expect("finite by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::matrix(2, 3, vec![1.0, -2.5, 3.0, 1e-300, -0.0, 7.25]).unwrap())
            .unwrap();
        s.insert("b", Tensor::vector(vec![0.1, 0.2, 0.3]).unwrap()).unwrap();
        s.insert("c", Tensor::new(vec![], vec![4.0]).unwrap()).unwrap();
        s
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = sample();
        assert!(s.insert("w", Tensor::zeros(vec![1])).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let s = sample();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let back = ParamStore::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.names(), s.names());
        for ((_, a), (_, b)) in back.iter().zip(s.iter()) {
            assert_eq!(a.shape(), b.shape());
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn corrupt_checkpoints_are_format_errors() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(ParamStore::read_from(&mut bad.as_slice()), Err(Error::Format(_))));
        for cut in [buf.len() - 1, 6, 20] {
            assert!(matches!(
                ParamStore::read_from(&mut &buf[..cut]),
                Err(Error::Format(_))
            ));
        }
        assert!(ParamStore::read_from(&mut &buf[..4]).unwrap().is_empty());
    }

    #[test]
    fn freezing() {
        let mut s = sample();
        s.freeze("b").unwrap();
        assert!(s.freeze("nope").is_err());
        assert!(s.is_frozen("b") && !s.is_frozen("w"));
        assert_eq!(s.n_values(), 10);
        assert_eq!(s.n_trainable_values(), 7);
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = glorot_uniform(10, 20, &mut rng);
        let limit = (6.0f64 / 30.0).sqrt();
        assert_eq!(t.shape(), &[10, 20]);
        assert!(t.data().iter().all(|v| v.abs() <= limit));
    }
}
