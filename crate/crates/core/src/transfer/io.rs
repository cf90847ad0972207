//! Checkpoint formats for leafwise measures.
//!
//! JSON: `{"depth": k, "words": [[..], ..], "entries": [[[pos, weight], ..], ..]}`.
//! Binary, little-endian: `u32` depth, `u32` word count, then for each entry
//! a `u32` atom count followed by `(f64 pos, f64 weight)` pairs.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::LeafwiseMeasure;
use crate::error::{Error, Result};
use crate::measure::{Atom, FiberSpace};
use crate::symbolic::SubshiftSpec;

#[derive(Serialize, Deserialize)]
struct JsonForm {
    depth: usize,
    words: Vec<Vec<usize>>,
    entries: Vec<Vec<[f64; 2]>>,
}

impl LeafwiseMeasure {
    pub fn to_json(&self) -> String {
        let table = self.word_table();
        let form = JsonForm {
            depth: self.depth(),
            words: table.iter().collect(),
            entries: (0..self.len())
                .map(|i| self.entry(i).iter().map(|a| [a.pos, a.weight]).collect())
                .collect(),
        };
        serde_json::to_string(&form).expect("plain data serializes")
    }

    /// Reads the JSON form; words must match the spec's admissible words at
    /// the stored depth, in order.
    pub fn from_json(spec: Arc<SubshiftSpec>, space: Arc<FiberSpace>, text: &str) -> Result<Self> {
        let form: JsonForm = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let table = spec.word_table(form.depth)?;
        if form.words.len() != table.len() || form.words.iter().enumerate().any(|(i, w)| table.rank(w) != Some(i)) {
            return Err(Error::Format("word list does not match the subshift".into()));
        }
        let entries = form
            .entries
            .into_iter()
            .map(|e| e.into_iter().map(|[p, w]| Atom::new(p, w)).collect())
            .collect();
        Self::from_entries(spec, space, form.depth, entries)
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        let to_u32 = |v: usize| u32::try_from(v).map_err(|_| Error::Format(format!("{v} overflows u32")));
        out.write_all(&to_u32(self.depth())?.to_le_bytes())?;
        out.write_all(&to_u32(self.len())?.to_le_bytes())?;
        for i in 0..self.len() {
            let e = self.entry(i);
            out.write_all(&to_u32(e.len())?.to_le_bytes())?;
            for a in e {
                out.write_all(&a.pos.to_le_bytes())?;
                out.write_all(&a.weight.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(spec: Arc<SubshiftSpec>, space: Arc<FiberSpace>, mut input: R) -> Result<Self> {
        let mut u = [0u8; 4];
        let mut f = [0u8; 8];
        let mut read_u32 = |r: &mut R| -> Result<usize> {
            r.read_exact(&mut u).map_err(|e| Error::Format(e.to_string()))?;
            Ok(u32::from_le_bytes(u) as usize)
        };
        let depth = read_u32(&mut input)?;
        let count = read_u32(&mut input)?;
        let expected = spec.word_table(depth)?.len();
        if count != expected {
            return Err(Error::Format(format!("{count} entries stored, {expected} words at depth {depth}")));
        }
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let atoms = read_u32(&mut input)?;
            let mut e = Vec::with_capacity(atoms);
            for _ in 0..atoms {
                input.read_exact(&mut f).map_err(|e| Error::Format(e.to_string()))?;
                let pos = f64::from_le_bytes(f);
                input.read_exact(&mut f).map_err(|e| Error::Format(e.to_string()))?;
                e.push(Atom::new(pos, f64::from_le_bytes(f)));
            }
            entries.push(e);
        }
        Self::from_entries(spec, space, depth, entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::measure::FiniteSignedMeasure;
    use crate::transfer::invariant_measure;

    #[test]
    fn round_trips() {
        let sys = catalog::golden_cantor();
        let d = FiniteSignedMeasure::dirac(sys.space().clone(), 0.5).unwrap();
        let mu = invariant_measure(&sys, 3, 4, 0.0, &d).unwrap().measure;
        let back = LeafwiseMeasure::from_json(sys.spec().clone(), sys.space().clone(), &mu.to_json()).unwrap();
        assert_eq!(back, mu);
        let mut buf = Vec::new();
        mu.write_binary(&mut buf).unwrap();
        let back = LeafwiseMeasure::read_binary(sys.spec().clone(), sys.space().clone(), buf.as_slice()).unwrap();
        assert_eq!(back, mu);
        assert!(LeafwiseMeasure::read_binary(sys.spec().clone(), sys.space().clone(), &buf[..10]).is_err());
        let other = catalog::dyadic();
        assert!(LeafwiseMeasure::from_json(other.spec().clone(), other.space().clone(), &mu.to_json()).is_err());
    }
}
