//! Versioned little-endian binary format for [`DtmModel`].

use std::fs;
use std::path::Path;

use super::{DtmHyper, DtmModel, LedgerEntry, SliceState};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TWDTMBIN";
const TRAILER: &[u8; 4] = b"END.";
pub const FORMAT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for &x in v {
            self.f64(x);
        }
    }
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
            .ok_or_else(|| Error::Format(format!("model file truncated at byte {}", self.buf.len())))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("length does not fit in memory".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn serialize(model: &DtmModel) -> Vec<u8> {
    let k = model.num_topics();
    let km = k * model.num_terms;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.u64(k as u64);
    w.u64(model.num_terms as u64);
    w.u64(model.num_slices() as u64);
    w.f64(model.hyper.sigma2);
    w.f64(model.hyper.delta2);
    w.f64(model.hyper.alpha);
    w.u32(model.hyper.alpha_drift as u32);
    debug_assert_eq!(model.initial_mean.len(), km);
    w.f64s(&model.initial_mean);
    w.f64s(&model.initial_var);
    for s in &model.slices {
        w.f64(s.alpha);
        w.f64(s.ledger.doc_bound);
        w.f64(s.ledger.topic_bound);
        for a in [&s.obs, &s.obs_var, &s.filt_mean, &s.filt_var, &s.mean, &s.var] {
            w.f64s(a);
        }
        w.f64s(&s.zeta);
        w.u64(s.num_docs() as u64);
        w.f64s(&s.gammas);
        for phi in &s.phis {
            w.u64(phi.len() as u64);
            w.f64s(phi);
        }
    }
    w.0.extend_from_slice(TRAILER);
    w.0
}

pub fn deserialize(bytes: &[u8]) -> Result<DtmModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let k = r.len()?;
    let num_terms = r.len()?;
    let num_slices = r.len()?;
    let hyper = DtmHyper {
        num_topics: k,
        sigma2: r.f64()?,
        delta2: r.f64()?,
        alpha: r.f64()?,
        alpha_drift: r.u32()? != 0,
    };
    hyper.validate()?;
    let km = k
        .checked_mul(num_terms)
        .ok_or_else(|| Error::Format("model dimensions overflow".into()))?;
    let initial_mean = r.f64s(km)?;
    let initial_var = r.f64s(km)?;
    let mut slices = Vec::new();
    for _ in 0..num_slices {
        let alpha = r.f64()?;
        let ledger = LedgerEntry {
            doc_bound: r.f64()?,
            topic_bound: r.f64()?,
        };
        let obs = r.f64s(km)?;
        let obs_var = r.f64s(km)?;
        let filt_mean = r.f64s(km)?;
        let filt_var = r.f64s(km)?;
        let mean = r.f64s(km)?;
        let var = r.f64s(km)?;
        let zeta = r.f64s(k)?;
        let docs = r.len()?;
        let gammas = r.f64s(docs.checked_mul(k).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        let mut phis = Vec::new();
        for _ in 0..docs {
            let n = r.len()?;
            phis.push(r.f64s(n)?);
        }
        slices.push(SliceState {
            obs,
            obs_var,
            filt_mean,
            filt_var,
            mean,
            var,
            zeta,
            alpha,
            gammas,
            phis,
            ledger,
        });
    }
    if r.take(TRAILER.len())? != TRAILER {
        return Err(Error::Format("model file is corrupt (bad trailer)".into()));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after model".into()));
    }
    Ok(DtmModel {
        hyper,
        num_terms,
        initial_mean,
        initial_var,
        slices,
    })
}

pub fn write_model(model: &DtmModel, path: &Path) -> Result<()> {
    fs::write(path, serialize(model)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<DtmModel> {
    deserialize(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
