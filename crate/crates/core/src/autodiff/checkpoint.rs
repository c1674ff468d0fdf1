//! `VOTC` checkpoint container: parameters, optimizer moments, normalisation
//! statistics and scalar metadata, each stored as a list of named tensors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{AdamState, ParameterSet, Tensor};
use crate::error::{Error, Result};
use crate::io::{BinReader, BinWriter};

pub const MAGIC: &[u8; 4] = b"VOTC";
pub const VERSION: u16 = 1;

pub type Records = Vec<(String, Tensor)>;

pub fn write_records<W: Write>(w: &mut BinWriter<W>, records: &[(String, Tensor)]) -> Result<()> {
    w.u32(records.len() as u32)?;
    for (name, t) in records {
        w.u32(name.len() as u32)?;
        w.bytes(name.as_bytes())?;
        w.u32(t.rank() as u32)?;
        for &d in t.shape() {
            w.u64(d as u64)?;
        }
        w.f64_slice(t.data())?;
    }
    Ok(())
}

const MAX_RECORDS: u32 = 1 << 20;
const MAX_RANK: u32 = 8;
const MAX_ELEMS: u64 = 1 << 32;

pub fn read_records<R: Read>(r: &mut BinReader<R>) -> Result<Records> {
    let n = r.u32()?;
    if n > MAX_RECORDS {
        return Err(Error::Format(format!("implausible record count {n}")));
    }
    let mut out = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let len = r.u32()? as usize;
        if len > 4096 {
            return Err(Error::Format(format!("implausible name length {len}")));
        }
        let name = String::from_utf8(r.bytes(len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = r.u32()?;
        if rank > MAX_RANK {
            return Err(Error::Format(format!("{name}: rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut total: u64 = 1;
        for _ in 0..rank {
            let d = r.u64()?;
            total = total.saturating_mul(d);
            shape.push(d as usize);
        }
        if total > MAX_ELEMS {
            return Err(Error::Format(format!("{name}: {total} elements")));
        }
        let data = r.f64_vec(total as usize)?;
        out.push((name, Tensor::new(&shape, data)?));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub params: ParameterSet,
    pub adam: Option<AdamState>,
    pub norm: Records,
    pub meta: Records,
}

impl Checkpoint {
    pub fn meta_value(&self, key: &str) -> Option<f64> {
        self.meta
            .iter()
            .find(|(n, t)| n == key && t.len() == 1)
            .map(|(_, t)| t.data()[0])
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BinWriter::new(w);
        w.bytes(MAGIC)?;
        w.u16(VERSION)?;
        let params: Records = self
            .params
            .iter()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        write_records(&mut w, &params)?;
        let mut adam = Records::new();
        if let Some(state) = &self.adam {
            adam.push(("t".into(), Tensor::scalar(state.t as f64)));
            for (i, (name, _)) in self.params.iter().enumerate() {
                adam.push((format!("m.{name}"), state.m[i].clone()));
                adam.push((format!("v.{name}"), state.v[i].clone()));
            }
        }
        write_records(&mut w, &adam)?;
        write_records(&mut w, &self.norm)?;
        write_records(&mut w, &self.meta)?;
        w.finish()
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BinReader::new(r);
        if &r.bytes(4)?[..] != MAGIC {
            return Err(Error::Format("not a VOTC checkpoint".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut params = ParameterSet::new();
        for (name, t) in read_records(&mut r)? {
            params.insert(name, t)?;
        }
        let adam_records = read_records(&mut r)?;
        let adam = if adam_records.is_empty() {
            None
        } else {
            Some(adam_from_records(&params, adam_records)?)
        };
        let norm = read_records(&mut r)?;
        let meta = read_records(&mut r)?;
        if !r.at_end()? {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Self {
            params,
            adam,
            norm,
            meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn adam_from_records(params: &ParameterSet, records: Records) -> Result<AdamState> {
    let mut state = AdamState::new(params);
    let mut seen_t = false;
    let mut filled = 0;
    for (name, t) in records {
        if name == "t" {
            state.t = t.data().first().copied().unwrap_or(0.0) as u64;
            seen_t = true;
            continue;
        }
        let (slot, pname) = match name.split_once('.') {
            Some(("m", p)) => (&mut state.m, p),
            Some(("v", p)) => (&mut state.v, p),
            _ => return Err(Error::Format(format!("unknown optimizer record {name}"))),
        };
        let id = params
            .id(pname)
            .ok_or_else(|| Error::Format(format!("optimizer record for unknown parameter {pname}")))?;
        if t.shape() != params.get(id).shape() {
            return Err(Error::Format(format!("optimizer record {name} has wrong shape")));
        }
        slot[id.index()] = t;
        filled += 1;
    }
    if !seen_t || filled != 2 * params.len() {
        return Err(Error::Format("incomplete optimizer state".into()));
    }
    Ok(state)
}
