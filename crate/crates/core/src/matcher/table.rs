//! Compact on-disk table of per-paper matches (`matches.bin`).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "EFMATCH\x01"
//! n_terms   u32
//! n_terms × { len u32, utf8 term_id }
//! n_papers  u64
//! n_papers × { len u32, utf8 paper_id, year i32, k u32, k × term index u32 (ascending) }
//! ```

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::vocab::TermIdx;

const MAGIC: &[u8; 8] = b"EFMATCH\x01";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub paper_id: String,
    pub year: i32,
    pub terms: Vec<TermIdx>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchTable {
    pub term_ids: Vec<String>,
    pub records: Vec<MatchRecord>,
}

impl MatchTable {
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.term_ids.len() as u32).to_le_bytes())?;
        for t in &self.term_ids {
            write_str(&mut w, t)?;
        }
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        for r in &self.records {
            write_str(&mut w, &r.paper_id)?;
            w.write_all(&r.year.to_le_bytes())?;
            w.write_all(&(r.terms.len() as u32).to_le_bytes())?;
            for t in &r.terms {
                w.write_all(&t.0.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read_binary<R: Read>(mut r: R) -> io::Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(invalid("not a matches.bin file"));
        }
        let n_terms = read_u32(&mut r)? as usize;
        let mut term_ids = Vec::with_capacity(n_terms.min(1 << 20));
        for _ in 0..n_terms {
            term_ids.push(read_str(&mut r)?);
        }
        let n_papers = read_u64(&mut r)? as usize;
        let mut records = Vec::with_capacity(n_papers.min(1 << 20));
        for _ in 0..n_papers {
            let paper_id = read_str(&mut r)?;
            let year = read_u32(&mut r)? as i32;
            let k = read_u32(&mut r)? as usize;
            let mut terms = Vec::with_capacity(k.min(1 << 16));
            for _ in 0..k {
                let t = read_u32(&mut r)?;
                if t as usize >= n_terms {
                    return Err(invalid("term index out of range"));
                }
                terms.push(TermIdx(t));
            }
            records.push(MatchRecord {
                paper_id,
                year,
                terms,
            });
        }
        Ok(MatchTable { term_ids, records })
    }

    /// Debug dump: `paper_id,year,term_ids` with term ids joined by `;`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["paper_id", "year", "term_ids"])?;
        for r in &self.records {
            let terms: Vec<&str> = r
                .terms
                .iter()
                .map(|t| self.term_ids[t.index()].as_str())
                .collect();
            out.write_record([r.paper_id.as_str(), &r.year.to_string(), &terms.join(";")])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn invalid(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> io::Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| invalid("invalid utf-8 in string"))
}
