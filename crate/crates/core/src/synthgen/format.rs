//! Dataset serialization.
//!
//! Two interchangeable encodings, selected by file extension:
//!
//! * text (`.txt`): one record per bag — a header line `S M y u` (`u` is
//!   the 0-based segment start, `-1` for negative bags) followed by `S`
//!   lines of `M` space-separated decimal floats (17 significant digits,
//!   round-trip exact). Loading needs the segment length `r` to rebuild
//!   instance labels.
//! * binary (`.bin`): little-endian; header `SMILDATA`, version, `r`, bag
//!   count; per bag `S: u32`, `y: u8`, `u: i64`, then `S·M` 64-bit floats.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::synthgen::Bag;
use crate::Mat;

const MAGIC: &[u8; 8] = b"SMILDATA";
const VERSION: u32 = 1;

pub fn write_text<W: Write>(out: &mut W, bags: &[Bag]) -> Result<()> {
    for bag in bags {
        let u = bag.segment_start.map_or(-1i64, |u| u as i64);
        writeln!(
            out,
            "{} {} {} {}",
            bag.size(),
            bag.feature_dim(),
            bag.label as u8,
            u
        )?;
        for row in bag.embeddings.iter_rows() {
            let mut line = String::with_capacity(row.len() * 24);
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                line.push_str(&format!("{v:.16e}"));
            }
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

pub fn read_text<R: Read>(input: R, r: usize) -> Result<Vec<Bag>> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines();
    let mut bags = Vec::new();
    while let Some(header) = lines.next() {
        let header = header?;
        if header.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!("bad bag header: {header:?}")));
        }
        let s: usize = parse(fields[0], "instance count")?;
        let m: usize = parse(fields[1], "feature count")?;
        let y: u8 = parse(fields[2], "label")?;
        let u: i64 = parse(fields[3], "segment start")?;
        let mut data = Vec::with_capacity(s * m);
        for _ in 0..s {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format("truncated bag record".into()))??;
            for tok in line.split_whitespace() {
                data.push(
                    tok.parse::<f64>()
                        .map_err(|_| Error::Format(format!("bad float: {tok:?}")))?,
                );
            }
        }
        if data.len() != s * m {
            return Err(Error::Format(format!(
                "bag promised {s}x{m} entries, found {}",
                data.len()
            )));
        }
        let segment_start = if u >= 0 { Some(u as usize) } else { None };
        bags.push(Bag::new(Mat::from_vec(s, m, data)?, y == 1, segment_start, r)?);
    }
    Ok(bags)
}

pub fn write_binary<W: Write>(out: &mut W, bags: &[Bag], r: usize) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(r as u32).to_le_bytes())?;
    out.write_all(&(bags.len() as u64).to_le_bytes())?;
    for bag in bags {
        out.write_all(&(bag.size() as u32).to_le_bytes())?;
        out.write_all(&(bag.feature_dim() as u32).to_le_bytes())?;
        out.write_all(&[bag.label as u8])?;
        let u = bag.segment_start.map_or(-1i64, |u| u as i64);
        out.write_all(&u.to_le_bytes())?;
        for v in bag.embeddings.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Returns the bags and the segment length recorded in the header.
pub fn read_binary<R: Read>(input: R) -> Result<(Vec<Bag>, usize)> {
    let mut reader = BufReader::new(input);
    let mut magic = [0u8; 8];
    reader.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a bag dataset (bad magic)".into()));
    }
    let version = read_u32(&mut reader)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let r = read_u32(&mut reader)? as usize;
    let n = read_u64(&mut reader)? as usize;
    let mut bags = Vec::with_capacity(n);
    for _ in 0..n {
        let s = read_u32(&mut reader)? as usize;
        let m = read_u32(&mut reader)? as usize;
        let mut byte = [0u8; 1];
        reader.read_exact(&mut byte)?;
        let mut u_bytes = [0u8; 8];
        reader.read_exact(&mut u_bytes)?;
        let u = i64::from_le_bytes(u_bytes);
        let mut data = Vec::with_capacity(s * m);
        let mut buf = [0u8; 8];
        for _ in 0..s * m {
            reader.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        let segment_start = if u >= 0 { Some(u as usize) } else { None };
        bags.push(Bag::new(
            Mat::from_vec(s, m, data)?,
            byte[0] == 1,
            segment_start,
            r,
        )?);
    }
    Ok((bags, r))
}

/// Writes a dataset, picking the encoding from the extension
/// (`.bin` binary, anything else text).
pub fn write_dataset(path: &Path, bags: &[Bag], r: usize) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    if is_binary(path) {
        write_binary(&mut out, bags, r)?;
    } else {
        write_text(&mut out, bags)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a dataset, picking the encoding from the extension. `r` is only
/// consulted for text files; binary files carry it in the header.
pub fn read_dataset(path: &Path, r: usize) -> Result<Vec<Bag>> {
    let file = File::open(path)?;
    if is_binary(path) {
        Ok(read_binary(file)?.0)
    } else {
        read_text(file, r)
    }
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

fn parse<T: std::str::FromStr>(tok: &str, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::Format(format!("bad {what}: {tok:?}")))
}

fn read_u32<R: Read>(reader: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(reader: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    reader.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
