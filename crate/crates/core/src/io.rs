// SPDX-License-Identifier: Apache-2.0

//! File formats for streams and matrices.
//!
//! Binary stream layout (little-endian):
//!
//! ```text
//! 0..6   magic "NESTRM"
//! 6      word width in bits
//! 7      bytes per stored word (ceil(width / 8))
//! 8..16  word count (u64)
//! 16..   words
//! ```
//!
//! Matrix CSV files start with one `# key=value ...` header line followed by
//! one comma-separated row per line.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use nalgebra::DMatrix;

use crate::stats::DataStream;
use crate::{Error, Result};

pub const STREAM_MAGIC: &[u8; 6] = b"NESTRM";

pub fn write_stream_binary<W: Write>(mut w: W, stream: &DataStream) -> Result<()> {
    let bytes = stream.width().div_ceil(8) as usize;
    w.write_all(STREAM_MAGIC)?;
    w.write_all(&[stream.width() as u8, bytes as u8])?;
    w.write_all(&(stream.len() as u64).to_le_bytes())?;
    for &word in stream.words() {
        w.write_all(&word.to_le_bytes()[..bytes])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_stream_binary<R: Read>(mut r: R, type_id: usize) -> Result<DataStream> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[..6] != STREAM_MAGIC {
        return Err(Error::Parse {
            line: 0,
            msg: "bad stream magic".into(),
        });
    }
    let width = header[6] as u32;
    let bytes = header[7] as usize;
    if bytes != width.div_ceil(8) as usize {
        return Err(Error::Parse {
            line: 0,
            msg: format!("word size {bytes} inconsistent with width {width}"),
        });
    }
    let count = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
    let mut raw = vec![0u8; count * bytes];
    r.read_exact(&mut raw)?;
    let words = raw
        .chunks_exact(bytes)
        .map(|c| {
            let mut buf = [0u8; 8];
            buf[..bytes].copy_from_slice(c);
            u64::from_le_bytes(buf)
        })
        .collect();
    DataStream::new(words, width, type_id)
}

/// One decimal word per line, preceded by a `# width=N` header.
pub fn write_stream_csv<W: Write>(mut w: W, stream: &DataStream) -> Result<()> {
    writeln!(w, "# width={} count={}", stream.width(), stream.len())?;
    for word in stream.words() {
        writeln!(w, "{word}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a decimal word list. `width` is taken from the header when present,
/// otherwise from the argument.
pub fn read_stream_csv<R: BufRead>(r: R, width: Option<u32>, type_id: usize) -> Result<DataStream> {
    let mut width = width;
    let mut words = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let fields = parse_header(rest);
            if let Some(w) = fields.get("width") {
                width = Some(w.parse().map_err(|_| Error::Parse {
                    line: k + 1,
                    msg: format!("bad width `{w}`"),
                })?);
            }
            continue;
        }
        words.push(line.parse::<u64>().map_err(|_| Error::Parse {
            line: k + 1,
            msg: format!("bad word `{line}`"),
        })?);
    }
    let width = width.ok_or(Error::Parse {
        line: 0,
        msg: "stream width unknown".into(),
    })?;
    DataStream::new(words, width, type_id)
}

/// Parses `key=value` pairs separated by whitespace.
pub fn parse_header(s: &str) -> BTreeMap<String, String> {
    s.split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect()
}

pub fn write_matrix_csv<W: Write>(mut w: W, header: &[(&str, &str)], m: &DMatrix<f64>) -> Result<()> {
    let fields: Vec<String> = header.iter().map(|(k, v)| format!("{k}={v}")).collect();
    writeln!(w, "# {}", fields.join(" "))?;
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix CSV; returns its header fields and the matrix. Values are
/// written with round-trip precision, so write→read is exact.
pub fn read_matrix_csv<R: BufRead>(r: R) -> Result<(BTreeMap<String, String>, DMatrix<f64>)> {
    let mut header = BTreeMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            header.extend(parse_header(rest));
            continue;
        }
        let row = line
            .split(',')
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: k + 1,
                    msg: format!("bad number `{v}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: k + 1,
                    msg: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no matrix rows".into(),
        });
    }
    let (nr, nc) = (rows.len(), rows[0].len());
    Ok((header, DMatrix::from_fn(nr, nc, |i, j| rows[i][j])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_header_layout() {
        let s = DataStream::new(vec![1, 0x1ff], 9, 0).unwrap();
        let mut buf = Vec::new();
        write_stream_binary(&mut buf, &s).unwrap();
        assert_eq!(&buf[..6], b"NESTRM");
        assert_eq!(buf[6], 9);
        assert_eq!(buf[7], 2);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 2);
        assert_eq!(buf.len(), 16 + 4);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let buf = b"NOTSTRM\x00\x00\x00\x00\x00\x00\x00\x00\x00";
        assert!(matches!(read_stream_binary(&buf[..], 0), Err(Error::Parse { .. })));
    }

    #[test]
    fn csv_stream_reads_header_width() {
        let text = "# width=4\n1\n15\n\n3\n";
        let s = read_stream_csv(text.as_bytes(), None, 2).unwrap();
        assert_eq!(s.words(), &[1, 15, 3]);
        assert_eq!(s.width(), 4);
        assert!(read_stream_csv("# width=4\n16\n".as_bytes(), None, 0).is_err());
        assert!(read_stream_csv("1\n".as_bytes(), None, 0).is_err());
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        assert!(read_matrix_csv("# n=2\n1,2\n3\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn stream_roundtrips(width in 1u32..=64, raw in prop::collection::vec(any::<u64>(), 0..50)) {
            let words = raw.iter().map(|w| w & crate::width_mask(width)).collect();
            let s = DataStream::new(words, width, 0).unwrap();
            let mut bin = Vec::new();
            write_stream_binary(&mut bin, &s).unwrap();
            prop_assert_eq!(read_stream_binary(&bin[..], 0).unwrap(), s.clone());
            let mut csv = Vec::new();
            write_stream_csv(&mut csv, &s).unwrap();
            prop_assert_eq!(read_stream_csv(&csv[..], None, 0).unwrap(), s);
        }

        #[test]
        fn matrix_roundtrip_is_exact(vals in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 12)) {
            let m = DMatrix::from_column_slice(3, 4, &vals);
            let mut buf = Vec::new();
            write_matrix_csv(&mut buf, &[("rows", "3")], &m).unwrap();
            let (h, back) = read_matrix_csv(&buf[..]).unwrap();
            prop_assert_eq!(h.get("rows").map(String::as_str), Some("3"));
            prop_assert_eq!(back, m);
        }
    }
}
