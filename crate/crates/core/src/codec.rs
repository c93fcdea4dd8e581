// SPDX-License-Identifier: Apache-2.0

//! Low-power link codes applied to whole payload streams at the source.

use std::fmt;
use std::str::FromStr;

use crate::stats::DataStream;
use crate::{width_mask, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CodecKind {
    None,
    /// Bus invert with one extra line.
    Invert,
    Gray,
    /// XOR with the previous data word, optionally complemented.
    Correlator { invert: bool },
}

impl FromStr for CodecKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "invert" => Ok(Self::Invert),
            "gray" => Ok(Self::Gray),
            "correlator" => Ok(Self::Correlator { invert: false }),
            "correlator+inv" | "correlator,+inv" => Ok(Self::Correlator { invert: true }),
            other => Err(Error::UnknownCodec(other.to_owned())),
        }
    }
}

impl fmt::Display for CodecKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Invert => "invert",
            Self::Gray => "gray",
            Self::Correlator { invert: false } => "correlator",
            Self::Correlator { invert: true } => "correlator+inv",
        })
    }
}

/// A codec bound to a data width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Codec {
    kind: CodecKind,
    width: u32,
}

impl Codec {
    pub fn new(kind: CodecKind, width: u32) -> Result<Self> {
        let max = if kind == CodecKind::Invert { 63 } else { 64 };
        if width == 0 || width > max {
            return Err(Error::InvalidWidth(width));
        }
        Ok(Self { kind, width })
    }

    pub fn kind(&self) -> CodecKind {
        self.kind
    }

    pub fn width_in(&self) -> u32 {
        self.width
    }

    pub fn width_out(&self) -> u32 {
        match self.kind {
            CodecKind::Invert => self.width + 1,
            _ => self.width,
        }
    }

    pub fn encode(&self, stream: &DataStream) -> Result<DataStream> {
        if stream.width() != self.width {
            return Err(Error::WidthMismatch {
                expected: self.width as usize,
                got: stream.width() as usize,
            });
        }
        let words = stream.words();
        let mask = width_mask(self.width);
        let out: Vec<u64> = match self.kind {
            CodecKind::None => words.to_vec(),
            CodecKind::Gray => words.iter().map(|&w| w ^ (w >> 1)).collect(),
            CodecKind::Invert => {
                let mut reference = 0u64;
                words
                    .iter()
                    .map(|&w| {
                        if 2 * (w ^ reference).count_ones() > self.width {
                            reference = !w & mask;
                            reference | (1 << self.width)
                        } else {
                            reference = w;
                            w
                        }
                    })
                    .collect()
            }
            CodecKind::Correlator { invert } => {
                let flip = if invert { mask } else { 0 };
                let mut prev = 0u64;
                words
                    .iter()
                    .map(|&w| {
                        let c = (w ^ prev) ^ flip;
                        prev = w;
                        c
                    })
                    .collect()
            }
        };
        DataStream::new(out, self.width_out(), stream.type_id())
    }

    pub fn decode(&self, encoded: &DataStream) -> Result<DataStream> {
        if encoded.width() != self.width_out() {
            return Err(Error::WidthMismatch {
                expected: self.width_out() as usize,
                got: encoded.width() as usize,
            });
        }
        let words = encoded.words();
        let mask = width_mask(self.width);
        let out: Vec<u64> = match self.kind {
            CodecKind::None => words.to_vec(),
            CodecKind::Gray => words
                .iter()
                .map(|&g| {
                    let mut w = g;
                    let mut shift = 1;
                    while shift < 64 {
                        w ^= w >> shift;
                        shift <<= 1;
                    }
                    w
                })
                .collect(),
            CodecKind::Invert => words
                .iter()
                .map(|&c| {
                    if c >> self.width & 1 == 1 {
                        !c & mask
                    } else {
                        c & mask
                    }
                })
                .collect(),
            CodecKind::Correlator { invert } => {
                let flip = if invert { mask } else { 0 };
                let mut prev = 0u64;
                words
                    .iter()
                    .map(|&c| {
                        prev ^= c ^ flip;
                        prev
                    })
                    .collect()
            }
        };
        DataStream::new(out, self.width, encoded.type_id())
    }
}

/// Percentage energy saved by a code, both energies per payload byte.
pub fn coding_gain(uncoded: f64, coded: f64) -> Result<f64> {
    if uncoded == 0.0 || !uncoded.is_finite() {
        return Err(Error::ZeroEnergy);
    }
    Ok((uncoded - coded) / uncoded * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{compute_bit_stats, generate_stream, StreamSpec};
    use proptest::prelude::*;

    fn enc(kind: CodecKind, width: u32, words: &[u64]) -> Vec<u64> {
        let s = DataStream::new(words.to_vec(), width, 0).unwrap();
        Codec::new(kind, width).unwrap().encode(&s).unwrap().into_words()
    }

    #[test]
    fn parse_and_display() {
        for s in ["none", "invert", "gray", "correlator", "correlator+inv"] {
            assert_eq!(s.parse::<CodecKind>().unwrap().to_string(), s);
        }
        assert!(matches!("huffman".parse::<CodecKind>(), Err(Error::UnknownCodec(_))));
    }

    #[test]
    fn invert_examples() {
        assert_eq!(enc(CodecKind::Invert, 16, &[0xffff]), vec![1 << 16]);
        assert_eq!(enc(CodecKind::Invert, 16, &[0x1234, 0x1234]), vec![0x1234, 0x1234]);
        // tie at distance N/2 does not invert
        assert_eq!(enc(CodecKind::Invert, 4, &[0b0011]), vec![0b0011]);
        // reference is the transmitted word: after sending 0000+inv, 0xffff is distance 16 again
        assert_eq!(enc(CodecKind::Invert, 16, &[0xffff, 0xffff]), vec![1 << 16, 1 << 16]);
        assert_eq!(Codec::new(CodecKind::Invert, 16).unwrap().width_out(), 17);
    }

    #[test]
    fn gray_examples() {
        assert_eq!(enc(CodecKind::Gray, 4, &[7, 0]), vec![4, 0]);
        let ramp: Vec<u64> = (0..1024).collect();
        let g = enc(CodecKind::Gray, 10, &ramp);
        assert!(g.windows(2).all(|w| (w[0] ^ w[1]).count_ones() == 1));
    }

    #[test]
    fn correlator_examples() {
        assert_eq!(enc(CodecKind::Correlator { invert: false }, 4, &[5, 5, 5]), vec![5, 0, 0]);
        assert_eq!(enc(CodecKind::Correlator { invert: true }, 8, &[9, 9, 9, 9])[1..], [0xff; 3]);
    }

    #[test]
    fn decode_width_mismatch() {
        let c = Codec::new(CodecKind::Invert, 8).unwrap();
        let s = DataStream::new(vec![1], 8, 0).unwrap();
        assert!(matches!(c.decode(&s), Err(Error::WidthMismatch { .. })));
        assert!(matches!(c.encode(&DataStream::new(vec![1], 9, 0).unwrap()), Err(Error::WidthMismatch { .. })));
    }

    #[test]
    fn gain() {
        assert_eq!(coding_gain(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(coding_gain(4.0, 2.0).unwrap(), 50.0);
        assert!(matches!(coding_gain(0.0, 1.0), Err(Error::ZeroEnergy)));
    }

    #[test]
    fn invert_keeps_uniform_bit_statistics() {
        let s = generate_stream(&StreamSpec::uniform(16, 200_000, 9), 0).unwrap();
        let coded = Codec::new(CodecKind::Invert, 16).unwrap().encode(&s).unwrap();
        let before = compute_bit_stats(&s).unwrap();
        let after = compute_bit_stats(&coded).unwrap();
        let diff = after.s.view((0, 0), (16, 16)) - &before.s;
        assert!(diff.amax() < 0.01, "max S change {}", diff.amax());
    }

    fn kinds() -> impl Strategy<Value = CodecKind> {
        prop_oneof![
            Just(CodecKind::None),
            Just(CodecKind::Invert),
            Just(CodecKind::Gray),
            Just(CodecKind::Correlator { invert: false }),
            Just(CodecKind::Correlator { invert: true }),
        ]
    }

    proptest! {
        #[test]
        fn roundtrip(kind in kinds(), width in 4u32..=32, raw in prop::collection::vec(any::<u64>(), 0..200)) {
            let s = DataStream::new(raw.iter().map(|w| w & width_mask(width)).collect(), width, 3).unwrap();
            let c = Codec::new(kind, width).unwrap();
            let e = c.encode(&s).unwrap();
            prop_assert_eq!(e.width(), c.width_out());
            prop_assert_eq!(c.decode(&e).unwrap(), s);
        }

        #[test]
        fn invert_bounds_transitions(width in 1u32..=32, raw in prop::collection::vec(any::<u64>(), 1..200)) {
            let words: Vec<u64> = raw.iter().map(|w| w & width_mask(width)).collect();
            let e = enc(CodecKind::Invert, width, &words);
            let mut prev = 0u64;
            for w in e {
                prop_assert!((w ^ prev).count_ones() <= width.div_ceil(2) + 1);
                prev = w;
            }
        }

        #[test]
        fn gray_adjacent_integers(width in 2u32..=32, start in any::<u64>()) {
            let a = start & (width_mask(width) >> 1);
            let g = enc(CodecKind::Gray, width, &[a, a + 1]);
            prop_assert_eq!((g[0] ^ g[1]).count_ones(), 1);
        }
    }
}
