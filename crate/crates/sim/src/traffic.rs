// SPDX-License-Identifier: Apache-2.0

//! Statistical packet injection and payload sources.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vclink::stats::{generate_stream, DataStream, Distribution, StreamSpec};

use crate::topology::Topology;
use crate::{Error, Result};

/// Unit of an injection rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RateUnit {
    /// Packets per PE cycle.
    #[default]
    Packets,
    /// Offered flits per PE cycle; converted to packets by the packet length.
    Flits,
}

/// Synthetic stream parameters without length; the simulator sizes the
/// stream to the run.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamParams {
    pub distribution: Distribution,
    pub width: u32,
    pub sigma: f64,
    pub rho: f64,
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileFormat {
    /// Binary P5 greymap, 8 bit; pixels packed two per flit.
    Pgm,
    /// Raw 8-bit pixels, packed two per flit.
    Raw,
    /// Stream file as written by [`vclink::io::write_stream_binary`].
    Stream,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PayloadSpec {
    Stream(StreamParams),
    /// Upper bits from `hi`, lower bits from `lo`.
    Packed { hi: Box<PayloadSpec>, lo: Box<PayloadSpec> },
    File { path: PathBuf, format: FileFormat },
}

impl PayloadSpec {
    pub fn width(&self) -> Option<u32> {
        match self {
            PayloadSpec::Stream(p) => Some(p.width),
            PayloadSpec::Packed { hi, lo } => Some(hi.width()? + lo.width()?),
            PayloadSpec::File { .. } => None,
        }
    }

    /// Materializes `length` words (synthetic payloads) or the whole file.
    /// `seed` is used for streams without an explicit seed.
    pub fn build(&self, width: u32, length: usize, seed: u64) -> Result<DataStream> {
        let s = match self {
            PayloadSpec::Stream(p) => generate_stream(
                &StreamSpec {
                    distribution: p.distribution,
                    width: p.width,
                    length,
                    sigma: p.sigma,
                    rho: p.rho,
                    seed: p.seed.unwrap_or(seed),
                },
                0,
            )?,
            PayloadSpec::Packed { hi, lo } => {
                let hi_w = hi.width().unwrap_or(width / 2);
                let h = hi.build(hi_w, length, seed)?;
                let l = lo.build(width - hi_w, length, seed ^ 0x5bd1_e995)?;
                DataStream::pack(&h, &l, 0)?
            }
            PayloadSpec::File { path, format } => load_payload_file(path, *format, width)?,
        };
        if s.width() != width {
            return Err(Error::Invalid(format!(
                "payload width {} does not match flit width {width}",
                s.width()
            )));
        }
        Ok(s)
    }
}

/// A traffic flow: packets from one node to another with one payload type.
#[derive(Clone, Debug, PartialEq)]
pub struct InjectionSpec {
    pub source: usize,
    pub destination: usize,
    pub type_id: usize,
    pub payload: PayloadSpec,
    pub rate: f64,
    pub unit: RateUnit,
    pub packet_length: usize,
}

impl InjectionSpec {
    /// Probability of creating a packet in one PE cycle.
    pub fn packet_probability(&self) -> f64 {
        match self.unit {
            RateUnit::Packets => self.rate,
            RateUnit::Flits => self.rate / self.packet_length as f64,
        }
    }

    pub fn validate(&self, topo: &Topology, flit_width: u32) -> Result<()> {
        if self.source >= topo.len() || self.destination >= topo.len() {
            return Err(Error::Invalid("flow endpoint is not a node".into()));
        }
        if !(0.0..=1.0).contains(&self.packet_probability()) || !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::Invalid(format!("injection rate {} outside [0, 1]", self.rate)));
        }
        if let Some(w) = self.payload.width() {
            if w != flit_width {
                return Err(Error::Invalid(format!(
                    "payload width {w} does not match flit width {flit_width}"
                )));
            }
        }
        topo.path(self.source, self.destination)?;
        Ok(())
    }
}

/// Payload words handed out in order, restarting from the beginning when
/// exhausted.
#[derive(Clone, Debug)]
pub struct PayloadSource {
    words: Vec<u64>,
    pos: usize,
    restarts: u64,
}

impl PayloadSource {
    pub fn new(stream: DataStream) -> Result<Self> {
        if stream.is_empty() {
            return Err(Error::Invalid("empty payload".into()));
        }
        Ok(Self {
            words: stream.into_words(),
            pos: 0,
            restarts: 0,
        })
    }

    pub fn next_word(&mut self) -> u64 {
        if self.pos == self.words.len() {
            self.pos = 0;
            self.restarts += 1;
            if self.restarts == 1 {
                log::warn!("payload of {} words exhausted, restarting", self.words.len());
            }
        }
        let w = self.words[self.pos];
        self.pos += 1;
        w
    }

    pub fn restarts(&self) -> u64 {
        self.restarts
    }
}

/// Bernoulli packet generator of one flow.
#[derive(Clone, Debug)]
pub struct Injector {
    pub spec: InjectionSpec,
    probability: f64,
    rng: ChaCha8Rng,
    payload: PayloadSource,
    sequence: u64,
}

impl Injector {
    pub fn new(spec: InjectionSpec, payload: PayloadSource, seed: u64) -> Self {
        Self {
            probability: spec.packet_probability(),
            spec,
            rng: ChaCha8Rng::seed_from_u64(seed),
            payload,
            sequence: 0,
        }
    }

    /// Draws whether a packet is created in this PE cycle.
    pub fn fire(&mut self) -> bool {
        self.probability > 0.0 && self.rng.random_bool(self.probability)
    }

    /// Payload words of the next packet and its per-flow sequence number.
    pub fn next_payload(&mut self, words: usize) -> (u64, Vec<u64>) {
        let seq = self.sequence;
        self.sequence += 1;
        (seq, (0..words).map(|_| self.payload.next_word()).collect())
    }

    pub fn payload(&self) -> &PayloadSource {
        &self.payload
    }
}

/// Reads an 8-bit greymap (P5, maxval ≤ 255) and returns its pixels in
/// row-major order.
pub fn read_pgm(bytes: &[u8]) -> Result<Vec<u8>> {
    let bad = |m: &str| Error::Invalid(format!("PGM: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("only binary P5 files are supported"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, max) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if max == 0 || max > 255 {
        return Err(bad("only 8-bit greymaps are supported"));
    }
    let data = bytes.get(pos + 1..).unwrap_or(&[]);
    if data.len() < w * h {
        return Err(bad("pixel data truncated"));
    }
    Ok(data[..w * h].to_vec())
}

/// Packs 8-bit pixels into `width`-bit words, `width / 8` pixels per word,
/// first pixel in the most significant byte. A trailing partial word is
/// dropped.
pub fn pack_pixels(pixels: &[u8], width: u32) -> Result<DataStream> {
    if width % 8 != 0 || width == 0 || width > 64 {
        return Err(Error::Invalid(format!("cannot pack pixels into {width}-bit flits")));
    }
    let per = (width / 8) as usize;
    let words = pixels
        .chunks_exact(per)
        .map(|c| c.iter().fold(0u64, |acc, &p| acc << 8 | p as u64))
        .collect();
    Ok(DataStream::new(words, width, 0)?)
}

pub fn load_payload_file(path: &Path, format: FileFormat, width: u32) -> Result<DataStream> {
    let bytes = std::fs::read(path).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        FileFormat::Pgm => pack_pixels(&read_pgm(&bytes)?, width),
        FileFormat::Raw => pack_pixels(&bytes, width),
        FileFormat::Stream => Ok(vclink::io::read_stream_binary(&bytes[..], 0)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Topology;

    fn spec(rate: f64) -> InjectionSpec {
        InjectionSpec {
            source: 0,
            destination: 1,
            type_id: 0,
            payload: PayloadSpec::Stream(StreamParams {
                distribution: Distribution::Uniform,
                width: 16,
                sigma: 1.0,
                rho: 0.0,
                seed: Some(1),
            }),
            rate,
            unit: RateUnit::Packets,
            packet_length: 32,
        }
    }

    fn injector(rate: f64) -> Injector {
        let s = spec(rate);
        let p = PayloadSource::new(s.payload.build(16, 100, 0).unwrap()).unwrap();
        Injector::new(s, p, 7)
    }

    #[test]
    fn bernoulli_rate() {
        let mut inj = injector(0.2);
        let n = (0..100_000).filter(|_| inj.fire()).count();
        // binomial std is ~126; 500 is about four sigma
        assert!((19_500..=20_500).contains(&n), "{n}");
        let mut inj = injector(0.0);
        assert_eq!((0..10_000).filter(|_| inj.fire()).count(), 0);
    }

    #[test]
    fn rate_validation() {
        let t = Topology::mesh(2, 1, 1).unwrap();
        assert!(spec(0.5).validate(&t, 16).is_ok());
        assert!(spec(1.5).validate(&t, 16).is_err());
        assert!(spec(0.5).validate(&t, 8).is_err());
        let mut flits = spec(0.2);
        flits.unit = RateUnit::Flits;
        assert_eq!(flits.packet_probability(), 0.2 / 32.0);
    }

    #[test]
    fn payload_order_and_restart() {
        let stream = DataStream::new((0..10).collect(), 8, 0).unwrap();
        let mut src = PayloadSource::new(stream).unwrap();
        let got: Vec<u64> = (0..25).map(|_| src.next_word()).collect();
        let expected: Vec<u64> = (0..25).map(|k| k % 10).collect();
        assert_eq!(got, expected);
        assert_eq!(src.restarts(), 2);
    }

    #[test]
    fn pgm_packing() {
        let mut file = b"P5\n# comment\n4 2\n255\n".to_vec();
        file.extend([1u8, 2, 3, 4, 5, 6, 7, 8]);
        let px = read_pgm(&file).unwrap();
        assert_eq!(px, vec![1, 2, 3, 4, 5, 6, 7, 8]);
        let s = pack_pixels(&px, 16).unwrap();
        assert_eq!(s.words(), &[0x0102, 0x0304, 0x0506, 0x0708]);
        assert!(read_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(read_pgm(b"P5\n4 4\n255\n\x00").is_err());
    }

    #[test]
    fn image_packet_count() {
        // 512x512 pixels, two per flit, 31 body flits per packet
        let px = vec![0u8; 512 * 512];
        let s = pack_pixels(&px, 16).unwrap();
        assert_eq!(s.len(), 131_072);
        assert_eq!(s.len().div_ceil(31), 4229);
    }

    #[test]
    fn packed_payload_width() {
        let hi = PayloadSpec::Stream(StreamParams {
            distribution: Distribution::Gaussian,
            width: 8,
            sigma: 30.0,
            rho: 0.9,
            seed: Some(3),
        });
        let lo = PayloadSpec::Stream(StreamParams {
            distribution: Distribution::Uniform,
            width: 8,
            sigma: 1.0,
            rho: 0.0,
            seed: Some(4),
        });
        let p = PayloadSpec::Packed { hi: Box::new(hi), lo: Box::new(lo) };
        assert_eq!(p.width(), Some(16));
        let s = p.build(16, 50, 0).unwrap();
        assert_eq!(s.len(), 50);
        assert_eq!(s.width(), 16);
    }
}
