// SPDX-License-Identifier: Apache-2.0

//! Nanosecond-resolution pcap files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::time::SimTime;
use crate::wireclock::link::FCS_LEN;

pub const PCAP_MAGIC_NS: u32 = 0xA1B2_3C4D;
pub const LINKTYPE_ETHERNET: u32 = 1;
const SNAPLEN: u32 = 65_535;

/// Writes captured frames. Times are floored to whole nanoseconds.
pub struct PcapWriter<W: Write> {
    out: W,
    with_fcs: bool,
    last: SimTime,
    records: u64,
}

impl PcapWriter<BufWriter<File>> {
    pub fn create(path: &Path, with_fcs: bool) -> std::io::Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), with_fcs)
    }
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut out: W, with_fcs: bool) -> std::io::Result<Self> {
        out.write_all(&PCAP_MAGIC_NS.to_le_bytes())?;
        out.write_all(&2u16.to_le_bytes())?;
        out.write_all(&4u16.to_le_bytes())?;
        out.write_all(&0i32.to_le_bytes())?;
        out.write_all(&0u32.to_le_bytes())?;
        out.write_all(&SNAPLEN.to_le_bytes())?;
        out.write_all(&LINKTYPE_ETHERNET.to_le_bytes())?;
        Ok(PcapWriter {
            out,
            with_fcs,
            last: SimTime::ZERO,
            records: 0,
        })
    }

    /// `frame` includes the FCS; it is stripped unless the writer keeps it.
    pub fn write(&mut self, time: SimTime, frame: &[u8]) -> std::io::Result<()> {
        if time < self.last {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!(
                    "capture time {time} ns before previous record {} ns",
                    self.last
                ),
            ));
        }
        self.last = time;
        let data = if self.with_fcs || frame.len() < FCS_LEN {
            frame
        } else {
            &frame[..frame.len() - FCS_LEN]
        };
        let ns = time.floor_ns();
        let len = data.len() as u32;
        self.out
            .write_all(&((ns / 1_000_000_000) as u32).to_le_bytes())?;
        self.out
            .write_all(&((ns % 1_000_000_000) as u32).to_le_bytes())?;
        self.out.write_all(&len.to_le_bytes())?;
        self.out.write_all(&len.to_le_bytes())?;
        self.out.write_all(data)?;
        self.records += 1;
        Ok(())
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Reads a nanosecond pcap back into `(time, frame)` records.
pub fn read_pcap<R: Read>(input: R) -> std::io::Result<Vec<(SimTime, Vec<u8>)>> {
    let mut r = BufReader::new(input);
    let mut header = [0u8; 24];
    r.read_exact(&mut header)?;
    let magic = u32::from_le_bytes(header[0..4].try_into().unwrap());
    if magic != PCAP_MAGIC_NS {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("not a little-endian nanosecond pcap (magic {magic:#010x})"),
        ));
    }
    let mut out = Vec::new();
    let mut rec = [0u8; 16];
    loop {
        match r.read_exact(&mut rec) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e),
        }
        let word = |i: usize| u32::from_le_bytes(rec[i..i + 4].try_into().unwrap());
        let ns = i64::from(word(0)) * 1_000_000_000 + i64::from(word(4));
        let mut data = vec![0; word(8) as usize];
        r.read_exact(&mut data)?;
        out.push((SimTime::from_ns(ns), data));
    }
    Ok(out)
}
