//! The semi-honest dealer: serves Beaver triples and truncation pairs over
//! TCP, or pre-generates them into a per-party file.
//!
//! Triple file layout: the magic bytes `SMTD`, a little-endian u16 version,
//! one byte of fractional bits, one byte of party count, then a flat run of
//! records. Each record is a request echo followed by the share payload,
//! both as a little-endian u64 length and that many little-endian u64
//! words. Parties consume records strictly in request order.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::time::Duration;

use smpctd_core::channel::{msg, ChannelError};
use smpctd_core::triple::{serve_dealer_request, DealerLink, TripleError};

use crate::frame::{read_frame, write_frame};
use crate::transport::{dial_checked, SessionParams};

pub const MAGIC: &[u8; 4] = b"SMTD";
pub const VERSION: u16 = 1;

/// Serves triples to all `m` parties until every connection closes.
///
/// Each connection handshakes with the session parameters, then streams
/// triple requests; responses are derived from `(seed, per-party counter)`,
/// so every party's n-th request yields consistent shares.
pub fn serve(
    listener: TcpListener,
    session: &SessionParams,
    seed: u64,
) -> Result<(), ChannelError> {
    let m = session.parties;
    let mut handles = Vec::new();
    let mut served = vec![false; m];
    while served.iter().any(|&s| !s) {
        let (stream, _) = listener
            .accept()
            .map_err(|e| ChannelError::Protocol(format!("dealer accept: {e}")))?;
        stream.set_nodelay(true).ok();
        let party = dealer_handshake(stream.try_clone().map_err(|e| {
            ChannelError::Protocol(format!("dealer stream clone: {e}"))
        })?, session)?;
        if served[party] {
            return Err(ChannelError::Protocol(format!(
                "party {party} connected twice"
            )));
        }
        served[party] = true;
        let seed = seed;
        handles.push(std::thread::spawn(move || serve_connection(stream, seed, m, party)));
    }
    for h in handles {
        h.join()
            .map_err(|_| ChannelError::Protocol("dealer worker panicked".into()))??;
    }
    Ok(())
}

fn dealer_handshake(mut stream: TcpStream, session: &SessionParams) -> Result<usize, ChannelError> {
    let (t, words) = read_frame(&mut stream)
        .map_err(|e| ChannelError::Protocol(format!("dealer handshake: {e}")))?;
    if t != msg::HANDSHAKE || words.len() != 4 {
        return Err(ChannelError::Protocol("malformed dealer handshake".into()));
    }
    let [sid, party, m, f] = [words[0], words[1], words[2], words[3]];
    if sid != session.session_id
        || m != session.parties as u64
        || f != session.frac_bits as u64
        || party >= session.parties as u64
    {
        return Err(ChannelError::HandshakeMismatch(format!(
            "dealer rejected handshake [{sid}, {party}, {m}, {f}]"
        )));
    }
    write_frame(&mut stream, msg::HANDSHAKE, &words)
        .map_err(|e| ChannelError::Protocol(format!("dealer handshake ack: {e}")))?;
    Ok(party as usize)
}

fn serve_connection(
    mut stream: TcpStream,
    seed: u64,
    m: usize,
    party: usize,
) -> Result<(), ChannelError> {
    let mut index = 0u64;
    loop {
        let (t, req) = match read_frame(&mut stream) {
            Ok(v) => v,
            // A clean shutdown after the protocol finishes.
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(ChannelError::Protocol(format!("dealer recv: {e}"))),
        };
        if t != msg::TRIPLE {
            return Err(ChannelError::Protocol(format!(
                "dealer got message type {t:#04x}"
            )));
        }
        let resp = serve_dealer_request(seed, index, m, party, &req)
            .map_err(|e| ChannelError::Protocol(format!("dealer request {index}: {e}")))?;
        index += 1;
        write_frame(&mut stream, msg::TRIPLE, &resp)
            .map_err(|e| ChannelError::Protocol(format!("dealer send: {e}")))?;
    }
}

/// A party's live connection to the dealer.
pub struct DealerClient {
    stream: TcpStream,
}

impl DealerClient {
    pub fn connect(
        addr: &str,
        session: &SessionParams,
        party: usize,
        timeout: Duration,
    ) -> Result<DealerClient, ChannelError> {
        let (stream, _) = dial_checked(addr, session, party, timeout)?;
        Ok(DealerClient { stream })
    }
}

impl DealerLink for DealerClient {
    fn request(&mut self, req: &[u64]) -> Result<Vec<u64>, TripleError> {
        write_frame(&mut self.stream, msg::TRIPLE, req)
            .map_err(|e| TripleError::Source(format!("dealer send: {e}")))?;
        let (t, words) = read_frame(&mut self.stream)
            .map_err(|e| TripleError::Source(format!("dealer recv: {e}")))?;
        if t != msg::TRIPLE {
            return Err(TripleError::Source(format!(
                "dealer answered with message type {t:#04x}"
            )));
        }
        Ok(words)
    }
}

/// A request-response pair as stored in a triple file.
pub type TripleRecord = (Vec<u64>, Vec<u64>);

/// A dealer link that answers every request locally from the seed while
/// recording the exchange, used to pre-generate triple files.
pub struct RecordingLink {
    seed: u64,
    m: usize,
    party: usize,
    index: u64,
    records: std::sync::Arc<std::sync::Mutex<Vec<TripleRecord>>>,
}

impl RecordingLink {
    pub fn new(seed: u64, m: usize, party: usize) -> RecordingLink {
        RecordingLink {
            seed,
            m,
            party,
            index: 0,
            records: Default::default(),
        }
    }

    /// Shared handle to the recorded exchanges; stays valid after the link
    /// moves into a protocol run.
    pub fn records(&self) -> std::sync::Arc<std::sync::Mutex<Vec<TripleRecord>>> {
        self.records.clone()
    }
}

impl DealerLink for RecordingLink {
    fn request(&mut self, req: &[u64]) -> Result<Vec<u64>, TripleError> {
        let resp = serve_dealer_request(self.seed, self.index, self.m, self.party, req)?;
        self.index += 1;
        self.records.lock().unwrap().push((req.to_vec(), resp.clone()));
        Ok(resp)
    }
}

fn write_words<W: Write>(w: &mut W, words: &[u64]) -> io::Result<()> {
    w.write_all(&(words.len() as u64).to_le_bytes())?;
    for &word in words {
        w.write_all(&word.to_le_bytes())?;
    }
    Ok(())
}

fn read_words<R: Read>(r: &mut R) -> io::Result<Option<Vec<u64>>> {
    let mut len = [0u8; 8];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u64::from_le_bytes(len) as usize;
    let mut body = vec![0u8; 8 * len];
    r.read_exact(&mut body)?;
    Ok(Some(
        body.chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    ))
}

pub fn write_triple_file(
    path: &Path,
    frac_bits: u8,
    parties: u8,
    records: &[TripleRecord],
) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[frac_bits, parties])?;
    for (req, resp) in records {
        write_words(&mut w, req)?;
        write_words(&mut w, resp)?;
    }
    w.flush()
}

pub fn read_triple_file(path: &Path) -> io::Result<(u8, u8, Vec<TripleRecord>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    if &head[..4] != MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad magic"));
    }
    let version = u16::from_le_bytes(head[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unsupported triple file version {version}"),
        ));
    }
    let (frac_bits, parties) = (head[6], head[7]);
    let mut records = Vec::new();
    while let Some(req) = read_words(&mut r)? {
        let resp = read_words(&mut r)?.ok_or_else(|| {
            io::Error::new(io::ErrorKind::InvalidData, "record truncated")
        })?;
        records.push((req, resp));
    }
    Ok((frac_bits, parties, records))
}

/// Replays a pre-generated triple file; every request must match the stored
/// sequence exactly.
pub struct FileLink {
    records: std::collections::VecDeque<TripleRecord>,
}

impl FileLink {
    pub fn open(path: &Path, frac_bits: u8, parties: u8) -> io::Result<FileLink> {
        let (f, m, records) = read_triple_file(path)?;
        if f != frac_bits || m != parties {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("triple file is for f={f}, m={m}"),
            ));
        }
        Ok(FileLink { records: records.into() })
    }
}

impl DealerLink for FileLink {
    fn request(&mut self, req: &[u64]) -> Result<Vec<u64>, TripleError> {
        let (stored_req, resp) = self.records.pop_front().ok_or(TripleError::Exhausted)?;
        if stored_req != req {
            return Err(TripleError::KindMismatch);
        }
        Ok(resp)
    }
}
