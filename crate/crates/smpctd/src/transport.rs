//! Party-to-party transports: an in-process loopback mesh for tests and
//! single-machine runs, and a TCP mesh for separate party processes.
//!
//! Both charge the metrics counters per frame with the wire cost
//! `9 + 8 * words`, so loopback runs report the same traffic a TCP run
//! would produce.

use std::collections::HashMap;
use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{Receiver, Sender};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use smpctd_core::channel::{msg, ChannelError, PartyChannel};

use crate::frame::{frame_bytes, read_frame, write_frame};
use crate::metrics::Counters;

fn epoch_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// One party's endpoint of an in-process full mesh.
pub struct LoopbackChannel {
    party: usize,
    parties: usize,
    senders: Vec<Option<Sender<(u8, Vec<u64>)>>>,
    receivers: Vec<Option<Receiver<(u8, Vec<u64>)>>>,
    counters: Arc<Counters>,
}

impl LoopbackChannel {
    pub fn counters(&self) -> Arc<Counters> {
        self.counters.clone()
    }
}

/// Builds the full mesh for `m` parties; element `i` belongs to party `i`.
pub fn loopback_mesh(m: usize) -> Vec<LoopbackChannel> {
    assert!(m >= 2);
    let mut txs: Vec<Vec<Option<Sender<(u8, Vec<u64>)>>>> =
        (0..m).map(|_| (0..m).map(|_| None).collect()).collect();
    let mut rxs: Vec<Vec<Option<Receiver<(u8, Vec<u64>)>>>> =
        (0..m).map(|_| (0..m).map(|_| None).collect()).collect();
    for from in 0..m {
        for to in 0..m {
            if from == to {
                continue;
            }
            let (tx, rx) = mpsc::channel();
            txs[from][to] = Some(tx);
            rxs[to][from] = Some(rx);
        }
    }
    txs.into_iter()
        .zip(rxs)
        .enumerate()
        .map(|(party, (senders, receivers))| LoopbackChannel {
            party,
            parties: m,
            senders,
            receivers,
            counters: Counters::new(),
        })
        .collect()
}

impl PartyChannel for LoopbackChannel {
    fn party_id(&self) -> usize {
        self.party
    }

    fn parties(&self) -> usize {
        self.parties
    }

    fn send(&mut self, peer: usize, msg_type: u8, words: &[u64]) -> Result<(), ChannelError> {
        let tx = self
            .senders
            .get(peer)
            .and_then(|s| s.as_ref())
            .ok_or(ChannelError::Closed)?;
        tx.send((msg_type, words.to_vec()))
            .map_err(|_| ChannelError::Closed)?;
        self.counters.add_sent(frame_bytes(words.len()));
        Ok(())
    }

    fn recv(&mut self, peer: usize, msg_type: u8) -> Result<Vec<u64>, ChannelError> {
        let rx = self
            .receivers
            .get(peer)
            .and_then(|r| r.as_ref())
            .ok_or(ChannelError::Closed)?;
        let (t, words) = rx.recv().map_err(|_| ChannelError::Closed)?;
        if t != msg_type {
            return Err(ChannelError::Protocol(format!(
                "expected message type {msg_type:#04x} from party {peer}, got {t:#04x}"
            )));
        }
        self.counters.add_received(frame_bytes(words.len()));
        Ok(words)
    }

    fn mark_round(&mut self) {
        self.counters.add_round();
    }

    fn now_millis(&self) -> u64 {
        epoch_millis()
    }
}

/// Session parameters every endpoint must agree on.
#[derive(Clone, Debug)]
pub struct SessionParams {
    pub session_id: u64,
    pub parties: usize,
    pub frac_bits: u32,
}

/// Addressing for the TCP mesh: party `i` listens on `base_port + i`.
#[derive(Clone, Debug)]
pub struct TcpConfig {
    pub host: String,
    pub base_port: u16,
    pub party_id: usize,
    pub session: SessionParams,
    pub timeout: Duration,
}

impl TcpConfig {
    fn addr_of(&self, party: usize) -> String {
        format!("{}:{}", self.host, self.base_port + party as u16)
    }
}

pub struct TcpChannel {
    party: usize,
    parties: usize,
    streams: Vec<Option<TcpStream>>,
    counters: Arc<Counters>,
}

impl TcpChannel {
    pub fn counters(&self) -> Arc<Counters> {
        self.counters.clone()
    }
}

fn handshake_words(session: &SessionParams, party: usize) -> [u64; 4] {
    [
        session.session_id,
        party as u64,
        session.parties as u64,
        session.frac_bits as u64,
    ]
}

fn check_handshake(
    session: &SessionParams,
    words: &[u64],
) -> Result<usize, ChannelError> {
    let [sid, peer, m, f] = match words {
        [a, b, c, d] => [*a, *b, *c, *d],
        _ => {
            return Err(ChannelError::Protocol(
                "handshake frame must carry four words".into(),
            ))
        }
    };
    if sid != session.session_id {
        return Err(ChannelError::HandshakeMismatch(format!(
            "session id {sid} != {}",
            session.session_id
        )));
    }
    if m != session.parties as u64 {
        return Err(ChannelError::HandshakeMismatch(format!(
            "party count {m} != {}",
            session.parties
        )));
    }
    if f != session.frac_bits as u64 {
        return Err(ChannelError::HandshakeMismatch(format!(
            "fractional bits {f} != {}",
            session.frac_bits
        )));
    }
    if peer >= session.parties as u64 {
        return Err(ChannelError::HandshakeMismatch(format!(
            "party id {peer} out of range"
        )));
    }
    Ok(peer as usize)
}

fn io_err(context: &str, e: std::io::Error) -> ChannelError {
    ChannelError::Protocol(format!("{context}: {e}"))
}

/// Connects to `addr` with retries until `timeout`, then exchanges
/// handshakes (caller first).
pub fn dial_checked(
    addr: &str,
    session: &SessionParams,
    my_id: usize,
    timeout: Duration,
) -> Result<(TcpStream, usize), ChannelError> {
    let deadline = Instant::now() + timeout;
    let mut stream = loop {
        match TcpStream::connect(addr) {
            Ok(s) => break s,
            Err(_) if Instant::now() < deadline => {
                std::thread::sleep(Duration::from_millis(20));
            }
            Err(e) => {
                return Err(ChannelError::ConnectTimeout(format!("{addr}: {e}")));
            }
        }
    };
    stream.set_nodelay(true).ok();
    write_frame(&mut stream, msg::HANDSHAKE, &handshake_words(session, my_id))
        .map_err(|e| io_err("handshake send", e))?;
    let (t, words) = read_frame(&mut stream).map_err(|e| io_err("handshake recv", e))?;
    if t != msg::HANDSHAKE {
        return Err(ChannelError::Protocol("expected handshake frame".into()));
    }
    let peer = check_handshake(session, &words)?;
    Ok((stream, peer))
}

fn accept_checked(
    listener: &TcpListener,
    session: &SessionParams,
    my_id: usize,
    deadline: Instant,
) -> Result<(TcpStream, usize), ChannelError> {
    let mut stream = loop {
        match listener.accept() {
            Ok((s, _)) => break s,
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(ChannelError::ConnectTimeout(
                        "no inbound connection before the deadline".into(),
                    ));
                }
                std::thread::sleep(Duration::from_millis(20));
            }
            Err(e) => return Err(io_err("accept", e)),
        }
    };
    stream.set_nodelay(true).ok();
    stream.set_nonblocking(false).ok();
    let (t, words) = read_frame(&mut stream).map_err(|e| io_err("handshake recv", e))?;
    if t != msg::HANDSHAKE {
        return Err(ChannelError::Protocol("expected handshake frame".into()));
    }
    let peer = check_handshake(session, &words)?;
    write_frame(&mut stream, msg::HANDSHAKE, &handshake_words(session, my_id))
        .map_err(|e| io_err("handshake send", e))?;
    Ok((stream, peer))
}

/// Establishes the full TCP mesh for one party: dial every lower id, accept
/// every higher id, verify every handshake.
pub fn connect_mesh(cfg: &TcpConfig) -> Result<TcpChannel, ChannelError> {
    let m = cfg.session.parties;
    let me = cfg.party_id;
    assert!(me < m && m >= 2);
    let listener = TcpListener::bind(cfg.addr_of(me))
        .map_err(|e| io_err("bind", e))?;
    listener.set_nonblocking(true).ok();
    let deadline = Instant::now() + cfg.timeout;

    let mut streams: Vec<Option<TcpStream>> = (0..m).map(|_| None).collect();
    for peer in 0..me {
        let (stream, who) = dial_checked(&cfg.addr_of(peer), &cfg.session, me, cfg.timeout)?;
        if who != peer {
            return Err(ChannelError::HandshakeMismatch(format!(
                "dialed party {peer} but reached {who}"
            )));
        }
        streams[peer] = Some(stream);
    }
    let mut pending: HashMap<usize, TcpStream> = HashMap::new();
    while pending.len() < m - 1 - me {
        let (stream, who) = accept_checked(&listener, &cfg.session, me, deadline)?;
        if who <= me || pending.contains_key(&who) {
            return Err(ChannelError::HandshakeMismatch(format!(
                "unexpected inbound handshake from party {who}"
            )));
        }
        pending.insert(who, stream);
    }
    for (who, stream) in pending {
        streams[who] = Some(stream);
    }
    Ok(TcpChannel {
        party: me,
        parties: m,
        streams,
        counters: Counters::new(),
    })
}

impl PartyChannel for TcpChannel {
    fn party_id(&self) -> usize {
        self.party
    }

    fn parties(&self) -> usize {
        self.parties
    }

    fn send(&mut self, peer: usize, msg_type: u8, words: &[u64]) -> Result<(), ChannelError> {
        let stream = self
            .streams
            .get_mut(peer)
            .and_then(|s| s.as_mut())
            .ok_or(ChannelError::Closed)?;
        write_frame(stream, msg_type, words).map_err(|e| io_err("send", e))?;
        self.counters.add_sent(frame_bytes(words.len()));
        Ok(())
    }

    fn recv(&mut self, peer: usize, msg_type: u8) -> Result<Vec<u64>, ChannelError> {
        let stream = self
            .streams
            .get_mut(peer)
            .and_then(|s| s.as_mut())
            .ok_or(ChannelError::Closed)?;
        let (t, words) = match read_frame(stream) {
            Ok(v) => v,
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Err(ChannelError::Closed),
            Err(e) => return Err(io_err("recv", e)),
        };
        if t != msg_type {
            return Err(ChannelError::Protocol(format!(
                "expected message type {msg_type:#04x} from party {peer}, got {t:#04x}"
            )));
        }
        self.counters.add_received(frame_bytes(words.len()));
        Ok(words)
    }

    fn mark_round(&mut self) {
        self.counters.add_round();
    }

    fn now_millis(&self) -> u64 {
        epoch_millis()
    }
}
