//! In-process duplex transport with byte and round metering.
//!
//! Each message costs its payload plus a 4-byte length prefix. A round is a
//! [`Endpoint::flush_round`] barrier during which at least one message crossed
//! in either direction; both parties must flush symmetrically.

use std::collections::VecDeque;
use std::fmt;
use std::io;
use std::str::FromStr;
use std::sync::mpsc::{channel, Receiver, Sender};

use crate::error::{Error, Result};

/// Bytes charged per message on top of its payload.
pub const FRAME_OVERHEAD: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Party {
    P0,
    P1,
}

impl Party {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn other(self) -> Party {
        match self {
            Party::P0 => Party::P1,
            Party::P1 => Party::P0,
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.index())
    }
}

/// Accounting phase. `Offline` holds dealer-delivered correlation bytes and
/// never has rounds; `Setup` is the one-time array transfer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Setup,
    Offline,
    Online,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Setup, Phase::Offline, Phase::Online];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Setup => "setup",
            Phase::Offline => "offline",
            Phase::Online => "online",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlushEvent {
    pub phase: Phase,
    /// Framed bytes sent by P0 and P1 since the previous flush.
    pub bytes: [u64; 2],
    pub messages: [u64; 2],
}

impl FlushEvent {
    pub fn crossed(&self) -> bool {
        self.messages[0] + self.messages[1] > 0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    bytes: [[u64; 3]; 2],
    rounds: [u64; 3],
    flushes: Vec<FlushEvent>,
    /// Framed size of every message in send order, per party.
    sizes: [Vec<(Phase, u64)>; 2],
}

impl Transcript {
    pub fn bytes(&self, party: Party, phase: Phase) -> u64 {
        self.bytes[party.index()][phase.index()]
    }

    pub fn phase_bytes(&self, phase: Phase) -> u64 {
        self.bytes(Party::P0, phase) + self.bytes(Party::P1, phase)
    }

    pub fn total_bytes(&self) -> u64 {
        Phase::ALL.iter().map(|&p| self.phase_bytes(p)).sum()
    }

    pub fn rounds(&self, phase: Phase) -> u64 {
        self.rounds[phase.index()]
    }

    pub fn total_rounds(&self) -> u64 {
        self.rounds.iter().sum()
    }

    pub fn flushes(&self) -> &[FlushEvent] {
        &self.flushes
    }

    pub fn message_sizes(&self, party: Party) -> &[(Phase, u64)] {
        &self.sizes[party.index()]
    }

    /// Combines the two endpoints' views: byte cells come from the sender's
    /// own counters (only it sees its offline charges), flush history from P0.
    pub fn merge(t0: &Transcript, t1: &Transcript) -> Transcript {
        debug_assert_eq!(t0.rounds, t1.rounds);
        Transcript {
            bytes: [t0.bytes[0], t1.bytes[1]],
            rounds: t0.rounds,
            flushes: t0.flushes.clone(),
            sizes: [t0.sizes[0].clone(), t1.sizes[1].clone()],
        }
    }

    /// Difference `self - earlier` for counters; flush and size logs keep
    /// only the entries added since `earlier`.
    pub fn since(&self, earlier: &Transcript) -> Transcript {
        let mut out = self.clone();
        for p in 0..2 {
            for ph in 0..3 {
                out.bytes[p][ph] -= earlier.bytes[p][ph];
            }
            out.sizes[p] = self.sizes[p][earlier.sizes[p].len()..].to_vec();
        }
        for ph in 0..3 {
            out.rounds[ph] -= earlier.rounds[ph];
        }
        out.flushes = self.flushes[earlier.flushes.len()..].to_vec();
        out
    }

    /// CSV with columns `party,phase,bytes,rounds`; one row per cell.
    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["party", "phase", "bytes", "rounds"])?;
        for party in [Party::P0, Party::P1] {
            for phase in Phase::ALL {
                out.write_record([
                    party.to_string(),
                    phase.to_string(),
                    self.bytes(party, phase).to_string(),
                    self.rounds(phase).to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetworkModel {
    pub rtt_ms: f64,
    pub bandwidth_bps: f64,
}

impl NetworkModel {
    pub const LAN: NetworkModel = NetworkModel { rtt_ms: 0.1, bandwidth_bps: 1e9 };
    pub const MAN: NetworkModel = NetworkModel { rtt_ms: 6.0, bandwidth_bps: 100e6 };
    pub const WAN: NetworkModel = NetworkModel { rtt_ms: 80.0, bandwidth_bps: 40e6 };

    pub fn new(rtt_ms: f64, bandwidth_bps: f64) -> Result<Self> {
        if !(rtt_ms >= 0.0) || !(bandwidth_bps > 0.0) || !bandwidth_bps.is_finite() {
            return Err(Error::ConfigInvalid(format!(
                "network needs rtt >= 0 and bandwidth > 0 (got {rtt_ms} ms, {bandwidth_bps} bit/s)"
            )));
        }
        Ok(NetworkModel { rtt_ms, bandwidth_bps })
    }

    /// `rounds * rtt + bits / bandwidth`, in milliseconds.
    pub fn time_ms(&self, rounds: u64, bytes: u64) -> f64 {
        rounds as f64 * self.rtt_ms + (bytes * 8) as f64 / self.bandwidth_bps * 1000.0
    }
}

/// Accepts `lan`, `man`, `wan`, or `RTT_MS:BANDWIDTH` where the bandwidth is
/// bits per second with an optional `k`, `M` or `G` suffix (`80:40M`).
impl FromStr for NetworkModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lan" => return Ok(NetworkModel::LAN),
            "man" => return Ok(NetworkModel::MAN),
            "wan" => return Ok(NetworkModel::WAN),
            _ => {}
        }
        let bad = || Error::ConfigInvalid(format!("bad network spec {s:?}, expected RTT_MS:BANDWIDTH"));
        let (rtt, bw) = s.split_once(':').ok_or_else(bad)?;
        let rtt: f64 = rtt.trim().parse().map_err(|_| bad())?;
        let bw = bw.trim().trim_end_matches("bps");
        let (digits, scale) = match bw.chars().last() {
            Some('k') | Some('K') => (&bw[..bw.len() - 1], 1e3),
            Some('m') | Some('M') => (&bw[..bw.len() - 1], 1e6),
            Some('g') | Some('G') => (&bw[..bw.len() - 1], 1e9),
            _ => (bw, 1.0),
        };
        let bw: f64 = digits.parse().map_err(|_| bad())?;
        NetworkModel::new(rtt, bw * scale)
    }
}

/// Modeled latency of a whole run over every phase.
pub fn modeled_time(t: &Transcript, nm: &NetworkModel) -> f64 {
    nm.time_ms(t.total_rounds(), t.total_bytes())
}

/// Modeled latency of one phase.
pub fn modeled_phase_time(t: &Transcript, nm: &NetworkModel, phase: Phase) -> f64 {
    nm.time_ms(t.rounds(phase), t.phase_bytes(phase))
}

enum Frame {
    Data(Vec<u8>),
    Flush { bytes: u64, messages: u64 },
}

pub struct Endpoint {
    party: Party,
    phase: Phase,
    tx: Sender<Frame>,
    rx: Receiver<Frame>,
    inbox: VecDeque<Vec<u8>>,
    pending: (u64, u64),
    transcript: Transcript,
}

/// Two connected endpoints, P0 first.
pub fn pair() -> (Endpoint, Endpoint) {
    let (tx0, rx1) = channel();
    let (tx1, rx0) = channel();
    let mk = |party, tx, rx| Endpoint {
        party,
        phase: Phase::Online,
        tx,
        rx,
        inbox: VecDeque::new(),
        pending: (0, 0),
        transcript: Transcript::default(),
    };
    (mk(Party::P0, tx0, rx0), mk(Party::P1, tx1, rx1))
}

impl Endpoint {
    pub fn party(&self) -> Party {
        self.party
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn send(&mut self, msg: Vec<u8>) -> Result<()> {
        let cost = msg.len() as u64 + FRAME_OVERHEAD;
        self.tx.send(Frame::Data(msg)).map_err(|_| Error::ChannelClosed)?;
        let p = self.party.index();
        self.transcript.bytes[p][self.phase.index()] += cost;
        self.transcript.sizes[p].push((self.phase, cost));
        self.pending.0 += cost;
        self.pending.1 += 1;
        Ok(())
    }

    /// Delivers everything sent so far and waits for the peer to do the same.
    pub fn flush_round(&mut self) -> Result<()> {
        let (bytes, messages) = std::mem::take(&mut self.pending);
        self.tx.send(Frame::Flush { bytes, messages }).map_err(|_| Error::ChannelClosed)?;
        let (peer_bytes, peer_messages) = loop {
            match self.rx.recv().map_err(|_| Error::ChannelClosed)? {
                Frame::Data(m) => self.inbox.push_back(m),
                Frame::Flush { bytes, messages } => break (bytes, messages),
            }
        };
        let peer = self.party.other().index();
        self.transcript.bytes[peer][self.phase.index()] += peer_bytes;
        let mut ev = FlushEvent { phase: self.phase, bytes: [0; 2], messages: [0; 2] };
        ev.bytes[self.party.index()] = bytes;
        ev.messages[self.party.index()] = messages;
        ev.bytes[peer] = peer_bytes;
        ev.messages[peer] = peer_messages;
        if ev.crossed() {
            self.transcript.rounds[self.phase.index()] += 1;
        }
        self.transcript.flushes.push(ev);
        Ok(())
    }

    /// Next message delivered by the last flush.
    pub fn recv(&mut self) -> Result<Vec<u8>> {
        self.inbox.pop_front().ok_or(Error::NothingToReceive)
    }

    /// Records correlation material delivered to this party by the dealer.
    pub fn charge_offline(&mut self, bytes: u64) {
        self.transcript.bytes[self.party.index()][Phase::Offline.index()] += bytes;
    }
}

/// Both parties' results and the merged transcript. Each endpoint only
/// learns the peer's byte counts at flush time, hence the merge.
pub struct RunOutput<A, B> {
    pub p0: A,
    pub p1: B,
    pub transcript: Transcript,
}

/// Runs the two parties on scoped threads over a fresh channel pair.
pub fn run_two_party<A, B, FA, FB>(f0: FA, f1: FB) -> Result<RunOutput<A, B>>
where
    FA: FnOnce(&mut Endpoint) -> Result<A> + Send,
    FB: FnOnce(&mut Endpoint) -> Result<B> + Send,
    A: Send,
    B: Send,
{
    let (mut e0, mut e1) = pair();
    // A failing party drops its endpoint right away so the peer unblocks
    // with ChannelClosed instead of waiting on a flush forever.
    let (r0, r1) = std::thread::scope(|s| {
        let h1 = s.spawn(move || f1(&mut e1).map(|v| (v, e1)));
        let r0 = f0(&mut e0).map(|v| (v, e0));
        (r0, h1.join().expect("party P1 panicked"))
    });
    // The peer of a failing party usually sees ChannelClosed; report the
    // root cause instead.
    match (r0, r1) {
        (Ok((p0, e0)), Ok((p1, e1))) => {
            Ok(RunOutput { p0, p1, transcript: Transcript::merge(&e0.transcript, &e1.transcript) })
        }
        (Err(Error::ChannelClosed), Err(e)) | (Err(e), _) | (_, Err(e)) => Err(e),
    }
}
