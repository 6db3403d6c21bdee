//! Wall-clock relay between two UDP endpoints through a channel pair.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::ErrorKind;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::{Channel, ChannelPair, ChannelStats, ReplayError, SharedPair, Verdict};

/// IPv4 plus UDP header bytes charged on top of each datagram payload.
pub const DEFAULT_HEADER_BYTES: u32 = 28;
const POLL: Duration = Duration::from_millis(20);
const MAX_DATAGRAM: usize = 65_536;

#[derive(Debug, Clone)]
pub struct RelayConfig {
    /// Socket facing side A; its datagrams enter the forward channel.
    pub listen_a: SocketAddr,
    /// Socket facing side B; its datagrams enter the return channel.
    pub listen_b: SocketAddr,
    /// Destination of forward traffic; learned from B's first datagram if unset.
    pub peer_b: Option<SocketAddr>,
    /// Destination of return traffic; learned from A's datagrams if unset.
    pub peer_a: Option<SocketAddr>,
    pub header_bytes: u32,
}

impl RelayConfig {
    pub fn loopback(peer_b: SocketAddr) -> Self {
        let any: SocketAddr = "127.0.0.1:0".parse().expect("literal address");
        Self {
            listen_a: any,
            listen_b: any,
            peer_b: Some(peer_b),
            peer_a: None,
            header_bytes: DEFAULT_HEADER_BYTES,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DirectionStats {
    pub channel: ChannelStats,
    pub sent: u64,
    /// Released packets with no known destination or a failed send.
    pub unsent: u64,
    pub pending_at_stop: u64,
    pub reorders: u64,
    pub max_lateness_s: f64,
    pub mean_lateness_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RelayStats {
    pub forward: DirectionStats,
    pub ret: DirectionStats,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone)]
pub struct SessionError {
    pub error: String,
    pub partial: RelayStats,
}

impl std::fmt::Display for SessionError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "relay session failed: {}", self.error)
    }
}

impl std::error::Error for SessionError {}

struct Timed {
    release: f64,
    seq: u64,
    data: Vec<u8>,
}

impl PartialEq for Timed {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Timed {}

impl PartialOrd for Timed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timed {
    fn cmp(&self, other: &Self) -> Ordering {
        self.release
            .total_cmp(&other.release)
            .then(self.seq.cmp(&other.seq))
    }
}

#[derive(Default)]
struct Release {
    heap: BinaryHeap<Reverse<Timed>>,
    sent: u64,
    unsent: u64,
    reorders: u64,
    max_seq: Option<u64>,
    lateness_sum: f64,
    max_lateness: f64,
}

struct Direction {
    channel: Arc<Mutex<Channel>>,
    release: Mutex<Release>,
    wake: Condvar,
    /// Where released datagrams go.
    dest: Mutex<Option<SocketAddr>>,
}

struct Shared {
    origin: Instant,
    stop: AtomicBool,
    started: AtomicBool,
    pair: SharedPair,
    fwd: Direction,
    ret: Direction,
    error: Mutex<Option<String>>,
    header_bytes: u32,
}

impl Shared {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }

    fn fail(&self, msg: String) {
        let mut e = self.error.lock().expect("error lock");
        if e.is_none() {
            *e = Some(msg);
        }
        self.stop.store(true, AtomicOrdering::SeqCst);
        self.fwd.wake.notify_all();
        self.ret.wake.notify_all();
    }
}

/// A running relay; dropping it without `stop` detaches the threads.
pub struct RelayHandle {
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
    addr_a: SocketAddr,
    addr_b: SocketAddr,
}

impl RelayHandle {
    pub fn addr_a(&self) -> SocketAddr {
        self.addr_a
    }

    pub fn addr_b(&self) -> SocketAddr {
        self.addr_b
    }

    /// Wall-clock seconds since the relay opened; the channels' time base.
    pub fn elapsed_s(&self) -> f64 {
        self.shared.now()
    }

    pub fn failed(&self) -> bool {
        self.shared.error.lock().expect("error lock").is_some()
    }

    pub fn stop(self) -> Result<RelayStats, SessionError> {
        self.shared.stop.store(true, AtomicOrdering::SeqCst);
        self.shared.fwd.wake.notify_all();
        self.shared.ret.wake.notify_all();
        for t in self.threads {
            let _ = t.join();
        }
        let stats = RelayStats {
            forward: direction_stats(&self.shared.fwd),
            ret: direction_stats(&self.shared.ret),
            elapsed_s: self.shared.now(),
        };
        match self.shared.error.lock().expect("error lock").take() {
            Some(error) => Err(SessionError {
                error,
                partial: stats,
            }),
            None => Ok(stats),
        }
    }
}

fn direction_stats(d: &Direction) -> DirectionStats {
    let channel = d.channel.lock().expect("channel lock").stats().clone();
    let r = d.release.lock().expect("release lock");
    DirectionStats {
        channel,
        sent: r.sent,
        unsent: r.unsent,
        pending_at_stop: r.heap.len() as u64,
        reorders: r.reorders,
        max_lateness_s: r.max_lateness,
        mean_lateness_s: if r.sent > 0 {
            r.lateness_sum / r.sent as f64
        } else {
            0.0
        },
    }
}

/// Binds both sockets and starts ingest and release threads. The channel
/// clocks start at zero when this returns.
pub fn start_relay(pair: ChannelPair, cfg: RelayConfig) -> Result<RelayHandle, ReplayError> {
    let io = |e: std::io::Error| ReplayError::Io(e.to_string());
    let sock_a = UdpSocket::bind(cfg.listen_a).map_err(io)?;
    let sock_b = UdpSocket::bind(cfg.listen_b).map_err(io)?;
    for s in [&sock_a, &sock_b] {
        s.set_read_timeout(Some(POLL)).map_err(io)?;
    }
    let addr_a = sock_a.local_addr().map_err(io)?;
    let addr_b = sock_b.local_addr().map_err(io)?;
    let started = pair.forward.started() && pair.ret.started();
    let pair = pair.into_shared();
    let direction = |channel: Arc<Mutex<Channel>>, dest| Direction {
        channel,
        release: Mutex::new(Release::default()),
        wake: Condvar::new(),
        dest: Mutex::new(dest),
    };
    let shared = Arc::new(Shared {
        origin: Instant::now(),
        stop: AtomicBool::new(false),
        started: AtomicBool::new(started),
        fwd: direction(pair.forward.clone(), cfg.peer_b),
        ret: direction(pair.ret.clone(), cfg.peer_a),
        pair,
        error: Mutex::new(None),
        header_bytes: cfg.header_bytes,
    });
    let sock_a = Arc::new(sock_a);
    let sock_b = Arc::new(sock_b);
    let learn_a = cfg.peer_a.is_none();
    let learn_b = cfg.peer_b.is_none();
    let mut threads = Vec::new();
    {
        let (sh, s) = (shared.clone(), sock_a.clone());
        threads.push(std::thread::spawn(move || ingest(&sh, &s, true, learn_a)));
    }
    {
        let (sh, s) = (shared.clone(), sock_b.clone());
        threads.push(std::thread::spawn(move || ingest(&sh, &s, false, learn_b)));
    }
    {
        let sh = shared.clone();
        threads.push(std::thread::spawn(move || release(&sh, &sock_b, true)));
    }
    {
        let sh = shared.clone();
        threads.push(std::thread::spawn(move || release(&sh, &sock_a, false)));
    }
    Ok(RelayHandle {
        shared,
        threads,
        addr_a,
        addr_b,
    })
}

/// Runs the relay for `duration` of wall-clock time.
pub fn run_realtime_relay(
    pair: ChannelPair,
    cfg: RelayConfig,
    duration: Duration,
) -> Result<RelayStats, SessionError> {
    let h = start_relay(pair, cfg).map_err(|e| SessionError {
        error: e.to_string(),
        partial: RelayStats::default(),
    })?;
    let deadline = Instant::now() + duration;
    while Instant::now() < deadline && !h.failed() {
        std::thread::sleep(POLL.min(deadline.saturating_duration_since(Instant::now())));
    }
    h.stop()
}

fn ingest(sh: &Shared, sock: &UdpSocket, forward: bool, learn_peer: bool) {
    let (dir, back) = if forward {
        (&sh.fwd, &sh.ret)
    } else {
        (&sh.ret, &sh.fwd)
    };
    let mut buf = vec![0u8; MAX_DATAGRAM];
    let mut seq = 0u64;
    while !sh.stop.load(AtomicOrdering::SeqCst) {
        let (n, from) = match sock.recv_from(&mut buf) {
            Ok(x) => x,
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted) => {
                continue
            }
            // Loopback ICMP port-unreachable from an earlier send.
            Err(e) if e.kind() == ErrorKind::ConnectionRefused => continue,
            Err(e) => {
                sh.fail(format!("receive failed: {e}"));
                return;
            }
        };
        if learn_peer {
            *back.dest.lock().expect("dest lock") = Some(from);
        }
        if !sh.started.load(AtomicOrdering::SeqCst) {
            sh.pair.trigger(sh.now());
            sh.started.store(true, AtomicOrdering::SeqCst);
        }
        let size = n as u32 + sh.header_bytes;
        let verdict = {
            let mut ch = dir.channel.lock().expect("channel lock");
            ch.offer(size, sh.now())
        };
        match verdict {
            Ok(Verdict::DeliverAt(release)) => {
                let mut r = dir.release.lock().expect("release lock");
                r.heap.push(Reverse(Timed {
                    release,
                    seq,
                    data: buf[..n].to_vec(),
                }));
                dir.wake.notify_all();
            }
            Ok(Verdict::Dropped(_)) => {}
            Err(e) => {
                sh.fail(e.to_string());
                return;
            }
        }
        seq += 1;
    }
}

fn release(sh: &Shared, out: &UdpSocket, forward: bool) {
    let dir = if forward { &sh.fwd } else { &sh.ret };
    let mut r = dir.release.lock().expect("release lock");
    loop {
        if sh.stop.load(AtomicOrdering::SeqCst) {
            return;
        }
        let Some(next) = r.heap.peek().map(|t| t.0.release) else {
            r = dir.wake.wait_timeout(r, POLL).expect("release lock").0;
            continue;
        };
        let now = sh.now();
        if next > now {
            let wait = Duration::from_secs_f64((next - now).min(POLL.as_secs_f64()));
            r = dir.wake.wait_timeout(r, wait).expect("release lock").0;
            continue;
        }
        let Reverse(item) = r.heap.pop().expect("peeked");
        drop(r);
        let dest = *dir.dest.lock().expect("dest lock");
        let sent_at = sh.now();
        let ok = dest.is_some_and(|d| out.send_to(&item.data, d).is_ok());
        r = dir.release.lock().expect("release lock");
        if !ok {
            r.unsent += 1;
            continue;
        }
        let late = (sent_at - item.release).max(0.0);
        r.sent += 1;
        r.lateness_sum += late;
        r.max_lateness = r.max_lateness.max(late);
        if r.max_seq.is_some_and(|m| item.seq < m) {
            r.reorders += 1;
        } else {
            r.max_seq = Some(item.seq);
        }
    }
}

/// Echoes every datagram back to its sender until stopped.
pub struct EchoServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<u64>>,
}

impl EchoServer {
    pub fn bind(addr: SocketAddr) -> std::io::Result<Self> {
        let sock = UdpSocket::bind(addr)?;
        sock.set_read_timeout(Some(POLL))?;
        let addr = sock.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = std::thread::spawn(move || {
            let mut buf = vec![0u8; MAX_DATAGRAM];
            let mut echoed = 0;
            while !flag.load(AtomicOrdering::SeqCst) {
                if let Ok((n, from)) = sock.recv_from(&mut buf) {
                    if sock.send_to(&buf[..n], from).is_ok() {
                        echoed += 1;
                    }
                }
            }
            echoed
        });
        Ok(Self {
            addr,
            stop,
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops the server and returns the number of echoed datagrams.
    pub fn stop(mut self) -> u64 {
        self.stop.store(true, AtomicOrdering::SeqCst);
        self.thread.take().map_or(0, |t| t.join().unwrap_or(0))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UdpPingReport {
    /// Round-trip time per sequence number; `None` when no reply came back.
    pub rtts_s: Vec<Option<f64>>,
    /// Replies that arrived after a reply with a higher sequence number.
    pub reorders: u64,
}

impl UdpPingReport {
    pub fn replies(&self) -> usize {
        self.rtts_s.iter().flatten().count()
    }

    pub fn mean_rtt_s(&self) -> Option<f64> {
        let v: Vec<f64> = self.rtts_s.iter().flatten().copied().collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Sends `count` datagrams of `payload_bytes` to `target` every `interval`
/// and waits up to `timeout` after the last one for replies.
pub fn udp_ping(
    target: SocketAddr,
    count: u32,
    interval: Duration,
    payload_bytes: usize,
    timeout: Duration,
) -> std::io::Result<UdpPingReport> {
    let sock = UdpSocket::bind("127.0.0.1:0")?;
    sock.set_read_timeout(Some(Duration::from_millis(5)))?;
    let payload_bytes = payload_bytes.max(4);
    let origin = Instant::now();
    let mut sent_at = vec![None; count as usize];
    let mut report = UdpPingReport {
        rtts_s: vec![None; count as usize],
        reorders: 0,
    };
    let mut max_seen: Option<u32> = None;
    let mut buf = vec![0u8; MAX_DATAGRAM];
    let mut next = 0u32;
    let end_of_sends = interval * count.saturating_sub(1);
    loop {
        let now = origin.elapsed();
        if next < count && now >= interval * next {
            let mut msg = vec![0u8; payload_bytes];
            msg[..4].copy_from_slice(&next.to_le_bytes());
            sock.send_to(&msg, target)?;
            sent_at[next as usize] = Some(origin.elapsed().as_secs_f64());
            next += 1;
            continue;
        }
        if next >= count && (now >= end_of_sends + timeout || report.replies() == count as usize) {
            return Ok(report);
        }
        match sock.recv_from(&mut buf) {
            Ok((n, _)) if n >= 4 => {
                let t = origin.elapsed().as_secs_f64();
                let seq = u32::from_le_bytes(buf[..4].try_into().expect("four bytes"));
                let Some(Some(s)) = sent_at.get(seq as usize).copied() else {
                    continue;
                };
                if report.rtts_s[seq as usize].is_none() {
                    report.rtts_s[seq as usize] = Some(t - s);
                }
                if max_seen.is_some_and(|m| seq < m) {
                    report.reorders += 1;
                } else {
                    max_seen = Some(seq);
                }
            }
            Ok(_) => {}
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted | ErrorKind::ConnectionRefused) => {}
            Err(e) => return Err(e),
        }
    }
}
