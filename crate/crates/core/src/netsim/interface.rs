use std::collections::VecDeque;

use super::PacketClass;

/// Utilization window used for available-bandwidth estimates.
pub const UTILIZATION_WINDOW_S: f64 = 0.010;

pub fn serialization_time(size_bytes: u32, rate_bps: f64) -> f64 {
    size_bytes as f64 * 8.0 / rate_bps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Accepted,
    Dropped,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Queued {
    pub key: usize,
    pub class: PacketClass,
    pub size: u32,
}

#[derive(Debug, Clone, Copy)]
struct TxEntry {
    expires: f64,
    bytes: u32,
    background: bool,
}

/// FIFO drop-tail output port. Virtual packets share the FIFO but never
/// count towards occupancy or utilization.
#[derive(Debug, Clone)]
pub struct Interface {
    pub rate_bps: f64,
    pub capacity: usize,
    pub reserved_bps: f64,
    window_s: f64,
    queue: VecDeque<Queued>,
    real_waiting: usize,
    busy_until: f64,
    in_service: bool,
    log: VecDeque<TxEntry>,
    bg_bytes: u64,
    other_bytes: u64,
}

impl Interface {
    pub fn new(rate_bps: f64, capacity: usize, reserved_bps: f64) -> Self {
        Self {
            rate_bps,
            capacity,
            reserved_bps,
            window_s: UTILIZATION_WINDOW_S,
            queue: VecDeque::new(),
            real_waiting: 0,
            busy_until: 0.0,
            in_service: false,
            log: VecDeque::new(),
            bg_bytes: 0,
            other_bytes: 0,
        }
    }

    /// Real packets waiting for serialization; the one on the wire is excluded.
    pub fn occupancy(&self) -> usize {
        self.real_waiting
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn busy_until(&self) -> f64 {
        self.busy_until
    }

    pub fn in_service(&self) -> bool {
        self.in_service
    }

    /// Drop-tail admission; virtual packets mirror the verdict a real packet would get.
    pub fn admission(&self) -> Admission {
        if self.real_waiting >= self.capacity {
            Admission::Dropped
        } else {
            Admission::Accepted
        }
    }

    pub fn enqueue(&mut self, key: usize, class: PacketClass, size: u32) -> Admission {
        let verdict = self.admission();
        if verdict == Admission::Accepted {
            self.queue.push_back(Queued { key, class, size });
            if !class.is_virtual() {
                self.real_waiting += 1;
            }
        }
        verdict
    }

    /// Starts transmitting a packet at `start` and returns its finish time.
    pub fn serialize(&mut self, size: u32, class: PacketClass, start: f64) -> f64 {
        if class.is_virtual() {
            return start;
        }
        let finish = start + serialization_time(size, self.rate_bps);
        self.busy_until = self.busy_until.max(finish);
        self.expire(start);
        self.log.push_back(TxEntry {
            expires: start + self.window_s,
            bytes: size,
            background: class == PacketClass::Background,
        });
        if class == PacketClass::Background {
            self.bg_bytes += size as u64;
        } else {
            self.other_bytes += size as u64;
        }
        finish
    }

    fn expire(&mut self, now: f64) {
        while let Some(e) = self.log.front() {
            if e.expires > now {
                break;
            }
            if e.background {
                self.bg_bytes -= e.bytes as u64;
            } else {
                self.other_bytes -= e.bytes as u64;
            }
            self.log.pop_front();
        }
    }

    /// Bandwidth left for non-background traffic over the trailing window.
    /// Background use is capped at `rate - reserved`.
    pub fn available_bandwidth(&mut self, now: f64) -> f64 {
        self.expire(now);
        let bg = self.bg_bytes as f64 * 8.0 / self.window_s;
        let other = self.other_bytes as f64 * 8.0 / self.window_s;
        let bg = bg.min(self.rate_bps - self.reserved_bps);
        (self.rate_bps - bg - other).max(0.0)
    }

    /// `None` when a background packet of `size` may start now, otherwise
    /// the earliest time the reservation lets it start.
    fn background_blocked_until(&mut self, now: f64, size: u32) -> Option<f64> {
        if self.reserved_bps <= 0.0 {
            return None;
        }
        self.expire(now);
        let budget = (self.rate_bps - self.reserved_bps) * self.window_s / 8.0;
        let mut used = self.bg_bytes as f64;
        if used + size as f64 <= budget {
            return None;
        }
        for e in &self.log {
            if e.background {
                used -= e.bytes as f64;
                if used + size as f64 <= budget {
                    return Some(e.expires);
                }
            }
        }
        Some(f64::INFINITY)
    }

    /// Picks the next packet to transmit. Returns `Err(t)` when the head is
    /// held back by the reservation until `t` and nothing may bypass it.
    pub(crate) fn pick(&mut self, now: f64) -> Result<Option<Queued>, f64> {
        let Some(head) = self.queue.front().copied() else {
            return Ok(None);
        };
        let idx = if head.class == PacketClass::Background {
            match self.background_blocked_until(now, head.size) {
                None => 0,
                Some(t) => match self
                    .queue
                    .iter()
                    .position(|q| q.class != PacketClass::Background)
                {
                    Some(i) => i,
                    None => return Err(t),
                },
            }
        } else {
            0
        };
        let q = self.queue.remove(idx).expect("index in range");
        if !q.class.is_virtual() {
            self.real_waiting -= 1;
        }
        Ok(Some(q))
    }

    pub(crate) fn set_in_service(&mut self, busy: bool) {
        self.in_service = busy;
    }
}
