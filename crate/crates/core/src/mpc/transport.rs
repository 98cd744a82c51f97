//! Broker message frames and transports.
//!
//! Frames are tag byte + header + length-prefixed payload, all big-endian.
//! The simulator moves them through in-process queues; the loopback-socket
//! transport pushes the same bytes through a real TCP connection, so the
//! wire format is exercised end to end.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};

use thiserror::Error;

/// Address of the sealed reconstruction gate.
pub const GATE: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame truncated")]
    Truncated,
    #[error("unknown frame tag {0}")]
    UnknownTag(u8),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub tag: u8,
    pub from: u32,
    pub to: u32,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + self.payload.len());
        out.push(self.tag);
        out.extend_from_slice(&self.from.to_be_bytes());
        out.extend_from_slice(&self.to.to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<(Frame, usize), FrameError> {
        if bytes.len() < 13 {
            return Err(FrameError::Truncated);
        }
        let tag = bytes[0];
        let from = u32::from_be_bytes(bytes[1..5].try_into().unwrap());
        let to = u32::from_be_bytes(bytes[5..9].try_into().unwrap());
        let len = u32::from_be_bytes(bytes[9..13].try_into().unwrap()) as usize;
        if bytes.len() < 13 + len {
            return Err(FrameError::Truncated);
        }
        Ok((Frame { tag, from, to, payload: bytes[13..13 + len].to_vec() }, 13 + len))
    }
}

pub trait Transport {
    fn send(&mut self, frame: Frame);
    /// All queued frames, interleaved round-robin over senders so delivery
    /// order is deterministic.
    fn drain(&mut self) -> Vec<Frame>;
}

/// Per-sender queues drained round-robin.
#[derive(Default)]
pub struct InProcessTransport {
    queues: Vec<(u32, VecDeque<Frame>)>,
}

impl InProcessTransport {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Transport for InProcessTransport {
    fn send(&mut self, frame: Frame) {
        match self.queues.binary_search_by_key(&frame.from, |(s, _)| *s) {
            Ok(i) => self.queues[i].1.push_back(frame),
            Err(i) => {
                let mut q = VecDeque::new();
                let sender = frame.from;
                q.push_back(frame);
                self.queues.insert(i, (sender, q));
            }
        }
    }

    fn drain(&mut self) -> Vec<Frame> {
        let mut out = Vec::new();
        loop {
            let mut any = false;
            for (_, q) in self.queues.iter_mut() {
                if let Some(f) = q.pop_front() {
                    out.push(f);
                    any = true;
                }
            }
            if !any {
                break;
            }
        }
        self.queues.clear();
        out
    }
}

/// Same frames over a real localhost socket.
pub struct TcpLoopbackTransport {
    writer: TcpStream,
    reader: TcpStream,
    buffer: Vec<u8>,
}

impl TcpLoopbackTransport {
    pub fn new() -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let writer = TcpStream::connect(addr)?;
        let (reader, _) = listener.accept()?;
        reader.set_nonblocking(true)?;
        writer.set_nodelay(true)?;
        Ok(TcpLoopbackTransport { writer, reader, buffer: Vec::new() })
    }
}

impl Transport for TcpLoopbackTransport {
    fn send(&mut self, frame: Frame) {
        self.writer.write_all(&frame.encode()).expect("loopback write");
    }

    fn drain(&mut self) -> Vec<Frame> {
        self.writer.flush().expect("loopback flush");
        let mut chunk = [0u8; 4096];
        loop {
            match self.reader.read(&mut chunk) {
                Ok(0) => break,
                Ok(n) => self.buffer.extend_from_slice(&chunk[..n]),
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    // Everything written so far must be readable; spin until
                    // the frames currently in flight have landed.
                    if frames_complete(&self.buffer) {
                        break;
                    }
                    std::thread::yield_now();
                }
                Err(e) => panic!("loopback read: {e}"),
            }
        }
        let mut frames = Vec::new();
        let mut offset = 0;
        while offset < self.buffer.len() {
            match Frame::decode(&self.buffer[offset..]) {
                Ok((f, used)) => {
                    frames.push(f);
                    offset += used;
                }
                Err(_) => break,
            }
        }
        self.buffer.drain(..offset);
        // Round-robin over senders, in arrival order within each sender.
        let mut senders: Vec<u32> = frames.iter().map(|f| f.from).collect();
        senders.sort_unstable();
        senders.dedup();
        let mut per: Vec<VecDeque<Frame>> = senders.iter().map(|_| VecDeque::new()).collect();
        for f in frames {
            let i = senders.binary_search(&f.from).unwrap();
            per[i].push_back(f);
        }
        let mut out = Vec::new();
        loop {
            let mut any = false;
            for q in per.iter_mut() {
                if let Some(f) = q.pop_front() {
                    out.push(f);
                    any = true;
                }
            }
            if !any {
                break;
            }
        }
        out
    }
}

fn frames_complete(buffer: &[u8]) -> bool {
    let mut offset = 0;
    while offset < buffer.len() {
        match Frame::decode(&buffer[offset..]) {
            Ok((_, used)) => offset += used,
            Err(_) => return false,
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let f = Frame { tag: 7, from: 2, to: GATE, payload: vec![1, 2, 3, 4, 5] };
        let bytes = f.encode();
        let (back, used) = Frame::decode(&bytes).unwrap();
        assert_eq!(back, f);
        assert_eq!(used, bytes.len());
    }

    #[test]
    fn truncated_frame_rejected() {
        let f = Frame { tag: 1, from: 0, to: 1, payload: vec![9; 10] };
        let bytes = f.encode();
        assert!(matches!(Frame::decode(&bytes[..12]), Err(FrameError::Truncated)));
        assert!(matches!(Frame::decode(&bytes[..bytes.len() - 1]), Err(FrameError::Truncated)));
    }

    #[test]
    fn in_process_round_robin_interleaves_senders() {
        let mut t = InProcessTransport::new();
        for i in 0..3u32 {
            t.send(Frame { tag: 1, from: 0, to: GATE, payload: vec![i as u8] });
        }
        t.send(Frame { tag: 1, from: 1, to: GATE, payload: vec![10] });
        t.send(Frame { tag: 1, from: 1, to: GATE, payload: vec![11] });
        let order: Vec<(u32, u8)> =
            t.drain().into_iter().map(|f| (f.from, f.payload[0])).collect();
        assert_eq!(order, vec![(0, 0), (1, 10), (0, 1), (1, 11), (0, 2)]);
    }

    #[test]
    fn tcp_loopback_delivers_identical_frames() {
        let mut t = TcpLoopbackTransport::new().unwrap();
        let frames: Vec<Frame> = (0..5u32)
            .map(|i| Frame {
                tag: (i % 3) as u8 + 1,
                from: i % 2,
                to: GATE,
                payload: vec![i as u8; (i as usize + 1) * 7],
            })
            .collect();
        for f in &frames {
            t.send(f.clone());
        }
        let got = t.drain();
        assert_eq!(got.len(), frames.len());
        for f in &frames {
            assert!(got.contains(f));
        }
    }
}
