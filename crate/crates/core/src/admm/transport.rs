//! Frame transports: in-process channels and TCP streams. Both move the
//! same encoded bytes.

use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use super::protocol::{Frame, MAX_FRAME_LEN};
use crate::error::{Error, Result};

/// A reliable, ordered frame stream.
pub trait Link: Send {
    fn send(&mut self, frame: &Frame) -> Result<()>;
    /// `Ok(None)` when `timeout` elapses first; `None` waits forever.
    fn recv(&mut self, timeout: Option<Duration>) -> Result<Option<Frame>>;
}

fn closed() -> Error {
    Error::Io(io::Error::new(io::ErrorKind::BrokenPipe, "peer closed the link"))
}

/// One end of an in-process link.
pub struct ChannelLink {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

/// Two connected ends.
pub fn channel_pair() -> (ChannelLink, ChannelLink) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (ChannelLink { tx: a_tx, rx: a_rx }, ChannelLink { tx: b_tx, rx: b_rx })
}

impl Link for ChannelLink {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        self.tx.send(frame.encode()).map_err(|_| closed())
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Option<Frame>> {
        let bytes = match timeout {
            Some(t) => match self.rx.recv_timeout(t) {
                Ok(b) => b,
                Err(RecvTimeoutError::Timeout) => return Ok(None),
                Err(RecvTimeoutError::Disconnected) => return Err(closed()),
            },
            None => self.rx.recv().map_err(|_| closed())?,
        };
        Frame::decode(&bytes).map(Some)
    }
}

/// Frames over a TCP stream. Partial reads survive a timeout.
pub struct TcpLink {
    stream: TcpStream,
    buf: Vec<u8>,
}

impl TcpLink {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        Ok(TcpLink { stream, buf: Vec::new() })
    }

    fn take_frame(&mut self) -> Result<Option<Frame>> {
        if self.buf.len() < 4 {
            return Ok(None);
        }
        let len = u32::from_le_bytes(self.buf[..4].try_into().unwrap());
        if len == 0 || len > MAX_FRAME_LEN {
            return Err(Error::ProtocolMismatch(format!("frame length {len}")));
        }
        let end = 4 + len as usize;
        if self.buf.len() < end {
            return Ok(None);
        }
        let frame = Frame::decode_body(&self.buf[4..end])?;
        self.buf.drain(..end);
        Ok(Some(frame))
    }
}

impl Link for TcpLink {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        self.stream.write_all(&frame.encode())?;
        Ok(())
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Option<Frame>> {
        let deadline = timeout.map(|t| Instant::now() + t);
        let mut chunk = vec![0u8; 1 << 16];
        loop {
            if let Some(f) = self.take_frame()? {
                return Ok(Some(f));
            }
            let wait = match deadline {
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        return Ok(None);
                    }
                    Some((d - now).max(Duration::from_millis(1)))
                }
                None => None,
            };
            self.stream.set_read_timeout(wait)?;
            match self.stream.read(&mut chunk) {
                Ok(0) => return Err(closed()),
                Ok(n) => self.buf.extend_from_slice(&chunk[..n]),
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                    return Ok(None)
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    #[test]
    fn channel_link_moves_frames() {
        let (mut a, mut b) = channel_pair();
        a.send(&Frame::Done { rounds: 3 }).unwrap();
        assert_eq!(b.recv(None).unwrap(), Some(Frame::Done { rounds: 3 }));
        assert_eq!(b.recv(Some(Duration::from_millis(5))).unwrap(), None);
    }

    #[test]
    fn tcp_link_moves_frames() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let t = std::thread::spawn(move || {
            let mut l = TcpLink::new(TcpStream::connect(addr).unwrap()).unwrap();
            l.send(&Frame::RoundZ {
                round: 1,
                z: vec![1.0; 10_000],
            })
            .unwrap();
            l.recv(None).unwrap()
        });
        let mut l = TcpLink::new(listener.accept().unwrap().0).unwrap();
        let f = l.recv(Some(Duration::from_secs(10))).unwrap().unwrap();
        assert!(matches!(f, Frame::RoundZ { round: 1, ref z } if z.len() == 10_000));
        l.send(&Frame::Abort { code: 4 }).unwrap();
        assert_eq!(t.join().unwrap(), Some(Frame::Abort { code: 4 }));
    }
}
