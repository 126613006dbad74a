//! Coordinator/worker frames. Every frame is a little-endian `u32` length
//! (counting the tag byte and payload), a `u8` tag, then the payload. Vector
//! payloads carry weight vectors only, never samples.

use crate::error::{Error, Result};
use crate::wire::{put_f64, put_u32, Cursor};

pub const PROTO_VERSION: u32 = 1;

pub const TAG_HELLO: u8 = 0x01;
pub const TAG_CONFIG: u8 = 0x02;
pub const TAG_ROUND_Z: u8 = 0x03;
pub const TAG_LOCAL_W: u8 = 0x04;
pub const TAG_DONE: u8 = 0x05;
pub const TAG_ABORT: u8 = 0x06;

/// Largest accepted frame body.
pub const MAX_FRAME_LEN: u32 = 1 << 30;

pub const ABORT_TIMEOUT: u16 = 1;
pub const ABORT_PROTOCOL: u16 = 2;
pub const ABORT_NUMERICAL: u16 = 3;
pub const ABORT_SHUTDOWN: u16 = 4;

#[derive(Clone, Debug, PartialEq)]
pub enum Frame {
    Hello {
        version: u32,
        dim: u32,
        block: u32,
    },
    Config {
        c: f64,
        rho: f64,
        max_rounds: u32,
        eps_abs: f64,
        eps_rel: f64,
    },
    RoundZ {
        round: u32,
        z: Vec<f64>,
    },
    LocalW {
        round: u32,
        w: Vec<f64>,
        local_objective: f64,
    },
    Done {
        rounds: u32,
    },
    Abort {
        code: u16,
    },
}

impl Frame {
    pub fn tag(&self) -> u8 {
        match self {
            Frame::Hello { .. } => TAG_HELLO,
            Frame::Config { .. } => TAG_CONFIG,
            Frame::RoundZ { .. } => TAG_ROUND_Z,
            Frame::LocalW { .. } => TAG_LOCAL_W,
            Frame::Done { .. } => TAG_DONE,
            Frame::Abort { .. } => TAG_ABORT,
        }
    }

    /// Length prefix, tag and payload.
    pub fn encode(&self) -> Vec<u8> {
        let mut body = vec![self.tag()];
        match self {
            Frame::Hello { version, dim, block } => {
                put_u32(&mut body, *version);
                put_u32(&mut body, *dim);
                put_u32(&mut body, *block);
            }
            Frame::Config {
                c,
                rho,
                max_rounds,
                eps_abs,
                eps_rel,
            } => {
                put_f64(&mut body, *c);
                put_f64(&mut body, *rho);
                put_u32(&mut body, *max_rounds);
                put_f64(&mut body, *eps_abs);
                put_f64(&mut body, *eps_rel);
            }
            Frame::RoundZ { round, z } => {
                put_u32(&mut body, *round);
                z.iter().for_each(|v| put_f64(&mut body, *v));
            }
            Frame::LocalW {
                round,
                w,
                local_objective,
            } => {
                put_u32(&mut body, *round);
                w.iter().for_each(|v| put_f64(&mut body, *v));
                put_f64(&mut body, *local_objective);
            }
            Frame::Done { rounds } => put_u32(&mut body, *rounds),
            Frame::Abort { code } => body.extend_from_slice(&code.to_le_bytes()),
        }
        let mut out = Vec::with_capacity(body.len() + 4);
        put_u32(&mut out, body.len() as u32);
        out.extend_from_slice(&body);
        out
    }

    /// Decodes a body (tag and payload, without the length prefix).
    pub fn decode_body(body: &[u8]) -> Result<Frame> {
        let mut c = Cursor::new(body);
        let tag = c.u8()?;
        let vector = |c: &mut Cursor, trailing: usize| -> Result<Vec<f64>> {
            let rest = c.remaining();
            if rest < trailing || (rest - trailing) % 8 != 0 {
                return Err(Error::ProtocolMismatch(format!("vector payload of {rest} bytes")));
            }
            c.f64s((rest - trailing) / 8)
        };
        let frame = match tag {
            TAG_HELLO => Frame::Hello {
                version: c.u32()?,
                dim: c.u32()?,
                block: c.u32()?,
            },
            TAG_CONFIG => Frame::Config {
                c: c.f64()?,
                rho: c.f64()?,
                max_rounds: c.u32()?,
                eps_abs: c.f64()?,
                eps_rel: c.f64()?,
            },
            TAG_ROUND_Z => {
                let round = c.u32()?;
                Frame::RoundZ {
                    round,
                    z: vector(&mut c, 0)?,
                }
            }
            TAG_LOCAL_W => {
                let round = c.u32()?;
                let w = vector(&mut c, 8)?;
                Frame::LocalW {
                    round,
                    w,
                    local_objective: c.f64()?,
                }
            }
            TAG_DONE => Frame::Done { rounds: c.u32()? },
            TAG_ABORT => Frame::Abort { code: c.u16()? },
            t => return Err(Error::ProtocolMismatch(format!("unknown tag {t:#04x}"))),
        };
        c.finish().map_err(|_| Error::ProtocolMismatch(format!("oversized frame with tag {tag:#04x}")))?;
        Ok(frame)
    }

    /// Decodes one complete frame including its length prefix.
    pub fn decode(bytes: &[u8]) -> Result<Frame> {
        let mut c = Cursor::new(bytes);
        let len = c.u32()?;
        if len as usize != c.remaining() {
            return Err(Error::ProtocolMismatch(format!(
                "length prefix {len} but {} bytes follow",
                c.remaining()
            )));
        }
        Frame::decode_body(&bytes[4..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let frames = [
            Frame::Hello {
                version: 1,
                dim: 3,
                block: 2,
            },
            Frame::Config {
                c: 0.5,
                rho: 1.0,
                max_rounds: 50,
                eps_abs: 1e-4,
                eps_rel: 1e-3,
            },
            Frame::RoundZ {
                round: 4,
                z: vec![1.0, -2.0, 0.25],
            },
            Frame::LocalW {
                round: 4,
                w: vec![0.0, 1.5, -0.0],
                local_objective: 3.5,
            },
            Frame::Done { rounds: 7 },
            Frame::Abort { code: 3 },
        ];
        for f in frames {
            assert_eq!(Frame::decode(&f.encode()).unwrap(), f);
        }
    }

    #[test]
    fn rejects_unknown_tag_and_bad_length() {
        assert!(matches!(Frame::decode(&[1, 0, 0, 0, 0x09]), Err(Error::ProtocolMismatch(_))));
        assert!(Frame::decode(&[6, 0, 0, 0, 0x05, 1, 0, 0, 0]).is_err());
        assert!(matches!(
            Frame::decode_body(&[TAG_ROUND_Z, 0, 0, 0, 0, 1, 2, 3]),
            Err(Error::ProtocolMismatch(_))
        ));
    }
}
