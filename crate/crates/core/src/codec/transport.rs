// SPDX-License-Identifier: Apache-2.0

//! Frames over a reliable byte stream: a 4-byte big-endian length, then the
//! encoded message. The length is checked against the 1 MiB cap before any
//! buffer is allocated.

use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use thiserror::Error;

use super::{decode, encode, DecodeError, EncodeError, Message, MAX_FRAME_LEN};

pub const DEFAULT_PORT: u16 = 7845;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("peer closed the connection")]
    PeerClosed,
    #[error("connection closed mid-frame")]
    Truncated,
    #[error("frame of {0} bytes exceeds the 1 MiB cap")]
    FrameTooLarge(usize),
    #[error("timed out waiting for peer")]
    Timeout,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("decode error: {0}")]
    Decode(#[from] DecodeError),
    #[error("encode error: {0}")]
    Encode(#[from] EncodeError),
}

fn map_io(e: io::Error) -> TransportError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => TransportError::Timeout,
        io::ErrorKind::UnexpectedEof => TransportError::Truncated,
        io::ErrorKind::ConnectionReset | io::ErrorKind::BrokenPipe => TransportError::PeerClosed,
        _ => TransportError::Io(e),
    }
}

pub fn send_frame<W: Write>(w: &mut W, frame: &[u8]) -> Result<(), TransportError> {
    if frame.len() > MAX_FRAME_LEN {
        return Err(TransportError::FrameTooLarge(frame.len()));
    }
    w.write_all(&(frame.len() as u32).to_be_bytes()).map_err(map_io)?;
    w.write_all(frame).map_err(map_io)?;
    w.flush().map_err(map_io)
}

pub fn recv_frame<R: Read>(r: &mut R) -> Result<Vec<u8>, TransportError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < len.len() {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Err(TransportError::PeerClosed),
            Ok(0) => return Err(TransportError::Truncated),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(map_io(e)),
        }
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_LEN {
        return Err(TransportError::FrameTooLarge(len));
    }
    let mut frame = vec![0u8; len];
    r.read_exact(&mut frame).map_err(map_io)?;
    Ok(frame)
}

/// A framed TCP connection carrying protocol messages.
pub struct Connection {
    stream: TcpStream,
}

impl Connection {
    pub fn new(stream: TcpStream, timeout: Option<Duration>) -> io::Result<Self> {
        stream.set_read_timeout(timeout)?;
        stream.set_write_timeout(timeout)?;
        stream.set_nodelay(true)?;
        Ok(Connection { stream })
    }

    pub fn connect(addr: &str, timeout: Option<Duration>) -> io::Result<Self> {
        Connection::new(TcpStream::connect(addr)?, timeout)
    }

    pub fn send_raw(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        send_frame(&mut self.stream, frame)
    }

    pub fn recv_raw(&mut self) -> Result<Vec<u8>, TransportError> {
        recv_frame(&mut self.stream)
    }

    pub fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        let frame = encode(msg)?;
        self.send_raw(&frame)
    }

    pub fn recv(&mut self) -> Result<Message, TransportError> {
        let frame = self.recv_raw()?;
        Ok(decode(&frame)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::EntityId;
    use std::io::Cursor;
    use std::net::TcpListener;

    #[test]
    fn loopback_round_trip() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut conn = Connection::new(stream, Some(Duration::from_secs(5))).unwrap();
            let msg = conn.recv().unwrap();
            conn.send(&msg).unwrap();
        });
        let mut client = Connection::connect(&addr, Some(Duration::from_secs(5))).unwrap();
        let msg = Message::CertFetch { user_id: EntityId(42) };
        client.send(&msg).unwrap();
        assert_eq!(client.recv().unwrap(), msg);
        server.join().unwrap();
    }

    #[test]
    fn stream_errors() {
        let mut empty = Cursor::new(Vec::<u8>::new());
        assert!(matches!(recv_frame(&mut empty), Err(TransportError::PeerClosed)));

        let mut half_len = Cursor::new(vec![0u8, 0]);
        assert!(matches!(recv_frame(&mut half_len), Err(TransportError::Truncated)));

        let mut short = Cursor::new(vec![0, 0, 0, 10, 1, 2, 3]);
        assert!(matches!(recv_frame(&mut short), Err(TransportError::Truncated)));

        let claimed = (2u32 << 20).to_be_bytes().to_vec();
        let mut huge = Cursor::new(claimed);
        assert!(matches!(
            recv_frame(&mut huge),
            Err(TransportError::FrameTooLarge(n)) if n == 2 << 20
        ));

        let mut sink = Vec::new();
        assert!(matches!(
            send_frame(&mut sink, &vec![0; MAX_FRAME_LEN + 1]),
            Err(TransportError::FrameTooLarge(_))
        ));
    }

    #[test]
    fn read_timeout_surfaces() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let _hold = std::thread::spawn(move || {
            let (_stream, _) = listener.accept().unwrap();
            std::thread::sleep(Duration::from_millis(500));
        });
        let mut client = Connection::connect(&addr, Some(Duration::from_millis(50))).unwrap();
        assert!(matches!(client.recv_raw(), Err(TransportError::Timeout)));
    }
}
