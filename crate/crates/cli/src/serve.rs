// SPDX-License-Identifier: Apache-2.0

//! The bank daemon and the ATM's TCP link to it.

use std::io::{self, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde_json::json;

use sfamss::codec::transport::{recv_frame, send_frame, Connection, TransportError};
use sfamss::protocol::{Bank, BankLink};

use crate::error::CliError;

pub const IO_TIMEOUT: Duration = Duration::from_secs(10);
const POLL: Duration = Duration::from_millis(20);

/// Binds the listener; port 0 picks a free port.
pub fn bind(address: &str) -> Result<TcpListener, CliError> {
    let listener = TcpListener::bind(address).map_err(|e| match e.kind() {
        io::ErrorKind::AddrInUse => CliError::PortInUse(port_of(address)),
        _ => CliError::ConnectionFailed {
            addr: address.to_string(),
            reason: e.to_string(),
        },
    })?;
    listener.set_nonblocking(true)?;
    Ok(listener)
}

fn port_of(address: &str) -> u16 {
    address
        .parse::<SocketAddr>()
        .map(|a| a.port())
        .unwrap_or_default()
}

/// Serves until `stop` is set, then saves the store. Each connection runs
/// on its own thread; the bank serializes store access internally.
pub fn serve(bank: Arc<Bank>, listener: TcpListener, stop: Arc<AtomicBool>, out: &mut dyn Write) -> Result<(), CliError> {
    let address = listener.local_addr()?;
    writeln!(out, "{}", json!({"event": "listening", "address": address.to_string()}))?;
    out.flush()?;
    let mut workers = Vec::new();
    let mut served = 0u64;
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                served += 1;
                let bank = bank.clone();
                let stop = stop.clone();
                workers.push(thread::spawn(move || handle_connection(&bank, stream, &stop)));
                workers.retain(|w| !w.is_finished());
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    for w in workers {
        let _ = w.join();
    }
    bank.save()?;
    writeln!(out, "{}", json!({"event": "shutdown", "connections": served, "saved": true}))?;
    out.flush()?;
    Ok(())
}

fn handle_connection(bank: &Bank, mut stream: TcpStream, stop: &AtomicBool) {
    if stream.set_nonblocking(false).is_err() || stream.set_nodelay(true).is_err() {
        return;
    }
    let mut idle = Duration::ZERO;
    let mut probe = [0u8; 1];
    while !stop.load(Ordering::SeqCst) && idle < IO_TIMEOUT {
        // wait for the next frame in short slices so shutdown is noticed,
        // then read the whole frame under the full timeout
        if stream.set_read_timeout(Some(POLL * 10)).is_err() {
            return;
        }
        match stream.peek(&mut probe) {
            Ok(0) => return,
            Ok(_) => {}
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                idle += POLL * 10;
                continue;
            }
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(_) => return,
        }
        idle = Duration::ZERO;
        if stream.set_read_timeout(Some(IO_TIMEOUT)).is_err() || stream.set_write_timeout(Some(IO_TIMEOUT)).is_err() {
            return;
        }
        let Ok(frame) = recv_frame(&mut stream) else {
            return;
        };
        match bank.handle_frame(&frame) {
            Some(reply) if send_frame(&mut stream, &reply).is_ok() => {}
            _ => return,
        }
    }
}

/// An ATM's connection to the bank daemon, opened on first use.
pub struct TcpLink {
    address: String,
    conn: Option<Connection>,
}

impl TcpLink {
    pub fn new(address: &str) -> Self {
        TcpLink {
            address: address.to_string(),
            conn: None,
        }
    }

    fn connect(&mut self) -> io::Result<&mut Connection> {
        if self.conn.is_none() {
            self.conn = Some(Connection::connect(&self.address, Some(IO_TIMEOUT))?);
        }
        Ok(self.conn.as_mut().expect("just connected"))
    }
}

impl BankLink for TcpLink {
    fn round_trip(&mut self, frame: &[u8]) -> Result<Option<Vec<u8>>, String> {
        let conn = self.connect().map_err(|e| e.to_string())?;
        conn.send_raw(frame).map_err(|e| e.to_string())?;
        match conn.recv_raw() {
            Ok(reply) => Ok(Some(reply)),
            Err(TransportError::PeerClosed) => {
                self.conn = None;
                Ok(None)
            }
            Err(e) => {
                self.conn = None;
                Err(e.to_string())
            }
        }
    }
}
