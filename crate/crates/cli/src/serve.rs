//! Line-delimited JSON environment server over stdio or TCP.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;

use anyhow::{Context, Result};
use lemsim_core::protocol::Session;
use lemsim_core::ScenarioConfig;

/// Answers one request per line until `close` or end of input.
pub fn serve_lines<R: BufRead, W: Write>(config: &ScenarioConfig, reader: R, mut writer: W) -> Result<()> {
    let mut session = Session::new(config.clone());
    for line in reader.lines() {
        let line = line.context("reading request")?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(writer, "{}", session.handle_line(&line))?;
        writer.flush()?;
        if session.is_closed() {
            break;
        }
    }
    Ok(())
}

pub fn serve_stdio(config: &ScenarioConfig) -> Result<()> {
    let stdin = std::io::stdin();
    serve_lines(config, stdin.lock(), std::io::stdout().lock())
}

/// Serves connections one at a time, each with a fresh session.
/// `max_connections` bounds the loop (used by tests).
pub fn serve_tcp(config: &ScenarioConfig, listener: TcpListener, max_connections: Option<usize>) -> Result<()> {
    for (n, stream) in listener.incoming().enumerate() {
        let stream = stream.context("accepting connection")?;
        let reader = BufReader::new(stream.try_clone()?);
        if let Err(e) = serve_lines(config, reader, stream) {
            eprintln!("connection ended with error: {e:#}");
        }
        if max_connections.is_some_and(|m| n + 1 >= m) {
            break;
        }
    }
    Ok(())
}
