//! Newline-delimited JSON protocol for external distribution providers.
//!
//! ```text
//! -> {"v":1,"ctx":[12,7,3],"top_n":4096}
//! <- {"v":1,"entries":[[7,0.41],[3,0.2],...],"tail":0.0003}
//! ```
//!
//! Probabilities travel as the shortest decimal that round-trips to the same
//! 64-bit float, so a client sees exactly the values the server computed.
//! `tail` is the mass of all tokens that were not sent. Failures are answered
//! with `{"v":1,"error":"..."}` and the connection stays open.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{DistributionProvider, LmError, NextTokenDistribution, TokenId, Vocabulary};

pub const PROTOCOL_VERSION: u32 = 1;

/// Client-side tolerance on `sum(entries) + tail == 1`.
pub const WIRE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRequest {
    pub v: u32,
    pub ctx: Vec<u32>,
    pub top_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionResponse {
    pub v: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<(u32, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl DistributionResponse {
    fn error(msg: impl Into<String>) -> Self {
        Self { v: PROTOCOL_VERSION, entries: None, tail: None, error: Some(msg.into()) }
    }
}

/// Answers one request frame. `top_n_cap` bounds the number of entries sent
/// regardless of what the client asks for.
pub fn respond(provider: &dyn DistributionProvider, frame: &str, top_n_cap: usize) -> DistributionResponse {
    let req: ContextRequest = match serde_json::from_str(frame) {
        Ok(r) => r,
        Err(e) => return DistributionResponse::error(format!("malformed frame: {e}")),
    };
    if req.v != PROTOCOL_VERSION {
        return DistributionResponse::error(format!("unsupported protocol version {}", req.v));
    }
    let ctx: Vec<TokenId> = req.ctx.iter().map(|&i| TokenId(i)).collect();
    let dist = match provider.next_distribution(&ctx) {
        Ok(d) => d,
        Err(e) => return DistributionResponse::error(e.to_string()),
    };
    let n = req.top_n.min(top_n_cap).max(1).min(dist.len());
    let (sent, rest) = dist.entries().split_at(n);
    let tail = dist.tail() + rest.iter().map(|e| e.1).sum::<f64>();
    DistributionResponse {
        v: PROTOCOL_VERSION,
        entries: Some(sent.iter().map(|&(id, p)| (id.0, p)).collect()),
        tail: Some(tail),
        error: None,
    }
}

/// Serves frames from `reader` until end of stream.
pub fn serve_stream<R: BufRead, W: Write>(
    provider: &dyn DistributionProvider,
    reader: R,
    mut writer: W,
    top_n_cap: usize,
) -> std::io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = respond(provider, &line, top_n_cap);
        let mut out = serde_json::to_string(&resp).expect("response serializes");
        out.push('\n');
        writer.write_all(out.as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}

/// TCP front end: one thread per connection, each serving one request
/// stream.
pub struct LmServer {
    listener: TcpListener,
    provider: Arc<dyn DistributionProvider>,
    top_n_cap: usize,
}

impl LmServer {
    pub fn bind(
        addr: impl ToSocketAddrs,
        provider: Arc<dyn DistributionProvider>,
        top_n_cap: usize,
    ) -> std::io::Result<Self> {
        Ok(Self { listener: TcpListener::bind(addr)?, provider, top_n_cap })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections forever.
    pub fn run(self) -> std::io::Result<()> {
        for stream in self.listener.incoming() {
            let stream = stream?;
            let provider = Arc::clone(&self.provider);
            let cap = self.top_n_cap;
            std::thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                let reader = match stream.try_clone() {
                    Ok(s) => BufReader::new(s),
                    Err(e) => return log::warn!("connection setup failed: {e}"),
                };
                if let Err(e) = serve_stream(provider.as_ref(), reader, stream, cap) {
                    log::warn!("connection {peer:?} closed: {e}");
                }
            });
        }
        Ok(())
    }
}

/// Checks a response frame and turns it into a distribution.
///
/// Entries keep the exact probabilities the server sent; the untransferred
/// mass is kept as the distribution's tail.
pub fn parse_response(frame: &str, vocab_size: usize) -> Result<NextTokenDistribution, LmError> {
    let resp: DistributionResponse = serde_json::from_str(frame).map_err(|e| LmError::MalformedFrame(e.to_string()))?;
    if resp.v != PROTOCOL_VERSION {
        return Err(LmError::VersionMismatch { expected: PROTOCOL_VERSION, got: resp.v });
    }
    if let Some(err) = resp.error {
        return Err(LmError::Server(err));
    }
    let (entries, tail) = match (resp.entries, resp.tail) {
        (Some(e), Some(t)) => (e, t),
        _ => return Err(LmError::MalformedFrame("missing entries or tail".into())),
    };
    let mut out = Vec::with_capacity(entries.len());
    for (id, p) in entries {
        if id as usize >= vocab_size {
            return Err(LmError::InvalidToken { id, size: vocab_size });
        }
        out.push((TokenId(id), p));
    }
    NextTokenDistribution::with_tolerance(out, tail, WIRE_TOLERANCE)
}

struct Connection {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
}

impl Connection {
    fn round_trip(&mut self, ctx: &[TokenId], top_n: usize) -> Result<String, LmError> {
        let req = ContextRequest { v: PROTOCOL_VERSION, ctx: ctx.iter().map(|t| t.0).collect(), top_n };
        let mut frame = serde_json::to_string(&req).expect("request serializes");
        frame.push('\n');
        let unavailable = |e: std::io::Error| LmError::Unavailable(e.to_string());
        self.writer.write_all(frame.as_bytes()).map_err(unavailable)?;
        self.writer.flush().map_err(unavailable)?;
        let mut line = String::new();
        if self.reader.read_line(&mut line).map_err(unavailable)? == 0 {
            return Err(LmError::Unavailable("connection closed by server".into()));
        }
        Ok(line.trim_end().to_string())
    }
}

/// Client for an external provider speaking the line protocol.
///
/// The server only exposes ids, so the client is given the vocabulary that
/// names them. One connection serves one request at a time.
pub struct RemoteProvider {
    vocab: Vocabulary,
    top_n: usize,
    window: Option<usize>,
    conn: Mutex<Connection>,
}

impl std::fmt::Debug for RemoteProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteProvider").field("top_n", &self.top_n).field("window", &self.window).finish()
    }
}

impl RemoteProvider {
    pub fn connect(addr: impl ToSocketAddrs, vocab: Vocabulary, top_n: usize) -> Result<Self, LmError> {
        let stream = TcpStream::connect(addr).map_err(|e| LmError::Unavailable(e.to_string()))?;
        stream.set_nodelay(true).ok();
        let reader = BufReader::new(stream.try_clone()?);
        Self::from_streams(Box::new(reader), Box::new(stream), vocab, top_n)
    }

    /// Wraps an established byte stream and runs the determinism probe: the
    /// same context is requested twice and the raw responses must be
    /// byte-identical.
    pub fn from_streams(
        reader: Box<dyn BufRead + Send>,
        writer: Box<dyn Write + Send>,
        vocab: Vocabulary,
        top_n: usize,
    ) -> Result<Self, LmError> {
        let mut conn = Connection { reader, writer };
        let probe = [vocab.eos()];
        let first = conn.round_trip(&probe, top_n)?;
        let second = conn.round_trip(&probe, top_n)?;
        if first != second {
            return Err(LmError::NonDeterministic);
        }
        parse_response(&first, vocab.len())?;
        Ok(Self { vocab, top_n, window: None, conn: Mutex::new(conn) })
    }

    /// Declares the server's context window; longer contexts are rejected
    /// client-side.
    pub fn with_window(mut self, window: usize) -> Self {
        self.window = Some(window);
        self
    }

    pub fn top_n(&self) -> usize {
        self.top_n
    }
}

impl DistributionProvider for RemoteProvider {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn window(&self) -> Option<usize> {
        self.window
    }

    fn distribution_for(&self, ctx: &[TokenId]) -> Result<Arc<NextTokenDistribution>, LmError> {
        let line = self.conn.lock().expect("connection lock poisoned").round_trip(ctx, self.top_n)?;
        Ok(Arc::new(parse_response(&line, self.vocab.len())?))
    }
}
