//! Segmenter wire protocol `aroi-seg/1` over a child's stdin/stdout.
//!
//! ```text
//! child -> engine   {"proto":"aroi-seg/1","name":"...","input_sizes":{"axial":[w,h],"coronal":[w,h],"sagittal":[w,h]}}\n
//! engine -> child   {"view":"axial","w":W,"h":H}\n  + W*H little-endian f32
//! child -> engine   {"status":"ok"}\n               + W*H little-endian f32
//!                   {"status":"error","msg":"..."}\n (no payload)
//! engine -> child   {"cmd":"quit"}\n
//! ```
//!
//! Requests and responses strictly alternate. Stderr is left to the child.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{InputSizes, ProbMap2D, Segmenter, SegmenterSpec};
use crate::error::{Error, Result};
use crate::volume::{Patch2D, PatchKind, View};

pub const PROTOCOL: &str = "aroi-seg/1";
pub const DEFAULT_HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Serialize, Deserialize)]
struct Handshake {
    proto: String,
    name: String,
    input_sizes: InputSizes,
}

#[derive(Debug, Serialize, Deserialize)]
struct RequestHeader {
    view: View,
    w: usize,
    h: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
enum Response {
    Ok,
    Error { msg: String },
}

#[derive(Debug, Serialize)]
struct Quit {
    cmd: &'static str,
}

/// Byte and value accounting for one connection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ProtocolStats {
    pub requests: u64,
    pub error_responses: u64,
    pub payload_bytes_sent: u64,
    pub payload_bytes_received: u64,
    /// Response values outside `[0,1]` that were clamped.
    pub clamped_values: u64,
}

type Reader = Box<dyn BufRead + Send>;
type Writer = Box<dyn Write + Send>;

/// Client side of the protocol.
pub struct ExternalSegmenter {
    spec: SegmenterSpec,
    reader: Reader,
    writer: Writer,
    child: Option<Child>,
    strict: bool,
    stats: ProtocolStats,
    closed: bool,
}

impl std::fmt::Debug for ExternalSegmenter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalSegmenter")
            .field("spec", &self.spec)
            .field("strict", &self.strict)
            .field("stats", &self.stats)
            .finish()
    }
}

fn read_line_with_timeout(reader: Reader, timeout: Duration) -> Result<(Reader, String)> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut reader = reader;
        let mut line = String::new();
        let res = reader.read_line(&mut line).map(|_| line);
        let _ = tx.send((reader, res));
    });
    match rx.recv_timeout(timeout) {
        Ok((reader, Ok(line))) => Ok((reader, line)),
        Ok((_, Err(e))) => Err(Error::MalformedHandshake(format!("read failed: {e}"))),
        Err(_) => Err(Error::HandshakeTimeout(timeout)),
    }
}

fn parse_handshake(line: &str) -> Result<SegmenterSpec> {
    if line.is_empty() {
        return Err(Error::MalformedHandshake("stream closed before handshake".into()));
    }
    let hs: Handshake =
        serde_json::from_str(line.trim_end_matches(['\n', '\r'])).map_err(|e| Error::MalformedHandshake(e.to_string()))?;
    if hs.proto != PROTOCOL {
        return Err(Error::MalformedHandshake(format!(
            "unsupported protocol {:?}",
            hs.proto
        )));
    }
    SegmenterSpec::new(hs.name, hs.input_sizes).map_err(|e| Error::MalformedHandshake(e.to_string()))
}

impl ExternalSegmenter {
    /// Performs the handshake over an already-open pair of streams.
    pub fn connect(
        reader: impl BufRead + Send + 'static,
        writer: impl Write + Send + 'static,
        timeout: Duration,
    ) -> Result<Self> {
        let (reader, line) = read_line_with_timeout(Box::new(reader), timeout)?;
        let spec = parse_handshake(&line)?;
        Ok(Self {
            spec,
            reader,
            writer: Box::new(writer),
            child: None,
            strict: false,
            stats: ProtocolStats::default(),
            closed: false,
        })
    }

    /// In strict mode out-of-range probabilities are errors instead of being
    /// clamped.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn stats(&self) -> ProtocolStats {
        self.stats
    }

    /// Sends `quit` and waits for the child, if any, to exit.
    pub fn shutdown(mut self) -> Result<Option<std::process::ExitStatus>> {
        self.send_quit()?;
        Ok(self.reap())
    }

    fn send_quit(&mut self) -> Result<()> {
        if self.closed {
            return Ok(());
        }
        self.closed = true;
        let mut line = serde_json::to_string(&Quit { cmd: "quit" })?;
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        Ok(())
    }

    fn reap(&mut self) -> Option<std::process::ExitStatus> {
        let mut child = self.child.take()?;
        let deadline = Instant::now() + Duration::from_secs(2);
        loop {
            match child.try_wait() {
                Ok(Some(status)) => return Some(status),
                Ok(None) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(5)),
                _ => {
                    let _ = child.kill();
                    return child.wait().ok();
                }
            }
        }
    }

    fn read_response_line(&mut self) -> Result<String> {
        let mut line = String::new();
        let n = self.reader.read_line(&mut line)?;
        if n == 0 {
            return Err(Error::Protocol("segmenter closed its output".into()));
        }
        Ok(line)
    }
}

impl Drop for ExternalSegmenter {
    fn drop(&mut self) {
        let _ = self.send_quit();
        self.reap();
    }
}

impl Segmenter for ExternalSegmenter {
    fn spec(&self) -> &SegmenterSpec {
        &self.spec
    }

    fn predict(&mut self, view: View, patch: &Patch2D) -> Result<ProbMap2D> {
        if self.closed {
            return Err(Error::Protocol("connection already shut down".into()));
        }
        let (w, h) = patch.dims();
        let mut frame = serde_json::to_string(&RequestHeader { view, w, h })?.into_bytes();
        frame.push(b'\n');
        let header_len = frame.len();
        frame.extend(patch.pixels().iter().flat_map(|v| v.to_le_bytes()));
        self.writer.write_all(&frame)?;
        self.writer.flush()?;
        self.stats.requests += 1;
        self.stats.payload_bytes_sent += (frame.len() - header_len) as u64;

        let line = self.read_response_line()?;
        let response: Response = serde_json::from_str(line.trim_end_matches(['\n', '\r']))
            .map_err(|e| Error::Protocol(format!("bad response header {line:?}: {e}")))?;
        if let Response::Error { msg } = response {
            self.stats.error_responses += 1;
            return Err(Error::Backend(msg));
        }
        let mut payload = vec![0u8; w * h * 4];
        self.reader
            .read_exact(&mut payload)
            .map_err(|e| Error::Protocol(format!("short response payload: {e}")))?;
        self.stats.payload_bytes_received += payload.len() as u64;

        let mut pixels = Vec::with_capacity(w * h);
        let mut clamped = 0u64;
        for b in payload.chunks_exact(4) {
            let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            if !v.is_finite() {
                return Err(Error::Protocol("non-finite probability".into()));
            }
            if !(0.0..=1.0).contains(&v) {
                if self.strict {
                    return Err(Error::Protocol(format!("probability {v} outside [0,1]")));
                }
                clamped += 1;
            }
            pixels.push(v.clamp(0.0, 1.0));
        }
        if clamped > 0 {
            self.stats.clamped_values += clamped;
            log::warn!("{}: clamped {clamped} probabilities into [0,1]", self.spec.name);
        }
        Patch2D::new(w, h, pixels, PatchKind::Probability)
    }
}

/// Starts `command[0]` with the remaining arguments and reads its handshake.
pub fn spawn_external(command: &[String], timeout: Duration) -> Result<ExternalSegmenter> {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| Error::InvalidParameter("empty segmenter command".into()))?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|source| Error::Spawn {
            command: command.join(" "),
            source,
        })?;
    let stdin = child.stdin.take().expect("piped stdin");
    let stdout = child.stdout.take().expect("piped stdout");
    match ExternalSegmenter::connect(BufReader::new(stdout), stdin, timeout) {
        Ok(mut seg) => {
            seg.child = Some(child);
            Ok(seg)
        }
        Err(e) => {
            let _ = child.kill();
            let _ = child.wait();
            Err(e)
        }
    }
}

/// Server side: announces `backend` and answers requests until `quit` or
/// end of input.
///
/// Backend failures and malformed frames are answered with an error
/// response; the loop keeps going.
pub fn serve<R: BufRead, W: Write>(backend: &mut dyn Segmenter, mut input: R, mut output: W) -> Result<ProtocolStats> {
    let mut stats = ProtocolStats::default();
    let hs = Handshake {
        proto: PROTOCOL.into(),
        name: backend.spec().name.clone(),
        input_sizes: backend.spec().input_sizes,
    };
    writeln!(output, "{}", serde_json::to_string(&hs)?)?;
    output.flush()?;

    let mut line = String::new();
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Ok(stats);
        }
        let text = line.trim_end_matches(['\n', '\r']);
        let value: serde_json::Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(e) => {
                respond_error(&mut output, &mut stats, &format!("bad request header: {e}"))?;
                continue;
            }
        };
        if value.get("cmd").and_then(|c| c.as_str()) == Some("quit") {
            return Ok(stats);
        }
        let req: RequestHeader = match serde_json::from_value(value) {
            Ok(r) => r,
            Err(e) => {
                respond_error(&mut output, &mut stats, &format!("bad request header: {e}"))?;
                continue;
            }
        };
        stats.requests += 1;
        let mut payload = vec![0u8; req.w * req.h * 4];
        input.read_exact(&mut payload)?;
        stats.payload_bytes_received += payload.len() as u64;
        let pixels: Vec<f32> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let result = Patch2D::new(req.w, req.h, pixels, PatchKind::Probability)
            .and_then(|p| backend.segment_patch(req.view, &p));
        match result {
            Ok(probs) => {
                let mut frame = serde_json::to_string(&Response::Ok)?.into_bytes();
                frame.push(b'\n');
                let header_len = frame.len();
                frame.extend(probs.pixels().iter().flat_map(|v| v.to_le_bytes()));
                output.write_all(&frame)?;
                output.flush()?;
                stats.payload_bytes_sent += (frame.len() - header_len) as u64;
            }
            Err(e) => respond_error(&mut output, &mut stats, &e.to_string())?,
        }
    }
}

fn respond_error<W: Write>(output: &mut W, stats: &mut ProtocolStats, msg: &str) -> Result<()> {
    stats.error_responses += 1;
    writeln!(
        output,
        "{}",
        serde_json::to_string(&Response::Error { msg: msg.to_string() })?
    )?;
    output.flush()?;
    Ok(())
}
