//! External suppressor over the `AHS1` frame protocol.
//!
//! ```text
//! handshake  host -> peer  "AHS1" u32 sample_rate, u32 frame_len, u32 hop, u32 channels
//!            peer -> host  "AHS1" u32 status (0 = ok)
//! frame      host -> peer  u32 index, channels x frame_len f32
//!            peer -> host  u32 index, frame_len f32
//! shutdown   host -> peer  u32 0xFFFFFFFF
//! ```
//!
//! All integers and samples are little endian. The host sends a sliding
//! window of the last `frame_len` samples per channel on every hop and uses
//! the last `hop` samples of the reply as the block output.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use super::{check_block, StreamContext, Suppressor, SuppressorError};

pub const MAGIC: [u8; 4] = *b"AHS1";
pub const SHUTDOWN: u32 = 0xFFFF_FFFF;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("plugin handshake: bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("plugin refused the stream with status {0}")]
    Status(u32),
    #[error("plugin handshake timed out")]
    HandshakeTimeout,
    #[error("plugin missed the deadline at frame {frame}")]
    Timeout { frame: u32 },
    #[error("plugin stream ended inside frame {frame}")]
    ShortRead { frame: u32 },
    #[error("plugin replied with frame {got}, expected {expected}")]
    FrameMismatch { expected: u32, got: u32 },
    #[error("plugin stream is broken after an earlier error")]
    Broken,
    #[error("plugin io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PluginConfig {
    /// Wall-clock bound on each frame round trip.
    pub deadline: Duration,
    /// Bound on the handshake, which includes peer start-up.
    pub handshake_timeout: Duration,
    pub input_channels: usize,
}

impl Default for PluginConfig {
    fn default() -> Self {
        Self {
            deadline: Duration::from_millis(100),
            handshake_timeout: Duration::from_secs(5),
            input_channels: 1,
        }
    }
}

/// A connected byte stream to a peer.
pub struct Transport {
    pub reader: Box<dyn Read + Send>,
    pub writer: Box<dyn Write + Send>,
    pub child: Option<Child>,
}

pub type TransportFactory = Box<dyn FnMut() -> io::Result<Transport> + Send>;

enum Message {
    Handshake([u8; 4], u32),
    Reply(u32, Vec<f32>),
    Closed,
    Failed(io::Error),
}

/// Reads until the buffer is full; returns how many bytes arrived before EOF.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

fn reader_loop(reader: Box<dyn Read + Send>, frame_len: usize, tx: mpsc::Sender<Message>) {
    let mut r = BufReader::new(reader);
    let mut head = [0u8; 8];
    match read_full(&mut r, &mut head) {
        Ok(8) => {
            let magic = [head[0], head[1], head[2], head[3]];
            let status = u32::from_le_bytes([head[4], head[5], head[6], head[7]]);
            if tx.send(Message::Handshake(magic, status)).is_err() {
                return;
            }
        }
        Ok(_) => {
            let _ = tx.send(Message::Closed);
            return;
        }
        Err(e) => {
            let _ = tx.send(Message::Failed(e));
            return;
        }
    }
    let mut payload = vec![0u8; 4 * frame_len];
    loop {
        let mut idx = [0u8; 4];
        let msg = match read_full(&mut r, &mut idx) {
            Ok(4) => match read_full(&mut r, &mut payload) {
                Ok(n) if n == payload.len() => Message::Reply(
                    u32::from_le_bytes(idx),
                    payload
                        .chunks_exact(4)
                        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                        .collect(),
                ),
                Ok(_) => Message::Closed,
                Err(e) => Message::Failed(e),
            },
            Ok(_) => Message::Closed,
            Err(e) => Message::Failed(e),
        };
        let done = !matches!(msg, Message::Reply(..));
        if tx.send(msg).is_err() || done {
            return;
        }
    }
}

struct Connection {
    writer: BufWriter<Box<dyn Write + Send>>,
    replies: Receiver<Message>,
    child: Option<Child>,
}

impl Connection {
    fn close(mut self) {
        let _ = self.writer.write_all(&SHUTDOWN.to_le_bytes());
        let _ = self.writer.flush();
        drop(self.writer);
        if let Some(mut child) = self.child.take() {
            for _ in 0..20 {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Suppressor backed by an external process or socket.
pub struct PluginSuppressor {
    label: String,
    config: PluginConfig,
    factory: TransportFactory,
    ctx: Option<StreamContext>,
    conn: Option<Connection>,
    windows: Vec<Vec<f32>>,
    frame: u32,
    broken: bool,
}

impl PluginSuppressor {
    pub fn from_factory(label: impl Into<String>, config: PluginConfig, factory: TransportFactory) -> Self {
        Self {
            label: label.into(),
            config,
            factory,
            ctx: None,
            conn: None,
            windows: Vec::new(),
            frame: 0,
            broken: false,
        }
    }

    /// Runs `program args...` and talks over its stdin and stdout.
    pub fn spawn(program: &str, args: &[String], config: PluginConfig) -> Self {
        let program = program.to_string();
        let args = args.to_vec();
        let label = format!("external({})", std::iter::once(&program).chain(&args).cloned().collect::<Vec<_>>().join(" "));
        Self::from_factory(
            label,
            config,
            Box::new(move || {
                let mut child = Command::new(&program)
                    .args(&args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()?;
                let writer = child.stdin.take().expect("piped stdin");
                let reader = child.stdout.take().expect("piped stdout");
                Ok(Transport {
                    reader: Box::new(reader),
                    writer: Box::new(writer),
                    child: Some(child),
                })
            }),
        )
    }

    pub fn tcp(addr: impl ToSocketAddrs + Clone + Send + 'static, config: PluginConfig) -> Self {
        Self::from_factory(
            "external(tcp)",
            config,
            Box::new(move || {
                let stream = TcpStream::connect(addr.clone())?;
                stream.set_nodelay(true)?;
                Ok(Transport {
                    reader: Box::new(stream.try_clone()?),
                    writer: Box::new(stream),
                    child: None,
                })
            }),
        )
    }

    fn connect(&mut self, ctx: &StreamContext) -> Result<(), ProtocolError> {
        if let Some(old) = self.conn.take() {
            old.close();
        }
        let frame_len = ctx.stft.frame_len;
        let t = (self.factory)()?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || reader_loop(t.reader, frame_len, tx));
        let mut conn = Connection {
            writer: BufWriter::new(t.writer),
            replies: rx,
            child: t.child,
        };
        let mut hs = Vec::with_capacity(20);
        hs.extend_from_slice(&MAGIC);
        for v in [ctx.sample_rate, frame_len as u32, ctx.hop() as u32, self.config.input_channels as u32] {
            hs.extend_from_slice(&v.to_le_bytes());
        }
        let sent = conn.writer.write_all(&hs).and_then(|_| conn.writer.flush());
        let reply = conn.replies.recv_timeout(self.config.handshake_timeout);
        let result = match reply {
            Ok(Message::Handshake(magic, _)) if magic != MAGIC => Err(ProtocolError::BadMagic(magic)),
            Ok(Message::Handshake(_, 0)) => sent.map_err(ProtocolError::from),
            Ok(Message::Handshake(_, status)) => Err(ProtocolError::Status(status)),
            Ok(Message::Failed(e)) => Err(e.into()),
            Ok(_) | Err(RecvTimeoutError::Disconnected) => Err(ProtocolError::Io(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "plugin closed during handshake",
            ))),
            Err(RecvTimeoutError::Timeout) => Err(ProtocolError::HandshakeTimeout),
        };
        match result {
            Ok(()) => {
                self.conn = Some(conn);
                Ok(())
            }
            Err(e) => {
                conn.close();
                Err(e)
            }
        }
    }

    fn round_trip(&mut self, hop: usize, output: &mut [f32]) -> Result<(), ProtocolError> {
        let frame = self.frame;
        if frame == SHUTDOWN {
            return Err(ProtocolError::Io(io::Error::other("frame index space exhausted")));
        }
        let conn = self.conn.as_mut().ok_or(ProtocolError::Broken)?;
        let mut msg = Vec::with_capacity(4 + 4 * self.windows.len() * self.windows[0].len());
        msg.extend_from_slice(&frame.to_le_bytes());
        for w in &self.windows {
            for v in w {
                msg.extend_from_slice(&v.to_le_bytes());
            }
        }
        conn.writer.write_all(&msg)?;
        conn.writer.flush()?;
        match conn.replies.recv_timeout(self.config.deadline) {
            Ok(Message::Reply(got, samples)) => {
                if got != frame {
                    return Err(ProtocolError::FrameMismatch { expected: frame, got });
                }
                output.copy_from_slice(&samples[samples.len() - hop..]);
                self.frame += 1;
                Ok(())
            }
            Ok(Message::Failed(e)) => Err(e.into()),
            Ok(_) | Err(RecvTimeoutError::Disconnected) => Err(ProtocolError::ShortRead { frame }),
            Err(RecvTimeoutError::Timeout) => Err(ProtocolError::Timeout { frame }),
        }
    }
}

impl Drop for PluginSuppressor {
    fn drop(&mut self) {
        if let Some(c) = self.conn.take() {
            c.close();
        }
    }
}

impl Suppressor for PluginSuppressor {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn init(&mut self, ctx: &StreamContext) -> Result<(), SuppressorError> {
        if !(1..=2).contains(&self.config.input_channels) {
            return Err(SuppressorError::Config("plugin takes 1 or 2 channels".into()));
        }
        self.ctx = Some(*ctx);
        self.reset()
    }

    fn input_channels(&self) -> usize {
        self.config.input_channels
    }

    fn process(&mut self, inputs: &[&[f32]], output: &mut [f32]) -> Result<(), SuppressorError> {
        check_block(inputs, self.config.input_channels, output)?;
        if self.broken {
            return Err(ProtocolError::Broken.into());
        }
        let hop = output.len();
        let frame_len = self.windows.first().map_or(0, Vec::len);
        if hop > frame_len {
            return Err(SuppressorError::Shape(format!("block {hop} longer than plugin frame {frame_len}")));
        }
        for (w, x) in self.windows.iter_mut().zip(inputs) {
            w.copy_within(hop.., 0);
            w[frame_len - hop..].copy_from_slice(x);
        }
        self.round_trip(hop, output).map_err(|e| {
            self.broken = true;
            e.into()
        })
    }

    /// Reconnects, so the peer starts from a fresh state too.
    fn reset(&mut self) -> Result<(), SuppressorError> {
        let ctx = self
            .ctx
            .ok_or_else(|| SuppressorError::Config("plugin used before init".into()))?;
        self.windows = vec![vec![0.0; ctx.stft.frame_len]; self.config.input_channels];
        self.frame = 0;
        self.broken = true;
        self.connect(&ctx)?;
        self.broken = false;
        Ok(())
    }
}

/// Behaviour of the reference peer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeerMode {
    /// Returns channel 1 unchanged.
    Echo,
    Negate,
    /// Returns the given channel (0-based) unchanged.
    EchoChannel(usize),
    /// Replies to the handshake with the wrong magic.
    BadMagic,
    /// Serves this many frames, then sends half a reply and exits.
    Truncate(u32),
    /// Serves this many frames, then stops replying.
    Stall(u32),
    /// Serves this many frames, then replies with NaN samples.
    Nan(u32),
}

impl FromStr for PeerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |a: Option<&str>| -> Result<u32, String> {
            a.ok_or_else(|| format!("peer mode {name} needs a count, e.g. {name}:10"))?
                .parse()
                .map_err(|e| format!("peer mode {name}: {e}"))
        };
        match name {
            "echo" => Ok(Self::Echo),
            "negate" => Ok(Self::Negate),
            "echo-ch2" => Ok(Self::EchoChannel(1)),
            "bad-magic" => Ok(Self::BadMagic),
            "truncate" => Ok(Self::Truncate(num(arg)?)),
            "stall" => Ok(Self::Stall(num(arg)?)),
            "nan" => Ok(Self::Nan(num(arg)?)),
            _ => Err(format!("unknown peer mode {s:?}")),
        }
    }
}

/// Reference peer: serves one stream until shutdown or EOF.
pub fn serve(reader: impl Read, writer: impl Write, mode: PeerMode) -> io::Result<()> {
    let mut r = BufReader::new(reader);
    let mut w = BufWriter::new(writer);
    let mut hs = [0u8; 20];
    r.read_exact(&mut hs)?;
    let word = |i: usize| u32::from_le_bytes([hs[i], hs[i + 1], hs[i + 2], hs[i + 3]]) as usize;
    let (frame_len, channels) = (word(8), word(16));
    let ok = hs[..4] == MAGIC && frame_len > 0 && (1..=2).contains(&channels);
    if mode == PeerMode::BadMagic {
        w.write_all(b"AHSX")?;
    } else {
        w.write_all(&MAGIC)?;
    }
    w.write_all(&(if ok { 0u32 } else { 1 }).to_le_bytes())?;
    w.flush()?;
    if !ok || mode == PeerMode::BadMagic {
        return Ok(());
    }
    let mut payload = vec![0u8; 4 * frame_len * channels];
    let mut served = 0u32;
    loop {
        let mut idx = [0u8; 4];
        match r.read_exact(&mut idx) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(e),
        }
        if u32::from_le_bytes(idx) == SHUTDOWN {
            return Ok(());
        }
        r.read_exact(&mut payload)?;
        let channel = match mode {
            PeerMode::EchoChannel(c) => c.min(channels - 1),
            _ => 0,
        };
        let src = &payload[4 * frame_len * channel..4 * frame_len * (channel + 1)];
        let mut reply = Vec::with_capacity(4 + src.len());
        reply.extend_from_slice(&idx);
        match mode {
            PeerMode::Nan(n) if served >= n => {
                for _ in 0..frame_len {
                    reply.extend_from_slice(&f32::NAN.to_le_bytes());
                }
            }
            PeerMode::Negate => {
                for b in src.chunks_exact(4) {
                    let v = -f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
                    reply.extend_from_slice(&v.to_le_bytes());
                }
            }
            _ => reply.extend_from_slice(src),
        }
        match mode {
            PeerMode::Truncate(n) if served >= n => {
                w.write_all(&reply[..reply.len() / 2])?;
                w.flush()?;
                return Ok(());
            }
            PeerMode::Stall(n) if served >= n => {
                // keep the stream open until the host gives up
                let mut sink = Vec::new();
                let _ = r.read_to_end(&mut sink);
                return Ok(());
            }
            _ => {}
        }
        w.write_all(&reply)?;
        w.flush()?;
        served += 1;
    }
}
