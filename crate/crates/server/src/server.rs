//! Network front end. One listening port carries both the length-prefixed
//! TCP protocol and HTTP: `GET /ws` upgrades to a WebSocket that exchanges
//! one frame body per text message, and `GET /console/...` serves the
//! browser console's static files.

use std::io::{self, BufWriter, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use teleop_core::desktop::PointCloud;
use teleop_core::SceneState;
use tungstenite::{Message, WebSocket};

use crate::hub::{Body, Hub};
use crate::messages::{self as msg, services, topics};
use crate::protocol::{decode_body, encode_body, read_body, salvage, Frame, FrameKind, ProtocolError};
use crate::world::{read_service, ClockMode, Command, Shared, World, WorldConfig};

const HEAD_LIMIT: usize = 16 * 1024;
const WS_POLL: Duration = Duration::from_millis(10);

#[derive(Clone, Debug, Default)]
pub struct ServeOptions {
    /// Directory served under `/console`; built-in placeholder pages otherwise.
    pub console_dir: Option<PathBuf>,
}

struct Ctx {
    hub: Arc<Hub>,
    cmd: Sender<Command>,
    shared: Arc<Shared>,
    console_dir: Option<PathBuf>,
    streams: Mutex<Vec<TcpStream>>,
    stop: AtomicBool,
}

pub struct ServerHandle {
    addr: SocketAddr,
    ctx: Arc<Ctx>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if self.ctx.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = self.ctx.cmd.send(Command::Shutdown);
        // wake the acceptor
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        for s in self.ctx.streams.lock().unwrap().drain(..) {
            let _ = s.shutdown(Shutdown::Both);
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds `addr` and starts the world, clock and acceptor threads.
pub fn serve(
    scene: SceneState,
    cloud: Option<PointCloud>,
    config: WorldConfig,
    addr: impl ToSocketAddrs,
    opts: ServeOptions,
) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let hub = Arc::new(Hub::new());
    let clock = config.clock;
    let tick_period = 1.0 / config.executor.joint_rate;
    let world = World::new(scene, cloud, config, hub.clone())?;
    let shared = world.shared();
    let (cmd, rx) = channel();
    let ctx = Arc::new(Ctx {
        hub,
        cmd: cmd.clone(),
        shared,
        console_dir: opts.console_dir,
        streams: Mutex::new(Vec::new()),
        stop: AtomicBool::new(false),
    });

    let mut threads = Vec::new();
    let pending = (clock == ClockMode::Wall).then(|| Arc::new(AtomicBool::new(false)));
    let p = pending.clone();
    threads.push(thread::Builder::new().name("world".into()).spawn(move || world.run(rx, p))?);
    if let Some(pending) = pending {
        let ctx = ctx.clone();
        threads.push(thread::Builder::new().name("clock".into()).spawn(move || {
            while !ctx.stop.load(Ordering::Relaxed) {
                thread::sleep(Duration::from_secs_f64(tick_period));
                if !pending.swap(true, Ordering::AcqRel) && ctx.cmd.send(Command::Tick).is_err() {
                    break;
                }
            }
        })?);
    }
    let c = ctx.clone();
    threads.push(thread::Builder::new().name("accept".into()).spawn(move || accept_loop(listener, c))?);
    info!("listening on {addr}");
    Ok(ServerHandle { addr, ctx, threads })
}

fn accept_loop(listener: TcpListener, ctx: Arc<Ctx>) {
    for stream in listener.incoming() {
        if ctx.stop.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                warn!("accept: {e}");
                continue;
            }
        };
        let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
        if let Ok(s) = stream.try_clone() {
            let mut all = ctx.streams.lock().unwrap();
            all.retain(|s| s.peer_addr().is_ok());
            all.push(s);
        }
        let ctx = ctx.clone();
        let spawned = thread::Builder::new().name(format!("conn {peer}")).spawn(move || {
            debug!("connection from {peer}");
            if let Err(e) = connection(stream, &ctx) {
                debug!("connection {peer} ended: {e}");
            }
        });
        if let Err(e) = spawned {
            warn!("cannot start connection thread: {e}");
        }
    }
}

fn connection(stream: TcpStream, ctx: &Ctx) -> io::Result<()> {
    let _ = stream.set_nodelay(true);
    let mut first = [0u8; 4];
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        let n = stream.peek(&mut first)?;
        if n == 0 {
            return Ok(());
        }
        if n == 4 || !b"GET ".starts_with(&first[..n]) {
            break;
        }
        if Instant::now() > deadline {
            return Ok(());
        }
        thread::sleep(Duration::from_millis(1));
    }
    if &first == b"GET " {
        // the handle keeps a clone of every stream, so dropping ours does not close it
        let done = http(stream.try_clone()?, ctx);
        let _ = stream.shutdown(Shutdown::Both);
        done
    } else {
        tcp(stream, ctx)
    }
}

/// Routes one decoded frame from a client.
fn dispatch(frame: Frame, conn: u64, out: &Sender<Body>, ctx: &Ctx) {
    let send = |f: Frame| {
        let _ = out.send(Arc::new(encode_body(&f)));
    };
    match frame.kind {
        FrameKind::Topic => {
            if ctx.cmd.send(Command::Publish { frame, reply: out.clone() }).is_err() {
                debug!("publication dropped: server stopping");
            }
        }
        FrameKind::Response | FrameKind::Error => {
            send(Frame::error(&frame.name, frame.id, "clients may only send requests and topics"));
        }
        FrameKind::Request => match frame.name.as_str() {
            services::SUBSCRIBE | services::UNSUBSCRIBE => {
                let req: msg::TopicRequest = match frame.payload_as() {
                    Ok(r) => r,
                    Err(e) => return send(Frame::error(&frame.name, frame.id, e.to_string())),
                };
                if !topics::ALL.contains(&req.topic.as_str()) {
                    return send(Frame::error(&frame.name, frame.id, format!("unknown topic '{}'", req.topic)));
                }
                if frame.name == services::SUBSCRIBE {
                    ctx.hub.subscribe(conn, &req.topic);
                    send(Frame::response(&frame.name, frame.id, &msg::Empty {}));
                    if req.topic == topics::CAMERA {
                        let stamp = ctx.shared.scene().sim_time;
                        send(Frame::topic(topics::CAMERA, &msg::Image::placeholder(stamp)));
                    }
                } else {
                    ctx.hub.unsubscribe(conn, &req.topic);
                    send(Frame::response(&frame.name, frame.id, &msg::Empty {}));
                }
            }
            name => {
                let scene = ctx.shared.scene();
                if let Some(r) = read_service(&frame, &scene, ctx.shared.config()) {
                    return send(match r {
                        Ok(v) => Frame::response(&frame.name, frame.id, &v),
                        Err(m) => Frame::error(&frame.name, frame.id, m),
                    });
                }
                if !services::ALL.contains(&name) {
                    return send(Frame::error(name, frame.id, format!("unknown service '{name}'")));
                }
                let (name, id) = (frame.name.clone(), frame.id);
                if ctx.cmd.send(Command::Request { frame, reply: out.clone() }).is_err() {
                    send(Frame::error(&name, id, "server is shutting down"));
                }
            }
        },
    }
}

fn reject(body: &[u8], e: &ProtocolError) -> Frame {
    let (name, id) = salvage(body);
    Frame::error(&name, id, e.to_string())
}

fn tcp(stream: TcpStream, ctx: &Ctx) -> io::Result<()> {
    let (tx, rx) = channel::<Body>();
    let conn = ctx.hub.register(tx.clone());
    let w = stream.try_clone()?;
    let writer = thread::spawn(move || tcp_writer(w, rx));
    let mut r = io::BufReader::new(stream.try_clone()?);
    let result = loop {
        match read_body(&mut r) {
            Ok(None) => break Ok(()),
            Ok(Some(body)) => match decode_body(&body) {
                Ok(frame) => dispatch(frame, conn, &tx, ctx),
                Err(e) => {
                    debug!("malformed frame: {e}");
                    let _ = tx.send(Arc::new(encode_body(&reject(&body, &e))));
                }
            },
            Err(e @ ProtocolError::TooLong(_)) => {
                // the stream cannot be resynchronised
                let _ = tx.send(Arc::new(encode_body(&Frame::error("", None, e.to_string()))));
                break Ok(());
            }
            Err(ProtocolError::Io(e)) => break Err(e),
            Err(e) => break Err(io::Error::new(io::ErrorKind::InvalidData, e.to_string())),
        }
    };
    ctx.hub.unregister(conn);
    drop(tx);
    let _ = writer.join();
    let _ = stream.shutdown(Shutdown::Both);
    result
}

fn tcp_writer(stream: TcpStream, rx: Receiver<Body>) {
    let mut w = BufWriter::new(stream);
    while let Ok(body) = rx.recv() {
        let mut next = Some(body);
        while let Some(b) = next {
            if w.write_all(&(b.len() as u32).to_be_bytes()).and_then(|_| w.write_all(&b)).is_err() {
                return;
            }
            next = rx.try_recv().ok();
        }
        if w.flush().is_err() {
            return;
        }
    }
}

struct Head {
    path: String,
    upgrade: bool,
    len: usize,
}

/// Peeks the request head without consuming it so the WebSocket handshake
/// can read it again.
fn peek_head(stream: &TcpStream) -> io::Result<Option<Head>> {
    let mut buf = vec![0u8; HEAD_LIMIT];
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        let n = stream.peek(&mut buf)?;
        if let Some(end) = buf[..n].windows(4).position(|w| w == b"\r\n\r\n") {
            let text = String::from_utf8_lossy(&buf[..end]);
            let mut lines = text.lines();
            let path = lines.next().and_then(|l| l.split_whitespace().nth(1)).unwrap_or("/").to_string();
            let upgrade = lines.any(|l| {
                let l = l.to_ascii_lowercase();
                l.starts_with("upgrade:") && l.contains("websocket")
            });
            return Ok(Some(Head { path, upgrade, len: end + 4 }));
        }
        if n == 0 || n == HEAD_LIMIT || Instant::now() > deadline {
            return Ok(None);
        }
        thread::sleep(Duration::from_millis(1));
    }
}

fn http(mut stream: TcpStream, ctx: &Ctx) -> io::Result<()> {
    let Some(head) = peek_head(&stream)? else {
        return respond(&mut stream, 400, "text/plain", b"bad request\n");
    };
    let path = head.path.split('?').next().unwrap_or("/").to_string();
    if path == "/ws" && head.upgrade {
        let ws = tungstenite::accept(stream.try_clone()?).map_err(|e| io::Error::other(e.to_string()))?;
        return websocket(ws, ctx);
    }
    let mut discard = vec![0u8; head.len];
    stream.read_exact(&mut discard)?;
    if path == "/" {
        return redirect(&mut stream, "/console/");
    }
    match console_asset(ctx.console_dir.as_deref(), &path) {
        Some((mime, body)) => respond(&mut stream, 200, mime, &body),
        None => respond(&mut stream, 404, "text/plain", b"not found\n"),
    }
}

fn respond(stream: &mut TcpStream, status: u16, mime: &str, body: &[u8]) -> io::Result<()> {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        _ => "Not Found",
    };
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: {mime}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )?;
    stream.write_all(body)?;
    stream.flush()
}

fn redirect(stream: &mut TcpStream, to: &str) -> io::Result<()> {
    write!(stream, "HTTP/1.1 302 Found\r\nLocation: {to}\r\nContent-Length: 0\r\nConnection: close\r\n\r\n")?;
    stream.flush()
}

const BUILTIN: [(&str, &str); 3] = [
    ("index.html", include_str!("../console/index.html")),
    ("console.js", include_str!("../console/console.js")),
    ("console.css", include_str!("../console/console.css")),
];

fn mime(name: &str) -> &'static str {
    match Path::new(name).extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    }
}

/// Resolves `/console/...` to a file. Paths leaving the directory are refused.
pub fn console_asset(dir: Option<&Path>, url: &str) -> Option<(&'static str, Vec<u8>)> {
    let rel = url.strip_prefix("/console")?;
    let rel = rel.trim_start_matches('/');
    let rel = if rel.is_empty() || rel.ends_with('/') { format!("{rel}index.html") } else { rel.to_string() };
    let p = Path::new(&rel);
    if !p.components().all(|c| matches!(c, Component::Normal(_))) {
        return None;
    }
    match dir {
        Some(d) => std::fs::read(d.join(p)).ok().map(|b| (mime(&rel), b)),
        None => BUILTIN.iter().find(|(n, _)| *n == rel).map(|(n, s)| (mime(n), s.as_bytes().to_vec())),
    }
}

fn websocket(mut ws: WebSocket<TcpStream>, ctx: &Ctx) -> io::Result<()> {
    ws.get_ref().set_read_timeout(Some(WS_POLL))?;
    let (tx, rx) = channel::<Body>();
    let conn = ctx.hub.register(tx.clone());
    let result = ws_loop(&mut ws, &tx, &rx, conn, ctx);
    ctx.hub.unregister(conn);
    let _ = ws.close(None);
    let _ = ws.flush();
    result
}

fn ws_loop(ws: &mut WebSocket<TcpStream>, tx: &Sender<Body>, rx: &Receiver<Body>, conn: u64, ctx: &Ctx) -> io::Result<()> {
    use tungstenite::Error as E;
    let to_io = |e: E| io::Error::other(e.to_string());
    loop {
        let mut wrote = false;
        loop {
            match rx.try_recv() {
                Ok(body) => {
                    let text = String::from_utf8_lossy(&body).into_owned();
                    ws.write(Message::text(text)).map_err(to_io)?;
                    wrote = true;
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return Ok(()),
            }
        }
        if wrote {
            ws.flush().map_err(to_io)?;
        }
        let body = match ws.read() {
            Ok(Message::Text(t)) => t.as_bytes().to_vec(),
            Ok(Message::Binary(b)) => b.to_vec(),
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => continue,
            Err(E::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
            Err(E::ConnectionClosed | E::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(to_io(e)),
        };
        match decode_body(&body) {
            Ok(frame) => dispatch(frame, conn, tx, ctx),
            Err(e) => {
                let _ = tx.send(Arc::new(encode_body(&reject(&body, &e))));
            }
        }
    }
}
