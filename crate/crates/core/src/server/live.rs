use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use tungstenite::{Message, WebSocket};

use super::{ClientMsg, ErrorCode, ServerMsg, Session, TickConfig};
use crate::episode::Episode;
use crate::scene::KinematicTree;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub bind: String,
    pub port: u16,
    pub cfg: TickConfig,
    pub record_dir: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ServeSummary {
    pub sessions: usize,
    pub episodes: Vec<PathBuf>,
}

/// Write an episode as `<dir>/<stem>.jsonl`.
pub fn write_episode(dir: &Path, stem: &str, ep: &Episode) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{stem}.jsonl"));
    let bytes = ep
        .save()
        .map_err(|e| std::io::Error::new(ErrorKind::InvalidData, e.to_string()))?;
    std::fs::write(&path, bytes)?;
    Ok(path)
}

struct Shared {
    tree: KinematicTree,
    scene_hash: String,
    model_hash: String,
    opts: ServeOptions,
    shutdown: Arc<AtomicBool>,
    /// Distinguishes files from different server runs.
    run_stamp: u64,
    written: std::sync::Mutex<Vec<PathBuf>>,
}

/// Accept WebSocket clients until `shutdown` is set; one independent
/// session per connection. Returns once every session has flushed its
/// recordings to `record_dir`.
pub fn serve(
    tree: KinematicTree,
    scene_hash: String,
    model_hash: String,
    opts: ServeOptions,
    shutdown: Arc<AtomicBool>,
    bound: Option<std::sync::mpsc::Sender<u16>>,
) -> std::io::Result<ServeSummary> {
    let listener = TcpListener::bind((opts.bind.as_str(), opts.port))?;
    listener.set_nonblocking(true)?;
    let port = listener.local_addr()?.port();
    info!("listening on {}:{port}", opts.bind);
    if let Some(tx) = bound {
        let _ = tx.send(port);
    }
    let shared = Arc::new(Shared {
        tree,
        scene_hash,
        model_hash,
        opts,
        shutdown: shutdown.clone(),
        run_stamp: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        written: std::sync::Mutex::new(Vec::new()),
    });
    let counter = AtomicUsize::new(0);
    let mut handles = Vec::new();
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, addr)) => {
                let n = counter.fetch_add(1, Ordering::SeqCst);
                let id = format!("s{n:04}");
                info!("session {id} from {addr}");
                let shared = shared.clone();
                handles.push(thread::spawn(move || {
                    if let Err(e) = run_connection(stream, id.clone(), &shared) {
                        warn!("session {id}: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
            Err(e) => return Err(e),
        }
    }
    for h in handles {
        let _ = h.join();
    }
    let episodes = shared.written.lock().expect("no poisoned writers").clone();
    Ok(ServeSummary {
        sessions: counter.load(Ordering::SeqCst),
        episodes,
    })
}

fn flush(session: &mut Session, eps: Vec<Episode>, shared: &Shared, count: &mut usize) {
    for ep in eps {
        let stem = format!("{}_{}_{:03}", shared.run_stamp, session.id, *count);
        *count += 1;
        match write_episode(&shared.opts.record_dir, &stem, &ep) {
            Ok(path) => {
                info!("wrote {} ({} frames)", path.display(), ep.len());
                shared.written.lock().expect("no poisoned writers").push(path);
            }
            Err(e) => warn!("could not write episode {stem}: {e}"),
        }
    }
}

fn send(ws: &mut WebSocket<TcpStream>, msg: &ServerMsg) -> tungstenite::Result<()> {
    ws.send(Message::text(msg.to_json()))
}

fn run_connection(stream: TcpStream, id: String, shared: &Shared) -> tungstenite::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => {
            tungstenite::Error::Io(std::io::Error::new(ErrorKind::TimedOut, "handshake stalled"))
        }
    })?;
    let mut session = Session::new(
        id,
        shared.tree.clone(),
        shared.opts.cfg,
        shared.scene_hash.clone(),
        shared.model_hash.clone(),
    )
    .with_wall_clock();
    let mut written = 0usize;
    send(&mut ws, &session.hello())?;

    let period = Duration::from_secs_f64(shared.opts.cfg.tick_period());
    let mut deadline = Instant::now() + period;
    let result = loop {
        if shared.shutdown.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            let _ = ws.flush();
            break Ok(());
        }
        let wait = deadline
            .saturating_duration_since(Instant::now())
            .max(Duration::from_millis(1));
        ws.get_mut().set_read_timeout(Some(wait))?;
        match ws.read() {
            Ok(Message::Text(text)) => {
                let replies = match ClientMsg::parse(&text) {
                    Ok(msg) => session.handle_message(&msg),
                    Err(e) => vec![ServerMsg::error(ErrorCode::Malformed, e)],
                };
                for r in &replies {
                    send(&mut ws, r)?;
                }
            }
            Ok(Message::Binary(_)) => {
                send(&mut ws, &ServerMsg::error(ErrorCode::Malformed, "binary frames are not accepted"))?;
            }
            Ok(Message::Close(_)) => break Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                break Ok(())
            }
            Err(e) => break Err(e),
        }
        let now = Instant::now();
        if now >= deadline {
            let start = Instant::now();
            let out = session.tick();
            debug!("tick {} took {:?}", session.tick_count(), start.elapsed());
            for m in &out {
                if let Err(e) = send(&mut ws, m) {
                    let eps = session.close();
                    flush(&mut session, eps, shared, &mut written);
                    return Err(e);
                }
            }
            let eps = session.take_finished();
            flush(&mut session, eps, shared, &mut written);
            deadline += period;
            if deadline < now {
                // Fell behind (slow client or machine): drop the backlog.
                deadline = now + period;
            }
        }
    };
    let eps = session.close();
    flush(&mut session, eps, shared, &mut written);
    result
}
