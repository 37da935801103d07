use std::collections::HashMap;
use std::io::{self, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use crate::channels;
use crate::demag::{DemagKernel, FftConvolver};
use crate::error::Result;
use crate::fields::FieldMap;
use crate::lattice::{Dims, GridSpec, SpinField};

use super::wire::{self, Frame, Message, Payload, ReadError, FILM_CHANNELS};

/// Turns a request frame into a response frame. Called concurrently from
/// one thread per connection; an `Err` becomes a status-1 response.
pub trait Handler: Send + Sync {
    fn handle(&self, frame: &Frame) -> std::result::Result<Frame, String>;
}

/// Returns its input.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoHandler;

impl Handler for EchoHandler {
    fn handle(&self, frame: &Frame) -> std::result::Result<Frame, String> {
        Ok(frame.clone())
    }
}

/// Serves the in-process FFT demag field for any film width, building one
/// kernel per width on first use. Responses use the request's dtype.
pub struct FftHandler {
    cell_size_cm: f64,
    ms: f64,
    kernels: Mutex<HashMap<u16, Arc<DemagKernel>>>,
}

impl FftHandler {
    pub fn new(cell_size_cm: f64, ms: f64) -> Self {
        Self {
            cell_size_cm,
            ms,
            kernels: Mutex::new(HashMap::new()),
        }
    }

    fn kernel(&self, w: u16) -> Result<Arc<DemagKernel>> {
        let mut cache = self.kernels.lock().expect("kernel cache poisoned");
        if let Some(k) = cache.get(&w) {
            return Ok(Arc::clone(k));
        }
        let grid = GridSpec::new(w.into(), w.into(), 2, self.cell_size_cm)?;
        let k = Arc::new(DemagKernel::build(&grid)?);
        cache.insert(w, Arc::clone(&k));
        Ok(k)
    }
}

impl Handler for FftHandler {
    fn handle(&self, frame: &Frame) -> std::result::Result<Frame, String> {
        if frame.channels != FILM_CHANNELS || frame.w == 0 {
            return Err(format!(
                "expected a {FILM_CHANNELS}-channel frame of positive width, got w={} channels={}",
                frame.w, frame.channels
            ));
        }
        let dims = Dims::new(frame.w.into(), frame.w.into(), 2);
        let run = || -> Result<Vec<f64>> {
            let spins = SpinField::from_vec(dims, channels::unpack(&frame.payload.to_f64(), dims)?)?;
            let mut conv = FftConvolver::new(self.kernel(frame.w)?);
            let mut out = FieldMap::zeros(dims);
            conv.convolve(&spins, self.ms, &mut out)?;
            Ok(channels::pack(out.as_slice(), dims))
        };
        let h = run().map_err(|e| e.to_string())?;
        Frame::new(frame.w, frame.channels, Payload::from_f64(&h, frame.payload.dtype())).map_err(|e| e.to_string())
    }
}

/// A bound, not yet running, provider server.
pub struct Server {
    listener: TcpListener,
    addr: SocketAddr,
}

/// A server running on a background thread.
pub struct ServerHandle {
    addr: SocketAddr,
    thread: JoinHandle<Result<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Sends the shutdown message and waits for the accept loop to exit.
    pub fn shutdown(self) -> Result<()> {
        send_shutdown(self.addr)?;
        self.thread.join().expect("server thread panicked")
    }
}

/// Asks the server at `addr` to stop accepting connections.
pub fn send_shutdown(addr: impl ToSocketAddrs) -> io::Result<()> {
    let mut s = TcpStream::connect(addr)?;
    s.write_all(&wire::encode(&Message::Shutdown))
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        Ok(Self { listener, addr })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Accepts connections until a shutdown message arrives on any of them.
    /// Connections open at shutdown are served until their clients hang up.
    pub fn run(self, handler: Arc<dyn Handler>) -> Result<()> {
        let stop = Arc::new(AtomicBool::new(false));
        for conn in self.listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match conn {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let (handler, stop, addr) = (Arc::clone(&handler), Arc::clone(&stop), self.addr);
            std::thread::spawn(move || {
                let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
                match serve_connection(stream, &*handler) {
                    Ok(true) => {
                        stop.store(true, Ordering::SeqCst);
                        // Wake the accept loop so it can observe the flag.
                        let _ = TcpStream::connect(addr);
                    }
                    Ok(false) => {}
                    Err(e) => log::debug!("connection {peer} ended: {e}"),
                }
            });
        }
        log::info!("provider server on {} shut down", self.addr);
        Ok(())
    }

    pub fn spawn(self, handler: Arc<dyn Handler>) -> ServerHandle {
        let addr = self.addr;
        ServerHandle {
            addr,
            thread: std::thread::spawn(move || self.run(handler)),
        }
    }
}

/// Serves one client. Returns `Ok(true)` when the client asked for shutdown.
fn serve_connection(mut stream: TcpStream, handler: &dyn Handler) -> io::Result<bool> {
    stream.set_nodelay(true)?;
    loop {
        let reply = match wire::read_message(&mut stream) {
            Ok(Message::Request { id, frame }) => {
                let body = catch_unwind(AssertUnwindSafe(|| handler.handle(&frame)))
                    .unwrap_or_else(|_| Err("handler panicked".to_string()));
                Message::Response { id, body }
            }
            Ok(Message::Shutdown) => return Ok(true),
            Ok(Message::Response { id, .. }) => {
                let msg = Message::Response {
                    id,
                    body: Err("server does not accept responses".into()),
                };
                stream.write_all(&wire::encode(&msg))?;
                return Ok(false);
            }
            Err(ReadError::Closed) => return Ok(false),
            Err(ReadError::Io(e)) => return Err(e),
            Err(ReadError::Wire(e)) => {
                // The stream cannot be resynchronized after a bad message.
                let msg = Message::Response {
                    id: 0,
                    body: Err(format!("malformed request: {e}")),
                };
                stream.write_all(&wire::encode(&msg))?;
                return Ok(false);
            }
        };
        stream.write_all(&wire::encode(&reply))?;
    }
}
