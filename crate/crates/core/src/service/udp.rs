use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_channel::{bounded, Receiver, Sender};

use super::AuthService;
use crate::radius::MAX_PACKET_LEN;
use crate::time::Timestamp;

const POLL: Duration = Duration::from_millis(100);
const QUEUE_DEPTH: usize = 4096;

struct Job {
    bytes: Vec<u8>,
    source: SocketAddr,
    socket: Arc<UdpSocket>,
}

/// Bound auth and accounting sockets, not yet serving.
pub struct UdpServer {
    service: Arc<AuthService>,
    auth: Arc<UdpSocket>,
    acct: Arc<UdpSocket>,
    workers: usize,
}

/// A running server. Dropping it does not stop it; call [`ServerHandle::stop`].
pub struct ServerHandle {
    shutdown: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    auth_addr: SocketAddr,
    acct_addr: SocketAddr,
}

impl UdpServer {
    pub fn bind(service: Arc<AuthService>, auth: SocketAddr, acct: SocketAddr, workers: usize) -> io::Result<Self> {
        let auth = UdpSocket::bind(auth)?;
        let acct = UdpSocket::bind(acct)?;
        for s in [&auth, &acct] {
            s.set_read_timeout(Some(POLL))?;
        }
        Ok(UdpServer {
            service,
            auth: Arc::new(auth),
            acct: Arc::new(acct),
            workers: workers.max(1),
        })
    }

    /// One receiver thread per socket feeding a pool of workers, so a request
    /// waiting on a creation guard never blocks unrelated requests.
    pub fn spawn(self) -> io::Result<ServerHandle> {
        let shutdown = Arc::new(AtomicBool::new(false));
        let (tx, rx) = bounded::<Job>(QUEUE_DEPTH);
        let auth_addr = self.auth.local_addr()?;
        let acct_addr = self.acct.local_addr()?;
        let mut threads = Vec::new();
        for socket in [Arc::clone(&self.auth), Arc::clone(&self.acct)] {
            let tx = tx.clone();
            let stop = Arc::clone(&shutdown);
            threads.push(
                thread::Builder::new()
                    .name("radius-recv".into())
                    .spawn(move || receive_loop(socket, tx, stop))?,
            );
        }
        drop(tx);
        for i in 0..self.workers {
            let rx = rx.clone();
            let service = Arc::clone(&self.service);
            threads.push(
                thread::Builder::new()
                    .name(format!("radius-worker-{i}"))
                    .spawn(move || work_loop(service, rx))?,
            );
        }
        log::info!("listening on {auth_addr} (auth) and {acct_addr} (accounting)");
        Ok(ServerHandle {
            shutdown,
            threads,
            auth_addr,
            acct_addr,
        })
    }
}

fn receive_loop(socket: Arc<UdpSocket>, tx: Sender<Job>, stop: Arc<AtomicBool>) {
    let mut buf = vec![0u8; MAX_PACKET_LEN + 1];
    while !stop.load(Ordering::Relaxed) {
        match socket.recv_from(&mut buf) {
            Ok((n, source)) => {
                let job = Job {
                    bytes: buf[..n].to_vec(),
                    source,
                    socket: Arc::clone(&socket),
                };
                if tx.try_send(job).is_err() {
                    log::warn!("request queue full; dropping datagram from {source}");
                }
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => log::error!("recv failed: {e}"),
        }
    }
}

fn work_loop(service: Arc<AuthService>, rx: Receiver<Job>) {
    for job in rx {
        if let Some(reply) = service.handle_datagram(&job.bytes, job.source, Timestamp::now()) {
            if let Err(e) = job.socket.send_to(&reply, job.source) {
                log::warn!("send to {} failed: {e}", job.source);
            }
        }
    }
}

impl ServerHandle {
    pub fn auth_addr(&self) -> SocketAddr {
        self.auth_addr
    }

    pub fn acct_addr(&self) -> SocketAddr {
        self.acct_addr
    }

    /// Stops the receivers, lets workers drain the queue, and joins all threads.
    pub fn stop(self) {
        self.shutdown.store(true, Ordering::Relaxed);
        for t in self.threads {
            let _ = t.join();
        }
    }
}
