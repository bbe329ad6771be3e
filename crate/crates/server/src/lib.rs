//! HTTP service around the evidence core: document upload, metric catalog,
//! extraction runs, review workflow and reports. State lives in a directory of
//! JSON files (see [`store`]).

pub mod api;
pub mod config;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

use evidence_core::answerer::{Backend, LexicalBaseline};
use evidence_core::embeddings::WordVectorTable;
use evidence_core::text_prep::StopwordList;
use evidence_core::Result;

pub use api::{router, AppState, Clock};
pub use config::ServiceConfig;
pub use store::Store;

/// Opens the store and loads the answerer, stop words and vectors named in
/// `config`.
pub fn build_state(config: ServiceConfig, clock: Clock) -> Result<AppState> {
    config.validate()?;
    let stopwords = match &config.stopwords_path {
        Some(p) => StopwordList::load(p)?,
        None => StopwordList::english().clone(),
    };
    let answerer: Arc<dyn evidence_core::answerer::Answerer> = match config.answerer.backend {
        Backend::LexicalBaseline => {
            Arc::new(LexicalBaseline::from_config(&config.answerer).with_stopwords(stopwords.clone()))
        }
        Backend::Remote => Arc::from(config.answerer.build()?),
    };
    let vectors = config.vectors_path.as_ref().map(WordVectorTable::load).transpose()?;
    let store = Store::open(&config.store_dir)?;
    Ok(AppState::new(config, store, answerer, stopwords, vectors, clock))
}

pub fn system_clock() -> Clock {
    Arc::new(chrono::Utc::now)
}

/// Serves until Ctrl-C.
pub async fn run(config: ServiceConfig) -> Result<()> {
    let addr = config.listen_addr.clone();
    let state = Arc::new(build_state(config, system_clock())?);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| io_error(&addr, e))?;
    log::info!(
        "listening on {}",
        listener.local_addr().map_err(|e| io_error(&addr, e))?
    );
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| io_error(&addr, e))
}

fn io_error(addr: &str, e: std::io::Error) -> evidence_core::Error {
    evidence_core::Error::Io {
        path: addr.into(),
        source: e,
    }
}

/// A server running on its own runtime thread; stops when dropped.
pub struct BackgroundServer {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl BackgroundServer {
    /// Binds `state.config.listen_addr` (use port 0 for an ephemeral port).
    pub fn start(state: AppState) -> Result<Self> {
        let addr = state.config.listen_addr.clone();
        let listener = std::net::TcpListener::bind(&addr).map_err(|e| io_error(&addr, e))?;
        listener.set_nonblocking(true).map_err(|e| io_error(&addr, e))?;
        let local = listener.local_addr().map_err(|e| io_error(&addr, e))?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let state = Arc::new(state);
        let thread = std::thread::spawn(move || {
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .expect("tokio runtime");
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
                let _ = axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(Self {
            addr: local,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    /// Stops accepting requests and waits for the runtime to finish.
    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

/// [`run`] on a fresh multi-threaded runtime.
pub fn run_blocking(config: ServiceConfig) -> Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| io_error(&config.listen_addr, e))?;
    runtime.block_on(run(config))
}
