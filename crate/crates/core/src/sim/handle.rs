use std::sync::{mpsc, Arc};

use tokio::sync::{oneshot, watch};

use crate::home::DeviceState;

use super::engine::{InstalledRoutine, Simulator};
use super::SimError;

/// Runs against the simulator and returns the reply, which is delivered only
/// after the new view is published.
type Job = Box<dyn FnOnce(&mut Simulator) -> Box<dyn FnOnce() + Send> + Send>;

/// Point-in-time copy published after every mutation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimView {
    pub state: DeviceState,
    pub routines: Vec<InstalledRoutine>,
    pub clock: i64,
    pub desynced: Vec<(String, String)>,
    pub log_len: usize,
}

impl SimView {
    fn of(sim: &Simulator) -> Self {
        SimView {
            state: sim.state().clone(),
            routines: sim.routines().cloned().collect(),
            clock: sim.clock(),
            desynced: sim.desynced(),
            log_len: sim.log().len(),
        }
    }
}

/// Serializes all access to a [`Simulator`] through one writer thread.
///
/// Reads go through [`SimHandle::view`] and never wait on the writer.
#[derive(Clone)]
pub struct SimHandle {
    jobs: mpsc::Sender<Job>,
    view: watch::Receiver<Arc<SimView>>,
}

impl SimHandle {
    pub fn spawn(sim: Simulator) -> Self {
        let (jobs, rx) = mpsc::channel::<Job>();
        let (publish, view) = watch::channel(Arc::new(SimView::of(&sim)));
        std::thread::Builder::new()
            .name("sim-writer".into())
            .spawn(move || {
                let mut sim = sim;
                while let Ok(job) = rx.recv() {
                    let reply = job(&mut sim);
                    publish.send_replace(Arc::new(SimView::of(&sim)));
                    reply();
                }
            })
            .expect("spawn simulator writer");
        SimHandle { jobs, view }
    }

    pub async fn exec<R, F>(&self, f: F) -> Result<R, SimError>
    where
        R: Send + 'static,
        F: FnOnce(&mut Simulator) -> R + Send + 'static,
    {
        let (tx, rx) = oneshot::channel();
        self.jobs
            .send(Box::new(move |sim| {
                let result = f(sim);
                Box::new(move || {
                    let _ = tx.send(result);
                })
            }))
            .map_err(|_| SimError::Closed)?;
        rx.await.map_err(|_| SimError::Closed)
    }

    /// For callers outside an async runtime.
    pub fn exec_blocking<R, F>(&self, f: F) -> Result<R, SimError>
    where
        R: Send + 'static,
        F: FnOnce(&mut Simulator) -> R + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        self.jobs
            .send(Box::new(move |sim| {
                let result = f(sim);
                Box::new(move || {
                    let _ = tx.send(result);
                })
            }))
            .map_err(|_| SimError::Closed)?;
        rx.recv().map_err(|_| SimError::Closed)
    }

    pub fn view(&self) -> Arc<SimView> {
        self.view.borrow().clone()
    }

    pub fn subscribe(&self) -> watch::Receiver<Arc<SimView>> {
        self.view.clone()
    }
}
