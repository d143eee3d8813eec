//! One-shot channels: exactly one value, one sender, one receiver.
//!
//! Both endpoints are consumed by value, so a second use of an endpoint is
//! rejected by the compiler:
//!
//! ```compile_fail
//! use priority_sesh::oneshot::{new1, send1};
//! let (tx, _rx) = new1::<u32>();
//! send1(tx, 1);
//! send1(tx, 2); // use of moved value
//! ```
//!
//! Dropping an endpoint without using it cancels it. A receiver whose sender
//! was cancelled fails with [`RecvError::Cancelled`]; a sender whose receiver
//! was cancelled succeeds and the value is dropped.

use std::mem;
use std::sync::Arc;

use parking_lot::{Condvar, Mutex};
use thiserror::Error;

use crate::runtime::{self, BlockSite, Runtime};

/// Why a receive did not produce a value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum RecvError {
    /// The sender was cancelled or dropped unused.
    #[error("channel cancelled by peer")]
    Cancelled,
    /// The deadlock watchdog aborted the run while this receive was pending.
    #[error("receive aborted by deadlock watchdog")]
    Aborted,
}

enum State<V> {
    Empty { waiter: Option<(Arc<Runtime>, u64)> },
    Full(V),
    SenderCancelled,
    ReceiverCancelled,
    Taken,
}

struct Cell<V> {
    state: Mutex<State<V>>,
    ready: Condvar,
}

impl<V> Cell<V> {
    /// Wakes a receiver registered on an empty cell. Must be called with the
    /// lock held, after the new state has been written.
    fn wake(&self, waiter: Option<(Arc<Runtime>, u64)>) {
        if let Some((rt, token)) = waiter {
            rt.unblock(token);
        }
        self.ready.notify_one();
    }
}

/// The sending endpoint of a one-shot channel.
pub struct OneShotSender<V> {
    cell: Option<Arc<Cell<V>>>,
}

/// The receiving endpoint of a one-shot channel.
pub struct OneShotReceiver<V> {
    cell: Option<Arc<Cell<V>>>,
}

/// Creates a fresh channel.
pub fn new1<V>() -> (OneShotSender<V>, OneShotReceiver<V>) {
    let cell = Arc::new(Cell { state: Mutex::new(State::Empty { waiter: None }), ready: Condvar::new() });
    (OneShotSender { cell: Some(Arc::clone(&cell)) }, OneShotReceiver { cell: Some(cell) })
}

pub fn send1<V>(tx: OneShotSender<V>, value: V) {
    tx.send(value)
}

pub fn recv1<V: Send + 'static>(rx: OneShotReceiver<V>) -> Result<V, RecvError> {
    rx.recv()
}

/// Explicitly cancels either endpoint; equivalent to dropping it.
pub fn cancel1<E: Cancel>(endpoint: E) {
    endpoint.cancel()
}

/// Endpoints that can be abandoned.
pub trait Cancel {
    fn cancel(self);
}

impl<V> OneShotSender<V> {
    /// Delivers `value`. Never blocks.
    pub fn send(mut self, value: V) {
        let cell = self.cell.take().expect("sender already consumed");
        let mut st = cell.state.lock();
        match mem::replace(&mut *st, State::Taken) {
            State::Empty { waiter } => {
                *st = State::Full(value);
                cell.wake(waiter);
            }
            State::ReceiverCancelled => {
                *st = State::ReceiverCancelled;
                drop(st);
                // Dropped outside the lock: the value may own other endpoints.
                drop(value);
            }
            _ => unreachable!("one-shot cell written twice"),
        }
    }
}

impl<V> Cancel for OneShotSender<V> {
    fn cancel(self) {
        drop(self)
    }
}

impl<V> Drop for OneShotSender<V> {
    fn drop(&mut self) {
        let Some(cell) = self.cell.take() else { return };
        let mut st = cell.state.lock();
        match mem::replace(&mut *st, State::Taken) {
            State::Empty { waiter } => {
                *st = State::SenderCancelled;
                cell.wake(waiter);
            }
            other => *st = other,
        }
    }
}

impl<V: Send + 'static> OneShotReceiver<V> {
    /// Blocks until the value arrives or the sender is cancelled.
    pub fn recv(self) -> Result<V, RecvError> {
        self.recv_at(BlockSite::new("recv1", None))
    }

    pub(crate) fn recv_at(mut self, site: BlockSite) -> Result<V, RecvError> {
        let cell = self.cell.take().expect("receiver already consumed");
        let ctx = runtime::current();
        let mut registered = false;
        let mut st = cell.state.lock();
        loop {
            match mem::replace(&mut *st, State::Taken) {
                State::Full(v) => return Ok(v),
                State::SenderCancelled => {
                    *st = State::SenderCancelled;
                    return Err(RecvError::Cancelled);
                }
                State::Empty { waiter } => {
                    *st = State::Empty { waiter };
                    if let Some((rt, thread)) = &ctx {
                        if rt.is_aborted() {
                            if let State::Empty { waiter: Some((owner, token)) } =
                                mem::replace(&mut *st, State::ReceiverCancelled)
                            {
                                owner.unblock(token);
                            }
                            return Err(RecvError::Aborted);
                        }
                        if !registered {
                            registered = true;
                            let weak = Arc::downgrade(&cell);
                            let waker: Arc<dyn Fn() + Send + Sync> = Arc::new(move || {
                                if let Some(c) = weak.upgrade() {
                                    let _held = c.state.lock();
                                    c.ready.notify_one();
                                }
                            });
                            let token = rt.block(*thread, site, waker);
                            *st = State::Empty { waiter: Some((Arc::clone(rt), token)) };
                        }
                    }
                    cell.ready.wait(&mut st);
                }
                State::ReceiverCancelled | State::Taken => {
                    unreachable!("receiver used after consumption")
                }
            }
        }
    }
}

impl<V> Cancel for OneShotReceiver<V> {
    fn cancel(self) {
        drop(self)
    }
}

impl<V> Drop for OneShotReceiver<V> {
    fn drop(&mut self) {
        let Some(cell) = self.cell.take() else { return };
        let mut st = cell.state.lock();
        let stale = match mem::replace(&mut *st, State::Taken) {
            State::Empty { .. } => {
                *st = State::ReceiverCancelled;
                None
            }
            State::Full(v) => Some(v),
            other => {
                *st = other;
                None
            }
        };
        drop(st);
        drop(stale);
    }
}

/// One half of a two-party rendezvous.
pub struct SyncPoint {
    send_half: OneShotSender<()>,
    recv_half: OneShotReceiver<()>,
}

/// Two cross-wired sync points: each one's sender feeds the other's receiver.
pub fn new_sync1() -> (SyncPoint, SyncPoint) {
    let (tx1, rx1) = new1();
    let (tx2, rx2) = new1();
    (SyncPoint { send_half: tx1, recv_half: rx2 }, SyncPoint { send_half: tx2, recv_half: rx1 })
}

pub fn sync1(point: SyncPoint) -> Result<(), RecvError> {
    point.sync()
}

impl SyncPoint {
    /// Signals the peer, then waits for the peer's signal.
    pub fn sync(self) -> Result<(), RecvError> {
        self.sync_at(BlockSite::new("sync1", None))
    }

    pub(crate) fn sync_at(self, site: BlockSite) -> Result<(), RecvError> {
        self.send_half.send(());
        self.recv_half.recv_at(site)
    }
}

impl Cancel for SyncPoint {
    fn cancel(self) {
        drop(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::thread;
    use std::time::Duration;

    struct Counted(Arc<AtomicUsize>);
    impl Drop for Counted {
        fn drop(&mut self) {
            self.0.fetch_add(1, Ordering::SeqCst);
        }
    }

    #[test]
    fn round_trip() {
        let (tx, rx) = new1();
        send1(tx, 42);
        assert_eq!(recv1(rx), Ok(42));
    }

    #[test]
    fn blocked_receiver_is_woken_by_send() {
        let (tx, rx) = new1();
        let h = thread::spawn(move || recv1(rx));
        thread::sleep(Duration::from_millis(20));
        send1(tx, "x");
        assert_eq!(h.join().unwrap(), Ok("x"));
    }

    #[test]
    fn dropping_both_endpoints_unused_is_silent() {
        let (tx, rx) = new1::<u8>();
        drop(tx);
        drop(rx);
    }

    #[test]
    fn send_after_receiver_cancelled_drops_value() {
        let drops = Arc::new(AtomicUsize::new(0));
        let (tx, rx) = new1();
        cancel1(rx);
        send1(tx, Counted(Arc::clone(&drops)));
        assert_eq!(drops.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn undelivered_value_is_dropped_with_receiver() {
        let drops = Arc::new(AtomicUsize::new(0));
        let (tx, rx) = new1();
        send1(tx, Counted(Arc::clone(&drops)));
        drop(rx);
        assert_eq!(drops.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn recv_after_sender_cancelled_fails() {
        let (tx, rx) = new1::<u8>();
        cancel1(tx);
        assert_eq!(recv1(rx), Err(RecvError::Cancelled));
    }

    #[test]
    fn blocked_receiver_is_woken_by_sender_drop() {
        let (tx, rx) = new1::<u8>();
        let h = thread::spawn(move || recv1(rx));
        thread::sleep(Duration::from_millis(20));
        drop(tx);
        assert_eq!(h.join().unwrap(), Err(RecvError::Cancelled));
    }

    #[test]
    fn sender_in_crashed_thread_cancels() {
        let (tx, rx) = new1::<u8>();
        let crashed = thread::spawn(move || {
            let _tx = tx;
            panic!("crash");
        });
        assert!(crashed.join().is_err());
        assert_eq!(recv1(rx), Err(RecvError::Cancelled));
    }

    #[test]
    fn sync_both_sides() {
        let (a, b) = new_sync1();
        let h = thread::spawn(move || sync1(a));
        assert_eq!(sync1(b), Ok(()));
        assert_eq!(h.join().unwrap(), Ok(()));
    }

    #[test]
    fn sync_against_cancelled_peer_fails() {
        let (a, b) = new_sync1();
        let h = thread::spawn(move || sync1(a));
        thread::sleep(Duration::from_millis(20));
        cancel1(b);
        assert_eq!(h.join().unwrap(), Err(RecvError::Cancelled));
    }

    #[test]
    fn sync_alone_with_idle_peer_blocks() {
        let (a, b) = new_sync1();
        let (done_tx, done_rx) = std::sync::mpsc::channel();
        thread::spawn(move || {
            let r = sync1(a);
            let _ = done_tx.send(r);
        });
        assert!(done_rx.recv_timeout(Duration::from_millis(50)).is_err());
        drop(b);
        assert_eq!(done_rx.recv_timeout(Duration::from_secs(5)).unwrap(), Err(RecvError::Cancelled));
    }

    #[test]
    fn unused_sync_points_are_inert() {
        let (a, b) = new_sync1();
        drop((a, b));
    }
}
