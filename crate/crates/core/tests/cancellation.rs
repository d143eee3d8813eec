//! A receive from a cancelled peer fails; a send to a cancelled peer
//! succeeds. Checked for one-shot channels, sessions, graded computations
//! and PGV programs.

mod common;

use std::thread;
use std::time::Duration;

use priority_sesh::graded::{bind, g_cancel, g_fork, g_recv, ireturn, run_sesh, DeadlockPolicy, RunError};
use priority_sesh::oneshot::{cancel1, new1, new_sync1, recv1, send1, sync1, RecvError};
use priority_sesh::pgv::{eval, parse, EvalError};
use priority_sesh::session::{self, SessionError, SessionType, Value, ValueKind};

#[test]
fn oneshot_cancel_and_recv() {
    let (tx, rx) = new1::<i64>();
    cancel1(tx);
    assert_eq!(recv1(rx), Err(RecvError::Cancelled));
}

#[test]
fn oneshot_cancel_and_send() {
    let (tx, rx) = new1::<i64>();
    cancel1(rx);
    send1(tx, 5);
}

#[test]
fn oneshot_blocked_receiver_is_woken_by_cancel() {
    let (tx, rx) = new1::<i64>();
    let waiter = thread::spawn(move || recv1(rx));
    thread::sleep(Duration::from_millis(50));
    drop(tx);
    assert_eq!(waiter.join().unwrap(), Err(RecvError::Cancelled));
}

#[test]
fn oneshot_blocked_receiver_is_woken_by_send() {
    let (tx, rx) = new1::<String>();
    let waiter = thread::spawn(move || recv1(rx));
    thread::sleep(Duration::from_millis(50));
    send1(tx, "x".to_string());
    assert_eq!(waiter.join().unwrap().unwrap(), "x");
}

#[test]
fn sync_against_abandoned_peer_fails() {
    let (a, b) = new_sync1();
    drop(b);
    assert_eq!(sync1(a), Err(RecvError::Cancelled));
    let (a, b) = new_sync1();
    let t = thread::spawn(move || sync1(b));
    assert_eq!(sync1(a), Ok(()));
    assert_eq!(t.join().unwrap(), Ok(()));
}

fn int_end() -> SessionType {
    SessionType::send(ValueKind::Int, SessionType::end())
}

#[test]
fn session_cancel_and_recv() {
    let (s, r) = session::new(&int_end());
    session::cancel(s);
    assert!(matches!(session::recv(r), Err(SessionError::Cancelled)));
}

#[test]
fn session_cancel_and_send() {
    let (s, r) = session::new(&int_end());
    session::cancel(r);
    let rest = session::send(Value::Int(1), s).unwrap();
    session::cancel(rest);
}

#[test]
fn session_blocked_receiver_is_woken_by_cancel() {
    let (s, r) = session::new(&int_end());
    let waiter = thread::spawn(move || session::recv(r).map(|(v, _)| v));
    thread::sleep(Duration::from_millis(50));
    session::cancel(s);
    assert!(matches!(waiter.join().unwrap(), Err(SessionError::Cancelled)));
}

#[test]
fn session_close_against_cancel_fails() {
    let (a, b) = session::new(&SessionType::end());
    session::cancel(b);
    assert!(matches!(session::close(a), Err(SessionError::Cancelled)));
}

#[test]
fn crashed_thread_cancels_its_endpoints() {
    let (s, r) = session::new(&int_end());
    session::fork(move || {
        let _held = s;
        panic!("crash mid-protocol");
    });
    assert!(matches!(session::recv(r), Err(SessionError::Cancelled)));
}

#[test]
fn connect_with_cancel_and_recv() {
    let r = session::connect(session::cancel, session::recv, &int_end());
    assert!(matches!(r, Err(SessionError::Cancelled)));
}

#[test]
fn graded_cancel_and_recv() {
    let t = SessionType::send_at(0, ValueKind::Int, SessionType::end_at(1));
    let (s, r) = session::new(&t);
    let recv = g_recv(r).unwrap();
    let b = recv.bounds();
    let m = bind(g_fork(g_cancel(s)), b, move |()| Ok(recv)).unwrap();
    match run_sesh(m, DeadlockPolicy::default()) {
        Err(RunError::Failed(e)) => assert!(e.is_cancellation()),
        other => panic!("unexpected {other:?}"),
    }
    let _ = ireturn(());
}

#[test]
fn pgv_cancel_and_recv_fails() {
    let src = "let (s, r) = new[!0 Int.end 1] () in \
               let () = fork (\\u: Unit. let () = u in cancel s) in \
               let (x, r) = recv r in let () = cancel r in x";
    match eval(&parse(src).unwrap(), DeadlockPolicy::default(), true) {
        Err(EvalError::Run(RunError::Failed(e))) => assert!(e.is_cancellation()),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn pgv_cancel_and_send_succeeds() {
    let src = "let (s, r) = new[!0 Int.end 1] () in \
               let () = fork (\\u: Unit. let () = u in cancel r) in \
               let () = cancel (send (5, s)) in 1";
    let v = eval(&parse(src).unwrap(), DeadlockPolicy::default(), true).unwrap();
    assert_eq!(v, Value::Int(1));
}
