//! Random PGV programs for property tests.
//!
//! A program is described by a [`Skeleton`]: a number of threads, a set of
//! channels each linking a sender thread to a distinct receiver thread, and
//! for every thread the order in which it acts on its channels. Rendering a
//! skeleton with a priority for every channel gives PGV source in which main
//! creates all channels, forks the other threads, and then runs its own
//! actions, returning the sum of the integers it received.
//!
//! [`well_typed`] builds skeletons from one global order of events, so every
//! thread acts in increasing priority and the program typechecks and runs to
//! completion. [`arbitrary`] interleaves actions at random, which may or may
//! not admit a priority assignment.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    Send(usize),
    Recv(usize),
    Close(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Channel {
    pub sender: usize,
    pub receiver: usize,
    /// `Some(n)` sends the integer `n`; `None` sends unit.
    pub payload: Option<i64>,
    /// Whether both sides close the channel after the message, rather than
    /// cancel it.
    pub closed: bool,
    /// Which of several equivalent spellings the sender uses.
    pub style: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skeleton {
    pub threads: usize,
    pub channels: Vec<Channel>,
    /// For each thread, its actions in program order.
    pub order: Vec<Vec<Event>>,
}

/// Priorities of a channel's message and of its end.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Prio {
    pub message: u64,
    pub end: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct GenConfig {
    pub max_threads: usize,
    pub max_channels: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { max_threads: 4, max_channels: 6 }
    }
}

/// A generated program that typechecks by construction.
#[derive(Clone, Debug)]
pub struct Generated {
    pub skeleton: Skeleton,
    pub priorities: Vec<Prio>,
    pub source: String,
    /// The value the program evaluates to.
    pub expected: i64,
    /// The program's bounds `(first, last)` priority, if it communicates.
    pub window: Option<(u64, u64)>,
}

fn new_channel(rng: &mut impl Rng, threads: usize) -> Channel {
    let sender = rng.gen_range(0..threads);
    let mut receiver = rng.gen_range(0..threads - 1);
    if receiver >= sender {
        receiver += 1;
    }
    Channel {
        sender,
        receiver,
        payload: (receiver == 0).then(|| rng.gen_range(1..=9)),
        closed: false,
        style: rng.gen_range(0..3),
    }
}

/// A program in which every thread acts in increasing priority.
pub fn well_typed(rng: &mut impl Rng, cfg: GenConfig) -> Generated {
    let threads = rng.gen_range(2..=cfg.max_threads.max(2));
    let wanted = rng.gen_range(1..=cfg.max_channels.max(1));
    let mut channels: Vec<Channel> = Vec::new();
    let mut order = vec![Vec::new(); threads];
    let mut message = Vec::new();
    let mut end: Vec<Option<u64>> = Vec::new();
    let mut pending: Vec<usize> = Vec::new();
    let mut next = rng.gen_range(0..3u64);
    while channels.len() < wanted || !pending.is_empty() {
        let open = channels.len() < wanted && (pending.is_empty() || rng.gen_bool(0.6));
        if open {
            let i = channels.len();
            let mut c = new_channel(rng, threads);
            c.closed = rng.gen_bool(0.3);
            order[c.sender].push(Event::Send(i));
            order[c.receiver].push(Event::Recv(i));
            if c.closed {
                pending.push(i);
            }
            channels.push(c);
            message.push(next);
            end.push(None);
        } else {
            let i = pending.swap_remove(rng.gen_range(0..pending.len()));
            order[channels[i].sender].push(Event::Close(i));
            order[channels[i].receiver].push(Event::Close(i));
            end[i] = Some(next);
        }
        next += rng.gen_range(1..=2);
    }
    let priorities: Vec<Prio> =
        message.iter().zip(&end).map(|(&m, e)| Prio { message: m, end: e.unwrap_or(next) }).collect();
    let skeleton = Skeleton { threads, channels, order };
    let source = render(&skeleton, &priorities);
    let expected = skeleton.order[0]
        .iter()
        .filter_map(|e| match e {
            Event::Recv(i) => skeleton.channels[*i].payload,
            _ => None,
        })
        .sum();
    let window = main_window(&skeleton, &priorities);
    Generated { skeleton, priorities, source, expected, window }
}

/// The first and last priority main acts at.
fn main_window(s: &Skeleton, prio: &[Prio]) -> Option<(u64, u64)> {
    let at = |e: &Event| match e {
        Event::Send(i) | Event::Recv(i) => prio[*i].message,
        Event::Close(i) => prio[*i].end,
    };
    let first = s.order[0].first().map(at)?;
    let last = s.order[0].last().map(at)?;
    Some((first, last))
}

/// A skeleton whose threads act on their channels in random order. No
/// channel is closed, so each channel contributes two actions.
pub fn arbitrary(rng: &mut impl Rng, threads: usize, channels: usize) -> Skeleton {
    let threads = threads.max(2);
    let mut order: Vec<Vec<Event>> = vec![Vec::new(); threads];
    let chans: Vec<Channel> = (0..channels).map(|_| new_channel(rng, threads)).collect();
    for (i, c) in chans.iter().enumerate() {
        for (t, e) in [(c.sender, Event::Send(i)), (c.receiver, Event::Recv(i))] {
            let at = rng.gen_range(0..=order[t].len());
            order[t].insert(at, e);
        }
    }
    for o in &mut order {
        if o.len() > 1 && rng.gen_bool(0.5) {
            o.shuffle(rng);
        }
    }
    Skeleton { threads, channels: chans, order }
}

fn session(c: &Channel, p: Prio) -> String {
    let payload = if c.payload.is_some() { "Int" } else { "Unit" };
    format!("!{} {payload}.end {}", p.message, p.end)
}

/// Renders a skeleton as PGV source.
pub fn render(s: &Skeleton, prio: &[Prio]) -> String {
    let mut out = String::new();
    for (i, c) in s.channels.iter().enumerate() {
        let _ = writeln!(out, "let (s{i}, r{i}) = new[{}] () in", session(c, prio[i]));
    }
    for t in 1..s.threads {
        let _ = writeln!(out, "let () = fork (\\u{t}: Unit. let () = u{t} in");
        body(&mut out, s, prio, t);
        out.push_str("  ()) in\n");
    }
    body(&mut out, s, prio, 0);
    let received: Vec<String> = s.order[0]
        .iter()
        .filter_map(|e| match e {
            Event::Recv(i) if s.channels[*i].payload.is_some() => Some(format!("x{i}")),
            _ => None,
        })
        .collect();
    if received.is_empty() {
        out.push_str("0\n");
    } else {
        let _ = writeln!(out, "{}", received.join(" + "));
    }
    out
}

fn body(out: &mut String, s: &Skeleton, prio: &[Prio], t: usize) {
    for e in &s.order[t] {
        out.push_str("  ");
        match *e {
            Event::Send(i) => {
                let c = &s.channels[i];
                let v = c.payload.map_or("()".to_string(), |n| n.to_string());
                if c.closed {
                    let _ = write!(out, "let (s{i}, z{i}) = (send ({v}, s{i}), ()) in let () = z{i} in");
                } else {
                    match c.style {
                        0 => {
                            let _ = write!(out, "let () = cancel (send ({v}, s{i})) in");
                        }
                        1 => {
                            let _ = write!(
                                out,
                                "let () = (\\k{i}: end {}. cancel k{i}) (send ({v}, s{i})) in",
                                prio[i].end
                            );
                        }
                        _ => {
                            let _ = write!(
                                out,
                                "let (s{i}, z{i}) = (send ({v}, s{i}), ()) in let () = z{i} in let () = cancel s{i} in"
                            );
                        }
                    }
                }
            }
            Event::Recv(i) => {
                let c = &s.channels[i];
                let _ = write!(out, "let (x{i}, r{i}) = recv r{i} in");
                if c.payload.is_none() {
                    let _ = write!(out, " let () = x{i} in");
                }
                if !c.closed {
                    let _ = write!(out, " let () = cancel r{i} in");
                }
            }
            Event::Close(i) => {
                let var = if s.channels[i].sender == t { 's' } else { 'r' };
                let _ = write!(out, "let () = close {var}{i} in");
            }
        }
        out.push('\n');
    }
}

/// Every assignment of priorities from `0..levels` to the messages of the
/// skeleton's channels.
pub fn assignments(channels: usize, levels: u64) -> impl Iterator<Item = Vec<Prio>> {
    let total = levels.pow(channels as u32);
    (0..total).map(move |mut code| {
        (0..channels)
            .map(|_| {
                let m = code % levels;
                code /= levels;
                Prio { message: m, end: levels + 5 }
            })
            .collect()
    })
}
