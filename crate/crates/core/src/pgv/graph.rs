//! Communication graphs of typechecked programs.
//!
//! Nodes are communication actions, solid edges order actions that happen
//! one after the other in the same thread, and pairing edges link the two
//! halves of each communication. A program whose graph has a cycle through
//! its pairing edges can deadlock.
//!
//! The graph is computed by evaluating the program symbolically. Each thread
//! is evaluated to completion on its own; a receive yields a placeholder for
//! whatever its partner sent. Once every thread has been evaluated, actions
//! are matched with their partners by channel and position, which resolves
//! the placeholders, including channels passed over other channels. A `case`
//! on a received value explores both branches, and the actions of the branch
//! that the sender did not choose are dropped.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::sync::Arc;

use petgraph::algo::is_cyclic_directed;
use petgraph::graph::DiGraph;

use super::check::{Prim, Typed, TypedKind};
use super::syntax::ConstK;
use crate::priority::Priority;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActionOp {
    Send,
    Recv,
    Close,
}

impl ActionOp {
    fn pairs_with(self, other: ActionOp) -> bool {
        matches!(
            (self, other),
            (ActionOp::Send, ActionOp::Recv) | (ActionOp::Recv, ActionOp::Send) | (ActionOp::Close, ActionOp::Close)
        )
    }
}

impl fmt::Display for ActionOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionOp::Send => "send",
            ActionOp::Recv => "recv",
            ActionOp::Close => "close",
        })
    }
}

/// One communication action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Action {
    pub op: ActionOp,
    pub priority: u64,
    /// The thread performing the action, numbered in order of creation.
    pub thread: usize,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.op, self.priority)
    }
}

/// Actions, the order between them, and which actions communicate.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommGraph {
    pub nodes: Vec<Action>,
    /// Directed: the first action happens before the second.
    pub edges: Vec<(usize, usize)>,
    /// Undirected: the two actions are the two halves of one communication.
    pub pairs: Vec<(usize, usize)>,
}

impl CommGraph {
    /// Whether following order edges, and crossing freely between paired
    /// actions, can lead from an action back to itself.
    pub fn is_cyclic(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(parent: &mut [usize], x: usize) -> usize {
            let mut root = x;
            while parent[root] != root {
                root = parent[root];
            }
            let mut y = x;
            while parent[y] != root {
                let next = parent[y];
                parent[y] = root;
                y = next;
            }
            root
        }
        for &(a, b) in &self.pairs {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
        let mut g: DiGraph<(), ()> = DiGraph::new();
        let ids: Vec<_> = (0..self.nodes.len()).map(|_| g.add_node(())).collect();
        for &(a, b) in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return true;
            }
            g.add_edge(ids[ra], ids[rb], ());
        }
        is_cyclic_directed(&g)
    }

    /// Renders the graph in DOT: one node per action labelled `<op>@<priority>`,
    /// solid edges for order and dashed undirected edges for pairing.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph comm {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "  n{i} [label=\"{n}\"];");
        }
        for (a, b) in &self.edges {
            let _ = writeln!(out, "  n{a} -> n{b};");
        }
        for (a, b) in &self.pairs {
            let _ = writeln!(out, "  n{a} -> n{b} [style=dashed, dir=none];");
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Step {
    Fst,
    Snd,
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Base {
    /// Side 0 or 1 of the channel created by the `chan`-th `new`.
    Fresh { chan: usize, side: usize },
    /// The endpoint found at `path` inside the value received by `node`.
    Received { node: usize, path: Vec<Step> },
}

/// An endpoint: a base endpoint advanced by `offset` actions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct EpRef {
    base: Base,
    offset: usize,
}

type Env = HashMap<String, AVal>;

#[derive(Clone)]
enum AVal {
    Unit,
    /// A value with no structure the analysis cares about.
    Opaque,
    Pair(Box<AVal>, Box<AVal>),
    Left(Box<AVal>),
    Right(Box<AVal>),
    Chan(EpRef),
    Fun(String, Arc<Typed>, Env),
    Prim(Prim),
    /// The part at `path` of the value received by `node`.
    Unknown(usize, Vec<Step>),
}

fn extend(path: &[Step], step: Step) -> Vec<Step> {
    let mut p = path.to_vec();
    p.push(step);
    p
}

fn project(v: AVal, step: Step) -> AVal {
    match (v, step) {
        (AVal::Pair(a, _), Step::Fst) | (AVal::Pair(_, a), Step::Snd) => *a,
        (AVal::Left(a), Step::Left) | (AVal::Right(a), Step::Right) => *a,
        (AVal::Unknown(n, p), s) => AVal::Unknown(n, extend(&p, s)),
        _ => AVal::Opaque,
    }
}

fn endpoint(v: AVal) -> Option<EpRef> {
    match v {
        AVal::Chan(e) => Some(e),
        AVal::Unknown(node, path) => Some(EpRef { base: Base::Received { node, path }, offset: 0 }),
        _ => None,
    }
}

struct Raw {
    op: ActionOp,
    priority: u64,
    thread: usize,
    ep: EpRef,
    payload: Option<AVal>,
    guards: Vec<(usize, Vec<Step>, bool)>,
}

struct Walker {
    nodes: Vec<Raw>,
    edges: BTreeSet<(usize, usize)>,
    chans: usize,
    threads: usize,
    thread: usize,
    frontier: Vec<usize>,
    guards: Vec<(usize, Vec<Step>, bool)>,
}

fn split(env: &mut Env, free: &BTreeSet<String>) -> Env {
    free.iter().filter_map(|x| env.remove_entry(x)).collect()
}

impl Walker {
    fn action(&mut self, op: ActionOp, priority: u64, ep: EpRef, payload: Option<AVal>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Raw { op, priority, thread: self.thread, ep, payload, guards: self.guards.clone() });
        for &p in &self.frontier {
            self.edges.insert((p, id));
        }
        self.frontier = vec![id];
        id
    }

    fn eval(&mut self, t: &Typed, mut env: Env) -> AVal {
        match &t.kind {
            TypedKind::Var(x) => env.remove(x).unwrap_or(AVal::Opaque),
            TypedKind::Unit => AVal::Unit,
            TypedKind::Int(_) | TypedKind::Str(_) => AVal::Opaque,
            TypedKind::Lam(x, body) => AVal::Fun(x.clone(), Arc::clone(body), env),
            TypedKind::Const(p) => AVal::Prim(p.clone()),
            TypedKind::ConstApp(p, arg) => {
                let v = self.eval(arg, env);
                self.prim(p, v)
            }
            TypedKind::App(f, x) => {
                let fenv = split(&mut env, &f.free);
                let fv = self.eval(f, fenv);
                let xv = self.eval(x, env);
                self.apply(fv, xv)
            }
            TypedKind::LetUnit(m, n) => {
                let menv = split(&mut env, &m.free);
                self.eval(m, menv);
                self.eval(n, env)
            }
            TypedKind::LetPair(x, y, m, n) => {
                let menv = split(&mut env, &m.free);
                let v = self.eval(m, menv);
                env.insert(x.clone(), project(v.clone(), Step::Fst));
                env.insert(y.clone(), project(v, Step::Snd));
                self.eval(n, env)
            }
            TypedKind::Pair(m, n) => {
                let menv = split(&mut env, &m.free);
                let a = self.eval(m, menv);
                let b = self.eval(n, env);
                AVal::Pair(Box::new(a), Box::new(b))
            }
            TypedKind::Add(m, n) | TypedKind::Mul(m, n) => {
                let menv = split(&mut env, &m.free);
                self.eval(m, menv);
                self.eval(n, env);
                AVal::Opaque
            }
            TypedKind::Inl(m) => AVal::Left(Box::new(self.eval(m, env))),
            TypedKind::Inr(m) => AVal::Right(Box::new(self.eval(m, env))),
            TypedKind::Absurd(m) => {
                self.eval(m, env);
                AVal::Opaque
            }
            TypedKind::Case(l, x, m, y, n) => {
                let lenv = split(&mut env, &l.free);
                match self.eval(l, lenv) {
                    AVal::Left(v) => {
                        env.insert(x.clone(), *v);
                        self.eval(m, env)
                    }
                    AVal::Right(v) => {
                        env.insert(y.clone(), *v);
                        self.eval(n, env)
                    }
                    AVal::Unknown(node, path) => {
                        let start = self.frontier.clone();
                        let mut left_env = env.clone();
                        left_env.insert(x.clone(), AVal::Unknown(node, extend(&path, Step::Left)));
                        self.guards.push((node, path.clone(), true));
                        self.eval(m, left_env);
                        self.guards.pop();
                        let after_left = std::mem::replace(&mut self.frontier, start);
                        env.insert(y.clone(), AVal::Unknown(node, extend(&path, Step::Right)));
                        self.guards.push((node, path, false));
                        self.eval(n, env);
                        self.guards.pop();
                        for p in after_left {
                            if !self.frontier.contains(&p) {
                                self.frontier.push(p);
                            }
                        }
                        AVal::Opaque
                    }
                    _ => AVal::Opaque,
                }
            }
        }
    }

    fn apply(&mut self, f: AVal, x: AVal) -> AVal {
        match f {
            AVal::Fun(param, body, mut env) => {
                env.insert(param, x);
                self.eval(&body, env)
            }
            AVal::Prim(p) => self.prim(&p, x),
            _ => AVal::Opaque,
        }
    }

    fn prim(&mut self, p: &Prim, v: AVal) -> AVal {
        let priority = match p.arrow.lower {
            Priority::At(o) => o,
            _ => 0,
        };
        match &p.k {
            ConstK::New(_) => {
                let chan = self.chans;
                self.chans += 1;
                let side = |side| Box::new(AVal::Chan(EpRef { base: Base::Fresh { chan, side }, offset: 0 }));
                AVal::Pair(side(0), side(1))
            }
            ConstK::Fork => {
                let parent = self.thread;
                let saved = self.frontier.clone();
                self.threads += 1;
                self.thread = self.threads;
                self.apply(v, AVal::Unit);
                self.thread = parent;
                self.frontier = saved;
                AVal::Unit
            }
            ConstK::Send => {
                let payload = project(v.clone(), Step::Fst);
                let Some(ep) = endpoint(project(v, Step::Snd)) else { return AVal::Opaque };
                self.action(ActionOp::Send, priority, ep.clone(), Some(payload));
                AVal::Chan(EpRef { offset: ep.offset + 1, ..ep })
            }
            ConstK::Recv => {
                let Some(ep) = endpoint(v) else { return AVal::Opaque };
                let id = self.action(ActionOp::Recv, priority, ep.clone(), None);
                let rest = AVal::Chan(EpRef { offset: ep.offset + 1, ..ep });
                AVal::Pair(Box::new(AVal::Unknown(id, Vec::new())), Box::new(rest))
            }
            ConstK::Close => {
                if let Some(ep) = endpoint(v) {
                    self.action(ActionOp::Close, priority, ep, None);
                }
                AVal::Unit
            }
            ConstK::Cancel => AVal::Unit,
        }
    }
}

/// Position of an action: channel, side and index along the session.
type Slot = (usize, usize, usize);

struct Resolver<'a> {
    nodes: &'a [Raw],
    slots: Vec<Option<Slot>>,
    sends: HashMap<Slot, usize>,
}

/// Bound on chains of channels received over channels.
const MAX_DEPTH: usize = 64;

impl<'a> Resolver<'a> {
    /// Resolves every action whose channel can be traced back to a `new`.
    /// An action received over a channel resolves once the matching send
    /// has, so this repeats until nothing changes.
    fn new(nodes: &'a [Raw]) -> Self {
        let mut r = Resolver { nodes, slots: vec![None; nodes.len()], sends: HashMap::new() };
        loop {
            let mut changed = false;
            for (i, node) in nodes.iter().enumerate() {
                if r.slots[i].is_some() {
                    continue;
                }
                if let Some(slot) = r.resolve_ep(&node.ep, 0) {
                    r.slots[i] = Some(slot);
                    if node.op == ActionOp::Send {
                        r.sends.entry(slot).or_insert(i);
                    }
                    changed = true;
                }
            }
            if !changed {
                return r;
            }
        }
    }

    fn resolve_ep(&self, ep: &EpRef, depth: usize) -> Option<Slot> {
        match &ep.base {
            Base::Fresh { chan, side } => Some((*chan, *side, ep.offset)),
            Base::Received { node, path } => match self.received(*node, path, depth)? {
                AVal::Chan(inner) => {
                    let (c, s, k) = self.resolve_ep(&inner, depth + 1)?;
                    Some((c, s, k + ep.offset))
                }
                _ => None,
            },
        }
    }

    /// The part at `path` of what the receive `node` got from its partner.
    fn received(&self, node: usize, path: &[Step], depth: usize) -> Option<AVal> {
        if depth > MAX_DEPTH {
            return None;
        }
        let (c, s, k) = self.slots[node]?;
        let partner = *self.sends.get(&(c, 1 - s, k))?;
        let mut v = self.nodes[partner].payload.clone()?;
        for (i, step) in path.iter().enumerate() {
            if let AVal::Unknown(n, p) = v {
                let mut rest = p;
                rest.extend_from_slice(&path[i..]);
                return self.received(n, &rest, depth + 1);
            }
            v = project(v, *step);
        }
        match v {
            AVal::Unknown(n, p) => self.received(n, &p, depth + 1),
            other => Some(other),
        }
    }

    /// Whether the action was resolved and its branch guards agree with
    /// what was actually sent.
    fn live(&self, node: usize) -> bool {
        self.slots[node].is_some()
            && self.nodes[node].guards.iter().all(|(n, path, left)| match self.received(*n, path, 0) {
                Some(AVal::Left(_)) => *left,
                Some(AVal::Right(_)) => !*left,
                _ => true,
            })
    }
}

/// Computes the communication graph of a typechecked closed program.
pub fn comm_graph(t: &Typed) -> CommGraph {
    let mut w = Walker {
        nodes: Vec::new(),
        edges: BTreeSet::new(),
        chans: 0,
        threads: 0,
        thread: 0,
        frontier: Vec::new(),
        guards: Vec::new(),
    };
    w.eval(t, Env::new());
    let r = Resolver::new(&w.nodes);
    let live: Vec<usize> = (0..w.nodes.len()).filter(|&n| r.live(n)).collect();
    let index: HashMap<usize, usize> = live.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let nodes = live
        .iter()
        .map(|&n| Action { op: w.nodes[n].op, priority: w.nodes[n].priority, thread: w.nodes[n].thread })
        .collect();
    let edges = w.edges.iter().filter_map(|(a, b)| Some((*index.get(a)?, *index.get(b)?))).collect();
    let mut pairs = Vec::new();
    for (i, &a) in live.iter().enumerate() {
        for (j, &b) in live.iter().enumerate().skip(i + 1) {
            let (Some((ca, sa, ka)), Some((cb, sb, kb))) = (r.slots[a], r.slots[b]) else { continue };
            if ca == cb && ka == kb && sa != sb && w.nodes[a].op.pairs_with(w.nodes[b].op) {
                pairs.push((i, j));
            }
        }
    }
    CommGraph { nodes, edges, pairs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pgv::check::{typecheck_with, CheckOptions};
    use crate::pgv::parse::parse;

    fn graph(src: &str, enforce: bool) -> CommGraph {
        let c = typecheck_with(&parse(src).unwrap(), &[], CheckOptions { enforce_priorities: enforce }).unwrap();
        comm_graph(&c.typed)
    }

    #[test]
    fn single_pair() {
        let g = graph(
            "let (s, r) = new[!0 Int.end 1] () in \
             let () = fork (\\u:Unit. let () = u in cancel (send (1, s))) in \
             let (x, r) = recv r in let () = cancel r in x",
            true,
        );
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.pairs.len(), 1);
        assert!(g.edges.is_empty());
        assert!(!g.is_cyclic());
        let dot = g.to_dot();
        assert!(dot.contains("[label=\"send@0\"]"));
        assert!(dot.contains("[style=dashed, dir=none]"));
    }

    #[test]
    fn crossed_order_is_cyclic() {
        let src = "let (s1, r1) = new[!0 Int.end 10] () in let (s2, r2) = new[!1 Int.end 11] () in \
                   let () = fork (\\u:Unit. let () = u in let (x, r1) = recv r1 in let () = cancel r1 in cancel (send (x, s2))) in \
                   let (v, r2) = recv r2 in let () = cancel r2 in let () = cancel (send (42, s1)) in v";
        let g = graph(src, false);
        assert_eq!(g.nodes.len(), 4);
        assert_eq!(g.pairs.len(), 2);
        assert!(g.is_cyclic());
    }

    #[test]
    fn delegated_channels_resolve() {
        let src = "let (c, d) = new[!0 (?4 Unit.end 5).end 3] () in let (k, t) = new[!4 Unit.end 5] () in \
                   let () = fork (\\u:Unit. let () = u in let (a, d) = recv d in let () = close d in \
                                  let (x, a) = recv a in let () = x in close a) in \
                   let () = close (send (t, c)) in close (send ((), k))";
        let g = graph(src, true);
        assert_eq!(g.nodes.len(), 8);
        assert_eq!(g.pairs.len(), 4);
        assert!(!g.is_cyclic());
    }
}
