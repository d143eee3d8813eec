//! Translation of typechecked terms into graded computations, and `eval`.
//!
//! Every term becomes a [`Sesh`] whose bounds are the ones the checker
//! computed. Values are pure, so variables, lambdas and constants become
//! `ireturn`; everything that sequences subterms becomes a chain of binds
//! whose continuations declare the bounds of the rest of the term.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use thiserror::Error;

use super::check::{typecheck_with, CheckOptions, Checked, Prim, TypeError, Typed, TypedKind};
use super::syntax::{ConstK, Term, FN_KIND};
use crate::graded::{
    bind, bind_unchecked, g_cancel, g_close, g_fork, g_new, g_recv, g_send, ireturn, run_sesh, weaken, DeadlockPolicy,
    RunError, Sesh, SeshError,
};
use crate::priority::Bounds;
use crate::session::Value;

type Env = HashMap<String, Value>;
type Built = Result<Sesh<Value>, SeshError>;

/// A linear function value: applying it builds the computation of its body.
struct Func {
    bounds: Bounds,
    apply: Box<dyn FnOnce(Value) -> Built + Send>,
}

fn func(bounds: Bounds, apply: impl FnOnce(Value) -> Built + Send + 'static) -> Value {
    Value::opaque(FN_KIND, Func { bounds, apply: Box::new(apply) })
}

fn apply(f: Value, x: Value) -> Built {
    let Value::Opaque { data, .. } = f else {
        return Err(SeshError::Protocol(format!("cannot apply {f}")));
    };
    let Ok(func) = data.downcast::<Func>() else {
        return Err(SeshError::Protocol("cannot apply a non-function value".into()));
    };
    let m = (func.apply)(x)?;
    if m.bounds() != func.bounds {
        return Err(SeshError::BoundsMismatch { declared: func.bounds, actual: m.bounds() });
    }
    Ok(m)
}

fn protocol(msg: impl Into<String>) -> SeshError {
    SeshError::Protocol(msg.into())
}

/// How binds are built: checked, or trusting the declared bounds.
#[derive(Clone, Copy)]
struct Mode {
    checked: bool,
}

impl Mode {
    fn bind<A: Send + 'static>(
        self,
        m: Sesh<A>,
        declared: Bounds,
        k: impl FnOnce(A) -> Built + Send + 'static,
    ) -> Built {
        if self.checked {
            bind(m, declared, k)
        } else {
            Ok(bind_unchecked(m, declared, k))
        }
    }
}

/// Removes and returns the bindings for `free` from `env`.
fn split(env: &mut Env, free: &BTreeSet<String>) -> Env {
    free.iter().filter_map(|x| env.remove_entry(x)).collect()
}

fn tr(t: &Arc<Typed>, mut env: Env, mode: Mode) -> Built {
    match &t.kind {
        TypedKind::Var(x) => {
            let v = env.remove(x).ok_or_else(|| protocol(format!("unbound variable {x}")))?;
            Ok(ireturn(v))
        }
        TypedKind::Unit => Ok(ireturn(Value::Unit)),
        TypedKind::Int(n) => Ok(ireturn(Value::Int(*n))),
        TypedKind::Str(s) => Ok(ireturn(Value::Str(s.clone()))),
        TypedKind::Lam(x, body) => {
            let (x, body) = (x.clone(), Arc::clone(body));
            Ok(ireturn(func(body.bounds, move |v| {
                env.insert(x, v);
                tr(&body, env, mode)
            })))
        }
        TypedKind::Const(prim) => {
            let prim = prim.clone();
            Ok(ireturn(func(prim.arrow, move |v| apply_prim(prim, v))))
        }
        TypedKind::ConstApp(prim, arg) => {
            let m = tr(arg, env, mode)?;
            let prim = prim.clone();
            mode.bind(m, prim.arrow, move |v| apply_prim(prim, v))
        }
        TypedKind::App(f, x) => {
            let Some(arrow) = arrow_bounds(f) else {
                return Err(protocol("application of a non-function"));
            };
            let fenv = split(&mut env, &f.free);
            let m = tr(f, fenv, mode)?;
            let x = Arc::clone(x);
            let declared = seq_or_union(x.bounds, arrow);
            mode.bind(m, declared, move |fv| {
                let n = tr(&x, env, mode)?;
                mode.bind(n, arrow, move |xv| apply(fv, xv))
            })
        }
        TypedKind::LetUnit(m, n) => {
            let menv = split(&mut env, &m.free);
            let mc = tr(m, menv, mode)?;
            let n = Arc::clone(n);
            mode.bind(mc, n.bounds, move |_| tr(&n, env, mode))
        }
        TypedKind::LetPair(x, y, m, n) => {
            let menv = split(&mut env, &m.free);
            let mc = tr(m, menv, mode)?;
            let (x, y, n) = (x.clone(), y.clone(), Arc::clone(n));
            mode.bind(mc, n.bounds, move |p| {
                let (a, b) = p.into_pair().ok_or_else(|| protocol("expected a pair"))?;
                env.insert(x, a);
                env.insert(y, b);
                tr(&n, env, mode)
            })
        }
        TypedKind::Pair(m, n) => sequence(m, n, env, mode, |a, b| Ok(Value::pair(a, b))),
        TypedKind::Add(m, n) => sequence(m, n, env, mode, |a, b| arith(a, b, i64::checked_add)),
        TypedKind::Mul(m, n) => sequence(m, n, env, mode, |a, b| arith(a, b, i64::checked_mul)),
        TypedKind::Inl(m) => Ok(tr(m, env, mode)?.map(Value::left)),
        TypedKind::Inr(m) => Ok(tr(m, env, mode)?.map(Value::right)),
        TypedKind::Absurd(m) => tr(m, env, mode),
        TypedKind::Case(l, x, m, y, n) => {
            let lenv = split(&mut env, &l.free);
            let lc = tr(l, lenv, mode)?;
            let declared = m.bounds.union(&n.bounds);
            let (x, m, y, n) = (x.clone(), Arc::clone(m), y.clone(), Arc::clone(n));
            mode.bind(lc, declared, move |v| {
                let (name, branch, payload) = match v {
                    Value::Left(v) => (x, m, *v),
                    Value::Right(v) => (y, n, *v),
                    other => return Err(protocol(format!("expected a sum, found {other}"))),
                };
                env.insert(name, payload);
                weaken(tr(&branch, env, mode)?, declared)
            })
        }
    }
}

fn arrow_bounds(f: &Typed) -> Option<Bounds> {
    match &f.ty {
        super::syntax::PgvType::Arrow(b, _, _) => Some(*b),
        _ => None,
    }
}

fn seq_or_union(a: Bounds, b: Bounds) -> Bounds {
    crate::priority::seq_bounds(a, b).unwrap_or_else(|_| a.union(&b))
}

/// Runs `m` then `n`, combining their results with `f`.
fn sequence(
    m: &Arc<Typed>,
    n: &Arc<Typed>,
    mut env: Env,
    mode: Mode,
    f: impl FnOnce(Value, Value) -> Result<Value, SeshError> + Send + 'static,
) -> Built {
    let menv = split(&mut env, &m.free);
    let mc = tr(m, menv, mode)?;
    let n = Arc::clone(n);
    mode.bind(mc, n.bounds, move |a| {
        let nc = tr(&n, env, mode)?;
        Ok(nc.try_map(move |b| f(a, b)))
    })
}

fn arith(a: Value, b: Value, op: fn(i64, i64) -> Option<i64>) -> Result<Value, SeshError> {
    match (a.as_int(), b.as_int()) {
        (Some(x), Some(y)) => {
            op(x, y).map(Value::Int).ok_or_else(|| protocol(format!("integer overflow in {x} and {y}")))
        }
        _ => Err(protocol(format!("arithmetic on non-integers {a} and {b}"))),
    }
}

fn chan(v: Value) -> Result<crate::session::Endpoint, SeshError> {
    v.into_chan().ok_or_else(|| protocol("expected a channel"))
}

fn apply_prim(prim: Prim, v: Value) -> Built {
    let m = match prim.k {
        ConstK::New(s) => {
            let s = s.to_session().map_err(|e| protocol(e.to_string()))?;
            g_new(&s)?.map(|(a, b)| Value::pair(Value::Chan(a), Value::Chan(b)))
        }
        ConstK::Fork => {
            let child = apply(v, Value::Unit)?.map(|_| ());
            g_fork(child).map(|()| Value::Unit)
        }
        ConstK::Send => {
            let (payload, c) = v.into_pair().ok_or_else(|| protocol("expected a pair"))?;
            g_send(payload, chan(c)?)?.map(Value::Chan)
        }
        ConstK::Recv => g_recv(chan(v)?)?.map(|(x, c)| Value::pair(x, Value::Chan(c))),
        ConstK::Close => g_close(chan(v)?)?.map(|()| Value::Unit),
        ConstK::Cancel => g_cancel(chan(v)?).map(|()| Value::Unit),
    };
    Ok(m)
}

/// Failures of [`eval`].
#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Type(#[from] TypeError),
    /// Building the computation failed. Cannot happen for checked terms.
    #[error("translation failed: {0}")]
    Translate(SeshError),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// A checked term and the computation it translates to.
pub struct Compiled {
    pub checked: Checked,
    pub computation: Sesh<Value>,
}

/// Typechecks a closed term and translates it. With `check = false`,
/// priority violations are recorded in the result instead of rejected and
/// binds skip the ordering check.
pub fn compile(t: &Term, check: bool) -> Result<Compiled, EvalError> {
    let checked = typecheck_with(t, &[], CheckOptions { enforce_priorities: check })?;
    let computation = translate(&checked.typed, check).map_err(EvalError::Translate)?;
    Ok(Compiled { checked, computation })
}

/// Translates a typechecked closed term.
pub fn translate(t: &Arc<Typed>, check: bool) -> Built {
    tr(t, Env::new(), Mode { checked: check })
}

/// Typechecks, translates and runs a closed term.
pub fn eval(t: &Term, policy: DeadlockPolicy, check: bool) -> Result<Value, EvalError> {
    let c = compile(t, check)?;
    Ok(run_sesh(c.computation, policy)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pgv::parse::parse;

    fn run_src(src: &str) -> Result<Value, EvalError> {
        eval(&parse(src).unwrap(), DeadlockPolicy::default(), true)
    }

    #[test]
    fn beta() {
        assert_eq!(run_src("(\\x:Int. x) 5").unwrap(), Value::Int(5));
        assert_eq!(run_src("(\\x:Int. \\y:Int. x * y + 1) 6 7").unwrap(), Value::Int(43));
    }

    #[test]
    fn case_and_injections() {
        let v = run_src("(\\s: Int + Unit. case s of { inl n -> n + 1; inr u -> let () = u in 0 }) (inl 4)").unwrap();
        assert_eq!(v, Value::Int(5));
    }

    #[test]
    fn channel_round_trip() {
        let src = "let (s, r) = new[!0 Int.end 1] () in \
                   let () = fork (\\u:Unit. let () = u in close (send (20, s))) in \
                   let (x, r) = recv r in let () = close r in x + 1";
        assert_eq!(run_src(src).unwrap(), Value::Int(21));
    }

    #[test]
    fn bounds_match_the_checker() {
        let src = "let (s, r) = new[!0 Int.end 1] () in \
                   let () = fork (\\u:Unit. let () = u in close (send (20, s))) in \
                   let (x, r) = recv r in let () = close r in x";
        let c = compile(&parse(src).unwrap(), true).unwrap();
        assert_eq!(c.computation.bounds(), c.checked.typed.bounds);
        assert_eq!(c.computation.bounds().to_string(), "[0,1]");
    }

    #[test]
    fn first_class_constants() {
        let src = "let (s, r) = new[!2 Int.end 3] () in \
                   let () = fork ((\\k: Unit -[2,2]-> Unit. k) (\\u:Unit. let () = u in cancel (send (9, s)))) in \
                   let (x, r) = (\\f: ?2 Int.end 3 -[2,2]-> Int * end 3. f) recv r in let () = cancel r in x";
        assert_eq!(run_src(src).unwrap(), Value::Int(9));
    }

    #[test]
    fn cancellation_surfaces() {
        let src = "let (s, r) = new[!0 Int.end 1] () in let () = cancel s in \
                   let (x, r) = recv r in let () = cancel r in x";
        match run_src(src) {
            Err(EvalError::Run(RunError::Failed(e))) => assert!(e.is_cancellation()),
            other => panic!("unexpected {other:?}"),
        }
    }
}
