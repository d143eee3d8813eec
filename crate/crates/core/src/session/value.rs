//! Runtime values carried by sessions.

use std::any::Any;
use std::fmt;

use super::types::ValueKind;
use super::Endpoint;

/// A transmissible value. Endpoints are values, so they can be delegated.
pub enum Value {
    Unit,
    Int(i64),
    Str(String),
    Pair(Box<Value>, Box<Value>),
    Left(Box<Value>),
    Right(Box<Value>),
    Chan(Endpoint),
    /// A host value tagged with a kind name, such as a closure.
    Opaque {
        kind: String,
        data: Box<dyn Any + Send>,
    },
}

impl Value {
    pub fn pair(a: Value, b: Value) -> Value {
        Value::Pair(Box::new(a), Box::new(b))
    }

    pub fn left(v: Value) -> Value {
        Value::Left(Box::new(v))
    }

    pub fn right(v: Value) -> Value {
        Value::Right(Box::new(v))
    }

    pub fn opaque<T: Any + Send>(kind: impl Into<String>, data: T) -> Value {
        Value::Opaque { kind: kind.into(), data: Box::new(data) }
    }

    /// Whether the value may be sent where `kind` is expected.
    pub fn conforms(&self, kind: &ValueKind) -> bool {
        match (self, kind) {
            (Value::Unit, ValueKind::Unit) | (Value::Int(_), ValueKind::Int) | (Value::Str(_), ValueKind::Str) => true,
            (Value::Pair(a, b), ValueKind::Pair(ka, kb)) => a.conforms(ka) && b.conforms(kb),
            (Value::Left(v), ValueKind::Sum(k, _)) | (Value::Right(v), ValueKind::Sum(_, k)) => v.conforms(k),
            (Value::Chan(e), ValueKind::Chan(s)) => e.protocol().unfold() == s.unfold(),
            (Value::Opaque { kind, .. }, ValueKind::Opaque(k)) => kind == k,
            _ => false,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn into_pair(self) -> Option<(Value, Value)> {
        match self {
            Value::Pair(a, b) => Some((*a, *b)),
            _ => None,
        }
    }

    pub fn into_chan(self) -> Option<Endpoint> {
        match self {
            Value::Chan(e) => Some(e),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => f.write_str("()"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Pair(a, b) => write!(f, "({a}, {b})"),
            Value::Left(v) => write!(f, "inl {v}"),
            Value::Right(v) => write!(f, "inr {v}"),
            Value::Chan(e) => write!(f, "<chan {}>", e.protocol()),
            Value::Opaque { kind, .. } => write!(f, "<{kind}>"),
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl PartialEq for Value {
    /// Structural equality on data; endpoints and opaque values never
    /// compare equal.
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Unit, Value::Unit) => true,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::Pair(a1, b1), Value::Pair(a2, b2)) => a1 == a2 && b1 == b2,
            (Value::Left(a), Value::Left(b)) | (Value::Right(a), Value::Right(b)) => a == b,
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conformance() {
        let k = ValueKind::pair(ValueKind::Int, ValueKind::sum(ValueKind::Unit, ValueKind::Str));
        assert!(Value::pair(Value::Int(1), Value::right(Value::Str("x".into()))).conforms(&k));
        assert!(!Value::pair(Value::Int(1), Value::right(Value::Unit)).conforms(&k));
        assert!(!Value::Unit.conforms(&ValueKind::Void));
        assert!(Value::opaque("fn", 3u8).conforms(&ValueKind::Opaque("fn".into())));
    }

    #[test]
    fn rendering() {
        assert_eq!(Value::Str("Hiya!".into()).to_string(), "\"Hiya!\"");
        assert_eq!(Value::pair(Value::Int(1), Value::left(Value::Unit)).to_string(), "(1, inl ())");
    }
}
