use std::cell::RefCell;
use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;

use crate::model::PrimKind;

/// Numeric or boolean payload of a primitive value. Floats compare by bit
/// pattern so NaN payloads round-trip as equal.
#[derive(Clone, Copy)]
pub enum Scalar {
    Bool(bool),
    Int(i128),
    Float(f64),
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Scalar::Bool(a), Scalar::Bool(b)) => a == b,
            (Scalar::Int(a), Scalar::Int(b)) => a == b,
            (Scalar::Float(a), Scalar::Float(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Int(i) => write!(f, "{i}"),
            Scalar::Float(x) => write!(f, "{x:?}"),
        }
    }
}

/// Shared pointee of a single-object pointer. Sharing is what makes cyclic
/// graphs representable, and packing rejects them.
#[derive(Clone)]
pub struct Shared(pub Rc<RefCell<Value>>);

impl Shared {
    pub fn new(v: Value) -> Self {
        Shared(Rc::new(RefCell::new(v)))
    }

    pub fn id(&self) -> *const RefCell<Value> {
        Rc::as_ptr(&self.0)
    }
}

impl PartialEq for Shared {
    fn eq(&self, other: &Self) -> bool {
        Rc::ptr_eq(&self.0, &other.0) || *self.0.borrow() == *other.0.borrow()
    }
}

thread_local! {
    static DEBUG_VISITING: RefCell<HashSet<usize>> = RefCell::new(HashSet::new());
}

impl fmt::Debug for Shared {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let id = self.id() as usize;
        let fresh = DEBUG_VISITING.with(|v| v.borrow_mut().insert(id));
        if !fresh {
            return f.write_str("<cycle>");
        }
        let r = match self.0.try_borrow() {
            Ok(v) => write!(f, "&{:?}", *v),
            Err(_) => f.write_str("<borrowed>"),
        };
        DEBUG_VISITING.with(|v| v.borrow_mut().remove(&id));
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Primitive { kind: PrimKind, payload: Scalar },
    /// Base-class sub-records first, then members in declaration order.
    Record { class_name: String, fields: Vec<Value> },
    Array(Vec<Value>),
    MaybePointer(Option<Shared>),
    UnionBlob(Vec<u8>),
    SkippedPointer,
}

impl Value {
    pub fn int(kind: PrimKind, v: i128) -> Self {
        Value::Primitive { kind, payload: Scalar::Int(v) }
    }

    pub fn i32(v: i32) -> Self {
        Value::int(PrimKind::Int32, v as i128)
    }

    pub fn f64(v: f64) -> Self {
        Value::Primitive { kind: PrimKind::Float64, payload: Scalar::Float(v) }
    }

    pub fn f32(v: f32) -> Self {
        Value::Primitive { kind: PrimKind::Float32, payload: Scalar::Float(v as f64) }
    }

    pub fn bool(v: bool) -> Self {
        Value::Primitive { kind: PrimKind::Bool, payload: Scalar::Bool(v) }
    }

    pub fn record(class_name: impl Into<String>, fields: Vec<Value>) -> Self {
        Value::Record { class_name: class_name.into(), fields }
    }

    pub fn pointer(pointee: Option<Value>) -> Self {
        Value::MaybePointer(pointee.map(Shared::new))
    }

    /// The zero value of a primitive kind.
    pub fn zero(kind: PrimKind) -> Self {
        let payload = match kind {
            PrimKind::Bool => Scalar::Bool(false),
            k if k.is_float() => Scalar::Float(0.0),
            _ => Scalar::Int(0),
        };
        Value::Primitive { kind, payload }
    }
}

/// Text form used by command bindings and value files: integers in
/// decimal, floats in shortest round-trip decimal, bools as 0/1.
pub fn format_scalar(kind: PrimKind, payload: &Scalar) -> String {
    match (kind, payload) {
        (_, Scalar::Bool(b)) => if *b { "1" } else { "0" }.to_string(),
        (_, Scalar::Int(i)) => i.to_string(),
        (PrimKind::Float32, Scalar::Float(x)) => (*x as f32).to_string(),
        (_, Scalar::Float(x)) => x.to_string(),
    }
}

pub fn parse_scalar(kind: PrimKind, text: &str) -> Result<Scalar, String> {
    let text = text.trim();
    match kind {
        PrimKind::Bool => match text {
            "0" | "false" => Ok(Scalar::Bool(false)),
            "1" | "true" => Ok(Scalar::Bool(true)),
            _ => Err(format!("`{text}` is not a bool (expected 0 or 1)")),
        },
        PrimKind::Float32 => text.parse::<f32>().map(|x| Scalar::Float(x as f64)).map_err(|e| format!("`{text}`: {e}")),
        PrimKind::Float64 => text.parse::<f64>().map(Scalar::Float).map_err(|e| format!("`{text}`: {e}")),
        _ => {
            let v: i128 = text.parse().map_err(|e| format!("`{text}`: {e}"))?;
            let (lo, hi) = kind.int_range().expect("integer kind");
            if v < lo || v > hi {
                return Err(format!("{v} out of range for {}", kind.c_name()));
            }
            Ok(Scalar::Int(v))
        }
    }
}
