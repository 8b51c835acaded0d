//! Random class shapes and values shared by integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;

use classdesc::emit::{plan, PlanStep};
use classdesc::lexer::tokenize;
use classdesc::model::{build_registry, TypeExpr, TypeRegistry};
use classdesc::parser::parse_unit;
use classdesc::runtime::{Shared, Value};
use classdesc::PrimKind;
use rand::rngs::StdRng;
use rand::Rng;

pub const MAX_DEPTH: usize = 4;
pub const MAX_MEMBERS: usize = 8;
pub const MAX_EXTENT: u64 = 16;

/// C spellings with the primitive kind each one must parse to.
pub const SPELLINGS: &[(&str, PrimKind)] = &[
    ("bool", PrimKind::Bool),
    ("char", PrimKind::Char),
    ("signed char", PrimKind::Int8),
    ("unsigned char", PrimKind::Uint8),
    ("short", PrimKind::Int16),
    ("unsigned short", PrimKind::Uint16),
    ("int", PrimKind::Int32),
    ("unsigned", PrimKind::Uint32),
    ("long long", PrimKind::Int64),
    ("unsigned long long", PrimKind::Uint64),
    ("float", PrimKind::Float32),
    ("double", PrimKind::Float64),
    ("int16_t", PrimKind::Int16),
    ("uint32_t", PrimKind::Uint32),
    ("int64_t", PrimKind::Int64),
];

/// A generated header and the name of its outermost class.
pub struct Shape {
    pub source: String,
    pub root: String,
}

struct Gen<'a> {
    rng: &'a mut StdRng,
    prefix: String,
    count: usize,
    out: String,
}

impl Gen<'_> {
    fn fresh(&mut self) -> String {
        self.count += 1;
        format!("{}{}", self.prefix, self.count)
    }

    /// Emits the class and everything it depends on; returns its name.
    /// `depth` counts how many record levels sit above this one.
    fn class(&mut self, depth: usize) -> String {
        let name = self.fresh();
        let nested_ok = depth + 1 < MAX_DEPTH;
        let base = if nested_ok && self.rng.gen_bool(0.2) { Some(self.class(depth + 1)) } else { None };
        let mut lines = Vec::new();
        let n = self.rng.gen_range(0..=MAX_MEMBERS);
        let self_pointer = self.rng.gen_bool(0.15);
        if self_pointer {
            self.out.push_str(&format!("#pragma single_obj_ptr {name}\n"));
            lines.push(format!("{name}* next;"));
        }
        for i in lines.len()..n {
            let m = format!("m{i}");
            let roll = self.rng.gen_range(0..10);
            let line = match roll {
                0..=4 => format!("{} {m};", self.prim()),
                5 | 6 => format!("{} {m}[{}];", self.prim(), self.rng.gen_range(1..=MAX_EXTENT)),
                7 if nested_ok => format!("{} {m};", self.class(depth + 1)),
                8 if nested_ok => {
                    let c = self.class(depth + 1);
                    format!("{c} {m}[{}];", self.rng.gen_range(1..=3))
                }
                9 if nested_ok => {
                    let c = self.class(depth + 1);
                    self.out.push_str(&format!("#pragma single_obj_ptr {c}\n"));
                    format!("{c}* {m};")
                }
                _ => format!("{} {m};", self.prim()),
            };
            lines.push(line);
        }
        let keyword = if self.rng.gen_bool(0.5) { "class" } else { "struct" };
        let _ = write!(self.out, "{keyword} {name}");
        if let Some(b) = base {
            let _ = write!(self.out, " : public {b}");
        }
        self.out.push_str("\n{\n");
        for (i, l) in lines.iter().enumerate() {
            if i > 0 && self.rng.gen_bool(0.2) {
                let label = ["public:", "private:", "protected:"][self.rng.gen_range(0..3)];
                let _ = writeln!(self.out, "{label}");
            }
            let _ = writeln!(self.out, "  {l}");
        }
        self.out.push_str("};\n\n");
        name
    }

    fn prim(&mut self) -> &'static str {
        SPELLINGS[self.rng.gen_range(0..SPELLINGS.len())].0
    }
}

/// Generates a header of nested classes whose value nesting is at most
/// [`MAX_DEPTH`] records deep.
pub fn random_shape(rng: &mut StdRng, tag: usize) -> Shape {
    let mut g = Gen { rng, prefix: format!("S{tag}_"), count: 0, out: String::new() };
    let root = g.class(0);
    Shape { source: g.out, root }
}

/// Parses a header into a resolved registry, panicking on any error.
pub fn registry_of(source: &str) -> TypeRegistry {
    let (tokens, diags) = tokenize(source);
    assert!(!classdesc::diag::has_errors(&diags), "{diags:?}\n{source}");
    let (decls, diags) = parse_unit(&tokens);
    assert!(!classdesc::diag::has_errors(&diags), "{diags:?}\n{source}");
    let (reg, diags) = build_registry(&decls);
    assert!(!classdesc::diag::has_errors(&diags), "{diags:?}\n{source}");
    reg
}

pub fn random_scalar(rng: &mut StdRng, kind: PrimKind) -> Value {
    match kind {
        PrimKind::Bool => Value::bool(rng.gen()),
        PrimKind::Float32 => {
            let x = f32::from_bits(rng.gen());
            Value::f32(if x.is_nan() { f32::NAN } else { x })
        }
        PrimKind::Float64 => {
            let x = f64::from_bits(rng.gen());
            Value::f64(if x.is_nan() { f64::NAN } else { x })
        }
        k => {
            let (lo, hi) = k.int_range().unwrap();
            // Favour the edges of the range.
            let v = match rng.gen_range(0..6) {
                0 => lo,
                1 => hi,
                2 => 0,
                _ => {
                    let span = (hi - lo) as u128;
                    lo + (rng.gen::<u128>() % (span + 1)) as i128
                }
            };
            Value::int(k, v)
        }
    }
}

/// A random value conforming to `ty`. Single-object pointer chains are
/// bounded by `budget`.
pub fn random_value(rng: &mut StdRng, reg: &TypeRegistry, ty: &TypeExpr, budget: usize) -> Value {
    match ty {
        TypeExpr::Primitive(k) => random_scalar(rng, *k),
        TypeExpr::Named(n) => random_record(rng, reg, n, budget),
        TypeExpr::Array { element, extent } => {
            Value::Array((0..*extent).map(|_| random_value(rng, reg, element, budget)).collect())
        }
        TypeExpr::Pointer(_) => Value::SkippedPointer,
    }
}

fn random_record(rng: &mut StdRng, reg: &TypeRegistry, name: &str, budget: usize) -> Value {
    let class = reg.class(name).unwrap();
    let p = plan(class, reg, "pack").unwrap();
    let fields = p
        .steps
        .iter()
        .map(|step| match step {
            PlanStep::BaseCall { base, .. } => random_record(rng, reg, base, budget),
            PlanStep::MemberCall { ty, .. } => random_value(rng, reg, ty, budget),
            PlanStep::OmittedTypeCall { type_name, .. } => random_record(rng, reg, type_name, budget),
            PlanStep::ArrayCall { element, extent, .. } => {
                random_value(rng, reg, &TypeExpr::array(element.clone(), *extent), budget)
            }
            PlanStep::PointerWarn { .. } => Value::SkippedPointer,
            PlanStep::SingleObjectCall { pointee, .. } => {
                if budget > 0 && rng.gen_bool(0.6) {
                    Value::MaybePointer(Some(Shared::new(random_record(rng, reg, pointee, budget - 1))))
                } else {
                    Value::MaybePointer(None)
                }
            }
            PlanStep::UnionBlob { size } => Value::UnionBlob((0..*size).map(|_| rng.gen()).collect()),
        })
        .collect();
    Value::record(class.name.clone(), fields)
}

/// Record nesting depth of a class shape: members, array elements, bases
/// and single-object pointees each add a level; self-references do not.
pub fn shape_depth(reg: &TypeRegistry, name: &str) -> usize {
    fn walk(reg: &TypeRegistry, name: &str, stack: &mut Vec<String>) -> usize {
        if stack.iter().any(|s| s == name) {
            return 0;
        }
        let class = reg.class(name).unwrap();
        stack.push(class.name.clone());
        let mut deepest = 0;
        for base in &class.bases {
            deepest = deepest.max(walk(reg, &base.name, stack));
        }
        for m in class.serializable_members() {
            let mut ty = &m.ty;
            while let TypeExpr::Array { element, .. } = ty {
                ty = element;
            }
            let inner = match ty {
                TypeExpr::Named(n) => Some(n.clone()),
                TypeExpr::Pointer(p) => match p.pointee.as_deref() {
                    Some(TypeExpr::Named(n)) => Some(n.clone()),
                    _ => None,
                },
                _ => None,
            };
            if let Some(n) = inner {
                deepest = deepest.max(walk(reg, &n, stack));
            }
        }
        stack.pop();
        1 + deepest
    }
    walk(reg, name, &mut Vec::new())
}
