use std::collections::HashSet;

use super::buffer::{decode_primitive, encode_primitive, PackBuffer};
use super::value::{Shared, Value};
use super::{Mode, Result, RuntimeError};
use crate::emit::{self, PlanStep};
use crate::model::{ClassDecl, PointerKind, PrimKind, TypeExpr, TypeRegistry};

const PACK: &str = "pack";
const UNPACK: &str = "unpack";

fn mismatch(path: &str, expected: impl Into<String>) -> RuntimeError {
    RuntimeError::Mismatch { path: path.to_string(), expected: expected.into() }
}

fn display_path(path: &str) -> &str {
    if path.is_empty() {
        "<root>"
    } else {
        path
    }
}

fn skip_warning(kind: PointerKind, path: &str) -> String {
    let what = match kind {
        PointerKind::MemberPointer => "member",
        _ => "generic",
    };
    format!("skipping {what} pointer {}", display_path(path))
}

fn lookup<'r>(reg: &'r TypeRegistry, name: &str, path: &str) -> Result<&'r ClassDecl> {
    reg.class(name).ok_or_else(|| RuntimeError::NoDescriptor { path: path.to_string(), type_name: name.to_string() })
}

fn class_plan(class: &ClassDecl, reg: &TypeRegistry, action: &str, path: &str) -> Result<emit::DescriptorPlan> {
    emit::plan(class, reg, action).map_err(|e| match e {
        emit::PlanError::NoDescriptor { type_name, member, .. } => {
            RuntimeError::NoDescriptor { path: format!("{path}.{member}"), type_name }
        }
        emit::PlanError::UnionSize { class, .. } => RuntimeError::NoDescriptor { path: path.to_string(), type_name: class },
    })
}

/// Appends the encoding of `value` as type `ty`. `name` prefixes every path
/// reported in warnings and errors; it never reaches the encoded bytes.
pub fn pack(buf: &mut PackBuffer, name: &str, value: &Value, ty: &TypeExpr, reg: &TypeRegistry) -> Result<()> {
    let mut packer = Packer { buf, reg, visited: HashSet::new() };
    packer.value(name, value, ty)
}

/// Folds [`pack`] with an empty name over `values`, like `buf << foo << bla`.
pub fn stream_pack(buf: &mut PackBuffer, values: &[(Value, TypeExpr)], reg: &TypeRegistry) -> Result<()> {
    values.iter().try_for_each(|(v, t)| pack(buf, "", v, t, reg))
}

/// Chained packing: `Stream::new(&mut buf, &reg).put(&foo, &t)?.put(&bla, &t)?`.
pub struct Stream<'a> {
    buf: &'a mut PackBuffer,
    reg: &'a TypeRegistry,
}

impl<'a> Stream<'a> {
    pub fn new(buf: &'a mut PackBuffer, reg: &'a TypeRegistry) -> Self {
        Stream { buf, reg }
    }

    pub fn put(self, value: &Value, ty: &TypeExpr) -> Result<Self> {
        pack(self.buf, "", value, ty, self.reg)?;
        Ok(self)
    }
}

struct Packer<'a> {
    buf: &'a mut PackBuffer,
    reg: &'a TypeRegistry,
    visited: HashSet<*const std::cell::RefCell<Value>>,
}

impl Packer<'_> {
    fn value(&mut self, path: &str, value: &Value, ty: &TypeExpr) -> Result<()> {
        match ty {
            TypeExpr::Primitive(kind) => self.primitive(path, value, *kind),
            TypeExpr::Named(n) => self.record(path, value, n),
            TypeExpr::Array { element, extent } => {
                let Value::Array(items) = value else { return Err(mismatch(path, format!("array of {extent}"))) };
                if items.len() as u64 != *extent {
                    return Err(mismatch(path, format!("array of {extent}, got {}", items.len())));
                }
                for (i, item) in items.iter().enumerate() {
                    self.value(&format!("{path}[{i}]"), item, element)?;
                }
                Ok(())
            }
            TypeExpr::Pointer(p) => match self.reg.classify_pointer(p) {
                PointerKind::SingleObject => {
                    let Some(TypeExpr::Named(pointee)) = p.pointee.as_deref() else {
                        return Err(mismatch(path, "named pointee"));
                    };
                    self.single_object(path, value, pointee)
                }
                kind => self.skip(path, value, kind),
            },
        }
    }

    fn primitive(&mut self, path: &str, value: &Value, kind: PrimKind) -> Result<()> {
        match value {
            Value::Primitive { kind: k, payload } if *k == kind => {
                self.buf.visit(path);
                let bytes = encode_primitive(kind, payload, self.buf.mode())?;
                self.buf.append(&bytes);
                Ok(())
            }
            _ => Err(mismatch(path, kind.c_name())),
        }
    }

    fn skip(&mut self, path: &str, value: &Value, kind: PointerKind) -> Result<()> {
        if *value != Value::SkippedPointer {
            return Err(mismatch(path, "skipped pointer"));
        }
        self.buf.visit(path);
        self.buf.warn(skip_warning(kind, path));
        Ok(())
    }

    fn single_object(&mut self, path: &str, value: &Value, pointee: &str) -> Result<()> {
        let Value::MaybePointer(target) = value else { return Err(mismatch(path, format!("{pointee}*"))) };
        self.buf.visit(path);
        match target {
            None => {
                self.buf.append(&[0x00]);
                Ok(())
            }
            Some(shared) => {
                if !self.visited.insert(shared.id()) {
                    return Err(RuntimeError::Cyclic { path: display_path(path).to_string() });
                }
                self.buf.append(&[0x01]);
                let inner = shared.0.borrow();
                self.record(path, &inner, pointee)
            }
        }
    }

    fn record(&mut self, path: &str, value: &Value, type_name: &str) -> Result<()> {
        let class = lookup(self.reg, type_name, path)?;
        let plan = class_plan(class, self.reg, PACK, path)?;
        if let [PlanStep::UnionBlob { size }] = plan.steps.as_slice() {
            if self.buf.mode() == Mode::Xdr {
                return Err(RuntimeError::XdrUnion { path: display_path(path).to_string() });
            }
            return match value {
                Value::UnionBlob(bytes) if bytes.len() == *size => {
                    self.buf.visit(path);
                    self.buf.append(bytes);
                    Ok(())
                }
                _ => Err(mismatch(path, format!("union blob of {size} bytes"))),
            };
        }
        let fields = match value {
            Value::Record { class_name, fields } if *class_name == class.name && fields.len() == plan.steps.len() => fields,
            _ => return Err(mismatch(path, format!("{} with {} fields", class.name, plan.steps.len()))),
        };
        for (step, field) in plan.steps.iter().zip(fields) {
            match step {
                PlanStep::BaseCall { base, .. } => self.record(path, field, base)?,
                PlanStep::MemberCall { suffix, ty, .. } => self.value(&format!("{path}{suffix}"), field, ty)?,
                PlanStep::OmittedTypeCall { suffix, type_name, .. } => {
                    self.record(&format!("{path}{suffix}"), field, type_name)?
                }
                PlanStep::ArrayCall { suffix, element, extent, .. } => {
                    self.value(&format!("{path}{suffix}"), field, &TypeExpr::array(element.clone(), *extent))?
                }
                PlanStep::PointerWarn { suffix, kind, .. } => self.skip(&format!("{path}{suffix}"), field, *kind)?,
                PlanStep::SingleObjectCall { suffix, pointee, .. } => {
                    self.single_object(&format!("{path}{suffix}"), field, pointee)?
                }
                PlanStep::UnionBlob { .. } => unreachable!("union plans have a single step"),
            }
        }
        Ok(())
    }
}

/// Reads one value of type `ty` starting at the buffer's read cursor.
pub fn unpack(buf: &mut PackBuffer, name: &str, ty: &TypeExpr, reg: &TypeRegistry) -> Result<Value> {
    Unpacker { buf, reg }.value(name, ty)
}

struct Unpacker<'a> {
    buf: &'a mut PackBuffer,
    reg: &'a TypeRegistry,
}

impl Unpacker<'_> {
    fn value(&mut self, path: &str, ty: &TypeExpr) -> Result<Value> {
        match ty {
            TypeExpr::Primitive(kind) => self.primitive(path, *kind),
            TypeExpr::Named(n) => self.record(path, n),
            TypeExpr::Array { element, extent } => (0..*extent)
                .map(|i| self.value(&format!("{path}[{i}]"), element))
                .collect::<Result<Vec<_>>>()
                .map(Value::Array),
            TypeExpr::Pointer(p) => match self.reg.classify_pointer(p) {
                PointerKind::SingleObject => {
                    let Some(TypeExpr::Named(pointee)) = p.pointee.as_deref() else {
                        return Err(mismatch(path, "named pointee"));
                    };
                    self.single_object(path, pointee)
                }
                _ => {
                    self.buf.visit(path);
                    Ok(Value::SkippedPointer)
                }
            },
        }
    }

    fn primitive(&mut self, path: &str, kind: PrimKind) -> Result<Value> {
        self.buf.visit(path);
        let mode = self.buf.mode();
        let bytes = self.buf.take(mode.width(kind), display_path(path))?;
        let payload = decode_primitive(kind, bytes, mode)
            .map_err(|detail| RuntimeError::Corrupt { path: display_path(path).to_string(), detail })?;
        Ok(Value::Primitive { kind, payload })
    }

    fn single_object(&mut self, path: &str, pointee: &str) -> Result<Value> {
        self.buf.visit(path);
        let flag = self.buf.take(1, display_path(path))?[0];
        match flag {
            0x00 => Ok(Value::MaybePointer(None)),
            0x01 => Ok(Value::MaybePointer(Some(Shared::new(self.record(path, pointee)?)))),
            other => Err(RuntimeError::Corrupt {
                path: display_path(path).to_string(),
                detail: format!("pointer flag byte 0x{other:02x}"),
            }),
        }
    }

    fn record(&mut self, path: &str, type_name: &str) -> Result<Value> {
        let class = lookup(self.reg, type_name, path)?;
        let plan = class_plan(class, self.reg, UNPACK, path)?;
        if let [PlanStep::UnionBlob { size }] = plan.steps.as_slice() {
            if self.buf.mode() == Mode::Xdr {
                return Err(RuntimeError::XdrUnion { path: display_path(path).to_string() });
            }
            self.buf.visit(path);
            return Ok(Value::UnionBlob(self.buf.take(*size, display_path(path))?.to_vec()));
        }
        let mut fields = Vec::with_capacity(plan.steps.len());
        for step in &plan.steps {
            let field = match step {
                PlanStep::BaseCall { base, .. } => self.record(path, base)?,
                PlanStep::MemberCall { suffix, ty, .. } => self.value(&format!("{path}{suffix}"), ty)?,
                PlanStep::OmittedTypeCall { suffix, type_name, .. } => {
                    self.record(&format!("{path}{suffix}"), type_name)?
                }
                PlanStep::ArrayCall { suffix, element, extent, .. } => {
                    self.value(&format!("{path}{suffix}"), &TypeExpr::array(element.clone(), *extent))?
                }
                PlanStep::PointerWarn { suffix, .. } => {
                    self.buf.visit(&format!("{path}{suffix}"));
                    Value::SkippedPointer
                }
                PlanStep::SingleObjectCall { suffix, pointee, .. } => {
                    self.single_object(&format!("{path}{suffix}"), pointee)?
                }
                PlanStep::UnionBlob { .. } => unreachable!("union plans have a single step"),
            };
            fields.push(field);
        }
        Ok(Value::Record { class_name: class.name.clone(), fields })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexer::tokenize;
    use crate::model::build_registry;
    use crate::parser::parse_unit;

    fn registry(src: &str, single: &[&str]) -> TypeRegistry {
        let (tokens, _) = tokenize(src);
        let (decls, diags) = parse_unit(&tokens);
        assert!(!crate::diag::has_errors(&diags), "{diags:?}");
        let (reg, diags) = build_registry(&decls);
        assert!(!crate::diag::has_errors(&diags), "{diags:?}");
        single.iter().fold(reg, |r, s| r.mark_single_object(s)).resolve().0
    }

    const TEST1: &str = "class base {};\nclass test1: public base {\n  int x, y;\n  double z[100];\n};\n";

    fn test1_value() -> Value {
        let z = (0..100).map(|i| Value::f64(i as f64 * 0.5)).collect();
        Value::record("test1", vec![Value::record("base", vec![]), Value::i32(3), Value::i32(4), Value::Array(z)])
    }

    #[test]
    fn test1_length_and_round_trip() {
        let reg = registry(TEST1, &[]);
        let ty = TypeExpr::named("test1");
        // Width-table arithmetic: empty base + two int32 + 100 float64.
        for (mode, expected) in [(Mode::Native, 4 + 4 + 100 * 8), (Mode::Xdr, 4 + 4 + 100 * 8)] {
            let mut buf = PackBuffer::new(mode);
            pack(&mut buf, "", &test1_value(), &ty, &reg).unwrap();
            assert_eq!(buf.len(), expected);
            assert_eq!(unpack(&mut buf, "", &ty, &reg).unwrap(), test1_value());
            assert_eq!(buf.remaining(), 0);
        }
    }

    #[test]
    fn truncated_buffer_names_member() {
        let reg = registry(TEST1, &[]);
        let ty = TypeExpr::named("test1");
        let mut buf = PackBuffer::new(Mode::Native);
        pack(&mut buf, "", &test1_value(), &ty, &reg).unwrap();
        let mut bytes = buf.into_bytes();
        bytes.pop();
        let mut short = PackBuffer::from_bytes(Mode::Native, bytes);
        match unpack(&mut short, "", &ty, &reg) {
            Err(RuntimeError::Underrun { path, .. }) => assert!(path.starts_with(".z"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_class_consumes_nothing() {
        let reg = registry("struct E {};", &[]);
        let mut buf = PackBuffer::from_bytes(Mode::Native, vec![9]);
        assert_eq!(unpack(&mut buf, "", &TypeExpr::named("E"), &reg).unwrap(), Value::record("E", vec![]));
        assert_eq!(buf.cursor(), 0);
    }

    #[test]
    fn generic_pointer_warns_and_appends_nothing() {
        let reg = registry("struct S { char* s; };", &[]);
        let mut buf = PackBuffer::new(Mode::Native);
        let v = Value::record("S", vec![Value::SkippedPointer]);
        pack(&mut buf, "obj", &v, &TypeExpr::named("S"), &reg).unwrap();
        assert_eq!(buf.len(), 0);
        assert_eq!(buf.warnings(), ["skipping generic pointer obj.s"]);
    }

    const PTRS: &str = "struct N { int a; N* next; };\nstruct H { N* head; int N::* mp; char* g; };\n";

    #[test]
    fn single_object_flag_bytes() {
        let reg = registry(PTRS, &["N"]);
        let ty = TypeExpr::named("H");
        let absent = Value::record("H", vec![Value::pointer(None), Value::SkippedPointer, Value::SkippedPointer]);
        let mut buf = PackBuffer::new(Mode::Xdr);
        pack(&mut buf, "", &absent, &ty, &reg).unwrap();
        assert_eq!(buf.bytes(), &[0x00]);
        assert_eq!(buf.warnings().len(), 2);

        let node = Value::record("N", vec![Value::i32(5), Value::pointer(None)]);
        let present = Value::record("H", vec![Value::pointer(Some(node)), Value::SkippedPointer, Value::SkippedPointer]);
        for (mode, expected) in [(Mode::Native, [0x01, 5, 0, 0, 0, 0x00]), (Mode::Xdr, [0x01, 0, 0, 0, 5, 0x00])] {
            let mut buf = PackBuffer::new(mode);
            pack(&mut buf, "", &present, &ty, &reg).unwrap();
            assert_eq!(buf.bytes(), expected);
            assert_eq!(unpack(&mut buf, "", &ty, &reg).unwrap(), present);
        }
    }

    #[test]
    fn cycle_is_rejected() {
        let reg = registry(PTRS, &["N"]);
        let a = Shared::new(Value::record("N", vec![Value::i32(1), Value::pointer(None)]));
        if let Value::Record { fields, .. } = &mut *a.0.borrow_mut() {
            fields[1] = Value::MaybePointer(Some(a.clone()));
        }
        let v = Value::record("H", vec![Value::MaybePointer(Some(a.clone())), Value::SkippedPointer, Value::SkippedPointer]);
        let mut buf = PackBuffer::new(Mode::Native);
        let err = pack(&mut buf, "", &v, &TypeExpr::named("H"), &reg).unwrap_err();
        assert_eq!(err, RuntimeError::Cyclic { path: ".head.next".into() });
        *a.0.borrow_mut() = Value::SkippedPointer;
    }

    #[test]
    fn bad_flag_is_corrupt() {
        let reg = registry(PTRS, &["N"]);
        let mut buf = PackBuffer::from_bytes(Mode::Native, vec![0x02]);
        assert!(matches!(unpack(&mut buf, "", &TypeExpr::named("H"), &reg), Err(RuntimeError::Corrupt { .. })));
    }

    #[test]
    fn unions_are_blobs_in_native_only() {
        let reg = registry("union U { int i; double d; };", &[]);
        let ty = TypeExpr::named("U");
        let v = Value::UnionBlob(vec![1, 2, 3, 4, 5, 6, 7, 8]);
        let mut buf = PackBuffer::new(Mode::Native);
        pack(&mut buf, "", &v, &ty, &reg).unwrap();
        assert_eq!(unpack(&mut buf, "", &ty, &reg).unwrap(), v);
        let mut buf = PackBuffer::new(Mode::Xdr);
        assert!(matches!(pack(&mut buf, "", &v, &ty, &reg), Err(RuntimeError::XdrUnion { .. })));
    }

    #[test]
    fn mismatch_is_an_error() {
        let reg = registry(TEST1, &[]);
        let mut buf = PackBuffer::new(Mode::Native);
        let bad = Value::record("test1", vec![Value::record("base", vec![]), Value::f64(1.0), Value::i32(4)]);
        assert!(matches!(pack(&mut buf, "", &bad, &TypeExpr::named("test1"), &reg), Err(RuntimeError::Mismatch { .. })));
    }

    #[test]
    fn stream_matches_sequential_pack() {
        let reg = registry(TEST1, &[]);
        let ty = TypeExpr::named("test1");
        let mut a = PackBuffer::new(Mode::Xdr);
        stream_pack(&mut a, &[(test1_value(), ty.clone()), (Value::i32(7), TypeExpr::Primitive(PrimKind::Int32))], &reg)
            .unwrap();
        let mut b = PackBuffer::new(Mode::Xdr);
        Stream::new(&mut b, &reg).put(&test1_value(), &ty).unwrap().put(&Value::i32(7), &TypeExpr::Primitive(PrimKind::Int32)).unwrap();
        let mut c = PackBuffer::new(Mode::Xdr);
        pack(&mut c, "", &test1_value(), &ty, &reg).unwrap();
        pack(&mut c, "", &Value::i32(7), &TypeExpr::Primitive(PrimKind::Int32), &reg).unwrap();
        assert_eq!(a.bytes(), c.bytes());
        assert_eq!(b.bytes(), c.bytes());
        let mut d = PackBuffer::new(Mode::Xdr);
        stream_pack(&mut d, &[], &reg).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn modes_visit_identically() {
        let reg = registry(PTRS, &["N"]);
        let node = Value::record("N", vec![Value::i32(5), Value::pointer(None)]);
        let v = Value::record("H", vec![Value::pointer(Some(node)), Value::SkippedPointer, Value::SkippedPointer]);
        let ty = TypeExpr::named("H");
        let mut n = PackBuffer::new(Mode::Native).with_trace();
        let mut x = PackBuffer::new(Mode::Xdr).with_trace();
        pack(&mut n, "", &v, &ty, &reg).unwrap();
        pack(&mut x, "", &v, &ty, &reg).unwrap();
        assert_eq!(n.trace(), x.trace());
        assert_eq!(n.trace().unwrap(), [".head", ".head.a", ".head.next", ".mp", ".g"]);
    }
}
