//! Keyed text form of runtime values.
//!
//! One line per primitive leaf, `path = literal`, where the path follows the
//! descriptor naming convention: `.x`, `.z[5]`, `.inner.a`. Base-class
//! members share their derived object's prefix. Single-object pointers that
//! are absent are written `path = null`; a present pointee without any
//! leaves is written `path = {}`. Unions are written `path = blob:<hex>`.
//! When a base member shares its name with another member of the same
//! object it is qualified by its base chain, `.Base::m`. Generic and member
//! pointers produce no line. Blank lines and lines starting with `#` are
//! ignored on input. The root itself is spelled `.`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::emit::{self, PlanStep};
use crate::model::{PointerKind, PrimKind, TypeExpr, TypeRegistry};
use crate::runtime::{format_scalar, parse_scalar, Shared, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValuesError {
    #[error("line {line}: expected `path = value`")]
    Syntax { line: usize },
    #[error("line {line}: duplicate entry for `{path}`")]
    Duplicate { line: usize, path: String },
    #[error("missing entry for `{path}`")]
    Missing { path: String },
    #[error("line {line}: unknown path `{path}`")]
    Unknown { line: usize, path: String },
    #[error("line {line}: bad value for `{path}`: {detail}")]
    BadValue { line: usize, path: String, detail: String },
    #[error("`{path}`: {detail}")]
    Structure { path: String, detail: String },
}

const READ: &str = "unpack";
const WRITE: &str = "pack";

fn shown(path: &str) -> &str {
    if path.is_empty() {
        "."
    } else {
        path
    }
}

fn structure(path: &str, detail: impl Into<String>) -> ValuesError {
    ValuesError::Structure { path: shown(path).to_string(), detail: detail.into() }
}

fn plan_for(reg: &TypeRegistry, type_name: &str, action: &str, path: &str) -> Result<emit::DescriptorPlan, ValuesError> {
    let class = reg.class(type_name).ok_or_else(|| structure(path, format!("unknown type `{type_name}`")))?;
    emit::plan(class, reg, action).map_err(|e| structure(path, e.to_string()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(text: &str) -> Option<Vec<u8>> {
    if !text.len().is_multiple_of(2) || !text.is_ascii() {
        return None;
    }
    (0..text.len()).step_by(2).map(|i| u8::from_str_radix(&text[i..i + 2], 16).ok()).collect()
}

/// Renders `value` of type `ty` as values-file text.
pub fn write_values(value: &Value, ty: &TypeExpr, reg: &TypeRegistry) -> Result<String, ValuesError> {
    let mut out = String::new();
    Writer { reg, out: &mut out }.value("", value, ty)?;
    Ok(out)
}

struct Writer<'a> {
    reg: &'a TypeRegistry,
    out: &'a mut String,
}

impl Writer<'_> {
    fn line(&mut self, path: &str, text: &str) {
        let _ = writeln!(self.out, "{} = {text}", shown(path));
    }

    fn value(&mut self, path: &str, value: &Value, ty: &TypeExpr) -> Result<(), ValuesError> {
        match (ty, value) {
            (TypeExpr::Primitive(kind), Value::Primitive { kind: k, payload }) if k == kind => {
                self.line(path, &format_scalar(*kind, payload));
                Ok(())
            }
            (TypeExpr::Named(n), v) => self.record(path, v, n),
            (TypeExpr::Array { element, extent }, Value::Array(items)) if items.len() as u64 == *extent => {
                items.iter().enumerate().try_for_each(|(i, item)| self.value(&format!("{path}[{i}]"), item, element))
            }
            (TypeExpr::Pointer(p), v) => match (self.reg.classify_pointer(p), p.pointee.as_deref()) {
                (PointerKind::SingleObject, Some(TypeExpr::Named(n))) => self.pointer(path, v, n),
                _ => Ok(()),
            },
            _ => Err(structure(path, format!("value does not match `{ty}`"))),
        }
    }

    fn pointer(&mut self, path: &str, value: &Value, pointee: &str) -> Result<(), ValuesError> {
        match value {
            Value::MaybePointer(None) => {
                self.line(path, "null");
                Ok(())
            }
            Value::MaybePointer(Some(target)) => {
                let before = self.out.len();
                self.record(path, &target.0.borrow(), pointee)?;
                if self.out.len() == before {
                    self.line(path, "{}");
                }
                Ok(())
            }
            _ => Err(structure(path, "expected a single-object pointer")),
        }
    }

    fn record(&mut self, path: &str, value: &Value, type_name: &str) -> Result<(), ValuesError> {
        let counts = emit::member_name_counts(self.reg, type_name, WRITE);
        self.record_in(path, value, type_name, &mut Vec::new(), &counts)
    }

    fn record_in(
        &mut self,
        path: &str,
        value: &Value,
        type_name: &str,
        chain: &mut Vec<String>,
        counts: &BTreeMap<String, usize>,
    ) -> Result<(), ValuesError> {
        let plan = plan_for(self.reg, type_name, WRITE, path)?;
        if let [PlanStep::UnionBlob { .. }] = plan.steps.as_slice() {
            let Value::UnionBlob(bytes) = value else { return Err(structure(path, "expected a union blob")) };
            self.line(path, &format!("blob:{}", hex(bytes)));
            return Ok(());
        }
        let Value::Record { fields, .. } = value else { return Err(structure(path, "expected a record")) };
        if fields.len() != plan.steps.len() {
            return Err(structure(path, format!("expected {} fields, found {}", plan.steps.len(), fields.len())));
        }
        for (step, field) in plan.steps.iter().zip(fields) {
            let at = |member: &str| emit::member_path(path, member, chain, counts);
            match step {
                PlanStep::BaseCall { base, .. } => {
                    chain.push(base.clone());
                    self.record_in(path, field, base, chain, counts)?;
                    chain.pop();
                }
                PlanStep::MemberCall { member, ty, .. } => self.value(&at(member), field, ty)?,
                PlanStep::OmittedTypeCall { member, type_name, .. } => self.record(&at(member), field, type_name)?,
                PlanStep::ArrayCall { member, element, extent, .. } => {
                    self.value(&at(member), field, &TypeExpr::array(element.clone(), *extent))?
                }
                PlanStep::SingleObjectCall { member, pointee, .. } => self.pointer(&at(member), field, pointee)?,
                PlanStep::PointerWarn { .. } | PlanStep::UnionBlob { .. } => {}
            }
        }
        Ok(())
    }
}

/// Parses values-file text into a value of type `ty`.
pub fn read_values(text: &str, ty: &TypeExpr, reg: &TypeRegistry) -> Result<Value, ValuesError> {
    let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (path, literal) = trimmed.split_once('=').ok_or(ValuesError::Syntax { line })?;
        let path = path.trim();
        if !path.starts_with('.') || path.contains(char::is_whitespace) {
            return Err(ValuesError::Syntax { line });
        }
        if entries.insert(path.to_string(), (line, literal.trim().to_string())).is_some() {
            return Err(ValuesError::Duplicate { line, path: path.to_string() });
        }
    }
    let mut reader = Reader { reg, entries };
    let value = reader.value("", ty)?;
    if let Some((path, (line, _))) = reader.entries.into_iter().next() {
        return Err(ValuesError::Unknown { line, path });
    }
    Ok(value)
}

struct Reader<'a> {
    reg: &'a TypeRegistry,
    entries: BTreeMap<String, (usize, String)>,
}

impl Reader<'_> {
    fn take(&mut self, path: &str) -> Result<(usize, String), ValuesError> {
        self.entries.remove(shown(path)).ok_or_else(|| ValuesError::Missing { path: shown(path).to_string() })
    }

    fn value(&mut self, path: &str, ty: &TypeExpr) -> Result<Value, ValuesError> {
        match ty {
            TypeExpr::Primitive(kind) => self.primitive(path, *kind),
            TypeExpr::Named(n) => self.record(path, n),
            TypeExpr::Array { element, extent } => {
                (0..*extent).map(|i| self.value(&format!("{path}[{i}]"), element)).collect::<Result<_, _>>().map(Value::Array)
            }
            TypeExpr::Pointer(p) => match (self.reg.classify_pointer(p), p.pointee.as_deref()) {
                (PointerKind::SingleObject, Some(TypeExpr::Named(n))) => self.pointer(path, n),
                _ => Ok(Value::SkippedPointer),
            },
        }
    }

    fn primitive(&mut self, path: &str, kind: PrimKind) -> Result<Value, ValuesError> {
        let (line, literal) = self.take(path)?;
        let payload = parse_scalar(kind, &literal)
            .map_err(|detail| ValuesError::BadValue { line, path: shown(path).to_string(), detail })?;
        Ok(Value::Primitive { kind, payload })
    }

    fn pointer(&mut self, path: &str, pointee: &str) -> Result<Value, ValuesError> {
        match self.entries.remove(path) {
            Some((_, lit)) if lit == "null" => return Ok(Value::MaybePointer(None)),
            Some((_, lit)) if lit == "{}" => {}
            Some((line, lit)) => {
                return Err(ValuesError::BadValue {
                    line,
                    path: path.to_string(),
                    detail: format!("`{lit}` is not `null` or `{{}}`"),
                })
            }
            None => {
                let prefix = format!("{path}.");
                let present = self.entries.range(prefix.clone()..).next().is_some_and(|(k, _)| k.starts_with(&prefix));
                if !present {
                    return Err(ValuesError::Missing { path: path.to_string() });
                }
            }
        }
        Ok(Value::MaybePointer(Some(Shared::new(self.record(path, pointee)?))))
    }

    fn record(&mut self, path: &str, type_name: &str) -> Result<Value, ValuesError> {
        let counts = emit::member_name_counts(self.reg, type_name, READ);
        self.record_in(path, type_name, &mut Vec::new(), &counts)
    }

    fn record_in(
        &mut self,
        path: &str,
        type_name: &str,
        chain: &mut Vec<String>,
        counts: &BTreeMap<String, usize>,
    ) -> Result<Value, ValuesError> {
        let plan = plan_for(self.reg, type_name, READ, path)?;
        if let [PlanStep::UnionBlob { size }] = plan.steps.as_slice() {
            let (line, literal) = self.take(path)?;
            let bad = |detail: String| ValuesError::BadValue { line, path: shown(path).to_string(), detail };
            let bytes = literal
                .strip_prefix("blob:")
                .and_then(unhex)
                .ok_or_else(|| bad(format!("`{literal}` is not `blob:<hex>`")))?;
            if bytes.len() != *size {
                return Err(bad(format!("expected {size} bytes, found {}", bytes.len())));
            }
            return Ok(Value::UnionBlob(bytes));
        }
        let mut fields = Vec::with_capacity(plan.steps.len());
        for step in &plan.steps {
            let at = |member: &str| emit::member_path(path, member, chain, counts);
            fields.push(match step {
                PlanStep::BaseCall { base, .. } => {
                    chain.push(base.clone());
                    let v = self.record_in(path, base, chain, counts)?;
                    chain.pop();
                    v
                }
                PlanStep::MemberCall { member, ty, .. } => self.value(&at(member), ty)?,
                PlanStep::OmittedTypeCall { member, type_name, .. } => self.record(&at(member), type_name)?,
                PlanStep::ArrayCall { member, element, extent, .. } => {
                    self.value(&at(member), &TypeExpr::array(element.clone(), *extent))?
                }
                PlanStep::SingleObjectCall { member, pointee, .. } => self.pointer(&at(member), pointee)?,
                PlanStep::PointerWarn { .. } => Value::SkippedPointer,
                PlanStep::UnionBlob { .. } => unreachable!("union plans have a single step"),
            });
        }
        let class = self.reg.class(type_name).expect("planned above");
        Ok(Value::Record { class_name: class.name.clone(), fields })
    }
}
