//! Resolved declaration model and the type registry built from parsed units.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diag::Diagnostic;
use crate::parser::{RawDecl, RawDeclKind};

/// Primitive kinds with a fixed wire width (see [`PrimKind::native_width`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimKind {
    Bool,
    Char,
    Int8,
    Int16,
    Int32,
    Int64,
    Uint8,
    Uint16,
    Uint32,
    Uint64,
    Float32,
    Float64,
}

impl PrimKind {
    pub const ALL: [PrimKind; 12] = [
        PrimKind::Bool,
        PrimKind::Char,
        PrimKind::Int8,
        PrimKind::Int16,
        PrimKind::Int32,
        PrimKind::Int64,
        PrimKind::Uint8,
        PrimKind::Uint16,
        PrimKind::Uint32,
        PrimKind::Uint64,
        PrimKind::Float32,
        PrimKind::Float64,
    ];

    /// Byte width in the native canonical layout.
    pub fn native_width(self) -> usize {
        match self {
            PrimKind::Bool | PrimKind::Char | PrimKind::Int8 | PrimKind::Uint8 => 1,
            PrimKind::Int16 | PrimKind::Uint16 => 2,
            PrimKind::Int32 | PrimKind::Uint32 | PrimKind::Float32 => 4,
            PrimKind::Int64 | PrimKind::Uint64 | PrimKind::Float64 => 8,
        }
    }

    /// Byte width in XDR: everything rounds up to the 4-byte quantum.
    pub fn xdr_width(self) -> usize {
        self.native_width().max(4)
    }

    pub fn is_float(self) -> bool {
        matches!(self, PrimKind::Float32 | PrimKind::Float64)
    }

    pub fn is_signed(self) -> bool {
        matches!(self, PrimKind::Char | PrimKind::Int8 | PrimKind::Int16 | PrimKind::Int32 | PrimKind::Int64)
    }

    /// Inclusive integer range, `None` for bool and floating kinds.
    pub fn int_range(self) -> Option<(i128, i128)> {
        Some(match self {
            PrimKind::Char | PrimKind::Int8 => (i8::MIN as i128, i8::MAX as i128),
            PrimKind::Int16 => (i16::MIN as i128, i16::MAX as i128),
            PrimKind::Int32 => (i32::MIN as i128, i32::MAX as i128),
            PrimKind::Int64 => (i64::MIN as i128, i64::MAX as i128),
            PrimKind::Uint8 => (0, u8::MAX as i128),
            PrimKind::Uint16 => (0, u16::MAX as i128),
            PrimKind::Uint32 => (0, u32::MAX as i128),
            PrimKind::Uint64 => (0, u64::MAX as i128),
            PrimKind::Bool | PrimKind::Float32 | PrimKind::Float64 => return None,
        })
    }

    /// The C++ spelling used in emitted text and IR dumps.
    pub fn c_name(self) -> &'static str {
        match self {
            PrimKind::Bool => "bool",
            PrimKind::Char => "char",
            PrimKind::Int8 => "signed char",
            PrimKind::Int16 => "short",
            PrimKind::Int32 => "int",
            PrimKind::Int64 => "long",
            PrimKind::Uint8 => "unsigned char",
            PrimKind::Uint16 => "unsigned short",
            PrimKind::Uint32 => "unsigned int",
            PrimKind::Uint64 => "unsigned long",
            PrimKind::Float32 => "float",
            PrimKind::Float64 => "double",
        }
    }
}

/// Fixed-width library typedefs that resolve to primitives without a
/// declaration in the parsed sources.
pub fn builtin_alias(name: &str) -> Option<PrimKind> {
    let name = name.strip_prefix("std::").unwrap_or(name);
    Some(match name {
        "int8_t" => PrimKind::Int8,
        "int16_t" => PrimKind::Int16,
        "int32_t" => PrimKind::Int32,
        "int64_t" | "ptrdiff_t" | "ssize_t" => PrimKind::Int64,
        "uint8_t" => PrimKind::Uint8,
        "uint16_t" => PrimKind::Uint16,
        "uint32_t" => PrimKind::Uint32,
        "uint64_t" | "size_t" => PrimKind::Uint64,
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointerKind {
    Generic,
    MemberPointer,
    SingleObject,
}

/// A pointer declarator. `kind` records only what the syntax says
/// (generic or member pointer); single-object status comes from the
/// registry via [`TypeRegistry::classify_pointer`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PointerType {
    /// `None` for `void*` and function pointers.
    pub pointee: Option<Box<TypeExpr>>,
    pub kind: PointerKind,
    /// Set when the pointer was spelled through a typedef alias.
    #[serde(default)]
    pub via_typedef: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeExpr {
    Primitive(PrimKind),
    Named(String),
    Array { element: Box<TypeExpr>, extent: u64 },
    Pointer(PointerType),
}

impl TypeExpr {
    pub fn named(name: impl Into<String>) -> Self {
        TypeExpr::Named(name.into())
    }

    pub fn array(element: TypeExpr, extent: u64) -> Self {
        TypeExpr::Array { element: Box::new(element), extent }
    }

    pub fn pointer_to(pointee: TypeExpr) -> Self {
        TypeExpr::Pointer(PointerType { pointee: Some(Box::new(pointee)), kind: PointerKind::Generic, via_typedef: false })
    }
}

impl fmt::Display for TypeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeExpr::Primitive(k) => f.write_str(k.c_name()),
            TypeExpr::Named(n) => f.write_str(n),
            TypeExpr::Array { element, extent } => write!(f, "{element}[{extent}]"),
            TypeExpr::Pointer(p) => {
                match &p.pointee {
                    Some(t) => write!(f, "{t}")?,
                    None => f.write_str("void")?,
                }
                match p.kind {
                    PointerKind::MemberPointer => f.write_str(" ::*"),
                    _ => f.write_str("*"),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Access {
    Public,
    Private,
    Protected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    Class,
    Struct,
    Union,
}

impl ClassKind {
    pub fn default_access(self) -> Access {
        match self {
            ClassKind::Class => Access::Private,
            ClassKind::Struct | ClassKind::Union => Access::Public,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Base {
    pub name: String,
    pub access: Access,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TemplateParam {
    /// `class`, `typename`, or the type of a non-type parameter.
    pub kind: String,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureClass {
    None,
    NoArgs,
    ArgcArgv,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Member {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: TypeExpr,
    pub access: Access,
    pub serializable: bool,
    pub is_function: bool,
    pub function_signature_class: SignatureClass,
    #[serde(default)]
    pub is_static: bool,
    #[serde(default)]
    pub line: u32,
}

impl Member {
    pub fn data(name: impl Into<String>, ty: TypeExpr, access: Access) -> Self {
        Member {
            name: name.into(),
            ty,
            access,
            serializable: true,
            is_function: false,
            function_signature_class: SignatureClass::None,
            is_static: false,
            line: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassDecl {
    pub name: String,
    pub kind: ClassKind,
    pub template_params: Vec<TemplateParam>,
    pub bases: Vec<Base>,
    pub members: Vec<Member>,
    pub has_private_or_protected: bool,
    #[serde(default)]
    pub line: u32,
    #[serde(default)]
    pub column: u32,
}

impl ClassDecl {
    pub fn is_template(&self) -> bool {
        !self.template_params.is_empty()
    }

    /// Data members that take part in the object's state, in declaration order.
    pub fn serializable_members(&self) -> impl Iterator<Item = &Member> {
        self.members.iter().filter(|m| m.serializable)
    }

    fn same_definition(&self, other: &ClassDecl) -> bool {
        let strip = |c: &ClassDecl| {
            let mut c = c.clone();
            c.line = 0;
            c.column = 0;
            c.members.iter_mut().for_each(|m| m.line = 0);
            c
        };
        strip(self) == strip(other)
    }

    /// Outer scopes of a qualified name, innermost first, ending with the
    /// global scope.
    fn lookup_scopes(&self) -> Vec<String> {
        let mut scopes = vec![self.name.clone()];
        let mut cur = self.name.as_str();
        while let Some(i) = cur.rfind("::") {
            cur = &cur[..i];
            scopes.push(cur.to_string());
        }
        scopes.push(String::new());
        scopes
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OmitEntry {
    /// `None` omits the type for every action.
    pub action: Option<String>,
    pub type_name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeRegistry {
    pub classes: BTreeMap<String, ClassDecl>,
    pub typedefs: BTreeMap<String, TypeExpr>,
    pub omit_set: BTreeSet<OmitEntry>,
    pub single_object_set: BTreeSet<String>,
}

pub const IR_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct IrDocument {
    ir_version: u32,
    #[serde(flatten)]
    registry: TypeRegistry,
}

#[derive(Debug, thiserror::Error)]
pub enum IrError {
    #[error("malformed IR: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported IR version {0} (expected {IR_VERSION})")]
    Version(u32),
}

/// Builds a resolved registry from the declarations of one unit.
pub fn build_registry(decls: &[RawDecl]) -> (TypeRegistry, Vec<Diagnostic>) {
    let (reg, diags) = build_registry_units(&[decls]);
    (reg, diags.into_iter().map(|(_, d)| d).collect())
}

/// Builds one resolved registry from several units. Each diagnostic is
/// paired with the index of the unit it refers to.
pub fn build_registry_units(units: &[&[RawDecl]]) -> (TypeRegistry, Vec<(usize, Diagnostic)>) {
    let mut reg = TypeRegistry::default();
    let mut diags = Vec::new();
    let decls = || units.iter().enumerate().flat_map(|(u, ds)| ds.iter().map(move |d| (u, d)));
    for (unit, decl) in decls() {
        let (line, column) = decl.start;
        match &decl.kind {
            RawDeclKind::Class(class) => match reg.classes.get(&class.name) {
                Some(existing) if !existing.same_definition(class) => {
                    diags.push((
                        unit,
                        Diagnostic::error(line, column, format!("class `{}` redefined with a different definition", class.name)),
                    ));
                }
                Some(_) => {}
                None => {
                    reg.classes.insert(class.name.clone(), class.clone());
                }
            },
            RawDeclKind::Typedef { name, ty } => match reg.typedefs.get(name) {
                Some(existing) if existing != ty => {
                    diags.push((unit, Diagnostic::error(line, column, format!("typedef `{name}` redefined as a different type"))));
                }
                _ => {
                    reg.typedefs.insert(name.clone(), ty.clone());
                }
            },
            RawDeclKind::Omit { action, type_name } => {
                reg.omit_set.insert(OmitEntry { action: action.clone(), type_name: type_name.clone() });
            }
            RawDeclKind::SingleObject { type_name } => {
                reg.single_object_set.insert(type_name.clone());
            }
        }
    }
    let cycles = reg.resolve_in_place();
    for name in cycles {
        let (unit, pos) = decls()
            .find(|(_, d)| matches!(&d.kind, RawDeclKind::Typedef { name: n, .. } if *n == name))
            .map(|(u, d)| (u, d.start))
            .unwrap_or((0, (1, 1)));
        diags.push((unit, Diagnostic::error(pos.0, pos.1, format!("typedef `{name}` is part of a cycle"))));
    }
    (reg, diags)
}

impl TypeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn class(&self, name: &str) -> Option<&ClassDecl> {
        self.classes.get(name).or_else(|| self.classes.get(strip_template_args(name)))
    }

    /// True when `type_name` has a user-supplied descriptor for `action`.
    pub fn is_omitted(&self, action: &str, type_name: &str) -> bool {
        self.omit_set.iter().any(|e| {
            e.type_name == type_name && e.action.as_deref().is_none_or(|a| a == action)
        })
    }

    pub fn mark_single_object(mut self, type_name: &str) -> Self {
        self.single_object_set.insert(type_name.to_string());
        self
    }

    pub fn classify_pointer(&self, ptr: &PointerType) -> PointerKind {
        if ptr.kind == PointerKind::MemberPointer {
            return PointerKind::MemberPointer;
        }
        if ptr.via_typedef {
            return PointerKind::Generic;
        }
        match ptr.pointee.as_deref() {
            Some(TypeExpr::Named(n)) if self.single_object_set.contains(n) => PointerKind::SingleObject,
            _ => PointerKind::Generic,
        }
    }

    /// Resolves typedef chains in every stored type. Idempotent.
    pub fn resolve(mut self) -> (Self, Vec<String>) {
        let cycles = self.resolve_in_place();
        (self, cycles)
    }

    /// Returns the names of typedefs dropped because they form a cycle.
    fn resolve_in_place(&mut self) -> Vec<String> {
        let mut cycles = Vec::new();
        let names: Vec<String> = self.typedefs.keys().cloned().collect();
        let mut resolved: BTreeMap<String, TypeExpr> = BTreeMap::new();
        for name in &names {
            let mut stack = Vec::new();
            match self.resolve_typedef(name, &mut stack, &mut resolved) {
                Some(t) => {
                    resolved.insert(name.clone(), t);
                }
                None => cycles.push(name.clone()),
            }
        }
        // `typedef struct S {...} S;` aliases the class to itself.
        resolved.retain(|name, t| !(matches!(t, TypeExpr::Named(n) if n == name) && self.classes.contains_key(name)));
        self.typedefs = resolved;

        let typedefs = self.typedefs.clone();
        let class_names: BTreeSet<String> = self.classes.keys().cloned().collect();
        for class in self.classes.values_mut() {
            let scopes = class.lookup_scopes();
            let params: Vec<String> = class.template_params.iter().map(|p| p.name.clone()).collect();
            let mut lookup = |n: &str| lookup_in_scopes(n, &scopes, &params, &class_names, &typedefs);
            for base in &mut class.bases {
                if let Some(TypeExpr::Named(n)) = lookup(&base.name) {
                    base.name = n;
                }
            }
            for member in &mut class.members {
                member.ty = substitute(&member.ty, &mut lookup);
            }
        }
        cycles
    }

    fn resolve_typedef(
        &self,
        name: &str,
        stack: &mut Vec<String>,
        done: &mut BTreeMap<String, TypeExpr>,
    ) -> Option<TypeExpr> {
        if let Some(t) = done.get(name) {
            return Some(t.clone());
        }
        if stack.iter().any(|s| s == name) {
            return None;
        }
        stack.push(name.to_string());
        let raw = self.typedefs.get(name)?.clone();
        let scope = name.rfind("::").map(|i| &name[..i]).unwrap_or("");
        let mut scopes = Vec::new();
        let mut cur = scope;
        loop {
            scopes.push(cur.to_string());
            match cur.rfind("::") {
                Some(i) => cur = &cur[..i],
                None if !cur.is_empty() => cur = "",
                None => break,
            }
        }
        let mut failed = false;
        let result = substitute(&raw, &mut |n: &str| {
            if failed {
                return None;
            }
            for scope in &scopes {
                let q = qualify(scope, n);
                if self.classes.contains_key(&q) {
                    return Some(TypeExpr::Named(q));
                }
                if q != name && self.typedefs.contains_key(&q) {
                    match self.resolve_typedef(&q, stack, done) {
                        Some(t) => return Some(mark_via_typedef(t)),
                        None => {
                            failed = true;
                            return None;
                        }
                    }
                }
            }
            builtin_alias(n).map(TypeExpr::Primitive)
        });
        stack.pop();
        if failed {
            return None;
        }
        // Self reference through a typedef of the same name that is not a class.
        if matches!(&result, TypeExpr::Named(n) if n == name) && !self.classes.contains_key(name) {
            return None;
        }
        done.insert(name.to_string(), result.clone());
        Some(result)
    }

    pub fn to_ir_json(&self) -> String {
        let doc = IrDocument { ir_version: IR_VERSION, registry: self.clone() };
        let mut s = serde_json::to_string_pretty(&doc).expect("registry serializes");
        s.push('\n');
        s
    }

    pub fn from_ir_json(text: &str) -> Result<Self, IrError> {
        let doc: IrDocument = serde_json::from_str(text)?;
        if doc.ir_version != IR_VERSION {
            return Err(IrError::Version(doc.ir_version));
        }
        Ok(doc.registry)
    }
}

fn qualify(scope: &str, name: &str) -> String {
    if scope.is_empty() {
        name.to_string()
    } else {
        format!("{scope}::{name}")
    }
}

pub(crate) fn strip_template_args(name: &str) -> &str {
    match name.find('<') {
        Some(i) => &name[..i],
        None => name,
    }
}

fn lookup_in_scopes(
    name: &str,
    scopes: &[String],
    params: &[String],
    classes: &BTreeSet<String>,
    typedefs: &BTreeMap<String, TypeExpr>,
) -> Option<TypeExpr> {
    if params.iter().any(|p| p == name) {
        return None;
    }
    let bare = name.strip_prefix("::").unwrap_or(name);
    for scope in scopes {
        let q = qualify(scope, bare);
        if classes.contains(&q) || classes.contains(strip_template_args(&q)) {
            return Some(TypeExpr::Named(q));
        }
        if let Some(t) = typedefs.get(&q) {
            return Some(mark_via_typedef(t.clone()));
        }
    }
    builtin_alias(bare).map(TypeExpr::Primitive)
}

fn mark_via_typedef(t: TypeExpr) -> TypeExpr {
    match t {
        TypeExpr::Pointer(mut p) => {
            p.via_typedef = true;
            TypeExpr::Pointer(p)
        }
        TypeExpr::Array { element, extent } => {
            TypeExpr::Array { element: Box::new(mark_via_typedef(*element)), extent }
        }
        other => other,
    }
}

/// Rewrites every named leaf through `lookup`, flattening arrays of arrays.
fn substitute(ty: &TypeExpr, lookup: &mut dyn FnMut(&str) -> Option<TypeExpr>) -> TypeExpr {
    match ty {
        TypeExpr::Primitive(_) => ty.clone(),
        TypeExpr::Named(n) => lookup(n).unwrap_or_else(|| ty.clone()),
        TypeExpr::Array { element, extent } => match substitute(element, lookup) {
            TypeExpr::Array { element: inner, extent: e2 } => TypeExpr::Array { element: inner, extent: extent * e2 },
            el => TypeExpr::Array { element: Box::new(el), extent: *extent },
        },
        TypeExpr::Pointer(p) => TypeExpr::Pointer(PointerType {
            pointee: p.pointee.as_ref().map(|t| Box::new(substitute(t, lookup))),
            kind: p.kind,
            via_typedef: p.via_typedef,
        }),
    }
}
