use std::collections::{BTreeMap, HashSet};

use super::value::{format_scalar, parse_scalar, Shared, Value};
use crate::emit::{self, PlanStep, TCL_OBJ};
use crate::model::{PointerKind, PrimKind, TypeExpr, TypeRegistry};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BindError {
    #[error("unknown command `{0}`")]
    Lookup(String),
    #[error("cannot set `{path}`: {detail}")]
    Type { path: String, detail: String },
    #[error("index {index} out of range for `{path}` (extent {extent})")]
    Index { path: String, index: String, extent: usize },
    #[error("`{0}` is a member function; no interpreter is linked")]
    NotLinked(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("cannot bind `{path}`: {detail}")]
    Structure { path: String, detail: String },
}

/// One hop from a value to one of its children.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Hop {
    Field(usize),
    Index(usize),
    Deref,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Entry {
    Scalar { route: Vec<Hop>, kind: PrimKind },
    Array { route: Vec<Hop>, kind: PrimKind, extent: usize },
    Function,
}

/// Command table over one object, in the spirit of a scripting binding:
/// `obj.x` reads a member, `obj.x 7` assigns it, `obj.z 5` reads element 5
/// of an array and `obj.z 5 1.5` assigns it.
#[derive(Debug)]
pub struct CommandRegistry {
    root: Shared,
    entries: BTreeMap<String, Entry>,
}

impl CommandRegistry {
    /// Registered command paths in sorted order.
    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Paths that read or write data (everything except member functions).
    pub fn member_paths(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(|(_, e)| !matches!(e, Entry::Function)).map(|(k, _)| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Current state of the bound object.
    pub fn root(&self) -> Value {
        self.root.0.borrow().clone()
    }

    /// Runs one command line: a path followed by zero or more arguments.
    /// Returns the value text for reads and an empty string for writes.
    pub fn invoke(&mut self, line: &str) -> Result<String, BindError> {
        let mut words = line.split_whitespace();
        let path = words.next().ok_or_else(|| BindError::Usage("empty command".into()))?;
        let args: Vec<&str> = words.collect();
        let entry = self.entries.get(path).ok_or_else(|| BindError::Lookup(path.to_string()))?;
        match (entry, args.as_slice()) {
            (Entry::Function, _) => Err(BindError::NotLinked(path.to_string())),
            (Entry::Scalar { route, kind }, []) => Ok(with_leaf(&self.root, route, |v| text(v, *kind))),
            (Entry::Scalar { route, kind }, [arg]) => {
                let payload = parse_scalar(*kind, arg).map_err(|detail| BindError::Type { path: path.into(), detail })?;
                with_leaf(&self.root, route, |v| *v = Value::Primitive { kind: *kind, payload });
                Ok(String::new())
            }
            (Entry::Array { route, kind, .. }, []) => Ok(with_leaf(&self.root, route, |v| match v {
                Value::Array(items) => items.iter().map(|i| text(i, *kind)).collect::<Vec<_>>().join(" "),
                _ => String::new(),
            })),
            (Entry::Array { route, kind, extent }, [index, rest @ ..]) if rest.len() <= 1 => {
                let i = index
                    .parse::<usize>()
                    .ok()
                    .filter(|i| i < extent)
                    .ok_or_else(|| BindError::Index { path: path.into(), index: index.to_string(), extent: *extent })?;
                let mut route = route.clone();
                route.push(Hop::Index(i));
                match rest {
                    [] => Ok(with_leaf(&self.root, &route, |v| text(v, *kind))),
                    [arg] => {
                        let payload =
                            parse_scalar(*kind, arg).map_err(|detail| BindError::Type { path: path.into(), detail })?;
                        with_leaf(&self.root, &route, |v| *v = Value::Primitive { kind: *kind, payload });
                        Ok(String::new())
                    }
                    _ => unreachable!(),
                }
            }
            _ => Err(BindError::Usage(format!("too many arguments for `{path}`"))),
        }
    }
}

fn text(v: &Value, kind: PrimKind) -> String {
    match v {
        Value::Primitive { payload, .. } => format_scalar(kind, payload),
        _ => String::new(),
    }
}

/// Follows `route` from `node` and applies `f` to the value found there.
fn with_leaf<R>(node: &Shared, route: &[Hop], f: impl FnOnce(&mut Value) -> R) -> R {
    fn walk<R>(v: &mut Value, route: &[Hop], f: impl FnOnce(&mut Value) -> R) -> R {
        match route.split_first() {
            None => f(v),
            Some((Hop::Field(i), rest)) => match v {
                Value::Record { fields, .. } => walk(&mut fields[*i], rest, f),
                _ => unreachable!("route validated at bind time"),
            },
            Some((Hop::Index(i), rest)) => match v {
                Value::Array(items) => walk(&mut items[*i], rest, f),
                _ => unreachable!("route validated at bind time"),
            },
            Some((Hop::Deref, rest)) => match v {
                Value::MaybePointer(Some(target)) => with_leaf(&target.clone(), rest, f),
                _ => unreachable!("route validated at bind time"),
            },
        }
    }
    walk(&mut node.0.borrow_mut(), route, f)
}

/// Registers a command for every primitive member reachable from `root`,
/// which must be a value of class `class_name`.
pub fn bind_members(
    reg: &TypeRegistry,
    class_name: &str,
    root: Value,
    root_name: &str,
) -> Result<CommandRegistry, BindError> {
    let shared = Shared::new(root);
    let mut binder = Binder { reg, entries: BTreeMap::new(), visited: HashSet::new() };
    {
        let value = shared.0.borrow();
        binder.record(root_name, &mut Vec::new(), &value, class_name)?;
    }
    Ok(CommandRegistry { root: shared, entries: binder.entries })
}

struct Binder<'a> {
    reg: &'a TypeRegistry,
    entries: BTreeMap<String, Entry>,
    visited: HashSet<*const std::cell::RefCell<Value>>,
}

impl Binder<'_> {
    fn structure(path: &str, detail: impl Into<String>) -> BindError {
        BindError::Structure { path: path.to_string(), detail: detail.into() }
    }

    fn record(&mut self, path: &str, route: &mut Vec<Hop>, value: &Value, type_name: &str) -> Result<(), BindError> {
        let counts = emit::member_name_counts(self.reg, type_name, TCL_OBJ);
        self.record_in(path, route, value, type_name, &mut Vec::new(), &counts)
    }

    fn register(&mut self, path: String, entry: Entry) -> Result<(), BindError> {
        match self.entries.get(&path) {
            // Overloads share one command.
            Some(Entry::Function) if entry == Entry::Function => return Ok(()),
            Some(_) => return Err(Self::structure(&path, "path registered twice")),
            None => {}
        }
        self.entries.insert(path, entry);
        Ok(())
    }

    fn record_in(
        &mut self,
        path: &str,
        route: &mut Vec<Hop>,
        value: &Value,
        type_name: &str,
        chain: &mut Vec<String>,
        counts: &BTreeMap<String, usize>,
    ) -> Result<(), BindError> {
        let class = self.reg.class(type_name).ok_or_else(|| Self::structure(path, format!("unknown type `{type_name}`")))?;
        let plan = emit::plan(class, self.reg, TCL_OBJ).map_err(|e| Self::structure(path, e.to_string()))?;
        if matches!(plan.steps.as_slice(), [PlanStep::UnionBlob { .. }]) {
            return Ok(());
        }
        let Value::Record { fields, .. } = value else { return Err(Self::structure(path, "expected a record")) };
        let mut fields = fields.iter().enumerate();
        for step in &plan.steps {
            let at = |member: &str| emit::member_path(path, member, chain, counts);
            if let PlanStep::MemberCall { member, is_function: true, .. } = step {
                self.register(at(member), Entry::Function)?;
                continue;
            }
            let (i, field) = fields.next().ok_or_else(|| Self::structure(path, "too few fields"))?;
            route.push(Hop::Field(i));
            match step {
                PlanStep::BaseCall { base, .. } => {
                    chain.push(base.clone());
                    self.record_in(path, route, field, base, chain, counts)?;
                    chain.pop();
                }
                PlanStep::MemberCall { member, ty, .. } => self.value(&at(member), route, field, ty)?,
                PlanStep::OmittedTypeCall { member, type_name, .. } => {
                    if self.reg.class(type_name).is_some() {
                        self.record(&at(member), route, field, type_name)?
                    }
                }
                PlanStep::ArrayCall { member, element, extent, .. } => {
                    self.value(&at(member), route, field, &TypeExpr::array(element.clone(), *extent))?
                }
                PlanStep::SingleObjectCall { member, pointee, .. } => self.pointer(&at(member), route, field, pointee)?,
                PlanStep::PointerWarn { .. } | PlanStep::UnionBlob { .. } => {}
            }
            route.pop();
        }
        Ok(())
    }

    fn value(&mut self, path: &str, route: &mut Vec<Hop>, value: &Value, ty: &TypeExpr) -> Result<(), BindError> {
        match ty {
            TypeExpr::Primitive(kind) => {
                if !matches!(value, Value::Primitive { kind: k, .. } if k == kind) {
                    return Err(Self::structure(path, format!("expected {}", kind.c_name())));
                }
                self.register(path.to_string(), Entry::Scalar { route: route.clone(), kind: *kind })?;
            }
            TypeExpr::Named(n) => self.record(path, route, value, n)?,
            TypeExpr::Array { element, extent } => {
                let Value::Array(items) = value else { return Err(Self::structure(path, "expected an array")) };
                if items.len() as u64 != *extent {
                    return Err(Self::structure(path, format!("expected {extent} elements")));
                }
                if let TypeExpr::Primitive(kind) = element.as_ref() {
                    let entry = Entry::Array { route: route.clone(), kind: *kind, extent: items.len() };
                    return self.register(path.to_string(), entry);
                }
                for (i, item) in items.iter().enumerate() {
                    route.push(Hop::Index(i));
                    self.value(&format!("{path}[{i}]"), route, item, element)?;
                    route.pop();
                }
            }
            TypeExpr::Pointer(p) => {
                if let (PointerKind::SingleObject, Some(TypeExpr::Named(n))) =
                    (self.reg.classify_pointer(p), p.pointee.as_deref())
                {
                    self.pointer(path, route, value, n)?;
                }
            }
        }
        Ok(())
    }

    fn pointer(&mut self, path: &str, route: &mut Vec<Hop>, value: &Value, pointee: &str) -> Result<(), BindError> {
        let Value::MaybePointer(target) = value else { return Err(Self::structure(path, "expected a pointer")) };
        let Some(target) = target else { return Ok(()) };
        if !self.visited.insert(target.id()) {
            return Ok(());
        }
        route.push(Hop::Deref);
        let inner = target.0.borrow();
        self.record(path, route, &inner, pointee)?;
        route.pop();
        Ok(())
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
        let (decls, _) = parse_unit(&tokens);
        let (reg, _) = build_registry(&decls);
        single.iter().fold(reg, |r, s| r.mark_single_object(s)).resolve().0
    }

    fn test1() -> (TypeRegistry, Value) {
        let reg = registry("class base {};\nclass test1: public base {\n  int x, y;\n  double z[100];\n};\n", &[]);
        let z = (0..100).map(|i| Value::f64(i as f64)).collect();
        (reg, Value::record("test1", vec![Value::record("base", vec![]), Value::i32(3), Value::i32(4), Value::Array(z)]))
    }

    #[test]
    fn get_and_set() {
        let (reg, v) = test1();
        let mut cmds = bind_members(&reg, "test1", v, "obj").unwrap();
        assert_eq!(cmds.paths().collect::<Vec<_>>(), ["obj.x", "obj.y", "obj.z"]);
        assert_eq!(cmds.invoke("obj.x").unwrap(), "3");
        cmds.invoke("obj.x 7").unwrap();
        assert_eq!(cmds.invoke("obj.x").unwrap(), "7");
        assert_eq!(cmds.invoke("obj.z 5").unwrap(), "5");
        cmds.invoke("obj.z 5 2.5").unwrap();
        assert_eq!(cmds.invoke("obj.z 5").unwrap(), "2.5");
        assert!(cmds.invoke("obj.z").unwrap().starts_with("0 1 2 3 4 2.5 6"));
        match cmds.root() {
            Value::Record { fields, .. } => assert_eq!(fields[1], Value::i32(7)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors() {
        let (reg, v) = test1();
        let mut cmds = bind_members(&reg, "test1", v, "obj").unwrap();
        assert!(matches!(cmds.invoke("obj.w"), Err(BindError::Lookup(_))));
        assert!(matches!(cmds.invoke("obj.x abc"), Err(BindError::Type { .. })));
        assert!(matches!(cmds.invoke("obj.z 100"), Err(BindError::Index { .. })));
        assert!(matches!(cmds.invoke("obj.x 1 2"), Err(BindError::Usage(_))));
        assert_eq!(cmds.invoke("obj.x").unwrap(), "3");
    }

    #[test]
    fn empty_class_has_no_entries() {
        let reg = registry("struct E {};", &[]);
        assert!(bind_members(&reg, "E", Value::record("E", vec![]), "e").unwrap().is_empty());
    }

    #[test]
    fn shadowed_base_members_are_qualified() {
        let reg = registry("struct A { int m; int k; };\nstruct B : A { double m; };", &[]);
        let v = Value::record("B", vec![Value::record("A", vec![Value::i32(1), Value::i32(2)]), Value::f64(0.5)]);
        let mut cmds = bind_members(&reg, "B", v, "b").unwrap();
        assert_eq!(cmds.paths().collect::<Vec<_>>(), ["b.A::m", "b.k", "b.m"]);
        assert_eq!(cmds.invoke("b.A::m").unwrap(), "1");
        assert_eq!(cmds.invoke("b.m").unwrap(), "0.5");
    }

    #[test]
    fn nested_pointers_and_functions() {
        let src = "struct In { bool f; };\nstruct N { int a; N* next; };\n\
                   struct O : In { In in; N* head; char* s; int go(); int cmd(int argc, char** argv); int other(double); };";
        let reg = registry(src, &["N"]);
        let n2 = Value::record("N", vec![Value::i32(2), Value::pointer(None)]);
        let n1 = Value::record("N", vec![Value::i32(1), Value::pointer(Some(n2))]);
        let v = Value::record(
            "O",
            vec![
                Value::record("In", vec![Value::bool(true)]),
                Value::record("In", vec![Value::bool(false)]),
                Value::pointer(Some(n1)),
                Value::SkippedPointer,
            ],
        );
        let mut cmds = bind_members(&reg, "O", v, "o").unwrap();
        assert_eq!(
            cmds.paths().collect::<Vec<_>>(),
            ["o.cmd", "o.f", "o.go", "o.head.a", "o.head.next.a", "o.in.f"]
        );
        assert_eq!(cmds.invoke("o.head.next.a").unwrap(), "2");
        cmds.invoke("o.head.next.a 9").unwrap();
        assert_eq!(cmds.invoke("o.head.next.a").unwrap(), "9");
        assert_eq!(cmds.invoke("o.f").unwrap(), "1");
        assert!(matches!(cmds.invoke("o.go"), Err(BindError::NotLinked(_))));
    }
}
