//! Descriptor plans and their rendering as C++ descriptor functions.
//!
//! A [`DescriptorPlan`] is the ordered list of calls a descriptor makes:
//! every base class first, then every member in declaration order. The same
//! plan renders for any action name (`pack`, `unpack`, `TCL_obj`, ...) since
//! only the called function and its buffer type change.
//!
//! Base calls cast by value, `(base_t)v`, exactly as the classic generated
//! listings do. In real C++ that copies (slices) the base subobject; a
//! reference cast would be needed for `unpack` to write through. The text is
//! kept verbatim and the discrepancy is left to the runtime library's
//! overloads.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::model::{Access, ClassDecl, ClassKind, PointerKind, SignatureClass, TemplateParam, TypeExpr, TypeRegistry};

/// Helper every generic or member pointer descriptor line calls.
pub const PTR_WARNING_HELPER: &str = "classdesc_ptr_warning";

/// Action whose plans also register callable member functions.
pub const TCL_OBJ: &str = "TCL_obj";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStep {
    BaseCall { base: String, access: Access },
    MemberCall { member: String, suffix: String, ty: TypeExpr, is_function: bool },
    ArrayCall { member: String, suffix: String, element: TypeExpr, extent: u64 },
    PointerWarn { member: String, suffix: String, kind: PointerKind },
    SingleObjectCall { member: String, suffix: String, pointee: String },
    UnionBlob { size: usize },
    OmittedTypeCall { member: String, suffix: String, type_name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DescriptorPlan {
    pub class_name: String,
    pub template_params: Vec<TemplateParam>,
    pub steps: Vec<PlanStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("no descriptor possible for member `{member}` of `{class}`: unknown type `{type_name}`")]
    NoDescriptor { class: String, member: String, type_name: String, line: u32 },
    #[error("cannot size union `{class}`: {reason}")]
    UnionSize { class: String, reason: String },
}

impl PlanError {
    pub fn line(&self) -> u32 {
        match self {
            PlanError::NoDescriptor { line, .. } => *line,
            PlanError::UnionSize { .. } => 0,
        }
    }
}

/// Builds the descriptor plan of `class` for `action`.
pub fn plan(class: &ClassDecl, registry: &TypeRegistry, action: &str) -> Result<DescriptorPlan, PlanError> {
    let mut steps = Vec::new();
    if class.kind == ClassKind::Union {
        let size = native_size(&TypeExpr::Named(class.name.clone()), registry, 0)
            .map_err(|reason| PlanError::UnionSize { class: class.name.clone(), reason })?;
        steps.push(PlanStep::UnionBlob { size });
        return Ok(DescriptorPlan { class_name: class.name.clone(), template_params: class.template_params.clone(), steps });
    }
    for base in &class.bases {
        steps.push(PlanStep::BaseCall { base: base.name.clone(), access: base.access });
    }
    let params: Vec<&str> = class.template_params.iter().map(|p| p.name.as_str()).collect();
    for m in &class.members {
        let suffix = format!(".{}", m.name);
        if m.is_function {
            let bindable = matches!(m.function_signature_class, SignatureClass::NoArgs | SignatureClass::ArgcArgv);
            if action == TCL_OBJ && bindable && !m.is_static {
                steps.push(PlanStep::MemberCall { member: m.name.clone(), suffix, ty: m.ty.clone(), is_function: true });
            }
            continue;
        }
        if !m.serializable {
            continue;
        }
        let no_descriptor = |type_name: &str| PlanError::NoDescriptor {
            class: class.name.clone(),
            member: m.name.clone(),
            type_name: type_name.to_string(),
            line: m.line,
        };
        let step = match &m.ty {
            TypeExpr::Primitive(_) => {
                PlanStep::MemberCall { member: m.name.clone(), suffix, ty: m.ty.clone(), is_function: false }
            }
            TypeExpr::Named(n) => {
                if registry.is_omitted(action, n) {
                    PlanStep::OmittedTypeCall { member: m.name.clone(), suffix, type_name: n.clone() }
                } else if registry.class(n).is_some() || is_template_dependent(n, &params) {
                    PlanStep::MemberCall { member: m.name.clone(), suffix, ty: m.ty.clone(), is_function: false }
                } else {
                    return Err(no_descriptor(n));
                }
            }
            TypeExpr::Array { element, extent } => match element.as_ref() {
                TypeExpr::Pointer(p) if registry.classify_pointer(p) != PointerKind::SingleObject => {
                    PlanStep::PointerWarn { member: m.name.clone(), suffix, kind: registry.classify_pointer(p) }
                }
                el => {
                    check_describable(el, registry, action, &params).map_err(|n| no_descriptor(&n))?;
                    PlanStep::ArrayCall { member: m.name.clone(), suffix, element: el.clone(), extent: *extent }
                }
            },
            TypeExpr::Pointer(p) => match registry.classify_pointer(p) {
                PointerKind::SingleObject => {
                    let Some(TypeExpr::Named(pointee)) = p.pointee.as_deref() else {
                        unreachable!("single-object pointers always name their pointee")
                    };
                    if !(registry.is_omitted(action, pointee) || registry.class(pointee).is_some()) {
                        return Err(no_descriptor(pointee));
                    }
                    PlanStep::SingleObjectCall { member: m.name.clone(), suffix, pointee: pointee.clone() }
                }
                kind => PlanStep::PointerWarn { member: m.name.clone(), suffix, kind },
            },
        };
        steps.push(step);
    }
    Ok(DescriptorPlan { class_name: class.name.clone(), template_params: class.template_params.clone(), steps })
}

fn is_template_dependent(name: &str, params: &[&str]) -> bool {
    let base = crate::model::strip_template_args(name);
    params.contains(&base)
        || name
            .split(|c: char| !(c.is_alphanumeric() || c == '_'))
            .any(|word| params.contains(&word))
}

/// Returns the offending type name if `ty` has no descriptor.
fn check_describable(ty: &TypeExpr, registry: &TypeRegistry, action: &str, params: &[&str]) -> Result<(), String> {
    match ty {
        TypeExpr::Primitive(_) => Ok(()),
        TypeExpr::Named(n) => {
            if registry.is_omitted(action, n) || registry.class(n).is_some() || is_template_dependent(n, params) {
                Ok(())
            } else {
                Err(n.clone())
            }
        }
        TypeExpr::Array { element, .. } => check_describable(element, registry, action, params),
        TypeExpr::Pointer(p) => match p.pointee.as_deref() {
            Some(t) if registry.classify_pointer(p) == PointerKind::SingleObject => {
                check_describable(t, registry, action, params)
            }
            _ => Ok(()),
        },
    }
}

/// Canonical in-memory size (no padding) used to size union blobs. Pointers
/// count as 8 bytes.
pub fn native_size(ty: &TypeExpr, registry: &TypeRegistry, depth: usize) -> Result<usize, String> {
    if depth > 64 {
        return Err("type nesting too deep".into());
    }
    match ty {
        TypeExpr::Primitive(k) => Ok(k.native_width()),
        TypeExpr::Pointer(_) => Ok(8),
        TypeExpr::Array { element, extent } => Ok(native_size(element, registry, depth + 1)? * *extent as usize),
        TypeExpr::Named(n) => {
            let class = registry.class(n).ok_or_else(|| format!("unknown type `{n}`"))?;
            let members = class.serializable_members().map(|m| native_size(&m.ty, registry, depth + 1));
            if class.kind == ClassKind::Union {
                members.into_iter().try_fold(0, |acc, s| Ok(acc.max(s?)))
            } else {
                let bases: Result<usize, String> = class
                    .bases
                    .iter()
                    .map(|b| native_size(&TypeExpr::Named(b.name.clone()), registry, depth + 1))
                    .sum();
                let members: Result<usize, String> = members.sum();
                Ok(bases? + members?)
            }
        }
    }
}

/// How often each member name occurs in an object of `class_name`, counting
/// the members its bases contribute under the same prefix.
pub fn member_name_counts(registry: &TypeRegistry, class_name: &str, action: &str) -> BTreeMap<String, usize> {
    fn walk(registry: &TypeRegistry, name: &str, action: &str, counts: &mut BTreeMap<String, usize>, depth: usize) {
        let Some(class) = registry.class(name) else { return };
        let Ok(p) = plan(class, registry, action) else { return };
        if depth > 64 {
            return;
        }
        for step in &p.steps {
            let member = match step {
                PlanStep::BaseCall { base, .. } => {
                    walk(registry, base, action, counts, depth + 1);
                    continue;
                }
                PlanStep::UnionBlob { .. } => continue,
                PlanStep::MemberCall { member, .. }
                | PlanStep::ArrayCall { member, .. }
                | PlanStep::PointerWarn { member, .. }
                | PlanStep::SingleObjectCall { member, .. }
                | PlanStep::OmittedTypeCall { member, .. } => member,
            };
            *counts.entry(member.clone()).or_default() += 1;
        }
    }
    let mut counts = BTreeMap::new();
    walk(registry, class_name, action, &mut counts, 0);
    counts
}

/// Unambiguous path of `member` reached from an object at `prefix` through
/// the base classes in `chain`. Descriptors pass the object's name unchanged
/// into base calls, so a base member normally shares the derived prefix
/// (`obj.m`); when another member of the object has the same name it is
/// qualified with its base chain instead (`obj.Base::m`).
pub fn member_path(prefix: &str, member: &str, chain: &[String], counts: &BTreeMap<String, usize>) -> String {
    if chain.is_empty() || counts.get(member).copied().unwrap_or(0) <= 1 {
        format!("{prefix}.{member}")
    } else {
        format!("{prefix}.{}::{member}", chain.join("::"))
    }
}

fn class_type_text(plan: &DescriptorPlan) -> String {
    if plan.template_params.is_empty() {
        plan.class_name.clone()
    } else {
        let names: Vec<&str> = plan.template_params.iter().map(|p| p.name.as_str()).collect();
        format!("{}<{}>", plan.class_name, names.join(","))
    }
}

/// Renders one descriptor function for `action`.
pub fn emit(plan: &DescriptorPlan, action: &str) -> String {
    let mut out = String::new();
    if !plan.template_params.is_empty() {
        let params: Vec<String> = plan.template_params.iter().map(|p| format!("{} {}", p.kind, p.name)).collect();
        let _ = writeln!(out, "template <{}>", params.join(", "));
    }
    let class = class_type_text(plan);
    let _ = writeln!(out, "void {action}({action}_t *p, string nm, {class}& v)");
    out.push_str("{\n");
    for step in &plan.steps {
        out.push_str("   ");
        match step {
            PlanStep::BaseCall { base, .. } => {
                let _ = write!(out, "{action}(p,nm,({base})v);");
            }
            PlanStep::MemberCall { member, suffix, is_function: true, .. } => {
                let _ = write!(out, "{action}(p,nm+\"{suffix}\",v,&{class}::{member});");
            }
            PlanStep::MemberCall { member, suffix, .. } | PlanStep::OmittedTypeCall { member, suffix, .. } => {
                let _ = write!(out, "{action}(p,nm+\"{suffix}\",v.{member});");
            }
            PlanStep::ArrayCall { member, suffix, extent, .. } => {
                let _ = write!(out, "{action}(p,nm+\"{suffix}\",v.{member},{extent});");
            }
            PlanStep::PointerWarn { suffix, .. } => {
                let _ = write!(out, "{PTR_WARNING_HELPER}(p,nm+\"{suffix}\");");
            }
            PlanStep::SingleObjectCall { member, suffix, .. } => {
                let _ = write!(out, "{action}_single_obj(p,nm+\"{suffix}\",v.{member});");
            }
            PlanStep::UnionBlob { size } => {
                let _ = write!(out, "{action}(p,nm,(char*)&v,{size});");
            }
        }
        out.push('\n');
    }
    out.push_str("}\n");
    out
}

/// Renders a descriptor file: the action's base header include followed by
/// one descriptor per class in `class_names` that is not omitted for
/// `action`. All plan errors are collected.
pub fn emit_unit(registry: &TypeRegistry, class_names: &[String], action: &str) -> Result<String, Vec<PlanError>> {
    let mut out = format!("#include \"{action}_base.h\"\n");
    let mut errors = Vec::new();
    let mut first = true;
    for name in class_names {
        if registry.is_omitted(action, name) {
            continue;
        }
        let Some(class) = registry.classes.get(name) else { continue };
        match plan(class, registry, action) {
            Ok(p) => {
                if !first {
                    out.push('\n');
                }
                first = false;
                out.push_str(&emit(&p, action));
            }
            Err(e) => errors.push(e),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

/// Friend-declaration macros granting each action's descriptors access to
/// non-public members.
pub fn emit_access_macros(actions: &[String]) -> String {
    let mut out = String::new();
    for (macro_name, template) in [("CLASSDESC_ACCESS", ""), ("CLASSDESC_ACCESS_TEMPLATE", "<>")] {
        let _ = write!(out, "#define {macro_name}(type)");
        for action in actions {
            let _ = write!(out, "\\\nfriend void {action}{template}({action}_t *,string,type&);");
        }
        out.push_str("\n\n");
    }
    out.pop();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexer::tokenize;
    use crate::model::{build_registry, PrimKind};
    use crate::parser::parse_unit;

    const TEST1: &str = "class test1: base_t\n{\n  int x,y;\npublic:\n  double z[100];\n};\n";

    fn registry(src: &str) -> TypeRegistry {
        let (toks, _) = tokenize(src);
        let (decls, _) = parse_unit(&toks);
        let (reg, diags) = build_registry(&decls);
        assert!(!crate::diag::has_errors(&diags), "{diags:?}");
        reg
    }

    fn plan_of(src: &str, class: &str, action: &str) -> Result<DescriptorPlan, PlanError> {
        let reg = registry(src);
        plan(&reg.classes[class], &reg, action)
    }

    /// Splits text into word and punctuation tokens, ignoring whitespace.
    fn normalize(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut word = String::new();
        for ch in text.chars() {
            if ch.is_alphanumeric() || ch == '_' {
                word.push(ch);
                continue;
            }
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
        out
    }

    #[test]
    fn test1_plan() {
        let p = plan_of(TEST1, "test1", "pack").unwrap();
        let int = TypeExpr::Primitive(PrimKind::Int32);
        assert_eq!(
            p.steps,
            vec![
                PlanStep::BaseCall { base: "base_t".into(), access: Access::Private },
                PlanStep::MemberCall { member: "x".into(), suffix: ".x".into(), ty: int.clone(), is_function: false },
                PlanStep::MemberCall { member: "y".into(), suffix: ".y".into(), ty: int, is_function: false },
                PlanStep::ArrayCall {
                    member: "z".into(),
                    suffix: ".z".into(),
                    element: TypeExpr::Primitive(PrimKind::Float64),
                    extent: 100
                },
            ]
        );
    }

    #[test]
    fn test1_listing_golden() {
        let reg = registry(TEST1);
        let text = emit_unit(&reg, &["test1".to_string()], "pack").unwrap();
        let listing = "#include \"pack_base.h\"\nvoid pack(pack_t *p, string nm, test1& v)\n{\n   pack(p,nm,(base_t)v);\n   pack(p,nm+\".x\",v.x);\n   pack(p,nm+\".y\",v.y);\n   pack(p,nm+\".z\",v.z,100);\n}\n";
        assert_eq!(normalize(&text), normalize(listing));
        assert_eq!(text, listing);
    }

    #[test]
    fn empty_class_has_empty_body() {
        let p = plan_of("class E {};", "E", "pack").unwrap();
        assert!(p.steps.is_empty());
        assert_eq!(emit(&p, "pack"), "void pack(pack_t *p, string nm, E& v)\n{\n}\n");
    }

    #[test]
    fn char_pointer_warns() {
        let p = plan_of("class S { char *s; };", "S", "pack").unwrap();
        assert_eq!(
            p.steps,
            vec![PlanStep::PointerWarn { member: "s".into(), suffix: ".s".into(), kind: PointerKind::Generic }]
        );
        assert!(emit(&p, "pack").contains("classdesc_ptr_warning(p,nm+\".s\");"));
    }

    #[test]
    fn unpack_is_pack_with_action_substituted() {
        let p = plan_of(TEST1, "test1", "pack").unwrap();
        let packed = emit(&p, "pack");
        let unpacked = emit(&p, "unpack");
        assert_eq!(packed.replace("pack", "unpack"), unpacked);
        assert!(unpacked.contains("unpack(p,nm+\".z\",v.z,100);"));
    }

    #[test]
    fn emission_is_deterministic() {
        let p = plan_of(TEST1, "test1", "pack").unwrap();
        assert_eq!(emit(&p, "pack"), emit(&p, "pack"));
    }

    #[test]
    fn unknown_member_type_is_an_error() {
        let err = plan_of("struct S { widget w; };", "S", "pack").unwrap_err();
        assert!(err.to_string().contains("no descriptor possible"));
        assert!(matches!(err, PlanError::NoDescriptor { ref type_name, .. } if type_name == "widget"));
    }

    #[test]
    fn omitted_type_still_gets_a_call() {
        let p = plan_of("#pragma omit pack widget\nstruct S { widget w; int n; };", "S", "pack").unwrap();
        assert_eq!(
            p.steps[0],
            PlanStep::OmittedTypeCall { member: "w".into(), suffix: ".w".into(), type_name: "widget".into() }
        );
        assert!(emit(&p, "pack").contains("pack(p,nm+\".w\",v.w);"));
        // Omission for pack does not cover unpack.
        assert!(plan_of("#pragma omit pack widget\nstruct S { widget w; };", "S", "unpack").is_err());
    }

    #[test]
    fn union_is_one_blob_of_widest_member() {
        let p = plan_of("union U { char c; double d; int i[3]; };", "U", "pack").unwrap();
        assert_eq!(p.steps, vec![PlanStep::UnionBlob { size: 12 }]);
        assert!(emit(&p, "pack").contains("pack(p,nm,(char*)&v,12);"));
    }

    #[test]
    fn pointer_kinds() {
        let src = "#pragma single_obj_ptr node\nstruct node { int v; node* next; node* any; };\nstruct P { int P::* mp; node* n; void (*fp)(int); };";
        let p = plan_of(src, "P", "pack").unwrap();
        let kinds: Vec<String> = p
            .steps
            .iter()
            .map(|s| match s {
                PlanStep::PointerWarn { kind, .. } => format!("warn {kind:?}"),
                PlanStep::SingleObjectCall { pointee, .. } => format!("single {pointee}"),
                other => format!("{other:?}"),
            })
            .collect();
        assert_eq!(kinds, vec!["warn MemberPointer", "single node", "warn Generic"]);
        assert!(emit(&p, "pack").contains("pack_single_obj(p,nm+\".n\",v.n);"));
    }

    #[test]
    fn template_class_descriptor() {
        let p = plan_of("template <class T, int N> class Box { T item; T more[4]; };", "Box", "pack").unwrap();
        let text = emit(&p, "pack");
        assert!(text.starts_with("template <class T, int N>\nvoid pack(pack_t *p, string nm, Box<T,N>& v)\n"));
        assert!(text.contains("pack(p,nm+\".item\",v.item);"));
        assert!(text.contains("pack(p,nm+\".more\",v.more,4);"));
    }

    #[test]
    fn tcl_obj_registers_bindable_functions() {
        let src = "class A { int x; public: int get(); void cmd(int argc, char *argv[]); void set(int v); };";
        let reg = registry(src);
        let tcl = emit(&plan(&reg.classes["A"], &reg, TCL_OBJ).unwrap(), TCL_OBJ);
        assert!(tcl.contains("TCL_obj(p,nm+\".x\",v.x);"));
        assert!(tcl.contains("TCL_obj(p,nm+\".get\",v,&A::get);"));
        assert!(tcl.contains("TCL_obj(p,nm+\".cmd\",v,&A::cmd);"));
        assert!(!tcl.contains(".set"));
        let pack = emit(&plan(&reg.classes["A"], &reg, "pack").unwrap(), "pack");
        assert_eq!(pack.lines().count(), 4);
    }

    #[test]
    fn statics_get_no_step() {
        let p = plan_of("struct S { static int count; int n; };", "S", "pack").unwrap();
        assert_eq!(p.steps.len(), 1);
    }

    #[test]
    fn access_macros() {
        let two = emit_access_macros(&["pack".into(), "unpack".into()]);
        assert_eq!(
            two,
            "#define CLASSDESC_ACCESS(type)\\\nfriend void pack(pack_t *,string,type&);\\\nfriend void unpack(unpack_t *,string,type&);\n\n\
             #define CLASSDESC_ACCESS_TEMPLATE(type)\\\nfriend void pack<>(pack_t *,string,type&);\\\nfriend void unpack<>(unpack_t *,string,type&);\n"
        );
        let one = emit_access_macros(&["pack".into()]);
        assert_eq!(one.matches("friend").count(), 2);
        let three = emit_access_macros(&["pack".into(), "unpack".into(), "TCL_obj".into()]);
        assert_eq!(three.lines().filter(|l| l.starts_with("friend")).count(), 6);
        for block in three.split("\n\n") {
            assert_eq!(block.lines().filter(|l| l.starts_with("friend")).count(), 3);
        }
    }

    #[test]
    fn member_order_matches_declaration_order() {
        let src = "struct S { int b; double a; char c[2]; int z; };";
        let p = plan_of(src, "S", "pack").unwrap();
        let text = emit(&p, "pack");
        let order: Vec<usize> = [".b", ".a", ".c", ".z"].iter().map(|s| text.find(s).unwrap()).collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
    }
}
