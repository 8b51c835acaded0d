//! Recursive-descent parser for class, struct and union definitions,
//! typedefs and descriptor pragmas.
//!
//! Anything outside the supported subset is skipped: at namespace scope
//! silently, inside a class body up to the next `;` with a warning.

use crate::diag::Diagnostic;
use crate::lexer::{Token, TokenKind};
use crate::model::{
    Access, Base, ClassDecl, ClassKind, Member, PointerKind, PointerType, PrimKind, SignatureClass, TemplateParam,
    TypeExpr,
};

#[derive(Debug, Clone, PartialEq)]
pub enum RawDeclKind {
    /// A class with member types exactly as written (typedefs unresolved).
    Class(ClassDecl),
    Typedef { name: String, ty: TypeExpr },
    Omit { action: Option<String>, type_name: String },
    SingleObject { type_name: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawDecl {
    pub kind: RawDeclKind,
    /// Position of the first token of the declaration.
    pub start: (u32, u32),
    /// Position of the last token of the declaration.
    pub end: (u32, u32),
}

/// Parses a token stream produced by [`crate::lexer::tokenize`].
pub fn parse_unit(tokens: &[Token]) -> (Vec<RawDecl>, Vec<Diagnostic>) {
    let eof = Token { kind: TokenKind::Eof, text: String::new(), line: 1, column: 1, offset: 0 };
    let mut p = Parser { toks: tokens, eof, pos: 0, out: Vec::new(), diags: Vec::new(), anon: 0 };
    p.unit();
    (p.out, p.diags)
}

/// Intermediate declarator type, applied inside-out onto the declared base.
#[derive(Debug, Clone)]
enum DType {
    Void,
    Ty(TypeExpr),
    Ptr(Box<DType>, bool),
    Ref(Box<DType>),
    Array(Box<DType>, Extent),
    Func(Box<DType>, Vec<Token>),
}

#[derive(Debug, Clone)]
enum Extent {
    Known(u64),
    Invalid(String),
}

#[derive(Debug, Clone)]
enum Declarator {
    Name(Option<(String, u32, u32)>),
    Ptr(Box<Declarator>, bool),
    Ref(Box<Declarator>),
    Array(Box<Declarator>, Extent),
    Func(Box<Declarator>, Vec<Token>),
}

impl Declarator {
    fn name(&self) -> Option<&(String, u32, u32)> {
        match self {
            Declarator::Name(n) => n.as_ref(),
            Declarator::Ptr(d, _) | Declarator::Ref(d) | Declarator::Array(d, _) | Declarator::Func(d, _) => d.name(),
        }
    }

    fn is_plain_name(&self) -> bool {
        matches!(self, Declarator::Name(Some(_)))
    }

    fn apply(self, base: DType) -> DType {
        match self {
            Declarator::Name(_) => base,
            Declarator::Ptr(inner, member) => inner.apply(DType::Ptr(Box::new(base), member)),
            Declarator::Ref(inner) => inner.apply(DType::Ref(Box::new(base))),
            Declarator::Array(inner, n) => inner.apply(DType::Array(Box::new(base), n)),
            Declarator::Func(inner, params) => inner.apply(DType::Func(Box::new(base), params)),
        }
    }
}

enum ClassSpec {
    Defined(String),
    Elaborated(String),
    Failed,
}

struct Parser<'t> {
    toks: &'t [Token],
    eof: Token,
    pos: usize,
    out: Vec<RawDecl>,
    diags: Vec<Diagnostic>,
    anon: u32,
}

impl<'t> Parser<'t> {
    fn peek_at(&self, ahead: usize) -> &Token {
        self.toks.get(self.pos + ahead).or(self.toks.last()).unwrap_or(&self.eof)
    }

    fn peek(&self) -> &Token {
        self.peek_at(0)
    }

    fn at_eof(&self) -> bool {
        self.peek().kind == TokenKind::Eof
    }

    fn bump(&mut self) -> Token {
        let t = self.peek().clone();
        if self.pos < self.toks.len() && t.kind != TokenKind::Eof {
            self.pos += 1;
        }
        t
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.peek().is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn here(&self) -> (u32, u32) {
        let t = self.peek();
        (t.line, t.column)
    }

    fn last_pos(&self) -> (u32, u32) {
        let t = if self.pos == 0 { self.peek() } else { &self.toks[self.pos - 1] };
        (t.line, t.column)
    }

    fn warn(&mut self, at: (u32, u32), msg: impl Into<String>) {
        self.diags.push(Diagnostic::warning(at.0, at.1, msg));
    }

    fn error(&mut self, at: (u32, u32), msg: impl Into<String>) {
        self.diags.push(Diagnostic::error(at.0, at.1, msg));
    }

    fn push(&mut self, kind: RawDeclKind, start: (u32, u32)) {
        let end = self.last_pos().max(start);
        self.out.push(RawDecl { kind, start, end });
    }

    /// Consumes a balanced group starting at the current opener. Returns
    /// false when input ends first.
    fn skip_group(&mut self) -> bool {
        let mut stack: Vec<&'static str> = Vec::new();
        loop {
            let t = self.bump();
            if t.kind == TokenKind::Eof {
                return false;
            }
            if t.kind == TokenKind::Punct {
                match t.text.as_str() {
                    "(" => stack.push(")"),
                    "[" => stack.push("]"),
                    "{" => stack.push("}"),
                    ")" | "]" | "}" => {
                        // Mismatched closers are tolerated: pop to the matching level.
                        if let Some(i) = stack.iter().rposition(|c| *c == t.text) {
                            stack.truncate(i);
                        }
                    }
                    _ => {}
                }
            }
            if stack.is_empty() {
                return true;
            }
        }
    }

    /// Skips one declaration. Stops after a depth-0 `;`, after a function
    /// body, or before a `}` that closes the enclosing scope. Returns false
    /// on end of input inside a group.
    fn skip_declaration(&mut self) -> bool {
        loop {
            let t = self.peek();
            match (t.kind, t.text.as_str()) {
                (TokenKind::Eof, _) => return true,
                (TokenKind::Punct, ";") => {
                    self.bump();
                    return true;
                }
                (TokenKind::Punct, "}") => return true,
                (TokenKind::Punct, "{") => {
                    if !self.skip_group() {
                        return false;
                    }
                    let next = self.peek();
                    if next.is_punct(";") {
                        self.bump();
                        return true;
                    }
                    if !(next.is_punct(",") || next.is_punct("{") || next.is_punct("=")
                        || next.kind == TokenKind::Identifier)
                    {
                        return true;
                    }
                }
                (TokenKind::Punct, "(" | "[") => {
                    if !self.skip_group() {
                        return false;
                    }
                }
                _ => {
                    self.bump();
                }
            }
        }
    }

    fn unit(&mut self) {
        while !self.at_eof() {
            let t = self.peek().clone();
            let start = (t.line, t.column);
            match (t.kind, t.text.as_str()) {
                (TokenKind::Pragma, _) => self.pragma(),
                (TokenKind::Keyword, "template") => self.template_decl("", start),
                (TokenKind::Keyword, "typedef") => self.typedef("", start),
                (TokenKind::Keyword, "class" | "struct" | "union") => self.namespace_class(start),
                (TokenKind::Keyword, "namespace") => {
                    // Contents of a namespace body are handled as top-level declarations.
                    self.bump();
                    while self.peek().kind == TokenKind::Identifier || self.peek().is_punct("::") {
                        self.bump();
                    }
                    if !self.eat_punct("{") {
                        self.skip_declaration();
                    }
                }
                (TokenKind::Keyword, "extern") if self.peek_at(1).kind == TokenKind::Literal => {
                    self.bump();
                    self.bump();
                    if !self.eat_punct("{") {
                        self.skip_declaration();
                    }
                }
                (TokenKind::Punct, "}" | ";") => {
                    self.bump();
                }
                _ => {
                    if !self.skip_declaration() {
                        self.error(start, "unbalanced braces: input ends inside a declaration");
                    }
                }
            }
        }
    }

    fn pragma(&mut self) {
        let t = self.bump();
        let words: Vec<&str> = t.text.split_whitespace().collect();
        let start = (t.line, t.column);
        let kind = match words.as_slice() {
            ["omit", ty] => RawDeclKind::Omit { action: None, type_name: ty.to_string() },
            ["omit", action, ty] => RawDeclKind::Omit { action: Some(action.to_string()), type_name: ty.to_string() },
            ["single_obj_ptr", ty] => RawDeclKind::SingleObject { type_name: ty.to_string() },
            _ => {
                self.warn(start, format!("malformed pragma `#pragma {}`", t.text));
                return;
            }
        };
        self.out.push(RawDecl { kind, start, end: start });
    }

    fn template_params(&mut self) -> Option<Vec<TemplateParam>> {
        if !self.eat_punct("<") {
            return None;
        }
        let mut groups: Vec<Vec<Token>> = vec![Vec::new()];
        let mut depth = 0usize;
        loop {
            let t = self.bump();
            match (t.kind, t.text.as_str()) {
                (TokenKind::Eof, _) => return None,
                (TokenKind::Punct, "<" | "(") => depth += 1,
                (TokenKind::Punct, ">" | ")") if depth == 0 => break,
                (TokenKind::Punct, ">" | ")") => depth -= 1,
                (TokenKind::Punct, ",") if depth == 0 => {
                    groups.push(Vec::new());
                    continue;
                }
                _ => {}
            }
            groups.last_mut().expect("non-empty").push(t);
        }
        let mut params = Vec::new();
        for g in groups {
            let head: Vec<&Token> = g.iter().take_while(|t| !t.is_punct("=")).collect();
            let Some((last, rest)) = head.split_last() else { continue };
            if last.kind == TokenKind::Identifier && !rest.is_empty() {
                params.push(TemplateParam {
                    kind: join_tokens(rest.iter().copied()),
                    name: last.text.clone(),
                });
            }
        }
        Some(params)
    }

    fn template_decl(&mut self, scope: &str, start: (u32, u32)) {
        self.bump();
        let Some(params) = self.template_params() else {
            self.warn(start, "malformed template parameter list");
            self.skip_declaration();
            return;
        };
        if self.peek().kind == TokenKind::Keyword && matches!(self.peek().text.as_str(), "class" | "struct" | "union") {
            let spec = self.class_specifier(scope, params, None, start);
            self.after_namespace_class(spec);
        } else if !self.skip_declaration() {
            self.error(start, "unbalanced braces: input ends inside a template declaration");
        }
    }

    fn namespace_class(&mut self, start: (u32, u32)) {
        let spec = self.class_specifier("", Vec::new(), None, start);
        self.after_namespace_class(spec);
    }

    fn after_namespace_class(&mut self, spec: ClassSpec) {
        match spec {
            ClassSpec::Failed => {}
            // Variables declared alongside the definition are not tracked.
            ClassSpec::Defined(_) | ClassSpec::Elaborated(_) => {
                self.skip_declaration();
            }
        }
    }

    /// Reads a possibly qualified name with template arguments. Stops before
    /// a `::*` member-pointer operator.
    fn qualified_name(&mut self) -> Option<String> {
        let mut parts: Vec<Token> = Vec::new();
        if self.peek().is_punct("::") && self.peek_at(1).kind == TokenKind::Identifier {
            parts.push(self.bump());
        }
        if self.peek().kind != TokenKind::Identifier {
            return None;
        }
        parts.push(self.bump());
        loop {
            if self.peek().is_punct("<") {
                let save = self.pos;
                match self.template_args() {
                    Some(args) => parts.extend(args),
                    None => {
                        self.pos = save;
                        break;
                    }
                }
            }
            if self.peek().is_punct("::") && self.peek_at(1).kind == TokenKind::Identifier {
                parts.push(self.bump());
                parts.push(self.bump());
            } else {
                break;
            }
        }
        Some(join_tokens(parts.iter()))
    }

    fn template_args(&mut self) -> Option<Vec<Token>> {
        let mut out = Vec::new();
        let mut depth = 0usize;
        loop {
            let t = self.bump();
            match (t.kind, t.text.as_str()) {
                (TokenKind::Eof, _) => return None,
                (TokenKind::Punct, ";" | "{" | "}") => return None,
                (TokenKind::Punct, "<") => depth += 1,
                (TokenKind::Punct, ">") => {
                    depth -= 1;
                    if depth == 0 {
                        out.push(t);
                        return Some(out);
                    }
                }
                _ => {}
            }
            out.push(t);
        }
    }

    fn fresh_anon_name(&mut self, scope: &str) -> String {
        self.anon += 1;
        qualify(scope, &format!("__anon{}", self.anon))
    }

    /// Parses `class|struct|union [name] [: bases] [{ body }]`. The current
    /// token is the class keyword.
    fn class_specifier(
        &mut self,
        scope: &str,
        template_params: Vec<TemplateParam>,
        name_hint: Option<String>,
        start: (u32, u32),
    ) -> ClassSpec {
        let kw = self.bump();
        let kind = match kw.text.as_str() {
            "class" => ClassKind::Class,
            "struct" => ClassKind::Struct,
            _ => ClassKind::Union,
        };
        let name = self.qualified_name();
        if self.peek().is(TokenKind::Identifier, "final") {
            self.bump();
        }
        let is_definition = self.peek().is_punct("{") || self.peek().is_punct(":");
        if !is_definition {
            return match name {
                Some(n) => ClassSpec::Elaborated(n),
                None => {
                    self.warn(start, "anonymous aggregate without a body");
                    ClassSpec::Failed
                }
            };
        }
        let mut bases = Vec::new();
        if self.eat_punct(":") {
            bases = self.base_list(kind);
        }
        if !self.peek().is_punct("{") {
            self.warn(self.here(), "expected `{` after base list; declaration skipped");
            self.skip_declaration();
            return ClassSpec::Failed;
        }
        let simple = match name.or(name_hint) {
            Some(n) => n,
            None => self.fresh_anon_name(""),
        };
        let qualified = if simple.contains("::") || scope.is_empty() { simple.clone() } else { qualify(scope, &simple) };
        if kind == ClassKind::Union && !bases.is_empty() {
            self.error(start, format!("union `{qualified}` cannot have base classes"));
            bases.clear();
        }
        self.bump();
        let Some((members, explicit_non_public)) = self.class_body(kind, &qualified, &template_params, start) else {
            return ClassSpec::Failed;
        };
        let has_private_or_protected =
            explicit_non_public || members.iter().any(|m: &Member| m.access != Access::Public);
        let decl = ClassDecl {
            name: qualified.clone(),
            kind,
            template_params,
            bases,
            members,
            has_private_or_protected,
            line: kw.line,
            column: kw.column,
        };
        self.push(RawDeclKind::Class(decl), start);
        ClassSpec::Defined(qualified)
    }

    fn base_list(&mut self, kind: ClassKind) -> Vec<Base> {
        let mut bases = Vec::new();
        loop {
            let at = self.here();
            let mut access = kind.default_access();
            let mut is_virtual = false;
            loop {
                let t = self.peek();
                match t.text.as_str() {
                    "virtual" if t.kind == TokenKind::Keyword => is_virtual = true,
                    "public" if t.kind == TokenKind::Keyword => access = Access::Public,
                    "private" if t.kind == TokenKind::Keyword => access = Access::Private,
                    "protected" if t.kind == TokenKind::Keyword => access = Access::Protected,
                    _ => break,
                }
                self.bump();
            }
            match self.qualified_name() {
                Some(name) => {
                    if is_virtual {
                        self.error(at, format!("virtual base `{name}` is not supported"));
                    }
                    bases.push(Base { name, access });
                }
                None => {
                    self.warn(at, "unrecognized base specifier");
                    while !(self.at_eof() || self.peek().is_punct("{") || self.peek().is_punct(",")
                        || self.peek().is_punct(";"))
                    {
                        self.bump();
                    }
                }
            }
            if !self.eat_punct(",") {
                return bases;
            }
        }
    }

    /// Parses members up to and including the closing brace. Returns `None`
    /// when the body is not closed before end of input.
    fn class_body(
        &mut self,
        kind: ClassKind,
        class_name: &str,
        template_params: &[TemplateParam],
        start: (u32, u32),
    ) -> Option<(Vec<Member>, bool)> {
        let simple_name = class_name.rsplit("::").next().unwrap_or(class_name).to_string();
        let simple_name = crate::model::strip_template_args(&simple_name).to_string();
        let mut access = kind.default_access();
        let mut explicit_non_public = false;
        let mut members = Vec::new();
        loop {
            let t = self.peek().clone();
            let at = (t.line, t.column);
            match (t.kind, t.text.as_str()) {
                (TokenKind::Eof, _) => {
                    self.error(start, format!("unbalanced braces: missing `}}` for `{class_name}`"));
                    return None;
                }
                (TokenKind::Punct, "}") => {
                    self.bump();
                    return Some((members, explicit_non_public));
                }
                (TokenKind::Punct, ";") => {
                    self.bump();
                }
                (TokenKind::Pragma, _) => self.pragma(),
                (TokenKind::Keyword, "public" | "private" | "protected") if self.peek_at(1).is_punct(":") => {
                    access = match t.text.as_str() {
                        "public" => Access::Public,
                        "private" => Access::Private,
                        _ => Access::Protected,
                    };
                    if access != Access::Public {
                        explicit_non_public = true;
                    }
                    self.bump();
                    self.bump();
                }
                (TokenKind::Keyword, "template") => {
                    self.bump();
                    if self.template_params().is_none() || !self.skip_declaration() {
                        self.error(at, "unbalanced member template");
                        return None;
                    }
                }
                (TokenKind::Keyword, "typedef") => self.typedef(class_name, at),
                (TokenKind::Keyword, "friend" | "using") => {
                    if !self.skip_declaration() {
                        return self.unclosed(start, class_name);
                    }
                }
                (TokenKind::Identifier, "static_assert") => {
                    if !self.skip_declaration() {
                        return self.unclosed(start, class_name);
                    }
                }
                (TokenKind::Keyword, "enum") => {
                    self.warn(at, "enum definitions are not supported; skipped");
                    if !self.skip_declaration() {
                        return self.unclosed(start, class_name);
                    }
                }
                (TokenKind::Keyword, "class" | "struct" | "union") => {
                    if !self.nested_aggregate(class_name, kind, access, at, &mut members) {
                        return self.unclosed(start, class_name);
                    }
                }
                (TokenKind::Punct, "~") => {
                    if !self.skip_declaration() {
                        return self.unclosed(start, class_name);
                    }
                }
                (TokenKind::Identifier, name)
                    if self.peek_at(1).is_punct("(")
                        && (name == simple_name || name.starts_with("CLASSDESC_ACCESS")) =>
                {
                    if !self.skip_declaration() {
                        return self.unclosed(start, class_name);
                    }
                }
                _ => {
                    let before = self.pos;
                    let ok = self.member_declaration(kind, access, template_params, &mut members, None);
                    if !ok {
                        return self.unclosed(start, class_name);
                    }
                    if self.pos == before {
                        // No progress: drop the offending token.
                        self.warn(at, format!("unexpected `{}` in class body", t.text));
                        self.bump();
                    }
                }
            }
        }
    }

    fn unclosed<T>(&mut self, start: (u32, u32), class_name: &str) -> Option<T> {
        self.error(start, format!("unbalanced braces: missing `}}` for `{class_name}`"));
        None
    }

    fn nested_aggregate(
        &mut self,
        outer: &str,
        outer_kind: ClassKind,
        access: Access,
        at: (u32, u32),
        members: &mut Vec<Member>,
    ) -> bool {
        let is_definition = {
            let mut i = 1;
            if self.peek_at(i).kind == TokenKind::Identifier {
                i += 1;
            }
            self.peek_at(i).is_punct("{") || self.peek_at(i).is_punct(":")
        };
        if !is_definition {
            // Elaborated type specifier used as a member type.
            return self.member_declaration(outer_kind, access, &[], members, None);
        }
        let anonymous = self.peek_at(1).kind != TokenKind::Identifier;
        let has_declarators = anonymous && {
            let save = self.pos;
            self.bump();
            while !(self.at_eof() || self.peek().is_punct("{")) {
                self.bump();
            }
            let closed = self.skip_group();
            let named = closed && self.peek().kind == TokenKind::Identifier;
            self.pos = save;
            named
        };
        if anonymous && !has_declarators {
            self.warn(at, "anonymous nested aggregate without a declarator skipped");
            self.bump();
            while !(self.at_eof() || self.peek().is_punct("{")) {
                self.bump();
            }
            if !self.skip_group() {
                return false;
            }
            self.eat_punct(";");
            return true;
        }
        let hint = if anonymous { Some(self.fresh_anon_name("")) } else { None };
        match self.class_specifier(outer, Vec::new(), hint, at) {
            ClassSpec::Failed => !self.at_eof(),
            ClassSpec::Defined(name) | ClassSpec::Elaborated(name) => {
                if self.eat_punct(";") {
                    return true;
                }
                self.member_declaration(outer_kind, access, &[], members, Some(DType::Ty(TypeExpr::Named(name))))
            }
        }
    }

    /// Reads declaration specifiers and returns the base type, or `None` if
    /// no type could be identified.
    fn decl_specifiers(&mut self) -> (Option<DType>, bool) {
        let mut words: Vec<String> = Vec::new();
        let mut named: Option<String> = None;
        let mut is_static = false;
        let at = self.here();
        loop {
            let t = self.peek().clone();
            match (t.kind, t.text.as_str()) {
                (TokenKind::Keyword, "static") => {
                    is_static = true;
                    self.bump();
                }
                (TokenKind::Keyword, "const" | "volatile" | "mutable" | "inline" | "virtual" | "explicit" | "extern" | "typename") => {
                    self.bump();
                }
                (TokenKind::Identifier, "constexpr" | "register") => {
                    self.bump();
                }
                (TokenKind::Keyword, "unsigned" | "signed" | "short" | "long" | "int" | "char" | "bool" | "float" | "double" | "void")
                    if named.is_none() =>
                {
                    words.push(t.text.clone());
                    self.bump();
                }
                (TokenKind::Keyword, "class" | "struct" | "union" | "enum") if named.is_none() && words.is_empty() => {
                    self.bump();
                    named = self.qualified_name();
                }
                (TokenKind::Identifier, _) | (TokenKind::Punct, "::") if named.is_none() && words.is_empty() => {
                    // `C::*` starts a member-pointer declarator, not a type.
                    if self.peek_at(1).is_punct("::") && self.peek_at(2).is_punct("*") {
                        break;
                    }
                    named = self.qualified_name();
                    if named.is_none() {
                        break;
                    }
                }
                _ => break,
            }
        }
        if let Some(n) = named {
            return (Some(DType::Ty(TypeExpr::Named(n))), is_static);
        }
        if words.is_empty() {
            return (None, is_static);
        }
        match primitive_from_words(&words) {
            Ok(Some(k)) => (Some(DType::Ty(TypeExpr::Primitive(k)))
                , is_static),
            Ok(None) => (Some(DType::Void), is_static),
            Err(msg) => {
                self.error(at, msg);
                (Some(DType::Ty(TypeExpr::Named(words.join(" ")))), is_static)
            }
        }
    }

    fn declarator(&mut self) -> Result<Declarator, String> {
        let mut ops: Vec<u8> = Vec::new(); // b'*', b'&', b'm' (member pointer)
        loop {
            let t = self.peek();
            if t.is_punct("*") {
                self.bump();
                ops.push(b'*');
            } else if t.is_punct("&") {
                self.bump();
                ops.push(b'&');
            } else if t.kind == TokenKind::Identifier && self.member_pointer_ahead() {
                while !self.peek().is_punct("*") {
                    self.bump();
                }
                self.bump();
                ops.push(b'm');
            } else if t.is_keyword("const") || t.is_keyword("volatile") {
                self.bump();
            } else {
                break;
            }
        }
        let mut direct = if self.peek().is_punct("(") && self.paren_declarator_ahead() {
            self.bump();
            let inner = self.declarator()?;
            if !self.eat_punct(")") {
                return Err("expected `)` in declarator".into());
            }
            inner
        } else if self.peek().kind == TokenKind::Identifier {
            let mut t = self.bump();
            // Out-of-line qualified names keep only the last component.
            while self.peek().is_punct("::") && self.peek_at(1).kind == TokenKind::Identifier {
                self.bump();
                t = self.bump();
            }
            Declarator::Name(Some((t.text, t.line, t.column)))
        } else if self.peek().is_keyword("operator") {
            return Err("operator declarations are not supported".into());
        } else {
            Declarator::Name(None)
        };
        loop {
            if self.peek().is_punct("[") {
                self.bump();
                let mut inner: Vec<Token> = Vec::new();
                while !(self.at_eof() || self.peek().is_punct("]") || self.peek().is_punct(";")) {
                    inner.push(self.bump());
                }
                if !self.eat_punct("]") {
                    return Err("expected `]`".into());
                }
                let extent = match inner.as_slice() {
                    [t] if t.kind == TokenKind::IntLiteral => match crate::lexer::parse_int_literal(&t.text) {
                        Some(n) if n >= 1 => Extent::Known(n),
                        _ => Extent::Invalid(t.text.clone()),
                    },
                    other => Extent::Invalid(join_tokens(other.iter())),
                };
                direct = Declarator::Array(Box::new(direct), extent);
            } else if self.peek().is_punct("(") {
                self.bump();
                let mut params = Vec::new();
                let mut depth = 0usize;
                loop {
                    let t = self.bump();
                    match (t.kind, t.text.as_str()) {
                        (TokenKind::Eof, _) => return Err("unterminated parameter list".into()),
                        (TokenKind::Punct, "(") => depth += 1,
                        (TokenKind::Punct, ")") if depth == 0 => break,
                        (TokenKind::Punct, ")") => depth -= 1,
                        _ => {}
                    }
                    params.push(t);
                }
                direct = Declarator::Func(Box::new(direct), params);
            } else {
                break;
            }
        }
        for op in ops.into_iter().rev() {
            direct = match op {
                b'&' => Declarator::Ref(Box::new(direct)),
                b'm' => Declarator::Ptr(Box::new(direct), true),
                _ => Declarator::Ptr(Box::new(direct), false),
            };
        }
        Ok(direct)
    }

    /// `Ident (:: Ident)* :: *`
    fn member_pointer_ahead(&self) -> bool {
        let mut i = 0;
        loop {
            if self.peek_at(i).kind != TokenKind::Identifier {
                return false;
            }
            if !self.peek_at(i + 1).is_punct("::") {
                return false;
            }
            if self.peek_at(i + 2).is_punct("*") {
                return true;
            }
            i += 2;
        }
    }

    fn paren_declarator_ahead(&self) -> bool {
        let next = self.peek_at(1);
        next.is_punct("*") || next.is_punct("&") || next.is_punct("(") || {
            let mut i = 1;
            let mut ok = false;
            while self.peek_at(i).kind == TokenKind::Identifier && self.peek_at(i + 1).is_punct("::") {
                if self.peek_at(i + 2).is_punct("*") {
                    ok = true;
                    break;
                }
                i += 2;
            }
            ok
        }
    }

    /// Skips an initializer or trailing specifiers up to the next depth-0
    /// `,` or `;` (not consumed).
    fn skip_initializer(&mut self) -> bool {
        loop {
            let t = self.peek();
            if t.kind == TokenKind::Eof {
                return false;
            }
            if t.is_punct(",") || t.is_punct(";") || t.is_punct("}") {
                return true;
            }
            if t.is_punct("(") || t.is_punct("[") || t.is_punct("{") {
                if !self.skip_group() {
                    return false;
                }
            } else {
                self.bump();
            }
        }
    }

    /// Parses one member declaration statement. Returns false only on end of
    /// input inside a group.
    fn member_declaration(
        &mut self,
        class_kind: ClassKind,
        access: Access,
        _template_params: &[TemplateParam],
        members: &mut Vec<Member>,
        base: Option<DType>,
    ) -> bool {
        let at = self.here();
        let (base, is_static) = match base {
            Some(b) => (Some(b), false),
            None => self.decl_specifiers(),
        };
        let Some(base) = base else {
            self.warn(at, format!("unrecognized construct `{}` in class body; skipped", self.peek().text));
            return self.skip_declaration();
        };
        let access = if class_kind == ClassKind::Union { Access::Public } else { access };
        loop {
            let decl_at = self.here();
            let decl = match self.declarator() {
                Ok(d) => d,
                Err(msg) => {
                    self.warn(decl_at, format!("{msg}; declaration skipped"));
                    return self.skip_declaration();
                }
            };
            let Some((name, line, column)) = decl.name().cloned() else {
                self.warn(decl_at, "declaration without a name skipped");
                return self.skip_declaration();
            };
            let applied = decl.apply(base.clone());
            if let DType::Func(ret, params) = applied {
                let signature = signature_class(&params);
                let ty = match *ret {
                    DType::Ty(t) => t,
                    DType::Ptr(..) | DType::Ref(_) | DType::Array(..) => {
                        convert(*ret).unwrap_or_else(|_| TypeExpr::Named("void".into()))
                    }
                    _ => TypeExpr::Named("void".into()),
                };
                members.push(Member {
                    name,
                    ty,
                    access,
                    serializable: false,
                    is_function: true,
                    function_signature_class: signature,
                    is_static,
                    line,
                });
                // Trailing qualifiers, pure specifiers, then a body or `;`.
                loop {
                    let t = self.peek();
                    if t.is_punct("{") {
                        if !self.skip_group() {
                            return false;
                        }
                        self.eat_punct(";");
                        return true;
                    }
                    if t.is_punct(";") {
                        self.bump();
                        return true;
                    }
                    if t.is_punct(",") {
                        self.bump();
                        break;
                    }
                    if t.is_punct("}") || t.kind == TokenKind::Eof {
                        return t.kind != TokenKind::Eof;
                    }
                    if t.is_punct(":") {
                        // Constructor-style initializer list.
                        return self.skip_declaration();
                    }
                    if t.is_punct("(") || t.is_punct("[") {
                        if !self.skip_group() {
                            return false;
                        }
                    } else {
                        self.bump();
                    }
                }
                continue;
            }
            if self.peek().is_punct(":") {
                self.error(decl_at, format!("bitfield member `{name}` is not supported"));
                self.bump();
                if !self.skip_initializer() {
                    return false;
                }
            } else {
                match self.to_type_expr(applied) {
                    Ok((ty, is_ref)) => {
                        if is_ref {
                            self.warn(decl_at, format!("reference member `{name}` is not serializable"));
                        }
                        members.push(Member {
                            name,
                            ty,
                            access,
                            serializable: !is_static && !is_ref,
                            is_function: false,
                            function_signature_class: SignatureClass::None,
                            is_static,
                            line,
                        });
                    }
                    Err(msg) => self.error((line, column), format!("member `{name}`: {msg}")),
                }
                if (self.peek().is_punct("=") || self.peek().is_punct("{")) && !self.skip_initializer() {
                    return false;
                }
            }
            let t = self.peek();
            if t.is_punct(",") {
                self.bump();
                continue;
            }
            if t.is_punct(";") {
                self.bump();
                return true;
            }
            if t.is_punct("}") {
                self.warn(self.here(), "missing `;` before `}`");
                return true;
            }
            self.warn(self.here(), format!("unexpected `{}` in member declaration; skipped", t.text));
            return self.skip_declaration();
        }
    }

    fn to_type_expr(&self, d: DType) -> Result<(TypeExpr, bool), String> {
        match d {
            DType::Ref(inner) => Ok((self.to_type_expr(*inner)?.0, true)),
            other => Ok((convert(other)?, false)),
        }
    }

    fn typedef(&mut self, scope: &str, start: (u32, u32)) {
        self.bump();
        let kw = self.peek().clone();
        let base = if kw.kind == TokenKind::Keyword && matches!(kw.text.as_str(), "class" | "struct" | "union") {
            let hint = self.anonymous_typedef_name();
            match self.class_specifier(scope, Vec::new(), hint.clone(), start) {
                ClassSpec::Failed => {
                    self.skip_declaration();
                    return;
                }
                ClassSpec::Defined(name) | ClassSpec::Elaborated(name) => DType::Ty(TypeExpr::Named(name)),
            }
        } else {
            match self.decl_specifiers().0 {
                Some(b) => b,
                None => {
                    self.warn(start, "unrecognized typedef; skipped");
                    self.skip_declaration();
                    return;
                }
            }
        };
        loop {
            let at = self.here();
            let decl = match self.declarator() {
                Ok(d) => d,
                Err(msg) => {
                    self.warn(at, format!("{msg}; typedef skipped"));
                    self.skip_declaration();
                    return;
                }
            };
            let Some((name, _, _)) = decl.name().cloned() else {
                self.warn(at, "typedef without a name skipped");
                self.skip_declaration();
                return;
            };
            let qualified = qualify(scope, &name);
            let plain = decl.is_plain_name();
            let applied = decl.apply(base.clone());
            let skip_self = plain && matches!(&applied, DType::Ty(TypeExpr::Named(n)) if *n == qualified);
            if !skip_self {
                let converted = match applied {
                    DType::Func(..) => Err("function types cannot be aliased here".to_string()),
                    other => self.to_type_expr(other).and_then(|(t, is_ref)| {
                        if is_ref {
                            Err("reference typedefs are not supported".into())
                        } else {
                            Ok(t)
                        }
                    }),
                };
                match converted {
                    Ok(ty) => self.push(RawDeclKind::Typedef { name: qualified, ty }, start),
                    Err(msg) => self.warn(at, format!("typedef `{name}`: {msg}")),
                }
            }
            if self.eat_punct(",") {
                continue;
            }
            if !self.eat_punct(";") {
                self.warn(self.here(), "expected `;` after typedef");
                self.skip_declaration();
            }
            return;
        }
    }

    /// For `typedef struct { ... } Name;` returns `Name`.
    fn anonymous_typedef_name(&self) -> Option<String> {
        let mut i = 1;
        if self.peek_at(i).kind == TokenKind::Identifier {
            return None;
        }
        while !self.peek_at(i).is_punct("{") {
            if self.peek_at(i).kind == TokenKind::Eof || self.peek_at(i).is_punct(";") {
                return None;
            }
            i += 1;
        }
        let mut depth = 0usize;
        loop {
            let t = self.peek_at(i);
            if t.kind == TokenKind::Eof {
                return None;
            }
            if t.is_punct("{") {
                depth += 1;
            } else if t.is_punct("}") {
                depth -= 1;
                if depth == 0 {
                    break;
                }
            }
            i += 1;
        }
        let next = self.peek_at(i + 1);
        (next.kind == TokenKind::Identifier).then(|| next.text.clone())
    }
}

fn qualify(scope: &str, name: &str) -> String {
    if scope.is_empty() {
        name.to_string()
    } else {
        format!("{scope}::{name}")
    }
}

/// Joins token texts, separating adjacent words with a single space.
pub(crate) fn join_tokens<'a>(tokens: impl IntoIterator<Item = &'a Token>) -> String {
    let mut out = String::new();
    let mut prev_word = false;
    for t in tokens {
        let word = matches!(t.kind, TokenKind::Identifier | TokenKind::Keyword | TokenKind::IntLiteral | TokenKind::Literal);
        if word && prev_word {
            out.push(' ');
        }
        out.push_str(&t.text);
        prev_word = word;
    }
    out
}

fn primitive_from_words(words: &[String]) -> Result<Option<PrimKind>, String> {
    let has = |w: &str| words.iter().any(|x| x == w);
    let longs = words.iter().filter(|w| *w == "long").count();
    let unsigned = has("unsigned");
    if has("void") {
        return Ok(None);
    }
    if has("double") {
        if longs > 0 {
            return Err("`long double` has no portable encoding".into());
        }
        return Ok(Some(PrimKind::Float64));
    }
    Ok(Some(if has("float") {
        PrimKind::Float32
    } else if has("bool") {
        PrimKind::Bool
    } else if has("char") {
        if unsigned {
            PrimKind::Uint8
        } else if has("signed") {
            PrimKind::Int8
        } else {
            PrimKind::Char
        }
    } else if has("short") {
        if unsigned { PrimKind::Uint16 } else { PrimKind::Int16 }
    } else if longs > 0 {
        if unsigned { PrimKind::Uint64 } else { PrimKind::Int64 }
    } else if unsigned {
        PrimKind::Uint32
    } else {
        PrimKind::Int32
    }))
}

fn convert(d: DType) -> Result<TypeExpr, String> {
    match d {
        DType::Void => Err("`void` is not an object type".into()),
        DType::Ty(t) => Ok(t),
        DType::Ref(_) => Err("pointer to reference".into()),
        DType::Func(..) => Err("function type in data declaration".into()),
        DType::Ptr(inner, member) => {
            let pointee = match *inner {
                DType::Void | DType::Func(..) | DType::Ref(_) => None,
                other => Some(Box::new(convert(other)?)),
            };
            let kind = if member { PointerKind::MemberPointer } else { PointerKind::Generic };
            Ok(TypeExpr::Pointer(PointerType { pointee, kind, via_typedef: false }))
        }
        DType::Array(inner, extent) => {
            let n = match extent {
                Extent::Known(n) => n,
                Extent::Invalid(text) => {
                    return Err(format!("array extent `{text}` must be a positive integer literal"));
                }
            };
            Ok(match convert(*inner)? {
                TypeExpr::Array { element, extent } => TypeExpr::Array { element, extent: extent * n },
                el => TypeExpr::Array { element: Box::new(el), extent: n },
            })
        }
    }
}

/// Classifies a parameter list as `()`, `(void)`, `(int argc, char *argv[])`
/// or anything else.
fn signature_class(params: &[Token]) -> SignatureClass {
    if params.is_empty() || (params.len() == 1 && params[0].is_keyword("void")) {
        return SignatureClass::NoArgs;
    }
    let groups: Vec<&[Token]> = params.split(|t| t.is_punct(",")).collect();
    if groups.len() != 2 {
        return SignatureClass::None;
    }
    let strip_name = |g: &[Token]| -> Vec<Token> {
        let mut v: Vec<Token> = g.to_vec();
        if v.len() > 1 && v.last().is_some_and(|t| t.kind == TokenKind::Identifier) {
            v.pop();
        }
        v
    };
    let count = strip_name(groups[0]);
    let is_int = !count.is_empty()
        && count.iter().all(|t| {
            t.kind == TokenKind::Keyword && matches!(t.text.as_str(), "int" | "unsigned" | "signed" | "long" | "short" | "const")
        })
        && count.iter().any(|t| t.text != "const");
    // The argument vector may carry its name before the `[]`.
    let vector: Vec<&Token> = groups[1].iter().filter(|t| t.kind != TokenKind::Identifier).collect();
    let indirection = vector.iter().filter(|t| t.is_punct("*") || t.is_punct("[")).count();
    let words_ok = vector
        .iter()
        .filter(|t| t.kind == TokenKind::Keyword)
        .all(|t| matches!(t.text.as_str(), "char" | "const"));
    let has_char = vector.iter().any(|t| t.is_keyword("char"));
    let idents = groups[1].iter().filter(|t| t.kind == TokenKind::Identifier).count();
    if is_int && has_char && words_ok && indirection == 2 && idents <= 1 {
        SignatureClass::ArgcArgv
    } else {
        SignatureClass::None
    }
}
