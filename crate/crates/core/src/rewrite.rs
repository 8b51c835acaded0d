//! Source rewriting that grants descriptors access to non-public members.
//!
//! `insert_access_macros` adds one `CLASSDESC_ACCESS(Name);` line (or
//! `CLASSDESC_ACCESS_TEMPLATE(Name);` for class templates) right after the
//! opening brace of every class or struct definition that has a private or
//! protected region. Only bytes are inserted; nothing existing is changed.
//! The scan is token based: macros are not expanded, and a class whose
//! braces open and close in different preprocessor-conditional branches is
//! left alone with a warning.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::diag::{has_errors, Diagnostic};
use crate::lexer::{tokenize, Token, TokenKind};

pub const ACCESS_MACRO: &str = "CLASSDESC_ACCESS";
pub const ACCESS_TEMPLATE_MACRO: &str = "CLASSDESC_ACCESS_TEMPLATE";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edit {
    /// Input line holding the class's opening brace.
    pub line: u32,
    /// Exact bytes inserted.
    pub inserted: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteResult {
    pub output: String,
    pub edits: Vec<Edit>,
    pub changed: bool,
    pub diagnostics: Vec<Diagnostic>,
}

impl RewriteResult {
    fn unchanged(source: &str, diagnostics: Vec<Diagnostic>) -> Self {
        RewriteResult { output: source.to_string(), edits: Vec::new(), changed: false, diagnostics }
    }
}

/// A class head found by the scan.
struct ClassSite {
    name: String,
    is_template: bool,
    /// Token index of the opening brace.
    open: usize,
}

/// Conditional-branch path of every line: the ids of the enclosing
/// `#if`/`#elif`/`#else` branches, outermost first.
fn conditional_regions(source: &str, tokens: &[Token]) -> Vec<Vec<u32>> {
    let mut token_lines = std::collections::HashSet::new();
    for t in tokens {
        if t.kind != TokenKind::Pragma {
            token_lines.insert(t.line);
        }
    }
    let mut stack: Vec<u32> = Vec::new();
    let mut next_id = 0u32;
    // Index 0 is unused so the vector can be indexed by 1-based line.
    let mut regions = vec![Vec::new()];
    for (i, line) in source.split('\n').enumerate() {
        let line_no = i as u32 + 1;
        let text = line.trim_start();
        if text.starts_with('#') && !token_lines.contains(&line_no) {
            let word = text[1..].trim_start().split(|c: char| !c.is_ascii_alphabetic()).next().unwrap_or("");
            match word {
                "if" | "ifdef" | "ifndef" => {
                    next_id += 1;
                    stack.push(next_id);
                }
                "elif" | "elifdef" | "elifndef" | "else" => {
                    if stack.pop().is_some() {
                        next_id += 1;
                        stack.push(next_id);
                    }
                }
                "endif" => {
                    stack.pop();
                }
                _ => {}
            }
        }
        regions.push(stack.clone());
    }
    regions
}

/// Index of the matching `}` for every `{`, or the first unbalanced brace.
fn match_braces(tokens: &[Token]) -> Result<Vec<Option<usize>>, &Token> {
    let mut matches = vec![None; tokens.len()];
    let mut open = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        if t.is_punct("{") {
            open.push(i);
        } else if t.is_punct("}") {
            let o = open.pop().ok_or(t)?;
            matches[o] = Some(i);
        }
    }
    match open.pop() {
        Some(o) => Err(&tokens[o]),
        None => Ok(matches),
    }
}

/// Index just past the `>` closing the angle list opened at `lt`.
fn skip_angles(tokens: &[Token], lt: usize) -> usize {
    let mut depth = 0usize;
    let mut i = lt;
    while i < tokens.len() {
        let t = &tokens[i];
        if t.is_punct("<") {
            depth += 1;
        } else if t.is_punct(">") {
            depth -= 1;
            if depth == 0 {
                return i + 1;
            }
        } else if t.is_punct(">>") {
            depth = depth.saturating_sub(2);
            if depth == 0 {
                return i + 1;
            }
        } else if t.is_punct(";") || t.is_punct("{") || t.is_punct("}") {
            return i;
        }
        i += 1;
    }
    i
}

fn find_class_sites(tokens: &[Token]) -> Vec<ClassSite> {
    let mut sites = Vec::new();
    let mut template_head_end = None;
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        if t.is_keyword("template") && tokens.get(i + 1).is_some_and(|n| n.is_punct("<")) {
            let end = skip_angles(tokens, i + 1);
            // `template<>` introduces an explicit specialization, which is an
            // ordinary class.
            let empty = end == i + 3;
            template_head_end = (!empty).then_some(end);
            i = end;
            continue;
        }
        if (t.is_keyword("class") || t.is_keyword("struct"))
            && !(i > 0 && (tokens[i - 1].is_keyword("friend") || tokens[i - 1].is_keyword("enum")))
        {
            let is_template = template_head_end == Some(i);
            if let Some(site) = class_head(tokens, i, is_template) {
                sites.push(site);
            }
        }
        i += 1;
    }
    sites
}

/// Parses `class Name [final] [: bases] {` starting at the keyword.
fn class_head(tokens: &[Token], kw: usize, is_template: bool) -> Option<ClassSite> {
    let mut name = String::new();
    let mut i = kw + 1;
    while let Some(t) = tokens.get(i) {
        if t.kind == TokenKind::Identifier || t.is_punct("::") {
            name.push_str(&t.text);
            i += 1;
        } else if t.is_punct("<") && !name.is_empty() {
            let end = skip_angles(tokens, i);
            for tok in &tokens[i..end] {
                name.push_str(&tok.text);
            }
            i = end;
        } else {
            break;
        }
    }
    if name.is_empty() {
        return None;
    }
    while let Some(t) = tokens.get(i) {
        if t.is_punct("{") {
            return Some(ClassSite { name, is_template, open: i });
        }
        if [";", ")", "(", ",", "=", "}"].iter().any(|p| t.is_punct(p)) || t.kind == TokenKind::Eof {
            return None;
        }
        i += 1;
    }
    None
}

fn is_access_label(tokens: &[Token], i: usize) -> bool {
    let t = &tokens[i];
    (t.is_keyword("public") || t.is_keyword("private") || t.is_keyword("protected"))
        && tokens.get(i + 1).is_some_and(|n| n.is_punct(":"))
}

fn is_macro_name(t: &Token) -> bool {
    t.kind == TokenKind::Identifier && (t.text == ACCESS_MACRO || t.text == ACCESS_TEMPLATE_MACRO)
}

/// Whether the body between `open` and `close` needs access, and whether it
/// already carries a macro call.
fn inspect_body(tokens: &[Token], open: usize, close: usize, braces: &[Option<usize>], is_class: bool) -> (bool, bool) {
    let mut needs = false;
    let mut has_macro = false;
    let mut seen_label = false;
    let mut i = open + 1;
    while i < close {
        let t = &tokens[i];
        if t.is_punct("{") {
            if !seen_label && is_class {
                needs = true;
            }
            i = braces[i].map_or(close, |c| c + 1);
            continue;
        }
        if is_access_label(tokens, i) {
            if !t.is_keyword("public") {
                needs = true;
            }
            seen_label = true;
            i += 2;
            continue;
        }
        if is_macro_name(t) {
            has_macro = true;
        } else if t.is_keyword("friend") {
            while i < close && !tokens[i].is_punct(";") && !tokens[i].is_punct("{") {
                i += 1;
            }
            continue;
        } else if !seen_label && is_class && !t.is_punct(";") {
            needs = true;
        }
        i += 1;
    }
    (needs, has_macro)
}

fn line_bounds(source: &str, offset: usize) -> (usize, usize) {
    let start = source[..offset].rfind('\n').map_or(0, |p| p + 1);
    let end = source[offset..].find('\n').map_or(source.len(), |p| offset + p);
    (start, end)
}

fn leading_ws(line: &str) -> &str {
    &line[..line.len() - line.trim_start_matches([' ', '\t']).len()]
}

/// Inserts access macro calls into every class that needs them.
pub fn insert_access_macros(source: &str) -> RewriteResult {
    let (tokens, lex_diags) = tokenize(source);
    if has_errors(&lex_diags) {
        return RewriteResult::unchanged(source, lex_diags);
    }
    let braces = match match_braces(&tokens) {
        Ok(b) => b,
        Err(t) => {
            let d = Diagnostic::error(t.line, t.column, format!("unbalanced `{}`; no edits made", t.text));
            return RewriteResult::unchanged(source, vec![d]);
        }
    };
    let regions = conditional_regions(source, &tokens);
    let mut diagnostics = Vec::new();
    let mut inserts: Vec<(usize, Edit)> = Vec::new();
    for site in find_class_sites(&tokens) {
        let open = &tokens[site.open];
        let close_idx = braces[site.open].expect("balanced");
        let close = &tokens[close_idx];
        if regions[open.line as usize] != regions[close.line as usize] {
            diagnostics.push(Diagnostic::warning(
                open.line,
                open.column,
                format!("braces of `{}` straddle a preprocessor conditional; not patched", site.name),
            ));
            continue;
        }
        let kw_is_class = tokens[..site.open]
            .iter()
            .rev()
            .find(|t| t.is_keyword("class") || t.is_keyword("struct"))
            .is_some_and(|t| t.is_keyword("class"));
        let (needs, has_macro) = inspect_body(&tokens, site.open, close_idx, &braces, kw_is_class);
        if !needs || has_macro {
            continue;
        }
        let macro_name = if site.is_template { ACCESS_TEMPLATE_MACRO } else { ACCESS_MACRO };
        let call = format!("{macro_name}({});", site.name);
        let after_brace = open.offset + 1;
        let (line_start, line_end) = line_bounds(source, open.offset);
        let rest = source[after_brace..line_end].trim();
        let eol = if source[..line_end].ends_with('\r') { "\r\n" } else { "\n" };
        let brace_line = &source[line_start..line_end];
        let (at, inserted) = if rest.is_empty() || rest.starts_with("//") {
            let next_start = (line_end + 1).min(source.len());
            let (_, next_end) = line_bounds(source, next_start);
            let next_line = &source[next_start..next_end];
            let indent = if next_line.trim().is_empty() { leading_ws(brace_line) } else { leading_ws(next_line) };
            if line_end == source.len() {
                (line_end, format!("{eol}{indent}{call}"))
            } else {
                (line_end + 1, format!("{indent}{call}{eol}"))
            }
        } else {
            let indent = format!("{}  ", leading_ws(brace_line));
            (after_brace, format!("{eol}{indent}{call}{eol}"))
        };
        inserts.push((at, Edit { line: open.line, inserted }));
    }
    if inserts.is_empty() {
        return RewriteResult::unchanged(source, diagnostics);
    }
    inserts.sort_by_key(|(at, _)| *at);
    let mut output = String::with_capacity(source.len() + inserts.iter().map(|(_, e)| e.inserted.len()).sum::<usize>());
    let mut copied = 0;
    for (at, edit) in &inserts {
        output.push_str(&source[copied..*at]);
        output.push_str(&edit.inserted);
        copied = *at;
    }
    output.push_str(&source[copied..]);
    RewriteResult { output, edits: inserts.into_iter().map(|(_, e)| e).collect(), changed: true, diagnostics }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixSummary {
    pub scanned: usize,
    pub patched: usize,
    /// Patched files, relative to the corpus root, in scan order.
    pub patched_files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

const HEADER_EXTENSIONS: &[&str] = &["h", "hh", "hpp", "hxx", "h++", "inl", "ipp", "tcc"];

/// Standard library headers carry no extension, so extensionless files count.
fn is_header(path: &Path) -> bool {
    match path.extension().and_then(|e| e.to_str()) {
        None => true,
        Some(ext) => HEADER_EXTENSIONS.contains(&ext),
    }
}

/// Writes `contents` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Scans every header under `corpus` and writes patched copies of those that
/// need access macros to the mirrored path under `out`.
pub fn fix_headers(corpus: &Path, out: &Path) -> std::io::Result<FixSummary> {
    let mut summary = FixSummary::default();
    for entry in walkdir::WalkDir::new(corpus).sort_by_file_name() {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                if e.depth() == 0 {
                    return Err(e.into());
                }
                summary.warnings.push(format!("{}: {e}", e.path().map_or(corpus, |p| p).display()));
                continue;
            }
        };
        if !entry.file_type().is_file() || !is_header(entry.path()) {
            continue;
        }
        summary.scanned += 1;
        let path = entry.path();
        let text = match fs::read(path).map(String::from_utf8) {
            Ok(Ok(t)) => t,
            Ok(Err(_)) => {
                summary.warnings.push(format!("{}: not valid UTF-8; skipped", path.display()));
                continue;
            }
            Err(e) => {
                summary.warnings.push(format!("{}: {e}", path.display()));
                continue;
            }
        };
        let result = insert_access_macros(&text);
        for d in &result.diagnostics {
            summary.warnings.push(d.render(&path.display().to_string()));
        }
        if !result.changed {
            continue;
        }
        let rel = path.strip_prefix(corpus).unwrap_or(path).to_path_buf();
        write_atomic(&out.join(&rel), result.output.as_bytes())?;
        summary.patched += 1;
        summary.patched_files.push(rel);
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(src: &str) -> RewriteResult {
        insert_access_macros(src)
    }

    #[test]
    fn single_line_class() {
        let r = run("class C { int a; public: };");
        assert!(r.changed);
        assert_eq!(r.output, "class C {\n  CLASSDESC_ACCESS(C);\n int a; public: };");
        assert!(!run(&r.output).changed);
    }

    #[test]
    fn public_struct_unchanged() {
        let r = run("struct S { int a; };");
        assert!(!r.changed);
        assert_eq!(r.output, "struct S { int a; };");
    }

    #[test]
    fn line_after_brace_with_indent_of_next_line() {
        let src = "namespace n {\n  class C\n  {\n      int a;\n  public:\n    int b;\n  };\n}\n";
        let r = run(src);
        assert_eq!(
            r.output,
            "namespace n {\n  class C\n  {\n      CLASSDESC_ACCESS(C);\n      int a;\n  public:\n    int b;\n  };\n}\n"
        );
        assert_eq!(r.edits, [Edit { line: 3, inserted: "      CLASSDESC_ACCESS(C);\n".into() }]);
    }

    #[test]
    fn crlf_is_preserved() {
        let r = run("struct S {\r\n  int a;\r\nprivate:\r\n  int b;\r\n};\r\n");
        assert_eq!(r.output, "struct S {\r\n  CLASSDESC_ACCESS(S);\r\n  int a;\r\nprivate:\r\n  int b;\r\n};\r\n");
    }

    #[test]
    fn templates_and_specializations() {
        let r = run("template <class T, int N>\nclass V {\n  T d[N];\n};\n");
        assert!(r.output.contains("  CLASSDESC_ACCESS_TEMPLATE(V);\n"));
        let r = run("template <>\nclass V<int> {\n  int d;\n};\n");
        assert!(r.output.contains("  CLASSDESC_ACCESS(V<int>);\n"), "{}", r.output);
    }

    #[test]
    fn class_without_labels_is_private() {
        assert!(run("class C {\n  int a;\n};\n").changed);
        assert!(!run("class C {\npublic:\n  int a;\n};\n").changed);
        assert!(!run("class C {\n  friend class D;\npublic:\n  int a;\n};\n").changed);
        assert!(!run("class C {};\n").changed);
        assert!(run("struct S {\n  int a;\nprotected:\n  int b;\n};\n").changed);
    }

    #[test]
    fn nested_classes_patched_independently() {
        let src = "struct O {\n  class I {\n    int x;\n  };\n  int y;\n};\n";
        let r = run(src);
        assert_eq!(r.edits.len(), 1);
        assert!(r.output.contains("  class I {\n    CLASSDESC_ACCESS(I);\n"));
    }

    #[test]
    fn non_definitions_ignored() {
        let src = "class F;\nstruct A { friend class B; };\nenum class E { a, b };\n\
                   union U { int i; };\nvoid f(struct A a);\ntemplate <class T> void g(T);\n";
        assert!(!run(src).changed);
    }

    #[test]
    fn unbalanced_braces_error() {
        let r = run("class C {\n  int a;\n");
        assert!(!r.changed);
        assert_eq!(r.output, "class C {\n  int a;\n");
        assert!(has_errors(&r.diagnostics));
    }

    #[test]
    fn conditional_straddle_is_skipped() {
        let src = "#ifdef A\nclass C : B {\n#else\nclass C {\n#endif\n  int a;\n};\n}\n";
        // The raw text has two `{` and two `}` but one class straddles.
        let r = run(src);
        assert!(!has_errors(&r.diagnostics));
        assert!(r.diagnostics.iter().any(|d| d.message.contains("preprocessor")));
        let inside = "#if X\nclass C {\n  int a;\n};\n#endif\n";
        assert!(run(inside).changed);
    }

    #[test]
    fn existing_macro_is_respected() {
        let src = "class C {\n  CLASSDESC_ACCESS(C);\n  int a;\n};\n";
        assert!(!run(src).changed);
    }

    #[test]
    fn fix_headers_counts() {
        let corpus = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        fs::write(corpus.path().join("a.h"), "struct A { int a; };\n").unwrap();
        fs::create_dir(corpus.path().join("sub")).unwrap();
        fs::write(corpus.path().join("sub/b.hpp"), "class B {\n  int b;\n};\n").unwrap();
        fs::write(corpus.path().join("c.h"), "struct C { double c; };\n").unwrap();
        fs::write(corpus.path().join("notes.txt"), "class X { int a; };\n").unwrap();
        let s = fix_headers(corpus.path(), out.path()).unwrap();
        assert_eq!((s.scanned, s.patched), (3, 1));
        assert_eq!(s.patched_files, [PathBuf::from("sub/b.hpp")]);
        let files: Vec<_> = walkdir::WalkDir::new(out.path()).into_iter().filter_map(Result::ok).filter(|e| e.file_type().is_file()).collect();
        assert_eq!(files.len(), 1);

        let empty = tempfile::tempdir().unwrap();
        let s = fix_headers(empty.path(), out.path()).unwrap();
        assert_eq!((s.scanned, s.patched), (0, 0));
    }

    fn class_text() -> impl Strategy<Value = String> {
        (
            prop::sample::select(vec!["class", "struct", "union"]),
            "[A-Z][a-z]{0,4}",
            prop::sample::select(vec!["", "public:", "private:", "protected:"]),
            prop::bool::ANY,
            prop::bool::ANY,
        )
            .prop_map(|(kw, name, label, member_first, crlf)| {
                let eol = if crlf { "\r\n" } else { "\n" };
                let first = if member_first { format!("  int a;{eol}") } else { String::new() };
                format!("{kw} {name} {{{eol}{first}{label}{eol}  double b;{eol}}};{eol}// tail{eol}")
            })
    }

    proptest! {
        #[test]
        fn idempotent_and_minimal(parts in prop::collection::vec(class_text(), 0..6)) {
            let src = parts.concat();
            let once = insert_access_macros(&src);
            let twice = insert_access_macros(&once.output);
            prop_assert!(!twice.changed);
            prop_assert_eq!(&twice.output, &once.output);
            // Removing exactly the inserted bytes restores the input.
            let mut restored = once.output.clone();
            for e in once.edits.iter().rev() {
                let at = restored.rfind(&e.inserted).unwrap();
                restored.replace_range(at..at + e.inserted.len(), "");
            }
            prop_assert_eq!(restored, src);
            prop_assert_eq!(once.changed, !once.edits.is_empty());
        }
    }
}
