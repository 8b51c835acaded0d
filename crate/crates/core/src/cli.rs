//! Command-line driver.
//!
//! Exit status is 0 on success, 1 when diagnostics include errors (or an
//! operation fails), and 2 for usage errors. Diagnostics go to standard
//! error as `file:line:col: severity: message`. Output files are written
//! through a temporary file and renamed, and only once every input has been
//! processed without errors.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::diag::{has_errors, Diagnostic};
use crate::emit;
use crate::lexer::tokenize;
use crate::model::{build_registry_units, TypeExpr, TypeRegistry};
use crate::parser::{parse_unit, RawDecl, RawDeclKind};
use crate::rewrite::{fix_headers, insert_access_macros, write_atomic};
use crate::runtime::{pack, unpack, Mode, PackBuffer};
use crate::values::{read_values, write_values};

/// Name of the macro-definition header `gen` writes next to the descriptors.
pub const ACCESS_HEADER: &str = "classdesc_access.h";

#[derive(Debug, Parser)]
#[command(name = "classdesc", version, about = "Generate object descriptors from C++ class declarations")]
struct Cli {
    /// Report files written and other progress on standard error.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RegistryArgs {
    /// Treat pointers to this type as single-object pointers (repeatable).
    #[arg(long = "single-obj", value_name = "TYPE")]
    single_obj: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Emit one descriptor file per header and action, plus the access macro header.
    Gen {
        #[arg(required = true)]
        headers: Vec<PathBuf>,
        /// Action to generate descriptors for (repeatable; default pack and unpack).
        #[arg(short, long = "action", value_name = "ACTION")]
        actions: Vec<String>,
        /// Output directory.
        #[arg(short, long, default_value = ".")]
        output: PathBuf,
        #[command(flatten)]
        registry: RegistryArgs,
    },
    /// Insert access macro calls into the classes of one source file.
    InsertFriend {
        file: PathBuf,
        /// Write the result here instead of standard output.
        #[arg(short, long, conflicts_with = "in_place")]
        output: Option<PathBuf>,
        /// Rewrite the file itself (only when something changes).
        #[arg(long)]
        in_place: bool,
    },
    /// Write patched copies of every header in a corpus that needs access macros.
    FixIncludes {
        corpus: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print the type registry of the given headers as JSON.
    Inspect {
        #[arg(required = true)]
        headers: Vec<PathBuf>,
        #[command(flatten)]
        registry: RegistryArgs,
    },
    /// Pack a values file into a binary blob.
    Pack {
        header: PathBuf,
        class: String,
        values: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = "native")]
        mode: Mode,
        #[command(flatten)]
        registry: RegistryArgs,
    },
    /// Unpack a binary blob and print it as a values file.
    Unpack {
        header: PathBuf,
        class: String,
        blob: PathBuf,
        #[arg(long, default_value = "native")]
        mode: Mode,
        /// Write the values here instead of standard output.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        registry: RegistryArgs,
    },
}

/// A failed command: the message is already formatted for standard error.
struct Failure(Vec<String>);

impl Failure {
    fn one(msg: impl Into<String>) -> Self {
        Failure(vec![msg.into()])
    }
}

type Outcome = Result<(), Failure>;

fn io_fail(path: &Path, e: io::Error) -> Failure {
    Failure::one(format!("{}: error: {e}", path.display()))
}

struct Context<'a> {
    verbose: u8,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Context<'_> {
    fn note(&mut self, msg: impl AsRef<str>) {
        if self.verbose > 0 {
            let _ = writeln!(self.err, "{}", msg.as_ref());
        }
    }

    fn warn(&mut self, msg: impl AsRef<str>) {
        let _ = writeln!(self.err, "{}", msg.as_ref());
    }
}

/// Runs the tool with `args` (excluding the program name) using the
/// process's standard streams.
pub fn run(args: &[String]) -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the tool writing to the given streams.
pub fn run_with(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let argv = std::iter::once("classdesc".to_string()).chain(args.iter().cloned());
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    2
                }
            };
        }
    };
    let mut cx = Context { verbose: cli.verbose, out, err };
    let result = match cli.command {
        Command::Gen { headers, actions, output, registry } => gen(&mut cx, headers, actions, &output, &registry),
        Command::InsertFriend { file, output, in_place } => insert_friend(&mut cx, &file, output.as_deref(), in_place),
        Command::FixIncludes { corpus, output } => fix_includes(&mut cx, &corpus, &output),
        Command::Inspect { headers, registry } => inspect(&mut cx, headers, &registry),
        Command::Pack { header, class, values, output, mode, registry } => {
            pack_cmd(&mut cx, &header, &class, &values, &output, mode, &registry)
        }
        Command::Unpack { header, class, blob, mode, output, registry } => {
            unpack_cmd(&mut cx, &header, &class, &blob, mode, output.as_deref(), &registry)
        }
    };
    match result {
        Ok(()) => 0,
        Err(Failure(lines)) => {
            for l in lines {
                let _ = writeln!(cx.err, "{l}");
            }
            1
        }
    }
}

struct Loaded {
    registry: TypeRegistry,
    /// Sorted input paths with the classes each one defines, in source order.
    units: Vec<(PathBuf, Vec<String>)>,
}

/// Parses `headers` into one registry. Warnings are printed; any error
/// fails the whole load.
fn load(cx: &mut Context, mut headers: Vec<PathBuf>, args: &RegistryArgs) -> Result<Loaded, Failure> {
    headers.sort();
    headers.dedup();
    let mut rendered = Vec::new();
    let mut failed = false;
    let mut units: Vec<Vec<RawDecl>> = Vec::new();
    for path in &headers {
        let text = fs::read_to_string(path).map_err(|e| io_fail(path, e))?;
        let (tokens, mut diags) = tokenize(&text);
        let (decls, parse_diags) = parse_unit(&tokens);
        diags.extend(parse_diags);
        failed |= has_errors(&diags);
        rendered.extend(diags.iter().map(|d| (d.is_error(), d.render(&path.display().to_string()))));
        units.push(decls);
    }
    let slices: Vec<&[RawDecl]> = units.iter().map(Vec::as_slice).collect();
    let (registry, reg_diags) = build_registry_units(&slices);
    for (unit, d) in &reg_diags {
        failed |= d.is_error();
        rendered.push((d.is_error(), d.render(&headers[*unit].display().to_string())));
    }
    if failed {
        return Err(Failure(rendered.into_iter().map(|(_, l)| l).collect()));
    }
    for (_, l) in rendered {
        cx.warn(l);
    }
    let registry = args.single_obj.iter().fold(registry, |r, t| r.mark_single_object(t));
    let units = headers
        .into_iter()
        .zip(units)
        .map(|(path, decls)| {
            let classes = decls
                .into_iter()
                .filter_map(|d| match d.kind {
                    RawDeclKind::Class(c) => Some(c.name),
                    _ => None,
                })
                .collect();
            (path, classes)
        })
        .collect();
    Ok(Loaded { registry, units })
}

fn gen(cx: &mut Context, headers: Vec<PathBuf>, actions: Vec<String>, out_dir: &Path, args: &RegistryArgs) -> Outcome {
    let mut actions = if actions.is_empty() { vec!["pack".to_string(), "unpack".to_string()] } else { actions };
    let mut seen = std::collections::HashSet::new();
    actions.retain(|a| seen.insert(a.clone()));
    let loaded = load(cx, headers, args)?;
    let mut outputs: BTreeMap<PathBuf, String> = BTreeMap::new();
    let mut errors = Vec::new();
    for (path, classes) in &loaded.units {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for action in &actions {
            let target = out_dir.join(format!("{stem}.{action}.cd"));
            match emit::emit_unit(&loaded.registry, classes, action) {
                Ok(text) => {
                    if outputs.insert(target.clone(), text).is_some() {
                        errors.push(format!("{}: error: output `{}` would be written twice", path.display(), target.display()));
                    }
                }
                Err(errs) => errors.extend(
                    errs.iter().map(|e| Diagnostic::error(e.line(), 1, e.to_string()).render(&path.display().to_string())),
                ),
            }
        }
    }
    if !errors.is_empty() {
        return Err(Failure(errors));
    }
    outputs.insert(out_dir.join(ACCESS_HEADER), emit::emit_access_macros(&actions));
    for (target, text) in &outputs {
        write_atomic(target, text.as_bytes()).map_err(|e| io_fail(target, e))?;
        cx.note(format!("wrote {}", target.display()));
    }
    Ok(())
}

fn insert_friend(cx: &mut Context, file: &Path, output: Option<&Path>, in_place: bool) -> Outcome {
    let text = fs::read_to_string(file).map_err(|e| io_fail(file, e))?;
    let result = insert_access_macros(&text);
    let name = file.display().to_string();
    if has_errors(&result.diagnostics) {
        return Err(Failure(result.diagnostics.iter().map(|d| d.render(&name)).collect()));
    }
    for d in &result.diagnostics {
        cx.warn(d.render(&name));
    }
    cx.note(format!("{name}: {} insertion(s)", result.edits.len()));
    match (output, in_place) {
        (Some(path), _) => write_atomic(path, result.output.as_bytes()).map_err(|e| io_fail(path, e)),
        (None, true) if result.changed => write_atomic(file, result.output.as_bytes()).map_err(|e| io_fail(file, e)),
        (None, true) => Ok(()),
        (None, false) => cx.out.write_all(result.output.as_bytes()).map_err(|e| io_fail(Path::new("<stdout>"), e)),
    }
}

fn fix_includes(cx: &mut Context, corpus: &Path, out_dir: &Path) -> Outcome {
    let summary = fix_headers(corpus, out_dir).map_err(|e| io_fail(corpus, e))?;
    for w in &summary.warnings {
        cx.warn(format!("warning: {w}"));
    }
    for f in &summary.patched_files {
        cx.note(format!("patched {}", f.display()));
    }
    let _ = writeln!(cx.out, "scanned {}, patched {}", summary.scanned, summary.patched);
    Ok(())
}

fn inspect(cx: &mut Context, headers: Vec<PathBuf>, args: &RegistryArgs) -> Outcome {
    let loaded = load(cx, headers, args)?;
    let _ = writeln!(cx.out, "{}", loaded.registry.to_ir_json());
    Ok(())
}

fn class_type(loaded: &Loaded, header: &Path, class: &str) -> Result<TypeExpr, Failure> {
    match loaded.registry.class(class) {
        Some(c) => Ok(TypeExpr::Named(c.name.clone())),
        None => Err(Failure::one(format!("{}: error: no class `{class}`", header.display()))),
    }
}

fn pack_cmd(
    cx: &mut Context,
    header: &Path,
    class: &str,
    values: &Path,
    output: &Path,
    mode: Mode,
    args: &RegistryArgs,
) -> Outcome {
    let loaded = load(cx, vec![header.to_path_buf()], args)?;
    let ty = class_type(&loaded, header, class)?;
    let text = fs::read_to_string(values).map_err(|e| io_fail(values, e))?;
    let value = read_values(&text, &ty, &loaded.registry)
        .map_err(|e| Failure::one(format!("{}: error: {e}", values.display())))?;
    let mut buf = PackBuffer::new(mode);
    pack(&mut buf, "", &value, &ty, &loaded.registry).map_err(|e| Failure::one(format!("error: {e}")))?;
    for w in buf.warnings().to_vec() {
        cx.warn(format!("warning: {w}"));
    }
    write_atomic(output, buf.bytes()).map_err(|e| io_fail(output, e))?;
    cx.note(format!("wrote {} bytes to {}", buf.len(), output.display()));
    Ok(())
}

fn unpack_cmd(
    cx: &mut Context,
    header: &Path,
    class: &str,
    blob: &Path,
    mode: Mode,
    output: Option<&Path>,
    args: &RegistryArgs,
) -> Outcome {
    let loaded = load(cx, vec![header.to_path_buf()], args)?;
    let ty = class_type(&loaded, header, class)?;
    let bytes = fs::read(blob).map_err(|e| io_fail(blob, e))?;
    let mut buf = PackBuffer::from_bytes(mode, bytes);
    let value = unpack(&mut buf, "", &ty, &loaded.registry)
        .map_err(|e| Failure::one(format!("{}: error: {e}", blob.display())))?;
    if buf.remaining() > 0 {
        return Err(Failure::one(format!("{}: error: {} trailing bytes", blob.display(), buf.remaining())));
    }
    let text = write_values(&value, &ty, &loaded.registry).map_err(|e| Failure::one(format!("error: {e}")))?;
    match output {
        Some(path) => write_atomic(path, text.as_bytes()).map_err(|e| io_fail(path, e)),
        None => cx.out.write_all(text.as_bytes()).map_err(|e| io_fail(Path::new("<stdout>"), e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_with(&args, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_are_status_2() {
        assert_eq!(run_capture(&["gen"]).0, 2);
        assert_eq!(run_capture(&["frobnicate"]).0, 2);
        assert_eq!(run_capture(&["gen", "--bogus", "x.h"]).0, 2);
        assert_eq!(run_capture(&["pack", "a.h", "C", "v", "-o", "b", "--mode", "cobol"]).0, 2);
        assert_eq!(run_capture(&[]).0, 2);
    }

    #[test]
    fn help_is_success() {
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("gen"));
    }

    #[test]
    fn parse_errors_are_status_1_and_write_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let h = dir.path().join("bad.h");
        fs::write(&h, "struct S {\n  int a : 3;\n};\n").unwrap();
        let out = dir.path().join("out");
        let (code, _, err) = run_capture(&["gen", h.to_str().unwrap(), "-o", out.to_str().unwrap()]);
        assert_eq!(code, 1);
        assert!(err.contains("bad.h:2:"), "{err}");
        assert!(err.contains(": error: "), "{err}");
        assert!(!out.exists());
    }
}
