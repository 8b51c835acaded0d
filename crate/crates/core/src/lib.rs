//! Object descriptor generation for a subset of C++ declarations.
//!
//! The pipeline runs source text through [`lexer::tokenize`] and
//! [`parser::parse_unit`], resolves the result into a [`model::TypeRegistry`],
//! and from there either renders descriptor functions ([`emit`]) or drives the
//! serialization runtime ([`runtime`]) that gives those descriptors executable
//! semantics. [`rewrite`] injects the access macros descriptors need into
//! class definitions with non-public members.

pub mod cli;
pub mod diag;
pub mod emit;
pub mod lexer;
pub mod model;
pub mod parser;
pub mod rewrite;
pub mod runtime;
pub mod values;

pub use diag::{Diagnostic, Severity};
pub use model::{build_registry, build_registry_units, ClassDecl, Member, PointerKind, PrimKind, TypeExpr, TypeRegistry};
