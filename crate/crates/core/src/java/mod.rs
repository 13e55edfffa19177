//! Minimal Java front end: a tokenizer and a declaration-level parser.

pub mod decl;
pub mod lexer;

pub use decl::{normalize_type, parse, CompilationUnit, Member, MemberKind, Span, TypeDecl, TypeKind};
pub use lexer::{Lexer, Position, SyntaxError, Token, TokenKind};

/// Leading whitespace of the line containing `offset`.
pub fn line_indent(src: &str, offset: usize) -> &str {
    let line_start = src[..offset].rfind('\n').map(|i| i + 1).unwrap_or(0);
    let line = &src[line_start..];
    let width = line.len() - line.trim_start_matches([' ', '\t']).len();
    &line[..width]
}

/// Text of `span`, prefixed with its line's indentation when the span
/// starts the line's code.
pub fn indented(src: &str, span: Span) -> String {
    let indent = line_indent(src, span.start);
    format!("{indent}{}", span.text(src))
}

/// Simple name of the public top-level class in `code`, or the first
/// top-level class when none is public.
///
/// Tolerates code that does not fully parse: only brace depth and the
/// tokens before each `class` keyword are looked at.
pub fn top_level_class_name(code: &str) -> Option<String> {
    let mut depth = 0i32;
    let mut first = None;
    let mut run: Vec<&str> = Vec::new();
    let mut expect_name = false;
    let mut public = false;
    for tok in Lexer::new(code) {
        let Ok(tok) = tok else { break };
        if tok.kind.is_comment() {
            continue;
        }
        let text = tok.text(code);
        if expect_name {
            expect_name = false;
            if tok.kind == TokenKind::Ident {
                if public {
                    return Some(text.to_string());
                }
                first.get_or_insert_with(|| text.to_string());
            }
        }
        match text {
            "{" => depth += 1,
            "}" => depth -= 1,
            ";" => run.clear(),
            "class" | "record" | "interface" | "enum" if depth == 0 && tok.kind == TokenKind::Ident => {
                public = run.contains(&"public");
                expect_name = true;
                run.clear();
                continue;
            }
            _ => {}
        }
        if depth == 0 && tok.kind == TokenKind::Ident {
            run.push(text);
        } else if text == "{" || text == "}" {
            run.clear();
        }
    }
    first
}
