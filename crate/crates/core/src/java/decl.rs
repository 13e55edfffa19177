//! Declaration-level parser for Java compilation units.
//!
//! Bodies are never parsed: a method body, initializer or field initializer
//! is a balanced token range. What is recovered is the shape of each type
//! declaration (header, members, member signatures) with byte spans into the
//! original text, so fragments can be cut out verbatim.

use super::lexer::{tokenize, SyntaxError, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeKind {
    Class,
    Interface,
    Enum,
    Record,
    Annotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemberKind {
    Field,
    Constructor,
    Method,
    Initializer,
    NestedType(TypeKind),
}

#[derive(Debug, Clone)]
pub struct Member {
    pub kind: MemberKind,
    /// Method, constructor or nested type name; first declarator for fields.
    pub name: String,
    /// Attached leading comments through the closing `}` or `;`.
    pub full: Span,
    /// Modifiers onward (leading annotations excluded), up to but not
    /// including the body or terminating `;`.
    pub signature: Span,
    /// Declared parameter types, as written (whitespace removed).
    pub param_types: Vec<String>,
    pub nested: Option<Box<TypeDecl>>,
}

#[derive(Debug, Clone)]
pub struct TypeDecl {
    pub kind: TypeKind,
    pub name: String,
    /// Attached leading comments through the closing brace.
    pub full: Span,
    /// Annotations and modifiers through the last token before `{`.
    pub header: Span,
    /// Same as `header` minus leading annotations.
    pub signature: Span,
    /// Enum constant list (without the terminating `;`).
    pub enum_constants: Option<Span>,
    pub members: Vec<Member>,
}

#[derive(Debug, Clone)]
pub struct CompilationUnit {
    pub package: Option<Span>,
    pub imports: Vec<Span>,
    pub types: Vec<TypeDecl>,
}

impl CompilationUnit {
    pub fn find_type(&self, name: &str) -> Option<&TypeDecl> {
        let simple = name.rsplit('.').next().unwrap_or(name);
        self.types.iter().find(|t| t.name == simple)
    }
}

const MODIFIERS: &[&str] = &[
    "public",
    "protected",
    "private",
    "static",
    "final",
    "abstract",
    "native",
    "synchronized",
    "transient",
    "volatile",
    "strictfp",
    "default",
    "sealed",
    "non",
];

pub fn parse(src: &str) -> Result<CompilationUnit, SyntaxError> {
    let (tokens, comments) = tokenize(src)?;
    let mut p = Parser {
        src,
        toks: tokens,
        comments,
        pos: 0,
    };
    p.compilation_unit()
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    comments: Vec<Token>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn text(&self, i: usize) -> &'a str {
        self.toks.get(i).map(|t| t.text(self.src)).unwrap_or("")
    }

    fn is(&self, i: usize, s: &str) -> bool {
        self.toks.get(i).is_some_and(|t| t.text(self.src) == s && t.kind != TokenKind::Str)
    }

    fn is_ident(&self, i: usize) -> bool {
        self.toks.get(i).is_some_and(|t| t.kind == TokenKind::Ident)
    }

    fn error_at(&self, i: usize, msg: impl Into<String>) -> SyntaxError {
        let offset = self.toks.get(i).map(|t| t.start).unwrap_or(self.src.len());
        SyntaxError::at(self.src, offset, msg)
    }

    fn end_of(&self, i: usize) -> usize {
        self.toks[i].end
    }

    /// Index just past the token that closes the group opened at `open`.
    fn skip_group(&self, open: usize) -> Result<usize, SyntaxError> {
        let (o, c) = match self.text(open) {
            "{" => ("{", "}"),
            "(" => ("(", ")"),
            "[" => ("[", "]"),
            "<" => ("<", ">"),
            other => return Err(self.error_at(open, format!("expected a bracket, found `{other}`"))),
        };
        let mut depth = 0usize;
        let mut i = open;
        while i < self.toks.len() {
            if self.toks[i].kind == TokenKind::Punct {
                let t = self.text(i);
                if t == o {
                    depth += 1;
                } else if t == c {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(i + 1);
                    }
                } else if o == "<" && matches!(t, ";" | "{" | "}" | "=") {
                    break;
                }
            }
            i += 1;
        }
        Err(self.error_at(open, format!("unbalanced `{o}`")))
    }

    fn is_annotation_start(&self, i: usize) -> bool {
        self.is(i, "@") && !self.is(i + 1, "interface")
    }

    fn skip_annotation(&self, i: usize) -> Result<usize, SyntaxError> {
        let mut j = i + 1;
        if !self.is_ident(j) {
            return Err(self.error_at(j, "expected annotation name"));
        }
        j += 1;
        while self.is(j, ".") && self.is_ident(j + 1) {
            j += 2;
        }
        if self.is(j, "(") {
            j = self.skip_group(j)?;
        }
        Ok(j)
    }

    fn is_modifier(&self, i: usize) -> bool {
        let t = self.text(i);
        if t == "non" {
            return self.is(i + 1, "-") && self.is(i + 2, "sealed");
        }
        self.is_ident(i) && MODIFIERS.contains(&t)
    }

    /// Skips leading annotations, then modifiers interleaved with further
    /// annotations. Returns (signature start, first token after modifiers).
    fn modifiers(&self, mut i: usize) -> Result<(usize, usize), SyntaxError> {
        while self.is_annotation_start(i) {
            i = self.skip_annotation(i)?;
        }
        let sig = i;
        loop {
            if self.is_annotation_start(i) {
                i = self.skip_annotation(i)?;
            } else if self.is_modifier(i) {
                i += if self.text(i) == "non" { 3 } else { 1 };
            } else {
                return Ok((sig, i));
            }
        }
    }

    fn type_kind_at(&self, i: usize) -> Option<(TypeKind, usize)> {
        match self.text(i) {
            "class" => Some((TypeKind::Class, i + 1)),
            "interface" => Some((TypeKind::Interface, i + 1)),
            "enum" => Some((TypeKind::Enum, i + 1)),
            "@" if self.is(i + 1, "interface") => Some((TypeKind::Annotation, i + 2)),
            "record" if self.is_ident(i + 1) && (self.is(i + 2, "(") || self.is(i + 2, "<")) => {
                Some((TypeKind::Record, i + 1))
            }
            _ => None,
        }
    }

    /// Start offset of the comment block attached to the token at `first`,
    /// looking no further back than `floor`. A comment is attached when at
    /// most one line break separates it from what follows and it does not
    /// trail code on its own line.
    fn attached_start(&self, first: usize, floor: usize) -> usize {
        let mut start = self.toks[first].start;
        for c in self.comments.iter().rev() {
            if c.end > start || c.start < floor {
                continue;
            }
            let gap = &self.src[c.end..start];
            if !gap.trim().is_empty() || gap.matches('\n').count() > 1 {
                break;
            }
            let line_start = self.src[..c.start].rfind('\n').map(|i| i + 1).unwrap_or(0);
            if !self.src[line_start..c.start].trim().is_empty() {
                break;
            }
            start = c.start;
        }
        start
    }

    fn compilation_unit(&mut self) -> Result<CompilationUnit, SyntaxError> {
        let mut unit = CompilationUnit {
            package: None,
            imports: Vec::new(),
            types: Vec::new(),
        };
        let mut floor = 0;
        while self.pos < self.toks.len() {
            let i = self.pos;
            if self.is(i, ";") {
                self.pos += 1;
                continue;
            }
            let (_, after) = self.modifiers(i)?;
            if self.is(after, "package") || self.is(i, "import") {
                let end = (i..self.toks.len())
                    .find(|&k| self.is(k, ";"))
                    .ok_or_else(|| self.error_at(i, "missing `;`"))?;
                let span = Span::new(self.toks[i].start, self.end_of(end));
                if self.is(i, "import") {
                    unit.imports.push(span);
                } else {
                    unit.package = Some(span);
                }
                self.pos = end + 1;
                floor = span.end;
                continue;
            }
            let decl = self.type_decl(i, floor)?;
            floor = decl.full.end;
            unit.types.push(decl);
        }
        if unit.types.is_empty() {
            return Err(SyntaxError::at(self.src, self.src.len(), "no type declaration found"));
        }
        Ok(unit)
    }

    /// Parses a type declaration starting at token `i`; leaves `self.pos`
    /// past its closing brace.
    fn type_decl(&mut self, i: usize, floor: usize) -> Result<TypeDecl, SyntaxError> {
        let (sig, after) = self.modifiers(i)?;
        let (kind, name_at) = self
            .type_kind_at(after)
            .ok_or_else(|| self.error_at(after, format!("expected a type declaration, found `{}`", self.text(after))))?;
        if !self.is_ident(name_at) {
            return Err(self.error_at(name_at, "expected type name"));
        }
        let name = self.text(name_at).to_string();
        let mut j = name_at + 1;
        while j < self.toks.len() && !self.is(j, "{") {
            if self.is(j, "(") || self.is(j, "<") {
                j = self.skip_group(j)?;
            } else if self.is(j, ";") || self.is(j, "}") {
                return Err(self.error_at(j, "expected `{` to open the type body"));
            } else {
                j += 1;
            }
        }
        if j >= self.toks.len() {
            return Err(self.error_at(i, "type declaration has no body"));
        }
        let open = j;
        let close = self.skip_group(open)? - 1;
        let header = Span::new(self.toks[i].start, self.end_of(open - 1));
        let signature = Span::new(self.toks[sig].start, self.end_of(open - 1));

        let mut k = open + 1;
        let mut enum_constants = None;
        if kind == TypeKind::Enum {
            let first = k;
            while k < close && !self.is(k, ";") {
                k = if self.is(k, "(") || self.is(k, "{") {
                    self.skip_group(k)?
                } else {
                    k + 1
                };
            }
            if k > first {
                let mut last = k - 1;
                if self.is(last, ",") && last > first {
                    last -= 1;
                }
                enum_constants = Some(Span::new(self.toks[first].start, self.end_of(last)));
            }
            if self.is(k, ";") {
                k += 1;
            }
        }
        let members = self.members(k, close, &name, kind)?;
        self.pos = close + 1;
        Ok(TypeDecl {
            kind,
            name,
            full: Span::new(self.attached_start(i, floor), self.end_of(close)),
            header,
            signature,
            enum_constants,
            members,
        })
    }

    fn members(&mut self, mut i: usize, close: usize, class: &str, kind: TypeKind) -> Result<Vec<Member>, SyntaxError> {
        let mut out = Vec::new();
        let mut floor = self.end_of(i.saturating_sub(1));
        while i < close {
            if self.is(i, ";") {
                i += 1;
                continue;
            }
            let (sig, j) = self.modifiers(i)?;
            let member = if self.is(j, "{") {
                let end = self.skip_group(j)?;
                let m = Member {
                    kind: MemberKind::Initializer,
                    name: String::new(),
                    full: Span::new(self.attached_start(i, floor), self.end_of(end - 1)),
                    signature: Span::new(self.toks[sig].start, self.toks[j].start),
                    param_types: Vec::new(),
                    nested: None,
                };
                i = end;
                m
            } else if let Some((nested_kind, _)) = self.type_kind_at(j) {
                let decl = self.type_decl(i, floor)?;
                let end = self.pos;
                let m = Member {
                    kind: MemberKind::NestedType(nested_kind),
                    name: decl.name.clone(),
                    full: decl.full,
                    signature: decl.signature,
                    param_types: Vec::new(),
                    nested: Some(Box::new(decl)),
                };
                i = end;
                m
            } else {
                let (m, end) = self.callable_or_field(i, sig, j, close, class, kind, floor)?;
                i = end;
                m
            };
            floor = member.full.end;
            out.push(member);
        }
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn callable_or_field(
        &self,
        start: usize,
        sig: usize,
        mut j: usize,
        close: usize,
        class: &str,
        kind: TypeKind,
        floor: usize,
    ) -> Result<(Member, usize), SyntaxError> {
        if self.is(j, "<") {
            j = self.skip_group(j)?;
        }
        let type_start = j;
        // First of `(`, `=`, `;`, `,`, `{` outside generic brackets.
        let mut k = j;
        let mut angle = 0usize;
        loop {
            if k >= close {
                return Err(self.error_at(start, "unterminated member declaration"));
            }
            match self.text(k) {
                "<" => angle += 1,
                ">" => angle = angle.saturating_sub(1),
                "(" | "=" | ";" | "{" => break,
                "," if angle == 0 => break,
                "@" => {
                    k = self.skip_annotation(k)?;
                    continue;
                }
                _ => {}
            }
            k += 1;
        }
        let attached = self.attached_start(start, floor);
        if self.is(k, "(") || (self.is(k, "{") && kind == TypeKind::Record) {
            if !self.is_ident(k - 1) || k == 0 {
                return Err(self.error_at(k, "expected a member name before `(`"));
            }
            let name = self.text(k - 1).to_string();
            let is_ctor = k - 1 == type_start && name == class;
            if !is_ctor && (self.is(k, "{") || k - 1 == type_start) {
                return Err(self.error_at(k - 1, format!("member `{name}` has no type")));
            }
            let (params, mut m) = if self.is(k, "(") {
                let after = self.skip_group(k)?;
                (self.param_types(k + 1, after - 1), after)
            } else {
                (Vec::new(), k)
            };
            while self.is(m, "[") {
                m = self.skip_group(m)?;
            }
            while m < close && !self.is(m, "{") && !self.is(m, ";") {
                m += 1;
            }
            let sig_end = self.end_of(m - 1);
            let end = if self.is(m, "{") { self.skip_group(m)? } else if self.is(m, ";") { m + 1 } else {
                return Err(self.error_at(start, format!("missing body for `{name}`")));
            };
            let member = Member {
                kind: if is_ctor { MemberKind::Constructor } else { MemberKind::Method },
                name,
                full: Span::new(attached, self.end_of(end - 1)),
                signature: Span::new(self.toks[sig].start, sig_end),
                param_types: params,
                nested: None,
            };
            return Ok((member, end));
        }
        if self.is(k, "{") {
            return Err(self.error_at(k, "unexpected `{` in member declaration"));
        }
        // Field: the declarator name is the last identifier before the first
        // `=`, `,` or `;`, skipping C-style array dimensions.
        let mut n = k - 1;
        while self.is(n, "]") || self.is(n, "[") {
            n -= 1;
        }
        if !self.is_ident(n) || n < type_start + 1 {
            return Err(self.error_at(start, "malformed field declaration"));
        }
        let name = self.text(n).to_string();
        let mut e = k;
        while e < close && !self.is(e, ";") {
            e = if matches!(self.text(e), "(" | "{" | "[") && self.toks[e].kind == TokenKind::Punct {
                self.skip_group(e)?
            } else {
                e + 1
            };
        }
        if e >= close {
            return Err(self.error_at(start, format!("missing `;` after field `{name}`")));
        }
        let member = Member {
            kind: MemberKind::Field,
            name,
            full: Span::new(attached, self.end_of(e)),
            signature: Span::new(self.toks[sig].start, self.end_of(e)),
            param_types: Vec::new(),
            nested: None,
        };
        Ok((member, e + 1))
    }

    /// Parameter types between `from` and `to` (exclusive), as written.
    fn param_types(&self, from: usize, to: usize) -> Vec<String> {
        let mut params = Vec::new();
        let mut current: Vec<usize> = Vec::new();
        let mut depth = 0i32;
        let mut i = from;
        while i < to {
            if self.is_annotation_start(i) && current.iter().all(|&t| self.text(t) == "final") {
                i = self.skip_annotation(i).unwrap_or(i + 1);
                continue;
            }
            match self.text(i) {
                "<" | "(" => depth += 1,
                ">" | ")" => depth -= 1,
                "," if depth == 0 => {
                    params.push(self.one_param(&current));
                    current.clear();
                    i += 1;
                    continue;
                }
                _ => {}
            }
            current.push(i);
            i += 1;
        }
        if !current.is_empty() {
            params.push(self.one_param(&current));
        }
        params
    }

    fn one_param(&self, toks: &[usize]) -> String {
        let toks: Vec<usize> = toks.iter().copied().filter(|&t| self.text(t) != "final").collect();
        // name is the last identifier; trailing `[]` after it belong to the type
        let name_at = toks.iter().rposition(|&t| self.is_ident(t)).unwrap_or(toks.len());
        let mut ty: String = toks[..name_at].iter().map(|&t| self.text(t)).collect();
        for &t in &toks[name_at.saturating_add(1).min(toks.len())..] {
            ty.push_str(self.text(t));
        }
        ty
    }
}

/// Canonical form used to compare parameter types: no whitespace, no
/// generic arguments, no package qualifiers, varargs as arrays.
pub fn normalize_type(ty: &str) -> String {
    let mut out = String::new();
    let mut depth = 0usize;
    for c in ty.chars() {
        match c {
            '<' => depth += 1,
            '>' => depth = depth.saturating_sub(1),
            _ if depth > 0 || c.is_whitespace() => {}
            _ => out.push(c),
        }
    }
    let out = out.replace("...", "[]");
    let dims = out.find('[').unwrap_or(out.len());
    let (base, arr) = out.split_at(dims);
    let base = base.rsplit('.').next().unwrap_or(base);
    format!("{base}{arr}")
}
