//! Parenthesized scene-description format.
//!
//! ```text
//! document := node ;
//! node     := "(" kind [name] { attr } { node } ")" ;
//! attr     := key "=" value ;
//! key      := identifier { "." identifier } ;
//! value    := number | string | vector | vector "+" identifier "." identifier ;
//! vector   := "[" number { "," number } "]" ;
//! ```
//!
//! `;` starts a comment running to end of line. Keys of the form
//! `anchor.<name>` declare named anchor offsets on a node; `pos` may be an
//! anchor reference such as `[0, 0.1, 0.02] + table.surface_origin`.

use std::collections::HashSet;

use nalgebra::Vector3;

use super::{AnchorRef, NodeKind, SceneDoc, SceneError, SceneNode};
use crate::se3::quat_wxyz;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Eq,
    Plus,
    Dot,
    Ident(String),
    Number(f64, String),
    Str(String),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, message: impl Into<String>) -> SceneError {
    SceneError::Syntax {
        line,
        col,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Spanned>, SceneError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            '=' => Some(Tok::Eq),
            '+' => Some(Tok::Plus),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Spanned {
                tok,
                line,
                col,
            });
            i += 1;
            col += 1;
            continue;
        }
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == ';' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '"' {
            let mut s = String::new();
            i += 1;
            col += 1;
            loop {
                match chars.get(i) {
                    None | Some('\n') => {
                        return Err(syntax(start_line, start_col, "unterminated string literal"))
                    }
                    Some('"') => {
                        i += 1;
                        col += 1;
                        break;
                    }
                    Some('\\') => {
                        let esc = chars.get(i + 1).copied();
                        match esc {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('n') => s.push('\n'),
                            _ => return Err(syntax(line, col, "invalid escape in string literal")),
                        }
                        i += 2;
                        col += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                        col += 1;
                    }
                }
            }
            out.push(Spanned {
                tok: Tok::Str(s),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        let starts_number = c.is_ascii_digit()
            || ((c == '-' || c == '.')
                && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit() || *n == '.'));
        if starts_number {
            let mut s = String::new();
            while let Some(&ch) = chars.get(i) {
                let exp_sign = (ch == '-' || ch == '+')
                    && s.ends_with(['e', 'E'])
                    && !s.is_empty();
                if ch.is_ascii_digit()
                    || ch == '.'
                    || ch == 'e'
                    || ch == 'E'
                    || exp_sign
                    || (ch == '-' && s.is_empty())
                {
                    s.push(ch);
                    i += 1;
                    col += 1;
                } else {
                    break;
                }
            }
            let v: f64 = s
                .parse()
                .map_err(|_| syntax(start_line, start_col, format!("invalid number '{s}'")))?;
            if !v.is_finite() {
                return Err(syntax(start_line, start_col, "non-finite number"));
            }
            out.push(Spanned {
                tok: Tok::Number(v, s),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        if c == '.' {
            out.push(Spanned {
                tok: Tok::Dot,
                line,
                col,
            });
            i += 1;
            col += 1;
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(&ch) = chars.get(i) {
                if ch.is_alphanumeric() || ch == '_' || ch == '-' {
                    s.push(ch);
                    i += 1;
                    col += 1;
                } else {
                    break;
                }
            }
            out.push(Spanned {
                tok: Tok::Ident(s),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        return Err(syntax(line, col, format!("unexpected character '{c}'")));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum Value {
    Number(f64, String),
    Str(String),
    Vector(Vec<f64>, Vec<String>),
    AnchorRef(Vec<f64>, AnchorRef),
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    eof: (usize, usize),
    names: HashSet<String>,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map(|t| (t.line, t.col)).unwrap_or(self.eof)
    }

    fn next(&mut self) -> Result<Spanned, SceneError> {
        let t = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| syntax(self.eof.0, self.eof.1, "unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Spanned, SceneError> {
        let t = self.next()?;
        if t.tok == tok {
            Ok(t)
        } else {
            Err(syntax(t.line, t.col, format!("expected {what}")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize, usize), SceneError> {
        let t = self.next()?;
        match t.tok {
            Tok::Ident(s) => Ok((s, t.line, t.col)),
            _ => Err(syntax(t.line, t.col, format!("expected {what}"))),
        }
    }

    fn node(&mut self, depth: usize) -> Result<SceneNode, SceneError> {
        self.expect(Tok::LParen, "'('")?;
        let (kind_name, kline, kcol) = self.ident("node kind")?;
        let kind = NodeKind::from_keyword(&kind_name).ok_or(SceneError::UnknownKind {
            kind: kind_name.clone(),
            line: kline,
            col: kcol,
        })?;
        if depth == 0 && kind != NodeKind::Scene {
            return Err(syntax(kline, kcol, "document root must be a scene node"));
        }
        if depth > 0 && kind == NodeKind::Scene {
            return Err(syntax(kline, kcol, "scene may only appear at the root"));
        }
        let mut node = SceneNode::new(kind, "");
        if let Some(Spanned {
            tok: Tok::Str(name),
            line,
            col,
        }) = self.peek().cloned()
        {
            self.pos += 1;
            if !name.is_empty() && !self.names.insert(name.clone()) {
                return Err(SceneError::DuplicateName { name, line, col });
            }
            node.name = name;
        }
        while let Some(Spanned {
            tok: Tok::Ident(_), ..
        }) = self.peek()
        {
            self.attr(&mut node)?;
        }
        while let Some(Spanned {
            tok: Tok::LParen,
            line,
            col,
        }) = self.peek().cloned()
        {
            if !kind.allows_children() {
                return Err(syntax(
                    line,
                    col,
                    format!("{} nodes cannot have children", kind.keyword()),
                ));
            }
            node.children.push(self.node(depth + 1)?);
        }
        self.expect(Tok::RParen, "')' or child node")?;
        Ok(node)
    }

    fn attr(&mut self, node: &mut SceneNode) -> Result<(), SceneError> {
        let (first, line, col) = self.ident("attribute key")?;
        let mut key = first;
        while matches!(self.peek(), Some(Spanned { tok: Tok::Dot, .. })) {
            self.pos += 1;
            let (part, _, _) = self.ident("attribute key segment")?;
            key.push('.');
            key.push_str(&part);
        }
        self.expect(Tok::Eq, "'='")?;
        let value = self.value()?;
        let err = |m: &str| syntax(line, col, format!("attribute '{key}': {m}"));
        if let Some(anchor) = key.strip_prefix("anchor.") {
            let Value::Vector(v, _) = value else {
                return Err(err("anchor offset must be a vector"));
            };
            if v.len() != 3 {
                return Err(err("anchor offset must have 3 components"));
            }
            if anchor.contains('.') || node.anchors.contains_key(anchor) {
                return Err(err("anchor names must be unique identifiers"));
            }
            node.anchors
                .insert(anchor.to_string(), Vector3::new(v[0], v[1], v[2]));
            return Ok(());
        }
        match key.as_str() {
            "pos" => match value {
                Value::Vector(v, _) if v.len() == 3 => {
                    node.pos = Vector3::new(v[0], v[1], v[2]);
                }
                Value::AnchorRef(v, r) if v.len() == 3 => {
                    node.pos = Vector3::new(v[0], v[1], v[2]);
                    node.pos_ref = Some(r);
                }
                _ => return Err(err("expected a 3-vector")),
            },
            "quat" => match value {
                Value::Vector(v, _) if v.len() == 4 => {
                    if v.iter().all(|c| *c == 0.0) {
                        return Err(err("zero quaternion"));
                    }
                    node.quat = quat_wxyz(v[0], v[1], v[2], v[3]);
                }
                _ => return Err(err("expected a 4-vector (w, x, y, z)")),
            },
            "size" => {
                let v = match value {
                    Value::Vector(v, _) => v,
                    Value::Number(n, _) => vec![n],
                    _ => return Err(err("expected a number or vector")),
                };
                if v.is_empty() || v.len() > 3 || v.iter().any(|c| *c < 0.0) {
                    return Err(err("size must have 1-3 non-negative components"));
                }
                node.size = v;
            }
            _ => {
                let text = match value {
                    Value::Number(_, raw) => raw,
                    Value::Str(s) => s,
                    Value::Vector(_, raw) => raw.join(" "),
                    Value::AnchorRef(..) => {
                        return Err(err("anchor references are only allowed for pos"))
                    }
                };
                if node.attrs.insert(key.clone(), text).is_some() {
                    return Err(err("duplicate attribute"));
                }
            }
        }
        Ok(())
    }

    fn value(&mut self) -> Result<Value, SceneError> {
        let t = self.next()?;
        match t.tok {
            Tok::Number(v, raw) => Ok(Value::Number(v, raw)),
            Tok::Str(s) => Ok(Value::Str(s)),
            Tok::LBracket => {
                let mut v = Vec::new();
                let mut raw = Vec::new();
                loop {
                    let n = self.next()?;
                    match n.tok {
                        Tok::Number(x, r) => {
                            v.push(x);
                            raw.push(r);
                        }
                        _ => return Err(syntax(n.line, n.col, "expected a number")),
                    }
                    let sep = self.next()?;
                    match sep.tok {
                        Tok::Comma => continue,
                        Tok::RBracket => break,
                        _ => return Err(syntax(sep.line, sep.col, "expected ',' or ']'")),
                    }
                }
                if matches!(self.peek(), Some(Spanned { tok: Tok::Plus, .. })) {
                    self.pos += 1;
                    let (node, _, _) = self.ident("anchor node name")?;
                    self.expect(Tok::Dot, "'.'")?;
                    let (anchor, _, _) = self.ident("anchor name")?;
                    return Ok(Value::AnchorRef(v, AnchorRef { node, anchor }));
                }
                Ok(Value::Vector(v, raw))
            }
            _ => Err(syntax(t.line, t.col, "expected a value")),
        }
    }
}

/// Parse a scene document.
pub fn parse_scene(text: &str) -> Result<SceneDoc, SceneError> {
    let toks = lex(text)?;
    let eof = {
        let line = text.lines().count().max(1);
        let col = text.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
        (line, col)
    };
    let mut p = Parser {
        toks,
        pos: 0,
        eof,
        names: HashSet::new(),
    };
    let root = p.node(0)?;
    if p.pos != p.toks.len() {
        let (line, col) = p.here();
        return Err(syntax(line, col, "trailing input after document"));
    }
    Ok(SceneDoc { root })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_scene() {
        let doc = parse_scene("(scene)").unwrap();
        assert_eq!(doc.root.kind, NodeKind::Scene);
        assert!(doc.root.children.is_empty());
    }

    #[test]
    fn nesting_mirrors_document() {
        let doc = parse_scene(
            r#"(scene "s"
                 (body "table" anchor.surface_origin=[0, 0, 0.75]
                   (box "top" size=[0.5, 0.5, 0.02]))
                 (box "cube" size=[0.01, 0.01, 0.01]))"#,
        )
        .unwrap();
        assert_eq!(doc.root.children.len(), 2);
        assert_eq!(doc.root.children[0].children.len(), 1);
        assert_eq!(doc.leaf_count(), 2);
        assert_eq!(doc.depth(), 3);
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = parse_scene(r#"(scene (box "cube") (body "b" (box "cube")))"#).unwrap_err();
        assert!(matches!(err, SceneError::DuplicateName { ref name, .. } if name == "cube"));
    }

    #[test]
    fn unknown_kind_has_position() {
        let err = parse_scene("(scene\n  (teapot \"t\"))").unwrap_err();
        assert_eq!(
            err,
            SceneError::UnknownKind {
                kind: "teapot".into(),
                line: 2,
                col: 4
            }
        );
    }

    #[test]
    fn syntax_error_position() {
        let err = parse_scene("(scene\n  (box size=[1, 2 3]))").unwrap_err();
        match err {
            SceneError::Syntax { line, col, .. } => assert_eq!((line, col), (2, 19)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_scene("(scene"), Err(SceneError::Syntax { .. })));
        assert!(matches!(parse_scene("(scene) (scene)"), Err(SceneError::Syntax { .. })));
        assert!(matches!(parse_scene("(box)"), Err(SceneError::Syntax { .. })));
    }

    #[test]
    fn unknown_attributes_preserved() {
        let doc = parse_scene(
            r#"(scene ; comment
                 (light "key" diffuse=[0.8, 0.8, 0.8] castshadow="false" cutoff=45))"#,
        )
        .unwrap();
        let light = &doc.root.children[0];
        assert_eq!(light.attrs["diffuse"], "0.8 0.8 0.8");
        assert_eq!(light.attrs["castshadow"], "false");
        assert_eq!(light.attrs["cutoff"], "45");
    }

    #[test]
    fn anchor_reference_parsed() {
        let doc = parse_scene(
            r#"(scene (box "cube" pos=[0., 0.1, 0.02] + table.surface_origin))"#,
        )
        .unwrap();
        let cube = &doc.root.children[0];
        assert_eq!(cube.pos, Vector3::new(0.0, 0.1, 0.02));
        assert_eq!(
            cube.pos_ref,
            Some(AnchorRef {
                node: "table".into(),
                anchor: "surface_origin".into()
            })
        );
    }

    #[test]
    fn leaf_nodes_reject_children() {
        assert!(parse_scene("(scene (box (box)))").is_err());
        assert!(parse_scene("(scene (box size=[-1, 1, 1]))").is_err());
        assert!(parse_scene("(scene (box quat=[0, 0, 0, 0]))").is_err());
    }
}
