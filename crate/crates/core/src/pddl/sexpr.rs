//! S-expression reader for PDDL text. `;` comments run to end of line.

use super::diag::{Diagnostic, Pos};

#[derive(Clone, Debug, PartialEq)]
pub enum SExpr {
    Symbol { text: String, pos: Pos },
    List { items: Vec<SExpr>, pos: Pos },
}

impl SExpr {
    pub fn pos(&self) -> Pos {
        match self {
            SExpr::Symbol { pos, .. } | SExpr::List { pos, .. } => *pos,
        }
    }

    pub fn symbol(&self) -> Option<&str> {
        match self {
            SExpr::Symbol { text, .. } => Some(text),
            SExpr::List { .. } => None,
        }
    }

    pub fn list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List { items, .. } => Some(items),
            SExpr::Symbol { .. } => None,
        }
    }

    /// Head symbol of a list, if any.
    pub fn head(&self) -> Option<&str> {
        self.list().and_then(|items| items.first()).and_then(SExpr::symbol)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Open(Pos),
    Close(Pos),
    Symbol(String, Pos),
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut col = 1;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            ';' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '(' => {
                chars.next();
                col += 1;
                out.push(Token::Open(pos));
            }
            ')' => {
                chars.next();
                col += 1;
                out.push(Token::Close(pos));
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    s.push(c);
                    chars.next();
                    col += 1;
                }
                out.push(Token::Symbol(s, pos));
            }
        }
    }
    out
}

/// Reads exactly one top-level expression.
pub fn read(text: &str) -> Result<SExpr, Diagnostic> {
    let tokens = tokenize(text);
    let mut i = 0;
    let expr = match tokens.first() {
        None => return Err(Diagnostic::error_at(Pos { line: 1, col: 1 }, "empty input")),
        Some(_) => read_expr(&tokens, &mut i)?,
    };
    if let Some(t) = tokens.get(i) {
        let pos = match t {
            Token::Open(p) | Token::Close(p) | Token::Symbol(_, p) => *p,
        };
        return Err(Diagnostic::error_at(pos, "unexpected content after the top-level expression"));
    }
    Ok(expr)
}

fn read_expr(tokens: &[Token], i: &mut usize) -> Result<SExpr, Diagnostic> {
    match &tokens[*i] {
        Token::Symbol(s, p) => {
            *i += 1;
            Ok(SExpr::Symbol { text: s.clone(), pos: *p })
        }
        Token::Close(p) => Err(Diagnostic::error_at(*p, "unbalanced ')'")),
        Token::Open(p) => {
            let open = *p;
            *i += 1;
            let mut items = Vec::new();
            loop {
                match tokens.get(*i) {
                    None => return Err(Diagnostic::error_at(open, "unclosed '('")),
                    Some(Token::Close(_)) => {
                        *i += 1;
                        return Ok(SExpr::List { items, pos: open });
                    }
                    Some(_) => items.push(read_expr(tokens, i)?),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_nested_lists_without_spaces() {
        let e = read("(and(at-location ?o ?l) ; comment\n (not(inaction ?r)))").unwrap();
        let items = e.list().unwrap();
        assert_eq!(items.len(), 3);
        assert_eq!(items[1].head(), Some("at-location"));
        assert_eq!(items[2].pos(), Pos { line: 2, col: 2 });
    }

    #[test]
    fn reports_unbalanced() {
        assert!(read("(a (b)").is_err());
        assert!(read("(a) )").is_err());
        assert!(read("   ; only a comment").is_err());
    }
}
