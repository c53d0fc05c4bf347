use super::ast::Pos;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    Number(f64),
    /// `|label>` with an optional `_d` dimension suffix.
    Ket(String, Option<usize>),
    Sym(&'static str),
    Newline,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

pub(crate) fn parse_error(pos: Pos, message: impl Into<String>) -> Error {
    Error::Parse {
        line: pos.line,
        column: pos.column,
        message: message.into(),
    }
}

const SYMBOLS: [&str; 19] = [
    "->", "==", "!=", "=", "[", "]", "{", "}", "(", ")", ",", "|", ":", "-", "+", "*", "/", ";", "^",
];

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Splits source text into tokens. Newlines inside brackets, braces or
/// parentheses are dropped so literals may span lines.
pub fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let mut depth = 0i64;
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        if c == '\n' {
            if depth == 0 {
                tokens.push(Token { tok: Tok::Newline, pos });
            }
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
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '|' {
            if let Some((label, dim, len)) = ket_at(&chars[i..]) {
                tokens.push(Token { tok: Tok::Ket(label, dim), pos });
                i += len;
                col += len;
                continue;
            }
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            // identifiers such as `2d` are not numbers
            if i < chars.len() && is_ident_char(chars[i]) {
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                tokens.push(Token { tok: Tok::Ident(text), pos });
                col += i - start;
                continue;
            }
            let text: String = chars[start..i].iter().collect();
            let value = text
                .parse::<f64>()
                .map_err(|_| parse_error(pos, format!("malformed number `{text}`")))?;
            tokens.push(Token { tok: Tok::Number(value), pos });
            col += i - start;
            continue;
        }
        if is_ident_char(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            tokens.push(Token { tok: Tok::Ident(text), pos });
            col += i - start;
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) else {
            return Err(parse_error(pos, format!("unexpected character `{c}`")));
        };
        match *sym {
            "[" | "{" | "(" => depth += 1,
            "]" | "}" | ")" => depth -= 1,
            _ => {}
        }
        if depth < 0 {
            return Err(parse_error(pos, format!("unbalanced `{sym}`")));
        }
        tokens.push(Token { tok: Tok::Sym(sym), pos });
        i += sym.len();
        col += sym.len();
    }
    if depth != 0 {
        return Err(parse_error(Pos { line, column: col }, "unclosed bracket at end of input"));
    }
    tokens.push(Token {
        tok: Tok::Newline,
        pos: Pos { line, column: col },
    });
    Ok(tokens)
}

/// Recognizes `|label>` or `|label>_d` at the start of `s`.
fn ket_at(s: &[char]) -> Option<(String, Option<usize>, usize)> {
    let mut j = 1;
    while j < s.len() && (s[j].is_alphanumeric() || s[j] == '+' || s[j] == '-') {
        j += 1;
    }
    if j == 1 || j >= s.len() || s[j] != '>' {
        return None;
    }
    let label: String = s[1..j].iter().collect();
    let mut len = j + 1;
    let mut dim = None;
    if len < s.len() && s[len] == '_' {
        let mut k = len + 1;
        while k < s.len() && s[k].is_ascii_digit() {
            k += 1;
        }
        if k > len + 1 {
            dim = s[len + 1..k].iter().collect::<String>().parse().ok();
            len = k;
        }
    }
    Some((label, dim, len))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kets_and_arm_bars() {
        let toks = tokenize("{ x: apply X c | y: skip } |+i> |2>_3").unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.tok.clone()).collect();
        assert!(kinds.contains(&Tok::Sym("|")));
        assert!(kinds.contains(&Tok::Ket("+i".into(), None)));
        assert!(kinds.contains(&Tok::Ket("2".into(), Some(3))));
    }

    #[test]
    fn newlines_inside_brackets_are_dropped() {
        let toks = tokenize("a = [[1, 0],\n [0, 1]]\nb").unwrap();
        let newlines = toks.iter().filter(|t| t.tok == Tok::Newline).count();
        assert_eq!(newlines, 2);
        assert_eq!(toks.last().unwrap().pos.line, 3);
    }

    #[test]
    fn numbers_and_positions() {
        let toks = tokenize("x 1.5e-3 -> r1").unwrap();
        assert_eq!(toks[1].tok, Tok::Number(1.5e-3));
        assert_eq!(toks[2].pos, Pos { line: 1, column: 10 });
        assert_eq!(toks[3].tok, Tok::Ident("r1".into()));
    }

    #[test]
    fn bad_character() {
        let err = tokenize("prepare A q $").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, column: 13, .. }));
    }
}
