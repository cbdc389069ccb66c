//! Shared tokenizer for program, assertion, and proof sources.
//!
//! `#` starts a comment running to end of line. Integer tokens keep their raw
//! text so ket labels like `|00>` retain leading zeros.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("lex error at line {line}, column {col}: {msg}")]
pub struct LexError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int { value: i64, raw: String },
    Float { value: f64, raw: String },
    Str(String),
    Assign,  // :=
    Semi,    // ;
    Comma,   // ,
    LParen,  // (
    RParen,  // )
    LBrace,  // {
    RBrace,  // }
    LBrack,  // [
    RBrack,  // ]
    Odot,    // (.)
    Oplus,   // (+)
    Otimes,  // (x)
    AndAnd,  // /\
    Arrow,   // ->
    Tilde,   // ~
    Eq,      // =
    Ne,      // /=
    Le,      // <=
    Ge,      // >=
    Lt,      // <
    Gt,      // >
    Pipe,    // |
    Plus,    // +
    Minus,   // -
    Star,    // *
    Slash,   // /
    Dot,     // .
    Under,   // _
    Colon,   // :
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{}`", s),
            Tok::Int { raw, .. } => format!("integer `{}`", raw),
            Tok::Float { raw, .. } => format!("number `{}`", raw),
            Tok::Str(s) => format!("string {:?}", s),
            Tok::Assign => "`:=`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Comma => "`,`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LBrack => "`[`".into(),
            Tok::RBrack => "`]`".into(),
            Tok::Odot => "`(.)`".into(),
            Tok::Oplus => "`(+)`".into(),
            Tok::Otimes => "`(x)`".into(),
            Tok::AndAnd => "`/\\`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Tilde => "`~`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Ne => "`/=`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Pipe => "`|`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Under => "`_`".into(),
            Tok::Colon => "`:`".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub fn lex(src: &str) -> Result<Vec<Spanned>, LexError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0usize;
    let mut line = 1usize;
    let mut col = 1usize;
    let err = |line: usize, col: usize, msg: String| LexError { line, col, msg };

    macro_rules! push {
        ($tok:expr, $len:expr) => {{
            out.push(Spanned {
                tok: $tok,
                line,
                col,
            });
            i += $len;
            col += $len;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let peek = |k: usize| chars.get(i + k).copied().unwrap_or('\0');
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '"' => {
                let (sl, sc) = (line, col);
                let mut s = String::new();
                let mut k = i + 1;
                loop {
                    match chars.get(k) {
                        None | Some('\n') => {
                            return Err(err(sl, sc, "unterminated string".into()))
                        }
                        Some('"') => break,
                        Some(ch) => {
                            s.push(*ch);
                            k += 1;
                        }
                    }
                }
                let len = k + 1 - i;
                push!(Tok::Str(s), len);
            }
            '(' => {
                // (.)  (+)  (x) are single connective tokens
                if peek(2) == ')' && matches!(peek(1), '.' | '+' | 'x') {
                    let t = match peek(1) {
                        '.' => Tok::Odot,
                        '+' => Tok::Oplus,
                        _ => Tok::Otimes,
                    };
                    push!(t, 3);
                } else {
                    push!(Tok::LParen, 1);
                }
            }
            ')' => push!(Tok::RParen, 1),
            '{' => push!(Tok::LBrace, 1),
            '}' => push!(Tok::RBrace, 1),
            '[' => push!(Tok::LBrack, 1),
            ']' => push!(Tok::RBrack, 1),
            ';' => push!(Tok::Semi, 1),
            ',' => push!(Tok::Comma, 1),
            '~' => push!(Tok::Tilde, 1),
            '=' => push!(Tok::Eq, 1),
            '|' => push!(Tok::Pipe, 1),
            '+' => push!(Tok::Plus, 1),
            '*' => push!(Tok::Star, 1),
            '.' => push!(Tok::Dot, 1),
            '_' if !peek(1).is_alphanumeric() => push!(Tok::Under, 1),
            ':' => {
                if peek(1) == '=' {
                    push!(Tok::Assign, 2);
                } else {
                    push!(Tok::Colon, 1);
                }
            }
            '/' => match peek(1) {
                '\\' => push!(Tok::AndAnd, 2),
                '=' => push!(Tok::Ne, 2),
                _ => push!(Tok::Slash, 1),
            },
            '<' => {
                if peek(1) == '=' {
                    push!(Tok::Le, 2);
                } else {
                    push!(Tok::Lt, 1);
                }
            }
            '>' => {
                if peek(1) == '=' {
                    push!(Tok::Ge, 2);
                } else {
                    push!(Tok::Gt, 1);
                }
            }
            '-' => {
                if peek(1) == '>' {
                    push!(Tok::Arrow, 2);
                } else {
                    push!(Tok::Minus, 1);
                }
            }
            _ if c.is_ascii_digit() => {
                let start = i;
                let mut k = i;
                while k < chars.len() && chars[k].is_ascii_digit() {
                    k += 1;
                }
                let mut is_float = false;
                if chars.get(k) == Some(&'.')
                    && chars.get(k + 1).map_or(false, |d| d.is_ascii_digit())
                {
                    is_float = true;
                    k += 1;
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                }
                // exponent, with or without a fractional part
                if matches!(chars.get(k), Some('e') | Some('E')) {
                    let mut e = k + 1;
                    if matches!(chars.get(e), Some('+') | Some('-')) {
                        e += 1;
                    }
                    if chars.get(e).map_or(false, |d| d.is_ascii_digit()) {
                        is_float = true;
                        k = e;
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                    }
                }
                if is_float {
                    let raw: String = chars[start..k].iter().collect();
                    let value: f64 = raw
                        .parse()
                        .map_err(|_| err(line, col, format!("bad number `{}`", raw)))?;
                    let len = k - start;
                    push!(Tok::Float { value, raw: raw.clone() }, len);
                } else {
                    let raw: String = chars[start..k].iter().collect();
                    let value: i64 = raw
                        .parse()
                        .map_err(|_| err(line, col, format!("integer out of range `{}`", raw)))?;
                    let len = k - start;
                    push!(Tok::Int { value, raw: raw.clone() }, len);
                }
            }
            _ if c.is_alphabetic() || c == '_' => {
                let start = i;
                let mut k = i;
                while k < chars.len() && (chars[k].is_alphanumeric() || chars[k] == '_' || chars[k] == '\'')
                {
                    k += 1;
                }
                let raw: String = chars[start..k].iter().collect();
                let len = k - start;
                push!(Tok::Ident(raw), len);
            }
            _ => {
                return Err(err(line, col, format!("unexpected character `{}`", c)));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        lex(src).unwrap().into_iter().map(|s| s.tok).collect()
    }

    #[test]
    fn connective_tokens() {
        assert_eq!(kinds("(.) (+) (x) /\\ /= -> :="), vec![
            Tok::Odot,
            Tok::Oplus,
            Tok::Otimes,
            Tok::AndAnd,
            Tok::Ne,
            Tok::Arrow,
            Tok::Assign,
        ]);
    }

    #[test]
    fn ket_label_keeps_leading_zeros() {
        let toks = kinds("|00>");
        assert_eq!(toks[0], Tok::Pipe);
        assert_eq!(
            toks[1],
            Tok::Int {
                value: 0,
                raw: "00".into()
            }
        );
        assert_eq!(toks[2], Tok::Gt);
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(kinds("x # rest is gone\ny"), vec![
            Tok::Ident("x".into()),
            Tok::Ident("y".into())
        ]);
    }

    #[test]
    fn primes_allowed_in_identifiers() {
        assert_eq!(kinds("z' y'"), vec![
            Tok::Ident("z'".into()),
            Tok::Ident("y'".into())
        ]);
    }

    #[test]
    fn floats_and_ints() {
        let toks = kinds("3 3.5 0.25");
        assert!(matches!(toks[0], Tok::Int { value: 3, .. }));
        assert!(matches!(toks[1], Tok::Float { .. }));
        assert!(matches!(toks[2], Tok::Float { .. }));
    }

    #[test]
    fn exponent_floats() {
        match &kinds("1e-7")[..] {
            [Tok::Float { value, .. }] => assert!((value - 1e-7).abs() < 1e-20),
            other => panic!("lexed {:?}", other),
        }
        match &kinds("6.12e-17")[..] {
            [Tok::Float { value, .. }] => assert!((value - 6.12e-17).abs() < 1e-25),
            other => panic!("lexed {:?}", other),
        }
        // `e` not followed by digits stays a separate identifier
        let toks = kinds("3 e");
        assert!(matches!(toks[0], Tok::Int { value: 3, .. }));
        assert_eq!(toks[1], Tok::Ident("e".into()));
    }
}
