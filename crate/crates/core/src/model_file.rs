//! Text format for hopping tables.
//!
//! ```text
//! name = "weyl_toy"
//! dimension = 3
//! fiber_size = 2
//! hop { offset = [1, 0, 0], re = [[0, 0], [0, 0]], im = [[0, -0.5], [-0.5, 0]] }
//! ```
//!
//! `im` may be omitted. Blocks may span several lines; `#` starts a comment.

use crate::error::{LapError, Result};
use crate::linalg::{CMat, C64};
use crate::model::{build_model, HoppingModel, HoppingSpec};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    Punct(char),
}

fn err(line: usize, message: impl Into<String>) -> LapError {
    LapError::ModelParse { line, message: message.into() }
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>> {
    let mut out = Vec::new();
    for (ln, raw) in src.lines().enumerate() {
        let line = ln + 1;
        let text = raw.split('#').next().unwrap_or("");
        let chars: Vec<char> = text.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c.is_whitespace() {
                i += 1;
            } else if "{}[]=,".contains(c) {
                out.push((Tok::Punct(c), line));
                i += 1;
            } else if c == '"' {
                let start = i + 1;
                let end = chars[start..]
                    .iter()
                    .position(|&x| x == '"')
                    .ok_or_else(|| err(line, "unterminated string"))?;
                out.push((Tok::Str(chars[start..start + end].iter().collect()), line));
                i = start + end + 1;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push((Tok::Ident(chars[start..i].iter().collect()), line));
            } else {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || "+-.".contains(chars[i])) {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                let v: f64 = s.parse().map_err(|_| err(line, format!("bad number '{s}'")))?;
                out.push((Tok::Num(v), line));
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn line(&self) -> usize {
        self.toks.get(self.pos).or(self.toks.last()).map(|t| t.1).unwrap_or(0)
    }
    fn next(&mut self) -> Result<Tok> {
        let t = self.toks.get(self.pos).cloned().ok_or_else(|| err(self.line(), "unexpected end of input"))?;
        self.pos += 1;
        Ok(t.0)
    }
    fn expect(&mut self, c: char) -> Result<()> {
        let line = self.line();
        match self.next()? {
            Tok::Punct(p) if p == c => Ok(()),
            t => Err(err(line, format!("expected '{c}', found {t:?}"))),
        }
    }
    fn peek_punct(&self, c: char) -> bool {
        matches!(self.toks.get(self.pos), Some((Tok::Punct(p), _)) if *p == c)
    }
    fn number(&mut self) -> Result<f64> {
        let line = self.line();
        match self.next()? {
            Tok::Num(v) => Ok(v),
            t => Err(err(line, format!("expected number, found {t:?}"))),
        }
    }
    fn list<T>(&mut self, mut item: impl FnMut(&mut Self) -> Result<T>) -> Result<Vec<T>> {
        self.expect('[')?;
        let mut v = Vec::new();
        if self.peek_punct(']') {
            self.pos += 1;
            return Ok(v);
        }
        loop {
            v.push(item(self)?);
            if self.peek_punct(',') {
                self.pos += 1;
                if self.peek_punct(']') {
                    self.pos += 1;
                    return Ok(v);
                }
            } else {
                self.expect(']')?;
                return Ok(v);
            }
        }
    }
}

pub fn parse_model(src: &str) -> Result<HoppingModel> {
    let mut p = Parser { toks: tokenize(src)?, pos: 0 };
    let mut name = String::from("unnamed");
    let mut dim: Option<usize> = None;
    let mut l: Option<usize> = None;
    let mut raw_hops = Vec::new();
    while p.pos < p.toks.len() {
        let line = p.line();
        let key = match p.next()? {
            Tok::Ident(s) => s,
            t => return Err(err(line, format!("expected a key, found {t:?}"))),
        };
        match key.as_str() {
            "name" => {
                p.expect('=')?;
                name = match p.next()? {
                    Tok::Str(s) | Tok::Ident(s) => s,
                    t => return Err(err(line, format!("bad name {t:?}"))),
                };
            }
            "dimension" | "fiber_size" => {
                p.expect('=')?;
                let v = p.number()?;
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(err(line, format!("{key} must be a positive integer")));
                }
                if key == "dimension" {
                    dim = Some(v as usize);
                } else {
                    l = Some(v as usize);
                }
            }
            "hop" => {
                p.expect('{')?;
                let mut offset = None;
                let mut re = None;
                let mut im = None;
                while !p.peek_punct('}') {
                    let fl = p.line();
                    let field = match p.next()? {
                        Tok::Ident(s) => s,
                        t => return Err(err(fl, format!("expected field, found {t:?}"))),
                    };
                    p.expect('=')?;
                    match field.as_str() {
                        "offset" => {
                            let v = p.list(|q| q.number())?;
                            if v.iter().any(|x| x.fract() != 0.0) {
                                return Err(err(fl, "offset entries must be integers"));
                            }
                            offset = Some(v.iter().map(|&x| x as i64).collect::<Vec<_>>());
                        }
                        "re" => re = Some(p.list(|q| q.list(|r| r.number()))?),
                        "im" => im = Some(p.list(|q| q.list(|r| r.number()))?),
                        other => return Err(err(fl, format!("unknown hop field '{other}'"))),
                    }
                    if p.peek_punct(',') {
                        p.pos += 1;
                    }
                }
                p.expect('}')?;
                let offset = offset.ok_or_else(|| err(line, "hop without offset"))?;
                let re = re.ok_or_else(|| err(line, "hop without re"))?;
                raw_hops.push((line, offset, re, im));
            }
            other => return Err(err(line, format!("unknown key '{other}'"))),
        }
    }
    let dim = dim.ok_or_else(|| err(0, "missing dimension"))?;
    let l = l.ok_or_else(|| err(0, "missing fiber_size"))?;
    let mut hops = Vec::new();
    for (line, offset, re, im) in raw_hops {
        let rows_ok = |m: &Vec<Vec<f64>>| m.len() == l && m.iter().all(|r| r.len() == l);
        if !rows_ok(&re) || !im.as_ref().map_or(true, rows_ok) {
            return Err(LapError::DimensionMismatch(format!("hop on line {line} is not {l}x{l}")));
        }
        let mut h = CMat::zeros(l, l);
        for i in 0..l {
            for j in 0..l {
                let b = im.as_ref().map_or(0.0, |m| m[i][j]);
                h[(i, j)] = C64::new(re[i][j], b);
            }
        }
        hops.push((offset, h));
    }
    build_model(&HoppingSpec { name, dimension: dim, fiber_size: l, hops })
}

pub fn write_model(model: &HoppingModel) -> String {
    let l = model.fiber_size();
    let mut s = format!("name = \"{}\"\ndimension = {}\nfiber_size = {}\n", model.name(), model.dim(), l);
    for (i, m) in model.offsets().iter().enumerate() {
        let h = model.hop(i);
        let fmt = |f: &dyn Fn(C64) -> f64| {
            let rows: Vec<String> = (0..l)
                .map(|r| {
                    let v: Vec<String> = (0..l).map(|c| format!("{:?}", f(h[(r, c)]))).collect();
                    format!("[{}]", v.join(", "))
                })
                .collect();
            format!("[{}]", rows.join(", "))
        };
        let off: Vec<String> = m.iter().map(|x| x.to_string()).collect();
        s.push_str(&format!(
            "hop {{ offset = [{}], re = {}, im = {} }}\n",
            off.join(", "),
            fmt(&|z| z.re),
            fmt(&|z| z.im)
        ));
    }
    s
}
