//! Text candidate files.
//!
//! ```text
//! CAND 1 <W> <H> <N>
//! id <int> score <float>
//! rle <run0> <run1> ...
//! ```
//!
//! One `id`/`rle` line pair per candidate; runs are row-major, zeros first.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Rle;
use crate::scene::MaskCandidate;

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateFile {
    pub width: usize,
    pub height: usize,
    pub candidates: Vec<MaskCandidate>,
}

pub fn encode_candidates(width: usize, height: usize, candidates: &[MaskCandidate]) -> String {
    let mut out = format!("CAND 1 {width} {height} {}\n", candidates.len());
    for c in candidates {
        let _ = writeln!(out, "id {} score {}", c.id(), c.score());
        out.push_str("rle");
        for r in c.rle().runs {
            let _ = write!(out, " {r}");
        }
        out.push('\n');
    }
    out
}

struct Token<'a> {
    text: &'a str,
    offset: usize,
}

/// Non-blank lines split into whitespace-separated tokens, with byte offsets.
fn lines(text: &str) -> Vec<(usize, Vec<Token<'_>>)> {
    let mut out = Vec::new();
    let mut start = 0;
    for line in text.split_inclusive('\n') {
        let mut tokens = Vec::new();
        let mut pos = 0;
        for piece in line.split(|c: char| c.is_ascii_whitespace()) {
            if !piece.is_empty() {
                tokens.push(Token {
                    text: piece,
                    offset: start + pos,
                });
            }
            pos += piece.len() + 1;
        }
        if !tokens.is_empty() {
            out.push((start, tokens));
        }
        start += line.len();
    }
    out
}

struct Parser<'p> {
    path: &'p Path,
    end: usize,
}

impl Parser<'_> {
    fn err(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::parse(self.path, offset, message)
    }

    fn keyword(&self, tok: Option<&Token<'_>>, want: &str, line_start: usize) -> Result<()> {
        match tok {
            Some(t) if t.text == want => Ok(()),
            Some(t) => Err(self.err(t.offset, format!("expected `{want}`, found `{}`", t.text))),
            None => Err(self.err(line_start, format!("expected `{want}`"))),
        }
    }

    fn number<T: std::str::FromStr>(&self, tok: Option<&Token<'_>>, what: &str, line_end: usize) -> Result<T> {
        let t = tok.ok_or_else(|| self.err(line_end, format!("missing {what}")))?;
        t.text
            .parse()
            .map_err(|_| self.err(t.offset, format!("invalid {what} `{}`", t.text)))
    }

    fn no_more(&self, tok: Option<&Token<'_>>) -> Result<()> {
        match tok {
            Some(t) => Err(self.err(t.offset, format!("unexpected token `{}`", t.text))),
            None => Ok(()),
        }
    }
}

fn line_end(tokens: &[Token<'_>]) -> usize {
    tokens.last().map(|t| t.offset + t.text.len()).unwrap_or(0)
}

pub fn decode_candidates(path: &Path, text: &str) -> Result<CandidateFile> {
    let p = Parser {
        path,
        end: text.len(),
    };
    let lines = lines(text);
    let mut it = lines.iter();
    let (start, header) = it.next().ok_or_else(|| p.err(0, "missing `CAND` header"))?;
    let end = line_end(header);
    let mut toks = header.iter();
    p.keyword(toks.next(), "CAND", *start)?;
    let version: u32 = p.number(toks.next(), "version", end)?;
    if version != 1 {
        return Err(p.err(header[1].offset, format!("unsupported version {version}")));
    }
    let width: usize = p.number(toks.next(), "width", end)?;
    let height: usize = p.number(toks.next(), "height", end)?;
    let count: usize = p.number(toks.next(), "candidate count", end)?;
    p.no_more(toks.next())?;
    if width == 0 || height == 0 {
        return Err(p.err(header[2].offset, "dimensions must be positive"));
    }
    let pixels = (width as u64)
        .checked_mul(height as u64)
        .ok_or_else(|| p.err(header[2].offset, "dimensions overflow"))?;

    let mut seen = HashSet::new();
    let mut candidates = Vec::new();
    for _ in 0..count {
        let (start, line) = it
            .next()
            .ok_or_else(|| p.err(p.end, format!("expected {count} candidates, found {}", candidates.len())))?;
        let end = line_end(line);
        let mut toks = line.iter();
        p.keyword(toks.next(), "id", *start)?;
        let id: u32 = p.number(toks.next(), "id", end)?;
        p.keyword(toks.next(), "score", end)?;
        let score_tok = toks.next();
        let score: f64 = p.number(score_tok, "score", end)?;
        p.no_more(toks.next())?;
        if !(0.0..=1.0).contains(&score) {
            let at = score_tok.map(|t| t.offset).unwrap_or(end);
            return Err(p.err(at, format!("score {score} outside [0, 1]")));
        }

        let (start, line) = it
            .next()
            .ok_or_else(|| p.err(p.end, format!("missing `rle` line for candidate {id}")))?;
        let end = line_end(line);
        let mut toks = line.iter();
        p.keyword(toks.next(), "rle", *start)?;
        let mut runs = Vec::new();
        let mut sum = 0u64;
        for t in toks {
            let r: u32 = p.number(Some(t), "run length", end)?;
            sum += r as u64;
            if sum > pixels {
                break;
            }
            runs.push(r);
        }
        if sum != pixels {
            return Err(Error::RunSumMismatch {
                expected: pixels,
                actual: sum,
            });
        }
        if !seen.insert(id) {
            return Err(Error::DuplicateId { id });
        }
        let rle = Rle {
            width,
            height,
            runs,
        };
        candidates.push(MaskCandidate::from_rle(id, score, &rle)?);
    }
    if let Some((start, _)) = it.next() {
        return Err(p.err(*start, format!("content after {count} candidates")));
    }
    Ok(CandidateFile {
        width,
        height,
        candidates,
    })
}

pub fn write_candidates(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    candidates: &[MaskCandidate],
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_candidates(width, height, candidates)).map_err(|e| Error::io(path, e))
}

pub fn read_candidates(path: impl AsRef<Path>) -> Result<CandidateFile> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::parse(path, e.valid_up_to(), "invalid UTF-8"))?;
    decode_candidates(path, text)
}
