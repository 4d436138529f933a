//! Line-oriented text format for expansions.
//!
//! ```text
//! pce 1
//! basis nmap
//! germ_dim 3
//! index_dim 3
//! state_dim 3
//! order 2
//! terms 10
//! index 0 0 0
//! ...
//! coeff <terms values>      (one line per state component)
//! transform <terms values>  (mgs only, one line per row)
//! anchor                    (mgs/nmap only, followed by a nested block)
//! end
//! ```
//! Floats use Rust's shortest round-trip formatting, so reading back is bit-exact.
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::{BasisKind, MultiIndex, MultiIndexSet, PCExpansion};
use crate::error::{Error, Result};

pub(super) fn write_expansion(exp: &PCExpansion) -> String {
    let mut s = String::new();
    write_block(exp, &mut s);
    s
}

fn write_row<'a>(s: &mut String, tag: &str, vals: impl Iterator<Item = &'a f64>) {
    s.push_str(tag);
    for v in vals {
        let _ = write!(s, " {v:?}");
    }
    s.push('\n');
}

fn write_block(exp: &PCExpansion, s: &mut String) {
    let set = exp.index_set();
    let _ = writeln!(s, "pce 1");
    let _ = writeln!(s, "basis {}", exp.basis().name());
    let _ = writeln!(s, "germ_dim {}", exp.germ_dim());
    let _ = writeln!(s, "index_dim {}", set.germ_dim());
    let _ = writeln!(s, "state_dim {}", exp.state_dim());
    let _ = writeln!(s, "order {}", set.max_order());
    let _ = writeln!(s, "terms {}", set.len());
    for idx in set.indices() {
        s.push_str("index");
        for a in &idx.0 {
            let _ = write!(s, " {a}");
        }
        s.push('\n');
    }
    for r in 0..exp.state_dim() {
        write_row(s, "coeff", exp.coeffs().row(r).iter());
    }
    if let BasisKind::MgsOrthonormal { transform, .. } = exp.basis() {
        for r in 0..transform.nrows() {
            write_row(s, "transform", transform.row(r).iter());
        }
    }
    if let Some(anchor) = exp.basis().anchor() {
        let _ = writeln!(s, "anchor");
        write_block(anchor, s);
    }
    let _ = writeln!(s, "end");
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<&'a str> {
        loop {
            match self.inner.next() {
                Some((i, l)) => {
                    self.line = i + 1;
                    let t = l.trim();
                    if !t.is_empty() && !t.starts_with('#') {
                        return Ok(t);
                    }
                }
                None => return Err(self.err("unexpected end of input")),
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn tagged(&mut self, tag: &str) -> Result<Vec<&'a str>> {
        let l = self.next_line()?;
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some(t) if t == tag => Ok(parts.collect()),
            _ => Err(self.err(format!("expected `{tag}`, found `{l}`"))),
        }
    }

    fn usize_field(&mut self, tag: &str) -> Result<usize> {
        let v = self.tagged(tag)?;
        match v.as_slice() {
            [x] => x
                .parse()
                .map_err(|_| self.err(format!("bad integer for `{tag}`"))),
            _ => Err(self.err(format!("`{tag}` takes one value"))),
        }
    }

    fn floats(&mut self, tag: &str, n: usize) -> Result<Vec<f64>> {
        let v = self.tagged(tag)?;
        if v.len() != n {
            return Err(self.err(format!("`{tag}` expects {n} values, found {}", v.len())));
        }
        v.iter()
            .map(|x| {
                x.parse::<f64>()
                    .map_err(|_| self.err(format!("bad float `{x}`")))
            })
            .collect()
    }
}

pub(super) fn read_expansion(text: &str) -> Result<PCExpansion> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    read_block(&mut lines)
}

fn read_block(lines: &mut Lines<'_>) -> Result<PCExpansion> {
    let version = lines.usize_field("pce")?;
    if version != 1 {
        return Err(lines.err(format!("unsupported format version {version}")));
    }
    let kind = match lines.tagged("basis")?.as_slice() {
        [k] => k.to_string(),
        _ => return Err(lines.err("`basis` takes one value")),
    };
    let germ_dim = lines.usize_field("germ_dim")?;
    let index_dim = lines.usize_field("index_dim")?;
    let state_dim = lines.usize_field("state_dim")?;
    let order = lines.usize_field("order")?;
    let terms = lines.usize_field("terms")?;
    let mut indices = Vec::with_capacity(terms);
    for _ in 0..terms {
        let v = lines.tagged("index")?;
        if v.len() != index_dim {
            return Err(lines.err("index length does not match index_dim"));
        }
        let idx: std::result::Result<Vec<u32>, _> = v.iter().map(|x| x.parse()).collect();
        indices.push(MultiIndex(
            idx.map_err(|_| lines.err("bad multi-index entry"))?,
        ));
    }
    let set = MultiIndexSet::from_indices(index_dim, indices)?;
    if set.max_order() as usize != order {
        return Err(lines.err("declared order does not match index list"));
    }
    let mut coeffs = DMatrix::zeros(state_dim, terms);
    for r in 0..state_dim {
        let row = lines.floats("coeff", terms)?;
        for (c, v) in row.into_iter().enumerate() {
            coeffs[(r, c)] = v;
        }
    }
    let basis = match kind.as_str() {
        "hermite" => BasisKind::Hermite,
        "nmap" => {
            lines.tagged("anchor")?;
            let anchor = Arc::new(read_block(lines)?);
            BasisKind::NmapMonomial { anchor }
        }
        "mgs" => {
            let mut transform = DMatrix::zeros(terms, terms);
            for r in 0..terms {
                let row = lines.floats("transform", terms)?;
                for (c, v) in row.into_iter().enumerate() {
                    transform[(r, c)] = v;
                }
            }
            lines.tagged("anchor")?;
            let anchor = Arc::new(read_block(lines)?);
            BasisKind::MgsOrthonormal { anchor, transform }
        }
        other => return Err(lines.err(format!("unknown basis `{other}`"))),
    };
    lines.tagged("end")?;
    let exp = PCExpansion::new(coeffs, basis, set)?;
    if exp.germ_dim() != germ_dim {
        return Err(lines.err("declared germ_dim does not match basis"));
    }
    Ok(exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pce::total_degree_index_set;

    fn awkward(r: usize, c: usize) -> f64 {
        let v = ((r * 31 + c * 17) as f64).sin() * 1e-3 + (c as f64) / 3.0;
        if c.is_multiple_of(5) {
            v * 1e-300
        } else {
            v
        }
    }

    #[test]
    fn hermite_round_trip_is_bit_exact() {
        let set = total_degree_index_set(3, 3).unwrap();
        let e = PCExpansion::hermite(DMatrix::from_fn(2, set.len(), awkward), set).unwrap();
        let back = PCExpansion::from_text(&e.to_text()).unwrap();
        assert_eq!(back.coeffs(), e.coeffs());
        assert_eq!(back.index_set(), e.index_set());
        assert_eq!(back.to_text(), e.to_text());
    }

    #[test]
    fn nested_round_trip() {
        let set = total_degree_index_set(2, 1).unwrap();
        let anchor =
            Arc::new(PCExpansion::hermite(DMatrix::from_fn(2, set.len(), awkward), set).unwrap());
        let mono = total_degree_index_set(2, 2).unwrap();
        let nmap = PCExpansion::new(
            DMatrix::from_fn(1, mono.len(), awkward),
            BasisKind::NmapMonomial {
                anchor: anchor.clone(),
            },
            mono.clone(),
        )
        .unwrap();
        let mgs = PCExpansion::new(
            DMatrix::from_fn(2, mono.len(), awkward),
            BasisKind::MgsOrthonormal {
                anchor: anchor.clone(),
                transform: DMatrix::from_fn(mono.len(), mono.len(), |r, c| {
                    if r <= c {
                        awkward(r, c) + 1.0
                    } else {
                        0.0
                    }
                }),
            },
            mono.clone(),
        )
        .unwrap();
        let nested = PCExpansion::new(
            DMatrix::from_fn(1, mono.len(), awkward),
            BasisKind::NmapMonomial {
                anchor: Arc::new(mgs.clone()),
            },
            mono,
        )
        .unwrap();
        for e in [nmap, mgs, nested] {
            let text = e.to_text();
            let back = PCExpansion::from_text(&text).unwrap();
            assert_eq!(back.to_text(), text);
            let xi = [0.3, -1.2];
            assert_eq!(back.eval(&xi).unwrap(), e.eval(&xi).unwrap());
        }
    }

    #[test]
    fn malformed_input_reports_line() {
        let set = total_degree_index_set(1, 1).unwrap();
        let e = PCExpansion::hermite(DMatrix::from_row_slice(1, 2, &[1.0, 2.0]), set).unwrap();
        let text = e.to_text().replace("coeff 1.0 2.0", "coeff 1.0 x");
        match PCExpansion::from_text(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 10),
            other => panic!("unexpected {other:?}"),
        }
    }
}
