use super::{Atom, Element, Molecule};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum XyzError {
    #[error("line {0}: expected an atom count")]
    BadCount(usize),
    #[error("line {0}: expected `El x y z`")]
    BadRow(usize),
    #[error("line {line}: unknown element symbol {symbol:?}")]
    UnknownElement { line: usize, symbol: String },
    #[error("frame starting at line {0} is truncated")]
    Truncated(usize),
}

/// Reads one or more concatenated XYZ frames. Molecules carry no bonds.
pub fn parse_xyz(text: &str) -> Result<Vec<Molecule>, XyzError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::new();
    let mut k = 0;
    while k < lines.len() {
        if lines[k].trim().is_empty() {
            k += 1;
            continue;
        }
        let start = k + 1;
        let n: usize = lines[k].trim().parse().map_err(|_| XyzError::BadCount(start))?;
        if k + 2 + n > lines.len() {
            return Err(XyzError::Truncated(start));
        }
        let mut atoms = Vec::with_capacity(n);
        for (row, line) in lines[k + 2..k + 2 + n].iter().enumerate() {
            let line_no = k + 3 + row;
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() < 4 {
                return Err(XyzError::BadRow(line_no));
            }
            let element = Element::from_symbol(t[0]).ok_or_else(|| XyzError::UnknownElement {
                line: line_no,
                symbol: t[0].to_string(),
            })?;
            let mut pos = [0.0; 3];
            for (c, tok) in pos.iter_mut().zip(&t[1..4]) {
                *c = tok
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or(XyzError::BadRow(line_no))?;
            }
            atoms.push(Atom::new(element, pos));
        }
        out.push(Molecule::new(atoms, Vec::new()).expect("bondless molecule with finite positions"));
        k += 2 + n;
    }
    Ok(out)
}
