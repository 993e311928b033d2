// MDL SD file, V2000 connection-table subset.
//
// Only the counts line, atom block, bond block, "M  END" and "$$$$" record
// separators are interpreted. Charge, isotope and stereo columns are ignored
// on read and written as zeros.

use super::{Atom, Bond, BondOrder, Element, Molecule, MoleculeError};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct SdfError {
    /// 1-based line number in the input stream.
    pub line: usize,
    pub kind: SdfErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdfErrorKind {
    #[error("malformed counts line")]
    MalformedCounts,
    #[error("V3000 connection tables are not supported")]
    UnsupportedV3000,
    #[error("malformed atom line")]
    MalformedAtom,
    #[error("unknown element symbol {0:?}")]
    UnknownElement(String),
    #[error("malformed bond line")]
    MalformedBond,
    #[error("aromatic bonds unsupported (Kekulé form required)")]
    AromaticBond,
    #[error("unsupported bond order {0}")]
    UnsupportedBondOrder(u32),
    #[error("bond index {index} out of range (record has {n_atoms} atoms)")]
    BondIndexOutOfRange { index: usize, n_atoms: usize },
    #[error("record ends before the connection table is complete")]
    Truncated,
    #[error(transparent)]
    Molecule(#[from] MoleculeError),
}

/// Parses every record, stopping at the first malformed one.
pub fn parse_sdf(text: &str) -> Result<Vec<Molecule>, SdfError> {
    parse_sdf_records(text).into_iter().collect()
}

/// Parses every record independently so one bad record does not hide the rest.
pub fn parse_sdf_records(text: &str) -> Vec<Result<Molecule, SdfError>> {
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::new();
    let mut start = 0;
    while start < lines.len() {
        let end = lines[start..]
            .iter()
            .position(|l| l.trim_end() == "$$$$")
            .map(|p| start + p)
            .unwrap_or(lines.len());
        let record = &lines[start..end];
        if record.iter().any(|l| !l.trim().is_empty()) {
            out.push(parse_record(record, start + 1));
        }
        start = end + 1;
    }
    out
}

fn field(line: &str, from: usize, to: usize) -> Option<&str> {
    let to = to.min(line.len());
    line.get(from..to).map(str::trim)
}

fn parse_counts(line: &str) -> Option<(usize, usize)> {
    let fixed = field(line, 0, 3)
        .and_then(|a| a.parse().ok())
        .zip(field(line, 3, 6).and_then(|b| b.parse().ok()));
    fixed.or_else(|| {
        let mut tokens = line.split_whitespace();
        let a = tokens.next()?.parse().ok()?;
        let b = tokens.next()?.parse().ok()?;
        Some((a, b))
    })
}

fn parse_atom(line: &str) -> Result<Atom, SdfErrorKind> {
    let fixed = (|| {
        let x: f64 = field(line, 0, 10)?.parse().ok()?;
        let y: f64 = field(line, 10, 20)?.parse().ok()?;
        let z: f64 = field(line, 20, 30)?.parse().ok()?;
        let sym = field(line, 31, 34)?;
        (!sym.is_empty()).then_some(([x, y, z], sym.to_string()))
    })();
    let (pos, sym) = match fixed {
        Some(v) => v,
        None => {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() < 4 {
                return Err(SdfErrorKind::MalformedAtom);
            }
            let p = |s: &str| s.parse::<f64>().map_err(|_| SdfErrorKind::MalformedAtom);
            ([p(t[0])?, p(t[1])?, p(t[2])?], t[3].to_string())
        }
    };
    let element = Element::from_symbol(&sym).ok_or(SdfErrorKind::UnknownElement(sym))?;
    Ok(Atom::new(element, pos))
}

fn parse_bond(line: &str, n_atoms: usize) -> Result<Bond, SdfErrorKind> {
    let fixed = (|| {
        let i: usize = field(line, 0, 3)?.parse().ok()?;
        let j: usize = field(line, 3, 6)?.parse().ok()?;
        let o: u32 = field(line, 6, 9)?.parse().ok()?;
        Some((i, j, o))
    })();
    let (i, j, o) = match fixed {
        Some(v) => v,
        None => {
            let t: Vec<&str> = line.split_whitespace().collect();
            let parsed = (|| Some((t.first()?.parse().ok()?, t.get(1)?.parse().ok()?, t.get(2)?.parse().ok()?)))();
            parsed.ok_or(SdfErrorKind::MalformedBond)?
        }
    };
    for index in [i, j] {
        if index == 0 || index > n_atoms {
            return Err(SdfErrorKind::BondIndexOutOfRange { index, n_atoms });
        }
    }
    let order = match o {
        4 => return Err(SdfErrorKind::AromaticBond),
        1..=3 => BondOrder::from_value(o as u8).expect("order checked"),
        other => return Err(SdfErrorKind::UnsupportedBondOrder(other)),
    };
    Ok(Bond::new(i - 1, j - 1, order))
}

fn parse_record(lines: &[&str], first_line: usize) -> Result<Molecule, SdfError> {
    let err = |offset: usize, kind| SdfError {
        line: first_line + offset,
        kind,
    };
    let counts_line = *lines.get(3).ok_or_else(|| err(lines.len(), SdfErrorKind::Truncated))?;
    if counts_line.contains("V3000") {
        return Err(err(3, SdfErrorKind::UnsupportedV3000));
    }
    let (n_atoms, n_bonds) =
        parse_counts(counts_line).ok_or_else(|| err(3, SdfErrorKind::MalformedCounts))?;

    let mut atoms = Vec::with_capacity(n_atoms);
    for k in 0..n_atoms {
        let offset = 4 + k;
        let line = lines
            .get(offset)
            .ok_or_else(|| err(offset.min(lines.len()), SdfErrorKind::Truncated))?;
        atoms.push(parse_atom(line).map_err(|kind| err(offset, kind))?);
    }
    let mut bonds = Vec::with_capacity(n_bonds);
    for k in 0..n_bonds {
        let offset = 4 + n_atoms + k;
        let line = lines
            .get(offset)
            .ok_or_else(|| err(offset.min(lines.len()), SdfErrorKind::Truncated))?;
        bonds.push(parse_bond(line, n_atoms).map_err(|kind| err(offset, kind))?);
    }
    Molecule::new(atoms, bonds).map_err(|e| err(4 + n_atoms, e.into()))
}

/// Serialises molecules as V2000 records, each terminated by `$$$$`.
pub fn write_sdf(mols: &[Molecule]) -> String {
    let mut out = String::new();
    for (k, mol) in mols.iter().enumerate() {
        write_record(&mut out, &format!("mol_{k}"), mol);
    }
    out
}

fn write_record(out: &mut String, title: &str, mol: &Molecule) {
    // fmt::Write into a String cannot fail
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "  fieldmol          3D");
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:>3}{:>3}  0  0  0  0  0  0  0  0999 V2000",
        mol.len(),
        mol.bonds().len()
    );
    for a in mol.atoms() {
        let [x, y, z] = a.position.map(|c| if c.abs() < 5e-5 { 0.0 } else { c });
        let _ = writeln!(
            out,
            "{x:>10.4}{y:>10.4}{z:>10.4} {:<3} 0  0  0  0  0  0  0  0  0  0  0  0",
            a.element.symbol()
        );
    }
    for b in mol.bonds() {
        let _ = writeln!(
            out,
            "{:>3}{:>3}{:>3}  0  0  0  0",
            b.i + 1,
            b.j + 1,
            b.order.value()
        );
    }
    out.push_str("M  END\n$$$$\n");
}
