use crate::molecule::{BondOrder, Element};
use std::sync::OnceLock;

const RADII_CSV: &str = include_str!("../../data/covalent_radii.csv");

/// Identifier of the shipped radii table, stamped into output metadata.
pub const BOND_TABLE_VERSION: &str = "pyykko-covalent-radii-v1";

type Radii = [[Option<f64>; 3]; 8];

fn radii() -> &'static Radii {
    static TABLE: OnceLock<Radii> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table: Radii = [[None; 3]; 8];
        for line in RADII_CSV.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("element") {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let e = Element::from_symbol(cols[0]).expect("radii table lists known elements");
            for k in 0..3 {
                table[e as usize][k] = cols.get(k + 1).filter(|c| !c.is_empty()).map(|c| {
                    c.parse::<f64>().expect("radii table holds numbers") / 100.0
                });
            }
        }
        table
    })
}

/// Covalent radius (Å) of `e` for a bond of the given order, if tabulated.
pub fn covalent_radius(e: Element, order: BondOrder) -> Option<f64> {
    radii()[e as usize][order.value() as usize - 1]
}

/// Sum of covalent radii for a bond of `order` between `a` and `b`.
pub fn bond_length(a: Element, b: Element, order: BondOrder) -> Option<f64> {
    Some(covalent_radius(a, order)? + covalent_radius(b, order)?)
}

/// Longest tabulated bond length `L(a, b)` over all orders.
pub fn reference_bond_length(a: Element, b: Element) -> f64 {
    BondOrder::ALL
        .iter()
        .filter_map(|&o| bond_length(a, b, o))
        .fold(0.0, f64::max)
}
