use crate::DataError;
use atomgen_geom::{
    lattice_matrix_to_params, lattice_params_to_matrix, wrap_fractional, AtomVocabulary,
    AtomicSystem, LatticeParams,
};
use std::collections::HashMap;
use std::fmt::Write as _;

/// Parse the CIF subset used for crystal import: the six cell tags plus an
/// atom_site loop with `_atom_site_type_symbol` and `_atom_site_fract_{x,y,z}`
/// columns. Fractional coordinates are wrapped to [0,1); Cartesian coordinates
/// are derived from the cell.
pub fn parse_cif_lite(text: &str) -> Result<AtomicSystem, DataError> {
    let vocab = AtomVocabulary::new();
    let mut tags: HashMap<String, String> = HashMap::new();
    let mut atoms: Vec<(usize, [f64; 3])> = Vec::new();

    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i].trim();
        if line.starts_with("loop_") {
            // Collect the column headers of this loop.
            let mut cols = Vec::new();
            i += 1;
            while i < lines.len() && lines[i].trim().starts_with('_') {
                cols.push(lines[i].trim().to_string());
                i += 1;
            }
            let col_idx = |name: &str| cols.iter().position(|c| c == name);
            let sym = col_idx("_atom_site_type_symbol");
            let fx = col_idx("_atom_site_fract_x");
            let fy = col_idx("_atom_site_fract_y");
            let fz = col_idx("_atom_site_fract_z");
            let is_site_loop = sym.is_some() || fx.is_some();
            // Consume data rows whether or not this is the loop we want.
            while i < lines.len() {
                let row = lines[i].trim();
                if row.is_empty() || row.starts_with('_') || row.starts_with("loop_")
                    || row.starts_with("data_") || row.starts_with('#')
                {
                    break;
                }
                if is_site_loop {
                    let (sym, fx, fy, fz) = match (sym, fx, fy, fz) {
                        (Some(s), Some(x), Some(y), Some(z)) => (s, x, y, z),
                        _ => {
                            return Err(DataError::Cif {
                                reason: "atom_site loop missing type_symbol or fract columns"
                                    .to_string(),
                            })
                        }
                    };
                    let fields: Vec<&str> = row.split_whitespace().collect();
                    let need = sym.max(fx).max(fy).max(fz);
                    if fields.len() <= need {
                        return Err(DataError::Cif {
                            reason: format!("atom_site row has too few fields: {row:?}"),
                        });
                    }
                    let symbol = strip_charge(fields[sym]);
                    let index = vocab.index(&symbol).map_err(|_| DataError::Cif {
                        reason: format!("unknown element {:?}", fields[sym]),
                    })?;
                    let coord = [
                        parse_number(fields[fx])?,
                        parse_number(fields[fy])?,
                        parse_number(fields[fz])?,
                    ];
                    atoms.push((index, coord));
                }
                i += 1;
            }
        } else {
            if let Some(rest) = line.strip_prefix('_') {
                let mut parts = rest.splitn(2, char::is_whitespace);
                if let (Some(key), Some(value)) = (parts.next(), parts.next()) {
                    tags.insert(format!("_{key}"), value.trim().to_string());
                }
            }
            i += 1;
        }
    }

    let cell_tag = |name: &str| -> Result<f64, DataError> {
        let v = tags.get(name).ok_or_else(|| DataError::Cif {
            reason: format!("missing cell tag {name}"),
        })?;
        parse_number(v)
    };
    let params = LatticeParams::new(
        [
            cell_tag("_cell_length_a")?,
            cell_tag("_cell_length_b")?,
            cell_tag("_cell_length_c")?,
        ],
        [
            cell_tag("_cell_angle_alpha")?,
            cell_tag("_cell_angle_beta")?,
            cell_tag("_cell_angle_gamma")?,
        ],
    );
    let lattice = lattice_params_to_matrix(&params)?;

    if atoms.is_empty() {
        return Err(DataError::Cif {
            reason: "no atom_site loop found".to_string(),
        });
    }
    let atom_types: Vec<usize> = atoms.iter().map(|(t, _)| *t).collect();
    let frac = wrap_fractional(&atoms.iter().map(|(_, f)| *f).collect::<Vec<_>>());
    Ok(AtomicSystem::crystal(atom_types, frac, lattice)?)
}

/// Serialize a periodic system in the same CIF subset the parser reads.
pub fn write_cif_lite(system: &AtomicSystem, name: &str) -> Result<String, DataError> {
    let vocab = AtomVocabulary::new();
    let params = lattice_matrix_to_params(&system.lattice)?;
    let mut out = String::new();
    let _ = writeln!(out, "data_{name}");
    let _ = writeln!(out, "_cell_length_a {:.8}", params.lengths[0]);
    let _ = writeln!(out, "_cell_length_b {:.8}", params.lengths[1]);
    let _ = writeln!(out, "_cell_length_c {:.8}", params.lengths[2]);
    let _ = writeln!(out, "_cell_angle_alpha {:.8}", params.angles_deg[0]);
    let _ = writeln!(out, "_cell_angle_beta {:.8}", params.angles_deg[1]);
    let _ = writeln!(out, "_cell_angle_gamma {:.8}", params.angles_deg[2]);
    let _ = writeln!(out, "loop_");
    let _ = writeln!(out, "_atom_site_type_symbol");
    let _ = writeln!(out, "_atom_site_fract_x");
    let _ = writeln!(out, "_atom_site_fract_y");
    let _ = writeln!(out, "_atom_site_fract_z");
    for (t, f) in system.atom_types.iter().zip(&system.frac_coords) {
        let symbol = vocab.symbol(*t)?;
        let _ = writeln!(out, "{symbol} {:.8} {:.8} {:.8}", f[0], f[1], f[2]);
    }
    Ok(out)
}

/// Numbers in CIF may carry an uncertainty suffix like `5.4310(2)`.
fn parse_number(token: &str) -> Result<f64, DataError> {
    let cleaned = match token.find('(') {
        Some(p) => &token[..p],
        None => token,
    };
    let v: f64 = cleaned.parse().map_err(|_| DataError::Cif {
        reason: format!("bad numeric value {token:?}"),
    })?;
    if !v.is_finite() {
        return Err(DataError::Cif {
            reason: format!("non-finite value {token:?}"),
        });
    }
    Ok(v)
}

/// Site symbols sometimes carry oxidation suffixes like `Na+` or `O2-`.
fn strip_charge(symbol: &str) -> String {
    symbol
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use atomgen_geom::frac_to_cart;

    const NACL: &str = "data_nacl
_cell_length_a 5.64
_cell_length_b 5.64
_cell_length_c 5.64
_cell_angle_alpha 90.0
_cell_angle_beta 90.0
_cell_angle_gamma 90.0
loop_
_atom_site_type_symbol
_atom_site_fract_x
_atom_site_fract_y
_atom_site_fract_z
Na 0.0 0.0 0.0
Cl 0.5 0.5 0.5
";

    #[test]
    fn nacl_motif() {
        let sys = parse_cif_lite(NACL).unwrap();
        assert_eq!(sys.n_atoms(), 2);
        assert_eq!(sys.atom_types, vec![11, 17]);
        assert!(sys.periodic);
        for i in 0..3 {
            assert!((sys.lattice[i][i] - 5.64).abs() < 1e-12);
        }
    }

    #[test]
    fn frac_exactly_one_wraps_to_zero() {
        let text = NACL.replace("Cl 0.5 0.5 0.5", "Cl 1.0 0.5 0.5");
        let sys = parse_cif_lite(&text).unwrap();
        assert_eq!(sys.frac_coords[1][0], 0.0);
    }

    #[test]
    fn derived_cart_consistent_with_frac() {
        let sys = parse_cif_lite(NACL).unwrap();
        let want = frac_to_cart(&sys.lattice, &sys.frac_coords).unwrap();
        for (a, b) in sys.cart_coords.iter().zip(&want) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn missing_cell_tag() {
        let text = NACL.replace("_cell_length_b 5.64\n", "");
        assert!(matches!(
            parse_cif_lite(&text),
            Err(DataError::Cif { .. })
        ));
    }

    #[test]
    fn missing_fract_column() {
        let text = NACL
            .replace("_atom_site_fract_z\n", "")
            .replace("Na 0.0 0.0 0.0", "Na 0.0 0.0")
            .replace("Cl 0.5 0.5 0.5", "Cl 0.5 0.5");
        assert!(parse_cif_lite(&text).is_err());
    }

    #[test]
    fn unknown_element_rejected() {
        let text = NACL.replace("Na 0.0 0.0 0.0", "Qq 0.0 0.0 0.0");
        assert!(parse_cif_lite(&text).is_err());
    }

    #[test]
    fn uncertainty_suffix_and_charge_handled() {
        let text = NACL
            .replace("_cell_length_a 5.64", "_cell_length_a 5.64(2)")
            .replace("Na 0.0 0.0 0.0", "Na+ 0.0 0.0 0.0");
        let sys = parse_cif_lite(&text).unwrap();
        assert_eq!(sys.atom_types[0], 11);
    }

    #[test]
    fn roundtrip_through_writer() {
        let sys = parse_cif_lite(NACL).unwrap();
        let text = write_cif_lite(&sys, "roundtrip").unwrap();
        let back = parse_cif_lite(&text).unwrap();
        assert_eq!(back.atom_types, sys.atom_types);
        for (a, b) in back.frac_coords.iter().zip(&sys.frac_coords) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-8);
            }
        }
    }
}
