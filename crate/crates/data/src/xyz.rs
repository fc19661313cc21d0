use crate::DataError;
use atomgen_geom::{AtomicSystem, AtomVocabulary};
use std::fmt::Write as _;

/// Parse a standard XYZ file: count line, comment line, then one
/// "Symbol x y z" line per atom. Always yields a non-periodic system.
pub fn parse_xyz(text: &str) -> Result<AtomicSystem, DataError> {
    let vocab = AtomVocabulary::new();
    let mut lines = text.lines().enumerate();

    let (_, count_line) = lines.next().ok_or(DataError::Xyz {
        line: 1,
        reason: "empty file".to_string(),
    })?;
    let n: usize = count_line.trim().parse().map_err(|_| DataError::Xyz {
        line: 1,
        reason: format!("malformed atom count {count_line:?}"),
    })?;
    if n == 0 {
        return Err(DataError::Xyz {
            line: 1,
            reason: "atom count must be >= 1".to_string(),
        });
    }
    lines.next(); // comment line

    let mut atom_types = Vec::with_capacity(n);
    let mut cart = Vec::with_capacity(n);
    for _ in 0..n {
        let (idx, line) = lines.next().ok_or_else(|| DataError::Xyz {
            line: n + 2,
            reason: format!("expected {n} atom lines, file ended early"),
        })?;
        let lineno = idx + 1;
        let mut parts = line.split_whitespace();
        let symbol = parts.next().ok_or_else(|| DataError::Xyz {
            line: lineno,
            reason: "missing element symbol".to_string(),
        })?;
        let index = vocab.index(symbol).map_err(|_| DataError::Xyz {
            line: lineno,
            reason: format!("unknown element {symbol:?}"),
        })?;
        let mut coord = [0.0f64; 3];
        for c in coord.iter_mut() {
            let tok = parts.next().ok_or_else(|| DataError::Xyz {
                line: lineno,
                reason: "expected 3 coordinates".to_string(),
            })?;
            *c = tok.parse().map_err(|_| DataError::Xyz {
                line: lineno,
                reason: format!("bad coordinate {tok:?}"),
            })?;
            if !c.is_finite() {
                return Err(DataError::Xyz {
                    line: lineno,
                    reason: format!("non-finite coordinate {tok:?}"),
                });
            }
        }
        atom_types.push(index);
        cart.push(coord);
    }

    Ok(AtomicSystem::molecule(atom_types, cart)?)
}

/// Serialize a non-periodic system as XYZ with 8 decimal places.
pub fn write_xyz(system: &AtomicSystem, comment: &str) -> Result<String, DataError> {
    let vocab = AtomVocabulary::new();
    let mut out = String::new();
    let _ = writeln!(out, "{}", system.n_atoms());
    let _ = writeln!(out, "{comment}");
    for (t, c) in system.atom_types.iter().zip(&system.cart_coords) {
        let symbol = vocab.symbol(*t)?;
        let _ = writeln!(out, "{symbol} {:.8} {:.8} {:.8}", c[0], c[1], c[2]);
    }
    Ok(out)
}
