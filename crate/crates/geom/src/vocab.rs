use crate::GeomError;

/// Reserved padding index; never a real atom.
pub const PAD_INDEX: usize = 0;
/// Reserved corruption token used by denoising training; never a decoded output.
pub const MASK_INDEX: usize = 101;
/// Total class count for atom-type heads: padding + 100 elements + MASK.
pub const VOCAB_SIZE: usize = 102;

/// Element symbols for indices 1..=100 (H through Fm).
const SYMBOLS: [&str; 100] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm",
];

/// Bijective symbol <-> index map over the fixed 100-element alphabet, with the
/// two reserved indices (0 = padding, 101 = MASK) outside the element range.
#[derive(Debug, Clone, Copy, Default)]
pub struct AtomVocabulary;

impl AtomVocabulary {
    pub fn new() -> Self {
        AtomVocabulary
    }

    /// Element index for a symbol, case-sensitive ("Na", not "NA").
    pub fn index(&self, symbol: &str) -> Result<usize, GeomError> {
        SYMBOLS
            .iter()
            .position(|&s| s == symbol)
            .map(|p| p + 1)
            .ok_or_else(|| GeomError::UnknownElement {
                symbol: symbol.to_string(),
            })
    }

    /// Symbol for an element index in 1..=100. Reserved indices are rejected:
    /// padding and MASK never name an element.
    pub fn symbol(&self, index: usize) -> Result<&'static str, GeomError> {
        if (1..=SYMBOLS.len()).contains(&index) {
            Ok(SYMBOLS[index - 1])
        } else {
            Err(GeomError::BadAtomIndex { index })
        }
    }

    /// True for indices that denote real elements (excludes padding and MASK).
    pub fn is_element(&self, index: usize) -> bool {
        (1..=SYMBOLS.len()).contains(&index)
    }

    pub fn n_elements(&self) -> usize {
        SYMBOLS.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bijective() {
        let v = AtomVocabulary::new();
        for i in 1..=100 {
            let s = v.symbol(i).unwrap();
            assert_eq!(v.index(s).unwrap(), i);
        }
    }

    #[test]
    fn known_indices() {
        let v = AtomVocabulary::new();
        assert_eq!(v.index("H").unwrap(), 1);
        assert_eq!(v.index("C").unwrap(), 6);
        assert_eq!(v.index("Na").unwrap(), 11);
        assert_eq!(v.index("Cl").unwrap(), 17);
        assert_eq!(v.index("Fm").unwrap(), 100);
    }

    #[test]
    fn reserved_indices_are_not_elements() {
        let v = AtomVocabulary::new();
        assert!(v.symbol(PAD_INDEX).is_err());
        assert!(v.symbol(MASK_INDEX).is_err());
        assert!(!v.is_element(PAD_INDEX));
        assert!(!v.is_element(MASK_INDEX));
        assert!(v.index("Xx").is_err());
    }
}
