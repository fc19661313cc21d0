use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("singular lattice: |det| = {det:.3e} <= 1e-10")]
    SingularLattice { det: f64 },

    #[error("degenerate lattice: row {row} has zero length")]
    DegenerateRow { row: usize },

    #[error("lattice parameters are geometrically inconsistent: {reason}")]
    InconsistentParams { reason: String },

    #[error("Niggli reduction did not converge after {iterations} iterations")]
    NiggliNonConvergence { iterations: usize },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("invalid atomic system: {reason}")]
    InvalidSystem { reason: String },

    #[error("unknown element symbol {symbol:?}")]
    UnknownElement { symbol: String },

    #[error("atom type index {index} out of vocabulary range")]
    BadAtomIndex { index: usize },
}
