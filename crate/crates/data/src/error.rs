use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("geometry error: {0}")]
    Geom(#[from] atomgen_geom::GeomError),

    #[error("XYZ parse error at line {line}: {reason}")]
    Xyz { line: usize, reason: String },

    #[error("CIF parse error: {reason}")]
    Cif { reason: String },

    #[error("JSONL schema violation at line {line}: {reason}")]
    Jsonl { line: usize, reason: String },

    #[error("record {id:?} has {n_atoms} atoms, exceeding N_max = {n_max}")]
    TooManyAtoms {
        id: String,
        n_atoms: usize,
        n_max: usize,
    },

    #[error("no records with class label {class:?}")]
    EmptyClass { class: String },

    #[error("invalid configuration: {reason}")]
    Config { reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
