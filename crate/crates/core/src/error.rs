use thiserror::Error;

/// Errors surfaced by model construction, likelihood evaluation, and sampling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid covariate: {0}")]
    InvalidCovariate(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("horizon must be at least 1")]
    EmptyHorizon,

    #[error("record `{id}` has no observation triples")]
    NoObservations { id: String },

    #[error("record `{id}` has no observed adherence days")]
    NoObservedAdherence { id: String },

    #[error("numerically singular system")]
    NumericallySingular,

    #[error("record `{id}`: {source}")]
    Record {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("cannot initialize sampler: no finite starting point after {attempts} prior draws")]
    CannotInitialize { attempts: usize },

    #[error("mismatched parameter sets: {0}")]
    MismatchedParameters(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Attaches a record id to an error bubbling out of a per-patient computation.
    pub(crate) fn for_record(self, id: &str) -> Error {
        Error::Record {
            id: id.to_string(),
            source: Box::new(self),
        }
    }
}
