use thiserror::Error;

pub type Result<T, E = NumError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumError {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: non-finite value in input")]
    NonFinite { op: &'static str },
    #[error("{0}")]
    Contract(String),
    #[error("root does not depend on any tracked tensor")]
    EmptyRecord,
    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),
    #[error("loss is not deterministic: {first:e} then {second:e}")]
    NonDeterministic { first: f64, second: f64 },
}

impl NumError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        NumError::Contract(msg.into())
    }
}
