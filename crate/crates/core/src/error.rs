use thiserror::Error;

/// A parameter violated the invariant of the type it belongs to.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{name} must {constraint} (got {value})")]
pub struct SpecError {
    pub name: &'static str,
    pub constraint: &'static str,
    pub value: f64,
}

impl SpecError {
    pub(crate) fn new(name: &'static str, constraint: &'static str, value: f64) -> Self {
        Self { name, constraint, value }
    }
}

pub(crate) fn ensure(
    ok: bool,
    name: &'static str,
    constraint: &'static str,
    value: f64,
) -> Result<(), SpecError> {
    if ok {
        Ok(())
    } else {
        Err(SpecError::new(name, constraint, value))
    }
}
