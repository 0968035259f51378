use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("operator of {requested} entries exceeds the bound of {limit}")]
    Size { requested: usize, limit: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("sampling rate {requested} unreachable: closest mask fraction is {achieved}")]
    UnreachableRate { requested: f64, achieved: f64 },
    #[error("sigma {sigma} outside denoiser range [{lo}, {hi}]")]
    SigmaRange { sigma: f64, lo: f64, hi: f64 },
    #[error("denoiser `{0}` has no analytic divergence")]
    Capability(&'static str),
    #[error("non-finite values at D-AMP iteration {iteration}")]
    Divergence { iteration: usize },
    #[error("SURE is undefined at sigma = 0")]
    DegenerateSigma,
    #[error("curation failed: {0}")]
    Curation(String),
    #[error("non-finite training loss at epoch {epoch}")]
    TrainingDivergence { epoch: usize },
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape {
            what,
            expected,
            got,
        })
    }
}
