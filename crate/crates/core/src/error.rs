use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: line {line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("dataset {0} contains no patterns")]
    EmptyDataset(String),

    #[error("no patterns carry a label in {0:?}")]
    EmptySelection(Vec<usize>),

    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{0} must not be empty")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite parameter produced by {0}")]
    NumericOverflow(&'static str),

    #[error("{units} units exceed the exact-enumeration limit of {limit}")]
    TooLarge { units: usize, limit: usize },

    #[error("relaxation did not reach a fixpoint within {0} sweeps")]
    NonConvergence(usize),

    #[error("variable index {index} out of range for {n_vars} variables")]
    IndexOutOfRange { index: usize, n_vars: usize },

    #[error("AIS log-weight became non-finite at rung {0}")]
    AisNonFinite(usize),

    #[error("no correctly classified memory candidates for class {0}")]
    EmptyMemories(usize),

    #[error("class pair {0:?} has no patterns in the test set")]
    PairAbsent((usize, usize)),

    #[error("remote sampler: {msg}")]
    Remote { msg: String, payload: Option<String> },

    #[error("epoch {epoch}: {source}")]
    Epoch {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("task {task}: {source}")]
    Task {
        task: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_epoch(self, epoch: usize) -> Self {
        Error::Epoch {
            epoch,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_task(self, task: usize) -> Self {
        Error::Task {
            task,
            source: Box::new(self),
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, got })
    }
}
