use thiserror::Error;

use crate::corpus::CorpusError;
use crate::dtw::DtwError;
use crate::eval::EvalError;
use crate::features::FeatureError;
use crate::nn::NnError;
use crate::sae::SaeError;
use crate::spotter::SpotterError;

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Sae(#[from] SaeError),
    #[error(transparent)]
    Dtw(#[from] DtwError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Spotter(#[from] SpotterError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
