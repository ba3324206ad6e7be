//! Parameter estimation from count records.

pub mod baum_welch;
pub mod bayes;
pub mod dwell;
pub mod hybrid;
pub mod optimize;

pub use baum_welch::{baum_welch, bw_joint, bw_reestimate, transition_table, BaumWelchOptions, RateEstimate, TransitionTable};
pub use bayes::{bayes_omega, uniform_grid, BayesOptions, LikelihoodGrid, LikelihoodSnapshot};
pub use dwell::{
    dwell_pdf, empty_rate_mle, extract_dwells, extract_dwells_from, fit_dwell_histogram, fit_occupied, DwellFit,
    DwellHistogram, DwellShape, OccupiedFit,
};
pub use hybrid::{hybrid_estimate, HybridEstimate, HybridOptions, HybridStep};
