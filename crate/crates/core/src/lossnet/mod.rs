//! Loss network: the free rectangle process, clans of ancestors, the
//! trimming algorithms and coupled conditioned slices.

mod clan;
mod mu;
mod palm;
mod slices;
mod trim;
mod types;
mod window;

pub use clan::{
    clan_statistics, sample_projected_clan, BadPointConfig, Clan, ClanConfig, ClanNode,
    ClanStatistics, SigmaPool,
};
pub use mu::{
    trim_i_mu, validate_rate, BirthRate, ProductRate, RateReport, SoftExclusion, UnitRate,
};
pub use palm::{sample_common_part, PalmModel, PalmSpec, PalmWindow};
pub use slices::{coupled_conditioned_slices, CoupledSlices, SliceOptions};
pub use trim::{
    completes_pattern, kept_set_consistent, trim_i, trim_zero_lambda, Label, Realization,
    TrimOutcome, Trimmer,
};
pub use types::{Occupation, PatternSpec, ProjectedMark, Rect, RectId};
pub use window::{sample_free_window, FreeWindow, WindowSpec};
