//! Close-out cash flows, CVA, exposure profiles and spread adjustments.

mod closeout;
mod engine;

pub use closeout::{closeout_cashflow, pfe_sample, risky_payment, uncollateralized_mtm, CloseoutLeg, CloseoutTerms};
pub use engine::{
    group_counts, CaseReport, Engine, ExposureReport, FlatnessReport, ForwardPoint, ModelSpec, PathSample,
    ProfileBucket, SpreadReport,
};
