//! Ingestion, gap filling, splitting, normalization, windowing and the
//! synthetic catchment generator.

mod io;
mod norm;
pub mod sample;
mod split;
mod station;
mod synth;
mod windows;

pub use io::{
    load_metadata, load_series, load_station_csv, write_metadata, write_series, META_HEADER, SERIES_HEADER,
};
pub use norm::{fit_norm_stats, NormStats, ZScore};
pub use sample::{unify_input, ExtensionPolicy, UnifiedInput, WindowSample, DISCHARGE_COL};
pub use split::{make_split, validation_hours, SplitSpec, VAL_PERCENT};
pub use station::{fill_short_gaps, StationMeta, StationSeries, TimeRange};
pub use synth::{generate_synthetic_catchments, linear_reservoir, synthetic_start, MM_PER_HOUR_KM2_TO_CMS};
pub use windows::{admissible_anchors, assemble_windows};
