//! Forecast scores, the multi-station forecast archive and report emission.

mod aggregate;
mod archive;
mod report;
mod scores;

pub use aggregate::{
    per_station_hourly_median, per_station_summary, station_scores, unified_hourly, unified_summary, BestCounts,
    HourlyScores, MedianScores, Metric, PerStationSummary, SeriesStats, StationHourlyMedian, StationMedianRow,
    StationRow, StationScores, UnifiedSummary, NSE_THRESHOLD,
};
pub use archive::{
    read_predictions, write_predictions, ForecastArchive, PredictionFile, StationForecasts, PREDICTIONS_HEADER,
};
pub use report::{
    build_report, write_report, ModelReport, Report, HOURLY_HEADER, REPORT_FILES, TABLE3_HEADER, TABLE4_HEADER,
    TABLE5_HEADER, TABLE6_HEADER, TABLE7_HEADER,
};
pub use scores::{kge, median, nrmse, nse, pearson_r, Kge};
