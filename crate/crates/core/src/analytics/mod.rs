//! Fluid totals, goal status, cohort means and sleep-diary metrics, all
//! computed from committed answers in the event log.

mod fluid;
mod sleep;

pub use fluid::{
    remaining_today, FluidDaySummary, FluidLedger, FluidStatus, MeanPoint, Remaining, SessionVolume,
    FLUID_SUMMARY_HEADER,
};
pub use sleep::{anchor_night, derive_sleep, sleep_rows, SleepError, SleepFlag, SleepNight, SleepRow, SLEEP_SUMMARY_HEADER};

/// Writes rows as CSV with the given header.
pub fn write_csv<W, const N: usize>(out: W, header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> csv::Result<()>
where
    W: std::io::Write,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
