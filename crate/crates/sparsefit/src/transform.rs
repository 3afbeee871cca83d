use chrono::{Datelike, Duration, Weekday};
use serde::{Deserialize, Serialize};

use crate::table::Column;
use crate::{DataTable, Error, Scalar};

/// Statistic computed by a rolling-window transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RollingStat {
    Median,
    Mean,
    Sum,
}

/// A derived-column recipe applied to a table before encoding.
///
/// Transforms are pure: they return a new table and are re-applied verbatim
/// when a fitted pipeline scores fresh rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TableTransform {
    /// Extracts `<column>_dow` (mon..sun) and `<column>_holiday` (yes/no)
    /// from a timestamp column. `holidays` lists fixed (month, day) dates.
    Calendar {
        column: String,
        holidays: Vec<(u32, u32)>,
    },
    /// Per-entity aggregate of `value` over rows whose `time` falls within
    /// `window_days` strictly before the row's own time.
    Rolling {
        entity: String,
        time: String,
        value: String,
        window_days: u32,
        stat: RollingStat,
        output: String,
    },
    /// Replaces the designated target `y` with `log(1 + y)`; the fitted model
    /// records the inverse so reports can show original-scale values.
    LogTarget,
}

/// Default fixed-date holidays for [`TableTransform::Calendar`].
pub fn default_holidays() -> Vec<(u32, u32)> {
    vec![(1, 1), (7, 4), (12, 25)]
}

fn weekday_name(w: Weekday) -> &'static str {
    match w {
        Weekday::Mon => "mon",
        Weekday::Tue => "tue",
        Weekday::Wed => "wed",
        Weekday::Thu => "thu",
        Weekday::Fri => "fri",
        Weekday::Sat => "sat",
        Weekday::Sun => "sun",
    }
}

/// Median of a slice (mean of the two middle values for even lengths).
pub fn median<F: Scalar>(values: &[F]) -> Option<F> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        Some(v[n / 2])
    } else {
        let two = F::from_f64(2.0).unwrap();
        Some((v[n / 2 - 1] + v[n / 2]) / two)
    }
}

fn rolling_stat<F: Scalar>(stat: RollingStat, values: &[F]) -> Option<F> {
    match stat {
        RollingStat::Median => median(values),
        RollingStat::Mean => {
            if values.is_empty() {
                None
            } else {
                let n = F::from_usize(values.len()).unwrap();
                Some(values.iter().copied().sum::<F>() / n)
            }
        }
        RollingStat::Sum => {
            if values.is_empty() {
                None
            } else {
                Some(values.iter().copied().sum())
            }
        }
    }
}

/// Applies one transform, returning the extended (or target-rewritten) table.
pub fn apply_table_transform<F: Scalar>(
    table: &DataTable<F>,
    transform: &TableTransform,
) -> Result<DataTable<F>, Error> {
    let mut out = table.clone();
    match transform {
        TableTransform::Calendar { column, holidays } => {
            let times = table.time_col(column)?;
            let dow: Vec<Option<String>> = times
                .iter()
                .map(|t| t.map(|t| weekday_name(t.weekday()).to_string()))
                .collect();
            let hol: Vec<Option<String>> = times
                .iter()
                .map(|t| {
                    t.map(|t| {
                        let is_hol = holidays.contains(&(t.month(), t.day()));
                        if is_hol { "yes" } else { "no" }.to_string()
                    })
                })
                .collect();
            out.add_str(&format!("{column}_dow"), dow)?;
            out.add_str(&format!("{column}_holiday"), hol)?;
        }
        TableTransform::Rolling {
            entity,
            time,
            value,
            window_days,
            stat,
            output,
        } => {
            let entities = table.str_col(entity)?;
            let times = table.time_col(time)?;
            let values = table.num(value)?;
            let window = Duration::days(i64::from(*window_days));
            let mut result: Vec<Option<F>> = vec![None; table.rows()];
            // Group row indices by entity, then scan each group in time order.
            let mut groups: std::collections::BTreeMap<&str, Vec<usize>> = Default::default();
            for (i, e) in entities.iter().enumerate() {
                if let Some(e) = e {
                    groups.entry(e.as_str()).or_default().push(i);
                }
            }
            for rows in groups.values() {
                for &i in rows {
                    let Some(t_i) = times[i] else { continue };
                    let mut window_vals = Vec::new();
                    for &j in rows {
                        let (Some(t_j), Some(v_j)) = (times[j], values[j]) else {
                            continue;
                        };
                        if t_j < t_i && t_j >= t_i - window {
                            window_vals.push(v_j);
                        }
                    }
                    result[i] = rolling_stat(*stat, &window_vals);
                }
            }
            out.add_num(output, result)?;
        }
        TableTransform::LogTarget => {
            let name = table.target().ok_or(Error::NoTarget)?.to_string();
            let ys = table.num(&name)?;
            let mut logged = Vec::with_capacity(ys.len());
            for (row, y) in ys.iter().enumerate() {
                match y {
                    Some(y) if *y < F::zero() => {
                        return Err(Error::InvalidParam(format!(
                            "log target requires non-negative values, row {row} has {y}"
                        )))
                    }
                    Some(y) => logged.push(Some(y.ln_1p())),
                    None => logged.push(None),
                }
            }
            out.replace_column(&name, Column::Num(logged))?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    #[test]
    fn median_of_small_sets() {
        assert_eq!(median(&[2.0, 4.0, 6.0]), Some(4.0));
        assert_eq!(median(&[4.0, 2.0, 6.0]), Some(4.0));
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), Some(2.5));
        assert_eq!(median::<f64>(&[]), None);
    }

    #[test]
    fn log_target_maps_zero_to_zero() {
        let mut t: DataTable<f64> = DataTable::new();
        t.add_num("y", vec![Some(0.0), Some(1.0_f64.exp() - 1.0)])
            .unwrap();
        t.set_target("y").unwrap();
        let out = apply_table_transform(&t, &TableTransform::LogTarget).unwrap();
        let y = out.num("y").unwrap();
        assert_eq!(y[0], Some(0.0));
        assert!((y[1].unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_target_rejects_negative_values() {
        let mut t: DataTable<f64> = DataTable::new();
        t.add_num("y", vec![Some(-1.0)]).unwrap();
        t.set_target("y").unwrap();
        assert!(apply_table_transform(&t, &TableTransform::LogTarget).is_err());
    }

    #[test]
    fn calendar_extracts_weekday_and_holiday() {
        let mut t: DataTable<f64> = DataTable::new();
        t.add_time(
            "ts",
            vec![
                Some(Utc.with_ymd_and_hms(2018, 5, 20, 9, 0, 0).unwrap()),
                Some(Utc.with_ymd_and_hms(2018, 12, 25, 0, 0, 0).unwrap()),
                None,
            ],
        )
        .unwrap();
        let out = apply_table_transform(
            &t,
            &TableTransform::Calendar {
                column: "ts".into(),
                holidays: default_holidays(),
            },
        )
        .unwrap();
        let dow = out.str_col("ts_dow").unwrap();
        assert_eq!(dow[0].as_deref(), Some("sun"));
        assert_eq!(dow[1].as_deref(), Some("tue"));
        assert_eq!(dow[2], None);
        let hol = out.str_col("ts_holiday").unwrap();
        assert_eq!(hol[0].as_deref(), Some("no"));
        assert_eq!(hol[1].as_deref(), Some("yes"));
    }

    #[test]
    fn rolling_median_uses_prior_window_per_entity() {
        let mut t: DataTable<f64> = DataTable::new();
        let day = |d: u32| Some(Utc.with_ymd_and_hms(2018, 5, d, 12, 0, 0).unwrap());
        t.add_str(
            "host",
            vec![
                Some("a".into()),
                Some("a".into()),
                Some("a".into()),
                Some("b".into()),
            ],
        )
        .unwrap();
        t.add_time("ts", vec![day(1), day(2), day(3), day(3)]).unwrap();
        t.add_num("v", vec![Some(2.0), Some(4.0), Some(6.0), Some(100.0)])
            .unwrap();
        let out = apply_table_transform(
            &t,
            &TableTransform::Rolling {
                entity: "host".into(),
                time: "ts".into(),
                value: "v".into(),
                window_days: 7,
                stat: RollingStat::Median,
                output: "v_med".into(),
            },
        )
        .unwrap();
        let m = out.num("v_med").unwrap();
        assert_eq!(m[0], None); // nothing strictly before day 1
        assert_eq!(m[1], Some(2.0));
        assert_eq!(m[2], Some(3.0)); // median of {2, 4}
        assert_eq!(m[3], None); // other entity has no prior rows
    }
}
