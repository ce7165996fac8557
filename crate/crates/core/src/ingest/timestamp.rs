//! `yyyy-mm-dd hh:mm:ss[.fff]` (UTC) to and from Unix seconds.

use crate::error::{Error, Result};

const SECS_PER_DAY: i64 = 86_400;

/// Days since 1970-01-01 for a proleptic Gregorian date.
pub(crate) fn days_from_civil(year: i64, month: u32, day: u32) -> i64 {
    let y = if month <= 2 { year - 1 } else { year };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let m = month as i64;
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + day as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

pub(crate) fn civil_from_days(days: i64) -> (i64, u32, u32) {
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let month = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    let year = yoe + era * 400 + i64::from(month <= 2);
    (year, month, day)
}

fn is_leap(year: i64) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

fn days_in_month(year: i64, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(year) => 29,
        _ => 28,
    }
}

fn fixed_digits(s: &str, n: usize) -> Option<u32> {
    if s.len() == n && s.bytes().all(|b| b.is_ascii_digit()) {
        s.parse().ok()
    } else {
        None
    }
}

/// Parses a UTC timestamp into seconds since the Unix epoch.
///
/// Accepts a space or `T` between date and time, an optional fractional
/// second of 1 to 9 digits and an optional trailing `Z`.
pub fn to_unix_timestamp(text: &str) -> Result<f64> {
    let fail = |reason| Error::Timestamp { text: text.to_string(), reason };
    let s = text.trim();
    let s = s.strip_suffix('Z').unwrap_or(s);
    let (date, time) = s
        .split_once([' ', 'T'])
        .ok_or_else(|| fail("expected \"yyyy-mm-dd hh:mm:ss.ms\""))?;

    let mut dp = date.split('-');
    let (Some(y), Some(mo), Some(d), None) = (dp.next(), dp.next(), dp.next(), dp.next()) else {
        return Err(fail("date must be yyyy-mm-dd"));
    };
    let year = fixed_digits(y, 4).ok_or_else(|| fail("bad year"))? as i64;
    let month = fixed_digits(mo, 2).ok_or_else(|| fail("bad month"))?;
    let day = fixed_digits(d, 2).ok_or_else(|| fail("bad day"))?;
    if !(1..=12).contains(&month) {
        return Err(fail("month out of range"));
    }
    if day == 0 || day > days_in_month(year, month) {
        return Err(fail("day out of range"));
    }

    let (hms, frac) = match time.split_once('.') {
        Some((hms, frac)) => (hms, Some(frac)),
        None => (time, None),
    };
    let mut tp = hms.split(':');
    let (Some(h), Some(mi), Some(se), None) = (tp.next(), tp.next(), tp.next(), tp.next()) else {
        return Err(fail("time must be hh:mm:ss"));
    };
    let hour = fixed_digits(h, 2).ok_or_else(|| fail("bad hour"))?;
    let minute = fixed_digits(mi, 2).ok_or_else(|| fail("bad minute"))?;
    let second = fixed_digits(se, 2).ok_or_else(|| fail("bad second"))?;
    if hour > 23 || minute > 59 || second > 59 {
        return Err(fail("time out of range"));
    }
    let fraction = match frac {
        None => 0.0,
        Some(f) if (1..=9).contains(&f.len()) && f.bytes().all(|b| b.is_ascii_digit()) => {
            f.parse::<u64>().unwrap() as f64 / 10f64.powi(f.len() as i32)
        }
        Some(_) => return Err(fail("bad fractional seconds")),
    };

    let whole = days_from_civil(year, month, day) * SECS_PER_DAY
        + i64::from(hour) * 3600
        + i64::from(minute) * 60
        + i64::from(second);
    Ok(whole as f64 + fraction)
}

/// Formats Unix seconds as `yyyy-mm-dd hh:mm:ss.mmm` (UTC), rounded to the
/// nearest millisecond.
pub fn format_unix_timestamp(secs: f64) -> String {
    let total_ms = (secs * 1000.0).round() as i64;
    let ms = total_ms.rem_euclid(1000);
    let total_s = total_ms.div_euclid(1000);
    let days = total_s.div_euclid(SECS_PER_DAY);
    let sod = total_s.rem_euclid(SECS_PER_DAY);
    let (y, mo, d) = civil_from_days(days);
    format!(
        "{y:04}-{mo:02}-{d:02} {:02}:{:02}:{:02}.{ms:03}",
        sod / 3600,
        (sod % 3600) / 60,
        sod % 60
    )
}
