#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace woundcare {

using Timestamp = std::chrono::sys_seconds;
using Date = std::chrono::year_month_day;

/// "2026-01-05T09:30:00Z"; always UTC, second precision.
std::string format_rfc3339(Timestamp t);
/// Accepts "Z" or a "+hh:mm"/"-hh:mm" offset and drops fractional seconds.
Timestamp parse_rfc3339(std::string_view text);

std::string format_date(Date d);
/// Strict "YYYY-MM-DD".
Date parse_date(std::string_view text);

Date date_of(Timestamp t);
Timestamp start_of(Date d);
Timestamp now_utc();

}  // namespace woundcare
