#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace livemath {

/// UTC instant at second resolution.
using Timestamp = std::chrono::sys_seconds;

/// Accepts "YYYY-MM-DDTHH:MM:SS" followed by "Z" or a numeric offset
/// ("+HH:MM" / "-HH:MM"), with optional fractional seconds (truncated).
/// A space is accepted in place of 'T'. Returns nullopt on any malformation,
/// including out-of-range calendar fields.
std::optional<Timestamp> parse_rfc3339(std::string_view text);

/// Always emits the canonical "YYYY-MM-DDTHH:MM:SSZ" form.
std::string format_rfc3339(Timestamp ts);

/// "YYYY-MM" of the UTC calendar month containing ts.
std::string month_bucket(Timestamp ts);

int year_of(Timestamp ts);
unsigned month_of(Timestamp ts);

Timestamp make_timestamp(int year, unsigned month, unsigned day,
                         int hour = 0, int minute = 0, int second = 0);

/// Parses either a full RFC3339 instant or a bare date "YYYY-MM-DD" /
/// month "YYYY-MM" (interpreted as midnight UTC of the first day).
std::optional<Timestamp> parse_instant_or_date(std::string_view text);

}  // namespace livemath
