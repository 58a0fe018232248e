#include "livemath/time.hpp"

#include <cctype>

#include <fmt/format.h>

namespace livemath {

namespace {

bool read_digits(std::string_view s, std::size_t pos, std::size_t count, int& out) {
  if (pos + count > s.size()) return false;
  int v = 0;
  for (std::size_t i = 0; i < count; ++i) {
    char c = s[pos + i];
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

std::optional<std::chrono::sys_days> make_day(int y, int m, int d) {
  using namespace std::chrono;
  if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return sys_days{ymd};
}

}  // namespace

std::optional<Timestamp> parse_rfc3339(std::string_view s) {
  int y, mo, d, h, mi, sec;
  if (!read_digits(s, 0, 4, y) || s.size() < 20 || s[4] != '-' ||
      !read_digits(s, 5, 2, mo) || s[7] != '-' || !read_digits(s, 8, 2, d) ||
      (s[10] != 'T' && s[10] != 't' && s[10] != ' ') || !read_digits(s, 11, 2, h) ||
      s[13] != ':' || !read_digits(s, 14, 2, mi) || s[16] != ':' ||
      !read_digits(s, 17, 2, sec)) {
    return std::nullopt;
  }
  if (h > 23 || mi > 59 || sec > 60) return std::nullopt;
  auto day = make_day(y, mo, d);
  if (!day) return std::nullopt;

  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    std::size_t start = pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos == start) return std::nullopt;
  }
  if (pos >= s.size()) return std::nullopt;

  long offset_seconds = 0;
  if (s[pos] == 'Z' || s[pos] == 'z') {
    ++pos;
  } else if (s[pos] == '+' || s[pos] == '-') {
    int oh, om;
    if (!read_digits(s, pos + 1, 2, oh) || pos + 3 >= s.size() || s[pos + 3] != ':' ||
        !read_digits(s, pos + 4, 2, om) || oh > 23 || om > 59) {
      return std::nullopt;
    }
    offset_seconds = (oh * 3600L + om * 60L) * (s[pos] == '+' ? 1 : -1);
    pos += 6;
  } else {
    return std::nullopt;
  }
  if (pos != s.size()) return std::nullopt;

  using namespace std::chrono;
  auto t = sys_seconds{*day} + hours{h} + minutes{mi} + seconds{sec};
  return t - seconds{offset_seconds};
}

std::string format_rfc3339(Timestamp ts) {
  using namespace std::chrono;
  auto day = floor<days>(ts);
  year_month_day ymd{day};
  hh_mm_ss hms{ts - day};
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                     hms.hours().count(), hms.minutes().count(), hms.seconds().count());
}

std::string month_bucket(Timestamp ts) {
  return fmt::format("{:04}-{:02}", year_of(ts), month_of(ts));
}

int year_of(Timestamp ts) {
  using namespace std::chrono;
  return static_cast<int>(year_month_day{floor<days>(ts)}.year());
}

unsigned month_of(Timestamp ts) {
  using namespace std::chrono;
  return static_cast<unsigned>(year_month_day{floor<days>(ts)}.month());
}

Timestamp make_timestamp(int y, unsigned m, unsigned d, int h, int mi, int s) {
  using namespace std::chrono;
  return sys_seconds{sys_days{year{y} / month{m} / day{d}}} + hours{h} + minutes{mi} + seconds{s};
}

std::optional<Timestamp> parse_instant_or_date(std::string_view s) {
  if (auto full = parse_rfc3339(s)) return full;
  int y, m, d = 1;
  if (!read_digits(s, 0, 4, y) || s.size() < 7 || s[4] != '-' || !read_digits(s, 5, 2, m)) {
    return std::nullopt;
  }
  if (s.size() == 10) {
    if (s[7] != '-' || !read_digits(s, 8, 2, d)) return std::nullopt;
  } else if (s.size() != 7) {
    return std::nullopt;
  }
  auto day = make_day(y, m, d);
  if (!day) return std::nullopt;
  return std::chrono::sys_seconds{*day};
}

}  // namespace livemath
