#pragma once

#include <chrono>
#include <cstdio>
#include <string>
#include <string_view>

#include "precip_slomo/error.hpp"

namespace precip_slomo {

using Timestamp = std::chrono::sys_seconds;

/// Formats as "YYYY-MM-DDTHH:MM:SSZ".
inline std::string format_time(Timestamp t)
{
    using namespace std::chrono;
    const auto day = floor<days>(t);
    const year_month_day ymd{day};
    const hh_mm_ss hms{t - day};
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
        static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
        static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
        static_cast<long>(hms.seconds().count()));
    return buf;
}

/// Accepts "YYYY-MM-DDTHH:MM[:SS][Z]" (a space may replace the 'T').
inline Timestamp parse_time(std::string_view text)
{
    using namespace std::chrono;
    int y = 0;
    unsigned mo = 0, d = 0;
    int h = 0, mi = 0, s = 0;
    const std::string str(text);
    const int n = std::sscanf(str.c_str(), "%d-%u-%u%*1[T ]%d:%d:%d", &y, &mo, &d, &h, &mi, &s);
    if (n < 5) fail(ErrorCode::InvalidArgument, "cannot parse timestamp '" + str + "'");
    const year_month_day ymd{year{y}, month{mo}, day{d}};
    if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 60)
        fail(ErrorCode::InvalidArgument, "invalid timestamp '" + str + "'");
    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

} // namespace precip_slomo
