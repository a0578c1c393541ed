#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace glucast {

enum class RecordKind { Glucose, Meal, Bolus };

inline const char* to_string(RecordKind k) {
    switch (k) {
        case RecordKind::Glucose: return "glucose";
        case RecordKind::Meal: return "meal";
        case RecordKind::Bolus: return "bolus";
    }
    return "?";
}

/// One raw timestamped entry: glucose in mg/dL, meal carbs in grams, or an
/// insulin bolus in units. Glucose outside (10, 600) mg/dL is kept but
/// flagged; flagged readings are ignored downstream.
struct RawRecord {
    std::int64_t timestamp = 0; // seconds since epoch
    RecordKind kind = RecordKind::Glucose;
    double value = 0.0;
    bool flagged = false;
};

namespace timeutil {

// Howard Hinnant's civil-date algorithms.
inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y = static_cast<int>(yy + (m <= 2));
}

/// Accepts integer epoch seconds or ISO-8601 "YYYY-MM-DD[T ]HH:MM:SS[Z]".
inline bool parse_timestamp(const std::string& s, std::int64_t& out) {
    if (s.empty()) return false;
    bool all_digits = true;
    for (std::size_t i = (s[0] == '-' ? 1 : 0); i < s.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) { all_digits = false; break; }
    if (all_digits) {
        try {
            out = std::stoll(s);
            return true;
        } catch (...) {
            return false;
        }
    }
    int y, H, M, S;
    unsigned mo, d;
    char sep;
    if (std::sscanf(s.c_str(), "%d-%u-%u%c%d:%d:%d", &y, &mo, &d, &sep, &H, &M, &S) != 7)
        return false;
    if (sep != 'T' && sep != ' ') return false;
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || H < 0 || H > 23 || M < 0 || M > 59 || S < 0 ||
        S > 60)
        return false;
    out = days_from_civil(y, mo, d) * 86400 + H * 3600 + M * 60 + S;
    return true;
}

inline std::string format_iso(std::int64_t t) {
    std::int64_t days = t / 86400;
    std::int64_t sod = t % 86400;
    if (sod < 0) { sod += 86400; days -= 1; }
    int y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", y, m, d,
                  static_cast<long long>(sod / 3600), static_cast<long long>(sod / 60 % 60),
                  static_cast<long long>(sod % 60));
    return buf;
}

} // namespace timeutil

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

} // namespace detail

constexpr double kGlucoseMin = 10.0;  // exclusive plausibility bounds, mg/dL
constexpr double kGlucoseMax = 600.0;

/// Parses the record CSV contract: header `timestamp,kind,value`, one record
/// per line. Structural problems (bad header, unparseable timestamp or value,
/// unknown kind, negative value) are hard errors naming the offending line;
/// out-of-range glucose is flagged, not dropped. Records come back sorted by
/// timestamp (stable, so file order breaks ties).
inline std::vector<RawRecord> parse_records_csv(std::istream& in, const std::string& name) {
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error(name + ": empty file, expected header 'timestamp,kind,value'");
    {
        auto cols = detail::split_csv_line(line);
        if (cols.size() != 3 || detail::trim(cols[0]) != "timestamp" ||
            detail::trim(cols[1]) != "kind" || detail::trim(cols[2]) != "value")
            throw std::runtime_error(name + ": bad header, expected 'timestamp,kind,value'");
    }
    std::vector<RawRecord> records;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        auto cols = detail::split_csv_line(line);
        if (cols.size() != 3)
            throw std::runtime_error(name + ":" + std::to_string(lineno) +
                                     ": expected 3 fields, got " + std::to_string(cols.size()));
        RawRecord r;
        if (!timeutil::parse_timestamp(detail::trim(cols[0]), r.timestamp))
            throw std::runtime_error(name + ":" + std::to_string(lineno) +
                                     ": unparseable timestamp '" + cols[0] + "'");
        const std::string kind = detail::trim(cols[1]);
        if (kind == "glucose")
            r.kind = RecordKind::Glucose;
        else if (kind == "meal")
            r.kind = RecordKind::Meal;
        else if (kind == "bolus")
            r.kind = RecordKind::Bolus;
        else
            throw std::runtime_error(name + ":" + std::to_string(lineno) + ": unknown kind '" +
                                     kind + "'");
        try {
            std::size_t pos = 0;
            r.value = std::stod(detail::trim(cols[2]), &pos);
            if (pos != detail::trim(cols[2]).size()) throw std::invalid_argument("trailing");
        } catch (...) {
            throw std::runtime_error(name + ":" + std::to_string(lineno) +
                                     ": unparseable value '" + cols[2] + "'");
        }
        if (!std::isfinite(r.value) || r.value < 0.0)
            throw std::runtime_error(name + ":" + std::to_string(lineno) +
                                     ": value must be finite and >= 0");
        if (r.kind == RecordKind::Glucose &&
            (r.value <= kGlucoseMin || r.value >= kGlucoseMax))
            r.flagged = true;
        records.push_back(r);
    }
    std::stable_sort(records.begin(), records.end(),
                     [](const RawRecord& a, const RawRecord& b) { return a.timestamp < b.timestamp; });
    return records;
}

inline std::vector<RawRecord> parse_records_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return parse_records_csv(in, path);
}

inline void write_records_csv(std::ostream& out, const std::vector<RawRecord>& records) {
    out << "timestamp,kind,value\n";
    char buf[64];
    for (const RawRecord& r : records) {
        std::snprintf(buf, sizeof(buf), "%lld,%s,%.17g\n", static_cast<long long>(r.timestamp),
                      to_string(r.kind), r.value);
        out << buf;
    }
}

inline void write_records_csv(const std::string& path, const std::vector<RawRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_records_csv(out, records);
}

} // namespace glucast
