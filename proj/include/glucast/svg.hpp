#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "glucast/metrics.hpp"

namespace glucast {

/// Static one-day overlay plot: reference and prediction curves with guide
/// lines at the 70/180 mg/dL thresholds. Picks the 288-sample day with the
/// most evaluated points.
inline void write_day_overlay_svg(const std::string& path, const ForecastTrace& t,
                                  const std::string& title = "") {
    const std::size_t day = 288;
    if (t.size() == 0) throw std::invalid_argument("svg: empty trace");
    std::size_t best_start = 0, best_count = 0;
    for (std::size_t start = 0; start + 1 <= t.size(); start += day) {
        const std::size_t end = std::min(start + day, t.size());
        std::size_t count = 0;
        for (std::size_t i = start; i < end; ++i) count += t.mask[i] ? 1 : 0;
        if (count > best_count) {
            best_count = count;
            best_start = start;
        }
    }
    const std::size_t start = best_start;
    const std::size_t end = std::min(start + day, t.size());

    const double W = 960.0, H = 420.0, ml = 50.0, mr = 15.0, mt = 30.0, mb = 35.0;
    double lo = 40.0, hi = 220.0;
    for (std::size_t i = start; i < end; ++i) {
        if (std::isfinite(t.ref[i])) hi = std::max(hi, t.ref[i] + 10.0);
        if (std::isfinite(t.pred[i])) hi = std::max(hi, t.pred[i] + 10.0);
    }
    auto xpos = [&](std::size_t i) {
        return ml + (W - ml - mr) * static_cast<double>(i - start) / static_cast<double>(day - 1);
    };
    auto ypos = [&](double v) { return mt + (H - mt - mb) * (1.0 - (v - lo) / (hi - lo)); };

    auto polyline = [&](auto value_at, const char* style) {
        std::ostringstream os;
        bool open = false;
        for (std::size_t i = start; i < end; ++i) {
            const double v = value_at(i);
            if (!std::isfinite(v)) {
                if (open) os << "'/>\n";
                open = false;
                continue;
            }
            if (!open) {
                os << "<polyline style='" << style << "' fill='none' points='";
                open = true;
            }
            os << xpos(i) << ',' << ypos(v) << ' ';
        }
        if (open) os << "'/>\n";
        return os.str();
    };

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
        << "' viewBox='0 0 " << W << ' ' << H << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    if (!title.empty())
        out << "<text x='" << ml << "' y='20' font-family='sans-serif' font-size='14'>" << title
            << "</text>\n";
    for (double guide : {70.0, 180.0})
        out << "<line x1='" << ml << "' y1='" << ypos(guide) << "' x2='" << W - mr << "' y2='"
            << ypos(guide) << "' stroke='#bbbbbb' stroke-dasharray='6,4'/>\n"
            << "<text x='4' y='" << ypos(guide) + 4 << "' font-family='sans-serif' "
            << "font-size='11' fill='#888888'>" << guide << "</text>\n";
    out << "<line x1='" << ml << "' y1='" << ypos(lo) << "' x2='" << W - mr << "' y2='"
        << ypos(lo) << "' stroke='black'/>\n";
    for (int hour = 0; hour <= 24; hour += 6) {
        const double x = ml + (W - ml - mr) * hour / 24.0;
        out << "<text x='" << x << "' y='" << H - 12 << "' font-family='sans-serif' "
            << "font-size='11' fill='#555555'>" << hour << "h</text>\n";
    }
    out << polyline([&](std::size_t i) { return t.ref[i]; }, "stroke:black;stroke-width:1.4");
    out << polyline([&](std::size_t i) { return t.pred[i]; },
                    "stroke:#cc2222;stroke-width:1.4;stroke-dasharray:5,3");
    out << "<text x='" << W - 220 << "' y='20' font-family='sans-serif' font-size='12'>"
        << "<tspan fill='black'>reference</tspan>  <tspan fill='#cc2222'>prediction</tspan>"
        << "</text>\n";
    out << "</svg>\n";
}

} // namespace glucast
