#include "gateaux/svg.hpp"

#include "gateaux/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace gateaux {

namespace {

std::string short_num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

/// Blue (low) to red (high) ramp on t in [0, 1].
std::string ramp(double t)
{
    t = std::clamp(t, 0.0, 1.0);
    const int r = static_cast<int>(std::lround(40 + 200 * t));
    const int g = static_cast<int>(std::lround(80 + 100 * (1.0 - std::abs(2.0 * t - 1.0))));
    const int b = static_cast<int>(std::lround(220 - 180 * t));
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::string sweep_heatmap_svg(const SweepResult& result)
{
    const double cell = 70.0, left = 90.0, top = 50.0;
    const std::size_t rows = result.eps_grid.size(), cols = result.lambda_grid.size();
    const double width = left + cell * static_cast<double>(cols) + 30.0;
    const double height = top + cell * static_cast<double>(rows) + 40.0;

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : result.mae)
        for (double v : r)
            if (std::isfinite(v) && v > 0.0) {
                lo = std::min(lo, std::log10(v));
                hi = std::max(hi, std::log10(v));
            }
    if (!(hi > lo)) hi = lo + 1.0;

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<defs><pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\">"
         "<path d=\"M0,6 L6,0\" stroke=\"#999\"/></pattern></defs>\n";
    s << "<text x=\"" << left << "\" y=\"20\" font-size=\"13\">MAE of the derivative (log10 colour scale)</text>\n";
    for (std::size_t j = 0; j < cols; ++j)
        s << "<text x=\"" << left + cell * (static_cast<double>(j) + 0.5) << "\" y=\"" << top - 8
          << "\" text-anchor=\"middle\">lambda=" << short_num(result.lambda_grid[j]) << "</text>\n";
    for (std::size_t i = 0; i < rows; ++i) {
        const double y = top + cell * static_cast<double>(i);
        s << "<text x=\"" << left - 8 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"end\">eps="
          << short_num(result.eps_grid[i]) << "</text>\n";
        for (std::size_t j = 0; j < cols; ++j) {
            const double x = left + cell * static_cast<double>(j);
            const double v = result.mae[i][j];
            const bool ok = std::isfinite(v);
            std::string fill = "url(#hatch)";
            if (ok) fill = v > 0.0 ? ramp((std::log10(v) - lo) / (hi - lo)) : ramp(0.0);
            s << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
              << fill << "\" stroke=\"white\"/>\n";
            s << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\">"
              << (ok ? short_num(v) : std::string("nan")) << "</text>\n";
        }
    }
    s << "</svg>\n";
    return s.str();
}

std::string compare_chart_svg(const CompareOutput& output)
{
    const double left = 70.0, top = 40.0, pw = 420.0, ph = 280.0;
    std::vector<std::string> names;
    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
    for (const auto& r : output.rows) {
        if (std::find(names.begin(), names.end(), r.estimator) == names.end()) names.push_back(r.estimator);
        if (!(r.mean_abs_error > 0.0) || !std::isfinite(r.mean_abs_error)) continue;
        xlo = std::min(xlo, std::log10(static_cast<double>(r.n)));
        xhi = std::max(xhi, std::log10(static_cast<double>(r.n)));
        ylo = std::min(ylo, std::log10(r.mean_abs_error));
        yhi = std::max(yhi, std::log10(r.mean_abs_error));
    }
    if (!std::isfinite(xlo)) xlo = 0.0, xhi = 1.0, ylo = 0.0, yhi = 1.0;
    if (!(xhi > xlo)) xhi = xlo + 1.0;
    if (!(yhi > ylo)) yhi = ylo + 1.0;
    const double pad = 0.05 * (yhi - ylo);
    ylo -= pad;
    yhi += pad;
    auto px = [&](double n) { return left + pw * (std::log10(n) - xlo) / (xhi - xlo); };
    auto py = [&](double e) { return top + ph * (1.0 - (std::log10(e) - ylo) / (yhi - ylo)); };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + pw + 150 << "\" height=\"" << top + ph + 50
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<text x=\"" << left << "\" y=\"22\" font-size=\"13\">Mean absolute error against n (log-log)</text>\n";
    s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
    s << "<text x=\"" << left + pw / 2 << "\" y=\"" << top + ph + 35 << "\" text-anchor=\"middle\">n</text>\n";
    s << "<text x=\"" << left - 8 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\">" << short_num(std::pow(10.0, yhi))
      << "</text>\n";
    s << "<text x=\"" << left - 8 << "\" y=\"" << top + ph << "\" text-anchor=\"end\">" << short_num(std::pow(10.0, ylo))
      << "</text>\n";
    for (std::size_t k = 0; k < names.size(); ++k) {
        const char* colour = kPalette[k % std::size(kPalette)];
        std::ostringstream pts;
        for (const auto& r : output.rows) {
            if (r.estimator != names[k] || !(r.mean_abs_error > 0.0) || !std::isfinite(r.mean_abs_error)) continue;
            const double x = px(static_cast<double>(r.n)), y = py(r.mean_abs_error);
            pts << x << ',' << y << ' ';
            s << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"3\" fill=\"" << colour << "\"/>\n";
            if (k == 0)
                s << "<text x=\"" << x << "\" y=\"" << top + ph + 15 << "\" text-anchor=\"middle\">" << r.n << "</text>\n";
        }
        s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"" << pts.str() << "\"/>\n";
        s << "<text x=\"" << left + pw + 15 << "\" y=\"" << top + 15 + 16 * static_cast<double>(k) << "\" fill=\"" << colour
          << "\">" << names[k] << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace gateaux
