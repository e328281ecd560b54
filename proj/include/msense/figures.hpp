#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "experiment.hpp"
#include "format.hpp"
#include "parallel.hpp"

namespace msense {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

/// Minimal log-y line chart. Non-positive y values are dropped from the path.
inline std::string svg_log_plot(const std::string& title, const std::string& xlabel,
                                const std::vector<Series>& series) {
    constexpr double W = 720, H = 460, left = 80, right = 170, top = 40, bottom = 60;
    const double pw = W - left - right, ph = H - top - bottom;
    double xmin = 0, xmax = 1, ymin = 1, ymax = 10;
    bool any = false;
    for (const Series& s : series) {
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!(s.y[i] > 0.0) || !std::isfinite(s.y[i])) continue;
            if (!any) {
                xmin = xmax = s.x[i];
                ymin = ymax = s.y[i];
                any = true;
            }
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    }
    if (xmax <= xmin) xmax = xmin + 1;
    const int dlo = static_cast<int>(std::floor(std::log10(ymin)));
    int dhi = static_cast<int>(std::ceil(std::log10(ymax)));
    if (dhi <= dlo) dhi = dlo + 1;
    auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return top + (dhi - std::log10(y)) / (dhi - dlo) * ph; };
    auto num = [](double v) {
        std::ostringstream o;
        o.precision(6);
        o << v;
        return o.str();
    };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << left + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title
      << "</text>\n";
    o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    const int step = std::max(1, (dhi - dlo + 7) / 8);
    for (int e = dlo; e <= dhi; e += step) {
        const double y = py(std::pow(10.0, e));
        o << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << y << "\" y2=\"" << y
          << "\" stroke=\"#ddd\"/>\n";
        o << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">1e" << e << "</text>\n";
    }
    for (int g = 0; g <= 5; ++g) {
        const double xv = xmin + (xmax - xmin) * g / 5.0;
        const double x = px(xv);
        o << "<line x1=\"" << x << "\" x2=\"" << x << "\" y1=\"" << top + ph << "\" y2=\"" << top + ph + 5
          << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << x << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << num(xv)
          << "</text>\n";
    }
    o << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << xlabel
      << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const Series& s = series[k];
        const char* color = colors[k % 6];
        std::ostringstream path;
        bool pen = false;
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!(s.y[i] > 0.0) || !std::isfinite(s.y[i])) {
                pen = false;
                continue;
            }
            path << (pen ? " L" : " M") << num(px(s.x[i])) << ' ' << num(py(s.y[i]));
            pen = true;
        }
        o << "<path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
        const double ly = top + 16 + 20.0 * static_cast<double>(k);
        o << "<line x1=\"" << left + pw + 12 << "\" x2=\"" << left + pw + 36 << "\" y1=\"" << ly << "\" y2=\"" << ly
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << left + pw + 42 << "\" y=\"" << ly + 4 << "\">" << s.label << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

struct FigureSpec {
    std::string name;
    ExperimentConfig config;
    bool decomposition_view = false;  // four decomposed norms instead of the full errors
};

/// d=20, r=3, n=200, noiseless, eta=0.1; k in {3, 4} x planted/random init, plus the
/// longer decomposition runs.
inline std::vector<FigureSpec> figure_specs() {
    auto make = [](std::size_t k, InitMode mode, std::size_t iters) {
        ExperimentConfig c;
        c.k = k;
        c.iters = iters;
        c.seed = 2023;
        c.init.mode = mode;
        return c;
    };
    return {
        {"fig1a", make(4, InitMode::planted, 2000), false},
        {"fig1b", make(3, InitMode::planted, 2000), false},
        {"fig1c", make(4, InitMode::random, 2000), false},
        {"fig1d", make(3, InitMode::random, 2000), false},
        {"fig2a", make(4, InitMode::planted, 5000), true},
        {"fig2b", make(3, InitMode::planted, 5000), true},
    };
}

inline std::vector<Series> figure_series(const Trajectory& traj, bool decomposition_view) {
    std::vector<double> t;
    for (const auto& m : traj.metrics) t.push_back(static_cast<double>(m.t));
    auto pick = [&](const char* label, double IterateMetrics::*field) {
        Series s{label, t, {}};
        for (const auto& m : traj.metrics) s.y.push_back(m.*field);
        return s;
    };
    if (decomposition_view)
        return {pick("|SS'-DS|", &IterateMetrics::ss_err), pick("|ST'|", &IterateMetrics::st_norm),
                pick("|TT'-DT|", &IterateMetrics::tt_err), pick("|FF'-X*|", &IterateMetrics::err_spec)};
    return {pick("|FF'-X*| spec", &IterateMetrics::err_spec), pick("|FF'-X*| fro", &IterateMetrics::err_fro)};
}

/// Writes <name>.csv (trajectory schema) and <name>.svg per figure. Returns written paths.
inline std::vector<std::string> reproduce_figures(const std::string& out_dir,
                                                  std::size_t threads = default_thread_count()) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw std::runtime_error("cannot create output directory " + out_dir);
    const auto specs = figure_specs();
    std::vector<std::vector<std::string>> written(specs.size());
    parallel_for(
        specs.size(),
        [&](std::size_t i) {
            const FigureSpec& spec = specs[i];
            const std::string base = (fs::path(out_dir) / spec.name).string();
            const Trajectory traj = run_experiment(spec.config);
            write_trajectory_csv(traj, base + ".csv");
            const std::string title = spec.name + ": k=" + std::to_string(spec.config.k) + ", " +
                                      to_string(spec.config.init.mode) + " init";
            std::ofstream svg(base + ".svg", std::ios::binary);
            if (!svg) throw std::runtime_error("cannot open " + base + ".svg for writing");
            svg << svg_log_plot(title, "iteration", figure_series(traj, spec.decomposition_view));
            if (!svg) throw std::runtime_error("write failed: " + base + ".svg");
            written[i] = {base + ".csv", base + ".svg"};
        },
        threads);
    std::vector<std::string> out;
    for (auto& w : written) out.insert(out.end(), w.begin(), w.end());
    return out;
}

} // namespace msense
