#include "mixft/evalkit.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mixft/errors.hpp"

namespace mixft::eval {
namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 320.0;
constexpr double kMargin = 48.0;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string fmt(double v, const char* spec = "%.2f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<':
            out += "&lt;";
            break;
        case '>':
            out += "&gt;";
            break;
        case '&':
            out += "&amp;";
            break;
        default:
            out += c;
        }
    }
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    return out + "\"";
}

struct Bounds {
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
};

Bounds bounds_of(const std::vector<Series2D>& lines) {
    Bounds b{1e300, -1e300, 1e300, -1e300};
    for (const auto& l : lines) {
        for (double v : l.x) {
            b.x0 = std::min(b.x0, v);
            b.x1 = std::max(b.x1, v);
        }
        for (double v : l.y) {
            if (std::isfinite(v)) {
                b.y0 = std::min(b.y0, v);
                b.y1 = std::max(b.y1, v);
            }
        }
    }
    if (b.x0 > b.x1) {
        b = Bounds{};
    }
    if (b.x1 == b.x0) {
        b.x1 = b.x0 + 1;
    }
    if (b.y1 == b.y0) {
        b.y0 -= 0.5;
        b.y1 += 0.5;
    }
    return b;
}

std::string svg_open(const std::string& title) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
       << escape(title) << "</text>\n";
    return os.str();
}

std::string axes(const Bounds& b) {
    std::ostringstream os;
    const double left = kMargin, right = kWidth - kMargin / 2, top = kMargin / 1.5, bottom = kHeight - kMargin;
    os << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right << "\" y2=\"" << bottom
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << bottom
       << "\" stroke=\"black\"/>\n";
    const std::string font = "font-family=\"sans-serif\" font-size=\"10\"";
    os << "<text x=\"" << left << "\" y=\"" << bottom + 14 << "\" " << font << ">" << fmt(b.x0, "%g") << "</text>\n";
    os << "<text x=\"" << right << "\" y=\"" << bottom + 14 << "\" text-anchor=\"end\" " << font << ">"
       << fmt(b.x1, "%g") << "</text>\n";
    os << "<text x=\"" << left - 4 << "\" y=\"" << bottom << "\" text-anchor=\"end\" " << font << ">"
       << fmt(b.y0, "%.4g") << "</text>\n";
    os << "<text x=\"" << left - 4 << "\" y=\"" << top + 8 << "\" text-anchor=\"end\" " << font << ">"
       << fmt(b.y1, "%.4g") << "</text>\n";
    return os.str();
}

double px(const Bounds& b, double x) { return kMargin + (x - b.x0) / (b.x1 - b.x0) * (kWidth - 1.5 * kMargin); }
double py(const Bounds& b, double y) {
    const double top = kMargin / 1.5, bottom = kHeight - kMargin;
    return bottom - (y - b.y0) / (b.y1 - b.y0) * (bottom - top);
}

std::string plot(const std::string& title, const std::vector<Series2D>& lines, bool step) {
    const auto b = bounds_of(lines);
    std::string out = svg_open(title) + axes(b);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto& l = lines[i];
        std::ostringstream pts;
        for (std::size_t j = 0; j < l.x.size() && j < l.y.size(); ++j) {
            if (!std::isfinite(l.y[j])) {
                continue;
            }
            if (step && j > 0) {
                pts << fmt(px(b, l.x[j])) << ',' << fmt(py(b, l.y[j - 1])) << ' ';
            }
            pts << fmt(px(b, l.x[j])) << ',' << fmt(py(b, l.y[j])) << ' ';
        }
        const char* color = kPalette[i % std::size(kPalette)];
        out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" +
               pts.str() + "\"/>\n";
        out += "<text x=\"" + fmt(kWidth - kMargin) + "\" y=\"" + fmt(kMargin + 14.0 * static_cast<double>(i)) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\" fill=\"" + color + "\">" +
               escape(l.label) + "</text>\n";
    }
    return out + "</svg>\n";
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    return out;
}

} // namespace

EntropyReport entropy_report(const pipeline::MixftArtifact& artifact,
                             const std::vector<std::vector<series::Window>>& windows_by_dataset) {
    EntropyReport rep;
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& windows : windows_by_dataset) {
        std::vector<double> h(windows.size());
        parallel_for(windows.size(), [&](std::size_t i) {
            h[i] = mixture::classification_entropy(pipeline::routing_probabilities(artifact, as_span(windows[i].context)));
        });
        double sum = 0.0;
        for (double v : h) {
            sum += v;
        }
        rep.datasets.push_back(windows.empty() ? std::string() : windows.front().dataset_id);
        rep.windows.push_back(windows.size());
        rep.mean_bits.push_back(windows.empty() ? 0.0 : sum / static_cast<double>(windows.size()));
        total += sum;
        count += windows.size();
    }
    rep.overall_bits = count == 0 ? 0.0 : total / static_cast<double>(count);
    return rep;
}

Timeline membership_timeline(const pipeline::MixftArtifact& artifact, const series::TimeSeries& s, int channel) {
    series::WindowSpec spec = artifact.window;
    spec.stride = 1;
    const auto windows = series::context_windows(s, spec, channel, "");
    Timeline tl;
    tl.series_id = s.id;
    tl.channel = channel;
    tl.time.resize(windows.size());
    tl.component.resize(windows.size());
    parallel_for(windows.size(), [&](std::size_t i) {
        tl.time[i] = static_cast<int>(windows[i].start) + spec.context - 1;
        tl.component[i] = mixture::argmax_lowest(pipeline::routing_probabilities(artifact, as_span(windows[i].context)));
    });
    if (!s.regime_labels.empty()) {
        for (int t : tl.time) {
            tl.truth.push_back(s.regime_labels[static_cast<std::size_t>(t)]);
        }
    }
    return tl;
}

double timeline_accuracy(const Timeline& tl, int components) {
    if (tl.truth.size() != tl.component.size() || tl.truth.empty()) {
        throw DataError("timeline has no ground-truth labels");
    }
    int m = components;
    for (int v : tl.truth) {
        m = std::max(m, v + 1);
    }
    std::vector<int> perm(static_cast<std::size_t>(m));
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t best = 0;
    do {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < tl.truth.size(); ++i) {
            hits += perm[static_cast<std::size_t>(tl.component[i])] == tl.truth[i] ? 1 : 0;
        }
        best = std::max(best, hits);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(best) / static_cast<double>(tl.truth.size());
}

void write_mase_csv(const std::vector<EvalRecord>& records, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "dataset,method,seed,mean,stderr,windows,undefined\n";
    for (const auto& r : records) {
        out << csv_field(r.dataset) << ',' << csv_field(r.method) << ',' << csv_field(r.seed) << ','
            << format_double(r.summary.mean) << ',' << format_double(r.summary.stderr_) << ',' << r.summary.count
            << ',' << r.summary.undefined << '\n';
    }
}

void write_ranks_csv(const RankTable& table, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "dataset";
    for (const auto& m : table.methods) {
        out << ',' << csv_field(m);
    }
    out << '\n';
    for (std::size_t r = 0; r < table.datasets.size(); ++r) {
        out << csv_field(table.datasets[r]);
        for (Eigen::Index c = 0; c < table.ranks.cols(); ++c) {
            out << ',' << format_double(table.ranks(static_cast<Eigen::Index>(r), c));
        }
        out << '\n';
    }
    out << "average_rank";
    for (Eigen::Index c = 0; c < table.average.size(); ++c) {
        out << ',' << format_double(table.average(c));
    }
    out << '\n';
}

void write_entropy_csv(const EntropyReport& report, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "dataset,windows,mean_entropy_bits\n";
    for (std::size_t i = 0; i < report.datasets.size(); ++i) {
        out << csv_field(report.datasets[i]) << ',' << report.windows[i] << ',' << format_double(report.mean_bits[i])
            << '\n';
    }
    std::size_t total = 0;
    for (auto w : report.windows) {
        total += w;
    }
    out << "overall," << total << ',' << format_double(report.overall_bits) << '\n';
}

void write_timeline_csv(const Timeline& tl, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << (tl.truth.empty() ? "time,component\n" : "time,component,regime\n");
    for (std::size_t i = 0; i < tl.time.size(); ++i) {
        out << tl.time[i] << ',' << tl.component[i];
        if (!tl.truth.empty()) {
            out << ',' << tl.truth[i];
        }
        out << '\n';
    }
}

void write_report_readme(const std::filesystem::path& dir) {
    write_text(dir / "README",
               "Report files\n"
               "\n"
               "mase.csv      dataset, method, seed, mean, stderr, windows, undefined\n"
               "              mean and stderr of per-window MASE; stderr = sample std / sqrt(windows).\n"
               "              undefined counts windows whose seasonal-naive denominator was zero.\n"
               "              Rows with seed 'all' aggregate the per-seed means (stderr over seeds).\n"
               "ranks.csv     one row per dataset, one column per method, holding the rank of the\n"
               "              method on that dataset (1 = lowest MASE, ties share the mean rank).\n"
               "              The last row, average_rank, is the column mean.\n"
               "entropy.csv   dataset, windows, mean_entropy_bits: average entropy (log base 2) of\n"
               "              the routing probabilities over the dataset's windows; last row overall.\n"
               "timeline_<series>_<channel>.csv\n"
               "              time, component[, regime]: routed sub-domain for the context window\n"
               "              ending at time (stride 1), with the generator regime when known.\n"
               "*.svg         charts of the tables above (timelines, ELBO trace, MASE bars).\n");
}

std::string step_plot_svg(const std::string& title, const std::vector<Series2D>& lines) {
    return plot(title, lines, true);
}

std::string line_plot_svg(const std::string& title, const std::vector<Series2D>& lines) {
    return plot(title, lines, false);
}

std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values, const std::vector<double>& errors) {
    double top = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double e = i < errors.size() ? errors[i] : 0.0;
        if (std::isfinite(values[i])) {
            top = std::max(top, values[i] + e);
        }
    }
    if (top <= 0.0) {
        top = 1.0;
    }
    Bounds b{0, 1, 0, top};
    std::string out = svg_open(title) + axes(b);
    const double span = kWidth - 1.5 * kMargin;
    const double slot = values.empty() ? span : span / static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            continue;
        }
        const double x = kMargin + slot * static_cast<double>(i) + slot * 0.15;
        const double y = py(b, values[i]);
        out += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(slot * 0.7) + "\" height=\"" +
               fmt(py(b, 0) - y) + "\" fill=\"" + kPalette[i % std::size(kPalette)] + "\"/>\n";
        const double e = i < errors.size() ? errors[i] : 0.0;
        if (e > 0.0) {
            const double cx = x + slot * 0.35;
            out += "<line x1=\"" + fmt(cx) + "\" y1=\"" + fmt(py(b, values[i] - e)) + "\" x2=\"" + fmt(cx) +
                   "\" y2=\"" + fmt(py(b, values[i] + e)) + "\" stroke=\"black\"/>\n";
        }
        out += "<text x=\"" + fmt(x + slot * 0.35) + "\" y=\"" + fmt(kHeight - kMargin + 26) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"9\">" +
               escape(i < labels.size() ? labels[i] : std::string()) + "</text>\n";
    }
    return out + "</svg>\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
}

std::string timeline_file_stem(const Timeline& tl) {
    std::string id = tl.series_id;
    for (char& c : id) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) {
            c = '_';
        }
    }
    return "timeline_" + id + "_" + std::to_string(tl.channel);
}

} // namespace mixft::eval
