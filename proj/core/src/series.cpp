#include "mixft/series.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mixft/errors.hpp"

namespace mixft::series {
namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) {
        out.push_back(trim(cur));
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) {
        return std::nullopt;
    }
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') {
        ++first;
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) {
        return std::nullopt;
    }
    return v;
}

bool all_numeric(const std::vector<std::string>& fields, std::size_t from) {
    for (std::size_t i = from; i < fields.size(); ++i) {
        if (!parse_number(fields[i])) {
            return false;
        }
    }
    return true;
}

} // namespace

void WindowSpec::validate() const {
    if (context <= 0 || horizon <= 0 || stride <= 0) {
        throw ConfigError("window spec requires context > 0, horizon > 0, stride > 0");
    }
}

TimeSeries ingest_csv(const std::filesystem::path& path, int seasonality) {
    if (seasonality <= 0) {
        throw ConfigError("seasonality must be a positive integer");
    }
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    TimeSeries ts;
    ts.id = path.stem().string();
    ts.seasonality = seasonality;

    std::vector<std::vector<double>> rows;
    std::optional<std::size_t> width;
    bool timestamp_column = false;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        auto fields = split_fields(line);
        if (!width && rows.empty() && ts.channel_names.empty() && !all_numeric(fields, 0)) {
            bool any_numeric = false;
            for (const auto& f : fields) {
                any_numeric = any_numeric || parse_number(f).has_value();
            }
            if (!any_numeric) {
                ts.channel_names = fields; // header row
                continue;
            }
        }
        if (!width) {
            timestamp_column = fields.size() > 1 && !parse_number(fields[0]) && all_numeric(fields, 1);
            width = fields.size();
            if (timestamp_column && ts.channel_names.size() == fields.size()) {
                ts.channel_names.erase(ts.channel_names.begin());
            }
        }
        if (fields.size() != *width) {
            throw DataError(path.string() + ": line " + std::to_string(line_no) + ": expected " +
                            std::to_string(*width) + " fields, found " + std::to_string(fields.size()));
        }
        std::vector<double> row;
        for (std::size_t i = timestamp_column ? 1 : 0; i < fields.size(); ++i) {
            auto v = parse_number(fields[i]);
            if (!v) {
                throw DataError(path.string() + ": line " + std::to_string(line_no) + ": field " +
                                std::to_string(i + 1) + " is not numeric ('" + fields[i] + "')");
            }
            if (!std::isfinite(*v)) {
                throw DataError(path.string() + ": line " + std::to_string(line_no) + ": non-finite value");
            }
            row.push_back(*v);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw DataError(path.string() + ": no data rows");
    }
    const auto cols = rows.front().size();
    ts.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            ts.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    if (ts.channel_names.size() != cols) {
        ts.channel_names.clear();
    }
    return ts;
}

std::size_t training_window_count(Eigen::Index length, const WindowSpec& spec) {
    const auto span = length - spec.context - spec.horizon;
    return span < 0 ? 0 : static_cast<std::size_t>(span / spec.stride + 1);
}

std::size_t context_window_count(Eigen::Index length, const WindowSpec& spec) {
    const auto span = length - spec.context;
    return span < 0 ? 0 : static_cast<std::size_t>(span / spec.stride + 1);
}

std::vector<Window> window(const TimeSeries& series, const WindowSpec& spec, const std::string& dataset_id) {
    spec.validate();
    const auto T = series.length();
    if (T < spec.context + spec.horizon) {
        throw DataError("series '" + series.id + "' has " + std::to_string(T) + " steps, fewer than L + H = " +
                        std::to_string(spec.context + spec.horizon) + "; no windows");
    }
    std::vector<Window> out;
    out.reserve(training_window_count(T, spec) * static_cast<std::size_t>(series.channels()));
    for (int c = 0; c < series.channels(); ++c) {
        for (Eigen::Index j = 0; j + spec.context + spec.horizon <= T; j += spec.stride) {
            Window w;
            w.context = series.values.col(c).segment(j, spec.context);
            w.target = series.values.col(c).segment(j + spec.context, spec.horizon);
            w.dataset_id = dataset_id;
            w.series_id = series.id;
            w.channel = c;
            w.start = static_cast<int>(j);
            w.seasonality = series.seasonality;
            if (!series.regime_labels.empty()) {
                w.regime = series.regime_labels[static_cast<std::size_t>(j + spec.context - 1)];
            }
            out.push_back(std::move(w));
        }
    }
    return out;
}

std::vector<Window> context_windows(const TimeSeries& series, const WindowSpec& spec, int channel,
                                    const std::string& dataset_id) {
    spec.validate();
    if (channel < 0 || channel >= series.channels()) {
        throw DataError("series '" + series.id + "' has no channel " + std::to_string(channel));
    }
    const auto T = series.length();
    if (T < spec.context) {
        throw DataError("series '" + series.id + "' is shorter than one context window");
    }
    std::vector<Window> out;
    for (Eigen::Index j = 0; j + spec.context <= T; j += spec.stride) {
        Window w;
        w.context = series.values.col(channel).segment(j, spec.context);
        w.dataset_id = dataset_id;
        w.series_id = series.id;
        w.channel = channel;
        w.start = static_cast<int>(j);
        w.seasonality = series.seasonality;
        if (!series.regime_labels.empty()) {
            w.regime = series.regime_labels[static_cast<std::size_t>(j + spec.context - 1)];
        }
        out.push_back(std::move(w));
    }
    return out;
}

std::vector<Window> window_corpus(const Corpus& corpus, const WindowSpec& spec) {
    std::vector<Window> out;
    for (const auto& s : corpus.series) {
        if (s.length() < spec.context + spec.horizon) {
            continue;
        }
        auto w = window(s, spec, corpus.id);
        out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
    return out;
}

Normalized instance_normalize(std::span<const double> x) {
    Normalized n;
    const auto size = static_cast<Eigen::Index>(x.size());
    Eigen::Map<const Vec> v(x.data(), size);
    n.loc = size > 0 ? v.mean() : 0.0;
    const double var = size > 0 ? (v.array() - n.loc).square().mean() : 0.0;
    n.scale = std::max(std::sqrt(var), kScaleFloor);
    n.values = (v.array() - n.loc) / n.scale;
    return n;
}

Vec denormalize(const Vec& normalized, double loc, double scale) { return (normalized.array() * scale + loc).matrix(); }

double sample_beta(double a, Rng& rng) {
    std::gamma_distribution<double> g(a, 1.0);
    const double x = g(rng);
    const double y = g(rng);
    if (x + y <= 0.0) {
        // both draws underflowed; the limit law puts mass 1/2 on each end
        return std::bernoulli_distribution(0.5)(rng) ? 1.0 : 0.0;
    }
    return x / (x + y);
}

MixupResult mixup(const std::vector<Pair>& batch, const std::function<double()>& lambda_source, Rng& rng) {
    MixupResult res;
    if (batch.size() < 2) {
        res.pairs = batch;
        res.passthrough = true;
        return res;
    }
    std::uniform_int_distribution<std::size_t> pick(0, batch.size() - 1);
    res.pairs.reserve(batch.size());
    for (const auto& a : batch) {
        const double lambda = lambda_source();
        const auto& b = batch[pick(rng)];
        res.pairs.push_back({lambda * a.x + (1.0 - lambda) * b.x, lambda * a.y + (1.0 - lambda) * b.y});
    }
    return res;
}

MixupResult mixup(const std::vector<Pair>& batch, double beta_param, Rng& rng) {
    if (!(beta_param > 0.0)) {
        throw ConfigError("mixup beta parameter must be positive");
    }
    return mixup(batch, [&] { return sample_beta(beta_param, rng); }, rng);
}

void RegimeSpec::validate() const {
    const auto K = num_regimes();
    if (K < 1) {
        throw ConfigError("regime spec needs at least one regime");
    }
    if (transition.rows() != K || transition.cols() != K) {
        throw ConfigError("transition matrix must be K x K");
    }
    for (int r = 0; r < K; ++r) {
        if ((transition.row(r).array() < 0.0).any() || std::abs(transition.row(r).sum() - 1.0) > 1e-12) {
            throw ConfigError("transition row " + std::to_string(r) + " is not on the simplex");
        }
        if (regimes[static_cast<std::size_t>(r)].period < 2.0) {
            throw ConfigError("regime periods must be >= 2");
        }
    }
    if (!initial.empty() && initial.size() != static_cast<std::size_t>(K)) {
        throw ConfigError("initial regime distribution must have K entries");
    }
    if (segment_length < 1 || seasonality < 1) {
        throw ConfigError("segment length and seasonality must be positive");
    }
}

namespace {
int draw_categorical(const std::vector<double>& probs, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double r = u(rng);
    for (std::size_t k = 0; k < probs.size(); ++k) {
        r -= probs[k];
        if (r < 0.0) {
            return static_cast<int>(k);
        }
    }
    return static_cast<int>(probs.size()) - 1;
}
} // namespace

Corpus synth_corpus(const RegimeSpec& spec, int num_series, int length, std::uint64_t seed,
                    const std::string& corpus_id) {
    spec.validate();
    const int K = spec.num_regimes();
    Corpus corpus;
    corpus.id = corpus_id;
    for (int i = 0; i < num_series; ++i) {
        Rng rng(derive_seed(seed ^ spec.seed, static_cast<std::uint64_t>(i)));
        std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
        std::normal_distribution<double> noise(0.0, 1.0);
        std::vector<double> phases(static_cast<std::size_t>(K));
        for (auto& p : phases) {
            p = phase_dist(rng);
        }
        int regime = spec.initial.empty() ? i % K : draw_categorical(spec.initial, rng);

        TimeSeries ts;
        ts.id = corpus_id + "_s" + std::to_string(i);
        ts.seasonality = spec.seasonality;
        ts.channel_names = {"value"};
        ts.values.resize(length, 1);
        ts.regime_labels.resize(static_cast<std::size_t>(length));
        for (int t = 0; t < length; ++t) {
            if (t > 0 && t % spec.segment_length == 0) {
                std::vector<double> row(static_cast<std::size_t>(K));
                for (int k = 0; k < K; ++k) {
                    row[static_cast<std::size_t>(k)] = spec.transition(regime, k);
                }
                regime = draw_categorical(row, rng);
            }
            const auto& p = spec.regimes[static_cast<std::size_t>(regime)];
            const double angle = 2.0 * std::numbers::pi * t / p.period + phases[static_cast<std::size_t>(regime)];
            ts.values(t, 0) = p.level + p.trend * t + p.amplitude * std::sin(angle) + p.noise * noise(rng);
            ts.regime_labels[static_cast<std::size_t>(t)] = regime;
        }
        corpus.series.push_back(std::move(ts));
    }
    return corpus;
}

void write_series_csv(const TimeSeries& series, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot open " + path.string() + " for writing");
    }
    for (Eigen::Index c = 0; c < series.channels(); ++c) {
        if (c > 0) {
            out << ',';
        }
        out << (static_cast<std::size_t>(c) < series.channel_names.size() ? series.channel_names[c]
                                                                          : "ch" + std::to_string(c));
    }
    out << '\n';
    for (Eigen::Index r = 0; r < series.length(); ++r) {
        for (Eigen::Index c = 0; c < series.channels(); ++c) {
            if (c > 0) {
                out << ',';
            }
            out << format_double(series.values(r, c));
        }
        out << '\n';
    }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["id"] = corpus.id;
    manifest["series"] = nlohmann::json::array();
    for (const auto& s : corpus.series) {
        const std::string file = s.id + ".csv";
        write_series_csv(s, dir / file);
        nlohmann::json entry;
        entry["id"] = s.id;
        entry["file"] = file;
        entry["seasonality"] = s.seasonality;
        entry["channel_names"] = s.channel_names;
        if (!s.regime_labels.empty()) {
            entry["regime_labels"] = s.regime_labels;
        }
        manifest["series"].push_back(entry);
    }
    std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
}

Corpus load_corpus(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) {
        throw DataError("missing corpus manifest: " + (dir / "manifest.json").string());
    }
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError((dir / "manifest.json").string() + ": " + e.what());
    }
    Corpus corpus;
    corpus.id = manifest.value("id", dir.filename().string());
    for (const auto& entry : manifest.at("series")) {
        auto ts = ingest_csv(dir / entry.at("file").get<std::string>(), entry.at("seasonality").get<int>());
        ts.id = entry.at("id").get<std::string>();
        if (entry.contains("channel_names")) {
            ts.channel_names = entry["channel_names"].get<std::vector<std::string>>();
        }
        if (entry.contains("regime_labels")) {
            ts.regime_labels = entry["regime_labels"].get<std::vector<int>>();
            if (static_cast<Eigen::Index>(ts.regime_labels.size()) != ts.length()) {
                throw DataError("series '" + ts.id + "': regime label count does not match length");
            }
        }
        corpus.series.push_back(std::move(ts));
    }
    return corpus;
}

} // namespace mixft::series
