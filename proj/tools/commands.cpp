#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mixft/errors.hpp"
#include "mixft/evalkit.hpp"
#include "mixft/tensor_io.hpp"

namespace mixft::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kRunManifest = "run_manifest.json";

std::uint64_t first_seed(const RunConfig& cfg, const CommandOptions& opts) { return effective_seeds(cfg, opts).front(); }

fs::path out_dir(const CommandOptions& opts, const fs::path& fallback) {
    fs::path dir = opts.out ? fs::path(*opts.out) : fallback;
    fs::create_directories(dir);
    return dir;
}

void require(const fs::path& path, const std::string& what) {
    if (!fs::exists(path)) {
        throw DataError("missing " + what + ": expected " + path.string());
    }
}

/// Datasets under root/<group>/, sorted by directory name.
std::vector<series::Corpus> load_group(const RunConfig& cfg, const std::string& group) {
    const fs::path root = fs::path(cfg.corpus_dir) / group;
    require(root, group + " corpora (run `synth` or point paths.corpus at a corpus root)");
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) {
            dirs.push_back(e.path());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    std::vector<series::Corpus> out;
    for (const auto& d : dirs) {
        if (fs::exists(d / "manifest.json")) {
            out.push_back(series::load_corpus(d));
            continue;
        }
        // raw CSV dataset: one series per file, seasonality from config
        if (cfg.data_seasonality < 1) {
            throw ConfigError("dataset " + d.string() + " has no manifest; set data.seasonality for raw CSV input");
        }
        series::Corpus c;
        c.id = d.filename().string();
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(d)) {
            if (e.is_regular_file() && e.path().extension() == ".csv") {
                files.push_back(e.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            c.series.push_back(series::ingest_csv(f, cfg.data_seasonality));
        }
        out.push_back(std::move(c));
    }
    if (out.empty()) {
        throw DataError("no datasets found under " + root.string());
    }
    return out;
}

series::Corpus load_pretrain_corpus(const RunConfig& cfg) {
    const fs::path dir = fs::path(cfg.corpus_dir) / "pretrain";
    require(dir / "manifest.json", "pretraining corpus (run `synth`)");
    return series::load_corpus(dir);
}

model::BaseModel load_base(const RunConfig& cfg) {
    require(fs::path(cfg.model_dir) / "manifest.json", "base model checkpoint (run `pretrain`)");
    return model::load_model(cfg.model_dir);
}

pipeline::MixftArtifact load_artifact_checked(const RunConfig& cfg) {
    require(fs::path(cfg.artifact_dir) / "manifest.json", "MixFT artifact (run `finetune`)");
    return pipeline::load_artifact(cfg.artifact_dir);
}

std::vector<series::Window> replay_windows(const RunConfig& cfg) {
    return series::window_corpus(load_pretrain_corpus(cfg), cfg.window);
}

void write_run_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                        const std::vector<std::uint64_t>& seeds, const std::vector<std::pair<std::string, fs::path>>& inputs,
                        json extra = json::object()) {
    json m;
    m["command"] = command;
    m["config_hash"] = io::sha256_text(serialize(cfg));
    m["config"] = serialize(cfg);
    m["seeds"] = seeds;
    json in = json::object();
    for (const auto& [name, path] : inputs) {
        in[name] = {{"path", path.string()}, {"hash", hash_path(path)}};
    }
    m["inputs"] = in;
    m["result"] = std::move(extra);
    eval::write_text(dir / kRunManifest, m.dump(2) + "\n");
}

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) {
        std::fprintf(stderr, "warning: %s\n", w.c_str());
    }
}

std::vector<std::vector<series::Window>> window_groups(const std::vector<series::Corpus>& corpora,
                                                       const series::WindowSpec& spec) {
    std::vector<std::vector<series::Window>> out;
    for (const auto& c : corpora) {
        auto w = series::window_corpus(c, spec);
        if (w.empty()) {
            std::fprintf(stderr, "warning: dataset %s yields no windows; skipped\n", c.id.c_str());
            continue;
        }
        out.push_back(std::move(w));
    }
    if (out.empty()) {
        throw DataError("no evaluation windows");
    }
    return out;
}

void write_timelines(const pipeline::MixftArtifact& art, const std::vector<series::Corpus>& corpora, const fs::path& dir) {
    for (const auto& c : corpora) {
        for (const auto& s : c.series) {
            if (s.length() < art.window.context) {
                continue;
            }
            for (int ch = 0; ch < s.channels(); ++ch) {
                const auto tl = eval::membership_timeline(art, s, ch);
                const auto stem = eval::timeline_file_stem(tl);
                eval::write_timeline_csv(tl, dir / (stem + ".csv"));
                std::vector<eval::Series2D> lines(1);
                lines[0].label = "routed sub-domain";
                for (std::size_t i = 0; i < tl.time.size(); ++i) {
                    lines[0].x.push_back(tl.time[i]);
                    lines[0].y.push_back(tl.component[i]);
                }
                if (!tl.truth.empty()) {
                    lines.push_back({"generator regime", lines[0].x, {}});
                    for (int v : tl.truth) {
                        lines[1].y.push_back(v);
                    }
                }
                eval::write_text(dir / (stem + ".svg"), eval::step_plot_svg("membership " + s.id, lines));
            }
        }
    }
}

void write_elbo_chart(const mixture::GmmPosterior& post, const fs::path& path) {
    eval::Series2D line{"ELBO", {}, {}};
    for (std::size_t i = 0; i < post.elbo_trace.size(); ++i) {
        line.x.push_back(static_cast<double>(i));
        line.y.push_back(post.elbo_trace[i]);
    }
    eval::write_text(path, eval::line_plot_svg("ELBO by iteration", {line}));
}

void write_mase_chart(const std::vector<std::string>& methods, const Mat& mean, const Mat& err, const fs::path& path) {
    std::vector<double> v, e;
    for (Eigen::Index c = 0; c < mean.cols(); ++c) {
        v.push_back(mean.col(c).mean());
        e.push_back(err.col(c).mean());
    }
    eval::write_text(path, eval::bar_chart_svg("mean MASE over datasets", methods, v, e));
}

/// Mean and standard error of per-seed values.
eval::Summary across_seeds(const std::vector<double>& values) { return eval::summarize(values); }

} // namespace

std::vector<std::uint64_t> effective_seeds(const RunConfig& cfg, const CommandOptions& opts) {
    if (opts.seed) {
        return {*opts.seed};
    }
    if (cfg.seeds.empty()) {
        throw ConfigError("run.seeds is empty");
    }
    return cfg.seeds;
}

std::string hash_path(const fs::path& path) {
    if (fs::is_regular_file(path)) {
        return io::sha256_file(path);
    }
    if (!fs::is_directory(path)) {
        throw DataError("cannot hash missing path " + path.string());
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(path)) {
        if (e.is_regular_file() && e.path().filename() != kRunManifest) {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::string list;
    for (const auto& f : files) {
        list += fs::relative(f, path).generic_string() + ":" + io::sha256_file(f) + "\n";
    }
    return io::sha256_text(list);
}

ScoreTable read_score_table(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot read score table " + path.string());
    }
    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) {
            while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) {
                f.pop_back();
            }
            out.push_back(f);
        }
        return out;
    };
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError(path.string() + " is empty");
    }
    ScoreTable t;
    const auto header = split(line);
    if (header.size() < 2) {
        throw DataError(path.string() + ": header needs a dataset column and at least one method");
    }
    t.methods.assign(header.begin() + 1, header.end());
    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto f = split(line);
        if (f.size() != header.size()) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(f.size()));
        }
        t.datasets.push_back(f[0]);
        std::vector<double> r;
        for (std::size_t i = 1; i < f.size(); ++i) {
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(f[i].data(), f[i].data() + f[i].size(), v);
            if (ec != std::errc() || ptr != f[i].data() + f[i].size()) {
                throw DataError(path.string() + ":" + std::to_string(lineno) + ": non-numeric score '" + f[i] + "'");
            }
            r.push_back(v);
        }
        rows.push_back(std::move(r));
    }
    t.scores.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.methods.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            t.scores(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    return t;
}

void cmd_synth(const RunConfig& cfg, const CommandOptions& opts) {
    const auto seed = first_seed(cfg, opts);
    const fs::path root = out_dir(opts, cfg.corpus_dir);
    const auto sc = scenario::two_regime(scenario_config(cfg, seed));
    for (const auto& c : sc.finetune) {
        series::save_corpus(c, root / "finetune" / c.id);
    }
    for (const auto& c : sc.evaluation) {
        series::save_corpus(c, root / "evaluation" / c.id);
    }
    series::save_corpus(sc.pretrain, root / "pretrain");
    write_run_manifest(root, "synth", cfg, {seed}, {});
    std::printf("wrote %zu fine-tuning, %zu evaluation and 1 pretraining corpus to %s\n", sc.finetune.size(),
                sc.evaluation.size(), root.string().c_str());
}

void cmd_pretrain(const RunConfig& cfg, const CommandOptions& opts) {
    const auto seed = first_seed(cfg, opts);
    const auto corpus = load_pretrain_corpus(cfg);
    const auto windows = series::window_corpus(corpus, cfg.window);
    const fs::path dir = out_dir(opts, cfg.model_dir);
    auto res = model::pretrain(model::init_model(model_config(cfg, seed)), windows, cfg.pretrain, seed);
    model::save_model(res.model, dir, cfg.pretrain.steps);
    std::ofstream trace(dir / "loss_trace.csv", std::ios::trunc);
    trace << "step,loss\n";
    for (std::size_t i = 0; i < res.loss_trace.size(); ++i) {
        trace << i << ',' << format_double(res.loss_trace[i]) << '\n';
    }
    trace.close();
    write_run_manifest(dir, "pretrain", cfg, {seed}, {{"pretrain_corpus", fs::path(cfg.corpus_dir) / "pretrain"}},
                       {{"initial_loss", res.loss_trace.front()}, {"final_loss", res.loss_trace.back()}});
    std::printf("pretrained %zu parameters: loss %.6g -> %.6g\n", res.model.parameter_count(), res.loss_trace.front(),
                res.loss_trace.back());
}

void cmd_fit_gmm(const RunConfig& cfg, const CommandOptions& opts) {
    const auto seed = first_seed(cfg, opts);
    const auto base = load_base(cfg);
    const auto corpora = load_group(cfg, "finetune");
    std::vector<series::Window> windows;
    for (const auto& c : corpora) {
        auto w = series::window_corpus(c, cfg.window);
        windows.insert(windows.end(), w.begin(), w.end());
    }
    if (windows.empty()) {
        throw DataError("fine-tuning corpora produced no windows");
    }
    Mat Z(static_cast<Eigen::Index>(windows.size()), base.config.hidden);
    parallel_for(windows.size(), [&](std::size_t i) {
        Z.row(static_cast<Eigen::Index>(i)) = model::embed(base, as_span(windows[i].context)).transpose();
    });
    const fs::path dir = out_dir(opts, fs::path(cfg.report_dir) / "gmm");
    const auto fc = finetune_config(cfg, seed);
    std::vector<int> labels;
    json result;
    if (cfg.partitioner == pipeline::PartitionerKind::VI) {
        auto pr = mixture::default_prior(Z, cfg.K);
        print_warnings(pr.warnings);
        auto vo = fc.vi;
        vo.seed = derive_seed(seed, 1);
        auto fit = mixture::fit_vi(Z, cfg.K, pr.prior, vo);
        print_warnings(fit.warnings);
        mixture::save_posterior(fit.posterior, dir / "posterior");
        write_elbo_chart(fit.posterior, dir / "elbo.svg");
        std::ofstream e(dir / "elbo.csv", std::ios::trunc);
        e << "iteration,elbo\n";
        for (std::size_t i = 0; i < fit.posterior.elbo_trace.size(); ++i) {
            e << i << ',' << format_double(fit.posterior.elbo_trace[i]) << '\n';
        }
        labels = mixture::partition(Z, fit.posterior, cfg.predictive).labels;
        result = {{"iterations", fit.iterations}, {"converged", fit.converged}, {"elbo", fit.posterior.elbo_trace.back()}};
    } else {
        auto km = mixture::kmeans_fit(Z, cfg.K, 100, cfg.kmeans_restarts, derive_seed(seed, 1));
        print_warnings(km.warnings);
        io::write_tensor(dir / "centroids.mxt", io::from_matrix(km.centroids));
        labels = km.labels;
        result = {{"inertia", km.inertia}};
    }
    std::ofstream out(dir / "labels.csv", std::ios::trunc);
    out << "dataset,series,channel,start,component\n";
    std::vector<std::size_t> sizes(static_cast<std::size_t>(cfg.K), 0);
    for (std::size_t i = 0; i < windows.size(); ++i) {
        out << windows[i].dataset_id << ',' << windows[i].series_id << ',' << windows[i].channel << ','
            << windows[i].start << ',' << labels[i] << '\n';
        ++sizes[static_cast<std::size_t>(labels[i])];
    }
    result["partition_sizes"] = sizes;
    write_run_manifest(dir, "fit-gmm", cfg, {seed},
                       {{"base_model", cfg.model_dir}, {"finetune_corpora", fs::path(cfg.corpus_dir) / "finetune"}}, result);
    std::printf("fitted %s router with K=%d on %zu windows\n", pipeline::to_string(cfg.partitioner).c_str(), cfg.K,
                windows.size());
}

void cmd_finetune(const RunConfig& cfg, const CommandOptions& opts) {
    const auto seed = first_seed(cfg, opts);
    const auto base = load_base(cfg);
    const auto corpora = load_group(cfg, "finetune");
    const auto replay = replay_windows(cfg);
    auto res = pipeline::finetune(corpora, base, finetune_config(cfg, seed), replay);
    print_warnings(res.warnings);
    res.artifact.base_model_path = fs::canonical(cfg.model_dir).string();
    res.artifact.base_model_hash = pipeline::checkpoint_hash(cfg.model_dir);
    const fs::path dir = out_dir(opts, cfg.artifact_dir);
    pipeline::save_artifact(res.artifact, dir);
    write_run_manifest(dir, "finetune", cfg, {seed},
                       {{"base_model", cfg.model_dir},
                        {"finetune_corpora", fs::path(cfg.corpus_dir) / "finetune"},
                        {"pretrain_corpus", fs::path(cfg.corpus_dir) / "pretrain"}},
                       {{"partition_sizes", res.artifact.partition_sizes}});
    std::printf("trained %d adapters; partition sizes:", res.artifact.K());
    for (auto s : res.artifact.partition_sizes) {
        std::printf(" %zu", s);
    }
    std::printf("\n");
}

void cmd_forecast(const RunConfig& cfg, const CommandOptions& opts) {
    if (!opts.input) {
        throw ConfigError("forecast needs --input <series.csv>");
    }
    const auto art = load_artifact_checked(cfg);
    require(*opts.input, "input series");
    const auto ts = series::ingest_csv(*opts.input, std::max(1, cfg.data_seasonality));
    if (opts.channel < 0 || opts.channel >= ts.channels()) {
        throw ConfigError("channel " + std::to_string(opts.channel) + " out of range");
    }
    const int L = art.base.config.context;
    if (ts.length() < L) {
        throw DataError("input series has " + std::to_string(ts.length()) + " steps; the model needs " + std::to_string(L));
    }
    const Vec x = ts.values.col(opts.channel).tail(L);
    const fs::path dir = out_dir(opts, fs::path(cfg.report_dir) / "forecast");
    std::vector<pipeline::RoutingMode> modes{cfg.routing};
    if (opts.all_modes) {
        modes = {pipeline::RoutingMode::Hard, pipeline::RoutingMode::Soft, pipeline::RoutingMode::Ensemble,
                 pipeline::RoutingMode::Mu};
    }
    json result = json::object();
    for (auto mode : modes) {
        const auto f = pipeline::forecast(art, as_span(x), mode);
        const auto name = pipeline::to_string(mode);
        std::ofstream out(dir / ("forecast_" + name + ".csv"), std::ios::trunc);
        out << "step,value\n";
        for (Eigen::Index h = 0; h < f.forecast.size(); ++h) {
            out << h + 1 << ',' << format_double(f.forecast(h)) << '\n';
        }
        result[name] = {{"probabilities", std::vector<double>(f.probabilities.data(), f.probabilities.data() + f.probabilities.size())},
                        {"chosen", f.chosen},
                        {"entropy_bits", f.entropy_bits},
                        {"adapter_evaluations", f.adapter_evaluations}};
    }
    write_run_manifest(dir, "forecast", cfg, {art.seed}, {{"artifact", cfg.artifact_dir}, {"input", *opts.input}}, result);
    std::printf("wrote %zu forecast file(s) to %s\n", modes.size(), dir.string().c_str());
}

void cmd_evaluate(const RunConfig& cfg, const CommandOptions& opts) {
    const fs::path dir = out_dir(opts, cfg.report_dir);
    if (opts.scores) {
        const auto t = read_score_table(*opts.scores);
        const auto ranks = eval::average_rank(t.datasets, t.methods, t.scores);
        eval::write_ranks_csv(ranks, dir / "ranks.csv");
        eval::write_report_readme(dir);
        write_run_manifest(dir, "evaluate", cfg, {}, {{"scores", *opts.scores}});
        for (std::size_t m = 0; m < t.methods.size(); ++m) {
            std::printf("%-16s %.4g\n", t.methods[m].c_str(), ranks.average(static_cast<Eigen::Index>(m)));
        }
        return;
    }
    const auto art = load_artifact_checked(cfg);
    const auto corpora = load_group(cfg, "evaluation");
    const auto groups = window_groups(corpora, art.window);
    std::vector<std::string> methods{"base"};
    std::vector<pipeline::RoutingMode> modes{pipeline::RoutingMode::Hard, pipeline::RoutingMode::Soft,
                                             pipeline::RoutingMode::Ensemble, pipeline::RoutingMode::Mu};
    for (auto m : modes) {
        methods.push_back("mixft_" + pipeline::to_string(m));
    }
    std::vector<std::string> datasets;
    Mat mean(static_cast<Eigen::Index>(groups.size()), static_cast<Eigen::Index>(methods.size()));
    Mat err = mean;
    std::vector<eval::EvalRecord> records;
    for (std::size_t d = 0; d < groups.size(); ++d) {
        datasets.push_back(groups[d].front().dataset_id);
        for (std::size_t m = 0; m < methods.size(); ++m) {
            const auto s = m == 0 ? pipeline::evaluate_base(art.base, groups[d])
                                  : pipeline::evaluate_windows(art, groups[d], modes[m - 1]);
            mean(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m)) = s.mean;
            err(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m)) = s.stderr_;
            records.push_back({datasets.back(), methods[m], std::to_string(art.seed), s});
        }
    }
    eval::write_mase_csv(records, dir / "mase.csv");
    eval::write_ranks_csv(eval::average_rank(datasets, methods, mean), dir / "ranks.csv");
    eval::write_entropy_csv(eval::entropy_report(art, groups), dir / "entropy.csv");
    write_timelines(art, corpora, dir);
    write_mase_chart(methods, mean, err, dir / "mase.svg");
    if (art.posterior) {
        write_elbo_chart(*art.posterior, dir / "elbo.svg");
    }
    eval::write_report_readme(dir);
    write_run_manifest(dir, "evaluate", cfg, {art.seed},
                       {{"artifact", cfg.artifact_dir}, {"evaluation_corpora", fs::path(cfg.corpus_dir) / "evaluation"}});
    for (std::size_t m = 0; m < methods.size(); ++m) {
        std::printf("%-16s mean MASE %.4f\n", methods[m].c_str(), mean.col(static_cast<Eigen::Index>(m)).mean());
    }
}

void cmd_select_k(const RunConfig& cfg, const CommandOptions& opts) {
    const fs::path dir = out_dir(opts, fs::path(cfg.report_dir) / "select_k");
    pipeline::SelectKResult res;
    std::vector<std::pair<std::string, fs::path>> inputs;
    std::vector<std::uint64_t> seeds;
    if (opts.scores) {
        const auto t = read_score_table(*opts.scores);
        std::vector<int> ks;
        for (const auto& m : t.methods) {
            const auto digits = m.rfind("K=", 0) == 0 ? m.substr(2) : m;
            int k = 0;
            const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
            if (ec != std::errc() || ptr != digits.data() + digits.size()) {
                throw DataError("select-k score columns must be K values (got '" + m + "')");
            }
            ks.push_back(k);
        }
        res = pipeline::select_k_from_scores(ks, t.datasets, t.scores);
        inputs.push_back({"scores", *opts.scores});
    } else {
        const auto seed = first_seed(cfg, opts);
        seeds = {seed};
        const auto base = load_base(cfg);
        res = pipeline::select_k(load_group(cfg, "finetune"), base, cfg.candidates, finetune_config(cfg, seed),
                                 replay_windows(cfg));
        print_warnings(res.warnings);
        inputs = {{"base_model", cfg.model_dir}, {"finetune_corpora", fs::path(cfg.corpus_dir) / "finetune"}};
    }
    eval::write_ranks_csv(res.table, dir / "ranks.csv");
    eval::write_report_readme(dir);
    write_run_manifest(dir, "select-k", cfg, seeds, inputs, {{"chosen", res.chosen}});
    for (std::size_t i = 0; i < res.candidates.size(); ++i) {
        std::printf("K=%-3d average rank %.4g\n", res.candidates[i], res.table.average(static_cast<Eigen::Index>(i)));
    }
    std::printf("selected K=%d\n", res.chosen);
}

void cmd_ablate(const RunConfig& cfg, const CommandOptions& opts) {
    const auto seeds = effective_seeds(cfg, opts);
    const auto base = load_base(cfg);
    const auto ft = load_group(cfg, "finetune");
    const auto ev = load_group(cfg, "evaluation");
    const auto replay = replay_windows(cfg);
    const auto groups = window_groups(ev, cfg.window);
    const fs::path dir = out_dir(opts, fs::path(cfg.report_dir) / "ablate");

    std::vector<std::string> datasets;
    for (const auto& g : groups) {
        datasets.push_back(g.front().dataset_id);
    }
    // method name -> per dataset -> per seed mean MASE
    std::map<std::string, std::vector<std::vector<double>>> per_seed;
    std::vector<std::string> methods;
    std::vector<eval::EvalRecord> records;
    auto record = [&](const std::string& method, std::uint64_t seed, std::size_t d, const eval::Summary& s) {
        if (!per_seed.count(method)) {
            methods.push_back(method);
            per_seed[method].resize(groups.size());
        }
        per_seed[method][d].push_back(s.mean);
        records.push_back({datasets[d], method, std::to_string(seed), s});
    };
    auto evaluate_all = [&](const std::string& name, const pipeline::MixftArtifact& art, pipeline::RoutingMode mode,
                            std::uint64_t seed) {
        for (std::size_t d = 0; d < groups.size(); ++d) {
            record(name, seed, d, pipeline::evaluate_windows(art, groups[d], mode));
        }
    };
    const std::vector<pipeline::RoutingMode> modes{pipeline::RoutingMode::Hard, pipeline::RoutingMode::Soft,
                                                   pipeline::RoutingMode::Ensemble, pipeline::RoutingMode::Mu};
    std::optional<pipeline::MixftArtifact> first_mixft;
    for (auto seed : seeds) {
        std::printf("seed %llu\n", static_cast<unsigned long long>(seed));
        for (std::size_t d = 0; d < groups.size(); ++d) {
            record("base", seed, d, pipeline::evaluate_base(base, groups[d]));
        }
        auto fc = finetune_config(cfg, seed);
        fc.partitioner = pipeline::PartitionerKind::VI;
        fc.K = 1;
        evaluate_all("shared", pipeline::finetune(ft, base, fc, replay).artifact, pipeline::RoutingMode::Hard, seed);
        evaluate_all("mu_datasets", pipeline::per_dataset_baseline(ft, base, fc, replay).artifact, pipeline::RoutingMode::Mu,
                     seed);
        fc.K = cfg.K;
        auto vi = pipeline::finetune(ft, base, fc, replay);
        print_warnings(vi.warnings);
        for (auto m : modes) {
            evaluate_all("mixft_" + pipeline::to_string(m), vi.artifact, m, seed);
        }
        if (!first_mixft) {
            first_mixft = vi.artifact;
        }
        fc.partitioner = pipeline::PartitionerKind::KMeans;
        evaluate_all("mixft_kmeans", pipeline::finetune(ft, base, fc, replay).artifact, pipeline::RoutingMode::Hard, seed);
        fc.partitioner = pipeline::PartitionerKind::VI;
        for (int k : cfg.sweep) {
            fc.K = k;
            if (k == cfg.K) {
                evaluate_all("mixft_K" + std::to_string(k), vi.artifact, pipeline::RoutingMode::Hard, seed);
                continue;
            }
            try {
                evaluate_all("mixft_K" + std::to_string(k), pipeline::finetune(ft, base, fc, replay).artifact,
                             pipeline::RoutingMode::Hard, seed);
            } catch (const DataError& e) {
                std::fprintf(stderr, "warning: K=%d skipped for seed %llu: %s\n", k, static_cast<unsigned long long>(seed),
                             e.what());
            }
        }
    }
    // across-seed aggregate rows and the rank table over complete methods
    std::vector<std::string> ranked;
    Mat mean(static_cast<Eigen::Index>(groups.size()), 0);
    Mat err = mean;
    for (const auto& m : methods) {
        bool complete = true;
        for (const auto& v : per_seed[m]) {
            complete = complete && v.size() == seeds.size();
        }
        Vec col(static_cast<Eigen::Index>(groups.size())), ecol(static_cast<Eigen::Index>(groups.size()));
        for (std::size_t d = 0; d < groups.size(); ++d) {
            const auto s = across_seeds(per_seed[m][d]);
            records.push_back({datasets[d], m, "all", s});
            col(static_cast<Eigen::Index>(d)) = s.mean;
            ecol(static_cast<Eigen::Index>(d)) = s.stderr_;
        }
        if (complete) {
            ranked.push_back(m);
            mean.conservativeResize(Eigen::NoChange, mean.cols() + 1);
            err.conservativeResize(Eigen::NoChange, err.cols() + 1);
            mean.col(mean.cols() - 1) = col;
            err.col(err.cols() - 1) = ecol;
        }
    }
    eval::write_mase_csv(records, dir / "mase.csv");
    eval::write_ranks_csv(eval::average_rank(datasets, ranked, mean), dir / "ranks.csv");
    eval::write_entropy_csv(eval::entropy_report(*first_mixft, groups), dir / "entropy.csv");
    write_timelines(*first_mixft, ev, dir);
    write_mase_chart(ranked, mean, err, dir / "mase.svg");
    if (first_mixft->posterior) {
        write_elbo_chart(*first_mixft->posterior, dir / "elbo.svg");
    }
    eval::write_report_readme(dir);
    write_run_manifest(dir, "ablate", cfg, seeds,
                       {{"base_model", cfg.model_dir},
                        {"finetune_corpora", fs::path(cfg.corpus_dir) / "finetune"},
                        {"evaluation_corpora", fs::path(cfg.corpus_dir) / "evaluation"},
                        {"pretrain_corpus", fs::path(cfg.corpus_dir) / "pretrain"}});
    const auto table = eval::average_rank(datasets, ranked, mean);
    for (std::size_t m = 0; m < ranked.size(); ++m) {
        std::printf("%-18s mean MASE %.4f  avg rank %.3g\n", ranked[m].c_str(), mean.col(static_cast<Eigen::Index>(m)).mean(),
                    table.average(static_cast<Eigen::Index>(m)));
    }
}

void cmd_timeline(const RunConfig& cfg, const CommandOptions& opts) {
    const auto art = load_artifact_checked(cfg);
    const fs::path dir = out_dir(opts, fs::path(cfg.report_dir) / "timelines");
    std::vector<std::pair<std::string, fs::path>> inputs{{"artifact", cfg.artifact_dir}};
    if (opts.input) {
        require(*opts.input, "input series");
        series::Corpus c;
        c.series.push_back(series::ingest_csv(*opts.input, std::max(1, cfg.data_seasonality)));
        c.series.back().id = fs::path(*opts.input).stem().string();
        write_timelines(art, {c}, dir);
        inputs.push_back({"input", *opts.input});
    } else {
        write_timelines(art, load_group(cfg, "finetune"), dir);
        write_timelines(art, load_group(cfg, "evaluation"), dir);
        inputs.push_back({"corpora", cfg.corpus_dir});
    }
    eval::write_report_readme(dir);
    write_run_manifest(dir, "timeline", cfg, {art.seed}, inputs);
    std::printf("wrote membership timelines to %s\n", dir.string().c_str());
}

} // namespace mixft::cli
