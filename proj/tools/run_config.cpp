#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "mixft/errors.hpp"

namespace mixft::cli {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const auto s = trim(text);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        throw ConfigError("bad value for " + key + ": '" + text + "'");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    const auto s = trim(text);
    if (s == "true") {
        return true;
    }
    if (s == "false") {
        return false;
    }
    throw ConfigError("bad value for " + key + ": '" + text + "' (expected true | false)");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(parse_number<T>(key, item));
    }
    if (out.empty()) {
        throw ConfigError(key + " needs at least one value");
    }
    return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out += (i ? "," : "") + std::to_string(v[i]);
    }
    return out;
}

std::string text_of(double v) { return format_double(v); }
std::string text_of(int v) { return std::to_string(v); }
std::string text_of(bool v) { return v ? "true" : "false"; }

struct Field {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
Field number(std::string key, T RunConfig::*member) {
    return {key, [member](const RunConfig& c) { return text_of(c.*member); },
            [key, member](RunConfig& c, const std::string& v) { c.*member = parse_number<T>(key, v); }};
}

template <typename S, typename T>
Field nested(std::string key, S RunConfig::*outer, T S::*member) {
    return {key, [outer, member](const RunConfig& c) { return text_of(c.*outer.*member); },
            [key, outer, member](RunConfig& c, const std::string& v) { c.*outer.*member = parse_number<T>(key, v); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back({"profile", [](const RunConfig& c) { return c.profile; },
                     [](RunConfig& c, const std::string& v) {
                         if (v != "desk" && v != "paper-parity") {
                             throw ConfigError("unknown profile '" + v + "' (expected desk | paper-parity)");
                         }
                         c.profile = v;
                     }});
        f.push_back(nested("window.context", &RunConfig::window, &series::WindowSpec::context));
        f.push_back(nested("window.horizon", &RunConfig::window, &series::WindowSpec::horizon));
        f.push_back(nested("window.stride", &RunConfig::window, &series::WindowSpec::stride));
        f.push_back(nested("model.patch", &RunConfig::model, &model::ModelConfig::patch));
        f.push_back(nested("model.hidden", &RunConfig::model, &model::ModelConfig::hidden));
        f.push_back(nested("model.blocks", &RunConfig::model, &model::ModelConfig::blocks));
        f.push_back(nested("pretrain.lr", &RunConfig::pretrain, &model::OptimizerConfig::lr));
        f.push_back(nested("pretrain.weight_decay", &RunConfig::pretrain, &model::OptimizerConfig::weight_decay));
        f.push_back(nested("pretrain.batch", &RunConfig::pretrain, &model::OptimizerConfig::batch));
        f.push_back(nested("pretrain.steps", &RunConfig::pretrain, &model::OptimizerConfig::steps));
        f.push_back(nested("adapter.rank", &RunConfig::adapter, &lora::AdapterConfig::rank));
        f.push_back(nested("adapter.alpha", &RunConfig::adapter, &lora::AdapterConfig::alpha));
        f.push_back(nested("adapter.dropout", &RunConfig::adapter, &lora::AdapterConfig::dropout));
        f.push_back(nested("optim.lr", &RunConfig::optim, &model::OptimizerConfig::lr));
        f.push_back(nested("optim.weight_decay", &RunConfig::optim, &model::OptimizerConfig::weight_decay));
        f.push_back(nested("optim.beta1", &RunConfig::optim, &model::OptimizerConfig::beta1));
        f.push_back(nested("optim.beta2", &RunConfig::optim, &model::OptimizerConfig::beta2));
        f.push_back(nested("optim.eps", &RunConfig::optim, &model::OptimizerConfig::eps));
        f.push_back(nested("optim.batch", &RunConfig::optim, &model::OptimizerConfig::batch));
        f.push_back(nested("optim.steps", &RunConfig::optim, &model::OptimizerConfig::steps));
        f.push_back({"optim.budget", [](const RunConfig& c) { return pipeline::to_string(c.budget); },
                     [](RunConfig& c, const std::string& v) { c.budget = pipeline::parse_budget(v); }});
        f.push_back({"train.mixup", [](const RunConfig& c) { return text_of(c.mixup); },
                     [](RunConfig& c, const std::string& v) { c.mixup = parse_bool("train.mixup", v); }});
        f.push_back(number("train.mixup_beta", &RunConfig::mixup_beta));
        f.push_back(number("mixture.K", &RunConfig::K));
        f.push_back({"mixture.candidates", [](const RunConfig& c) { return join(c.candidates); },
                     [](RunConfig& c, const std::string& v) { c.candidates = parse_list<int>("mixture.candidates", v); }});
        f.push_back({"mixture.sweep", [](const RunConfig& c) { return join(c.sweep); },
                     [](RunConfig& c, const std::string& v) { c.sweep = parse_list<int>("mixture.sweep", v); }});
        f.push_back({"mixture.partitioner", [](const RunConfig& c) { return pipeline::to_string(c.partitioner); },
                     [](RunConfig& c, const std::string& v) {
                         c.partitioner = pipeline::parse_partitioner(v);
                         if (c.partitioner == pipeline::PartitionerKind::PerDataset) {
                             throw ConfigError("mixture.partitioner must be vi | kmeans");
                         }
                     }});
        f.push_back({"mixture.predictive",
                     [](const RunConfig& c) { return c.predictive == mixture::Predictive::StudentT ? "student_t" : "plugin"; },
                     [](RunConfig& c, const std::string& v) {
                         if (v == "student_t") {
                             c.predictive = mixture::Predictive::StudentT;
                         } else if (v == "plugin") {
                             c.predictive = mixture::Predictive::PlugIn;
                         } else {
                             throw ConfigError("unknown predictive '" + v + "' (expected student_t | plugin)");
                         }
                     }});
        f.push_back(number("mixture.max_iters", &RunConfig::vi_max_iters));
        f.push_back(number("mixture.tol", &RunConfig::vi_tol));
        f.push_back(number("mixture.restarts", &RunConfig::vi_restarts));
        f.push_back(number("mixture.kmeans_restarts", &RunConfig::kmeans_restarts));
        f.push_back({"routing.mode", [](const RunConfig& c) { return pipeline::to_string(c.routing); },
                     [](RunConfig& c, const std::string& v) { c.routing = pipeline::parse_routing(v); }});
        f.push_back({"routing.averaging",
                     [](const RunConfig& c) { return c.averaging == lora::AveragingLevel::Factor ? "factor" : "delta"; },
                     [](RunConfig& c, const std::string& v) {
                         if (v == "factor") {
                             c.averaging = lora::AveragingLevel::Factor;
                         } else if (v == "delta") {
                             c.averaging = lora::AveragingLevel::Delta;
                         } else {
                             throw ConfigError("unknown averaging '" + v + "' (expected factor | delta)");
                         }
                     }});
        f.push_back({"run.seeds", [](const RunConfig& c) { return join(c.seeds); },
                     [](RunConfig& c, const std::string& v) { c.seeds = parse_list<std::uint64_t>("run.seeds", v); }});
        f.push_back(number("run.threads", &RunConfig::threads));
        f.push_back(nested("synth.period_a", &RunConfig::synth, &scenario::TwoRegimeConfig::period_a));
        f.push_back(nested("synth.noise_a", &RunConfig::synth, &scenario::TwoRegimeConfig::noise_a));
        f.push_back(nested("synth.period_b", &RunConfig::synth, &scenario::TwoRegimeConfig::period_b));
        f.push_back(nested("synth.noise_b", &RunConfig::synth, &scenario::TwoRegimeConfig::noise_b));
        f.push_back(nested("synth.segment_length", &RunConfig::synth, &scenario::TwoRegimeConfig::segment_length));
        f.push_back(nested("synth.stay", &RunConfig::synth, &scenario::TwoRegimeConfig::stay));
        f.push_back(nested("synth.seasonality", &RunConfig::synth, &scenario::TwoRegimeConfig::seasonality));
        f.push_back(nested("synth.length", &RunConfig::synth, &scenario::TwoRegimeConfig::length));
        f.push_back(nested("synth.series_per_dataset", &RunConfig::synth, &scenario::TwoRegimeConfig::series_per_dataset));
        f.push_back(nested("synth.pretrain_series", &RunConfig::synth, &scenario::TwoRegimeConfig::pretrain_series));
        f.push_back({"synth.pretrain_periods",
                     [](const RunConfig& c) {
                         std::string out;
                         for (std::size_t i = 0; i < c.synth.pretrain_periods.size(); ++i) {
                             out += (i ? "," : "") + format_double(c.synth.pretrain_periods[i]);
                         }
                         return out;
                     },
                     [](RunConfig& c, const std::string& v) {
                         c.synth.pretrain_periods = parse_list<double>("synth.pretrain_periods", v);
                     }});
        f.push_back(nested("synth.pretrain_noise", &RunConfig::synth, &scenario::TwoRegimeConfig::pretrain_noise));
        f.push_back(number("data.seasonality", &RunConfig::data_seasonality));
        auto path_field = [](std::string key, std::string RunConfig::*member) {
            return Field{key, [member](const RunConfig& c) { return c.*member; },
                         [member](RunConfig& c, const std::string& v) { c.*member = v; }};
        };
        f.push_back(path_field("paths.corpus", &RunConfig::corpus_dir));
        f.push_back(path_field("paths.model", &RunConfig::model_dir));
        f.push_back(path_field("paths.artifact", &RunConfig::artifact_dir));
        f.push_back(path_field("paths.report", &RunConfig::report_dir));
        return f;
    }();
    return table;
}

const Field& field(const std::string& key) {
    for (const auto& f : fields()) {
        if (f.key == key) {
            return f;
        }
    }
    std::string valid;
    for (const auto& f : fields()) {
        valid += "\n  " + f.key;
    }
    throw ConfigError("unknown config key '" + key + "'; valid keys:" + valid);
}

std::pair<std::string, std::string> split_assignment(const std::string& line, const std::string& where) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
        throw ConfigError(where + ": expected key = value, got '" + line + "'");
    }
    return {trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
}

} // namespace

RunConfig profile_defaults(const std::string& profile) {
    RunConfig c;
    if (profile == "desk") {
        c.pretrain.steps = 2000;
        c.optim.steps = 600;
        return c;
    }
    if (profile != "paper-parity") {
        throw ConfigError("unknown profile '" + profile + "' (expected desk | paper-parity)");
    }
    c.profile = profile;
    c.window.context = 520;
    c.window.horizon = 30;
    c.model.patch = 8;
    c.model.hidden = 64;
    c.model.blocks = 2;
    c.pretrain.steps = 20000;
    c.optim.lr = 5e-5;
    c.optim.batch = 256;
    c.optim.steps = 5000;
    c.candidates = {2, 3, 4, 5, 10};
    c.synth.length = 4000;
    return c;
}

std::vector<std::string> valid_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) {
        keys.push_back(f.key);
    }
    return keys;
}

void set_value(RunConfig& cfg, const std::string& key, const std::string& value) { field(key).set(cfg, value); }

std::string get_value(const RunConfig& cfg, const std::string& key) { return field(key).get(cfg); }

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.resize(hash);
        }
        if (trim(line).empty()) {
            continue;
        }
        entries.push_back(split_assignment(line, "line " + std::to_string(lineno)));
    }
    std::vector<std::pair<std::string, std::string>> sets;
    for (const auto& o : overrides) {
        sets.push_back(split_assignment(o, "--set"));
    }
    std::string profile = "desk";
    for (const auto* list : {&entries, &sets}) {
        for (const auto& [k, v] : *list) {
            if (k == "profile") {
                profile = v;
            }
        }
    }
    RunConfig cfg = profile_defaults(profile);
    for (const auto* list : {&entries, &sets}) {
        for (const auto& [k, v] : *list) {
            if (k != "profile") {
                set_value(cfg, k, v);
            }
        }
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), overrides);
}

std::string serialize(const RunConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) {
        out += f.key + " = " + f.get(cfg) + "\n";
    }
    return out;
}

bool operator==(const RunConfig& a, const RunConfig& b) { return serialize(a) == serialize(b); }

pipeline::FinetuneConfig finetune_config(const RunConfig& cfg, std::uint64_t seed) {
    pipeline::FinetuneConfig f;
    f.K = cfg.K;
    f.partitioner = cfg.partitioner;
    f.window = cfg.window;
    f.adapter = cfg.adapter;
    f.train.optimizer = cfg.optim;
    f.train.use_mixup = cfg.mixup;
    f.train.mixup_beta = cfg.mixup_beta;
    f.vi.max_iters = cfg.vi_max_iters;
    f.vi.tol = cfg.vi_tol;
    f.vi.restarts = cfg.vi_restarts;
    f.predictive = cfg.predictive;
    f.averaging = cfg.averaging;
    f.budget = cfg.budget;
    f.kmeans_restarts = cfg.kmeans_restarts;
    f.seed = seed;
    return f;
}

model::ModelConfig model_config(const RunConfig& cfg, std::uint64_t seed) {
    auto m = cfg.model;
    m.context = cfg.window.context;
    m.horizon = cfg.window.horizon;
    m.seed = seed;
    return m;
}

scenario::TwoRegimeConfig scenario_config(const RunConfig& cfg, std::uint64_t seed) {
    auto s = cfg.synth;
    s.seed = seed;
    return s;
}

} // namespace mixft::cli
