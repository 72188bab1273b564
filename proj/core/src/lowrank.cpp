#include "mixft/lowrank.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "mixft/errors.hpp"
#include "mixft/tensor_io.hpp"

namespace mixft::lora {

void AdapterConfig::validate() const {
    if (rank < 1) {
        throw ConfigError("adapter rank must be >= 1");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw ConfigError("adapter dropout must lie in [0, 1)");
    }
}

const LoraFactor* LoraModule::find(const std::string& target) const {
    for (const auto& f : factors) {
        if (f.target == target) {
            return &f;
        }
    }
    return nullptr;
}

std::size_t LoraModule::parameter_count() const {
    std::size_t n = 0;
    for (const auto& f : factors) {
        n += static_cast<std::size_t>(f.A.size() + f.B.size());
    }
    return n;
}

std::vector<std::span<double>> LoraModule::parameters() {
    std::vector<std::span<double>> out;
    for (auto& f : factors) {
        out.emplace_back(f.A.data(), static_cast<std::size_t>(f.A.size()));
        out.emplace_back(f.B.data(), static_cast<std::size_t>(f.B.size()));
    }
    return out;
}

std::vector<std::span<const double>> LoraModule::parameters() const {
    std::vector<std::span<const double>> out;
    for (const auto& f : factors) {
        out.emplace_back(f.A.data(), static_cast<std::size_t>(f.A.size()));
        out.emplace_back(f.B.data(), static_cast<std::size_t>(f.B.size()));
    }
    return out;
}

std::vector<std::string> LoraModule::parameter_names() const {
    std::vector<std::string> names;
    for (const auto& f : factors) {
        names.push_back(f.target + ".A");
        names.push_back(f.target + ".B");
    }
    return names;
}

LoraModule LoraModule::zeros_like() const {
    LoraModule z;
    z.config = config;
    z.scaling = scaling;
    for (const auto& f : factors) {
        z.factors.push_back({f.target, Mat::Zero(f.A.rows(), f.A.cols()), Mat::Zero(f.B.rows(), f.B.cols())});
    }
    return z;
}

LoraModule init_lora(const model::BaseModel& model, const AdapterConfig& cfg) {
    cfg.validate();
    LoraModule m;
    m.config = cfg;
    m.scaling = cfg.alpha / cfg.rank;
    const auto maps = model.adaptable_maps();
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const auto& [name, shape] = maps[i];
        const auto [out, in] = shape;
        if (cfg.rank > std::min(in, out)) {
            throw ConfigError("adapter rank " + std::to_string(cfg.rank) + " exceeds min(in, out) = " +
                              std::to_string(std::min(in, out)) + " for map " + name);
        }
        Rng rng(derive_seed(cfg.seed, i));
        std::normal_distribution<double> g(0.0, 1.0);
        Mat gauss(in, cfg.rank);
        for (Eigen::Index r = 0; r < gauss.rows(); ++r) {
            for (Eigen::Index c = 0; c < gauss.cols(); ++c) {
                gauss(r, c) = g(rng);
            }
        }
        Eigen::HouseholderQR<Mat> qr(gauss);
        const Mat q = qr.householderQ() * Mat::Identity(in, cfg.rank);
        m.factors.push_back({name, q.transpose(), Mat::Zero(out, cfg.rank)});
    }
    return m;
}

namespace {

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count, Rng& rng) {
    std::vector<std::size_t> idx(population);
    std::iota(idx.begin(), idx.end(), 0);
    count = std::min(count, population);
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, population - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(count);
    return idx;
}

series::Pair normalized_pair(const series::Window& w) {
    auto n = series::instance_normalize(as_span(w.context));
    return {std::move(n.values), ((w.target.array() - n.loc) / n.scale).matrix()};
}

} // namespace

TrainResult train_lora(const model::BaseModel& model, LoraModule module, const std::vector<series::Window>& data,
                       const std::vector<series::Window>& replay, const TrainOptions& opts) {
    opts.optimizer.validate();
    if (data.empty()) {
        throw DataError("cannot train an adapter on an empty partition; reduce the number of components K");
    }
    TrainResult res;
    const auto batch_size = std::min<std::size_t>(static_cast<std::size_t>(opts.optimizer.batch), data.size());
    if (batch_size < static_cast<std::size_t>(opts.optimizer.batch)) {
        res.warnings.push_back("batch capped at partition size " + std::to_string(data.size()));
    }
    if (replay.empty()) {
        res.warnings.push_back("replay corpus is empty; training on fine-tuning data only");
    }
    Rng rng(derive_seed(opts.seed, 0x6c6f7261ull));
    std::vector<std::size_t> sizes;
    for (const auto& p : std::as_const(module).parameters()) {
        sizes.push_back(p.size());
    }
    model::AdamW adam(opts.optimizer, sizes);
    for (int step = 0; step < opts.optimizer.steps; ++step) {
        std::vector<series::Pair> batch;
        batch.reserve(2 * batch_size);
        for (auto i : sample_indices(data.size(), batch_size, rng)) {
            batch.push_back(normalized_pair(data[i]));
        }
        if (!replay.empty()) {
            for (auto i : sample_indices(replay.size(), batch_size, rng)) {
                batch.push_back(normalized_pair(replay[i]));
            }
        }
        if (opts.use_mixup) {
            batch = series::mixup(batch, opts.mixup_beta, rng).pairs;
        }
        model::LossOptions lo;
        lo.train_adapter = true;
        lo.dropout = module.config.dropout;
        lo.dropout_seed = rng();
        auto lg = model::loss_and_grads(model, &module, batch, lo);
        if (!std::isfinite(lg.loss) || lg.loss > model::kDivergenceThreshold) {
            throw NumericalError("adapter training diverged at step " + std::to_string(step));
        }
        res.loss_trace.push_back(lg.loss);
        adam.step(module.parameters(), std::as_const(lg.adapter_grads).parameters());
    }
    res.module = std::move(module);
    return res;
}

bool bitwise_equal(const LoraModule& a, const LoraModule& b) {
    if (a.factors.size() != b.factors.size() || std::memcmp(&a.scaling, &b.scaling, sizeof(double)) != 0) {
        return false;
    }
    for (std::size_t i = 0; i < a.factors.size(); ++i) {
        const auto& fa = a.factors[i];
        const auto& fb = b.factors[i];
        if (fa.target != fb.target || fa.A.rows() != fb.A.rows() || fa.A.cols() != fb.A.cols() ||
            fa.B.rows() != fb.B.rows() || fa.B.cols() != fb.B.cols()) {
            return false;
        }
        if (std::memcmp(fa.A.data(), fb.A.data(), sizeof(double) * fa.A.size()) != 0 ||
            std::memcmp(fa.B.data(), fb.B.data(), sizeof(double) * fa.B.size()) != 0) {
            return false;
        }
    }
    return true;
}

LoraModule average_loras(const std::vector<LoraModule>& modules, const std::vector<double>& weights,
                         AveragingLevel level) {
    if (modules.empty() || modules.size() != weights.size()) {
        throw DataError("average_loras needs one weight per module");
    }
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9) {
        throw DataError("averaging weights must sum to 1 (got " + format_double(total) + ")");
    }
    for (double w : weights) {
        if (w < 0.0) {
            throw DataError("averaging weights must be non-negative");
        }
    }
    const auto& ref = modules.front();
    for (const auto& m : modules) {
        if (m.factors.size() != ref.factors.size()) {
            throw DataError("adapter shape mismatch: different number of adapted maps");
        }
        for (std::size_t i = 0; i < m.factors.size(); ++i) {
            const auto& a = m.factors[i];
            const auto& b = ref.factors[i];
            if (a.target != b.target || a.A.rows() != b.A.rows() || a.A.cols() != b.A.cols() ||
                a.B.rows() != b.B.rows() || a.B.cols() != b.B.cols()) {
                throw DataError("adapter shape mismatch at map " + a.target);
            }
        }
    }

    // Merge bitwise-identical modules so duplicates and one-hot weights
    // return an input module exactly.
    std::vector<std::size_t> distinct;
    std::vector<double> merged;
    for (std::size_t k = 0; k < modules.size(); ++k) {
        if (weights[k] == 0.0) {
            continue;
        }
        bool found = false;
        for (std::size_t d = 0; d < distinct.size(); ++d) {
            if (bitwise_equal(modules[distinct[d]], modules[k])) {
                merged[d] += weights[k];
                found = true;
                break;
            }
        }
        if (!found) {
            distinct.push_back(k);
            merged.push_back(weights[k]);
        }
    }
    if (distinct.size() == 1) {
        return modules[distinct.front()];
    }

    LoraModule out = ref.zeros_like();
    if (level == AveragingLevel::Factor) {
        for (std::size_t d = 0; d < distinct.size(); ++d) {
            const auto& m = modules[distinct[d]];
            for (std::size_t i = 0; i < out.factors.size(); ++i) {
                out.factors[i].A += merged[d] * m.factors[i].A;
                out.factors[i].B += merged[d] * m.factors[i].B;
            }
        }
        return out;
    }
    // Delta level: stack A factors and weight B factors so B_cat * A_cat = sum_k w_k B_k A_k.
    for (std::size_t i = 0; i < out.factors.size(); ++i) {
        const auto r = ref.factors[i].A.rows();
        const auto in = ref.factors[i].A.cols();
        const auto outdim = ref.factors[i].B.rows();
        const auto n = static_cast<Eigen::Index>(distinct.size());
        Mat A(r * n, in);
        Mat B(outdim, r * n);
        for (Eigen::Index d = 0; d < n; ++d) {
            const auto& m = modules[distinct[static_cast<std::size_t>(d)]];
            A.middleRows(d * r, r) = m.factors[i].A;
            B.middleCols(d * r, r) = merged[static_cast<std::size_t>(d)] * m.factors[i].B;
        }
        out.factors[i].A = std::move(A);
        out.factors[i].B = std::move(B);
    }
    out.config.rank = static_cast<int>(out.factors.front().A.rows());
    return out;
}

void save_adapter(const LoraModule& module, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["rank"] = module.config.rank;
    manifest["alpha"] = module.config.alpha;
    manifest["dropout"] = module.config.dropout;
    manifest["seed"] = module.config.seed;
    manifest["scaling"] = module.scaling;
    manifest["targets"] = nlohmann::json::array();
    for (const auto& f : module.factors) {
        io::write_tensor(dir / (f.target + ".A.mxt"), io::from_matrix(f.A));
        io::write_tensor(dir / (f.target + ".B.mxt"), io::from_matrix(f.B));
        manifest["targets"].push_back(f.target);
    }
    std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
}

LoraModule load_adapter(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) {
        throw DataError("missing adapter manifest: " + (dir / "manifest.json").string());
    }
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError((dir / "manifest.json").string() + ": " + e.what());
    }
    LoraModule m;
    m.config.rank = manifest.at("rank");
    m.config.alpha = manifest.at("alpha");
    m.config.dropout = manifest.at("dropout");
    m.config.seed = manifest.at("seed");
    m.scaling = manifest.at("scaling");
    for (const auto& t : manifest.at("targets")) {
        const auto target = t.get<std::string>();
        m.factors.push_back({target, io::to_matrix(io::read_tensor(dir / (target + ".A.mxt"))),
                             io::to_matrix(io::read_tensor(dir / (target + ".B.mxt")))});
    }
    return m;
}

} // namespace mixft::lora
