#include "mixft/basemodel.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "mixft/errors.hpp"
#include "mixft/tensor_io.hpp"

namespace mixft::model {
namespace {

constexpr std::size_t kGradChunk = 8;

void push_affine(std::vector<std::span<double>>& out, Affine& a) {
    out.emplace_back(a.weight.data(), static_cast<std::size_t>(a.weight.size()));
    out.emplace_back(a.bias.data(), static_cast<std::size_t>(a.bias.size()));
}

void push_affine(std::vector<std::span<const double>>& out, const Affine& a) {
    out.emplace_back(a.weight.data(), static_cast<std::size_t>(a.weight.size()));
    out.emplace_back(a.bias.data(), static_cast<std::size_t>(a.bias.size()));
}

Affine uniform_affine(int out, int in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Affine a;
    a.weight.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
        for (Eigen::Index c = 0; c < in; ++c) {
            a.weight(r, c) = u(rng);
        }
    }
    a.bias = Vec::Zero(out);
    return a;
}

Affine zero_affine(const Affine& like) {
    return {Mat::Zero(like.weight.rows(), like.weight.cols()), Vec::Zero(like.bias.size())};
}

// Adapter attachment for one affine map during a single forward/backward.
struct Attachment {
    const lora::LoraFactor* factor = nullptr;
    double scaling = 0.0;
    Mat mask; // dropout mask over the adapter input; empty = no dropout
};

// rows of X are tokens (or a single pooled row)
Mat apply_affine(const Affine& a, const Attachment& att, const Mat& X) {
    Mat Y = X * a.weight.transpose();
    Y.rowwise() += a.bias.transpose();
    if (att.factor != nullptr) {
        const Mat Xd = att.mask.size() ? Mat(X.cwiseProduct(att.mask)) : X;
        Y.noalias() += att.scaling * (Xd * att.factor->A.transpose()) * att.factor->B.transpose();
    }
    return Y;
}

// Accumulates parameter gradients and returns dL/dX.
Mat backward_affine(const Affine& a, const Attachment& att, const Mat& X, const Mat& dY, Affine* base_grad,
                    lora::LoraFactor* adapter_grad) {
    if (base_grad != nullptr) {
        base_grad->weight.noalias() += dY.transpose() * X;
        base_grad->bias += dY.colwise().sum().transpose();
    }
    Mat dX = dY * a.weight;
    if (att.factor != nullptr) {
        const auto& f = *att.factor;
        const Mat Xd = att.mask.size() ? Mat(X.cwiseProduct(att.mask)) : X;
        const Mat dYB = dY * f.B; // rows x r
        if (adapter_grad != nullptr) {
            adapter_grad->B.noalias() += att.scaling * dY.transpose() * (Xd * f.A.transpose());
            adapter_grad->A.noalias() += att.scaling * dYB.transpose() * Xd;
        }
        Mat dXd = att.scaling * dYB * f.A;
        if (att.mask.size()) {
            dXd = dXd.cwiseProduct(att.mask);
        }
        dX += dXd;
    }
    return dX;
}

Mat patchify(const Vec& x, int patch) {
    const auto tokens = x.size() / patch;
    Mat Xp(tokens, patch);
    for (Eigen::Index t = 0; t < tokens; ++t) {
        Xp.row(t) = x.segment(t * patch, patch).transpose();
    }
    return Xp;
}

struct Trace {
    series::Normalized norm;
    Mat patches;
    std::vector<Mat> hidden;      // B + 1 token states
    std::vector<Mat> activations; // tanh outputs per block
    Mat pooled;                   // 1 x d
    Vec out;                      // normalized forecast
    std::vector<Attachment> attachments; // 2 per block, then head
};

std::vector<Attachment> make_attachments(const BaseModel& model, const lora::LoraModule* adapter, double dropout,
                                         Rng* rng) {
    const auto maps = model.adaptable_maps();
    std::vector<Attachment> atts(maps.size());
    if (adapter == nullptr) {
        return atts;
    }
    const int tokens = model.config.tokens();
    for (std::size_t i = 0; i < maps.size(); ++i) {
        atts[i].factor = adapter->find(maps[i].first);
        atts[i].scaling = adapter->scaling;
        if (atts[i].factor != nullptr && dropout > 0.0 && rng != nullptr) {
            const bool is_head = i + 1 == maps.size();
            const int rows = is_head ? 1 : tokens;
            const int cols = maps[i].second.second;
            std::bernoulli_distribution keep(1.0 - dropout);
            atts[i].mask.resize(rows, cols);
            for (int r = 0; r < rows; ++r) {
                for (int c = 0; c < cols; ++c) {
                    atts[i].mask(r, c) = keep(*rng) ? 1.0 / (1.0 - dropout) : 0.0;
                }
            }
        }
    }
    return atts;
}

Trace run_forward(const BaseModel& model, std::vector<Attachment> atts, std::span<const double> context) {
    const auto& cfg = model.config;
    if (static_cast<int>(context.size()) != cfg.context) {
        throw DataError("context length " + std::to_string(context.size()) + " does not match model context " +
                        std::to_string(cfg.context));
    }
    Trace tr;
    tr.attachments = std::move(atts);
    tr.norm = series::instance_normalize(context);
    tr.patches = patchify(tr.norm.values, cfg.patch);
    Mat h = tr.patches * model.patch_embed.weight.transpose();
    h.rowwise() += model.patch_embed.bias.transpose();
    tr.hidden.push_back(h);
    for (std::size_t b = 0; b < model.blocks.size(); ++b) {
        const auto& blk = model.blocks[b];
        Mat a = apply_affine(blk.first, tr.attachments[2 * b], tr.hidden.back()).array().tanh().matrix();
        Mat v = apply_affine(blk.second, tr.attachments[2 * b + 1], a);
        tr.activations.push_back(std::move(a));
        tr.hidden.push_back(tr.hidden.back() + v);
    }
    tr.pooled = tr.hidden.back().colwise().mean();
    tr.out = apply_affine(model.head, tr.attachments.back(), tr.pooled).row(0).transpose();
    return tr;
}

lora::LoraFactor* grad_factor(lora::LoraModule* grads, const Attachment& att) {
    if (grads == nullptr || att.factor == nullptr) {
        return nullptr;
    }
    for (auto& f : grads->factors) {
        if (f.target == att.factor->target) {
            return &f;
        }
    }
    return nullptr;
}

void run_backward(const BaseModel& model, const Trace& tr, const Vec& dout, BaseModel* base_grads,
                  lora::LoraModule* adapter_grads) {
    const Mat dOut = dout.transpose();
    const std::size_t nb = model.blocks.size();
    const Mat dPooled = backward_affine(model.head, tr.attachments.back(), tr.pooled, dOut,
                                        base_grads ? &base_grads->head : nullptr,
                                        grad_factor(adapter_grads, tr.attachments.back()));
    const auto tokens = tr.hidden.back().rows();
    Mat dH = dPooled.replicate(tokens, 1) / static_cast<double>(tokens);
    for (std::size_t bi = nb; bi-- > 0;) {
        const auto& blk = model.blocks[bi];
        const auto& a = tr.activations[bi];
        ResidualBlock* gblk = base_grads ? &base_grads->blocks[bi] : nullptr;
        const Mat dA = backward_affine(blk.second, tr.attachments[2 * bi + 1], a, dH, gblk ? &gblk->second : nullptr,
                                       grad_factor(adapter_grads, tr.attachments[2 * bi + 1]));
        const Mat dU = dA.cwiseProduct((1.0 - a.array().square()).matrix());
        dH += backward_affine(blk.first, tr.attachments[2 * bi], tr.hidden[bi], dU, gblk ? &gblk->first : nullptr,
                              grad_factor(adapter_grads, tr.attachments[2 * bi]));
    }
    if (base_grads != nullptr) {
        base_grads->patch_embed.weight.noalias() += dH.transpose() * tr.patches;
        base_grads->patch_embed.bias += dH.colwise().sum().transpose();
    }
}

void add_into(std::vector<std::span<double>> dst, const std::vector<std::span<const double>>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
        for (std::size_t j = 0; j < dst[i].size(); ++j) {
            dst[i][j] += src[i][j];
        }
    }
}

} // namespace

void ModelConfig::validate() const {
    if (patch <= 0 || context <= 0 || context % patch != 0) {
        throw ConfigError("context length " + std::to_string(context) + " must be a positive multiple of patch size " +
                          std::to_string(patch));
    }
    if (hidden < 4) {
        throw ConfigError("hidden dimension must be >= 4");
    }
    if (blocks < 1) {
        throw ConfigError("model needs at least one residual block");
    }
    if (horizon < 1) {
        throw ConfigError("horizon must be positive");
    }
}

std::size_t BaseModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) {
        n += p.size();
    }
    return n;
}

std::vector<std::span<double>> BaseModel::parameters() {
    std::vector<std::span<double>> out;
    push_affine(out, patch_embed);
    for (auto& b : blocks) {
        push_affine(out, b.first);
        push_affine(out, b.second);
    }
    push_affine(out, head);
    return out;
}

std::vector<std::span<const double>> BaseModel::parameters() const {
    std::vector<std::span<const double>> out;
    push_affine(out, patch_embed);
    for (const auto& b : blocks) {
        push_affine(out, b.first);
        push_affine(out, b.second);
    }
    push_affine(out, head);
    return out;
}

std::vector<std::string> BaseModel::parameter_names() const {
    std::vector<std::string> names = {"patch_embed.weight", "patch_embed.bias"};
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const auto prefix = "block" + std::to_string(b);
        for (const char* part : {".first", ".second"}) {
            names.push_back(prefix + part + ".weight");
            names.push_back(prefix + part + ".bias");
        }
    }
    names.emplace_back("head.weight");
    names.emplace_back("head.bias");
    return names;
}

std::vector<std::pair<std::string, std::pair<int, int>>> BaseModel::adaptable_maps() const {
    std::vector<std::pair<std::string, std::pair<int, int>>> maps;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const auto prefix = "block" + std::to_string(b);
        maps.push_back({prefix + ".first",
                        {static_cast<int>(blocks[b].first.weight.rows()), static_cast<int>(blocks[b].first.weight.cols())}});
        maps.push_back({prefix + ".second",
                        {static_cast<int>(blocks[b].second.weight.rows()), static_cast<int>(blocks[b].second.weight.cols())}});
    }
    maps.push_back({"head", {static_cast<int>(head.weight.rows()), static_cast<int>(head.weight.cols())}});
    return maps;
}

BaseModel BaseModel::zeros_like() const {
    BaseModel z;
    z.config = config;
    z.patch_embed = zero_affine(patch_embed);
    for (const auto& b : blocks) {
        z.blocks.push_back({zero_affine(b.first), zero_affine(b.second)});
    }
    z.head = zero_affine(head);
    return z;
}

BaseModel init_model(const ModelConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, 0x6d6f64656cull));
    BaseModel m;
    m.config = cfg;
    m.patch_embed = uniform_affine(cfg.hidden, cfg.patch, rng);
    for (int b = 0; b < cfg.blocks; ++b) {
        ResidualBlock blk;
        blk.first = uniform_affine(cfg.hidden, cfg.hidden, rng);
        blk.second = uniform_affine(cfg.hidden, cfg.hidden, rng);
        m.blocks.push_back(std::move(blk));
    }
    m.head = uniform_affine(cfg.horizon, cfg.hidden, rng);
    return m;
}

ForwardOutput forward(const BaseModel& model, const lora::LoraModule* adapter, std::span<const double> context) {
    auto tr = run_forward(model, make_attachments(model, adapter, 0.0, nullptr), context);
    return {series::denormalize(tr.out, tr.norm.loc, tr.norm.scale), tr.hidden.back()};
}

Vec embed(const BaseModel& model, std::span<const double> context) {
    auto tr = run_forward(model, make_attachments(model, nullptr, 0.0, nullptr), context);
    return tr.pooled.row(0).transpose();
}

LossAndGrads loss_and_grads(const BaseModel& model, const lora::LoraModule* adapter,
                            const std::vector<series::Pair>& batch, const LossOptions& opts) {
    if (batch.empty()) {
        throw DataError("loss_and_grads requires a nonempty batch");
    }
    const bool train_base = adapter == nullptr || !opts.train_adapter;
    const bool train_adapter = adapter != nullptr && opts.train_adapter;
    const int H = model.config.horizon;
    const double denom = static_cast<double>(batch.size()) * H;

    const std::size_t chunks = (batch.size() + kGradChunk - 1) / kGradChunk;
    std::vector<double> chunk_loss(chunks, 0.0);
    std::vector<BaseModel> chunk_base(train_base ? chunks : 0);
    std::vector<lora::LoraModule> chunk_adapter(train_adapter ? chunks : 0);

    parallel_for(chunks, [&](std::size_t c) {
        BaseModel* bg = nullptr;
        lora::LoraModule* ag = nullptr;
        if (train_base) {
            chunk_base[c] = model.zeros_like();
            bg = &chunk_base[c];
        }
        if (train_adapter) {
            chunk_adapter[c] = adapter->zeros_like();
            ag = &chunk_adapter[c];
        }
        const std::size_t end = std::min(batch.size(), (c + 1) * kGradChunk);
        for (std::size_t i = c * kGradChunk; i < end; ++i) {
            const auto& pair = batch[i];
            if (pair.y.size() != H) {
                throw DataError("target length " + std::to_string(pair.y.size()) + " does not match horizon " +
                                std::to_string(H));
            }
            Rng rng(derive_seed(opts.dropout_seed, i));
            const double p = train_adapter ? opts.dropout : 0.0;
            auto tr = run_forward(model, make_attachments(model, adapter, p, p > 0.0 ? &rng : nullptr),
                                  std::span<const double>(pair.x.data(), static_cast<std::size_t>(pair.x.size())));
            const Vec target = (pair.y.array() - tr.norm.loc) / tr.norm.scale;
            const Vec resid = tr.out - target;
            chunk_loss[c] += resid.squaredNorm();
            run_backward(model, tr, 2.0 * resid / denom, bg, ag);
        }
    });

    LossAndGrads res;
    res.base_grads = model.zeros_like();
    if (adapter != nullptr) {
        res.adapter_grads = adapter->zeros_like();
    }
    double total = 0.0;
    for (std::size_t c = 0; c < chunks; ++c) {
        total += chunk_loss[c];
        if (train_base) {
            add_into(res.base_grads.parameters(), std::as_const(chunk_base[c]).parameters());
        }
        if (train_adapter) {
            add_into(res.adapter_grads.parameters(), std::as_const(chunk_adapter[c]).parameters());
        }
    }
    res.loss = total / denom;
    return res;
}

double loss_only(const BaseModel& model, const lora::LoraModule* adapter, const std::vector<series::Pair>& batch) {
    if (batch.empty()) {
        throw DataError("loss_only requires a nonempty batch");
    }
    double total = 0.0;
    for (const auto& pair : batch) {
        auto tr = run_forward(model, make_attachments(model, adapter, 0.0, nullptr),
                              std::span<const double>(pair.x.data(), static_cast<std::size_t>(pair.x.size())));
        const Vec target = (pair.y.array() - tr.norm.loc) / tr.norm.scale;
        total += (tr.out - target).squaredNorm();
    }
    return total / (static_cast<double>(batch.size()) * model.config.horizon);
}

void OptimizerConfig::validate() const {
    if (!(lr >= 0.0)) {
        throw ConfigError("learning rate must be non-negative");
    }
    if (batch < 1 || steps < 0) {
        throw ConfigError("optimizer batch must be >= 1 and steps >= 0");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0)) {
        throw ConfigError("AdamW betas must lie in [0, 1) and eps must be positive");
    }
}

AdamW::AdamW(const OptimizerConfig& cfg, const std::vector<std::size_t>& sizes) : cfg_(cfg) {
    for (auto n : sizes) {
        m_.emplace_back(n, 0.0);
        v_.emplace_back(n, 0.0);
    }
}

void AdamW::step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            const double g = grads[i][j];
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            params[i][j] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * params[i][j]);
        }
    }
}

namespace {
std::vector<std::size_t> sizes_of(const std::vector<std::span<const double>>& ps) {
    std::vector<std::size_t> s;
    for (const auto& p : ps) {
        s.push_back(p.size());
    }
    return s;
}
} // namespace

PretrainResult pretrain(BaseModel model, const std::vector<series::Window>& windows, const OptimizerConfig& opt,
                        std::uint64_t seed) {
    opt.validate();
    if (windows.empty()) {
        throw DataError("pretraining corpus produced no windows");
    }
    PretrainResult res;
    AdamW adam(opt, sizes_of(std::as_const(model).parameters()));
    Rng rng(derive_seed(seed, 0x707265ull));
    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), 0);
    const auto batch_size = std::min<std::size_t>(static_cast<std::size_t>(opt.batch), windows.size());
    for (int step = 0; step < opt.steps; ++step) {
        // partial Fisher-Yates: first batch_size entries become the batch
        for (std::size_t i = 0; i < batch_size; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
            std::swap(order[i], order[pick(rng)]);
        }
        std::vector<series::Pair> batch;
        batch.reserve(batch_size);
        for (std::size_t i = 0; i < batch_size; ++i) {
            batch.push_back({windows[order[i]].context, windows[order[i]].target});
        }
        auto lg = loss_and_grads(model, nullptr, batch);
        if (!std::isfinite(lg.loss) || lg.loss > kDivergenceThreshold) {
            throw NumericalError("pretraining diverged at step " + std::to_string(step) + " (loss " +
                                 format_double(lg.loss) + ")");
        }
        res.loss_trace.push_back(lg.loss);
        adam.step(model.parameters(), std::as_const(lg.base_grads).parameters());
    }
    res.model = std::move(model);
    return res;
}

void save_model(const BaseModel& model, const std::filesystem::path& dir, int step_count) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    const auto& c = model.config;
    manifest["config"] = {{"patch", c.patch}, {"hidden", c.hidden}, {"blocks", c.blocks},
                          {"horizon", c.horizon}, {"context", c.context}};
    manifest["seed"] = c.seed;
    manifest["step_count"] = step_count;
    manifest["parameters"] = nlohmann::json::array();
    const auto names = model.parameter_names();
    const auto params = model.parameters();
    auto affines = std::vector<const Affine*>{&model.patch_embed};
    for (const auto& b : model.blocks) {
        affines.push_back(&b.first);
        affines.push_back(&b.second);
    }
    affines.push_back(&model.head);
    for (std::size_t i = 0; i < affines.size(); ++i) {
        io::write_tensor(dir / (names[2 * i] + ".mxt"), io::from_matrix(affines[i]->weight));
        io::write_tensor(dir / (names[2 * i + 1] + ".mxt"), io::from_vector(affines[i]->bias));
        manifest["parameters"].push_back(names[2 * i]);
        manifest["parameters"].push_back(names[2 * i + 1]);
    }
    std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
}

BaseModel load_model(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) {
        throw DataError("missing model checkpoint manifest: " + (dir / "manifest.json").string());
    }
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError((dir / "manifest.json").string() + ": " + e.what());
    }
    ModelConfig cfg;
    const auto& c = manifest.at("config");
    cfg.patch = c.at("patch");
    cfg.hidden = c.at("hidden");
    cfg.blocks = c.at("blocks");
    cfg.horizon = c.at("horizon");
    cfg.context = c.at("context");
    cfg.seed = manifest.at("seed");
    BaseModel m = init_model(cfg).zeros_like();
    const auto names = m.parameter_names();
    auto params = m.parameters();
    for (std::size_t i = 0; i < names.size(); ++i) {
        auto t = io::read_tensor(dir / (names[i] + ".mxt"));
        if (t.data.size() != params[i].size()) {
            throw DataError("checkpoint tensor " + names[i] + " has wrong size");
        }
        // weights are stored row-major; Eigen storage is column-major
        if (t.shape.size() == 2) {
            const Mat w = io::to_matrix(t);
            std::copy(w.data(), w.data() + w.size(), params[i].begin());
        } else {
            std::copy(t.data.begin(), t.data.end(), params[i].begin());
        }
    }
    return m;
}

} // namespace mixft::model
