#include "reportdpo/toylm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>

#include "reportdpo/rng.hpp"

namespace reportdpo::lm {

namespace {

using Eigen::VectorXd;
using MapMat = Eigen::Map<RowMatrix>;
using CMapMat = Eigen::Map<const RowMatrix>;
using MapVec = Eigen::Map<VectorXd>;
using CMapVec = Eigen::Map<const VectorXd>;

template <class Ptr>
struct Views {
    using M = std::conditional_t<std::is_const_v<std::remove_pointer_t<Ptr>>, CMapMat, MapMat>;
    using V = std::conditional_t<std::is_const_v<std::remove_pointer_t<Ptr>>, CMapVec, MapVec>;
    M emb, w_x, w_h, w_o;
    V b_x, b_h, b_o;
};

template <class Ptr, class Layout>
Views<Ptr> make_views(Ptr base, const Layout& l, Eigen::Index V, Eigen::Index E, Eigen::Index H) {
    return Views<Ptr>{{base + l.emb, V, E},     {base + l.w_x, 3 * H, E}, {base + l.w_h, 3 * H, H},
                      {base + l.w_o, V, H},     {base + l.b_x, 3 * H},    {base + l.b_h, 3 * H},
                      {base + l.b_o, V}};
}

double logistic(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Row-wise log-softmax in place; returns the probabilities.
RowMatrix log_softmax_rows(RowMatrix& logits) {
    RowMatrix probs(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
        logits.row(i).array() -= lse;
        probs.row(i) = logits.row(i).array().exp();
    }
    return probs;
}

}  // namespace

void ModelConfig::validate() const {
    if (embed_dim == 0 || hidden_dim == 0) {
        throw ConfigError("model dimensions must be positive");
    }
    if (max_context < 3) {
        throw ConfigError("max_context must leave room for a response");
    }
}

ToyLM::Layout ToyLM::layout_for(std::size_t vocab, std::size_t embed, std::size_t hidden) {
    Layout l{};
    std::size_t off = 0;
    l.emb = off;
    off += vocab * embed;
    l.w_x = off;
    off += 3 * hidden * embed;
    l.w_h = off;
    off += 3 * hidden * hidden;
    l.b_x = off;
    off += 3 * hidden;
    l.b_h = off;
    off += 3 * hidden;
    l.w_o = off;
    off += vocab * hidden;
    l.b_o = off;
    off += vocab;
    l.total = off;
    return l;
}

ToyLM::ToyLM(Vocabulary vocab, ModelConfig config)
    : vocab_(std::move(vocab)), config_(config) {
    config_.validate();
    layout_ = layout_for(vocab_.size(), config_.embed_dim, config_.hidden_dim);
    params_.assign(layout_.total, 0.0);
    init_parameters();
}

void ToyLM::init_parameters() {
    Rng rng(config_.seed);
    const double e_scale = 1.0 / std::sqrt(static_cast<double>(config_.embed_dim));
    const double h_scale = 1.0 / std::sqrt(static_cast<double>(config_.hidden_dim));
    for (std::size_t i = layout_.emb; i < layout_.w_x; ++i) {
        params_[i] = rng.normal();
    }
    for (std::size_t i = layout_.w_x; i < layout_.w_h; ++i) {
        params_[i] = rng.normal() * e_scale;
    }
    for (std::size_t i = layout_.w_h; i < layout_.b_x; ++i) {
        params_[i] = rng.normal() * h_scale;
    }
    // Biases and the output projection stay zero.
}

void ToyLM::step(const VectorXd& x, const VectorXd& h, VectorXd& h_next) const {
    const auto H = static_cast<Eigen::Index>(config_.hidden_dim);
    const auto p = make_views(params_.data(), layout_, static_cast<Eigen::Index>(vocab_.size()),
                              static_cast<Eigen::Index>(config_.embed_dim), H);
    const VectorXd xp = p.w_x * x + p.b_x;
    const VectorXd hp = p.w_h * h + p.b_h;
    h_next.resize(H);
    for (Eigen::Index k = 0; k < H; ++k) {
        const double r = logistic(xp[k] + hp[k]);
        const double z = logistic(xp[H + k] + hp[H + k]);
        const double n = std::tanh(xp[2 * H + k] + r * hp[2 * H + k]);
        h_next[k] = (1.0 - z) * n + z * h[k];
    }
}

ToyLM::Trace ToyLM::forward(std::span<const TokenId> prompt, std::span<const TokenId> response) const {
    const std::size_t full = prompt.size() + 2 + response.size();
    if (full > config_.max_context) {
        throw ContextOverflow("sequence of " + std::to_string(full) + " tokens exceeds context " +
                              std::to_string(config_.max_context));
    }
    const auto V = static_cast<Eigen::Index>(vocab_.size());
    const auto E = static_cast<Eigen::Index>(config_.embed_dim);
    const auto H = static_cast<Eigen::Index>(config_.hidden_dim);
    const auto p = make_views(params_.data(), layout_, V, E, H);

    Trace tr;
    tr.inputs.reserve(full);
    tr.inputs.push_back(Vocabulary::kBegin);
    tr.inputs.insert(tr.inputs.end(), prompt.begin(), prompt.end());
    tr.inputs.push_back(Vocabulary::kResponse);
    tr.inputs.insert(tr.inputs.end(), response.begin(), response.end());
    tr.inputs.pop_back();  // the last token is only ever a target
    tr.targets.assign(response.begin(), response.end());
    tr.first_output = prompt.size() + 1;

    const auto T = static_cast<Eigen::Index>(tr.inputs.size());
    for (TokenId id : tr.inputs) {
        if (id < 0 || id >= V) {
            throw DataError("token id out of vocabulary range");
        }
    }
    tr.x.resize(T, E);
    for (Eigen::Index t = 0; t < T; ++t) {
        tr.x.row(t) = p.emb.row(tr.inputs[static_cast<std::size_t>(t)]);
    }
    tr.xproj = tr.x * p.w_x.transpose();
    tr.xproj.rowwise() += p.b_x.transpose();
    tr.hproj.resize(T, 3 * H);
    tr.gate_r.resize(T, H);
    tr.gate_z.resize(T, H);
    tr.cand.resize(T, H);
    tr.hidden.setZero(T + 1, H);

    VectorXd hp(3 * H);
    for (Eigen::Index t = 0; t < T; ++t) {
        hp.noalias() = p.w_h * tr.hidden.row(t).transpose();
        hp += p.b_h;
        tr.hproj.row(t) = hp.transpose();
        for (Eigen::Index k = 0; k < H; ++k) {
            const double r = logistic(tr.xproj(t, k) + hp[k]);
            const double z = logistic(tr.xproj(t, H + k) + hp[H + k]);
            const double n = std::tanh(tr.xproj(t, 2 * H + k) + r * hp[2 * H + k]);
            tr.gate_r(t, k) = r;
            tr.gate_z(t, k) = z;
            tr.cand(t, k) = n;
            tr.hidden(t + 1, k) = (1.0 - z) * n + z * tr.hidden(t, k);
        }
    }

    const auto n_out = static_cast<Eigen::Index>(tr.targets.size());
    if (n_out > 0) {
        RowMatrix logits = tr.hidden.middleRows(static_cast<Eigen::Index>(tr.first_output) + 1, n_out) *
                           p.w_o.transpose();
        logits.rowwise() += p.b_o.transpose();
        tr.probs = log_softmax_rows(logits);
        tr.logprobs.resize(static_cast<std::size_t>(n_out));
        for (Eigen::Index i = 0; i < n_out; ++i) {
            const TokenId y = tr.targets[static_cast<std::size_t>(i)];
            if (y < 0 || y >= V) {
                throw DataError("token id out of vocabulary range");
            }
            tr.logprobs[static_cast<std::size_t>(i)] = logits(i, y);
        }
    }
    return tr;
}

void ToyLM::backward(const Trace& tr, std::span<const double> seeds, std::span<double> grad) const {
    if (seeds.size() != tr.targets.size()) {
        throw DataError("backward: one seed per response token required");
    }
    if (grad.size() != params_.size()) {
        throw DataError("backward: gradient buffer has wrong size");
    }
    const auto V = static_cast<Eigen::Index>(vocab_.size());
    const auto E = static_cast<Eigen::Index>(config_.embed_dim);
    const auto H = static_cast<Eigen::Index>(config_.hidden_dim);
    const auto p = make_views(params_.data(), layout_, V, E, H);
    auto g = make_views(grad.data(), layout_, V, E, H);

    const auto T = static_cast<Eigen::Index>(tr.inputs.size());
    const auto n_out = static_cast<Eigen::Index>(tr.targets.size());
    if (n_out == 0) {
        return;
    }
    const auto first = static_cast<Eigen::Index>(tr.first_output);

    // d logp_y / d logit_k = [k == y] - p_k
    RowMatrix d_logits = tr.probs;
    for (Eigen::Index i = 0; i < n_out; ++i) {
        const double s = seeds[static_cast<std::size_t>(i)];
        d_logits.row(i) *= -s;
        d_logits(i, tr.targets[static_cast<std::size_t>(i)]) += s;
    }
    const auto h_out = tr.hidden.middleRows(first + 1, n_out);
    g.w_o.noalias() += d_logits.transpose() * h_out;
    g.b_o += d_logits.colwise().sum().transpose();
    RowMatrix d_hidden = RowMatrix::Zero(T, H);
    d_hidden.middleRows(first, n_out).noalias() = d_logits * p.w_o;

    RowMatrix d_xproj(T, 3 * H);
    RowMatrix d_hproj(T, 3 * H);
    VectorXd carry = VectorXd::Zero(H);
    VectorXd d_hp(3 * H);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
        for (Eigen::Index k = 0; k < H; ++k) {
            const double dh = d_hidden(t, k) + carry[k];
            const double r = tr.gate_r(t, k);
            const double z = tr.gate_z(t, k);
            const double n = tr.cand(t, k);
            const double h_prev = tr.hidden(t, k);
            const double dn = dh * (1.0 - z);
            const double dz = dh * (h_prev - n);
            carry[k] = dh * z;
            const double da_n = dn * (1.0 - n * n);
            const double hp_n = tr.hproj(t, 2 * H + k);
            const double dr = da_n * hp_n;
            const double da_z = dz * z * (1.0 - z);
            const double da_r = dr * r * (1.0 - r);
            d_xproj(t, k) = da_r;
            d_xproj(t, H + k) = da_z;
            d_xproj(t, 2 * H + k) = da_n;
            d_hp[k] = da_r;
            d_hp[H + k] = da_z;
            d_hp[2 * H + k] = da_n * r;
        }
        d_hproj.row(t) = d_hp.transpose();
        carry.noalias() += p.w_h.transpose() * d_hp;
    }
    g.w_h.noalias() += d_hproj.transpose() * tr.hidden.topRows(T);
    g.b_h += d_hproj.colwise().sum().transpose();
    g.w_x.noalias() += d_xproj.transpose() * tr.x;
    g.b_x += d_xproj.colwise().sum().transpose();
    const RowMatrix d_x = d_xproj * p.w_x;
    for (Eigen::Index t = 0; t < T; ++t) {
        g.emb.row(tr.inputs[static_cast<std::size_t>(t)]) += d_x.row(t);
    }
}

std::vector<double> ToyLM::response_logprobs(std::span<const TokenId> prompt,
                                             std::span<const TokenId> response) const {
    return forward(prompt, response).logprobs;
}

RowMatrix ToyLM::response_distributions(std::span<const TokenId> prompt,
                                        std::span<const TokenId> response) const {
    Trace tr = forward(prompt, response);
    RowMatrix out = tr.probs;
    out = out.array().log();
    return out;
}

std::vector<TokenId> ToyLM::generate_ids(std::span<const TokenId> prompt,
                                         const DecodeOptions& options) const {
    std::vector<TokenId> out;
    if (options.max_tokens == 0) {
        return out;
    }
    const auto V = static_cast<Eigen::Index>(vocab_.size());
    const auto E = static_cast<Eigen::Index>(config_.embed_dim);
    const auto H = static_cast<Eigen::Index>(config_.hidden_dim);
    const auto p = make_views(params_.data(), layout_, V, E, H);

    VectorXd h = VectorXd::Zero(H);
    VectorXd h_next;
    auto feed = [&](TokenId id) {
        step(p.emb.row(id).transpose(), h, h_next);
        h.swap(h_next);
    };
    feed(Vocabulary::kBegin);
    for (TokenId id : prompt) {
        feed(id);
    }
    feed(Vocabulary::kResponse);

    Rng rng(options.seed);
    const std::size_t budget =
        std::min(options.max_tokens, config_.max_context - std::min(config_.max_context, prompt.size() + 2));
    VectorXd logits(V);
    for (std::size_t i = 0; i < budget; ++i) {
        logits.noalias() = p.w_o * h;
        logits += p.b_o;
        for (TokenId s : {Vocabulary::kPad, Vocabulary::kBegin, Vocabulary::kUnk, Vocabulary::kResponse}) {
            logits[s] = -std::numeric_limits<double>::infinity();
        }
        TokenId next = 0;
        if (options.temperature <= 0.0) {
            Eigen::Index best = 0;
            logits.maxCoeff(&best);
            next = static_cast<TokenId>(best);
        } else {
            const VectorXd scaled = logits / options.temperature;
            const double mx = scaled.maxCoeff();
            const VectorXd w = (scaled.array() - mx).exp();
            double u = rng.uniform() * w.sum();
            next = static_cast<TokenId>(V - 1);
            for (Eigen::Index k = 0; k < V; ++k) {
                u -= w[k];
                if (u < 0.0) {
                    next = static_cast<TokenId>(k);
                    break;
                }
            }
        }
        if (next == Vocabulary::kEnd) {
            break;
        }
        out.push_back(next);
        feed(next);
    }
    return out;
}

std::string ToyLM::generate(const std::string& prompt, const DecodeOptions& options) const {
    return detokenize(vocab_, generate_ids(encode_prompt(vocab_, prompt), options));
}

nlohmann::json ToyLM::to_json() const {
    nlohmann::json j;
    j["format"] = "reportdpo-toylm";
    j["version"] = 1;
    j["config"] = {{"embed_dim", config_.embed_dim},
                   {"hidden_dim", config_.hidden_dim},
                   {"max_context", config_.max_context},
                   {"seed", config_.seed}};
    j["vocab"] = vocab_.words();
    j["params"] = params_;
    return j;
}

ToyLM ToyLM::from_json(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != "reportdpo-toylm") {
        throw DataError("not a toy LM checkpoint");
    }
    ModelConfig cfg;
    const auto& c = j.at("config");
    cfg.embed_dim = c.at("embed_dim").get<std::size_t>();
    cfg.hidden_dim = c.at("hidden_dim").get<std::size_t>();
    cfg.max_context = c.at("max_context").get<std::size_t>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    auto words = j.at("vocab").get<std::vector<std::string>>();
    if (words.size() < Vocabulary::kFirstWord) {
        throw DataError("checkpoint vocabulary is missing special tokens");
    }
    words.erase(words.begin(), words.begin() + Vocabulary::kFirstWord);
    ToyLM model(Vocabulary::from_words(words), cfg);
    auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != model.params_.size()) {
        throw DataError("checkpoint parameter count does not match its configuration");
    }
    model.params_ = std::move(params);
    return model;
}

}  // namespace reportdpo::lm
