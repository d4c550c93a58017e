#include "steerkt/toymodel.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <fmt/core.h>

#include "steerkt/dumpio.hpp"

namespace steerkt {

bool TokenVocab::is_markup(Token t) const {
    return std::find(markup.begin(), markup.end(), t) != markup.end();
}

void TokenVocab::validate() const {
    std::set<Token> ids{pad, bos, eos, good};
    ids.insert(markup.begin(), markup.end());
    if (ids.size() != 9) throw std::invalid_argument("vocab: named ids must be distinct");
    for (Token t : ids)
        if (t < 0 || t >= size) throw std::invalid_argument(fmt::format("vocab: id {} outside [0, {})", t, size));
    if (first_filler >= size) throw std::invalid_argument("vocab: no filler ids");
    for (Token t : ids)
        if (t >= first_filler) throw std::invalid_argument("vocab: named ids must precede the filler range");
}

void ToyConfig::validate() const {
    vocab.validate();
    if (depth < 2) throw std::invalid_argument(fmt::format("toy config: depth {} < 2", depth));
    if (d < 3 || hidden < 1) throw std::invalid_argument("toy config: dims must be positive (d >= 3)");
    if (!(overlap > -1.0 && overlap < 1.0)) throw std::invalid_argument("toy config: overlap must lie in (-1, 1)");
    for (double x : {embed_scale, base_scale, good_scale, markup_scale, markup_noise, w1_gain, w2_gain, gate_gain,
                     gate_threshold})
        if (!std::isfinite(x) || x < 0) throw std::invalid_argument("toy config: scales must be finite and >= 0");
    if (gate_gain > 0 && !(base_scale > 0)) throw std::invalid_argument("toy config: the content gate needs base_scale > 0");
    if (gate_gain > 0 && d < 4) throw std::invalid_argument("toy config: the content gate needs d >= 4");
}

namespace {

Vec gaussian(SeededRng& r, int n, double sd) {
    Vec v(static_cast<std::size_t>(n));
    for (auto& x : v) x = r.normal() * sd;
    return v;
}

void normalize(Vec& v) {
    double n = norm(v);
    for (auto& x : v) x /= n;
}

void remove_component(Vec& v, const Vec& unit) {
    double p = dot(v, unit);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * unit[i];
}

void check_tokens(const TokenVocab& v, const Tokens& toks) {
    if (toks.empty()) throw std::invalid_argument("empty token sequence");
    for (Token t : toks)
        if (t < 0 || t >= v.size) throw std::invalid_argument(fmt::format("token id {} out of vocabulary", t));
}

} // namespace

ToyRewardModel build_model(const ToyConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SeededRng rng(seed);
    const int V = cfg.vocab.size, d = cfg.d;
    ToyRewardModel m;
    m.vocab = cfg.vocab;
    m.depth = cfg.depth;
    m.d = d;
    m.hidden = cfg.hidden;
    m.seed = seed;

    m.embed = Matrix(static_cast<std::size_t>(V), static_cast<std::size_t>(d));
    double sd = cfg.embed_scale / std::sqrt(static_cast<double>(d));
    for (auto& x : m.embed.data) x = rng.normal() * sd;

    // base, content and format directions, mutually orthogonal
    Vec b = gaussian(rng, d, 1.0);
    normalize(b);
    Vec c = gaussian(rng, d, 1.0);
    remove_component(c, b);
    normalize(c);
    Vec f = gaussian(rng, d, 1.0);
    remove_component(f, b);
    remove_component(f, c);
    normalize(f);

    auto grow = m.embed.row(static_cast<std::size_t>(cfg.vocab.good));
    for (int k = 0; k < d; ++k) grow[k] = cfg.good_scale * c[k] + 0.3 * grow[k];

    const double rho = cfg.overlap, rest = std::sqrt(1.0 - rho * rho);
    Vec fk(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) fk[k] = rho * c[k] + rest * f[k];
    for (Token t : cfg.vocab.markup) {
        auto r = m.embed.row(static_cast<std::size_t>(t));
        for (int k = 0; k < d; ++k) r[k] = cfg.markup_scale * (fk[k] + cfg.markup_noise * rng.normal());
    }
    for (int t = 0; t < V; ++t) {
        auto r = m.embed.row(static_cast<std::size_t>(t));
        for (int k = 0; k < d; ++k) r[k] += cfg.base_scale * b[k];
    }

    double sd1 = cfg.w1_gain / std::sqrt(static_cast<double>(d));
    double sd2 = cfg.w2_gain / std::sqrt(static_cast<double>(cfg.hidden));
    for (int l = 0; l < cfg.depth; ++l) {
        Matrix w1(static_cast<std::size_t>(cfg.hidden), static_cast<std::size_t>(d));
        for (auto& x : w1.data) x = rng.normal() * sd1;
        Matrix w2(static_cast<std::size_t>(d), static_cast<std::size_t>(cfg.hidden));
        for (auto& x : w2.data) x = rng.normal() * sd2;
        round_to_f32(w1);
        round_to_f32(w2);
        m.w1.push_back(std::move(w1));
        m.w2.push_back(std::move(w2));
    }
    if (cfg.gate_gain > 0) {
        Vec q = gaussian(rng, d, 1.0);
        remove_component(q, b);
        remove_component(q, c);
        remove_component(q, f);
        normalize(q);
        const double t = cfg.gate_threshold * cfg.good_scale / cfg.base_scale;
        Matrix& w1 = m.w1.back();
        Matrix& w2 = m.w2.back();
        for (int k = 0; k < d; ++k) {
            w1(0, static_cast<std::size_t>(k)) = c[k] - t * b[k];
            w2(static_cast<std::size_t>(k), 0) = cfg.gate_gain * q[k];
        }
        round_to_f32(w1);
        round_to_f32(w2);
    }
    round_to_f32(m.embed);
    round_to_f32(c);
    round_to_f32(fk);
    m.content_dir = c;
    m.format_dir = fk;
    m.head = c; // pure content head until a bias is planted
    return m;
}

Mask token_mask(const TokenVocab& v, const Tokens& toks) {
    Mask mask(toks.size());
    for (std::size_t i = 0; i < toks.size(); ++i) mask[i] = v.is_special(toks[i]) ? 0 : 1;
    return mask;
}

Vec masked_mean(const Matrix& h, const Mask& mask) {
    if (mask.size() != h.rows)
        throw std::invalid_argument(fmt::format("mask length {} != rows {}", mask.size(), h.rows));
    Vec s(h.cols, 0.0);
    std::size_t n = 0;
    for (std::size_t t = 0; t < h.rows; ++t) {
        if (!mask[t]) continue;
        auto r = h.row(t);
        for (std::size_t k = 0; k < h.cols; ++k) s[k] += r[k];
        ++n;
    }
    if (n == 0) throw std::invalid_argument("no non-special positions to pool");
    for (auto& x : s) x /= static_cast<double>(n);
    return s;
}

double head_score(const ToyRewardModel& m, const Matrix& final_layer, const Mask& mask) {
    return dot(m.head, masked_mean(final_layer, mask));
}

namespace {

Matrix apply_hook(const HookSet* hooks, int layer, Matrix h, const Mask& mask) {
    if (!hooks || !hooks->active) return h;
    auto it = hooks->hooks.find(layer);
    if (it == hooks->hooks.end()) return h;
    Matrix out = it->second(h, mask);
    if (out.rows != h.rows || out.cols != h.cols)
        throw std::invalid_argument(fmt::format("hook at layer {} changed the activation shape", layer));
    return out;
}

std::vector<Matrix> run_layers(const ToyRewardModel& m, const Tokens& toks, const Mask& mask, const HookSet* hooks) {
    if (hooks)
        for (const auto& [l, _] : hooks->hooks)
            if (l < 0 || l > m.depth) throw std::invalid_argument(fmt::format("hook layer {} outside [0, {}]", l, m.depth));
    std::vector<Matrix> layers;
    layers.reserve(static_cast<std::size_t>(m.depth) + 1);
    Matrix h(toks.size(), static_cast<std::size_t>(m.d));
    for (std::size_t t = 0; t < toks.size(); ++t) {
        auto src = m.embed.row(static_cast<std::size_t>(toks[t]));
        std::copy(src.begin(), src.end(), h.row(t).begin());
    }
    h = apply_hook(hooks, 0, std::move(h), mask);
    layers.push_back(h);
    for (int l = 0; l < m.depth; ++l) {
        Matrix a = relu(matmul_bt(h, m.w1[static_cast<std::size_t>(l)]));
        Matrix up = matmul_bt(a, m.w2[static_cast<std::size_t>(l)]);
        for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += up.data[i];
        h = apply_hook(hooks, l + 1, std::move(h), mask);
        layers.push_back(h);
    }
    return layers;
}

} // namespace

ForwardTrace forward(const ToyRewardModel& m, const Tokens& toks, const HookSet* hooks) {
    check_tokens(m.vocab, toks);
    ForwardTrace tr;
    tr.mask = token_mask(m.vocab, toks);
    if (std::none_of(tr.mask.begin(), tr.mask.end(), [](auto b) { return b != 0; }))
        throw std::invalid_argument("sequence has no non-special positions");
    tr.layers = run_layers(m, toks, tr.mask, hooks);
    tr.reward = head_score(m, tr.layers.back(), tr.mask);
    return tr;
}

double reward(const ToyRewardModel& m, const Tokens& toks, const HookSet* hooks) {
    return forward(m, toks, hooks).reward;
}

std::pair<Vec, Vec> calibration_means(const ToyRewardModel& m, const std::vector<Tokens>& calibration) {
    if (calibration.empty()) throw std::invalid_argument("plant_bias: empty calibration set");
    Vec vc(static_cast<std::size_t>(m.d), 0.0), vf(static_cast<std::size_t>(m.d), 0.0);
    std::size_t nc = 0, nf = 0;
    for (const auto& toks : calibration) {
        auto tr = forward(m, toks);
        const Matrix& fin = tr.layers.back();
        for (std::size_t t = 0; t < toks.size(); ++t) {
            Vec* dst = nullptr;
            if (toks[t] == m.vocab.good) {
                dst = &vc;
                ++nc;
            } else if (m.vocab.is_markup(toks[t])) {
                dst = &vf;
                ++nf;
            } else {
                continue;
            }
            auto r = fin.row(t);
            for (std::size_t k = 0; k < r.size(); ++k) (*dst)[k] += r[k];
        }
    }
    if (nc == 0) throw std::invalid_argument("plant_bias: calibration has no GOOD positions");
    if (nf == 0) throw std::invalid_argument("plant_bias: calibration has no markup positions");
    for (auto& x : vc) x /= static_cast<double>(nc);
    for (auto& x : vf) x /= static_cast<double>(nf);
    return {vc, vf};
}

ToyRewardModel plant_bias_with(const ToyRewardModel& m, double alpha, const Vec& v_content, const Vec& v_format) {
    if (!std::isfinite(alpha)) throw std::invalid_argument("plant_bias: alpha must be finite");
    if (v_content.size() != static_cast<std::size_t>(m.d) || v_format.size() != static_cast<std::size_t>(m.d))
        throw std::invalid_argument("plant_bias: calibration means have the wrong length");
    ToyRewardModel out = m;
    out.alpha = static_cast<float>(alpha);
    out.v_content = v_content;
    out.v_format = v_format;
    round_to_f32(out.v_content);
    round_to_f32(out.v_format);
    double nc = norm(v_content), nf = norm(v_format);
    if (nc == 0.0 || nf == 0.0) throw std::invalid_argument("plant_bias: degenerate calibration direction");
    out.head.assign(static_cast<std::size_t>(m.d), 0.0);
    for (int k = 0; k < m.d; ++k) out.head[k] = v_content[k] / nc + out.alpha * v_format[k] / nf;
    round_to_f32(out.head);
    return out;
}

ToyRewardModel plant_bias(const ToyRewardModel& m, double alpha, const std::vector<Tokens>& calibration) {
    auto [vc, vf] = calibration_means(m, calibration);
    return plant_bias_with(m, alpha, vc, vf);
}

Tokens concat_seq(const TokenVocab& v, const Tokens& x, const Tokens& y) {
    Tokens s;
    s.reserve(x.size() + y.size() + 2);
    s.push_back(v.bos);
    s.insert(s.end(), x.begin(), x.end());
    s.insert(s.end(), y.begin(), y.end());
    s.push_back(v.eos);
    return s;
}

double format_gap(const ToyRewardModel& m, const Tokens& x, const Tokens& y_md, const Tokens& y_pl, const HookSet* hooks) {
    return reward(m, concat_seq(m.vocab, x, y_md), hooks) - reward(m, concat_seq(m.vocab, x, y_pl), hooks);
}

TokenScorer::TokenScorer(const ToyRewardModel& m, const HookSet* hooks) : vocab_(m.vocab), head_(m.head) {
    Tokens all(static_cast<std::size_t>(m.vocab.size));
    for (int t = 0; t < m.vocab.size; ++t) all[static_cast<std::size_t>(t)] = t;
    Mask mask = token_mask(m.vocab, all);
    layers_ = run_layers(m, all, mask, hooks);
    final_ = layers_.back();
}

double TokenScorer::score(const Tokens& toks) const { return score(toks, head_); }

double TokenScorer::score(const Tokens& toks, const Vec& head) const {
    check_tokens(vocab_, toks);
    Vec s(final_.cols, 0.0);
    std::size_t n = 0;
    for (Token t : toks) {
        if (vocab_.is_special(t)) continue;
        auto r = final_.row(static_cast<std::size_t>(t));
        for (std::size_t k = 0; k < s.size(); ++k) s[k] += r[k];
        ++n;
    }
    if (n == 0) throw std::invalid_argument("no non-special positions to pool");
    for (auto& x : s) x /= static_cast<double>(n);
    return dot(head, s);
}

// Payload layout (all f32): V depth d hidden pad bos eos markup[5] good first_filler
// seed as four 16-bit chunks, alpha, has_calibration, then embed, w1[], w2[], head,
// content_dir, format_dir and (when present) v_content, v_format.
std::vector<double> model_to_payload(const ToyRewardModel& m) {
    std::vector<double> p;
    auto I = [&](long long v) { p.push_back(static_cast<double>(v)); };
    I(m.vocab.size);
    I(m.depth);
    I(m.d);
    I(m.hidden);
    I(m.vocab.pad);
    I(m.vocab.bos);
    I(m.vocab.eos);
    for (Token t : m.vocab.markup) I(t);
    I(m.vocab.good);
    I(m.vocab.first_filler);
    for (int i = 0; i < 4; ++i) I(static_cast<long long>((m.seed >> (16 * i)) & 0xFFFF));
    p.push_back(m.alpha);
    bool cal = !m.v_content.empty();
    I(cal ? 1 : 0);
    auto A = [&](const std::vector<double>& v) { p.insert(p.end(), v.begin(), v.end()); };
    A(m.embed.data);
    for (const auto& w : m.w1) A(w.data);
    for (const auto& w : m.w2) A(w.data);
    A(m.head);
    A(m.content_dir);
    A(m.format_dir);
    if (cal) {
        A(m.v_content);
        A(m.v_format);
    }
    return p;
}

ToyRewardModel model_from_payload(const std::vector<double>& p) {
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (pos + n > p.size()) throw std::runtime_error("model blob: payload too short");
    };
    auto I = [&]() -> long long {
        need(1);
        double x = p[pos++];
        if (x != std::floor(x) || x < 0 || x > 1e7) throw std::runtime_error("model blob: bad integer field");
        return static_cast<long long>(x);
    };
    auto A = [&](std::size_t n) {
        need(n);
        std::vector<double> v(p.begin() + static_cast<long>(pos), p.begin() + static_cast<long>(pos + n));
        pos += n;
        return v;
    };
    ToyRewardModel m;
    m.vocab.size = static_cast<int>(I());
    m.depth = static_cast<int>(I());
    m.d = static_cast<int>(I());
    m.hidden = static_cast<int>(I());
    m.vocab.pad = static_cast<Token>(I());
    m.vocab.bos = static_cast<Token>(I());
    m.vocab.eos = static_cast<Token>(I());
    for (auto& t : m.vocab.markup) t = static_cast<Token>(I());
    m.vocab.good = static_cast<Token>(I());
    m.vocab.first_filler = static_cast<Token>(I());
    try {
        m.vocab.validate();
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(fmt::format("model blob: {}", e.what()));
    }
    if (m.depth < 1 || m.d < 1 || m.hidden < 1) throw std::runtime_error("model blob: bad dims");
    m.seed = 0;
    for (int i = 0; i < 4; ++i) m.seed |= static_cast<std::uint64_t>(I()) << (16 * i);
    need(1);
    m.alpha = p[pos++];
    bool cal = I() != 0;
    const auto V = static_cast<std::size_t>(m.vocab.size), d = static_cast<std::size_t>(m.d),
               hid = static_cast<std::size_t>(m.hidden);
    m.embed = Matrix(V, d, A(V * d));
    for (int l = 0; l < m.depth; ++l) m.w1.emplace_back(hid, d, A(hid * d));
    for (int l = 0; l < m.depth; ++l) m.w2.emplace_back(d, hid, A(d * hid));
    m.head = A(d);
    m.content_dir = A(d);
    m.format_dir = A(d);
    if (cal) {
        m.v_content = A(d);
        m.v_format = A(d);
    }
    if (pos != p.size()) throw std::runtime_error("model blob: trailing values");
    return m;
}

void save_model(const ToyRewardModel& m, const std::string& path) {
    auto p = model_to_payload(m);
    write_dump(make_dump(DumpKind::model, kNoLayer, Matrix(1, p.size(), p)), path);
}

ToyRewardModel load_model(const std::string& path) {
    auto d = read_dump(path);
    if (d.header.kind != DumpKind::model)
        throw std::runtime_error(fmt::format("{}: expected a model blob, found {}", path, kind_name(d.header.kind)));
    return model_from_payload(d.values.data);
}

} // namespace steerkt
