#include "steerkt/saecore.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

#include "steerkt/dumpio.hpp"

namespace steerkt {

SaeModel init_sae(int d, int m, int layer, SeededRng& rng) {
    if (d < 1 || m < 1) throw std::invalid_argument(fmt::format("init_sae: bad dims d={} m={}", d, m));
    SaeModel s;
    s.layer = layer;
    s.d = d;
    s.m = m;
    s.w_enc = Matrix(static_cast<std::size_t>(m), static_cast<std::size_t>(d));
    for (std::size_t j = 0; j < s.w_enc.rows; ++j) {
        auto r = s.w_enc.row(j);
        double n2;
        do {
            for (auto& x : r) x = rng.normal();
            n2 = norm(r);
        } while (n2 == 0.0);
        for (auto& x : r) x /= n2;
    }
    round_to_f32(s.w_enc);
    s.w_dec = transpose(s.w_enc);
    s.b_enc.assign(static_cast<std::size_t>(m), 0.0);
    s.b_dec.assign(static_cast<std::size_t>(d), 0.0);
    return s;
}

static void check_sae(const SaeModel& s) {
    if (s.w_enc.rows != static_cast<std::size_t>(s.m) || s.w_enc.cols != static_cast<std::size_t>(s.d) ||
        s.w_dec.rows != static_cast<std::size_t>(s.d) || s.w_dec.cols != static_cast<std::size_t>(s.m) ||
        s.b_enc.size() != static_cast<std::size_t>(s.m) || s.b_dec.size() != static_cast<std::size_t>(s.d))
        throw std::invalid_argument("SAE parameter shapes are inconsistent");
}

Matrix encode(const SaeModel& sae, const Matrix& h) {
    if (h.cols != static_cast<std::size_t>(sae.d))
        throw std::invalid_argument(fmt::format("encode: input has {} cols, SAE expects {}", h.cols, sae.d));
    Matrix z = matmul_bt(h, sae.w_enc);
    for (std::size_t t = 0; t < z.rows; ++t) {
        auto r = z.row(t);
        for (std::size_t j = 0; j < z.cols; ++j) {
            double v = r[j] + sae.b_enc[j];
            r[j] = v > 0.0 ? v : 0.0;
        }
    }
    return z;
}

Matrix decode(const SaeModel& sae, const Matrix& z) {
    if (z.cols != static_cast<std::size_t>(sae.m))
        throw std::invalid_argument(fmt::format("decode: latents have {} cols, SAE has {}", z.cols, sae.m));
    Matrix h = matmul_bt(z, sae.w_dec);
    for (std::size_t t = 0; t < h.rows; ++t) {
        auto r = h.row(t);
        for (std::size_t k = 0; k < h.cols; ++k) r[k] += sae.b_dec[k];
    }
    return h;
}

Matrix reconstruct(const SaeModel& sae, const Matrix& h) { return decode(sae, encode(sae, h)); }

SaeLoss sae_loss(const SaeModel& sae, const Matrix& h, double lambda) {
    check_sae(sae);
    if (h.rows == 0) throw std::invalid_argument("sae_loss: empty batch");
    Matrix z = encode(sae, h);
    Matrix hh = decode(sae, z);
    double rec = 0, sp = 0;
    for (std::size_t i = 0; i < h.data.size(); ++i) {
        double e = hh.data[i] - h.data[i];
        rec += e * e;
    }
    for (double x : z.data) sp += x;
    SaeLoss l;
    l.recon = rec / static_cast<double>(h.rows);
    l.sparsity = sp / static_cast<double>(h.rows);
    l.total = l.recon + lambda * l.sparsity;
    return l;
}

SaeGrads sae_gradients(const SaeModel& sae, const Matrix& h, double lambda) {
    check_sae(sae);
    if (h.cols != static_cast<std::size_t>(sae.d)) throw std::invalid_argument("sae_gradients: dim mismatch");
    const std::size_t T = h.rows, d = static_cast<std::size_t>(sae.d), m = static_cast<std::size_t>(sae.m);
    if (T == 0) throw std::invalid_argument("sae_gradients: empty batch");
    Matrix pre = matmul_bt(h, sae.w_enc);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < m; ++j) pre(t, j) += sae.b_enc[j];
    Matrix z = relu(pre);
    Matrix hh = decode(sae, z);
    const double inv = 1.0 / static_cast<double>(T);

    SaeGrads g{Matrix(m, d), Matrix(d, m), Vec(m, 0.0), Vec(d, 0.0)};
    Matrix gh(T, d);
    for (std::size_t i = 0; i < gh.data.size(); ++i) gh.data[i] = 2.0 * inv * (hh.data[i] - h.data[i]);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t k = 0; k < d; ++k) {
            g.b_dec[k] += gh(t, k);
            for (std::size_t j = 0; j < m; ++j) g.w_dec(k, j) += gh(t, k) * z(t, j);
        }
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < m; ++j) {
            if (!(pre(t, j) > 0.0)) continue;
            double gz = lambda * inv;
            for (std::size_t k = 0; k < d; ++k) gz += gh(t, k) * sae.w_dec(k, j);
            g.b_enc[j] += gz;
            for (std::size_t k = 0; k < d; ++k) g.w_enc(j, k) += gz * h(t, k);
        }
    return g;
}

double relative_mse(const SaeModel& sae, const Matrix& h) {
    Matrix hh = reconstruct(sae, h);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < h.data.size(); ++i) {
        double e = hh.data[i] - h.data[i];
        num += e * e;
        den += h.data[i] * h.data[i];
    }
    if (den == 0.0) throw std::invalid_argument("relative_mse: activations are all zero");
    return num / den;
}

double mean_l0(const Matrix& z) {
    if (z.rows == 0) return 0.0;
    std::size_t c = 0;
    for (double x : z.data)
        if (x > kL0Threshold) ++c;
    return static_cast<double>(c) / static_cast<double>(z.rows);
}

std::pair<SaeModel, SaeTrainReport> train_sae(const Matrix& acts, int layer, const SaeTrainConfig& cfg) {
    if (acts.rows == 0 || acts.cols == 0) throw std::invalid_argument("train_sae: empty corpus");
    if (!(cfg.lambda >= 0.0)) throw std::invalid_argument("train_sae: lambda must be >= 0");
    if (!(cfg.lr > 0.0)) throw std::invalid_argument("train_sae: lr must be > 0");
    if (cfg.epochs < 0) throw std::invalid_argument("train_sae: epochs must be >= 0");
    if (!all_finite(acts.data)) throw std::invalid_argument("train_sae: corpus has non-finite values");

    const std::size_t T = acts.rows, d = acts.cols, m = static_cast<std::size_t>(cfg.m);
    SeededRng rng(cfg.seed);
    SaeModel s = init_sae(static_cast<int>(d), cfg.m, layer, rng);
    if (cfg.center_decoder_bias) {
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t k = 0; k < d; ++k) s.b_dec[k] += acts(t, k);
        for (auto& x : s.b_dec) x /= static_cast<double>(T);
    }

    SaeTrainReport rep;
    // Work on the decoder transpose (one contiguous row per feature). A feature
    // whose pre-activation is nonpositive on every row receives zero gradient in
    // every block, and since the inputs are fixed it can never reactivate; such
    // features are dropped from the working set.
    Matrix dt = transpose(s.w_dec);
    std::vector<std::size_t> alive(m);
    for (std::size_t j = 0; j < m; ++j) alive[j] = j;

    const double inv = 1.0 / static_cast<double>(T);
    Matrix pre(T, m), err(T, d);
    Vec gdt(d), gwe(d), gbd(d);

    for (int ep = 0; ep <= cfg.epochs; ++ep) {
        const std::size_t na = alive.size();
        double rec = 0, sp = 0;
        for (std::size_t t = 0; t < T; ++t) {
            auto x = acts.row(t);
            auto e = err.row(t);
            for (std::size_t k = 0; k < d; ++k) e[k] = s.b_dec[k] - x[k];
            for (std::size_t a = 0; a < na; ++a) {
                std::size_t j = alive[a];
                double v = s.b_enc[j] + dot(s.w_enc.row(j), x);
                pre(t, a) = v;
                if (v > 0.0) {
                    sp += v;
                    auto dr = dt.row(j);
                    for (std::size_t k = 0; k < d; ++k) e[k] += v * dr[k];
                }
            }
            for (std::size_t k = 0; k < d; ++k) rec += e[k] * e[k];
        }
        SaeLoss l{0, rec * inv, sp * inv};
        l.total = l.recon + cfg.lambda * l.sparsity;
        if (!std::isfinite(l.total)) throw std::runtime_error(fmt::format("train_sae: loss diverged at epoch {}", ep));
        if (ep == cfg.epochs) break;
        rep.history.push_back(l);

        // gradient step
        std::fill(gbd.begin(), gbd.end(), 0.0);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t k = 0; k < d; ++k) gbd[k] += 2.0 * inv * err(t, k);
        std::vector<std::size_t> next;
        next.reserve(na);
        for (std::size_t a = 0; a < na; ++a) {
            std::size_t j = alive[a];
            std::fill(gdt.begin(), gdt.end(), 0.0);
            std::fill(gwe.begin(), gwe.end(), 0.0);
            double gbe = 0;
            bool active = false;
            auto dr = dt.row(j);
            for (std::size_t t = 0; t < T; ++t) {
                double v = pre(t, a);
                if (!(v > 0.0)) continue;
                active = true;
                auto e = err.row(t);
                auto x = acts.row(t);
                double gz = cfg.lambda * inv;
                for (std::size_t k = 0; k < d; ++k) {
                    double ghk = 2.0 * inv * e[k];
                    gdt[k] += v * ghk;
                    gz += ghk * dr[k];
                }
                gbe += gz;
                for (std::size_t k = 0; k < d; ++k) gwe[k] += gz * x[k];
            }
            if (!active) continue;
            next.push_back(j);
            auto we = s.w_enc.row(j);
            for (std::size_t k = 0; k < d; ++k) {
                we[k] -= cfg.lr * gwe[k];
                dr[k] -= cfg.lr * gdt[k];
            }
            s.b_enc[j] -= cfg.lr * gbe;
            if (cfg.unit_norm_decoder) {
                double n = norm(dr);
                if (n > 1e-12)
                    for (auto& x : dr) x /= n;
            }
        }
        for (std::size_t k = 0; k < d; ++k) s.b_dec[k] -= cfg.lr * gbd[k];
        alive.swap(next);
    }

    s.w_dec = transpose(dt);
    round_to_f32(s.w_enc);
    round_to_f32(s.w_dec);
    round_to_f32(s.b_enc);
    round_to_f32(s.b_dec);
    rep.history.push_back(sae_loss(s, acts, cfg.lambda));
    rep.final_rel_mse = relative_mse(s, acts);
    rep.final_l0 = mean_l0(encode(s, acts));
    rep.dead_features = static_cast<int>(m - alive.size());
    return {s, rep};
}

// Payload (f32): layer+1, d, m, then w_enc, b_enc, w_dec, b_dec.
void save_sae(const SaeModel& sae, const std::string& path) {
    check_sae(sae);
    std::vector<double> p{static_cast<double>(sae.layer + 1), static_cast<double>(sae.d), static_cast<double>(sae.m)};
    p.insert(p.end(), sae.w_enc.data.begin(), sae.w_enc.data.end());
    p.insert(p.end(), sae.b_enc.begin(), sae.b_enc.end());
    p.insert(p.end(), sae.w_dec.data.begin(), sae.w_dec.data.end());
    p.insert(p.end(), sae.b_dec.begin(), sae.b_dec.end());
    auto layer = sae.layer >= 0 ? static_cast<std::uint32_t>(sae.layer) : kNoLayer;
    write_dump(make_dump(DumpKind::sae, layer, Matrix(1, p.size(), p)), path);
}

SaeModel load_sae(const std::string& path) {
    auto dump = read_dump(path);
    if (dump.header.kind != DumpKind::sae)
        throw std::runtime_error(fmt::format("{}: expected an SAE blob, found {}", path, kind_name(dump.header.kind)));
    const auto& p = dump.values.data;
    if (p.size() < 3) throw std::runtime_error(fmt::format("{}: SAE blob too short", path));
    SaeModel s;
    s.layer = static_cast<int>(p[0]) - 1;
    s.d = static_cast<int>(p[1]);
    s.m = static_cast<int>(p[2]);
    if (s.d < 1 || s.m < 1) throw std::runtime_error(fmt::format("{}: SAE blob has bad dims", path));
    const auto d = static_cast<std::size_t>(s.d), m = static_cast<std::size_t>(s.m);
    if (p.size() != 3 + 2 * m * d + m + d) throw std::runtime_error(fmt::format("{}: SAE blob size mismatch", path));
    auto it = p.begin() + 3;
    s.w_enc = Matrix(m, d, std::vector<double>(it, it + static_cast<long>(m * d)));
    it += static_cast<long>(m * d);
    s.b_enc.assign(it, it + static_cast<long>(m));
    it += static_cast<long>(m);
    s.w_dec = Matrix(d, m, std::vector<double>(it, it + static_cast<long>(m * d)));
    it += static_cast<long>(m * d);
    s.b_dec.assign(it, it + static_cast<long>(d));
    return s;
}

} // namespace steerkt
