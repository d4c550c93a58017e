#include "steerkt/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <fmt/core.h>
#include <json.hpp>

namespace steerkt {

SaeTrainConfig pipeline_sae_config() {
    SaeTrainConfig c;
    c.m = 256;
    c.lambda = 0.3;
    c.lr = 0.1;
    c.epochs = 20000;
    c.unit_norm_decoder = true;
    c.center_decoder_bias = true;
    return c;
}

void RunConfig::validate() const {
    toy.validate();
    if (alpha && !std::isfinite(*alpha)) throw std::invalid_argument("alpha must be finite");
    if (!(alpha_step > 0) || !(alpha_max >= alpha_step)) throw std::invalid_argument("bad alpha search grid");
    if (n_pairs < 2) throw std::invalid_argument("need at least 2 probe pairs");
    if (n_pool < n_pairs) throw std::invalid_argument("pair pool smaller than the probe set");
    if (n_heldout < 1 || n_calibration < 1 || n_calib_triplets < 1 || n_eval_triplets < 1)
        throw std::invalid_argument("set sizes must be >= 1");
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be > 0");
    if (layers)
        for (int l : *layers)
            if (l < 0 || l > toy.depth) throw std::invalid_argument(fmt::format("layer {} outside [0, {}]", l, toy.depth));
}

ToyData make_toy_data(const RunConfig& cfg) {
    SeededRng root(cfg.seed);
    ToyData d;
    SeededRng r_pool = root.split(1), r_held = root.split(2), r_cal = root.split(3), r_ct = root.split(4),
              r_et = root.split(5);
    d.pool = synth_pairs(r_pool, cfg.n_pool, {}, cfg.toy.vocab);
    d.probe.pairs.assign(d.pool.pairs.begin(), d.pool.pairs.begin() + static_cast<long>(cfg.n_pairs));
    d.heldout = synth_pairs(r_held, cfg.n_heldout, {}, cfg.toy.vocab);
    PairSet cal = synth_pairs(r_cal, cfg.n_calibration, {}, cfg.toy.vocab);
    for (const auto& p : cal.pairs) d.calibration.push_back(concat_seq(cfg.toy.vocab, p.prompt, p.answer_md));
    d.calib_triplets = build_triplets(r_ct, cfg.n_calib_triplets, {}, cfg.toy.vocab, {Split::hard});
    d.eval_triplets = build_triplets(r_et, cfg.n_eval_triplets, {}, cfg.toy.vocab);
    return d;
}

Matrix sae_corpus(const ToyRewardModel& model, const PairSet& pairs, int layer) {
    std::set<Token> ids;
    for (const auto& p : pairs.pairs)
        for (const Tokens* s : {&p.prompt, &p.answer_md, &p.answer_plain})
            for (Token t : *s)
                if (!model.vocab.is_special(t)) ids.insert(t);
    if (ids.empty()) throw std::invalid_argument("sae_corpus: pairs contain no tokens");
    TokenScorer sc(model);
    const Matrix& tab = sc.layer_rows(layer);
    Matrix out(ids.size(), tab.cols);
    std::size_t r = 0;
    for (Token t : ids) {
        auto src = tab.row(static_cast<std::size_t>(t));
        std::copy(src.begin(), src.end(), out.row(r++).begin());
    }
    return out;
}

SaeMap train_layer_saes(const ToyRewardModel& model, const PairSet& pairs, const std::vector<int>& layers,
                        const SaeTrainConfig& cfg, std::vector<SaeSummary>* summaries) {
    auto trained = parallel_map(layers.size(), [&](std::size_t i) {
        SaeTrainConfig c = cfg;
        c.seed = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(layers[i]);
        return train_sae(sae_corpus(model, pairs, layers[i]), layers[i], c);
    });
    SaeMap out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        out[layers[i]] = trained[i].first;
        if (summaries) {
            const auto& rep = trained[i].second;
            summaries->push_back({layers[i], rep.final_rel_mse, rep.final_l0, rep.history.back().total, rep.dead_features});
        }
    }
    return out;
}

AlphaSearch calibrate_alpha(const ToyRewardModel& body, const Vec& v_content, const Vec& v_format,
                            const std::vector<EvalTriplet>& triplets, double target, double step, double max_alpha) {
    TokenScorer sc(body);
    AlphaSearch best;
    int steps = static_cast<int>(std::floor(max_alpha / step + 1e-9));
    for (int i = 1; i <= steps; ++i) {
        double a = step * i;
        ToyRewardModel m = plant_bias_with(body, a, v_content, v_format);
        std::size_t ok = 0, n = 0;
        for (const auto& t : triplets) {
            if (t.split != Split::hard) continue;
            ++n;
            ok += sc.score(concat_seq(body.vocab, t.prompt, t.chosen), m.head) >
                          sc.score(concat_seq(body.vocab, t.prompt, t.rejected), m.head)
                      ? 1
                      : 0;
        }
        if (n == 0) throw std::invalid_argument("calibrate_alpha: no hard-split triplets");
        best = {a, static_cast<double>(ok) / static_cast<double>(n), false};
        if (best.hard <= target) {
            best.reached = true;
            return best;
        }
    }
    return best;
}

ToyRewardModel reference_model(const RunConfig& cfg, const ToyData& data, AlphaSearch* info) {
    SeededRng root(cfg.seed);
    ToyRewardModel body = build_model(cfg.toy, root.split(0).next_u64());
    auto [vc, vf] = calibration_means(body, data.calibration);
    AlphaSearch s;
    if (cfg.alpha) {
        s = {*cfg.alpha, 0.0, true};
    } else {
        s = calibrate_alpha(body, vc, vf, data.calib_triplets, cfg.alpha_target_hard, cfg.alpha_step, cfg.alpha_max);
    }
    if (info) *info = s;
    return plant_bias_with(body, s.alpha, vc, vf);
}

PipelineResult run_pipeline(const RunConfig& cfg) {
    cfg.validate();
    PipelineResult r;
    r.config = cfg;
    SeededRng root(cfg.seed);
    r.data = make_toy_data(cfg);
    AlphaSearch as;
    r.model = reference_model(cfg, r.data, &as);
    r.alpha = as.alpha;
    r.alpha_calibrated = !cfg.alpha.has_value();
    r.alpha_reached_target = as.reached;

    std::vector<int> all_layers;
    for (int l = 0; l <= r.model.depth; ++l) all_layers.push_back(l);
    SaeTrainConfig sc = cfg.sae;
    sc.seed = root.split(6).next_u64();
    r.saes = train_layer_saes(r.model, r.data.pool, all_layers, sc, &r.sae_summaries);

    std::vector<Tokens> corpus;
    for (const auto& p : r.data.heldout.pairs) {
        corpus.push_back(concat_seq(r.model.vocab, p.prompt, p.answer_md));
        corpus.push_back(concat_seq(r.model.vocab, p.prompt, p.answer_plain));
    }
    r.layers = layer_report(r.model, r.saes, corpus);
    r.used_layers = cfg.layers ? *cfg.layers : r.layers.recommended;
    if (r.used_layers.empty())
        throw std::runtime_error("no layer qualifies for identification (layer 0 reconstructs too poorly); pass explicit layers");
    if (r.used_layers.empty()) throw std::runtime_error("no layers selected for identification");

    FeatureLayout lay = layout_of(r.saes, r.used_layers);
    r.table = score_features(paired_diffs(r.data.probe, r.model, r.saes, r.used_layers, cfg.scope), cfg.epsilon, lay);
    r.spec = select_top_k(r.table, cfg.k);
    r.spec.provenance.source_model = fmt::format("toy/seed{}/alpha{}", cfg.seed, r.model.alpha);
    r.spec.provenance.seed = cfg.seed;
    r.histogram = feature_layer_histogram(r.table, 100);

    r.baseline = evaluate(r.model, std::nullopt, r.saes, r.data.eval_triplets);
    r.steered = evaluate(r.model, r.spec, r.saes, r.data.eval_triplets);
    r.gap_baseline = mean_abs_gap(r.model, std::nullopt, r.saes, r.data.heldout);
    r.gap_steered = mean_abs_gap(r.model, r.spec, r.saes, r.data.heldout);
    for (EvalResult* e : {&r.baseline, &r.steered}) e->config.seed = cfg.seed;

    if (cfg.suppression) {
        auto sd = build_suppression_directions(r.data.probe, r.model, r.used_layers, cfg.scope);
        InterventionSpec ss = suppression_spec(sd);
        ss.provenance = r.spec.provenance;
        ss.provenance.k = 0;
        r.suppressed = evaluate(r.model, ss, r.saes, r.data.eval_triplets);
        r.suppressed->config.seed = cfg.seed;
        r.gap_suppressed = mean_abs_gap(r.model, ss, r.saes, r.data.heldout);
        r.suppression_spec = std::move(ss);
    }
    return r;
}

namespace {

nlohmann::ordered_json eval_obj(const EvalResult& e) { return nlohmann::ordered_json::parse(eval_result_json(e)); }

} // namespace

RunConfig entangled_run_config() {
    RunConfig cfg;
    cfg.toy.overlap = 0.4;
    cfg.toy.w2_gain = 0.25;
    cfg.toy.good_scale = 2.0;
    cfg.toy.gate_gain = 20.0;
    cfg.toy.gate_threshold = 1.1;
    return cfg;
}

ToyRewardModel transfer_target(const ToyRewardModel& source, const RunConfig& cfg, double alpha_factor, double alpha) {
    RunConfig tc = cfg;
    tc.seed = cfg.seed + 1;
    ToyData tdata = make_toy_data(tc);
    auto [vc, vf] = calibration_means(source, tdata.calibration);
    double a = alpha > 0 ? alpha : alpha_factor * source.alpha;
    return plant_bias_with(source, a, vc, vf);
}

std::string pipeline_report_json(const PipelineResult& r) {
    using J = nlohmann::ordered_json;
    const auto& c = r.config;
    J j;
    J cfg;
    cfg["seed"] = c.seed;
    cfg["alpha"] = c.alpha ? J(*c.alpha) : J(nullptr);
    cfg["alpha_target_hard"] = c.alpha_target_hard;
    cfg["alpha_step"] = c.alpha_step;
    cfg["alpha_max"] = c.alpha_max;
    cfg["n_pairs"] = c.n_pairs;
    cfg["n_pool"] = c.n_pool;
    cfg["n_heldout"] = c.n_heldout;
    cfg["n_calibration"] = c.n_calibration;
    cfg["n_calib_triplets"] = c.n_calib_triplets;
    cfg["n_eval_triplets"] = c.n_eval_triplets;
    cfg["k"] = c.k;
    cfg["epsilon"] = c.epsilon;
    cfg["layers"] = c.layers ? J(*c.layers) : J(nullptr);
    cfg["pool_scope"] = c.scope == PoolScope::full ? "full" : "response";
    cfg["toy"] = {{"vocab_size", c.toy.vocab.size}, {"depth", c.toy.depth},       {"d", c.toy.d},
                  {"hidden", c.toy.hidden},         {"embed_scale", c.toy.embed_scale},
                  {"base_scale", c.toy.base_scale}, {"good_scale", c.toy.good_scale},
                  {"markup_scale", c.toy.markup_scale}, {"markup_noise", c.toy.markup_noise},
                  {"overlap", c.toy.overlap},       {"w1_gain", c.toy.w1_gain},   {"w2_gain", c.toy.w2_gain}};
    cfg["sae"] = {{"m", c.sae.m},
                  {"lambda", c.sae.lambda},
                  {"lr", c.sae.lr},
                  {"epochs", c.sae.epochs},
                  {"unit_norm_decoder", c.sae.unit_norm_decoder},
                  {"center_decoder_bias", c.sae.center_decoder_bias}};
    cfg["suppression"] = c.suppression;
    j["config"] = cfg;
    j["alpha"] = {{"value", r.model.alpha}, {"calibrated", r.alpha_calibrated}, {"reached_target", r.alpha_reached_target}};

    J saes = J::array();
    for (const auto& s : r.sae_summaries)
        saes.push_back({{"layer", s.layer}, {"rel_mse", s.rel_mse}, {"l0", s.l0}, {"final_loss", s.final_loss}, {"dead", s.dead}});
    j["sae_training"] = saes;
    j["layer_report"] = J::parse(layer_report_json(r.layers));
    j["layers_used"] = r.used_layers;
    j["spec"] = J::parse(spec_to_json(r.spec));

    J top = J::array();
    auto order = ranked_candidates(r.table);
    for (std::size_t i = 0; i < std::min<std::size_t>(order.size(), 20); ++i) {
        const auto& f = r.table.features[order[i]];
        top.push_back({{"layer", f.layer}, {"index", f.index}, {"mu", f.mu}, {"var", f.var}, {"score", f.score}});
    }
    j["top_features"] = top;
    J hist = J::object();
    for (const auto& [l, n] : r.histogram) hist[std::to_string(l)] = n;
    j["feature_histogram_top100"] = hist;

    j["baseline"] = eval_obj(r.baseline);
    j["steered"] = eval_obj(r.steered);
    J gap = {{"baseline", r.gap_baseline}, {"steered", r.gap_steered}};
    gap["steered_drop"] = r.gap_baseline > 0 ? 1.0 - r.gap_steered / r.gap_baseline : 0.0;
    if (r.suppressed) {
        j["suppressed"] = eval_obj(*r.suppressed);
        gap["suppressed"] = r.gap_suppressed;
        gap["suppressed_drop"] = r.gap_baseline > 0 ? 1.0 - r.gap_suppressed / r.gap_baseline : 0.0;
    }
    j["mean_abs_gap"] = gap;
    return j.dump(2) + "\n";
}

static void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", p.string()));
    out << s;
    if (!out) throw std::runtime_error(fmt::format("write failed: {}", p.string()));
}

void write_pipeline_outputs(const PipelineResult& r, const std::string& dir, bool plots) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    fs::path d(dir);
    write_text(d / "report.json", pipeline_report_json(r));
    write_text(d / "layers.csv", layer_report_csv(r.layers));
    write_text(d / "features.csv", table_to_csv(r.table));
    write_text(d / "spec.json", spec_to_json(r.spec));
    std::string ev = "mode,split,accuracy,count\n";
    auto add = [&](const std::string& mode, const EvalResult& e) {
        for (const auto& [s, a] : e.accuracy) ev += fmt::format("{},{},{},{}\n", mode, s, a, e.counts.at(s));
    };
    add("baseline", r.baseline);
    add("sae-ablate", r.steered);
    if (r.suppressed) add("direct-suppress", *r.suppressed);
    write_text(d / "eval.csv", ev);
    if (r.suppression_spec) write_text(d / "suppression_spec.json", spec_to_json(*r.suppression_spec));
    save_model(r.model, (d / "model.bin").string());
    for (const auto& [l, s] : r.saes) save_sae(s, (d / fmt::format("sae_layer{}.bin", l)).string());
    save_pairs_json(r.data.probe, (d / "pairs.json").string(), r.model.vocab);
    if (plots) {
        std::vector<double> xs, mse, dr, l0s;
        for (const auto& row : r.layers.rows) {
            xs.push_back(row.layer);
            mse.push_back(row.rel_mse);
            dr.push_back(row.reward_delta);
            l0s.push_back(row.l0);
        }
        write_text(d / "layers_rel_mse.svg", svg_line_chart("Relative reconstruction MSE by layer", xs, {{"rel_mse", mse}}));
        write_text(d / "layers_reward_delta.svg", svg_line_chart("Reward delta by layer", xs, {{"reward_delta", dr}}));
        write_text(d / "layers_l0.svg", svg_line_chart("Mean L0 by layer", xs, {{"l0", l0s}}));
        std::vector<std::string> labels;
        std::vector<double> counts;
        for (const auto& [l, n] : r.histogram) {
            labels.push_back(std::to_string(l));
            counts.push_back(n);
        }
        write_text(d / "feature_histogram.svg", svg_bar_chart("Top-100 features per layer", labels, counts));
    }
}

namespace {

constexpr double kW = 640, kH = 360, kPad = 50;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

std::string svg_head(const std::string& title) {
    return fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\">\n"
                       "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
                       "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n"
                       "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n"
                       "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
                       kW, kH, kW / 2, title, kPad, kH - kPad, kW - kPad, kH - kPad, kPad, kPad, kPad, kH - kPad);
}

} // namespace

std::string svg_line_chart(const std::string& title, const std::vector<double>& xs,
                           const std::vector<std::pair<std::string, std::vector<double>>>& series) {
    std::string s = svg_head(title);
    if (xs.empty()) return s + "</svg>\n";
    double x0 = *std::min_element(xs.begin(), xs.end()), x1 = *std::max_element(xs.begin(), xs.end());
    double y0 = 0, y1 = 0;
    for (const auto& [_, ys] : series)
        for (double y : ys) y1 = std::max(y1, y);
    if (y1 <= y0) y1 = y0 + 1;
    if (x1 <= x0) x1 = x0 + 1;
    auto px = [&](double x) { return kPad + (x - x0) / (x1 - x0) * (kW - 2 * kPad); };
    auto py = [&](double y) { return kH - kPad - (y - y0) / (y1 - y0) * (kH - 2 * kPad); };
    s += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{:.3g}</text>\n", kPad - 4, kPad + 4, y1);
    for (double x : xs)
        s += fmt::format("<text x=\"{:.1f}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n", px(x),
                         kH - kPad + 16, x);
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& [name, ys] = series[i];
        std::string pts;
        for (std::size_t k = 0; k < xs.size() && k < ys.size(); ++k)
            pts += fmt::format("{:.1f},{:.1f} ", px(xs[k]), py(ys[k]));
        const char* col = kColors[i % 5];
        s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", col, pts);
        s += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{}\">{}</text>\n", kW - kPad - 120,
                         kPad + 16 * (i + 1), col, name);
    }
    return s + "</svg>\n";
}

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels, const std::vector<double>& values) {
    std::string s = svg_head(title);
    if (values.empty()) return s + "</svg>\n";
    double top = std::max(1.0, *std::max_element(values.begin(), values.end()));
    double slot = (kW - 2 * kPad) / static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        double h = values[i] / top * (kH - 2 * kPad);
        double x = kPad + slot * static_cast<double>(i) + slot * 0.15;
        s += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\"/>\n", x,
                         kH - kPad - h, slot * 0.7, h, kColors[0]);
        s += fmt::format("<text x=\"{:.1f}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
                         x + slot * 0.35, kH - kPad + 16, i < labels.size() ? labels[i] : "");
        s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
                         x + slot * 0.35, kH - kPad - h - 4, values[i]);
    }
    return s + "</svg>\n";
}

} // namespace steerkt
