#include "steerkt/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <json.hpp>

#include "steerkt/diagnostics.hpp"
#include "steerkt/dumpio.hpp"
#include "steerkt/evalbench.hpp"
#include "steerkt/pipeline.hpp"
#include "steerkt/steer.hpp"

namespace steerkt {

namespace fs = std::filesystem;

std::vector<int> parse_layers(const std::string& text) {
    std::set<int> out;
    std::stringstream ss(text);
    std::string part;
    static const std::regex range_re(R"(^\s*(\d+)\s*-\s*(\d+)\s*$)"), one_re(R"(^\s*(\d+)\s*$)");
    while (std::getline(ss, part, ',')) {
        std::smatch m;
        if (std::regex_match(part, m, range_re)) {
            int a = std::stoi(m[1]), b = std::stoi(m[2]);
            if (b < a) throw std::invalid_argument(fmt::format("empty layer range '{}'", part));
            for (int l = a; l <= b; ++l) out.insert(l);
        } else if (std::regex_match(part, m, one_re)) {
            out.insert(std::stoi(m[1]));
        } else {
            throw std::invalid_argument(fmt::format("cannot parse layer list '{}'", text));
        }
    }
    if (out.empty()) throw std::invalid_argument("empty layer list");
    return {out.begin(), out.end()};
}

SaeMap load_saes(const std::string& dir) {
    SaeMap out;
    static const std::regex name_re(R"(sae_layer(\d+)\.bin)");
    if (!fs::is_directory(dir)) throw std::runtime_error(fmt::format("SAE directory {} does not exist", dir));
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
        std::smatch m;
        std::string name = p.filename().string();
        if (!std::regex_match(name, m, name_re)) continue;
        SaeModel s = load_sae(p.string());
        int l = std::stoi(m[1]);
        if (s.layer != l) throw std::runtime_error(fmt::format("{} records layer {}", name, s.layer));
        out[l] = std::move(s);
    }
    if (out.empty()) throw std::runtime_error(fmt::format("no sae_layer<L>.bin files in {}", dir));
    return out;
}

InterventionSpec identify_from_dumps(const std::string& manifest_path, int k, double epsilon, const SaeMap* encoders,
                                     FeatureScoreTable* table_out) {
    auto entries = read_manifest(manifest_path);
    if (entries.empty()) throw std::runtime_error("manifest lists no dumps");
    fs::path base = fs::path(manifest_path).parent_path();

    std::vector<std::string> order; // pair ids in first-appearance order
    std::set<int> layer_set;
    std::map<std::string, std::map<int, std::map<std::string, std::string>>> files;
    for (const auto& e : entries) {
        if (!files.count(e.pair_id)) order.push_back(e.pair_id);
        auto& slot = files[e.pair_id][e.layer][e.role];
        if (!slot.empty())
            throw std::runtime_error(fmt::format("pair {} lists layer {} role {} twice", e.pair_id, e.layer, e.role));
        slot = e.file;
        layer_set.insert(e.layer);
    }
    std::vector<int> layers(layer_set.begin(), layer_set.end());
    for (const auto& id : order)
        for (int l : layers)
            for (const char* role : {"md", "pl"})
                if (!files[id].count(l) || !files[id][l].count(role))
                    throw std::runtime_error(fmt::format("incomplete pair {}: missing {} dump for layer {}", id, role, l));

    std::map<int, int> widths;
    auto pooled = [&](const std::string& id, int layer, const std::string& rel) {
        auto d = read_dump((base / rel).string());
        if (d.header.kind != DumpKind::activations)
            throw std::runtime_error(fmt::format("{}: expected an activation dump", rel));
        if (d.header.layer != kNoLayer && d.header.layer != static_cast<std::uint32_t>(layer))
            throw std::runtime_error(fmt::format("{}: header layer {} disagrees with manifest layer {}", rel,
                                                 d.header.layer, layer));
        Matrix z = d.values;
        if (encoders) {
            auto it = encoders->find(layer);
            if (it == encoders->end()) throw std::runtime_error(fmt::format("no SAE for layer {}", layer));
            z = encode(it->second, z);
        }
        Mask mask = d.mask ? *d.mask : Mask(z.rows, 1);
        int w = static_cast<int>(z.cols);
        auto [it, fresh] = widths.emplace(layer, w);
        if (!fresh && it->second != w)
            throw std::runtime_error(fmt::format("pair {}: layer {} has width {}, earlier dumps have {}", id, layer, w,
                                                 it->second));
        try {
            return pool_latents(z, mask);
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error(fmt::format("{}: {}", rel, e.what()));
        }
    };

    std::vector<Vec> rows;
    for (const auto& id : order) {
        Vec row;
        for (int l : layers) {
            Vec a = pooled(id, l, files[id][l]["md"]);
            Vec b = pooled(id, l, files[id][l]["pl"]);
            for (std::size_t j = 0; j < a.size(); ++j) row.push_back(a[j] - b[j]);
        }
        rows.push_back(std::move(row));
    }
    FeatureLayout lay;
    for (int l : layers) {
        lay.layers.push_back(l);
        lay.widths.push_back(widths[l]);
    }
    Matrix D(rows.size(), lay.total());
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), D.row(i).begin());
    FeatureScoreTable t = score_features(D, epsilon, lay);
    InterventionSpec s = select_top_k(t, k);
    s.provenance.source_model = fs::path(manifest_path).filename().string();
    if (table_out) *table_out = std::move(t);
    return s;
}

namespace {

void write_text(const std::string& path, const std::string& s) {
    if (path.empty() || path == "-") {
        std::cout << s;
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path));
    out << s;
}

// Model source shared by subcommands: a saved blob, or the reference toy for a seed.
struct ModelOpts {
    std::string path;
    std::uint64_t seed = 7;
    std::optional<double> alpha;

    void attach(CLI::App* app) {
        app->add_option("--model", path, "model blob (default: build the reference toy)");
        app->add_option("--seed", seed, "seed for the reference toy and data");
        app->add_option("--alpha", alpha, "planted bias strength (default: calibrated)");
    }
    RunConfig run_config() const {
        RunConfig c;
        c.seed = seed;
        c.alpha = alpha;
        return c;
    }
    ToyRewardModel load() const {
        if (!path.empty()) return load_model(path);
        RunConfig c = run_config();
        return reference_model(c, make_toy_data(c));
    }
};

std::vector<int> layers_or_all(const std::string& spec, const SaeMap& saes) {
    if (!spec.empty()) return parse_layers(spec);
    std::vector<int> out;
    for (const auto& [l, _] : saes) out.push_back(l);
    return out;
}

std::vector<Tokens> pair_sequences(const PairSet& ps, const TokenVocab& v) {
    std::vector<Tokens> out;
    for (const auto& p : ps.pairs) {
        out.push_back(concat_seq(v, p.prompt, p.answer_md));
        out.push_back(concat_seq(v, p.prompt, p.answer_plain));
    }
    return out;
}

PoolScope parse_scope(const std::string& s) {
    if (s == "full") return PoolScope::full;
    if (s == "response") return PoolScope::response;
    throw std::invalid_argument(fmt::format("unknown pool scope '{}'", s));
}

} // namespace

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"steerkt: format-bias identification and steering on a toy reward model"};
    app.require_subcommand(1);

    // ---- pairs
    auto* pairs = app.add_subcommand("pairs", "synthesize, validate and deduplicate pair files");
    pairs->require_subcommand(1);
    std::size_t synth_n = 500;
    std::uint64_t synth_seed = 7;
    std::string pairs_out, pairs_in;
    double dedup_thr = 0.95;
    auto* p_synth = pairs->add_subcommand("synth", "write synthesized pairs as JSON");
    p_synth->add_option("--n", synth_n, "number of pairs")->check(CLI::PositiveNumber);
    p_synth->add_option("--seed", synth_seed, "seed");
    p_synth->add_option("--out", pairs_out, "output JSON (default stdout)");
    auto* p_val = pairs->add_subcommand("validate", "check every pair in a JSON file");
    p_val->add_option("--in", pairs_in, "pair JSON")->required();
    auto* p_dd = pairs->add_subcommand("dedup", "drop near-duplicate prompts");
    p_dd->add_option("--in", pairs_in, "pair JSON")->required();
    p_dd->add_option("--threshold", dedup_thr, "cosine threshold");
    p_dd->add_option("--out", pairs_out, "output JSON (default stdout)");

    // ---- sae
    auto* sae = app.add_subcommand("sae", "train or evaluate per-layer SAEs");
    sae->require_subcommand(1);
    ModelOpts sae_model;
    std::string sae_pairs, sae_dir, sae_layers;
    SaeTrainConfig sae_cfg = pipeline_sae_config();
    bool sae_plain = false;
    auto* s_train = sae->add_subcommand("train", "train SAEs on distinct token activations of a pair file");
    sae_model.attach(s_train);
    s_train->add_option("--pairs", sae_pairs, "pair JSON (default: the seed's synthesized pool)");
    s_train->add_option("--layers", sae_layers, "layers, e.g. 0-6 (default: all)");
    s_train->add_option("--m", sae_cfg.m, "latent width");
    s_train->add_option("--lambda", sae_cfg.lambda, "L1 weight");
    s_train->add_option("--lr", sae_cfg.lr, "learning rate");
    s_train->add_option("--epochs", sae_cfg.epochs, "full-batch epochs");
    s_train->add_flag("--plain", sae_plain, "disable decoder renormalization and bias centering");
    s_train->add_option("--out-dir", sae_dir, "directory for sae_layer<L>.bin")->required();
    auto* s_eval = sae->add_subcommand("eval", "layer report for trained SAEs");
    sae_model.attach(s_eval);
    s_eval->add_option("--saes", sae_dir, "SAE directory")->required();
    s_eval->add_option("--pairs", sae_pairs, "pair JSON (default: the seed's held-out pairs)");

    // ---- identify
    auto* ident = app.add_subcommand("identify", "select bias-carrying features");
    ModelOpts id_model;
    id_model.attach(ident);
    std::string id_pairs, id_saes, id_layers, id_out, id_table, id_manifest, id_scope = "full";
    int id_k = 10;
    double id_eps = 1e-6;
    ident->add_option("--pairs", id_pairs, "pair JSON (default: the seed's probe pairs)");
    ident->add_option("--saes", id_saes, "SAE directory");
    ident->add_option("--layers", id_layers, "layers (default: all SAE layers)");
    ident->add_option("--k", id_k, "global top-K")->check(CLI::PositiveNumber);
    ident->add_option("--eps", id_eps, "stability epsilon")->check(CLI::PositiveNumber);
    ident->add_option("--scope", id_scope, "pooling scope: full | response");
    ident->add_option("--manifest", id_manifest, "identify from dumps listed in a manifest");
    ident->add_option("--out", id_out, "spec JSON (default stdout)");
    ident->add_option("--table", id_table, "feature score CSV");

    // ---- steer
    auto* steer = app.add_subcommand("steer", "score pairs under an intervention");
    steer->require_subcommand(1);
    auto* st_score = steer->add_subcommand("score", "per-pair raw and steered gaps as CSV");
    ModelOpts st_model;
    st_model.attach(st_score);
    std::string st_spec, st_saes, st_pairs, st_out;
    st_score->add_option("--spec", st_spec, "spec JSON")->required();
    st_score->add_option("--saes", st_saes, "SAE directory (sae-ablate specs)");
    st_score->add_option("--pairs", st_pairs, "pair JSON")->required();
    st_score->add_option("--out", st_out, "CSV (default stdout)");

    // ---- diagnose
    auto* diag = app.add_subcommand("diagnose", "layer quality and feature localization");
    diag->require_subcommand(1);
    ModelOpts dg_model;
    std::string dg_saes, dg_pairs, dg_layers, dg_out;
    int dg_top = 100;
    bool dg_json = false;
    auto* dg_lay = diag->add_subcommand("layers", "MSE, reward delta and L0 per layer");
    dg_model.attach(dg_lay);
    dg_lay->add_option("--saes", dg_saes, "SAE directory")->required();
    dg_lay->add_option("--pairs", dg_pairs, "pair JSON (default: the seed's held-out pairs)");
    dg_lay->add_flag("--json", dg_json, "emit JSON instead of CSV");
    dg_lay->add_option("--out", dg_out, "output file (default stdout)");
    auto* dg_feat = diag->add_subcommand("features", "per-layer counts of the top-N features");
    dg_model.attach(dg_feat);
    dg_feat->add_option("--saes", dg_saes, "SAE directory")->required();
    dg_feat->add_option("--pairs", dg_pairs, "pair JSON (default: the seed's probe pairs)");
    dg_feat->add_option("--layers", dg_layers, "layers (default: all SAE layers)");
    dg_feat->add_option("--top-n", dg_top, "number of top features")->check(CLI::PositiveNumber);
    dg_feat->add_option("--out", dg_out, "output file (default stdout)");

    // ---- bench
    auto* bench = app.add_subcommand("bench", "triplet accuracy, sweeps and transfer");
    bench->require_subcommand(1);
    ModelOpts bn_model;
    std::string bn_saes, bn_spec, bn_layers, bn_out, bn_splits = "easy,normal,hard", bn_ks = "5,10,20,30,50",
                                                     bn_ns = "50,100,500,1000";
    int bn_k = 10;
    std::size_t bn_n = 350;
    double bn_alpha_b = 0;
    auto* b_run = bench->add_subcommand("run", "baseline (and optionally steered) accuracy");
    auto* b_k = bench->add_subcommand("sweep-k", "accuracy across K");
    auto* b_n = bench->add_subcommand("sweep-n", "selection overlap across probe sizes");
    auto* b_t = bench->add_subcommand("transfer", "apply a spec found on one head to another");
    for (auto* c : {b_run, b_k, b_n, b_t}) {
        bn_model.attach(c);
        c->add_option("--saes", bn_saes, "SAE directory");
        c->add_option("--layers", bn_layers, "identification layers (default: all SAE layers)");
        c->add_option("--n", bn_n, "triplets per split")->check(CLI::PositiveNumber);
        c->add_option("--out", bn_out, "JSON output (default stdout)");
    }
    b_run->add_option("--spec", bn_spec, "spec JSON to evaluate");
    b_run->add_option("--splits", bn_splits, "comma-separated splits");
    b_k->add_option("--ks", bn_ks, "comma-separated K values");
    b_n->add_option("--ns", bn_ns, "comma-separated probe sizes");
    b_n->add_option("--k", bn_k, "top-K")->check(CLI::PositiveNumber);
    b_t->add_option("--k", bn_k, "top-K")->check(CLI::PositiveNumber);
    b_t->add_option("--target-alpha", bn_alpha_b, "target head alpha (default: 1.5x source)");

    // ---- pipeline
    auto* pipe = app.add_subcommand("pipeline", "synthesize, train, diagnose, identify, evaluate, report");
    RunConfig pcfg;
    double p_alpha = 0;
    std::string p_layers, p_out = "steerkt_out", p_scope = "full";
    bool p_plot = false, p_no_supp = false;
    pipe->add_option("--seed", pcfg.seed, "seed");
    auto* p_alpha_opt = pipe->add_option("--alpha", p_alpha, "planted bias strength (default: calibrated)");
    pipe->add_option("--n", pcfg.n_pairs, "probe pairs")->check(CLI::PositiveNumber);
    pipe->add_option("--k", pcfg.k, "top-K")->check(CLI::PositiveNumber);
    pipe->add_option("--eps", pcfg.epsilon, "stability epsilon")->check(CLI::PositiveNumber);
    pipe->add_option("--layers", p_layers, "identification layers (default: recommended range)");
    pipe->add_option("--scope", p_scope, "pooling scope: full | response");
    pipe->add_option("--sae-epochs", pcfg.sae.epochs, "SAE training epochs");
    pipe->add_option("--out", p_out, "output directory");
    pipe->add_flag("--plot", p_plot, "also write SVG charts");
    pipe->add_flag("--no-suppression", p_no_supp, "skip the direct-suppression baseline");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (pairs->parsed()) {
            TokenVocab v;
            if (p_synth->parsed()) {
                SeededRng rng(synth_seed);
                write_text(pairs_out, pairs_to_json(synth_pairs(rng, synth_n, {}, v), v));
            } else if (p_val->parsed()) {
                PairSet ps = load_pairs_json(pairs_in, v, false);
                std::size_t bad = 0;
                for (std::size_t i = 0; i < ps.size(); ++i) {
                    auto rep = validate_pair(ps.pairs[i], v);
                    for (const auto& f : rep.failures) fmt::print("pair {}: {}\n", i, f);
                    bad += rep.ok() ? 0 : 1;
                }
                fmt::print("{} pairs, {} invalid\n", ps.size(), bad);
                if (bad) return kExitRuntime;
            } else if (p_dd->parsed()) {
                PairSet ps = load_pairs_json(pairs_in, v, false);
                PairSet out = dedup(ps, dedup_thr, v);
                fmt::print(stderr, "kept {} of {} pairs\n", out.size(), ps.size());
                write_text(pairs_out, pairs_to_json(out, v));
            }
        } else if (sae->parsed()) {
            const ModelOpts& mo = sae_model;
            ToyRewardModel model = mo.load();
            RunConfig rc = mo.run_config();
            if (s_train->parsed()) {
                PairSet ps = sae_pairs.empty() ? make_toy_data(rc).pool : load_pairs_json(sae_pairs, model.vocab);
                std::vector<int> layers;
                if (sae_layers.empty())
                    for (int l = 0; l <= model.depth; ++l) layers.push_back(l);
                else
                    layers = parse_layers(sae_layers);
                if (sae_plain) sae_cfg.unit_norm_decoder = sae_cfg.center_decoder_bias = false;
                sae_cfg.seed = SeededRng(rc.seed).split(6).next_u64();
                std::vector<SaeSummary> sums;
                SaeMap saes = train_layer_saes(model, ps, layers, sae_cfg, &sums);
                fs::create_directories(sae_dir);
                for (const auto& [l, s] : saes) save_sae(s, (fs::path(sae_dir) / fmt::format("sae_layer{}.bin", l)).string());
                fmt::print("layer,rel_mse,l0,final_loss,dead\n");
                for (const auto& s : sums) fmt::print("{},{},{},{},{}\n", s.layer, s.rel_mse, s.l0, s.final_loss, s.dead);
            } else {
                SaeMap saes = load_saes(sae_dir);
                PairSet ps = sae_pairs.empty() ? make_toy_data(rc).heldout : load_pairs_json(sae_pairs, model.vocab);
                std::cout << layer_report_csv(layer_report(model, saes, pair_sequences(ps, model.vocab)));
            }
        } else if (ident->parsed()) {
            InterventionSpec spec;
            FeatureScoreTable table;
            if (!id_manifest.empty()) {
                SaeMap enc;
                if (!id_saes.empty()) enc = load_saes(id_saes);
                spec = identify_from_dumps(id_manifest, id_k, id_eps, id_saes.empty() ? nullptr : &enc, &table);
            } else {
                if (id_saes.empty()) throw CLI::RequiredError("--saes (or --manifest)");
                ToyRewardModel model = id_model.load();
                SaeMap saes = load_saes(id_saes);
                RunConfig rc = id_model.run_config();
                PairSet ps = id_pairs.empty() ? make_toy_data(rc).probe : load_pairs_json(id_pairs, model.vocab);
                auto layers = layers_or_all(id_layers, saes);
                table = score_features(paired_diffs(ps, model, saes, layers, parse_scope(id_scope)), id_eps,
                                       layout_of(saes, layers));
                spec = select_top_k(table, id_k);
                spec.provenance.source_model = id_model.path.empty() ? fmt::format("toy/seed{}", rc.seed) : id_model.path;
                spec.provenance.seed = rc.seed;
            }
            if (spec.short_of_k)
                fmt::print(stderr, "warning: only {} features have a positive mean difference\n", spec.feature_count());
            write_text(id_out, spec_to_json(spec));
            if (!id_table.empty()) write_text(id_table, table_to_csv(table));
        } else if (steer->parsed()) {
            ToyRewardModel model = st_model.load();
            InterventionSpec spec = load_spec(st_spec);
            SaeMap saes;
            if (spec.mode == SpecMode::sae_ablate) {
                if (st_saes.empty()) throw CLI::RequiredError("--saes");
                saes = load_saes(st_saes);
            }
            PairSet ps = load_pairs_json(st_pairs, model.vocab);
            HookSet hs = make_hooks(model, spec, saes);
            TokenScorer raw(model), steered(model, &hs);
            std::string csv = "pair,raw_md,raw_pl,raw_gap,steered_md,steered_pl,steered_gap\n";
            for (std::size_t i = 0; i < ps.size(); ++i) {
                const auto& p = ps.pairs[i];
                Tokens md = concat_seq(model.vocab, p.prompt, p.answer_md), pl = concat_seq(model.vocab, p.prompt, p.answer_plain);
                double a = raw.score(md), b = raw.score(pl), c = steered.score(md), d = steered.score(pl);
                csv += fmt::format("{},{},{},{},{},{},{}\n", i, a, b, a - b, c, d, c - d);
            }
            write_text(st_out, csv);
        } else if (diag->parsed()) {
            ToyRewardModel model = dg_model.load();
            SaeMap saes = load_saes(dg_saes);
            RunConfig rc = dg_model.run_config();
            if (dg_lay->parsed()) {
                PairSet ps = dg_pairs.empty() ? make_toy_data(rc).heldout : load_pairs_json(dg_pairs, model.vocab);
                auto rep = layer_report(model, saes, pair_sequences(ps, model.vocab));
                write_text(dg_out, dg_json ? layer_report_json(rep) : layer_report_csv(rep));
            } else {
                PairSet ps = dg_pairs.empty() ? make_toy_data(rc).probe : load_pairs_json(dg_pairs, model.vocab);
                auto layers = layers_or_all(dg_layers, saes);
                auto table = score_features(paired_diffs(ps, model, saes, layers), 1e-6, layout_of(saes, layers));
                std::string csv = "layer,count\n";
                for (const auto& [l, n] : feature_layer_histogram(table, dg_top)) csv += fmt::format("{},{}\n", l, n);
                write_text(dg_out, csv);
            }
        } else if (bench->parsed()) {
            RunConfig rc = bn_model.run_config();
            rc.n_eval_triplets = bn_n;
            ToyData data = make_toy_data(rc);
            ToyRewardModel model = bn_model.path.empty() ? reference_model(rc, data) : load_model(bn_model.path);
            SaeMap saes;
            if (!bn_saes.empty()) saes = load_saes(bn_saes);
            auto need_saes = [&]() {
                if (saes.empty()) throw CLI::RequiredError("--saes");
            };
            nlohmann::ordered_json out;
            if (b_run->parsed()) {
                std::vector<Split> splits;
                std::stringstream ss(bn_splits);
                std::string s;
                while (std::getline(ss, s, ',')) {
                    if (s == "easy") splits.push_back(Split::easy);
                    else if (s == "normal") splits.push_back(Split::normal);
                    else if (s == "hard") splits.push_back(Split::hard);
                    else throw CLI::ValidationError("--splits", fmt::format("unknown split '{}'", s));
                }
                SeededRng r = SeededRng(rc.seed).split(5);
                auto trips = build_triplets(r, bn_n, {}, model.vocab, splits);
                out["baseline"] = nlohmann::ordered_json::parse(eval_result_json(evaluate(model, std::nullopt, saes, trips)));
                if (!bn_spec.empty()) {
                    InterventionSpec spec = load_spec(bn_spec);
                    if (spec.mode == SpecMode::sae_ablate) need_saes();
                    out["steered"] = nlohmann::ordered_json::parse(eval_result_json(evaluate(model, spec, saes, trips)));
                }
            } else {
                need_saes();
                auto layers = layers_or_all(bn_layers, saes);
                if (b_k->parsed()) {
                    std::vector<int> ks;
                    std::stringstream ss(bn_ks);
                    std::string s;
                    while (std::getline(ss, s, ',')) ks.push_back(std::stoi(s));
                    auto table = score_features(paired_diffs(data.probe, model, saes, layers), 1e-6, layout_of(saes, layers));
                    out["baseline"] = nlohmann::ordered_json::parse(
                        eval_result_json(evaluate(model, std::nullopt, saes, data.eval_triplets)));
                    auto rows = sweep_k(model, saes, table, data.eval_triplets, ks);
                    for (const auto& row : rows) {
                        auto j = nlohmann::ordered_json::parse(eval_result_json(row.result));
                        j["spread"] = row.result.spread();
                        out["sweep"].push_back({{"k", row.k}, {"result", j}});
                    }
                } else if (b_n->parsed()) {
                    std::vector<std::size_t> ns;
                    std::stringstream ss(bn_ns);
                    std::string s;
                    while (std::getline(ss, s, ',')) ns.push_back(static_cast<std::size_t>(std::stoul(s)));
                    auto rows = sweep_probe_size(model, saes, data.pool, data.eval_triplets, layers, ns, bn_k);
                    for (const auto& row : rows)
                        out["sweep"].push_back({{"n", row.n},
                                                {"overlap", row.overlap},
                                                {"result", nlohmann::ordered_json::parse(eval_result_json(row.result))}});
                } else {
                    ToyRewardModel target = transfer_target(model, rc, 1.5, bn_alpha_b);
                    auto tr = transfer_eval(model, target, saes, data.probe, data.eval_triplets, layers, bn_k);
                    out["target_alpha"] = target.alpha;
                    out["spec"] = nlohmann::ordered_json::parse(spec_to_json(tr.spec));
                    out["baseline"] = nlohmann::ordered_json::parse(eval_result_json(tr.baseline));
                    out["transferred"] = nlohmann::ordered_json::parse(eval_result_json(tr.transferred));
                }
            }
            write_text(bn_out, out.dump(2) + "\n");
        } else if (pipe->parsed()) {
            if (p_alpha_opt->count() > 0) pcfg.alpha = p_alpha;
            if (!p_layers.empty()) pcfg.layers = parse_layers(p_layers);
            pcfg.scope = parse_scope(p_scope);
            pcfg.suppression = !p_no_supp;
            PipelineResult r = run_pipeline(pcfg);
            write_pipeline_outputs(r, p_out, p_plot);
            std::string layer_list;
            for (int l : r.used_layers) layer_list += (layer_list.empty() ? "" : ",") + std::to_string(l);
            fmt::print("alpha {}  layers {}  features {}\n", r.model.alpha, layer_list, r.spec.feature_count());
            fmt::print("baseline  easy {:.3f} normal {:.3f} hard {:.3f}\n", r.baseline.acc(Split::easy),
                       r.baseline.acc(Split::normal), r.baseline.acc(Split::hard));
            fmt::print("steered   easy {:.3f} normal {:.3f} hard {:.3f}\n", r.steered.acc(Split::easy),
                       r.steered.acc(Split::normal), r.steered.acc(Split::hard));
            fmt::print("mean |gap| {:.4f} -> {:.4f}\n", r.gap_baseline, r.gap_steered);
            fmt::print("report written to {}\n", (fs::path(p_out) / "report.json").string());
        }
    } catch (const CLI::Error& e) {
        fmt::print(stderr, "usage error: {}\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kExitRuntime;
    }
    return kExitOk;
}

int dispatch(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(args);
}

} // namespace steerkt
