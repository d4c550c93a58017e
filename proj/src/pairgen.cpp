#include "steerkt/pairgen.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <fmt/core.h>
#include <json.hpp>

namespace steerkt {

void PairConfig::validate(const TokenVocab& v) const {
    auto range_ok = [](int lo, int hi) { return lo >= 0 && lo <= hi; };
    if (!range_ok(prompt_min, prompt_max) || !range_ok(answer_min, answer_max) || !range_ok(good_min, good_max) ||
        !range_ok(markup_min, markup_max))
        throw std::invalid_argument("pair config: ranges must satisfy 0 <= min <= max");
    if (good_max > answer_min)
        throw std::invalid_argument(
            fmt::format("pair config: up to {} GOOD tokens do not fit in answers of length {}", good_max, answer_min));
    if (prompt_min < 1) throw std::invalid_argument("pair config: prompts need at least one token");
    if (!(dedup_threshold > 0.0 && dedup_threshold <= 1.0))
        throw std::invalid_argument("pair config: dedup threshold must lie in (0, 1]");
    if (v.filler_count() < 1) throw std::invalid_argument("pair config: vocabulary has no filler ids");
}

Tokens sample_content(SeededRng& rng, const TokenVocab& v, int length, int n_good) {
    if (n_good > length || n_good < 0) throw std::invalid_argument("sample_content: bad GOOD count");
    Tokens toks;
    for (int i = 0; i < length - n_good; ++i)
        toks.push_back(v.first_filler + static_cast<Token>(rng.below(static_cast<std::uint64_t>(v.filler_count()))));
    for (int i = 0; i < n_good; ++i) {
        auto pos = rng.below(toks.size() + 1);
        toks.insert(toks.begin() + static_cast<long>(pos), v.good);
    }
    return toks;
}

Tokens insert_markup(SeededRng& rng, const TokenVocab& v, const Tokens& resp, int k) {
    Tokens out = resp;
    for (int i = 0; i < k; ++i) {
        auto pos = rng.below(out.size() + 1);
        Token mk = v.markup[rng.below(v.markup.size())];
        out.insert(out.begin() + static_cast<long>(pos), mk);
    }
    return out;
}

Tokens strip_markup(const TokenVocab& v, const Tokens& toks) {
    Tokens out;
    for (Token t : toks)
        if (!v.is_markup(t)) out.push_back(t);
    return out;
}

Vec bag_of_tokens(const Tokens& toks, const TokenVocab& vocab) {
    Vec bag(static_cast<std::size_t>(vocab.size), 0.0);
    for (Token t : toks) {
        if (t < 0 || t >= vocab.size) throw std::invalid_argument(fmt::format("token id {} out of vocabulary", t));
        bag[static_cast<std::size_t>(t)] += 1.0;
    }
    return bag;
}

namespace {

// cosine with the empty-prompt convention: two empty bags are identical
double bag_cosine(const Vec& a, const Vec& b) {
    double na = norm(a), nb = norm(b);
    if (na == 0.0 && nb == 0.0) return 1.0;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return cosine(a, b);
}

struct Deduper {
    double threshold;
    std::vector<Vec> kept;
    bool admit(const Vec& bag) {
        for (const auto& k : kept)
            if (bag_cosine(bag, k) >= threshold) return false;
        kept.push_back(bag);
        return true;
    }
};

} // namespace

PairSet synth_pairs(SeededRng& rng, std::size_t n, const PairConfig& cfg, const TokenVocab& vocab) {
    if (n < 1) throw std::invalid_argument("synth_pairs: n must be >= 1");
    cfg.validate(vocab);
    PairSet ps;
    Deduper dd{cfg.dedup_threshold, {}};
    std::size_t attempts = 0;
    while (ps.pairs.size() < n) {
        if (++attempts > 100 * n + 1000)
            throw std::runtime_error("synth_pairs: could not draw enough distinct prompts; widen the config");
        PairedExample p;
        int plen = static_cast<int>(rng.range(cfg.prompt_min, cfg.prompt_max));
        p.prompt = sample_content(rng, vocab, plen, 0);
        int alen = static_cast<int>(rng.range(cfg.answer_min, cfg.answer_max));
        int ng = static_cast<int>(rng.range(cfg.good_min, cfg.good_max));
        p.answer_plain = sample_content(rng, vocab, alen, ng);
        int k = static_cast<int>(rng.range(cfg.markup_min, cfg.markup_max));
        p.answer_md = insert_markup(rng, vocab, p.answer_plain, k);
        if (!dd.admit(bag_of_tokens(p.prompt, vocab))) continue;
        p.domain = kDomainBuckets[ps.pairs.size() % 4];
        p.meta = PairText{render_tokens(p.prompt, vocab), render_tokens(p.answer_md, vocab),
                          render_tokens(p.answer_plain, vocab)};
        ps.pairs.push_back(std::move(p));
    }
    return ps;
}

ValidationReport validate_pair(const PairedExample& p, const TokenVocab& vocab, bool allow_zero_markup) {
    ValidationReport r;
    bool any_md = std::any_of(p.answer_md.begin(), p.answer_md.end(), [&](Token t) { return vocab.is_markup(t); });
    if (!any_md && !allow_zero_markup) {
        r.has_markup = false;
        r.failures.push_back("answer_markdown contains no markup token");
    }
    if (std::any_of(p.answer_plain.begin(), p.answer_plain.end(), [&](Token t) { return vocab.is_markup(t); })) {
        r.plain_clean = false;
        r.failures.push_back("answer_plain contains a markup token");
    }
    if (strip_markup(vocab, p.answer_md) != strip_markup(vocab, p.answer_plain)) {
        r.stripped_equal = false;
        r.failures.push_back("answer_markdown without markup differs from answer_plain");
    }
    return r;
}

PairSet dedup(const PairSet& ps, double threshold, const TokenVocab& vocab) {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw std::invalid_argument("dedup: threshold must lie in (0, 1]");
    PairSet out;
    Deduper dd{threshold, {}};
    for (const auto& p : ps.pairs)
        if (dd.admit(bag_of_tokens(p.prompt, vocab))) out.pairs.push_back(p);
    return out;
}

// ---- text mode -------------------------------------------------------------

namespace {

constexpr const char* kMarkupText[5] = {"**", "##", "-", "```", "_"};
constexpr const char* kSyllables[8] = {"ka", "lo", "mi", "nu", "pe", "ri", "so", "tu"};

std::string lexicon_word(int i) {
    std::string w;
    int n = i;
    for (int s = 0; s < 2 || n > 0; ++s) {
        w += kSyllables[n % 8];
        n /= 8;
    }
    return w;
}

const std::map<std::string, int>& lexicon_index(const TokenVocab& v) {
    static thread_local std::map<int, std::map<std::string, int>> cache;
    auto it = cache.find(v.filler_count());
    if (it == cache.end()) {
        std::map<std::string, int> idx;
        for (int i = 0; i < v.filler_count(); ++i) idx.emplace(lexicon_word(i), i);
        it = cache.emplace(v.filler_count(), std::move(idx)).first;
    }
    return it->second;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

bool word_char(unsigned char c) { return std::isalnum(c) || c == '\'' || c >= 0x80; }

Token word_token(const std::string& raw, const TokenVocab& v) {
    std::string w;
    for (unsigned char c : raw) w += static_cast<char>(std::tolower(c));
    if (w == "good") return v.good;
    const auto& idx = lexicon_index(v);
    if (auto it = idx.find(w); it != idx.end()) return v.first_filler + it->second;
    return v.first_filler + static_cast<Token>(fnv1a(w) % static_cast<std::uint64_t>(v.filler_count()));
}

} // namespace

Tokens tokenize_text(const std::string& text, const TokenVocab& vocab) {
    Tokens out;
    std::size_t i = 0, n = text.size();
    auto starts = [&](const char* s) { return text.compare(i, std::char_traits<char>::length(s), s) == 0; };
    while (i < n) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c)) {
            ++i;
        } else if (starts("```")) {
            out.push_back(vocab.markup[3]);
            i += 3;
        } else if (starts("**")) {
            out.push_back(vocab.markup[0]);
            i += 2;
        } else if (starts("##")) {
            out.push_back(vocab.markup[1]);
            while (i < n && text[i] != '\n') ++i; // heading text is structure, not content
        } else if (c == '-') {
            out.push_back(vocab.markup[2]);
            ++i;
        } else if (c == '_') {
            out.push_back(vocab.markup[4]);
            ++i;
        } else if (word_char(c)) {
            std::size_t j = i;
            while (j < n && word_char(static_cast<unsigned char>(text[j]))) ++j;
            out.push_back(word_token(text.substr(i, j - i), vocab));
            i = j;
        } else {
            out.push_back(word_token(std::string(1, static_cast<char>(c)), vocab));
            ++i;
        }
    }
    return out;
}

std::string render_tokens(const Tokens& toks, const TokenVocab& vocab) {
    std::string s;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        Token t = toks[i];
        if (i > 0 && s.back() != '\n') s += ' ';
        auto mk = std::find(vocab.markup.begin(), vocab.markup.end(), t);
        if (mk != vocab.markup.end()) {
            auto k = static_cast<std::size_t>(mk - vocab.markup.begin());
            s += kMarkupText[k];
            if (k == 1) s += '\n';
        } else if (t == vocab.good) {
            s += "good";
        } else if (t >= vocab.first_filler && t < vocab.size) {
            s += lexicon_word(t - vocab.first_filler);
        } else {
            throw std::invalid_argument(fmt::format("render_tokens: token {} has no text form", t));
        }
    }
    return s;
}

PairedExample pair_from_text(const PairText& t, const TokenVocab& vocab) {
    PairedExample p;
    p.prompt = tokenize_text(t.prompt, vocab);
    p.answer_md = tokenize_text(t.answer_markdown, vocab);
    p.answer_plain = tokenize_text(t.answer_plain, vocab);
    p.meta = t;
    return p;
}

std::string pairs_to_json(const PairSet& ps, const TokenVocab& vocab) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& p : ps.pairs) {
        PairText t = p.meta ? *p.meta
                            : PairText{render_tokens(p.prompt, vocab), render_tokens(p.answer_md, vocab),
                                       render_tokens(p.answer_plain, vocab)};
        arr.push_back({{"prompt", t.prompt},
                       {"answer_markdown", t.answer_markdown},
                       {"answer_plain", t.answer_plain},
                       {"domain", p.domain}});
    }
    return arr.dump(2) + "\n";
}

void save_pairs_json(const PairSet& ps, const std::string& path, const TokenVocab& vocab) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path));
    out << pairs_to_json(ps, vocab);
    if (!out) throw std::runtime_error(fmt::format("write failed: {}", path));
}

PairSet pairs_from_json(const std::string& text, const TokenVocab& vocab, bool strict) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(fmt::format("malformed pair JSON: {}", e.what()));
    }
    if (j.is_object()) j = nlohmann::json::array({j});
    if (!j.is_array()) throw std::runtime_error("pair JSON must be an array of objects");
    PairSet ps;
    std::size_t i = 0;
    for (const auto& e : j) {
        if (!e.is_object()) throw std::runtime_error(fmt::format("pair {}: not an object", i));
        for (const char* f : {"prompt", "answer_markdown", "answer_plain"})
            if (!e.contains(f) || !e[f].is_string())
                throw std::runtime_error(fmt::format("pair {}: schema error, missing string field '{}'", i, f));
        PairText t{e["prompt"].get<std::string>(), e["answer_markdown"].get<std::string>(),
                   e["answer_plain"].get<std::string>()};
        PairedExample p = pair_from_text(t, vocab);
        if (e.contains("domain") && e["domain"].is_string()) p.domain = e["domain"].get<std::string>();
        if (strict) {
            auto rep = validate_pair(p, vocab);
            if (!rep.ok()) throw std::runtime_error(fmt::format("pair {}: validation failed: {}", i, rep.failures.front()));
        }
        ps.pairs.push_back(std::move(p));
        ++i;
    }
    return ps;
}

PairSet load_pairs_json(const std::string& path, const TokenVocab& vocab, bool strict) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open {}", path));
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return pairs_from_json(ss.str(), vocab, strict);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(fmt::format("{}: {}", path, e.what()));
    }
}

} // namespace steerkt
