#include "ces/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

namespace ces {

namespace {
const char* kSpecialNames[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
}

Vocab::Vocab() {
    for (const char* s : kSpecialNames) {
        map_.emplace(s, static_cast<int>(tokens_.size()));
        tokens_.emplace_back(s);
    }
}

int Vocab::add(const std::string& token) {
    auto it = map_.find(token);
    if (it != map_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    map_.emplace(token, id);
    tokens_.push_back(token);
    return id;
}

int Vocab::id(const std::string& token) const {
    auto it = map_.find(token);
    return it == map_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size())
        throw Error("vocab: id " + std::to_string(id) + " outside [0," + std::to_string(size()) + ")");
    return tokens_[static_cast<size_t>(id)];
}

void Vocab::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw Error("vocab: cannot write " + path);
    for (const auto& t : tokens_) f << t << '\n';
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("vocab: cannot read " + path);
    Vocab v;
    std::string line;
    int ln = 0;
    while (std::getline(f, line)) {
        if (ln < kNumSpecials) {
            if (line != kSpecialNames[ln])
                throw Error("vocab: line " + std::to_string(ln) + " is not the expected special token");
        } else {
            v.add(line);
        }
        ln++;
    }
    if (ln < kNumSpecials) throw Error("vocab: file too short: " + path);
    return v;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const unsigned char u = static_cast<unsigned char>(ch);
        if (std::isalnum(u) || ch == '_' || ch == '\'') {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string normalize(const std::string& text) {
    std::string out;
    for (const auto& t : tokenize(text)) {
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    return out;
}

Vocab build_vocab(const std::vector<std::string>& corpus, int min_count) {
    if (corpus.empty()) throw Error("build_vocab: empty corpus");
    std::map<std::string, int64_t> counts;
    for (const auto& line : corpus)
        for (const auto& t : tokenize(line)) counts[t]++;
    std::vector<std::pair<std::string, int64_t>> kept;
    for (const auto& [tok, cnt] : counts)
        if (cnt >= min_count) kept.emplace_back(tok, cnt);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocab v;
    for (const auto& [tok, cnt] : kept) v.add(tok);
    return v;
}

TokenSequence encode_pair(const std::string& c, const std::optional<std::string>& c_star,
                          const Vocab& vocab, int max_len) {
    if (max_len < 5) throw Error("encode_pair: max_len must be at least 5");
    std::vector<std::string> a = tokenize(c);
    std::vector<std::string> b = c_star ? tokenize(*c_star) : std::vector<std::string>{};
    const bool pair = c_star.has_value();
    const int overhead = pair ? 3 : 2; // [CLS] and one [SEP] per segment
    // Over length: shrink the longer segment token by token until it fits.
    while (static_cast<int>(a.size() + b.size()) + overhead > max_len) {
        if (a.size() >= b.size())
            a.pop_back();
        else
            b.pop_back();
    }
    TokenSequence seq;
    seq.ids.reserve(static_cast<size_t>(max_len));
    auto push = [&](int id, int segment, uint8_t mask) {
        seq.ids.push_back(id);
        seq.segments.push_back(segment);
        seq.attn_mask.push_back(mask);
    };
    push(Vocab::kCls, 0, 1);
    for (const auto& t : a) push(vocab.id(t), 0, 1);
    push(Vocab::kSep, 0, 1);
    if (pair) {
        for (const auto& t : b) push(vocab.id(t), 1, 1);
        push(Vocab::kSep, 1, 1);
    }
    while (seq.length() < max_len) push(Vocab::kPad, 0, 0);
    return seq;
}

std::string decode(const std::vector<int>& ids, const Vocab& vocab) {
    std::string out;
    for (int id : ids) {
        vocab.token(id); // range check
        if (vocab.is_special(id)) continue;
        if (!out.empty()) out.push_back(' ');
        out += vocab.token(id);
    }
    return out;
}

MaskedBatch apply_mlm_mask(const TokenSequence& seq, const Vocab& vocab, uint64_t seed,
                           const MaskRates& rates) {
    if (rates.select < 0.0 || rates.select > 1.0 ||
        std::abs(rates.mask + rates.random + rates.keep - 1.0) > 1e-12)
        throw Error("apply_mlm_mask: mask+random+keep must sum to 1 and select must be in [0,1]");
    const int content = vocab.size() - Vocab::kNumSpecials;
    MaskedBatch out;
    out.seed = seed;
    out.corrupted = seq.ids;
    out.mlm_labels.assign(seq.ids.size(), kIgnoreLabel);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (size_t i = 0; i < seq.ids.size(); i++) {
        const int id = seq.ids[i];
        if (vocab.is_special(id) || !seq.attn_mask[i]) continue;
        if (u(rng) >= rates.select) continue;
        out.mlm_labels[i] = id;
        const double r = u(rng);
        if (r < rates.mask) {
            out.corrupted[i] = Vocab::kMask;
        } else if (r < rates.mask + rates.random && content > 0) {
            std::uniform_int_distribution<int> pick(0, content - 1);
            out.corrupted[i] = Vocab::kNumSpecials + pick(rng);
        } // else keep
    }
    return out;
}

} // namespace ces
