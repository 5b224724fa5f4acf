#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ces/common.hpp"
#include "ces/tensor.hpp" // kIgnoreLabel

namespace ces {

// Word-level vocabulary. The five special tokens occupy ids 0..4.
class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;
    static constexpr int kSep = 3;
    static constexpr int kMask = 4;
    static constexpr int kNumSpecials = 5;

    Vocab();

    int add(const std::string& token); // no-op if present, returns id
    int id(const std::string& token) const; // kUnk when missing
    const std::string& token(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }
    bool is_special(int id) const { return id >= 0 && id < kNumSpecials; }

    void save(const std::string& path) const; // one token per line, line = id
    static Vocab load(const std::string& path);

private:
    std::unordered_map<std::string, int> map_;
    std::vector<std::string> tokens_;
};

// Lowercased whitespace-and-punctuation tokenization.
std::vector<std::string> tokenize(const std::string& text);
std::string normalize(const std::string& text);

// Tokens with count >= min_count, ids assigned by (count desc, token asc).
Vocab build_vocab(const std::vector<std::string>& corpus, int min_count = 1);

// Packed [CLS] c [SEP] c* [SEP] pad... with segment and attention masks.
struct TokenSequence {
    std::vector<int> ids;
    std::vector<int> segments;  // 0 through the first [SEP], 1 after
    std::vector<uint8_t> attn_mask; // 1 on non-pad positions
    int length() const { return static_cast<int>(ids.size()); }
};

TokenSequence encode_pair(const std::string& c, const std::optional<std::string>& c_star,
                          const Vocab& vocab, int max_len);

std::string decode(const std::vector<int>& ids, const Vocab& vocab);

struct MaskRates {
    double select = 0.15;
    double mask = 0.8;
    double random = 0.1;
    double keep = 0.1;
};

struct MaskedBatch {
    std::vector<int> corrupted; // ids with masking applied
    std::vector<int> mlm_labels; // original id at selected positions, kIgnoreLabel elsewhere
    uint64_t seed = 0;
};

MaskedBatch apply_mlm_mask(const TokenSequence& seq, const Vocab& vocab, uint64_t seed,
                           const MaskRates& rates = {});

} // namespace ces
