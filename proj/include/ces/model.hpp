#pragma once

#include <string>
#include <vector>

#include "ces/tensor.hpp"
#include "ces/text.hpp"

namespace ces {

enum class Arch { unimodal, single_stream, two_stream };
enum class Pooling { cls, product };

std::string arch_name(Arch a);
Arch arch_from_name(const std::string& s);
std::string pooling_name(Pooling p);
Pooling pooling_from_name(const std::string& s);

struct EncoderConfig {
    int layers = 2;
    int hidden = 64;
    int heads = 4;
    int ffn = 128;
    int vocab = 0;
    int max_len = 48;
    int max_regions = 4;
    int region_dim = 16;
    double dropout = 0.1;
    Arch arch = Arch::unimodal;
    Pooling pooling = Pooling::cls;

    void validate() const;
    std::string to_json() const;
    static EncoderConfig from_json(const std::string& s);
    bool operator==(const EncoderConfig&) const = default;
};

// Backbone plus both heads. Parameters live in a fixed-order named list so
// the optimizer, checkpoints and checksums all see one canonical layout.
struct EncoderStack {
    EncoderConfig cfg;
    std::vector<std::pair<std::string, Tensor>> params;

    Tensor param(const std::string& name) const;
    bool has_param(const std::string& name) const;
    int64_t param_count() const;
    void zero_grads();
    uint64_t checksum() const; // over parameter values
    uint64_t checksum(const std::vector<std::string>& prefixes) const;

    static EncoderStack init(const EncoderConfig& cfg, uint64_t seed);
};

// A minibatch of token sequences flattened row-wise for the attention op.
// Sequences are trimmed to the longest non-pad length in the batch; pad
// positions never influence outputs, so the trim is exact.
struct PackedBatch {
    std::vector<int> ids;
    std::vector<int> segments;
    std::vector<int> positions;
    std::vector<uint8_t> valid;
    std::vector<int> offsets; // row of [CLS] per sequence
    std::vector<int> lengths;
    std::vector<AttnSpan> spans;
    int total = 0;

    int size() const { return static_cast<int>(offsets.size()); }
    static PackedBatch pack(const std::vector<TokenSequence>& seqs, int max_len);
};

// Per-sample region features for the multimodal paths; empty tensors are not
// allowed, use k=0 rows instead.
struct RegionBatch {
    std::vector<Tensor> regions; // each k_i x region_dim
};

struct EncodeOut {
    Tensor seq;  // unimodal/single_stream: all hidden rows
    Tensor img;  // two_stream image stream rows
    Tensor txt;  // two_stream text stream rows
    std::vector<int> cls_rows;       // text [CLS] row per sample (in seq or txt)
    std::vector<int> img_first_rows; // two_stream image stream first row per sample
};

// Dropout is active iff a non-null rng is supplied.
EncodeOut encode_text(Graph& g, const EncoderStack& stack, const PackedBatch& batch,
                      std::mt19937_64* drop_rng = nullptr);
Tensor mlm_logits(Graph& g, const EncoderStack& stack, const Tensor& hidden);
Tensor classify_unimodal(Graph& g, const EncoderStack& stack, const PackedBatch& batch,
                         std::mt19937_64* drop_rng = nullptr);

EncodeOut encode_single_stream(Graph& g, const EncoderStack& stack, const RegionBatch& regions,
                               const PackedBatch& batch, std::mt19937_64* drop_rng = nullptr);
EncodeOut encode_two_stream(Graph& g, const EncoderStack& stack, const RegionBatch& regions,
                            const PackedBatch& batch, std::mt19937_64* drop_rng = nullptr);

Tensor pool(Graph& g, const EncoderStack& stack, const EncodeOut& out);
Tensor classify_multimodal(Graph& g, const EncoderStack& stack, const Tensor& pooled);

// One logit per sample through the architecture-appropriate path.
Tensor classify(Graph& g, const EncoderStack& stack, const RegionBatch& regions,
                const PackedBatch& batch, std::mt19937_64* drop_rng = nullptr);

// Checkpoint: "CESM" + config JSON + flat little-endian doubles + checksum.
void save_checkpoint(const EncoderStack& stack, const std::string& path);
EncoderStack load_checkpoint(const std::string& path);
// Copies every parameter outside the given prefixes from src into dst.
void load_backbone(EncoderStack& dst, const EncoderStack& src,
                   const std::vector<std::string>& fresh_prefixes);

} // namespace ces
