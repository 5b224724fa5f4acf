#pragma once

#include <string>
#include <vector>

#include "ces/training.hpp"

namespace ces {

// Pooled embeddings of a frozen model over one split, id-keyed.
struct EmbeddingDump {
    std::vector<int> ids;
    int d = 0;
    std::vector<double> rows; // n x d, row i belongs to ids[i]
    uint64_t checkpoint_hash = 0;

    int n() const { return static_cast<int>(ids.size()); }
    std::vector<double> row(int i) const;
};

EmbeddingDump extract_embeddings(const EncoderStack& stack,
                                 const std::vector<EnrichedSample>& samples, TextInput input,
                                 const Vocab& vocab, int batch_size = 64);

// "CESE" + n, d, checkpoint hash + id list + little-endian doubles.
void save_embeddings(const EmbeddingDump& dump, const std::string& path);
EmbeddingDump load_embeddings(const std::string& path);

// Two-layer MLP over the concatenated embeddings of two frozen models.
struct FusionMLP {
    int d_in = 0;
    int hidden = 0;
    std::vector<std::pair<std::string, Tensor>> params; // w1, b1, w2, b2

    static FusionMLP init(int d_in, int hidden, uint64_t seed);
};

// labels[i] belongs to dump_a.ids[i]. Both dumps must carry exactly the same
// id set; dump_b rows are aligned to dump_a's order by id.
FusionMLP train_fusion(const EmbeddingDump& dump_a, const EmbeddingDump& dump_b,
                       const std::vector<int>& labels, const TrainConfig& cfg);

// Sigmoid probabilities in dump_a id order.
std::vector<double> fuse_predict(const FusionMLP& mlp, const EmbeddingDump& dump_a,
                                 const EmbeddingDump& dump_b);

} // namespace ces
