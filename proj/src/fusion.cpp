#include "ces/fusion.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace ces {

std::vector<double> EmbeddingDump::row(int i) const {
    const size_t off = static_cast<size_t>(i) * static_cast<size_t>(d);
    return std::vector<double>(rows.begin() + static_cast<long>(off),
                               rows.begin() + static_cast<long>(off + static_cast<size_t>(d)));
}

EmbeddingDump extract_embeddings(const EncoderStack& stack,
                                 const std::vector<EnrichedSample>& samples, TextInput input,
                                 const Vocab& vocab, int batch_size) {
    EmbeddingDump dump;
    dump.d = stack.cfg.hidden;
    dump.checkpoint_hash = stack.checksum();
    for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(samples.size(), start + static_cast<size_t>(batch_size));
        std::vector<TokenSequence> seqs;
        RegionBatch regions;
        for (size_t i = start; i < end; i++) {
            dump.ids.push_back(samples[i].sample.id);
            seqs.push_back(encode_input(samples[i], input, vocab, stack.cfg.max_len));
            const MemeSample& m = samples[i].sample;
            regions.regions.push_back(m.regions.empty() ? Tensor()
                                                        : Tensor::from({m.k, m.d}, m.regions));
        }
        PackedBatch batch = PackedBatch::pack(seqs, stack.cfg.max_len);
        Graph g(false, false);
        EncodeOut out;
        switch (stack.cfg.arch) {
            case Arch::unimodal: out = encode_text(g, stack, batch); break;
            case Arch::single_stream:
                out = encode_single_stream(g, stack, regions, batch);
                break;
            case Arch::two_stream: out = encode_two_stream(g, stack, regions, batch); break;
        }
        Tensor pooled = pool(g, stack, out);
        dump.rows.insert(dump.rows.end(), pooled.data().begin(), pooled.data().end());
    }
    return dump;
}

void save_embeddings(const EmbeddingDump& dump, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write embedding dump: " + path);
    f.write("CESE", 4);
    const uint64_t n = static_cast<uint64_t>(dump.n());
    const uint64_t d = static_cast<uint64_t>(dump.d);
    f.write(reinterpret_cast<const char*>(&n), 8);
    f.write(reinterpret_cast<const char*>(&d), 8);
    f.write(reinterpret_cast<const char*>(&dump.checkpoint_hash), 8);
    for (int id : dump.ids) {
        const int64_t v = id;
        f.write(reinterpret_cast<const char*>(&v), 8);
    }
    f.write(reinterpret_cast<const char*>(dump.rows.data()),
            static_cast<std::streamsize>(dump.rows.size() * sizeof(double)));
    if (!f) throw Error("short write on embedding dump: " + path);
}

EmbeddingDump load_embeddings(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read embedding dump: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::string(magic, 4) != "CESE") throw Error("bad embedding dump magic in " + path);
    uint64_t n = 0, d = 0;
    EmbeddingDump dump;
    f.read(reinterpret_cast<char*>(&n), 8);
    f.read(reinterpret_cast<char*>(&d), 8);
    f.read(reinterpret_cast<char*>(&dump.checkpoint_hash), 8);
    dump.d = static_cast<int>(d);
    for (uint64_t i = 0; i < n; i++) {
        int64_t v = 0;
        f.read(reinterpret_cast<char*>(&v), 8);
        dump.ids.push_back(static_cast<int>(v));
    }
    dump.rows.resize(n * d);
    f.read(reinterpret_cast<char*>(dump.rows.data()),
           static_cast<std::streamsize>(dump.rows.size() * sizeof(double)));
    if (!f) throw Error("truncated embedding dump: " + path);
    return dump;
}

FusionMLP FusionMLP::init(int d_in, int hidden, uint64_t seed) {
    if (d_in < 1 || hidden < 1) throw Error("fusion MLP dims must be positive");
    FusionMLP mlp;
    mlp.d_in = d_in;
    mlp.hidden = hidden;
    auto make = [&](const std::string& name, std::vector<int> shape, bool random) {
        Tensor t = Tensor::zeros(shape, true);
        if (random) {
            auto rng = make_rng(seed, "fusion_init", fnv1a(name));
            std::normal_distribution<double> g(0.0, 0.02);
            for (auto& x : t.data()) x = g(rng);
        }
        mlp.params.emplace_back(name, t);
    };
    make("fusion.w1", {d_in, hidden}, true);
    make("fusion.b1", {hidden}, false);
    make("fusion.w2", {hidden, 1}, true);
    make("fusion.b2", {1}, false);
    return mlp;
}

namespace {

// dump_b row index per dump_a row, id-keyed; hard error on any mismatch.
std::vector<int> align(const EmbeddingDump& a, const EmbeddingDump& b) {
    std::unordered_map<int, int> where;
    for (int i = 0; i < b.n(); i++) where[b.ids[static_cast<size_t>(i)]] = i;
    std::set<int> sa(a.ids.begin(), a.ids.end());
    std::set<int> sb(b.ids.begin(), b.ids.end());
    if (sa != sb) {
        std::vector<int> diff;
        std::set_symmetric_difference(sa.begin(), sa.end(), sb.begin(), sb.end(),
                                      std::back_inserter(diff));
        std::ostringstream msg;
        msg << "embedding dumps disagree on ids; symmetric difference:";
        for (size_t i = 0; i < diff.size() && i < 20; i++) msg << " " << diff[i];
        if (diff.size() > 20) msg << " ... (" << diff.size() << " total)";
        throw Error(msg.str());
    }
    std::vector<int> idx;
    for (int id : a.ids) idx.push_back(where.at(id));
    return idx;
}

Tensor concat_features(const EmbeddingDump& a, const EmbeddingDump& b,
                       const std::vector<int>& b_idx) {
    const int d = a.d + b.d;
    Tensor x = Tensor::zeros({a.n(), d});
    for (int i = 0; i < a.n(); i++) {
        for (int j = 0; j < a.d; j++)
            x.data()[static_cast<size_t>(i * d + j)] =
                a.rows[static_cast<size_t>(i) * static_cast<size_t>(a.d) + static_cast<size_t>(j)];
        const size_t boff =
            static_cast<size_t>(b_idx[static_cast<size_t>(i)]) * static_cast<size_t>(b.d);
        for (int j = 0; j < b.d; j++)
            x.data()[static_cast<size_t>(i * d + a.d + j)] = b.rows[boff + static_cast<size_t>(j)];
    }
    return x;
}

Tensor mlp_logits(Graph& g, const FusionMLP& mlp, const Tensor& x) {
    Tensor h = g.gelu(g.add_bias(g.matmul(x, mlp.params[0].second), mlp.params[1].second));
    return g.add_bias(g.matmul(h, mlp.params[2].second), mlp.params[3].second);
}

} // namespace

FusionMLP train_fusion(const EmbeddingDump& dump_a, const EmbeddingDump& dump_b,
                       const std::vector<int>& labels, const TrainConfig& cfg) {
    cfg.validate();
    if (static_cast<size_t>(dump_a.n()) != labels.size())
        throw Error("fusion label count does not match dump size");
    const auto b_idx = align(dump_a, dump_b);
    const Tensor x = concat_features(dump_a, dump_b, b_idx);
    const int d_in = dump_a.d + dump_b.d;
    FusionMLP mlp = FusionMLP::init(d_in, d_in, cfg.seed);

    std::vector<double> y(labels.begin(), labels.end());
    std::vector<size_t> order(static_cast<size_t>(dump_a.n()));
    for (size_t i = 0; i < order.size(); i++) order[i] = i;
    size_t pos = order.size();
    int epoch = 0;
    AdamState state;
    for (int step = 1; step <= cfg.total_updates; step++) {
        std::vector<int> idx;
        std::vector<double> yb;
        for (int i = 0; i < cfg.batch_size; i++) {
            if (pos == order.size()) {
                auto rng = make_rng(cfg.seed, "fusion_shuffle", static_cast<uint64_t>(epoch++));
                std::shuffle(order.begin(), order.end(), rng);
                pos = 0;
            }
            idx.push_back(static_cast<int>(order[pos]));
            yb.push_back(y[order[pos]]);
            pos++;
        }
        Graph g(true, false);
        Tensor xb = g.gather_rows(x, idx);
        Tensor loss = g.bce_with_logits(mlp_logits(g, mlp, xb), yb);
        for (auto& [n, t] : mlp.params)
            if (t.has_grad()) t.zero_grad();
        g.backward(loss);
        adam_step(mlp.params, state, step, lr_schedule(step, cfg), cfg);
    }
    return mlp;
}

std::vector<double> fuse_predict(const FusionMLP& mlp, const EmbeddingDump& dump_a,
                                 const EmbeddingDump& dump_b) {
    if (dump_a.d + dump_b.d != mlp.d_in)
        throw Error("embedding dims do not match the fusion MLP input");
    const auto b_idx = align(dump_a, dump_b);
    const Tensor x = concat_features(dump_a, dump_b, b_idx);
    Graph g(false, false);
    Tensor logits = mlp_logits(g, mlp, x);
    std::vector<double> scores;
    for (double z : logits.data()) scores.push_back(1.0 / (1.0 + std::exp(-z)));
    return scores;
}

} // namespace ces
