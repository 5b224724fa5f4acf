#include "ces/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "ces/kernels.hpp"

namespace ces {

namespace {

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int s : shape) n *= s;
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); i++) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

} // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    Tensor t;
    t.p_ = std::make_shared<Data>();
    t.p_->shape = std::move(shape);
    t.p_->data.assign(static_cast<size_t>(shape_numel(t.p_->shape)), 0.0);
    t.p_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw Error("tensor: shape " + shape_str(shape) + " does not match data length " +
                    std::to_string(data.size()));
    Tensor t;
    t.p_ = std::make_shared<Data>();
    t.p_->shape = std::move(shape);
    t.p_->data = std::move(data);
    t.p_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from({1}, {v}, requires_grad);
}

double Tensor::item() const {
    if (numel() != 1) throw Error("item() on non-scalar tensor " + shape_str(shape()));
    return p_->data[0];
}

std::vector<double>& Tensor::grad() {
    if (p_->grad.empty()) p_->grad.assign(p_->data.size(), 0.0);
    return p_->grad;
}

const std::vector<double>& Tensor::grad() const {
    if (p_->grad.empty())
        throw Error("grad() on tensor with no gradient buffer");
    return p_->grad;
}

void Tensor::zero_grad() {
    std::fill(p_->grad.begin(), p_->grad.end(), 0.0);
}

void Graph::check(const Tensor& t, const char* op) const {
    if (!check_finite_) return;
    for (size_t i = 0; i < t.data().size(); i++)
        if (!std::isfinite(t.data()[i]))
            throw Error(std::string("non-finite value produced by op '") + op +
                        "' at index " + std::to_string(i));
}

Tensor Graph::record(Tensor out, const std::vector<Tensor>& inputs,
                     std::function<void()> back, const char* op) {
    check(out, op);
    bool needs = false;
    if (grad_enabled_)
        for (const auto& in : inputs)
            if (in.requires_grad()) { needs = true; break; }
    if (needs) {
        out.set_requires_grad(true);
        nodes_.push_back(Node{std::move(back)});
    }
    return out;
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    const int m = ta ? a.cols() : a.rows();
    const int ka = ta ? a.rows() : a.cols();
    const int kb = tb ? b.cols() : b.rows();
    const int n = tb ? b.rows() : b.cols();
    if (ka != kb)
        throw Error("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                    (ta ? "^T" : "") + " vs " + shape_str(b.shape()) + (tb ? "^T" : ""));
    Tensor out = Tensor::zeros({m, n});
    kernels::matmul(a.data().data(), b.data().data(), out.data().data(), m, ka, n, ta, tb);
    const int k = ka;
    auto back = [a = a, b = b, out, m, k, n, ta, tb]() mutable {
        const double* dc = out.grad().data();
        if (a.requires_grad()) {
            if (!ta)
                kernels::matmul(dc, b.data().data(), a.grad().data(), m, n, k, false, !tb, true);
            else
                kernels::matmul(b.data().data(), dc, a.grad().data(), k, n, m, tb, true, true);
        }
        if (b.requires_grad()) {
            if (!tb)
                kernels::matmul(a.data().data(), dc, b.grad().data(), k, m, n, !ta, false, true);
            else
                kernels::matmul(dc, a.data().data(), b.grad().data(), n, m, k, true, ta, true);
        }
    };
    return record(std::move(out), {a, b}, std::move(back), "matmul");
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw Error("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    const size_t n = a.data().size();
    for (size_t i = 0; i < n; i++) out.data()[i] = a.data()[i] + b.data()[i];
    auto back = [a = a, b = b, out]() mutable {
        const auto& dc = out.grad();
        if (a.requires_grad()) {
            auto& g = a.grad();
            for (size_t i = 0; i < dc.size(); i++) g[i] += dc[i];
        }
        if (b.requires_grad()) {
            auto& g = b.grad();
            for (size_t i = 0; i < dc.size(); i++) g[i] += dc[i];
        }
    };
    return record(std::move(out), {a, b}, std::move(back), "add");
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw Error("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    const size_t n = a.data().size();
    for (size_t i = 0; i < n; i++) out.data()[i] = a.data()[i] * b.data()[i];
    auto back = [a = a, b = b, out]() mutable {
        const auto& dc = out.grad();
        if (a.requires_grad()) {
            auto& g = a.grad();
            for (size_t i = 0; i < dc.size(); i++) g[i] += dc[i] * b.data()[i];
        }
        if (b.requires_grad()) {
            auto& g = b.grad();
            for (size_t i = 0; i < dc.size(); i++) g[i] += dc[i] * a.data()[i];
        }
    };
    return record(std::move(out), {a, b}, std::move(back), "mul");
}

Tensor Graph::scale(const Tensor& a, double s) {
    Tensor out = Tensor::zeros(a.shape());
    for (size_t i = 0; i < a.data().size(); i++) out.data()[i] = a.data()[i] * s;
    auto back = [a = a, out, s]() mutable {
        if (!a.requires_grad()) return;
        const auto& dc = out.grad();
        auto& g = a.grad();
        for (size_t i = 0; i < dc.size(); i++) g[i] += dc[i] * s;
    };
    return record(std::move(out), {a}, std::move(back), "scale");
}

Tensor Graph::add_bias(const Tensor& x, const Tensor& bias) {
    const int rows = x.rows();
    const int d = x.cols();
    if (bias.numel() != d)
        throw Error("add_bias: bias length " + std::to_string(bias.numel()) +
                    " vs row width " + std::to_string(d));
    Tensor out = Tensor::zeros(x.shape());
    for (int r = 0; r < rows; r++)
        for (int j = 0; j < d; j++)
            out.data()[static_cast<size_t>(r) * d + j] =
                x.data()[static_cast<size_t>(r) * d + j] + bias.data()[j];
    auto back = [x = x, bias = bias, out, rows, d]() mutable {
        const auto& dc = out.grad();
        if (x.requires_grad()) {
            auto& g = x.grad();
            for (size_t i = 0; i < dc.size(); i++) g[i] += dc[i];
        }
        if (bias.requires_grad()) {
            auto& g = bias.grad();
            for (int r = 0; r < rows; r++)
                for (int j = 0; j < d; j++) g[j] += dc[static_cast<size_t>(r) * d + j];
        }
    };
    return record(std::move(out), {x, bias}, std::move(back), "add_bias");
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
} // namespace

Tensor Graph::gelu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    for (size_t i = 0; i < x.data().size(); i++) {
        const double v = x.data()[i];
        out.data()[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    auto back = [x = x, out]() mutable {
        if (!x.requires_grad()) return;
        const auto& dc = out.grad();
        auto& g = x.grad();
        for (size_t i = 0; i < dc.size(); i++) {
            const double v = x.data()[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            g[i] += dc[i] * (cdf + v * pdf);
        }
    };
    return record(std::move(out), {x}, std::move(back), "gelu");
}

Tensor Graph::sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    Tensor out = Tensor::scalar(acc);
    auto back = [x = x, out]() mutable {
        if (!x.requires_grad()) return;
        const double dc = out.grad()[0];
        auto& g = x.grad();
        for (size_t i = 0; i < g.size(); i++) g[i] += dc;
    };
    return record(std::move(out), {x}, std::move(back), "sum");
}

Tensor Graph::layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const int rows = x.rows();
    const int d = x.cols();
    if (gamma.numel() != d || beta.numel() != d)
        throw Error("layer_norm: gamma/beta length must equal row width " + std::to_string(d));
    Tensor out = Tensor::zeros(x.shape());
    auto mean = std::make_shared<std::vector<double>>(rows);
    auto rstd = std::make_shared<std::vector<double>>(rows);
    kernels::layer_norm_rows(x.data().data(), gamma.data().data(), beta.data().data(),
                             out.data().data(), mean->data(), rstd->data(), rows, d, eps);
    auto back = [x = x, gamma = gamma, beta = beta, out, mean, rstd, rows, d]() mutable {
        const auto& dy = out.grad();
        for (int r = 0; r < rows; r++) {
            const size_t off = static_cast<size_t>(r) * d;
            const double mu = (*mean)[r];
            const double rs = (*rstd)[r];
            if (gamma.requires_grad() || beta.requires_grad()) {
                for (int j = 0; j < d; j++) {
                    const double xh = (x.data()[off + j] - mu) * rs;
                    if (gamma.requires_grad()) gamma.grad()[j] += dy[off + j] * xh;
                    if (beta.requires_grad()) beta.grad()[j] += dy[off + j];
                }
            }
            if (x.requires_grad()) {
                double s1 = 0.0, s2 = 0.0;
                for (int j = 0; j < d; j++) {
                    const double dyh = dy[off + j] * gamma.data()[j];
                    const double xh = (x.data()[off + j] - mu) * rs;
                    s1 += dyh;
                    s2 += dyh * xh;
                }
                s1 /= d;
                s2 /= d;
                auto& g = x.grad();
                for (int j = 0; j < d; j++) {
                    const double dyh = dy[off + j] * gamma.data()[j];
                    const double xh = (x.data()[off + j] - mu) * rs;
                    g[off + j] += rs * (dyh - s1 - xh * s2);
                }
            }
        }
    };
    return record(std::move(out), {x, gamma, beta}, std::move(back), "layer_norm");
}

Tensor Graph::softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
    const int rows = logits.rows();
    const int K = logits.cols();
    if (static_cast<int>(targets.size()) != rows)
        throw Error("softmax_cross_entropy: " + std::to_string(targets.size()) +
                    " targets for " + std::to_string(rows) + " rows");
    int active = 0;
    for (int t : targets) {
        if (t == kIgnoreLabel) continue;
        if (t < 0 || t >= K)
            throw Error("softmax_cross_entropy: target " + std::to_string(t) +
                        " outside [0," + std::to_string(K) + ")");
        active++;
    }
    if (active == 0)
        throw Error("softmax_cross_entropy: every position carries the ignore sentinel");
    auto probs = std::make_shared<std::vector<double>>(logits.data());
    kernels::softmax_rows(probs->data(), rows, K);
    double loss = 0.0;
    for (int r = 0; r < rows; r++) {
        if (targets[r] == kIgnoreLabel) continue;
        const double p = (*probs)[static_cast<size_t>(r) * K + targets[r]];
        loss -= std::log(std::max(p, 1e-300));
    }
    loss /= active;
    Tensor out = Tensor::scalar(loss);
    auto tgts = std::make_shared<std::vector<int>>(targets);
    auto back = [logits = logits, out, probs, tgts, rows, K, active]() mutable {
        if (!logits.requires_grad()) return;
        const double dc = out.grad()[0] / active;
        auto& g = logits.grad();
        for (int r = 0; r < rows; r++) {
            if ((*tgts)[r] == kIgnoreLabel) continue;
            const size_t off = static_cast<size_t>(r) * K;
            for (int j = 0; j < K; j++) g[off + j] += dc * (*probs)[off + j];
            g[off + (*tgts)[r]] -= dc;
        }
    };
    return record(std::move(out), {logits}, std::move(back), "softmax_cross_entropy");
}

Tensor Graph::bce_with_logits(const Tensor& logits, const std::vector<double>& labels) {
    const int n = static_cast<int>(logits.numel());
    if (static_cast<int>(labels.size()) != n)
        throw Error("bce_with_logits: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(n) + " logits");
    if (n == 0) throw Error("bce_with_logits: empty input");
    double loss = 0.0;
    for (int i = 0; i < n; i++) {
        const double z = logits.data()[i];
        loss += std::max(z, 0.0) - z * labels[i] + std::log1p(std::exp(-std::abs(z)));
    }
    loss /= n;
    Tensor out = Tensor::scalar(loss);
    auto lbl = std::make_shared<std::vector<double>>(labels);
    auto back = [logits = logits, out, lbl, n]() mutable {
        if (!logits.requires_grad()) return;
        const double dc = out.grad()[0] / n;
        auto& g = logits.grad();
        for (int i = 0; i < n; i++) {
            const double z = logits.data()[i];
            const double s = 1.0 / (1.0 + std::exp(-z));
            g[i] += dc * (s - (*lbl)[i]);
        }
    };
    return record(std::move(out), {logits}, std::move(back), "bce_with_logits");
}

Tensor Graph::embedding(const Tensor& table, const std::vector<int>& ids) {
    return gather_rows(table, ids);
}

Tensor Graph::gather_rows(const Tensor& x, const std::vector<int>& idx) {
    const int rows = x.rows();
    const int d = x.cols();
    Tensor out = Tensor::zeros({static_cast<int>(idx.size()), d});
    for (size_t i = 0; i < idx.size(); i++) {
        if (idx[i] < 0 || idx[i] >= rows)
            throw Error("gather_rows: index " + std::to_string(idx[i]) + " outside [0," +
                        std::to_string(rows) + ")");
        std::memcpy(out.data().data() + i * d,
                    x.data().data() + static_cast<size_t>(idx[i]) * d, sizeof(double) * d);
    }
    auto ids = std::make_shared<std::vector<int>>(idx);
    auto back = [x = x, out, ids, d]() mutable {
        if (!x.requires_grad()) return;
        const auto& dc = out.grad();
        auto& g = x.grad();
        for (size_t i = 0; i < ids->size(); i++) {
            const size_t src = i * d;
            const size_t dst = static_cast<size_t>((*ids)[i]) * d;
            for (int j = 0; j < d; j++) g[dst + j] += dc[src + j];
        }
    };
    return record(std::move(out), {x}, std::move(back), "gather_rows");
}

Tensor Graph::slice_rows(const Tensor& x, int start, int count) {
    const int rows = x.rows();
    const int d = x.cols();
    if (start < 0 || count < 0 || start + count > rows)
        throw Error("slice_rows: range [" + std::to_string(start) + "," +
                    std::to_string(start + count) + ") outside " + std::to_string(rows) + " rows");
    Tensor out = Tensor::zeros({count, d});
    std::memcpy(out.data().data(), x.data().data() + static_cast<size_t>(start) * d,
                sizeof(double) * static_cast<size_t>(count) * d);
    auto back = [x = x, out, start, d]() mutable {
        if (!x.requires_grad()) return;
        const auto& dc = out.grad();
        auto& g = x.grad();
        const size_t off = static_cast<size_t>(start) * d;
        for (size_t i = 0; i < dc.size(); i++) g[off + i] += dc[i];
    };
    return record(std::move(out), {x}, std::move(back), "slice_rows");
}

Tensor Graph::concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw Error("concat_rows: no parts");
    const int d = parts[0].cols();
    int total = 0;
    for (const auto& p : parts) {
        if (p.cols() != d) throw Error("concat_rows: column mismatch");
        total += p.rows();
    }
    Tensor out = Tensor::zeros({total, d});
    size_t off = 0;
    for (const auto& p : parts) {
        std::memcpy(out.data().data() + off, p.data().data(), sizeof(double) * p.data().size());
        off += p.data().size();
    }
    auto ps = std::make_shared<std::vector<Tensor>>(parts);
    auto back = [ps, out]() mutable {
        const auto& dc = out.grad();
        size_t off = 0;
        for (auto& p : *ps) {
            if (p.requires_grad()) {
                auto& g = p.grad();
                for (size_t i = 0; i < g.size(); i++) g[i] += dc[off + i];
            }
            off += p.data().size();
        }
    };
    return record(std::move(out), parts, std::move(back), "concat_rows");
}

Tensor Graph::dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0) throw Error("dropout: rate outside [0,1)");
    if (rate == 0.0) return x;
    Tensor out = Tensor::zeros(x.shape());
    auto mask = std::make_shared<std::vector<double>>(x.data().size());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (size_t i = 0; i < x.data().size(); i++) {
        (*mask)[i] = u(rng) < rate ? 0.0 : keep_scale;
        out.data()[i] = x.data()[i] * (*mask)[i];
    }
    auto back = [x = x, out, mask]() mutable {
        if (!x.requires_grad()) return;
        const auto& dc = out.grad();
        auto& g = x.grad();
        for (size_t i = 0; i < dc.size(); i++) g[i] += dc[i] * (*mask)[i];
    };
    return record(std::move(out), {x}, std::move(back), "dropout");
}

Tensor Graph::attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                        const std::vector<AttnSpan>& spans,
                        const std::vector<uint8_t>& kv_valid) {
    const int d = q.cols();
    if (k.cols() != d || v.cols() != d)
        throw Error("attention: q/k/v width mismatch");
    if (heads <= 0 || d % heads != 0)
        throw Error("attention: width " + std::to_string(d) + " not divisible by " +
                    std::to_string(heads) + " heads");
    if (static_cast<int>(kv_valid.size()) != k.rows())
        throw Error("attention: kv_valid length mismatch");
    const int dh = d / heads;
    const double alpha = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor out = Tensor::zeros(q.shape());

    // probs stored per span: heads * q_len * kv_len.
    auto probs = std::make_shared<std::vector<std::vector<double>>>(spans.size());
    for (size_t s = 0; s < spans.size(); s++) {
        const auto& sp = spans[s];
        if (sp.q_off < 0 || sp.q_off + sp.q_len > q.rows() || sp.kv_off < 0 ||
            sp.kv_off + sp.kv_len > k.rows())
            throw Error("attention: span outside tensor bounds");
        auto& pr = (*probs)[s];
        pr.assign(static_cast<size_t>(heads) * sp.q_len * sp.kv_len, 0.0);
        for (int h = 0; h < heads; h++) {
            const int hc = h * dh;
            for (int i = 0; i < sp.q_len; i++) {
                double* row = pr.data() + (static_cast<size_t>(h) * sp.q_len + i) * sp.kv_len;
                const double* qi = q.data().data() + static_cast<size_t>(sp.q_off + i) * d + hc;
                double mx = -1e300;
                for (int j = 0; j < sp.kv_len; j++) {
                    if (!kv_valid[static_cast<size_t>(sp.kv_off + j)]) {
                        row[j] = -1e300;
                        continue;
                    }
                    const double* kj = k.data().data() + static_cast<size_t>(sp.kv_off + j) * d + hc;
                    double acc = 0.0;
                    for (int c = 0; c < dh; c++) acc += qi[c] * kj[c];
                    row[j] = acc * alpha;
                    mx = std::max(mx, row[j]);
                }
                double z = 0.0;
                for (int j = 0; j < sp.kv_len; j++) {
                    row[j] = row[j] <= -1e299 ? 0.0 : std::exp(row[j] - mx);
                    z += row[j];
                }
                double* oi = out.data().data() + static_cast<size_t>(sp.q_off + i) * d + hc;
                if (z <= 0.0) continue; // no valid keys: zero context
                const double inv = 1.0 / z;
                for (int j = 0; j < sp.kv_len; j++) {
                    row[j] *= inv;
                    if (row[j] == 0.0) continue;
                    const double* vj = v.data().data() + static_cast<size_t>(sp.kv_off + j) * d + hc;
                    for (int c = 0; c < dh; c++) oi[c] += row[j] * vj[c];
                }
            }
        }
    }

    auto sp_copy = std::make_shared<std::vector<AttnSpan>>(spans);
    auto back = [q = q, k = k, v = v, out, probs, sp_copy, heads, dh, d, alpha]() mutable {
        const auto& dc = out.grad();
        std::vector<double> dattn;
        for (size_t s = 0; s < sp_copy->size(); s++) {
            const auto& sp = (*sp_copy)[s];
            const auto& pr = (*probs)[s];
            for (int h = 0; h < heads; h++) {
                const int hc = h * dh;
                for (int i = 0; i < sp.q_len; i++) {
                    const double* row = pr.data() + (static_cast<size_t>(h) * sp.q_len + i) * sp.kv_len;
                    const double* doi = dc.data() + static_cast<size_t>(sp.q_off + i) * d + hc;
                    dattn.assign(static_cast<size_t>(sp.kv_len), 0.0);
                    // dA[j] = dc_i . v_j ; dV_j += A[j] * dc_i
                    for (int j = 0; j < sp.kv_len; j++) {
                        if (row[j] == 0.0) continue;
                        const size_t vo = static_cast<size_t>(sp.kv_off + j) * d + hc;
                        double acc = 0.0;
                        for (int c = 0; c < dh; c++) acc += doi[c] * v.data()[vo + c];
                        dattn[j] = acc;
                        if (v.requires_grad()) {
                            auto& gv = v.grad();
                            for (int c = 0; c < dh; c++) gv[vo + c] += row[j] * doi[c];
                        }
                    }
                    // softmax backward: dS[j] = A[j] * (dA[j] - sum_l A[l] dA[l])
                    double dot = 0.0;
                    for (int j = 0; j < sp.kv_len; j++) dot += row[j] * dattn[j];
                    const size_t qo = static_cast<size_t>(sp.q_off + i) * d + hc;
                    for (int j = 0; j < sp.kv_len; j++) {
                        if (row[j] == 0.0) continue;
                        const double ds = row[j] * (dattn[j] - dot) * alpha;
                        const size_t ko = static_cast<size_t>(sp.kv_off + j) * d + hc;
                        if (q.requires_grad()) {
                            auto& gq = q.grad();
                            for (int c = 0; c < dh; c++) gq[qo + c] += ds * k.data()[ko + c];
                        }
                        if (k.requires_grad()) {
                            auto& gk = k.grad();
                            for (int c = 0; c < dh; c++) gk[ko + c] += ds * q.data()[qo + c];
                        }
                    }
                }
            }
        }
    };
    return record(std::move(out), {q, k, v}, std::move(back), "attention");
}

void Graph::backward(const Tensor& loss) {
    if (backward_done_)
        throw Error("backward called twice on the same graph without a fresh forward");
    if (!loss.defined() || loss.numel() != 1)
        throw Error("backward requires a scalar loss");
    if (!loss.requires_grad())
        throw Error("backward: loss is not connected to any tracked tensor");
    Tensor l = loss; // handles share storage
    l.grad()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back();
    backward_done_ = true;
}

double grad_check(const std::function<Tensor(Graph&)>& f,
                  const std::vector<Tensor>& params, double h) {
    Graph g(true, true);
    Tensor loss = f(g);
    g.backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params)
        analytic.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.data().size(), 0.0));

    auto eval = [&]() {
        Graph ng(false, false);
        return f(ng).item();
    };
    double max_err = 0.0;
    for (size_t pi = 0; pi < params.size(); pi++) {
        Tensor p = params[pi];
        for (size_t i = 0; i < p.data().size(); i++) {
            const double saved = p.data()[i];
            p.data()[i] = saved + h;
            const double fp = eval();
            p.data()[i] = saved - h;
            const double fm = eval();
            p.data()[i] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw Error("grad_check: non-finite value at tensor " + std::to_string(pi) +
                            " coordinate " + std::to_string(i));
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[pi][i];
            const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

} // namespace ces
