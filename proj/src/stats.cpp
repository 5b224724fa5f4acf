#include "ces/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

namespace ces {

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    const size_t n = scores.size();
    if (n != labels.size() || n == 0)
        throw Error("auroc: scores and labels must be non-empty and equal length");
    size_t n_pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw Error("auroc: labels must be 0/1");
        n_pos += static_cast<size_t>(l);
    }
    const size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw Error("auroc: needs at least one positive and one negative label");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Average ranks over tie groups, 1-based.
    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) j++;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (size_t t = i; t <= j; t++)
            if (labels[order[t]] == 1) pos_rank_sum += avg_rank;
        i = j + 1;
    }
    const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                double threshold) {
    const size_t n = scores.size();
    if (n != labels.size() || n == 0)
        throw Error("accuracy: scores and labels must be non-empty and equal length");
    size_t correct = 0;
    for (size_t i = 0; i < n; i++) {
        const int pred = scores[i] >= threshold ? 1 : 0;
        if (pred == labels[i]) correct++;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

namespace {

// Lanczos log-gamma.
double log_gamma(double x) {
    static const double c[] = {676.5203681218851,     -1259.1392167224028,
                               771.32342877765313,    -176.61502916214059,
                               12.507343278686905,    -0.13857109526572012,
                               9.9843695780195716e-6, 1.5056327351493116e-7};
    if (x < 0.5)
        return std::log(M_PI / std::sin(M_PI * x)) - log_gamma(1.0 - x);
    x -= 1.0;
    double a = 0.99999999999980993;
    const double t = x + 7.5;
    for (int i = 0; i < 8; i++) a += c[i] / (x + i + 1);
    return 0.5 * std::log(2.0 * M_PI) + (x + 0.5) * std::log(t) - t + std::log(a);
}

// Continued fraction for the incomplete beta (Lentz's method).
double betacf(double a, double b, double x) {
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    const double tiny = 1e-300;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; m++) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    return h;
}

} // namespace

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front =
        log_gamma(a + b) - log_gamma(a) - log_gamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b * 1.0; // symmetry I_x(a,b) = 1 - I_{1-x}(b,a)
}

double t_sf_two_sided(double t, double df) {
    const double x = df / (df + t * t);
    return incomplete_beta(0.5 * df, 0.5, x);
}

TTestResult welch_ttest(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw Error("welch_ttest: each group needs at least two samples");
    auto mean_var = [](const std::vector<double>& v) {
        const double n = static_cast<double>(v.size());
        double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        return std::pair<double, double>(m, s / (n - 1.0));
    };
    const auto [ma, va] = mean_var(a);
    const auto [mb, vb] = mean_var(b);
    if (va == 0.0 && vb == 0.0) {
        if (ma == mb) return {0.0, static_cast<double>(a.size() + b.size() - 2), 1.0};
        throw Error("welch_ttest: both groups have zero variance with distinct means");
    }
    const double sa = va / static_cast<double>(a.size());
    const double sb = vb / static_cast<double>(b.size());
    const double t = (ma - mb) / std::sqrt(sa + sb);
    const double df = (sa + sb) * (sa + sb) /
                      (sa * sa / (static_cast<double>(a.size()) - 1.0) +
                       sb * sb / (static_cast<double>(b.size()) - 1.0));
    return {t, df, t_sf_two_sided(t, df)};
}

EvalReport make_report(std::string run_id, std::string variant, std::string split,
                       uint64_t seed, std::vector<PerSample> samples) {
    EvalReport r;
    r.run_id = std::move(run_id);
    r.variant = std::move(variant);
    r.split = std::move(split);
    r.seed = seed;
    r.n = static_cast<int>(samples.size());
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(samples.size());
    labels.reserve(samples.size());
    for (const auto& s : samples) {
        scores.push_back(s.score);
        labels.push_back(s.label);
    }
    r.auroc = auroc(scores, labels);
    r.accuracy = accuracy(scores, labels);
    r.samples = std::move(samples);
    return r;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

} // namespace

void emit_report(const std::vector<EvalReport>& reports, const std::string& path) {
    if (reports.empty()) throw Error("emit_report: no reports");

    std::vector<const EvalReport*> sorted;
    for (const auto& r : reports) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](const EvalReport* a, const EvalReport* b) {
        return std::tie(a->variant, a->split, a->seed, a->run_id) <
               std::tie(b->variant, b->split, b->seed, b->run_id);
    });

    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);

    std::ofstream csv(path + ".csv");
    if (!csv) throw Error("emit_report: cannot write " + path + ".csv");
    csv << "run_id,variant,split,seed,auroc,accuracy,n\n";
    for (const auto* r : sorted)
        csv << r->run_id << ',' << r->variant << ',' << r->split << ',' << r->seed << ','
            << fmt(r->auroc) << ',' << fmt(r->accuracy) << ',' << r->n << '\n';

    // Aggregate mean +/- std per (variant, split).
    std::map<std::string, std::map<std::string, std::vector<double>>> agg;
    for (const auto* r : sorted) agg[r->variant][r->split].push_back(r->auroc);

    std::ofstream md(path + ".md");
    if (!md) throw Error("emit_report: cannot write " + path + ".md");
    md << "| Model | Validation | Test |\n|---|---|---|\n";
    for (const auto& [variant, splits] : agg) {
        auto cell = [&](const std::string& split) -> std::string {
            auto it = splits.find(split);
            if (it == splits.end() || it->second.empty()) return "-";
            const auto& v = it->second;
            const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
            double s = 0.0;
            for (double x : v) s += (x - m) * (x - m);
            s = v.size() > 1 ? std::sqrt(s / (v.size() - 1)) : 0.0;
            return fmt(m) + " ± " + fmt(s);
        };
        md << "| " << variant << " | " << cell("val") << " | " << cell("test") << " |\n";
    }
}

} // namespace ces
