#pragma once

#include <string>
#include <vector>

#include "ces/common.hpp"

namespace ces {

struct PerSample {
    int id;
    double score;
    int label;
};

// Per-run metrics plus provenance, one row of the result tables.
struct EvalReport {
    std::string run_id;
    std::string variant;
    std::string split; // "val" or "test"
    uint64_t seed = 0;
    double auroc = 0.0;
    double accuracy = 0.0;
    int n = 0;
    std::vector<PerSample> samples;
};

// Mann-Whitney AUROC: concordant pairs count 1, ties half, divided by
// #pos * #neg. Single sort with average ranks, O(n log n).
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

double accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                double threshold = 0.5);

struct TTestResult {
    double t;
    double df;
    double p; // two-sided
};

// Welch's two-sample t-test with Welch-Satterthwaite degrees of freedom.
TTestResult welch_ttest(const std::vector<double>& a, const std::vector<double>& b);

// Regularized incomplete beta function (continued fraction), exposed for the
// t-distribution tail used by welch_ttest.
double incomplete_beta(double a, double b, double x);

// Two-sided p-value of Student's t with df degrees of freedom.
double t_sf_two_sided(double t, double df);

EvalReport make_report(std::string run_id, std::string variant, std::string split,
                       uint64_t seed, std::vector<PerSample> samples);

// Writes <path>.csv (one row per run) and <path>.md (mean +/- std per
// variant per split). Deterministic ordering, byte-stable across re-runs.
void emit_report(const std::vector<EvalReport>& reports, const std::string& path);

} // namespace ces
