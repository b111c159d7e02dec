#pragma once

#include <string>
#include <vector>

#include "mlagen/numerics/tensor.hpp"
#include "mlagen/synthdata/corpus.hpp"

namespace mlagen::eval {

// Frechet distance between Gaussian fits of two feature sets (rows are
// samples). Needs at least cols+1 rows per side.
double fid(const MatD& real, const MatD& gen);

struct RPrecision {
    double top1 = 0.0, top2 = 0.0, top3 = 0.0;
};

// Consecutive pools of `pool_size` rows; each motion row ranks its own text
// row against the pool's other texts by Euclidean distance. Ties count in
// favour of the true text. Trailing rows that do not fill a pool are unused.
RPrecision r_precision(const MatD& motion, const MatD& text, int pool_size = 32);

// Mean Euclidean distance between matched motion and text features.
double matching(const MatD& motion, const MatD& text);

// Mean cosine similarity between matched rows.
double clip_score(const MatD& motion, const MatD& text);

// Mean distance between paired generations from the same text.
double mmodality(const MatD& first, const MatD& second);

struct AlignmentScore {
    double accuracy = 0.0;
    double chance = 0.0;  // mean of 1/c over scored frames, c = content tokens in the prompt
    long frames = 0;
};

// `records[b]` is the L x N attention map of sample b; row i covers raw
// frames [4i, 4i+4). A frame scores when the argmax over content-token
// columns is the token whose span covers it.
AlignmentScore alignment_accuracy(const std::vector<MatD>& records,
                                  const std::vector<const synth::DatasetSample*>& samples,
                                  const synth::Vocabulary& vocab);

struct MeanCI {
    double mean = 0.0;
    double ci95 = 0.0;  // 1.96 * population std / sqrt(n)
};
MeanCI mean_ci(const std::vector<double>& values);

struct MetricRow {
    double fid = 0.0;
    RPrecision r;
    double matching = 0.0;
    double mmodality = 0.0;
    double clip_score = 0.0;
    double alignment_accuracy = 0.0;
    double alignment_chance = 0.0;
    double sinkratio = 0.0;  // final-step batch mean
};

struct MetricReport {
    std::string variant;
    std::vector<MetricRow> repetitions;

    MeanCI aggregate(double MetricRow::*field) const;
    MeanCI aggregate_top(int k) const;
};

// Column order of every metric table.
const std::vector<std::string>& metric_columns();

// One row per repetition, then "mean" and "ci95" rows.
std::string report_csv(const std::vector<MetricReport>& reports);
void write_report_csv(const std::string& path, const std::vector<MetricReport>& reports);

}  // namespace mlagen::eval
