#include "mlagen/eval/metrics.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "mlagen/model/autoencoder.hpp"

namespace mlagen::eval {

namespace {

void require_finite(const MatD& x, const char* what) {
    if (!x.allFinite()) throw DataError(std::string(what) + ": non-finite features");
}

void require_paired(const MatD& a, const MatD& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(what) + ": feature sets must have equal shapes");
    if (a.rows() == 0) throw ProtocolError(std::string(what) + ": empty feature set");
    require_finite(a, what);
    require_finite(b, what);
}

MatD covariance(const MatD& x, const RowVec<double>& mu) {
    MatD c = x.rowwise() - mu;
    return (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

// Eigenvalues of a symmetric PSD matrix; round-off negatives are clamped.
Eigen::VectorXd psd_eigenvalues(const MatD& m, Eigen::MatrixXd* vectors = nullptr) {
    MatD sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw NumericError("fid: eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    const double tol = 1e-8 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < -tol) throw NumericError("fid: covariance product is not positive semidefinite");
        ev(i) = std::max(0.0, ev(i));
    }
    if (vectors) *vectors = es.eigenvectors();
    return ev;
}

}  // namespace

double fid(const MatD& real, const MatD& gen) {
    if (real.cols() != gen.cols()) throw ShapeError("fid: feature dimensions differ");
    const Eigen::Index d = real.cols();
    if (real.rows() < d + 1 || gen.rows() < d + 1)
        throw ProtocolError("fid: need at least " + std::to_string(d + 1) + " samples per side");
    require_finite(real, "fid");
    require_finite(gen, "fid");
    const RowVec<double> mr = real.colwise().mean();
    const RowVec<double> mg = gen.colwise().mean();
    const MatD sr = covariance(real, mr);
    const MatD sg = covariance(gen, mg);

    // tr((Sr Sg)^1/2) = tr((Sr^1/2 Sg Sr^1/2)^1/2), and the inner matrix is symmetric.
    Eigen::MatrixXd v;
    Eigen::VectorXd er = psd_eigenvalues(sr, &v);
    const MatD root = v * er.cwiseSqrt().asDiagonal() * v.transpose();
    const Eigen::VectorXd ep = psd_eigenvalues(root * sg * root);
    const double tr_sqrt = ep.cwiseSqrt().sum();
    const double value = (mr - mg).squaredNorm() + sr.trace() + sg.trace() - 2.0 * tr_sqrt;
    return std::max(0.0, value);
}

RPrecision r_precision(const MatD& motion, const MatD& text, int pool_size) {
    require_paired(motion, text, "r_precision");
    if (pool_size < 3) throw ProtocolError("r_precision: pool size must be >= 3");
    if (motion.rows() < pool_size)
        throw ProtocolError("r_precision: " + std::to_string(motion.rows()) + " samples is fewer than the pool size " +
                            std::to_string(pool_size));
    const Eigen::Index pools = motion.rows() / pool_size;
    long hit[3] = {0, 0, 0};
    for (Eigen::Index p = 0; p < pools; ++p) {
        const Eigen::Index base = p * pool_size;
        for (int i = 0; i < pool_size; ++i) {
            const auto m = motion.row(base + i);
            const double own = (m - text.row(base + i)).norm();
            int rank = 1;
            for (int j = 0; j < pool_size; ++j)
                if (j != i && (m - text.row(base + j)).norm() < own) ++rank;
            for (int k = 0; k < 3; ++k) hit[k] += rank <= k + 1;
        }
    }
    const double n = static_cast<double>(pools * pool_size);
    return {hit[0] / n, hit[1] / n, hit[2] / n};
}

double matching(const MatD& motion, const MatD& text) {
    require_paired(motion, text, "matching");
    return (motion - text).rowwise().norm().mean();
}

double clip_score(const MatD& motion, const MatD& text) {
    require_paired(motion, text, "clip_score");
    double s = 0;
    for (Eigen::Index i = 0; i < motion.rows(); ++i) {
        const double den = motion.row(i).norm() * text.row(i).norm();
        s += den > 0 ? motion.row(i).dot(text.row(i)) / den : 0.0;
    }
    return s / static_cast<double>(motion.rows());
}

double mmodality(const MatD& first, const MatD& second) {
    require_paired(first, second, "mmodality");
    return (first - second).rowwise().norm().mean();
}

AlignmentScore alignment_accuracy(const std::vector<MatD>& records,
                                  const std::vector<const synth::DatasetSample*>& samples,
                                  const synth::Vocabulary& vocab) {
    if (records.size() != samples.size()) throw ShapeError("alignment_accuracy: one record per sample expected");
    AlignmentScore out;
    long correct = 0;
    double chance = 0;
    for (std::size_t b = 0; b < samples.size(); ++b) {
        const auto& s = *samples[b];
        const auto& a = records[b];
        const int F = s.clip.frame_count();
        if (s.text.spans.size() != s.text.tokens.size())
            throw DataError("alignment_accuracy: sample " + std::to_string(s.sample_id) + " has no token spans");
        if (a.rows() != model::latent_length(F) || a.cols() < s.text.size())
            throw ShapeError("alignment_accuracy: record shape does not match sample " + std::to_string(s.sample_id));
        const auto content = synth::content_positions(s.text, vocab);
        if (content.empty()) continue;
        for (int f = 0; f < F; ++f) {
            int owner = -1;
            for (int c : content) {
                const auto& sp = s.text.spans[static_cast<std::size_t>(c)];
                if (f >= sp.begin && f < sp.end) owner = c;
            }
            if (owner < 0) continue;
            const Eigen::Index row = f / model::kStride;
            int best = content[0];
            for (int c : content)
                if (a(row, c) > a(row, best)) best = c;
            correct += best == owner;
            chance += 1.0 / static_cast<double>(content.size());
            ++out.frames;
        }
    }
    if (out.frames == 0) throw DataError("alignment_accuracy: no content-covered frames");
    out.accuracy = static_cast<double>(correct) / static_cast<double>(out.frames);
    out.chance = chance / static_cast<double>(out.frames);
    return out;
}

MeanCI mean_ci(const std::vector<double>& values) {
    if (values.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    double m = 0;
    for (double v : values) m += v;
    m /= static_cast<double>(values.size());
    double var = 0;
    for (double v : values) var += (v - m) * (v - m);
    var /= static_cast<double>(values.size());
    return {m, 1.96 * std::sqrt(var) / std::sqrt(static_cast<double>(values.size()))};
}

MeanCI MetricReport::aggregate(double MetricRow::*field) const {
    std::vector<double> v;
    for (const auto& r : repetitions) v.push_back(r.*field);
    return mean_ci(v);
}

MeanCI MetricReport::aggregate_top(int k) const {
    std::vector<double> v;
    for (const auto& r : repetitions) v.push_back(k == 1 ? r.r.top1 : k == 2 ? r.r.top2 : r.r.top3);
    return mean_ci(v);
}

const std::vector<std::string>& metric_columns() {
    static const std::vector<std::string> cols = {
        "variant", "repetition", "fid", "top1", "top2", "top3", "matching", "mmodality",
        "clip_score", "alignment_accuracy", "alignment_chance", "sinkratio"};
    return cols;
}

namespace {

std::vector<double> row_values(const MetricRow& r) {
    return {r.fid, r.r.top1, r.r.top2, r.r.top3, r.matching, r.mmodality,
            r.clip_score, r.alignment_accuracy, r.alignment_chance, r.sinkratio};
}

void put_row(std::ostringstream& os, const std::string& variant, const std::string& rep,
             const std::vector<double>& v) {
    os << variant << ',' << rep;
    for (double x : v) os << ',' << x;
    os << '\n';
}

}  // namespace

std::string report_csv(const std::vector<MetricReport>& reports) {
    std::ostringstream os;
    os << std::setprecision(9);
    const auto& cols = metric_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << '\n';
    for (const auto& rep : reports) {
        for (std::size_t i = 0; i < rep.repetitions.size(); ++i)
            put_row(os, rep.variant, std::to_string(i), row_values(rep.repetitions[i]));
        if (rep.repetitions.empty()) continue;
        std::vector<std::vector<double>> byc;
        for (const auto& r : rep.repetitions) byc.push_back(row_values(r));
        std::vector<double> mean, ci;
        for (std::size_t c = 0; c < byc[0].size(); ++c) {
            std::vector<double> col;
            for (const auto& r : byc) col.push_back(r[c]);
            const auto s = mean_ci(col);
            mean.push_back(s.mean);
            ci.push_back(s.ci95);
        }
        put_row(os, rep.variant, "mean", mean);
        put_row(os, rep.variant, "ci95", ci);
    }
    return os.str();
}

void write_report_csv(const std::string& path, const std::vector<MetricReport>& reports) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DependencyError("cannot write " + path);
    f << report_csv(reports);
}

}  // namespace mlagen::eval
