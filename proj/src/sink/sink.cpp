#include "mlagen/sink/sink.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "mlagen/io/tensor_archive.hpp"

namespace mlagen::sink {

const char* phase_name(Phase p) {
    switch (p) {
        case Phase::training: return "training";
        case Phase::sampling_cond: return "sampling-cond";
        case Phase::sampling_uncond: return "sampling-uncond";
    }
    return "training";
}

void require_row_stochastic(const MatD& A, const char* where) {
    if (A.rows() == 0 || A.cols() == 0) throw DataError(std::string(where) + ": empty attention matrix");
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        double s = 0;
        for (Eigen::Index j = 0; j < A.cols(); ++j) {
            const double a = A(i, j);
            if (!std::isfinite(a) || a < -kRowTolerance)
                throw DataError(std::string(where) + ": invalid weight in row " + std::to_string(i));
            s += a;
        }
        if (std::abs(s - 1.0) > kRowTolerance)
            throw DataError(std::string(where) + ": row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
}

double sink_ratio(const MatD& A, int K) {
    if (K < 1) throw ConfigError("sink.K: must be >= 1");
    require_row_stochastic(A, "sink_ratio");
    const int N = static_cast<int>(A.cols());
    const int k = std::min(K, N);
    std::vector<double> row(static_cast<std::size_t>(N));
    double total = 0;
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        for (int j = 0; j < N; ++j) row[static_cast<std::size_t>(j)] = A(i, j);
        std::partial_sort(row.begin(), row.begin() + k, row.end(), std::greater<>());
        double s = 0;
        for (int j = 0; j < k; ++j) s += row[static_cast<std::size_t>(j)];
        total += s;
    }
    return total / static_cast<double>(A.rows());
}

void TraceStore::record(const AttentionRecord& r) {
    record_value(r.sample_id, r.step, r.t, sink_ratio(r.matrix, K_));
}

void TraceStore::record_value(int sample_id, int step, double t, double value) {
    entries_.push_back({sample_id, step, t, value});
}

SinkTrace TraceStore::summarize() const {
    std::vector<Entry> sorted = entries_;
    std::stable_sort(sorted.begin(), sorted.end(), [](const Entry& a, const Entry& b) {
        return a.step != b.step ? a.step < b.step : a.sample_id < b.sample_id;
    });
    SinkTrace out;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        double sum = 0;
        while (j < sorted.size() && sorted[j].step == sorted[i].step) sum += sorted[j++].value;
        const double n = static_cast<double>(j - i);
        const double mean = sum / n;
        double var = 0;
        for (std::size_t k = i; k < j; ++k) var += (sorted[k].value - mean) * (sorted[k].value - mean);
        out.push_back({sorted[i].step, sorted[i].t, mean, std::sqrt(var / n), static_cast<int>(j - i)});
        i = j;
    }
    return out;
}

EmitStatus emit_trace_csv(const std::filesystem::path& path, const std::map<std::string, SinkTrace>& variants) {
    std::ostringstream os;
    os << "step,t,mean_sinkratio,std_sinkratio,variant\n";
    os << std::setprecision(10);
    bool any = false;
    for (const auto& [name, trace] : variants)
        for (const auto& p : trace) {
            os << p.step << ',' << p.t << ',' << p.mean << ',' << p.std << ',' << name << '\n';
            any = true;
        }
    io::write_file(path, os.str());
    return any ? EmitStatus::ok : EmitStatus::empty;
}

EmitStatus emit_heatmap(const std::filesystem::path& path, const MatD& A, const std::vector<std::string>& tokens) {
    if (static_cast<Eigen::Index>(tokens.size()) != A.cols())
        throw ShapeError("emit_heatmap: " + std::to_string(tokens.size()) + " labels for " +
                         std::to_string(A.cols()) + " columns");
    std::ostringstream os;
    for (std::size_t j = 0; j < tokens.size(); ++j) os << (j ? "\t" : "") << tokens[j];
    os << '\n' << std::setprecision(8);
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        for (Eigen::Index j = 0; j < A.cols(); ++j) os << (j ? "\t" : "") << A(i, j);
        os << '\n';
    }
    io::write_file(path, os.str());
    return A.rows() > 0 ? EmitStatus::ok : EmitStatus::empty;
}

std::map<std::string, SinkTrace> read_trace_csv(const std::filesystem::path& path) {
    std::istringstream in(io::read_file(path));
    std::string line;
    std::getline(in, line);
    if (line != "step,t,mean_sinkratio,std_sinkratio,variant") throw FormatError("not a sink trace CSV: " + path.string());
    std::map<std::string, SinkTrace> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string f[5];
        for (auto& s : f)
            if (!std::getline(ls, s, ',')) throw FormatError("short row in " + path.string());
        TracePoint p;
        p.step = std::stoi(f[0]);
        p.t = std::stod(f[1]);
        p.mean = std::stod(f[2]);
        p.std = std::stod(f[3]);
        out[f[4]].push_back(p);
    }
    return out;
}

}  // namespace mlagen::sink
