#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mlagen/numerics/tensor.hpp"

namespace mlagen::sink {

inline constexpr double kStrongMask = 0.2;
inline constexpr double kWeakMask = 0.6;
inline constexpr double kNoMask = std::numeric_limits<double>::infinity();
inline constexpr double kRowTolerance = 1e-5;

struct SinkConfig {
    int K = 2;
    double t_thresh = kNoMask;
    int j0 = 0;
};

enum class Phase { training, sampling_cond, sampling_uncond };
const char* phase_name(Phase p);

// Head-averaged L x N motion-to-text attention of one sample at one timestep.
struct AttentionRecord {
    MatD matrix;
    double t = 0.0;
    Phase phase = Phase::sampling_cond;
    int sample_id = 0;
    int step = 0;
    int layer = 0;
    bool head_averaged = true;
    bool masked = false;
};

// Mean over rows of the sum of the K largest entries. K is clamped to N.
// Rows must be stochastic within kRowTolerance.
double sink_ratio(const MatD& A, int K);
inline double sink_ratio(const AttentionRecord& r, int K) { return sink_ratio(r.matrix, K); }

// Throws DataError if any row is not a probability vector.
void require_row_stochastic(const MatD& A, const char* where);

inline bool mask_active(double t, double t_thresh) { return t > t_thresh; }

// Additive logit mask over the N text columns: -inf at j0 iff t > t_thresh.
template <typename S>
std::vector<S> mask_policy(double t, const SinkConfig& cfg, int n_tokens) {
    std::vector<S> m(static_cast<std::size_t>(n_tokens), S(0));
    if (mask_active(t, cfg.t_thresh) && cfg.j0 >= 0 && cfg.j0 < n_tokens)
        m[static_cast<std::size_t>(cfg.j0)] = -std::numeric_limits<S>::infinity();
    return m;
}

struct TracePoint {
    int step = 0;
    double t = 0.0;
    double mean = 0.0;
    double std = 0.0;
    int count = 0;
};

using SinkTrace = std::vector<TracePoint>;

// Append-only store of per-(sample, step) SinkRatio values.
class TraceStore {
public:
    explicit TraceStore(int K = 2) : K_(K) {}

    void record(const AttentionRecord& r);
    void record_value(int sample_id, int step, double t, double value);

    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    int K() const { return K_; }

    // Groups by step (sorted), population mean/std over samples.
    SinkTrace summarize() const;

    struct Entry {
        int sample_id;
        int step;
        double t;
        double value;
    };
    const std::vector<Entry>& entries() const { return entries_; }

private:
    int K_;
    std::vector<Entry> entries_;
};

enum class EmitStatus { ok, empty };

// CSV columns: step,t,mean_sinkratio,std_sinkratio,variant
EmitStatus emit_trace_csv(const std::filesystem::path& path, const std::map<std::string, SinkTrace>& variants);
// TSV: first row the token surfaces, then one row of weights per latent frame.
EmitStatus emit_heatmap(const std::filesystem::path& path, const MatD& A, const std::vector<std::string>& tokens);

// Parses a file written by emit_trace_csv.
std::map<std::string, SinkTrace> read_trace_csv(const std::filesystem::path& path);

}  // namespace mlagen::sink
