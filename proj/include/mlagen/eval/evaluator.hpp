#pragma once

#include <filesystem>
#include <vector>

#include "mlagen/model/text_encoder.hpp"
#include "mlagen/synthdata/corpus.hpp"

namespace mlagen::eval {

inline constexpr int kPoolSize = 32;
inline constexpr double kGateTop1 = 0.5;

struct EvaluatorConfig {
    int joints = synth::kDefaultJoints;
    int d_eval = 32;
    int hidden = 64;
    int time_bins = 4;        // motion features are mean-pooled over this many equal chunks
    model::TextEncoderConfig text{17, 32, 16, 4, false, 0};
    int epochs = 30;
    int batch_size = 32;
    double lr = 1e-3;
    double weight_decay = 0.01;
    double temperature = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EvaluatorReport {
    std::vector<double> epoch_loss;
    double untrained_top1 = 0.0;
    double val_top1 = 0.0;
};

// Dual encoder trained with a symmetric contrastive loss. Both towers emit
// unit-norm D_eval features.
class Evaluator {
public:
    Evaluator() = default;
    explicit Evaluator(const EvaluatorConfig& cfg);

    const EvaluatorConfig& config() const { return cfg_; }
    bool gate_passed() const { return gate_passed_; }
    double val_top1() const { return val_top1_; }

    // Trains on `train`, then measures retrieval top-1 on pools of 32 from
    // `val`. Throws EvaluatorQualityError below the gate; the trained
    // weights stay available for inspection either way.
    EvaluatorReport train(const std::vector<const synth::DatasetSample*>& train,
                          const std::vector<const synth::DatasetSample*>& val);

    // Features are usable before training (random towers) but metrics
    // built on them call require_gate().
    MatD motion_features(const std::vector<const synth::MotionClip*>& clips) const;
    MatD text_features(const std::vector<std::vector<int>>& tokens) const;
    MatD motion_features(const std::vector<synth::MotionClip>& clips) const;

    double retrieval_top1(const std::vector<const synth::DatasetSample*>& set) const;

    void require_gate() const;

    void save(const std::filesystem::path& path) const;
    static Evaluator load(const std::filesystem::path& path);

    ParamStore<float>& params() { return store_; }

private:
    void init_params();
    void fit_normalization(const std::vector<const synth::DatasetSample*>& train);
    MatF frame_inputs(const synth::MotionClip& clip) const;
    Var<float> motion_tower(Tape<float>& tape, const std::vector<const synth::MotionClip*>& clips) const;
    Var<float> text_tower(Tape<float>& tape, const std::vector<std::vector<int>>& tokens) const;

    EvaluatorConfig cfg_;
    model::TextEncoder<float> text_;
    ParamStore<float> store_;
    RowVec<double> in_mean_, in_std_;
    bool gate_passed_ = false;
    double val_top1_ = 0.0;
};

}  // namespace mlagen::eval
