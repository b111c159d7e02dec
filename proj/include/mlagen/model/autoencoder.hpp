#pragma once

#include <filesystem>
#include <vector>

#include "mlagen/io/tensor_archive.hpp"
#include "mlagen/numerics/param_store.hpp"
#include "mlagen/synthdata/corpus.hpp"

namespace mlagen::model {

inline constexpr int kStride = 4;

// L latent frames x (J * d_ae) channels, joint-major within a row.
struct LatentSequence {
    MatF x;
    int frames = 0;  // raw frame count the sequence decodes back to
    int joints = 0;
    int d_ae = 0;

    int length() const { return static_cast<int>(x.rows()); }
};

inline int latent_length(int frames) { return (frames + kStride - 1) / kStride; }

struct AEConfig {
    int joints = synth::kDefaultJoints;
    int d_ae = 8;
    int hidden = 64;
    int epochs = 12;
    int batch_rows = 512;
    double lr = 2e-3;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
};

struct AETrainReport {
    std::vector<double> epoch_loss;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

// Each (window of 4 frames, joint) is encoded separately: 12 normalized
// coordinates -> hidden -> d_ae, and decoded by the mirror stack. Clips are
// padded to a multiple of the stride with their last frame and cropped back.
class MotionAutoencoder {
public:
    MotionAutoencoder() = default;
    explicit MotionAutoencoder(const AEConfig& cfg);

    const AEConfig& config() const { return cfg_; }
    bool trained() const { return trained_; }

    AETrainReport train(const std::vector<const synth::DatasetSample*>& train_set);

    LatentSequence encode(const synth::MotionClip& clip) const;
    synth::MotionClip decode(const LatentSequence& z) const;
    synth::MotionClip decode(const MatF& x, int frames) const;

    // Mean squared error in normalized coordinates over the given clips.
    double reconstruction_mse(const std::vector<const synth::DatasetSample*>& set) const;

    void save(const std::filesystem::path& path) const;
    static MotionAutoencoder load(const std::filesystem::path& path);

    ParamStore<float>& params() { return store_; }

private:
    void init_params();
    void require_trained(const char* op) const;
    MatF windows(const synth::MotionClip& clip) const;  // (L*J) x 12, normalized
    MatF encode_rows(const MatF& w) const;
    MatF decode_rows(const MatF& z) const;

    AEConfig cfg_;
    ParamStore<float> store_;
    RowVec<double> coord_mean_, coord_std_;   // per raw channel (J*3)
    RowVec<double> latent_mean_, latent_std_; // per latent channel (d_ae)
    bool trained_ = false;
};

}  // namespace mlagen::model
