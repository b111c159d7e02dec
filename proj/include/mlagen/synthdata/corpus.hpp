#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mlagen/core/rng.hpp"
#include "mlagen/numerics/tensor.hpp"

namespace mlagen::synth {

inline constexpr int kFps = 20;
inline constexpr int kMinFrames = 16;
inline constexpr int kMaxFrames = 200;
inline constexpr int kDefaultJoints = 8;

enum class TrajectoryRule { sinusoid, ramp, arc, hold };

// One analytic motion component. `amplitude` holds per-joint body-frame
// offsets (x forward, y up, z lateral) in meters; `phase` is per joint.
struct TrajectoryComponent {
    TrajectoryRule rule = TrajectoryRule::hold;
    std::vector<std::array<double, 3>> amplitude;
    std::vector<double> phase;
    int cycles = 1;
};

struct PrimitiveSpec {
    int id = 0;
    std::string name;
    int min_frames = 16;
    int max_frames = 28;
    std::vector<TrajectoryComponent> components;
    double forward_speed = 0.0;  // root translation, m/frame along facing
    double yaw_change = 0.0;     // total heading change over the segment, radians
};

enum class TokenKind { start, primitive, connective, modifier };

// Closed vocabulary: start token, primitives, connectives and modifiers.
class Vocabulary {
public:
    static constexpr int kStartId = 0;

    Vocabulary() = default;
    Vocabulary(std::vector<PrimitiveSpec> primitives, std::vector<std::string> connectives,
               std::vector<std::string> modifiers);

    int size() const { return static_cast<int>(words_.size()); }
    const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
    TokenKind kind(int id) const { return kinds_.at(static_cast<std::size_t>(id)); }
    std::optional<int> find(const std::string& w) const;
    int id(const std::string& w) const;  // throws TokenizationError

    const std::vector<PrimitiveSpec>& primitives() const { return primitives_; }
    const PrimitiveSpec& primitive_for_token(int token_id) const;
    int token_for_primitive(int primitive_index) const;
    const std::vector<std::string>& words() const { return words_; }
    int primitive_count() const { return static_cast<int>(primitives_.size()); }
    int connective_count() const;
    int modifier_count() const;
    bool is_content(int token_id) const { return kind(token_id) == TokenKind::primitive; }

private:
    std::vector<PrimitiveSpec> primitives_;
    std::vector<std::string> words_;
    std::vector<TokenKind> kinds_;
    std::vector<int> prim_of_token_;
    std::vector<int> token_of_prim_;
    std::map<std::string, int> index_;
};

// Ten primitives, "then"/"while", and "slowly"/"quickly"/"twice"/"softly".
Vocabulary default_vocabulary(int joints = kDefaultJoints);

struct Span {
    int begin = 0;
    int end = 0;  // half-open; begin == end is the empty span
    bool empty() const { return begin >= end; }
    bool operator==(const Span&) const = default;
};

// F x (J*3) positions, joint-major within a row.
struct MotionClip {
    MatD frames;
    int joints = kDefaultJoints;
    int fps = kFps;

    int frame_count() const { return static_cast<int>(frames.rows()); }
};

struct TextDescription {
    std::vector<int> tokens;  // tokens[0] is the start token
    std::string surface;
    std::vector<Span> spans;  // one per token

    int size() const { return static_cast<int>(tokens.size()); }
};

enum class Split { train, val, test };
const char* split_name(Split s);
Split parse_split(const std::string& s);

struct DatasetSample {
    MotionClip clip;
    TextDescription text;
    int sample_id = 0;
    Split split = Split::train;
};

struct GeneratorConfig {
    int n_samples = 2000;
    std::uint64_t seed = 0;
    int joints = kDefaultJoints;
    int max_primitives = 3;
    double modifier_prob = 0.3;
    double while_prob = 0.3;
    double velocity_cap = 0.25;  // max per-frame joint displacement, meters
    Vocabulary vocab = default_vocabulary();
};

void validate(const GeneratorConfig& cfg);

// A primitive instance in a program, with its resolved duration.
struct ProgramStep {
    const PrimitiveSpec* primitive = nullptr;
    int frames = 0;
    int repeats = 1;                 // "twice" -> 2
    double amplitude_scale = 1.0;    // "softly" -> 0.5
    bool carry_locomotion = false;   // joined by "while": previous root motion continues
};

struct RenderedProgram {
    MotionClip clip;
    std::vector<Span> segment_spans;  // one per step
};

// Renders consecutive segments. Segment k+1 starts on the last frame of
// segment k, so the clip is C0-continuous at boundaries.
RenderedProgram render_program(const std::vector<ProgramStep>& steps, int joints, Rng& rng);

// Largest per-frame joint displacement.
double max_joint_step(const MotionClip& clip);

// Prepends the start token; every whitespace-separated word must be in vocab.
TextDescription tokenize(const std::string& surface, const Vocabulary& vocab);
std::string detokenize(const std::vector<int>& tokens, const Vocabulary& vocab);

Split split_for_id(int sample_id);

DatasetSample generate_sample(const GeneratorConfig& cfg, int sample_id);
std::vector<DatasetSample> generate_dataset(const GeneratorConfig& cfg);

// Content tokens (primitives) of a description, by token position.
std::vector<int> content_positions(const TextDescription& text, const Vocabulary& vocab);

}  // namespace mlagen::synth
