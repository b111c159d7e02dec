#include "mlagen/synthdata/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace mlagen::synth {

namespace {

constexpr const char* kStartWord = "<s>";

// Body-frame rest pose template (x forward, y up, z lateral).
constexpr std::array<std::array<double, 3>, 8> kRest = {{
    {0.0, 0.90, 0.0},     // pelvis
    {0.0, 1.60, 0.0},     // head
    {0.0, 1.00, 0.35},    // left hand
    {0.0, 1.00, -0.35},   // right hand
    {0.0, 0.50, 0.12},    // left knee
    {0.0, 0.50, -0.12},   // right knee
    {0.0, 0.05, 0.12},    // left foot
    {0.0, 0.05, -0.12},   // right foot
}};

enum Joint { pelvis, head, lhand, rhand, lknee, rknee, lfoot, rfoot };

using Vec3 = std::array<double, 3>;

// Builds a component from a sparse per-template-joint table.
TrajectoryComponent component(TrajectoryRule rule, int cycles, int joints,
                              std::initializer_list<std::tuple<int, Vec3, double>> entries) {
    TrajectoryComponent c;
    c.rule = rule;
    c.cycles = cycles;
    c.amplitude.assign(static_cast<std::size_t>(joints), Vec3{0, 0, 0});
    c.phase.assign(static_cast<std::size_t>(joints), 0.0);
    for (int j = 0; j < joints; ++j) {
        for (const auto& [tj, amp, ph] : entries) {
            if (j % 8 == tj) {
                c.amplitude[static_cast<std::size_t>(j)] = amp;
                c.phase[static_cast<std::size_t>(j)] = ph;
            }
        }
    }
    return c;
}

double rule_value(TrajectoryRule rule, double u, int cycles, double phase) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    switch (rule) {
        case TrajectoryRule::sinusoid:
            return std::sin(two_pi * cycles * u + phase) - std::sin(phase);
        case TrajectoryRule::ramp:
            return u;
        case TrajectoryRule::arc:
            return std::sin(std::numbers::pi * u);
        case TrajectoryRule::hold:
            return 0.0;
    }
    return 0.0;
}

Vec3 rest_pose(int j) {
    Vec3 p = kRest[static_cast<std::size_t>(j % 8)];
    p[1] += 0.02 * (j / 8);
    return p;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<PrimitiveSpec> primitives, std::vector<std::string> connectives,
                       std::vector<std::string> modifiers)
    : primitives_(std::move(primitives)) {
    auto push = [&](const std::string& w, TokenKind k, int prim) {
        if (w.empty() || w.find(' ') != std::string::npos)
            throw ConfigError("vocabulary word must be a non-empty single word: '" + w + "'");
        if (index_.count(w)) throw ConfigError("duplicate vocabulary word: " + w);
        index_[w] = static_cast<int>(words_.size());
        words_.push_back(w);
        kinds_.push_back(k);
        prim_of_token_.push_back(prim);
    };
    push(kStartWord, TokenKind::start, -1);
    for (std::size_t i = 0; i < primitives_.size(); ++i) {
        primitives_[i].id = static_cast<int>(i);
        token_of_prim_.push_back(static_cast<int>(words_.size()));
        push(primitives_[i].name, TokenKind::primitive, static_cast<int>(i));
    }
    for (const auto& c : connectives) push(c, TokenKind::connective, -1);
    for (const auto& m : modifiers) push(m, TokenKind::modifier, -1);
}

std::optional<int> Vocabulary::find(const std::string& w) const {
    auto it = index_.find(w);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

int Vocabulary::id(const std::string& w) const {
    auto f = find(w);
    if (!f) throw TokenizationError("out-of-vocabulary word: '" + w + "'");
    return *f;
}

const PrimitiveSpec& Vocabulary::primitive_for_token(int token_id) const {
    const int p = prim_of_token_.at(static_cast<std::size_t>(token_id));
    if (p < 0) throw DataError("token is not a primitive: " + word(token_id));
    return primitives_[static_cast<std::size_t>(p)];
}

int Vocabulary::token_for_primitive(int primitive_index) const {
    return token_of_prim_.at(static_cast<std::size_t>(primitive_index));
}

int Vocabulary::connective_count() const {
    return static_cast<int>(std::count(kinds_.begin(), kinds_.end(), TokenKind::connective));
}

int Vocabulary::modifier_count() const {
    return static_cast<int>(std::count(kinds_.begin(), kinds_.end(), TokenKind::modifier));
}

Vocabulary default_vocabulary(int joints) {
    using R = TrajectoryRule;
    constexpr double pi = std::numbers::pi;
    std::vector<PrimitiveSpec> p;
    auto add = [&](std::string name, int lo, int hi, std::vector<TrajectoryComponent> comps,
                   double speed = 0.0, double yaw = 0.0) {
        PrimitiveSpec s;
        s.name = std::move(name);
        s.min_frames = lo;
        s.max_frames = hi;
        s.components = std::move(comps);
        s.forward_speed = speed;
        s.yaw_change = yaw;
        p.push_back(std::move(s));
    };
    add("walk", 20, 32,
        {component(R::sinusoid, 2, joints,
                   {{lfoot, {0.15, 0.05, 0}, 0.0}, {rfoot, {0.15, 0.05, 0}, pi},
                    {lknee, {0.08, 0.03, 0}, 0.0}, {rknee, {0.08, 0.03, 0}, pi},
                    {lhand, {0.08, 0, 0}, pi}, {rhand, {0.08, 0, 0}, 0.0}})},
        0.02);
    add("run", 16, 28,
        {component(R::sinusoid, 2, joints,
                   {{lfoot, {0.2, 0.1, 0}, 0.0}, {rfoot, {0.2, 0.1, 0}, pi},
                    {lknee, {0.12, 0.08, 0}, 0.0}, {rknee, {0.12, 0.08, 0}, pi},
                    {lhand, {0.15, 0.05, 0}, pi}, {rhand, {0.15, 0.05, 0}, 0.0},
                    {head, {0.05, 0.03, 0}, 0.0}})},
        0.045);
    add("jump", 16, 24,
        {component(R::arc, 1, joints,
                   {{pelvis, {0, 0.3, 0}, 0}, {head, {0, 0.3, 0}, 0}, {lhand, {0, 0.5, 0}, 0},
                    {rhand, {0, 0.5, 0}, 0}, {lknee, {0.05, 0.35, 0}, 0}, {rknee, {0.05, 0.35, 0}, 0},
                    {lfoot, {0, 0.3, 0}, 0}, {rfoot, {0, 0.3, 0}, 0}})});
    add("turn_left", 16, 28,
        {component(R::sinusoid, 2, joints, {{lfoot, {0, 0.06, 0}, 0.0}, {rfoot, {0, 0.06, 0}, pi}})},
        0.0, pi / 2);
    add("turn_right", 16, 28,
        {component(R::sinusoid, 2, joints, {{lfoot, {0, 0.06, 0}, pi}, {rfoot, {0, 0.06, 0}, 0.0}})},
        0.0, -pi / 2);
    add("raise_arm", 16, 28, {component(R::arc, 1, joints, {{rhand, {0.1, 0.6, 0.05}, 0}})});
    add("kick", 16, 24,
        {component(R::arc, 1, joints, {{rfoot, {0.4, 0.3, 0}, 0}, {rknee, {0.2, 0.2, 0}, 0},
                                       {lhand, {-0.05, 0.05, 0.05}, 0}})});
    add("clap", 16, 28,
        {component(R::arc, 1, joints, {{lhand, {0.25, 0.3, -0.25}, 0}, {rhand, {0.25, 0.3, 0.25}, 0}}),
         component(R::sinusoid, 3, joints, {{lhand, {0, 0, 0.06}, 0.0}, {rhand, {0, 0, -0.06}, 0.0}})});
    add("crouch", 20, 32,
        {component(R::arc, 1, joints,
                   {{pelvis, {0, -0.35, 0}, 0}, {head, {0.05, -0.35, 0}, 0}, {lhand, {0.1, -0.3, 0}, 0},
                    {rhand, {0.1, -0.3, 0}, 0}, {lknee, {0.15, -0.2, 0}, 0}, {rknee, {0.15, -0.2, 0}, 0}})});
    add("wave", 20, 32,
        {component(R::arc, 1, joints, {{lhand, {0, 0.65, 0.1}, 0}}),
         component(R::sinusoid, 3, joints, {{lhand, {0, 0, 0.12}, 0.0}})});
    return Vocabulary(std::move(p), {"then", "while"}, {"slowly", "quickly", "twice", "softly"});
}

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw FormatError("unknown split tag: " + s);
}

void validate(const GeneratorConfig& cfg) {
    if (cfg.n_samples < 1) throw ConfigError("data.n_samples: must be >= 1");
    if (cfg.joints < 2) throw ConfigError("data.joints: must be >= 2");
    if (cfg.max_primitives < 1) throw ConfigError("data.max_primitives: must be >= 1");
    if (cfg.vocab.size() == 0) throw ConfigError("data.vocab: empty vocabulary");
    if (cfg.vocab.primitive_count() < 8) throw ConfigError("data.vocab: needs at least 8 primitives");
    if (cfg.vocab.connective_count() + cfg.vocab.modifier_count() < 4)
        throw ConfigError("data.vocab: needs at least 4 connectives/modifiers");
    if (cfg.max_primitives > cfg.vocab.primitive_count())
        throw ConfigError("data.max_primitives: exceeds primitive count");
    for (const auto& p : cfg.vocab.primitives()) {
        if (p.min_frames < 4 || p.max_frames < p.min_frames)
            throw ConfigError("data.vocab: bad duration range for " + p.name);
        for (const auto& c : p.components)
            if (static_cast<int>(c.amplitude.size()) != cfg.joints)
                throw ConfigError("data.vocab: primitive " + p.name + " built for a different joint count");
    }
}

RenderedProgram render_program(const std::vector<ProgramStep>& steps, int joints, Rng& rng) {
    (void)rng;
    int total = 0;
    for (const auto& s : steps) {
        if (s.primitive == nullptr || s.frames < 1 || s.repeats < 1)
            throw GenerationError("render_program: malformed step");
        total += s.frames * s.repeats;
    }
    if (total < kMinFrames || total > kMaxFrames)
        throw GenerationError("render_program: total duration " + std::to_string(total) +
                              " outside [" + std::to_string(kMinFrames) + ", " +
                              std::to_string(kMaxFrames) + "]");

    RenderedProgram out;
    out.clip.joints = joints;
    out.clip.frames = MatD::Zero(total, joints * 3);

    double root_x = 0.0, root_z = 0.0, heading = 0.0;
    std::vector<Vec3> base(static_cast<std::size_t>(joints));
    for (int j = 0; j < joints; ++j) base[static_cast<std::size_t>(j)] = rest_pose(j);
    double carried_speed = 0.0;

    int row = 0;
    for (const auto& step : steps) {
        const PrimitiveSpec& prim = *step.primitive;
        const int begin = row;
        const double speed = prim.forward_speed * step.amplitude_scale +
                             (step.carry_locomotion ? carried_speed : 0.0);
        for (int rep = 0; rep < step.repeats; ++rep) {
            const int n = step.frames;
            const double heading0 = heading;
            std::vector<Vec3> last_delta(static_cast<std::size_t>(joints), Vec3{0, 0, 0});
            for (int i = 0; i < n; ++i, ++row) {
                const double u = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
                if (i > 0) {
                    heading = heading0 + prim.yaw_change * u;
                    root_x += speed * std::cos(heading);
                    root_z -= speed * std::sin(heading);
                }
                const double c = std::cos(heading), s = std::sin(heading);
                for (int j = 0; j < joints; ++j) {
                    Vec3 d{0, 0, 0};
                    for (const auto& comp : prim.components) {
                        const double r = rule_value(comp.rule, u, comp.cycles,
                                                    comp.phase[static_cast<std::size_t>(j)]);
                        for (int a = 0; a < 3; ++a)
                            d[static_cast<std::size_t>(a)] +=
                                step.amplitude_scale * comp.amplitude[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)] * r;
                    }
                    last_delta[static_cast<std::size_t>(j)] = d;
                    const Vec3& b = base[static_cast<std::size_t>(j)];
                    const double bx = b[0] + d[0], by = b[1] + d[1], bz = b[2] + d[2];
                    // Heading rotates about the vertical axis.
                    out.clip.frames(row, 3 * j + 0) = root_x + c * bx + s * bz;
                    out.clip.frames(row, 3 * j + 1) = by;
                    out.clip.frames(row, 3 * j + 2) = root_z - s * bx + c * bz;
                }
            }
            // Residual offsets (round-off of periodic rules) carry into the next segment.
            for (int j = 0; j < joints; ++j)
                for (int a = 0; a < 3; ++a)
                    base[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)] +=
                        last_delta[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)];
        }
        out.segment_spans.push_back(Span{begin, row});
        carried_speed = speed;
    }
    // Boundary frames: first frame of a segment equals the last frame of the previous one.
    for (std::size_t k = 1; k < out.segment_spans.size(); ++k) {
        const int b = out.segment_spans[k].begin;
        out.clip.frames.row(b) = out.clip.frames.row(b - 1);
    }
    return out;
}

double max_joint_step(const MotionClip& clip) {
    double m = 0.0;
    for (int f = 1; f < clip.frame_count(); ++f)
        for (int j = 0; j < clip.joints; ++j) {
            const auto d = clip.frames.block(f, 3 * j, 1, 3) - clip.frames.block(f - 1, 3 * j, 1, 3);
            m = std::max(m, d.norm());
        }
    return m;
}

TextDescription tokenize(const std::string& surface, const Vocabulary& vocab) {
    TextDescription t;
    t.surface = surface;
    t.tokens.push_back(Vocabulary::kStartId);
    std::istringstream in(surface);
    std::string w;
    while (in >> w) t.tokens.push_back(vocab.id(w));
    if (t.tokens.size() < 2) throw TokenizationError("empty description");
    t.spans.assign(t.tokens.size(), Span{});
    return t;
}

std::string detokenize(const std::vector<int>& tokens, const Vocabulary& vocab) {
    std::string s;
    for (std::size_t i = 1; i < tokens.size(); ++i) {
        if (i > 1) s += ' ';
        s += vocab.word(tokens[i]);
    }
    return s;
}

Split split_for_id(int sample_id) {
    const auto h = splitmix64(static_cast<std::uint64_t>(sample_id) ^ 0x5eedULL) % 100;
    if (h < 80) return Split::train;
    if (h < 95) return Split::val;
    return Split::test;
}

DatasetSample generate_sample(const GeneratorConfig& cfg, int sample_id) {
    const auto& vocab = cfg.vocab;
    Rng rng = substream(cfg.seed, "data", static_cast<std::uint64_t>(sample_id));
    const int P = vocab.primitive_count();
    const int modifier_base = 1 + P + vocab.connective_count();
    const int then_id = vocab.id("then");
    const auto while_id = vocab.find("while");

    for (int attempt = 0; attempt < 64; ++attempt) {
        const int n_prims = uniform_int(rng, 1, cfg.max_primitives);
        std::vector<int> order(static_cast<std::size_t>(P));
        for (int i = 0; i < P; ++i) order[static_cast<std::size_t>(i)] = i;
        for (int i = 0; i < n_prims; ++i) std::swap(order[static_cast<std::size_t>(i)],
                                                    order[static_cast<std::size_t>(uniform_int(rng, i, P - 1))]);

        std::vector<ProgramStep> steps;
        std::vector<int> tokens{Vocabulary::kStartId};
        std::vector<int> prim_token_pos;
        for (int k = 0; k < n_prims; ++k) {
            ProgramStep st;
            st.primitive = &vocab.primitives()[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
            if (k > 0) {
                const bool use_while = while_id && uniform01(rng) < cfg.while_prob;
                tokens.push_back(use_while ? *while_id : then_id);
                st.carry_locomotion = use_while;
            }
            st.frames = uniform_int(rng, st.primitive->min_frames, st.primitive->max_frames);
            st.amplitude_scale = 0.85 + 0.3 * uniform01(rng);
            if (vocab.modifier_count() > 0 && uniform01(rng) < cfg.modifier_prob) {
                const int m = modifier_base + uniform_int(rng, 0, vocab.modifier_count() - 1);
                tokens.push_back(m);
                const std::string& w = vocab.word(m);
                if (w == "slowly") st.frames = static_cast<int>(std::lround(st.frames * 1.6));
                else if (w == "quickly") st.frames = std::max(4, static_cast<int>(std::lround(st.frames * 0.7)));
                else if (w == "twice") st.repeats = 2;
                else if (w == "softly") st.amplitude_scale *= 0.5;
            }
            prim_token_pos.push_back(static_cast<int>(tokens.size()));
            tokens.push_back(vocab.token_for_primitive(st.primitive->id));
            steps.push_back(st);
        }
        int total = 0;
        for (const auto& s : steps) total += s.frames * s.repeats;
        if (total < kMinFrames || total > kMaxFrames) continue;

        auto rendered = render_program(steps, cfg.joints, rng);
        if (max_joint_step(rendered.clip) >= cfg.velocity_cap) continue;

        DatasetSample out;
        out.sample_id = sample_id;
        out.split = split_for_id(sample_id);
        out.clip = std::move(rendered.clip);
        out.text.tokens = tokens;
        out.text.surface = detokenize(tokens, vocab);
        out.text.spans.assign(tokens.size(), Span{});
        for (std::size_t k = 0; k < steps.size(); ++k)
            out.text.spans[static_cast<std::size_t>(prim_token_pos[k])] = rendered.segment_spans[k];
        return out;
    }
    throw GenerationError("could not draw a valid program for sample " + std::to_string(sample_id));
}

std::vector<DatasetSample> generate_dataset(const GeneratorConfig& cfg) {
    validate(cfg);
    std::vector<DatasetSample> out;
    out.reserve(static_cast<std::size_t>(cfg.n_samples));
    for (int i = 0; i < cfg.n_samples; ++i) out.push_back(generate_sample(cfg, i));
    return out;
}

std::vector<int> content_positions(const TextDescription& text, const Vocabulary& vocab) {
    std::vector<int> pos;
    for (int i = 0; i < text.size(); ++i)
        if (vocab.is_content(text.tokens[static_cast<std::size_t>(i)])) pos.push_back(i);
    return pos;
}

}  // namespace mlagen::synth
