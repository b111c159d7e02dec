#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <numeric>

#include "mlagen/eval/protocol.hpp"
#include "mlagen/model/flow_matching.hpp"

using namespace mlagen;
using namespace mlagen::eval;

namespace {

MatD gaussian(Eigen::Index n, Eigen::Index d, Rng& rng, double shift = 0.0) {
    MatD x(n, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = standard_normal(rng) + shift;
    return x;
}

std::vector<const synth::DatasetSample*> split_of(const std::vector<synth::DatasetSample>& v, synth::Split sp) {
    std::vector<const synth::DatasetSample*> out;
    for (const auto& s : v)
        if (s.split == sp) out.push_back(&s);
    return out;
}

const std::vector<synth::DatasetSample>& corpus() {
    static const auto data = [] {
        synth::GeneratorConfig cfg;
        cfg.n_samples = 2000;
        cfg.seed = 11;
        return synth::generate_dataset(cfg);
    }();
    return data;
}

}  // namespace

TEST_CASE("fid of identical sets is zero and fid is symmetric") {
    Rng rng(1);
    MatD a = gaussian(400, 8, rng);
    MatD b = gaussian(400, 8, rng, 0.3);
    CHECK(std::abs(fid(a, a)) <= 1e-6);
    CHECK(fid(a, b) == doctest::Approx(fid(b, a)).epsilon(1e-9));
    CHECK(fid(a, b) > 0);
}

TEST_CASE("fid of shifted isotropic gaussians matches the squared mean gap") {
    Rng rng(2);
    const int d = 32;
    RowVec<double> m(d);
    for (int i = 0; i < d; ++i) m(i) = standard_normal(rng);
    m *= 2.0 / m.norm();  // |m|^2 = 4
    MatD a = gaussian(10000, d, rng);
    MatD b = gaussian(10000, d, rng);
    b.rowwise() += m;
    const double f = fid(a, b);
    CHECK(std::abs(f - 4.0) <= 0.05 * 4.0);
}

TEST_CASE("fid rejects bad inputs") {
    Rng rng(3);
    MatD a = gaussian(40, 8, rng);
    MatD bad = a;
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(fid(a, bad), DataError);
    CHECK_THROWS_AS(fid(a.topRows(8), a), ProtocolError);
    CHECK_THROWS_AS(fid(a, MatD(a.leftCols(4))), ShapeError);
}

TEST_CASE("r_precision on coincident and random features") {
    Rng rng(4);
    MatD f = gaussian(64, 16, rng);
    auto r = r_precision(f, f);
    CHECK(r.top1 == 1.0);
    CHECK(r.top3 == 1.0);
    CHECK(matching(f, f) == 0.0);

    MatD m = gaussian(32 * 400, 16, rng);
    MatD t = gaussian(32 * 400, 16, rng);
    auto c = r_precision(m, t);
    CHECK(std::abs(c.top1 - 1.0 / 32) <= 0.03);
    CHECK(std::abs(c.top2 - 2.0 / 32) <= 0.03);
    CHECK(std::abs(c.top3 - 3.0 / 32) <= 0.03);
    CHECK(c.top1 <= c.top2);
    CHECK(c.top2 <= c.top3);
    CHECK_THROWS_AS(r_precision(MatD(m.topRows(31)), MatD(t.topRows(31))), ProtocolError);
}

TEST_CASE("r_precision is monotone in k for arbitrary features") {
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng(static_cast<std::uint64_t>(100 + seed));
        MatD t = gaussian(96, 4, rng);
        MatD m = t + 0.8 * gaussian(96, 4, rng);
        auto r = r_precision(m, t);
        CHECK(r.top1 <= r.top2);
        CHECK(r.top2 <= r.top3);
        CHECK(r.top1 >= 0.0);
        CHECK(r.top3 <= 1.0);
    }
}

TEST_CASE("matching decreases along an interpolation towards the true pairs") {
    Rng rng(5);
    MatD t = gaussian(64, 8, rng);
    MatD noise = gaussian(64, 8, rng);
    double prev = 1e300;
    for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const double m = matching((1 - a) * noise + a * t, t);
        CHECK(m < prev);
        prev = m;
    }
    CHECK(prev == 0.0);
}

TEST_CASE("clip_score and mmodality") {
    Rng rng(6);
    MatD f = gaussian(50, 8, rng);
    CHECK(clip_score(f, f) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(clip_score(f, -f) == doctest::Approx(-1.0).epsilon(1e-12));
    MatD g = gaussian(50, 8, rng);
    const double s = clip_score(f, g);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    CHECK(mmodality(f, f) == 0.0);

    // Shuffling which text a pair belongs to does not change the mean.
    std::vector<int> perm(50);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    MatD fp(50, 8), gp(50, 8);
    for (int i = 0; i < 50; ++i) {
        fp.row(i) = f.row(perm[static_cast<std::size_t>(i)]);
        gp.row(i) = g.row(perm[static_cast<std::size_t>(i)]);
    }
    CHECK(mmodality(fp, gp) == doctest::Approx(mmodality(f, g)).epsilon(1e-12));
}

TEST_CASE("alignment accuracy: forced, chance, and rescaling invariance") {
    const auto& v = synth::default_vocabulary();
    const auto& data = corpus();
    std::vector<const synth::DatasetSample*> single, multi;
    for (const auto& s : data) (synth::content_positions(s.text, v).size() == 1 ? single : multi).push_back(&s);
    REQUIRE(!single.empty());
    REQUIRE(multi.size() > 100);

    Rng rng(7);
    auto random_records = [&](const std::vector<const synth::DatasetSample*>& set) {
        std::vector<MatD> out;
        for (const auto* s : set) {
            MatD a(model::latent_length(s->clip.frame_count()), s->text.size());
            for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = uniform01(rng);
            for (Eigen::Index r = 0; r < a.rows(); ++r) a.row(r) /= a.row(r).sum();
            out.push_back(a);
        }
        return out;
    };
    auto rs = random_records(single);
    CHECK(alignment_accuracy(rs, single, v).accuracy == 1.0);

    auto rm = random_records(multi);
    const auto score = alignment_accuracy(rm, multi, v);
    CHECK(std::abs(score.accuracy - score.chance) < 0.03);
    CHECK(score.chance < 0.55);

    std::vector<MatD> scaled = rm;
    for (auto& a : scaled) a *= 3.7;
    CHECK(alignment_accuracy(scaled, multi, v).accuracy == score.accuracy);

    // An oracle map that puts all mass on the covering token scores 1 except
    // where a 4-frame window straddles a boundary.
    std::vector<MatD> oracle;
    for (const auto* s : multi) {
        MatD a = MatD::Zero(model::latent_length(s->clip.frame_count()), s->text.size());
        for (int i = 0; i < s->text.size(); ++i) {
            const auto& sp = s->text.spans[static_cast<std::size_t>(i)];
            for (int f = sp.begin; f < sp.end; ++f) a(f / model::kStride, i) += 1.0;
        }
        oracle.push_back(a);
    }
    CHECK(alignment_accuracy(oracle, multi, v).accuracy > 0.9);

    auto broken = *multi[0];
    broken.text.spans.clear();
    std::vector<const synth::DatasetSample*> one{&broken};
    std::vector<MatD> rec{rm[0]};
    CHECK_THROWS_AS(alignment_accuracy(rec, one, v), DataError);
}

TEST_CASE("mean and 95% interval") {
    auto s = mean_ci({1.0, 2.0, 3.0, 4.0});
    CHECK(s.mean == doctest::Approx(2.5));
    CHECK(s.ci95 == doctest::Approx(1.96 * std::sqrt(1.25) / 2.0));
    auto z = mean_ci({5.0});
    CHECK(z.mean == 5.0);
    CHECK(z.ci95 == 0.0);
}

TEST_CASE("report csv has the fixed column order and aggregate rows") {
    MetricReport r;
    r.variant = "v";
    for (int i = 0; i < 3; ++i) {
        MetricRow row;
        row.fid = i;
        r.repetitions.push_back(row);
    }
    const auto csv = report_csv({r});
    CHECK(csv.rfind("variant,repetition,fid,top1,top2,top3,matching,mmodality,clip_score,alignment_accuracy,"
                    "alignment_chance,sinkratio\n",
                    0) == 0);
    CHECK(csv.find("\nv,mean,1,") != std::string::npos);
    CHECK(csv.find("\nv,ci95,") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}

TEST_CASE("evaluator: chance before training, gate after, deterministic, persistent") {
    const auto& data = corpus();
    const auto train = split_of(data, synth::Split::train);
    const auto val = split_of(data, synth::Split::val);
    EvaluatorConfig cfg;
    cfg.seed = 3;
    Evaluator ev(cfg);
    CHECK(!ev.gate_passed());
    CHECK_THROWS_AS(ev.require_gate(), EvaluatorQualityError);
    const double before = ev.retrieval_top1(val);
    CHECK(before < 0.2);

    auto rep = ev.train(train, val);
    CHECK(rep.untrained_top1 < 0.2);
    CHECK(rep.val_top1 >= 0.5);
    CHECK(ev.gate_passed());
    CHECK(rep.epoch_loss.back() < rep.epoch_loss.front());

    std::vector<const synth::MotionClip*> clips;
    std::vector<std::vector<int>> toks;
    for (const auto* s : val) {
        clips.push_back(&s->clip);
        toks.push_back(s->text.tokens);
    }
    const MatD mf = ev.motion_features(clips);
    CHECK((mf.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-5);

    const auto path = std::filesystem::temp_directory_path() / "mlagen_test_evaluator.tsr";
    ev.save(path);
    auto back = Evaluator::load(path);
    CHECK(back.gate_passed());
    CHECK(back.motion_features(clips) == mf);
    CHECK(back.text_features(toks) == ev.text_features(toks));
    std::filesystem::remove(path);
}

TEST_CASE("evaluator retraining is deterministic and the gate refuses weak evaluators") {
    const auto& data = corpus();
    const auto train = split_of(data, synth::Split::train);
    const auto val = split_of(data, synth::Split::val);
    EvaluatorConfig cfg;
    cfg.epochs = 1;
    cfg.lr = 1e-6;
    cfg.seed = 5;
    Evaluator a(cfg), b(cfg);
    CHECK_THROWS_AS(a.train(train, val), EvaluatorQualityError);
    CHECK_THROWS_AS(b.train(train, val), EvaluatorQualityError);
    CHECK(!a.gate_passed());
    for (std::size_t i = 0; i < a.params().size(); ++i) CHECK(a.params()[i].value == b.params()[i].value);
    CHECK(a.val_top1() == b.val_top1());
}

TEST_CASE("a seed-pinned generator has zero mmodality") {
    const auto& data = corpus();
    auto prompts = split_of(data, synth::Split::test);
    prompts.resize(6);
    model::AEConfig ac;
    ac.epochs = 1;
    model::MotionAutoencoder ae(ac);
    ae.train(prompts);
    model::FlowConfig fc;
    fc.d_flow = 16;
    fc.blocks = 1;
    fc.slots = 4;
    fc.heads = 2;
    fc.text.d_clip = 8;
    fc.text.heads = 2;
    model::FlowNet<float> net(fc, 1);
    sampler::SamplerConfig sc;
    sc.steps = 4;
    auto a = generate(net, ae, prompts, sc, 42);
    auto b = generate(net, ae, prompts, sc, 42);
    EvaluatorConfig ec;
    Evaluator ev(ec);
    const MatD fa = ev.motion_features(a.clips), fb = ev.motion_features(b.clips);
    CHECK(mmodality(fa, fb) == 0.0);
    auto c = generate(net, ae, prompts, sc, 43);
    CHECK(mmodality(fa, ev.motion_features(c.clips)) > 0.0);
    REQUIRE(a.clips.size() == prompts.size());
    for (std::size_t i = 0; i < prompts.size(); ++i)
        CHECK(a.clips[i].frame_count() == prompts[i]->clip.frame_count());
    CHECK(a.final_align.size() == prompts.size());
    CHECK(a.trace.summarize().size() == 4);
}

TEST_CASE("evaluate_model refuses an ungated evaluator and small test sets") {
    const auto& data = corpus();
    auto prompts = split_of(data, synth::Split::test);
    model::MotionAutoencoder ae(model::AEConfig{});
    model::FlowNet<float> net(model::FlowConfig{}, 1);
    Evaluator ev{EvaluatorConfig{}};
    CHECK_THROWS_AS(evaluate_model(net, ae, ev, prompts, synth::default_vocabulary(), sampler::SamplerConfig{},
                                   EvalProtocol{}, "x"),
                    EvaluatorQualityError);
    EvalProtocol bad;
    bad.repetitions = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
