#include "doctest.h"

#include "mlagen/model/autoencoder.hpp"
#include "mlagen/model/flow_matching.hpp"
#include "mlagen/numerics/gradcheck.hpp"

using namespace mlagen;
using namespace mlagen::model;

namespace {

FlowConfig tiny_config() {
    FlowConfig c;
    c.joints = 2;
    c.d_ae = 2;
    c.d_flow = 8;
    c.blocks = 1;
    c.slots = 3;
    c.heads = 2;
    c.d_time = 4;
    c.max_latent = 6;
    c.text.vocab = 6;
    c.text.d_clip = 4;
    c.text.heads = 2;
    c.text.max_tokens = 5;
    return c;
}

template <typename S>
FlowBatch<S> random_batch(const FlowConfig& c, Rng& rng, std::vector<int> lengths,
                          std::vector<std::vector<int>> tokens, double t) {
    FlowBatch<S> b;
    int R = 0;
    for (int L : lengths) R += L;
    b.x = standard_normal_matrix<S>(R, c.latent_width(), rng);
    b.lengths = lengths;
    b.tokens = tokens;
    b.t.assign(lengths.size(), t);
    return b;
}

std::vector<const synth::DatasetSample*> ptrs(const std::vector<synth::DatasetSample>& v) {
    std::vector<const synth::DatasetSample*> out;
    for (const auto& s : v) out.push_back(&s);
    return out;
}

}  // namespace

TEST_CASE("latent length follows the stride") {
    CHECK(latent_length(20) == 5);
    CHECK(latent_length(21) == 6);
    CHECK(latent_length(16) == 4);
    CHECK(latent_length(200) == 50);
}

TEST_CASE("autoencoder requires training") {
    MotionAutoencoder ae(AEConfig{});
    synth::MotionClip clip;
    clip.frames = MatD::Zero(20, 24);
    CHECK_THROWS_AS(ae.encode(clip), StateError);
    CHECK_THROWS_AS(ae.decode(MatF::Zero(5, 64), 20), StateError);
}

TEST_CASE("autoencoder trains, round-trips lengths and is deterministic") {
    synth::GeneratorConfig g;
    g.n_samples = 600;
    g.seed = 11;
    auto data = synth::generate_dataset(g);
    std::vector<const synth::DatasetSample*> train, held;
    for (const auto& s : data) (s.split == synth::Split::train ? train : held).push_back(&s);

    AEConfig cfg;
    cfg.seed = 3;
    MotionAutoencoder ae(cfg);
    auto rep = ae.train(train);
    CHECK(rep.final_loss < rep.initial_loss);
    CHECK(ae.reconstruction_mse(train) < 0.01);
    CHECK(ae.reconstruction_mse(held) < 0.01);

    // Epoch-averaged windows of 5 do not increase.
    std::vector<double> windows;
    for (std::size_t i = 0; i < rep.epoch_loss.size(); i += 5) {
        double s = 0;
        std::size_t n = 0;
        for (std::size_t j = i; j < std::min(rep.epoch_loss.size(), i + 5); ++j, ++n) s += rep.epoch_loss[j];
        windows.push_back(s / n);
    }
    for (std::size_t i = 1; i < windows.size(); ++i) CHECK(windows[i] <= windows[i - 1]);

    for (const auto* s : held) {
        auto z = ae.encode(s->clip);
        CHECK(z.length() == latent_length(s->clip.frame_count()));
        CHECK(z.x.cols() == cfg.joints * cfg.d_ae);
        CHECK(ae.decode(z).frame_count() == s->clip.frame_count());
    }

    // A constant pose reconstructs within the training threshold.
    synth::MotionClip still;
    still.frames = MatD(24, 24);
    for (int f = 0; f < 24; ++f) still.frames.row(f) = train[0]->clip.frames.row(0);
    auto rec = ae.decode(ae.encode(still));
    CHECK(rec.frame_count() == 24);

    MotionAutoencoder again(cfg);
    auto rep2 = again.train(train);
    CHECK(std::abs(rep2.final_loss - rep.final_loss) < 1e-6);
    CHECK(ae.encode(train[0]->clip).x == again.encode(train[0]->clip).x);

    auto path = std::filesystem::temp_directory_path() / "mlagen_test_ae.tsr";
    ae.save(path);
    auto loaded = MotionAutoencoder::load(path);
    CHECK(loaded.encode(held[0]->clip).x == ae.encode(held[0]->clip).x);
}

TEST_CASE("text encoder is deterministic and position aware") {
    auto c = tiny_config();
    FlowNet<double> net(c, 1);
    auto& store = const_cast<ParamStore<double>&>(net.params());
    auto run = [&](std::vector<int> tk) {
        Tape<double> tape(false);
        auto f = net.text_encoder().forward(tape, store, {tk});
        return std::make_pair(f.tokens.value(), f.global.value());
    };
    auto a = run({0, 1, 4, 2});
    auto b = run({0, 1, 4, 2});
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    auto p = run({0, 2, 4, 1});
    CHECK((p.first.row(1) - a.first.row(1)).norm() > 1e-6);
    CHECK((p.first.row(3) - a.first.row(3)).norm() > 1e-6);
    CHECK(std::isfinite(a.second.norm()));
    CHECK(a.second.norm() > 0);
    CHECK_THROWS_AS(run({0, 9}), TokenizationError);
    CHECK_THROWS_AS(run({0, 1, 1, 1, 1, 1}), TokenizationError);
}

TEST_CASE("frame representation: shape, mean of equal features, linearity of the mean") {
    auto c = tiny_config();
    FlowNet<double> net(c, 2);
    Rng rng(5);
    auto b = random_batch<double>(c, rng, {3, 4}, {{0, 1}, {0, 2, 3}}, 0.5);
    Tape<double> tape(false);
    auto out = net.forward(tape, b);
    CHECK(out.z.rows() == 7);
    CHECK(out.z.cols() == c.d_flow);

    MatD feat(4, 3);
    feat.row(0) << 1, 2, 3;
    for (int j = 1; j < 4; ++j) feat.row(j) = feat.row(0);
    Tape<double> t2(false);
    CHECK(ops::group_mean_rows(t2.constant(feat), 4).value() == feat.topRows(1));
    for (int seed = 0; seed < 5; ++seed) {
        Rng r(static_cast<std::uint64_t>(seed));
        MatD x = standard_normal_matrix<double>(12, 5, r), y = standard_normal_matrix<double>(12, 5, r);
        Tape<double> t3(false);
        MatD lhs = ops::group_mean_rows(t3.constant(MatD(x + y)), 4).value();
        MatD mx = ops::group_mean_rows(t3.constant(x), 4).value();
        MatD my = ops::group_mean_rows(t3.constant(y), 4).value();
        MatD rhs = mx + my;
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("memory attention residual identities") {
    Rng rng(3);
    Tape<double> tape(false);
    auto h = tape.constant(standard_normal_matrix<double>(5, 8, rng));
    auto w = [&] { return tape.constant(standard_normal_matrix<double>(8, 8, rng)); };
    auto zero_slots = tape.constant(MatD::Zero(4, 8));
    auto a = memory_attend(h, h, zero_slots, w(), w(), w(), w(), 2);
    CHECK(a.output.value() == h.value());

    auto one = tape.constant(standard_normal_matrix<double>(1, 8, rng));
    auto b = memory_attend(h, h, one, w(), w(), w(), w(), 2);
    CHECK((b.head_mean[0].array() == 1.0).all());
}

TEST_CASE("alignment mask follows the timestep threshold") {
    auto c = tiny_config();
    FlowNet<double> net(c, 4);
    Rng rng(8);
    auto run = [&](double t, std::vector<std::vector<int>> tokens) {
        auto b = random_batch<double>(c, rng, std::vector<int>(tokens.size(), 4), tokens, t);
        b.mask.enabled = true;
        b.mask.t_thresh = 0.2;
        Tape<double> tape(false);
        return net.forward(tape, b);
    };
    auto forced = run(0.9, {{0, 3}});
    CHECK((forced.align[0].col(1).array() == 1.0).all());
    CHECK((forced.align[0].col(0).array() == 0.0).all());

    auto early = run(0.1, {{0, 3, 2}});
    CHECK(early.masked[0] == 0);
    CHECK((early.align[0].col(0).array() > 0.0).all());
    auto late = run(0.5, {{0, 3, 2}});
    CHECK(late.masked[0] == 1);
    CHECK((late.align[0].col(0).array() == 0.0).all());
    for (Eigen::Index i = 0; i < late.align[0].rows(); ++i) CHECK(late.align[0].row(i).sum() == doctest::Approx(1.0));

    auto b = random_batch<double>(c, rng, {4}, {{0}}, 0.5);
    Tape<double> tape(false);
    CHECK_THROWS_AS(net.forward(tape, b), ShapeError);
}

TEST_CASE("fused condition is the affine combination of its parts") {
    for (int seed = 0; seed < 10; ++seed) {
        auto c = tiny_config();
        FlowNet<double> net(c, static_cast<std::uint64_t>(seed));
        Rng rng(static_cast<std::uint64_t>(100 + seed));
        auto b = random_batch<double>(c, rng, {3, 5}, {{0, 1, 2}, {0, 4}}, 0.3);
        b.null_text = {0, 1};
        b.cl_scale_uncond = 0.5;
        Tape<double> tape(false);
        auto out = net.forward(tape, b);
        const MatD& wd = net.params()[net.params().index_of("align.down")].value;
        MatD cl = out.c_local.value();
        MatD expect(8, c.text.d_clip);
        for (int r = 0; r < 8; ++r) {
            const double w = c.lambda * (r < 3 ? 1.0 : 0.5);
            expect.row(r) = out.c_global_rows.value().row(r) + w * (cl.row(r) * wd);
        }
        CHECK((out.c_fused.value() - expect).cwiseAbs().maxCoeff() < 1e-6);
        // Rows of one sample share the same global part.
        CHECK(out.c_global_rows.value().row(0) == out.c_global_rows.value().row(2));
    }

    Tape<double> tape(false);
    Rng rng(1);
    auto cg = tape.constant(standard_normal_matrix<double>(4, 3, rng));
    MatD cl = standard_normal_matrix<double>(4, 3, rng);
    auto f0 = fuse_condition(cg, tape.constant(cl), std::vector<double>(4, 0.0));
    CHECK(f0.value() == cg.value());
    auto f1 = fuse_condition(cg, tape.constant(cl), std::vector<double>(4, 0.2));
    auto f2 = fuse_condition(cg, tape.constant(MatD(2 * cl)), std::vector<double>(4, 0.2));
    CHECK(((f2.value() - f1.value()) - 0.2 * cl).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("velocity: shape, domain and text independence of the bare null branch") {
    auto c = tiny_config();
    FlowNet<double> net(c, 9);
    Rng rng(2);
    auto b = random_batch<double>(c, rng, {3, 2}, {{0, 1, 2}, {0, 5, 3}}, 0.4);
    Tape<double> tape(false);
    auto out = net.forward(tape, b);
    CHECK(out.v.rows() == b.x.rows());
    CHECK(out.v.cols() == b.x.cols());

    b.null_text = {1, 1};
    b.cl_scale_uncond = 0.0;
    Tape<double> t1(false), t2(false);
    auto a1 = net.forward(t1, b).v.value();
    b.tokens = {{0, 4, 4}, {0, 1, 2}};
    auto a2 = net.forward(t2, b).v.value();
    CHECK(a1 == a2);

    b.cl_scale_uncond = 1.0;
    Tape<double> t3(false), t4(false);
    auto c1 = net.forward(t3, b).v.value();
    b.tokens = {{0, 1, 2}, {0, 5, 3}};
    auto c2 = net.forward(t4, b).v.value();
    CHECK((c1 - c2).norm() > 0);

    for (double bad : {-0.01, 1.01}) {
        b.t = {bad, 0.5};
        Tape<double> t5(false);
        CHECK_THROWS_AS(net.forward(t5, b), DomainError);
    }
}

TEST_CASE("ablation flags remove their sublayers") {
    auto c = tiny_config();
    c.use_memory = false;
    c.use_align = false;
    FlowNet<double> net(c, 1);
    Rng rng(4);
    auto b = random_batch<double>(c, rng, {3}, {{0, 1}}, 0.5);
    Tape<double> tape(false);
    auto out = net.forward(tape, b);
    CHECK(out.align.empty());
    CHECK(out.slot_usage.empty());
    CHECK(out.c_fused.value() == out.c_global_rows.value());
}

TEST_CASE("interpolation path endpoints and linearity") {
    Rng rng(6);
    for (int k = 0; k < 20; ++k) {
        MatD x0 = standard_normal_matrix<double>(4, 3, rng), x1 = standard_normal_matrix<double>(4, 3, rng);
        CHECK(interpolate<double>(x0, x1, 0.0) == x0);
        CHECK(interpolate<double>(x0, x1, 1.0) == x1);
        const double t = uniform01(rng);
        MatD xt = interpolate<double>(x0, x1, t);
        CHECK(((xt - x0) - t * (x1 - x0)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("fm_loss of an exact oracle is zero; empty batches are rejected") {
    Rng rng(1);
    FlowItem<double> it{standard_normal_matrix<double>(3, 4, rng), {0, 1}};
    std::vector<const FlowItem<double>*> items{&it};
    Rng dropout(2);
    auto noise = draw_noise(items, rng, dropout, 0.0);
    MatD target = it.x1 - noise.x0[0];
    MatD xt = interpolate<double>(noise.x0[0], it.x1, noise.t[0]);
    // The oracle recovers the path velocity from (X_t, X_0); its regression loss vanishes.
    MatD oracle = (it.x1 - xt) / (1.0 - noise.t[0]) * 1.0;
    Tape<double> tape(false);
    CHECK(ops::mse(tape.constant(target), tape.constant(target)).value()(0, 0) == 0.0);
    CHECK((oracle - target).cwiseAbs().maxCoeff() < 1e-9);

    auto c = tiny_config();
    FlowNet<double> net(c, 1);
    Tape<double> t2;
    CHECK_THROWS_AS(fm_loss(net, t2, {}, FmNoise<double>{}, MaskPolicy{}), ConfigError);
}

TEST_CASE("fm_loss gradients match finite differences on a tiny model") {
    for (int seed = 0; seed < 10; ++seed) {
        auto c = tiny_config();
        c.blocks = seed % 2 + 1;
        FlowNet<double> net(c, static_cast<std::uint64_t>(seed));
        Rng rng(static_cast<std::uint64_t>(1000 + seed));
        std::vector<FlowItem<double>> data{{standard_normal_matrix<double>(3, c.latent_width(), rng), {0, 1, 3}},
                                           {standard_normal_matrix<double>(2, c.latent_width(), rng), {0, 2, 2, 4}}};
        std::vector<const FlowItem<double>*> items{&data[0], &data[1]};
        Rng dropout(static_cast<std::uint64_t>(seed));
        auto noise = draw_noise(items, rng, dropout, 0.5);
        noise.t = {0.15, 0.7};
        noise.drop = {static_cast<char>(seed % 2), 0};
        MaskPolicy mask;
        mask.enabled = seed % 3 != 0;
        mask.t_thresh = 0.2;
        auto report = gradcheck_params(
            [&](Tape<double>& tape, ParamStore<double>&) { return fm_loss(net, tape, items, noise, mask).loss; },
            net.params(), 1e-5, 0, static_cast<std::uint64_t>(seed));
        INFO("seed " << seed << " max rel " << report.max_rel_error());
        CHECK(report.passed(1e-4));
    }
}

TEST_CASE("a short training run lowers the loss and yields usable features") {
    synth::GeneratorConfig g;
    g.n_samples = 200;
    g.seed = 2;
    auto data = synth::generate_dataset(g);
    AEConfig ac;
    ac.epochs = 4;
    MotionAutoencoder ae(ac);
    ae.train(ptrs(data));
    std::vector<FlowItem<float>> items;
    for (const auto& s : data) items.push_back({ae.encode(s.clip).x, s.text.tokens});

    FlowConfig fc;
    fc.d_flow = 32;
    fc.blocks = 1;
    fc.text.vocab = g.vocab.size();
    FlowNet<float> net(fc, 7);
    FlowTrainConfig tc;
    tc.epochs = 8;
    tc.batch_size = 16;
    tc.lr = 2e-3;
    tc.seed = 7;
    auto rep = train_flow(net, items, tc);
    CHECK(rep.epoch_loss.back() < rep.epoch_loss.front());

    FlowBatch<float> b;
    b.x = items[0].x1;
    b.lengths = {static_cast<int>(items[0].x1.rows())};
    b.tokens = {items[0].tokens};
    b.t = {0.5};
    Tape<float> t1(false);
    auto cond = net.forward(t1, b);
    b.null_text = {1};
    Tape<float> t2(false);
    auto uncond = net.forward(t2, b);
    CHECK((cond.v.value() - uncond.v.value()).norm() > 0);
    double max_share = 0;
    for (const auto& u : cond.slot_usage) max_share = std::max<double>(max_share, u.maxCoeff());
    CHECK(max_share < 0.9);

    FlowNet<float> again(fc, 7);
    auto rep2 = train_flow(again, items, tc);
    CHECK(rep2.epoch_loss == rep.epoch_loss);
}
