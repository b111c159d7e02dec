// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance --cli <path to mlagen> [--work <dir>] [--only 1,2,...]

#include <sys/resource.h>
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "../common/op_cases.hpp"
#include "mlagen/eval/protocol.hpp"
#include "mlagen/io/corpus_io.hpp"
#include "mlagen/model/flow_matching.hpp"
#include "mlagen/pipeline/commands.hpp"
#include "mlagen/sampler/sampler.hpp"
#include "mlagen/sink/sink.hpp"

using namespace mlagen;
using pipeline::json;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

double child_cpu_seconds() {
    rusage u{};
    getrusage(RUSAGE_CHILDREN, &u);
    return static_cast<double>(u.ru_utime.tv_sec + u.ru_stime.tv_sec) +
           1e-6 * static_cast<double>(u.ru_utime.tv_usec + u.ru_stime.tv_usec);
}

std::string num(double v, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

void progress(const std::string& s) { std::cerr << "  .. " << s << std::endl; }

// ---------------------------------------------------------------------------
// 1. Gradient correctness

model::FlowConfig tiny_flow_config() {
    model::FlowConfig c;
    c.joints = 2;
    c.d_ae = 2;
    c.d_flow = 8;
    c.blocks = 1;
    c.slots = 3;
    c.heads = 2;
    c.d_time = 4;
    c.max_latent = 8;
    c.text.vocab = 6;
    c.text.d_clip = 4;
    c.text.heads = 2;
    c.text.max_tokens = 5;
    return c;
}

Verdict criterion_gradients() {
    const double t0 = cpu_seconds();
    double worst_op = 0, worst_loss = 0;
    std::string worst_name;
    int checks = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(7000 + seed);
        for (auto& c : testing::op_cases(rng)) {
            const auto rep = gradcheck_inputs(c.f, std::move(c.inputs), 1e-5, 0, seed);
            if (rep.max_rel_error() > worst_op) {
                worst_op = rep.max_rel_error();
                worst_name = c.name;
            }
            ++checks;
        }
        auto cfg = tiny_flow_config();
        cfg.blocks = static_cast<int>(seed % 2) + 1;
        model::FlowNet<double> net(cfg, 500 + seed);
        Rng data_rng(900 + seed);
        std::vector<model::FlowItem<double>> data{
            {model::standard_normal_matrix<double>(3, cfg.latent_width(), data_rng), {0, 1, 3}},
            {model::standard_normal_matrix<double>(2, cfg.latent_width(), data_rng), {0, 2, 2, 4}}};
        std::vector<const model::FlowItem<double>*> items{&data[0], &data[1]};
        Rng dropout(seed);
        auto noise = model::draw_noise(items, data_rng, dropout, 0.5);
        noise.t = {0.1 + 0.05 * static_cast<double>(seed), 0.75};
        noise.drop = {static_cast<char>(seed % 2), 0};
        model::MaskPolicy mask;
        mask.enabled = seed % 3 != 0;
        mask.t_thresh = sink::kStrongMask;
        const auto rep = gradcheck_params(
            [&](Tape<double>& tape, ParamStore<double>&) { return model::fm_loss(net, tape, items, noise, mask).loss; },
            net.params(), 1e-5, 0, seed);
        worst_loss = std::max(worst_loss, rep.max_rel_error());
        ++checks;
    }
    const double secs = cpu_seconds() - t0;
    const bool ok = worst_op < 1e-4 && worst_loss < 1e-4 && secs < 120;
    return {ok, std::to_string(checks) + " checks over 10 seeds; worst op rel err " + num(worst_op, 3) + " (" +
                    worst_name + "), fm_loss rel err " + num(worst_loss, 3) + "; " + num(secs, 3) + " CPU-s"};
}

// ---------------------------------------------------------------------------
// 2. Flow matching on a two-component Gaussian mixture

struct Mixture {
    double weight[2] = {0.3, 0.7};
    double mean[2][2] = {{-2.0, -0.5}, {1.5, 1.0}};
    double sd = 0.5;
};

MatD time_features(const std::vector<double>& t) {
    MatD f(static_cast<Eigen::Index>(t.size()), 8);
    for (std::size_t i = 0; i < t.size(); ++i)
        for (int k = 0; k < 4; ++k) {
            f(static_cast<Eigen::Index>(i), 2 * k) = std::sin((k + 1) * M_PI * t[i]);
            f(static_cast<Eigen::Index>(i), 2 * k + 1) = std::cos((k + 1) * M_PI * t[i]);
        }
    return f;
}

Var<double> mlp_velocity(Tape<double>& tape, ParamStore<double>& p, const MatD& x, const std::vector<double>& t) {
    namespace o = ops;
    auto in = o::concat_cols<double>({tape.constant(x), tape.constant(time_features(t))});
    auto h = o::silu(o::linear(in, tape.param(p, "w1"), tape.param(p, "b1")));
    h = o::silu(o::linear(h, tape.param(p, "w2"), tape.param(p, "b2")));
    return o::linear(h, tape.param(p, "w3"), tape.param(p, "b3"));
}

Verdict criterion_mixture() {
    const double t0 = cpu_seconds();
    const Mixture mix;
    auto draw_data = [&](Rng& rng, int n) {
        MatD x(n, 2);
        for (int i = 0; i < n; ++i) {
            const int c = uniform01(rng) < mix.weight[0] ? 0 : 1;
            for (int d = 0; d < 2; ++d) x(i, d) = mix.mean[c][d] + mix.sd * standard_normal(rng);
        }
        return x;
    };
    Rng init = substream(2, "init");
    ParamStore<double> p;
    const int H = 128;
    p.add_dense("w1", 10, H, init);
    p.add_zeros("b1", 1, H);
    p.add_dense("w2", H, H, init);
    p.add_zeros("b2", 1, H);
    p.add_dense("w3", H, 2, init, 0.1);
    p.add_zeros("b3", 1, 2);
    AdamWConfig opt;
    opt.weight_decay = 0.0;
    Rng data_rng = substream(2, "data"), noise_rng = substream(2, "noise");
    const int steps = 4000, batch = 512;
    for (int step = 0; step < steps; ++step) {
        const MatD x1 = draw_data(data_rng, batch);
        const MatD x0 = model::standard_normal_matrix<double>(batch, 2, noise_rng);
        std::vector<double> t(batch);
        MatD xt(batch, 2);
        for (int i = 0; i < batch; ++i) {
            t[static_cast<std::size_t>(i)] = uniform01(noise_rng);
            xt.row(i) = model::interpolate<double>(x0.row(i), x1.row(i), t[static_cast<std::size_t>(i)]);
        }
        p.zero_grad();
        Tape<double> tape;
        auto loss = ops::mse(mlp_velocity(tape, p, xt, t), tape.constant(MatD(x1 - x0)));
        tape.backward(loss);
        opt.lr = step < steps * 3 / 4 ? 2e-3 : 4e-4;
        adamw_step(p, opt);
    }
    const int n = 5000;
    sampler::SamplerConfig sc;
    sc.strategy = sampler::Strategy::vanilla;
    sc.w = 1.0;
    sc.steps = 100;
    sampler::Field<double> field = [&](const MatD& x, double t, int) {
        Tape<double> tape(false);
        MatD v = mlp_velocity(tape, p, x, std::vector<double>(static_cast<std::size_t>(x.rows()), t)).value();
        return sampler::FieldEval<double>{v, v, {}};
    };
    Rng sample_rng = substream(2, "sampling");
    const MatD x1 = sampler::euler_sample(field, model::standard_normal_matrix<double>(n, 2, sample_rng), {n}, sc).x1;

    // Assign each sample to the component with the larger true posterior.
    double cnt[2] = {0, 0}, sum[2][2] = {{0, 0}, {0, 0}};
    for (int i = 0; i < n; ++i) {
        double lik[2];
        for (int c = 0; c < 2; ++c) {
            const double dx = x1(i, 0) - mix.mean[c][0], dy = x1(i, 1) - mix.mean[c][1];
            lik[c] = mix.weight[c] * std::exp(-(dx * dx + dy * dy) / (2 * mix.sd * mix.sd));
        }
        const int c = lik[0] >= lik[1] ? 0 : 1;
        cnt[c] += 1;
        sum[c][0] += x1(i, 0);
        sum[c][1] += x1(i, 1);
    }
    double mean_err = 0, weight_err = 0;
    std::ostringstream d;
    for (int c = 0; c < 2; ++c) {
        const double w = cnt[c] / n;
        weight_err = std::max(weight_err, std::abs(w - mix.weight[c]));
        double e = 0;
        if (cnt[c] > 0) {
            const double mx = sum[c][0] / cnt[c], my = sum[c][1] / cnt[c];
            e = std::hypot(mx - mix.mean[c][0], my - mix.mean[c][1]);
            d << "component " << c << ": weight " << num(w, 3) << ", mean (" << num(mx, 3) << ", " << num(my, 3)
              << "); ";
        } else {
            e = std::numeric_limits<double>::infinity();
        }
        mean_err = std::max(mean_err, e);
    }
    const double secs = cpu_seconds() - t0;
    const bool ok = mean_err <= 0.15 && weight_err <= 0.1 && secs < 600;
    d << "max mean err " << num(mean_err, 3) << ", max weight err " << num(weight_err, 3) << "; " << num(secs, 3)
      << " CPU-s";
    return {ok, d.str()};
}

// ---------------------------------------------------------------------------
// 3. Equation identities

sampler::Field<double> toy_field() {
    return [](const MatD& x, double t, int) {
        sampler::FieldEval<double> ev;
        ev.cond = (x.array().sin() + t).matrix();
        ev.uncond = (0.5 * x.array() - 0.3 * t).matrix();
        for (int b = 0; b < 2; ++b) {
            MatD a(3, 4);
            for (int i = 0; i < 3; ++i) {
                double s = 0;
                for (int j = 0; j < 4; ++j) s += a(i, j) = std::exp(std::cos(x(b * 3 + i, j % x.cols()) + j + t));
                a.row(i) /= s;
            }
            ev.align.push_back(a);
        }
        return ev;
    };
}

Verdict criterion_identities() {
    std::vector<std::string> failed;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) failed.push_back(what);
    };

    Rng rng(31);
    for (int k = 0; k < 20; ++k) {
        const MatD x0 = model::standard_normal_matrix<double>(5, 4, rng), x1 = model::standard_normal_matrix<double>(5, 4, rng);
        expect(model::interpolate<double>(x0, x1, 0.0) == x0, "path endpoint t=0");
        expect(model::interpolate<double>(x0, x1, 1.0) == x1, "path endpoint t=1");
    }

    double fuse_err = 0;
    for (int seed = 0; seed < 10; ++seed) {
        auto c = tiny_flow_config();
        model::FlowNet<double> net(c, static_cast<std::uint64_t>(seed));
        Rng r(static_cast<std::uint64_t>(300 + seed));
        model::FlowBatch<double> b;
        b.lengths = {3, 5};
        b.x = model::standard_normal_matrix<double>(8, c.latent_width(), r);
        b.t = {0.3, 0.8};
        b.tokens = {{0, 1, 2}, {0, 4}};
        b.null_text = {0, 1};
        b.cl_scale_uncond = 0.5;
        Tape<double> tape(false);
        auto out = net.forward(tape, b);
        const MatD& wd = net.params()[net.params().index_of("align.down")].value;
        const MatD cl = out.c_local.value();
        const MatD cg = out.c_global_rows.value();
        MatD rebuilt(8, c.text.d_clip);
        for (int row = 0; row < 8; ++row)
            rebuilt.row(row) = cg.row(row) + c.lambda * (row < 3 ? 1.0 : 0.5) * (cl.row(row) * wd);
        fuse_err = std::max(fuse_err, (out.c_fused.value() - rebuilt).cwiseAbs().maxCoeff());
    }
    expect(fuse_err <= 1e-6, "fused condition reconstruction");

    auto base = [](sampler::Strategy s, double w = 4.0) {
        sampler::SamplerConfig c;
        c.steps = 25;
        c.strategy = s;
        c.w = w;
        return c;
    };
    Rng nrng(11);
    const MatD x0 = model::standard_normal_matrix<double>(6, 4, nrng);
    auto run = [&](const sampler::SamplerConfig& c) { return sampler::euler_sample(toy_field(), x0, {3, 3}, c).x1; };
    {
        auto w1 = base(sampler::Strategy::vanilla, 1.0);
        MatD x = x0;
        auto f = toy_field();
        for (int n = 0; n < w1.steps; ++n) x += (1.0 / w1.steps) * f(x, static_cast<double>(n) / w1.steps, n).cond;
        expect(run(w1) == x, "guidance at w=1 equals the conditional trajectory");
    }
    auto a0 = base(sampler::Strategy::sink_ctrl);
    a0.ctrl.alpha = 0.0;
    expect(run(a0) == run(base(sampler::Strategy::fixed_ctrl)), "sink-ctrl(alpha=0) == fixed_ctrl (toy field)");
    for (auto s : {sampler::Strategy::fixed_ctrl, sampler::Strategy::sink_ctrl}) {
        auto k0 = base(s);
        k0.ctrl.k_base = 0.0;
        expect(run(k0) == run(base(sampler::Strategy::vanilla)), "ctrl(k_base=0) == vanilla (toy field)");
    }
    {
        auto c = tiny_flow_config();
        model::FlowNet<double> net(c, 3);
        std::vector<std::vector<int>> tokens{{0, 1, 3}, {0, 2, 4, 5}};
        std::vector<int> lengths{3, 4};
        Rng r(5);
        const MatD z0 = model::standard_normal_matrix<double>(7, c.latent_width(), r);
        auto run_net = [&](sampler::SamplerConfig s) {
            s.mask.enabled = true;
            s.mask.t_thresh = sink::kStrongMask;
            return sampler::euler_sample(sampler::model_field(net, tokens, lengths, s), z0, lengths, s).x1;
        };
        auto na0 = base(sampler::Strategy::sink_ctrl);
        na0.ctrl.alpha = 0.0;
        expect(run_net(na0) == run_net(base(sampler::Strategy::fixed_ctrl)), "sink-ctrl(alpha=0) == fixed_ctrl (network)");
        auto nk0 = base(sampler::Strategy::sink_ctrl);
        nk0.ctrl.k_base = 0.0;
        expect(run_net(nk0) == run_net(base(sampler::Strategy::vanilla)), "ctrl(k_base=0) == vanilla (network)");
    }

    sampler::GuidanceConstants gc;
    gc.k_base = 2.0;
    gc.alpha = 0.18;
    const double k = sampler::k_eff(gc, 1.0, sampler::Strategy::sink_ctrl);
    expect(std::abs(k - 2.36) <= 1e-12, "k_eff(2, 0.18, 1) = 2.36");

    sampler::GuidanceConstants hand;
    hand.lambda_ctrl = 6.0;
    hand.k_base = 2.0;
    sampler::GuidanceState<double> st(1, 2, hand);
    MatD e1(1, 2), e2(1, 2), want1(1, 2), want2(1, 2);
    e1 << 4, -4;
    e2 << 1, 1;
    want1 << 2, -2;
    want2 << -1, 3;
    expect(sampler::rectify(e1, st, 0.5, sampler::Strategy::fixed_ctrl) == want1, "hand trace step 1");
    expect(sampler::rectify(e2, st, 0.5, sampler::Strategy::fixed_ctrl) == want2, "hand trace step 2");

    std::string d = failed.empty() ? "all identities exact" : "failed:";
    for (const auto& f : failed) d += " [" + f + "]";
    d += "; fused-condition max err " + num(fuse_err, 3) + ", k_eff " + num(k, 17);
    return {failed.empty(), d};
}

// ---------------------------------------------------------------------------
// 4. SinkRatio oracle

Verdict criterion_sink_oracle() {
    Rng rng(404);
    double worst = 0;
    int bound_fail = 0, mono_fail = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int L = uniform_int(rng, 1, 16), N = uniform_int(rng, 1, 24);
        MatD A(L, N);
        for (int i = 0; i < L; ++i) {
            double s = 0;
            for (int j = 0; j < N; ++j) s += A(i, j) = -std::log(1.0 - uniform01(rng));
            A.row(i) /= s;
        }
        double prev = 0;
        for (int K = 1; K <= N; ++K) {
            double brute = 0;
            for (int i = 0; i < L; ++i) {
                std::vector<double> r(A.row(i).data(), A.row(i).data() + N);
                std::sort(r.begin(), r.end(), std::greater<>());
                for (int j = 0; j < K; ++j) brute += r[static_cast<std::size_t>(j)];
            }
            brute /= L;
            const double s = sink::sink_ratio(A, K);
            worst = std::max(worst, std::abs(s - brute));
            if (s < static_cast<double>(K) / N - 1e-12 || s > 1.0 + 1e-12) ++bound_fail;
            if (s < prev - 1e-15) ++mono_fail;
            prev = s;
        }
    }
    return {worst <= 1e-12 && bound_fail == 0 && mono_fail == 0,
            "1000 matrices; max |diff| " + num(worst, 3) + ", bound violations " + std::to_string(bound_fail) +
                ", monotonicity violations " + std::to_string(mono_fail)};
}

// ---------------------------------------------------------------------------
// 5-7. Desk-scale training experiments

// Acceptance recipe: the desk-scale defaults reduced to fit the CPU budget of
// the directional criteria. Everything else keeps its default.
json desk_recipe() {
    json cfg = pipeline::default_config();
    pipeline::set_path(cfg, "data.n_samples", "2000");
    pipeline::set_path(cfg, "flow.d_flow", "64");
    pipeline::set_path(cfg, "flow.blocks", "2");
    pipeline::set_path(cfg, "flow.train.epochs", "100");
    pipeline::set_path(cfg, "flow.train.batch_size", "32");
    pipeline::set_path(cfg, "flow.train.lr", "1e-3");
    pipeline::set_path(cfg, "eval.repetitions", "3");
    pipeline::set_path(cfg, "eval.mm_texts", "2");
    pipeline::set_path(cfg, "eval.mm_pairs", "2");
    return cfg;
}

struct SeedRun {
    std::uint64_t seed = 0;
    std::map<std::string, eval::MetricReport> reports;  // variant -> report
    std::map<std::string, sink::SinkTrace> traces;
    std::string error;
};

struct VariantSpec {
    std::string name;
    std::vector<std::pair<std::string, std::string>> overrides;
};

const std::vector<VariantSpec>& experiment_variants() {
    static const std::vector<VariantSpec> v = {
        {"full_masked", {}},
        {"full_unmasked", {{"flow.mask.enabled", "false"}}},
        {"no_memory_no_align", {{"flow.use_memory", "false"}, {"flow.use_align", "false"}}},
        {"no_memory", {{"flow.use_memory", "false"}}},
        {"no_align", {{"flow.use_align", "false"}}},
    };
    return v;
}

SeedRun run_seed(std::uint64_t seed) {
    SeedRun out;
    out.seed = seed;
    json base = desk_recipe();
    base["seed"] = seed;
    try {
        io::Corpus corpus;
        corpus.config = pipeline::data_config(base);
        corpus.samples = synth::generate_dataset(corpus.config);
        const auto train = corpus.split(synth::Split::train);
        model::MotionAutoencoder ae(pipeline::ae_config(base));
        ae.train(train);
        eval::Evaluator ev(pipeline::evaluator_config(base, corpus.config.vocab.size()));
        const auto er = ev.train(train, corpus.split(synth::Split::val));
        progress("seed " + std::to_string(seed) + ": evaluator val top-1 " + num(er.val_top1, 3));
        std::vector<model::FlowItem<float>> items;
        for (const auto* s : train) items.push_back({ae.encode(s->clip).x, s->text.tokens});
        const auto test = corpus.split(synth::Split::test);
        for (const auto& v : experiment_variants()) {
            json cfg = base;
            for (const auto& [p, val] : v.overrides) pipeline::set_path(cfg, p, val);
            const double t0 = cpu_seconds();
            const auto tc = pipeline::flow_train_config(cfg);
            model::FlowNet<float> net(pipeline::flow_config(cfg, corpus.config.vocab.size()), tc.seed);
            model::train_flow(net, items, tc);
            auto sc = pipeline::sampler_config(cfg);
            sc.mask = tc.mask;
            std::vector<sink::SinkTrace> traces;
            auto rep = eval::evaluate_model(net, ae, ev, test, corpus.config.vocab, sc, pipeline::eval_protocol(cfg),
                                            v.name, &traces);
            if (!traces.empty()) out.traces[v.name] = traces.front();
            progress("seed " + std::to_string(seed) + " " + v.name + ": FID " +
                     num(rep.aggregate(&eval::MetricRow::fid).mean) + ", SinkRatio " +
                     num(rep.aggregate(&eval::MetricRow::sinkratio).mean) + ", alignment " +
                     num(rep.aggregate(&eval::MetricRow::alignment_accuracy).mean) + " (chance " +
                     num(rep.aggregate(&eval::MetricRow::alignment_chance).mean) + "), " +
                     num(cpu_seconds() - t0, 3) + " CPU-s");
            out.reports[v.name] = std::move(rep);
        }
    } catch (const Error& e) {
        out.error = e.what();
        progress("seed " + std::to_string(seed) + " failed: " + out.error);
    }
    return out;
}

struct Experiments {
    std::vector<SeedRun> seeds;
    double cpu_s = 0;
};

const Experiments& experiments() {
    static const Experiments ex = [] {
        Experiments e;
        const double t0 = cpu_seconds();
        for (std::uint64_t s = 1; s <= 5; ++s) e.seeds.push_back(run_seed(s));
        e.cpu_s = cpu_seconds() - t0;
        return e;
    }();
    return ex;
}

double metric(const SeedRun& r, const std::string& variant, double eval::MetricRow::*field) {
    auto it = r.reports.find(variant);
    return it == r.reports.end() ? std::numeric_limits<double>::quiet_NaN() : it->second.aggregate(field).mean;
}

Verdict criterion_sink_gap() {
    const auto& ex = experiments();
    int ok = 0;
    std::ostringstream d;
    d << "unmasked - masked final SinkRatio per seed:";
    for (const auto& r : ex.seeds) {
        const double u = metric(r, "full_unmasked", &eval::MetricRow::sinkratio);
        const double m = metric(r, "full_masked", &eval::MetricRow::sinkratio);
        const double gap = u - m;
        if (gap >= 0.1) ++ok;
        d << " s" << r.seed << " " << num(u, 3) << "-" << num(m, 3) << "=" << num(gap, 3);
    }
    d << "; " << ok << "/5 seeds with gap >= 0.1; " << num(ex.cpu_s / 3600.0, 3) << " CPU-h for all training runs";
    return {ok >= 4 && ex.cpu_s < 7200, d.str()};
}

Verdict criterion_alignment() {
    const auto& ex = experiments();
    int ok = 0;
    std::ostringstream d;
    d << "alignment / chance per seed:";
    for (const auto& r : ex.seeds) {
        const double a = metric(r, "full_masked", &eval::MetricRow::alignment_accuracy);
        const double c = metric(r, "full_masked", &eval::MetricRow::alignment_chance);
        if (a >= 2.0 * c) ++ok;
        d << " s" << r.seed << " " << num(a, 3) << "/" << num(c, 3) << "=" << num(a / c, 3) << "x";
    }
    d << "; " << ok << "/5 seeds at >= 2x chance";
    return {ok >= 4, d.str()};
}

Verdict criterion_memory_align() {
    const auto& ex = experiments();
    std::map<std::string, std::vector<double>> fid;
    for (const auto& r : ex.seeds)
        for (const auto& v : experiment_variants()) fid[v.name].push_back(metric(r, v.name, &eval::MetricRow::fid));
    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(v.size());
    };
    const double all = mean(fid["full_masked"]), none = mean(fid["no_memory_no_align"]);
    std::ostringstream d;
    d << "mean FID over 5 seeds: all modules " << num(all) << ", w/o M and A " << num(none) << "; reported only: w/o M "
      << num(mean(fid["no_memory"])) << ", w/o A " << num(mean(fid["no_align"]));
    return {std::isfinite(all) && std::isfinite(none) && all <= none, d.str()};
}

// ---------------------------------------------------------------------------
// 8. Metric self-consistency

MatD gaussian(Eigen::Index n, Eigen::Index d, Rng& rng) {
    MatD x(n, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = standard_normal(rng);
    return x;
}

Verdict criterion_metrics() {
    std::ostringstream d;
    bool ok = true;
    Rng rng(808);
    const MatD a = gaussian(500, 16, rng);
    const double self = eval::fid(a, a);
    ok = ok && std::abs(self) <= 1e-6;
    d << "fid(A,A) " << num(self, 3);

    const int dim = 32;
    RowVec<double> m(dim);
    for (int i = 0; i < dim; ++i) m(i) = standard_normal(rng);
    m *= 2.0 / m.norm();
    const MatD g0 = gaussian(10000, dim, rng);
    MatD g1 = gaussian(10000, dim, rng);
    g1.rowwise() += m;
    const double f = eval::fid(g0, g1);
    ok = ok && std::abs(f - 4.0) <= 0.05 * 4.0;
    d << "; isotropic FID " << num(f) << " vs |m|^2 = 4";

    const MatD mf = gaussian(32 * 400, 16, rng), tf = gaussian(32 * 400, 16, rng);
    const auto r = eval::r_precision(mf, tf);
    const double top[3] = {r.top1, r.top2, r.top3};
    for (int k = 0; k < 3; ++k) ok = ok && std::abs(top[k] - (k + 1) / 32.0) <= 0.03;
    d << "; random R-precision " << num(r.top1, 3) << "/" << num(r.top2, 3) << "/" << num(r.top3, 3);

    synth::GeneratorConfig gc;
    gc.n_samples = 200;
    gc.seed = 8;
    const auto data = synth::generate_dataset(gc);
    std::vector<const synth::DatasetSample*> prompts;
    for (const auto& s : data)
        if (prompts.size() < 12) prompts.push_back(&s);
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
    sc.steps = 10;
    const auto ga = eval::generate(net, ae, prompts, sc, 99), gb = eval::generate(net, ae, prompts, sc, 99);
    eval::Evaluator ev{eval::EvaluatorConfig{}};
    const double mm = eval::mmodality(ev.motion_features(ga.clips), ev.motion_features(gb.clips));
    ok = ok && mm == 0.0;
    d << "; seed-pinned MModality " << num(mm, 3);
    return {ok, d.str()};
}

// ---------------------------------------------------------------------------
// 9-10. CLI pipeline

struct CliRunner {
    fs::path cli;
    int run(const std::vector<std::string>& args, const fs::path& log) const {
        std::string cmd = "'" + cli.string() + "'";
        for (const auto& a : args) cmd += " '" + a + "'";
        cmd += " >>'" + log.string() + "' 2>&1";
        const int rc = std::system(cmd.c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    }
};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

json output_hashes(const fs::path& run_dir, const std::string& command) {
    const auto m = json::parse(io::read_file(run_dir / "manifests" / (command + ".json")));
    return m["outputs"];
}

Verdict criterion_determinism(const CliRunner& cli, const fs::path& work) {
    const fs::path a = work / "replay_a", b = work / "replay_b", log = work / "replay.log";
    fs::remove_all(a);
    fs::remove_all(b);
    fs::remove(log);
    const std::vector<std::string> tiny = {"--data.n_samples", "300", "--flow.d_flow", "32", "--flow.blocks", "2",
                                           "--flow.train.epochs", "2", "--ae.epochs", "3", "--sampler.steps", "20",
                                           "--sampler.n_prompts", "16", "-q"};
    const std::vector<std::string> chain = {"gen-data", "train-ae", "train-flow", "sample"};
    for (const auto& c : chain)
        if (int rc = cli.run(with({c, "--run-dir", a.string()}, tiny), log); rc != 0)
            return {false, "original run of " + c + " exited with " + std::to_string(rc) + " (see " + log.string() + ")"};
    std::ostringstream d;
    bool ok = true;
    for (const auto& c : chain) {
        const auto snap = a / "snapshots" / (c + ".json");
        if (int rc = cli.run({c, "--config", snap.string(), "--run-dir", b.string(), "-q"}, log); rc != 0)
            return {false, "replay of " + c + " exited with " + std::to_string(rc)};
        const auto ha = output_hashes(a, c), hb = output_hashes(b, c);
        const auto ma = json::parse(io::read_file(a / "manifests" / (c + ".json")));
        const auto mb = json::parse(io::read_file(b / "manifests" / (c + ".json")));
        const bool same = ha == hb && !ha.empty() && ma["config_hash"] == mb["config_hash"];
        if (c != "train-ae") {
            ok = ok && same;
            d << c << " " << (same ? "identical" : "DIFFERENT") << " (" << ha.size() << " artifacts); ";
        }
    }
    d << "replayed from snapshots into a fresh run directory";
    return {ok, d.str()};
}

Verdict criterion_smoke(const CliRunner& cli, const fs::path& work) {
    const fs::path dir = work / "smoke", log = work / "smoke.log";
    fs::remove_all(dir);
    fs::remove(log);
    const std::vector<std::string> tiny = {"--data.n_samples", "240",  "--flow.d_flow", "32",  "--flow.blocks", "2",
                                           "--flow.train.epochs", "170", "--flow.train.batch_size", "16",
                                           "--eval.repetitions", "2", "--eval.mm_texts", "2", "--eval.mm_pairs", "2",
                                           "--sampler.split", "train", "--sampler.n_prompts", "64",
                                           "--sampler.strategy", "sink_ctrl", "-q"};
    const double c0 = child_cpu_seconds();
    for (const auto& c : {"gen-data", "train-ae", "train-flow", "train-eval", "sample", "evaluate", "sink-report"})
        if (int rc = cli.run(with({c, "--run-dir", dir.string()}, tiny), log); rc != 0)
            return {false, std::string(c) + " exited with " + std::to_string(rc) + " (see " + log.string() + ")"};
    const double secs = child_cpu_seconds() - c0;

    json cfg = pipeline::default_config();
    pipeline::set_path(cfg, "sampler.strategy", "sink_ctrl");
    const std::string v = pipeline::variant_tag(cfg);
    std::vector<fs::path> declared = {dir / "ae_train.csv",
                                      dir / "flow_train.csv",
                                      dir / "eval_train.csv",
                                      dir / "samples" / v / "trace.csv",
                                      dir / "samples" / v / "prompts.tsv",
                                      dir / "eval" / v / "metrics.csv",
                                      dir / "eval" / v / "trace.csv",
                                      dir / "sink_report" / "curves.csv",
                                      dir / "sink_report" / "report.csv"};
    std::vector<std::string> missing;
    for (const auto& p : declared)
        if (!fs::exists(p) || fs::file_size(p) == 0) missing.push_back(p.lexically_relative(dir).string());
    int heatmaps = 0;
    for (const auto& hd : {dir / "samples" / v / "heatmaps", dir / "sink_report" / "heatmaps" / v})
        if (fs::exists(hd))
            for (const auto& e : fs::directory_iterator(hd)) heatmaps += e.path().extension() == ".tsv";
    if (heatmaps < 2) missing.push_back("heatmap TSVs");
    std::size_t curve_rows = 0;
    if (fs::exists(dir / "samples" / v / "trace.csv")) {
        const auto tr = sink::read_trace_csv(dir / "samples" / v / "trace.csv");
        if (tr.count(v)) curve_rows = tr.at(v).size();
    }
    if (curve_rows != 100) missing.push_back("100-row trace (got " + std::to_string(curve_rows) + ")");
    std::ostringstream d;
    d << "7 commands exit 0 in " << num(secs, 3) << " CPU-s; " << declared.size() << " CSV/TSV files + " << heatmaps
      << " heatmaps";
    for (const auto& m : missing) d << "; missing " << m;
    return {missing.empty() && secs < 600, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::string cli_path, work_dir = (fs::temp_directory_path() / "mlagen_acceptance").string(), only;
    app.add_option("--cli", cli_path, "Path to the mlagen executable")->required();
    app.add_option("--work", work_dir, "Scratch directory for CLI runs");
    app.add_option("--only", only, "Comma separated criterion numbers");
    CLI11_PARSE(app, argc, argv);

    std::set<int> selected;
    if (!only.empty()) {
        std::istringstream is(only);
        for (std::string tok; std::getline(is, tok, ',');) selected.insert(std::stoi(tok));
    }
    fs::create_directories(work_dir);
    const CliRunner cli{fs::absolute(cli_path)};
    const fs::path work = fs::absolute(work_dir);

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"gradient correctness", criterion_gradients},
        {"flow matching on a 2-D mixture", criterion_mixture},
        {"equation identities", criterion_identities},
        {"SinkRatio oracle equivalence", criterion_sink_oracle},
        {"masked vs unmasked SinkRatio gap", criterion_sink_gap},
        {"alignment emergence", criterion_alignment},
        {"memory and alignment ablation ordering", criterion_memory_align},
        {"metric self-consistency", criterion_metrics},
        {"determinism under snapshot replay", [&] { return criterion_determinism(cli, work); }},
        {"end-to-end smoke", [&] { return criterion_smoke(cli, work); }},
    };
    int failed = 0, ran = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(n)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::ostringstream line;
        line << "criterion " << std::setw(2) << n << " " << (v.pass ? "PASS" : "FAIL") << "  " << criteria[i].first
             << ": " << v.detail << " [" << num(wall, 3) << " s]";
        std::cout << line.str() << std::endl;
        failed += !v.pass;
        ++ran;
    }
    std::cout << "summary: " << ran - failed << "/" << ran << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
