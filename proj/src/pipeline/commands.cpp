#include "mlagen/pipeline/commands.hpp"

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "mlagen/eval/protocol.hpp"
#include "mlagen/io/corpus_io.hpp"
#include "mlagen/io/tensor_archive.hpp"
#include "mlagen/model/checkpoint.hpp"

namespace fs = std::filesystem;

namespace mlagen::pipeline {

namespace {

struct Context {
    std::string command;
    json cfg;
    RunLayout layout;
    Logger log;
    std::vector<fs::path> inputs;
    CommandResult result;

    void say(const std::string& s) {
        result.messages.push_back(s);
        if (log) log(s);
    }
    void output(const fs::path& p) { result.outputs.push_back(p); }
};

void require_artifact(Context& ctx, const fs::path& p, const std::string& producer) {
    if (!fs::exists(p))
        throw DependencyError(ctx.command + ": missing artifact " + p.string() + " (run '" + producer + "' first)");
    ctx.inputs.push_back(p);
}

std::string relative_to(const fs::path& p, const fs::path& root) {
    std::error_code ec;
    auto r = fs::relative(p, root, ec);
    return ec || r.empty() ? p.string() : r.generic_string();
}

// Hash over the snapshot without the run directory, so a replay into another
// directory reports the same config hash.
std::string config_hash(const json& snapshot) {
    json c = snapshot;
    c.erase("run_dir");
    return io::git_blob_hash(c.dump(2));
}

json snapshot_of(const json& cfg) {
    json s = cfg;
    json notes = json::object();
    for (const auto& [k, v] : desk_scale_notes()) notes[k] = v;
    s["_notes"] = notes;
    return s;
}

void write_manifest(Context& ctx, double wall) {
    const json snap = snapshot_of(ctx.cfg);
    const fs::path sp = ctx.layout.snapshot(ctx.command);
    fs::create_directories(sp.parent_path());
    io::write_file(sp, snap.dump(2) + "\n");

    auto listing = [&](const std::vector<fs::path>& paths) {
        json arr = json::array();
        std::set<std::string> seen;
        for (const auto& p : paths) {
            if (!fs::exists(p) || fs::is_directory(p)) continue;
            const std::string rel = relative_to(p, ctx.layout.root);
            if (!seen.insert(rel).second) continue;
            arr.push_back({{"path", rel}, {"hash", io::file_hash(p)}});
        }
        return arr;
    };
    json m = {{"command", ctx.command},
              {"variant", variant_tag(ctx.cfg)},
              {"seed", ctx.cfg["seed"]},
              {"config_hash", config_hash(snap)},
              {"snapshot", relative_to(sp, ctx.layout.root)},
              {"inputs", listing(ctx.inputs)},
              {"outputs", listing(ctx.result.outputs)},
              {"wall_time_s", wall}};
    const fs::path mp = ctx.layout.manifest(ctx.command);
    fs::create_directories(mp.parent_path());
    io::write_file(mp, m.dump(2) + "\n");
}

io::Corpus load_data(Context& ctx) {
    require_artifact(ctx, ctx.layout.data() / "manifest.json", "gen-data");
    ctx.inputs.push_back(ctx.layout.data() / "clips.tsr");
    return io::load_corpus(ctx.layout.data());
}

model::MotionAutoencoder load_ae(Context& ctx) {
    require_artifact(ctx, ctx.layout.ae(), "train-ae");
    return model::MotionAutoencoder::load(ctx.layout.ae());
}

eval::Evaluator load_evaluator(Context& ctx) {
    require_artifact(ctx, ctx.layout.evaluator(), "train-eval");
    return eval::Evaluator::load(ctx.layout.evaluator());
}

std::vector<const synth::DatasetSample*> prompts_of(const io::Corpus& corpus, const json& cfg) {
    auto set = corpus.split(synth::parse_split(cfg["sampler"]["split"].get<std::string>()));
    const int n = cfg["sampler"]["n_prompts"].get<int>();
    if (n > 0 && static_cast<std::size_t>(n) < set.size()) set.resize(static_cast<std::size_t>(n));
    if (set.empty()) throw DataError("no prompts in split " + cfg["sampler"]["split"].get<std::string>());
    return set;
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
}

// ---- gen-data --------------------------------------------------------------

void cmd_gen_data(Context& ctx) {
    io::Corpus corpus;
    corpus.config = data_config(ctx.cfg);
    corpus.samples = synth::generate_dataset(corpus.config);
    io::save_corpus(ctx.layout.data(), corpus);
    ctx.output(ctx.layout.data() / "manifest.json");
    ctx.output(ctx.layout.data() / "clips.tsr");
    std::map<synth::Split, int> n;
    for (const auto& s : corpus.samples) n[s.split]++;
    ctx.say("gen-data: " + std::to_string(corpus.samples.size()) + " samples (train " +
            std::to_string(n[synth::Split::train]) + ", val " + std::to_string(n[synth::Split::val]) + ", test " +
            std::to_string(n[synth::Split::test]) + ")");
}

// ---- train-ae --------------------------------------------------------------

void cmd_train_ae(Context& ctx) {
    const auto corpus = load_data(ctx);
    model::MotionAutoencoder ae(ae_config(ctx.cfg));
    const auto rep = ae.train(corpus.split(synth::Split::train));
    ae.save(ctx.layout.ae());
    ctx.output(ctx.layout.ae());
    std::ostringstream csv;
    csv << "epoch,loss\n" << std::setprecision(9);
    for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e) csv << e << ',' << rep.epoch_loss[e] << '\n';
    io::write_file(ctx.layout.root / "ae_train.csv", csv.str());
    ctx.output(ctx.layout.root / "ae_train.csv");
    ctx.say("train-ae: reconstruction mse " + fmt(rep.initial_loss, 5) + " -> " + fmt(rep.final_loss, 5) +
            " (val " + fmt(ae.reconstruction_mse(corpus.split(synth::Split::val)), 5) + ")");
}

// ---- train-flow ------------------------------------------------------------

void train_flow_into(Context& ctx, const json& cfg, const io::Corpus& corpus, const model::MotionAutoencoder& ae,
                     const fs::path& out, const fs::path& loss_csv) {
    const auto fc = flow_config(cfg, corpus.config.vocab.size());
    const auto tc = flow_train_config(cfg);
    std::vector<model::FlowItem<float>> items;
    for (const auto* s : corpus.split(synth::Split::train)) items.push_back({ae.encode(s->clip).x, s->text.tokens});
    model::FlowNet<float> net(fc, tc.seed);
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = model::train_flow(net, items, tc, [&](int e, double loss) {
        if (e % 5 == 0 || e + 1 == tc.epochs) {
            const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            ctx.say("train-flow: epoch " + std::to_string(e + 1) + "/" + std::to_string(tc.epochs) + " loss " +
                    fmt(loss, 5) + " (" + fmt(s, 1) + " s)");
        }
    });
    fs::create_directories(out.parent_path());
    model::save_flow(out, net, tc.mask);
    std::ostringstream csv;
    csv << "epoch,loss\n" << std::setprecision(9);
    for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e) csv << e << ',' << rep.epoch_loss[e] << '\n';
    io::write_file(loss_csv, csv.str());
    ctx.output(out);
    ctx.output(loss_csv);
}

void cmd_train_flow(Context& ctx) {
    const auto corpus = load_data(ctx);
    const auto ae = load_ae(ctx);
    train_flow_into(ctx, ctx.cfg, corpus, ae, ctx.layout.flow(), ctx.layout.root / "flow_train.csv");
}

// ---- train-eval ------------------------------------------------------------

void cmd_train_eval(Context& ctx) {
    const auto corpus = load_data(ctx);
    eval::Evaluator ev(evaluator_config(ctx.cfg, corpus.config.vocab.size()));
    eval::EvaluatorReport rep;
    bool passed = true;
    std::string failure;
    try {
        rep = ev.train(corpus.split(synth::Split::train), corpus.split(synth::Split::val));
    } catch (const EvaluatorQualityError& e) {
        passed = false;
        failure = e.what();
    }
    // Saved either way; downstream metric commands check the gate flag.
    ev.save(ctx.layout.evaluator());
    ctx.output(ctx.layout.evaluator());
    std::ostringstream csv;
    csv << "epoch,loss\n" << std::setprecision(9);
    for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e) csv << e << ',' << rep.epoch_loss[e] << '\n';
    io::write_file(ctx.layout.root / "eval_train.csv", csv.str());
    ctx.output(ctx.layout.root / "eval_train.csv");
    ctx.say("train-eval: validation top-1 " + fmt(ev.val_top1(), 3) + " (gate 0.5: " + (passed ? "passed" : "FAILED") +
            ")");
    if (!passed) throw EvaluatorQualityError(failure);
}

// ---- sample ----------------------------------------------------------------

std::vector<std::string> column_labels(const synth::DatasetSample& s, const synth::Vocabulary& v, Eigen::Index cols) {
    std::vector<std::string> out;
    for (Eigen::Index j = 0; j < cols; ++j)
        out.push_back(j < s.text.size() ? v.word(s.text.tokens[static_cast<std::size_t>(j)]) : "<pad>");
    return out;
}

void cmd_sample(Context& ctx) {
    const auto corpus = load_data(ctx);
    const auto ae = load_ae(ctx);
    require_artifact(ctx, ctx.layout.flow(), "train-flow");
    const auto ck = model::load_flow(ctx.layout.flow());
    auto sc = sampler_config(ctx.cfg);
    sc.mask = ck.mask;
    const auto prompts = prompts_of(corpus, ctx.cfg);
    const auto gen = eval::generate(ck.net, ae, prompts, sc, component_seed(ctx.cfg, "sample"),
                                    ctx.cfg["sampler"]["batch"].get<int>());

    const std::string variant = variant_tag(ctx.cfg);
    const fs::path dir = ctx.layout.samples(variant);
    fs::create_directories(dir / "heatmaps");
    io::TensorArchive ar;
    std::ostringstream tsv;
    tsv << "index\tsample_id\tframes\tsurface\n";
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        char key[32];
        std::snprintf(key, sizeof key, "%06zu", i);
        ar.put(std::string("clip/") + key, gen.clips[i].frames);
        if (!gen.final_align.empty()) ar.put(std::string("align/") + key, gen.final_align[i]);
        tsv << i << '\t' << prompts[i]->sample_id << '\t' << gen.clips[i].frame_count() << '\t'
            << prompts[i]->text.surface << '\n';
    }
    json ids = json::array();
    for (const auto* p : prompts) ids.push_back(p->sample_id);
    ar.meta()["kind"] = "samples";
    ar.meta()["variant"] = variant;
    ar.meta()["sample_ids"] = ids;
    ar.meta()["masked"] = ck.mask.enabled;
    ar.meta()["t_thresh"] = ck.mask.enabled ? json(ck.mask.t_thresh) : json();
    ar.meta()["strategy"] = sampler::strategy_name(sc.strategy);
    ar.meta()["w"] = sc.w;
    ar.write(dir / "generated.tsr");
    ctx.output(dir / "generated.tsr");
    io::write_file(dir / "prompts.tsv", tsv.str());
    ctx.output(dir / "prompts.tsv");

    sink::emit_trace_csv(dir / "trace.csv", {{variant, gen.trace.summarize()}});
    ctx.output(dir / "trace.csv");
    const int nh = gen.final_align.empty()
                       ? 0
                       : std::min<int>(ctx.cfg["sampler"]["heatmaps"].get<int>(), static_cast<int>(prompts.size()));
    for (int i = 0; i < nh; ++i) {
        const auto& A = gen.final_align[static_cast<std::size_t>(i)];
        const fs::path hp = dir / "heatmaps" / ("sample_" + std::to_string(prompts[static_cast<std::size_t>(i)]->sample_id) + ".tsv");
        sink::emit_heatmap(hp, A, column_labels(*prompts[static_cast<std::size_t>(i)], corpus.config.vocab, A.cols()));
        ctx.output(hp);
    }
    ctx.say("sample: " + std::to_string(prompts.size()) + " prompts, variant " + variant + ", final SinkRatio " +
            fmt(gen.final_sinkratio));
}

// ---- evaluate --------------------------------------------------------------

eval::MetricReport evaluate_checkpoint(const json& cfg, const io::Corpus& corpus,
                                       const model::MotionAutoencoder& ae, const eval::Evaluator& ev,
                                       const fs::path& flow_path, const std::string& variant,
                                       std::vector<sink::SinkTrace>* traces) {
    const auto ck = model::load_flow(flow_path);
    auto sc = sampler_config(cfg);
    sc.mask = ck.mask;
    const auto prompts = prompts_of(corpus, cfg);
    return eval::evaluate_model(ck.net, ae, ev, prompts, corpus.config.vocab, sc, eval_protocol(cfg), variant, traces);
}

void summarize_report(Context& ctx, const eval::MetricReport& r) {
    const auto f = r.aggregate(&eval::MetricRow::fid);
    const auto t1 = r.aggregate_top(1), t3 = r.aggregate_top(3);
    const auto al = r.aggregate(&eval::MetricRow::alignment_accuracy);
    const auto ch = r.aggregate(&eval::MetricRow::alignment_chance);
    const auto sr = r.aggregate(&eval::MetricRow::sinkratio);
    ctx.say(r.variant + ": FID " + fmt(f.mean) + " +- " + fmt(f.ci95) + ", top-1 " + fmt(t1.mean, 3) + ", top-3 " +
            fmt(t3.mean, 3) + ", alignment " + fmt(al.mean, 3) + " (chance " + fmt(ch.mean, 3) + "), SinkRatio " +
            fmt(sr.mean, 3));
}

void cmd_evaluate(Context& ctx) {
    const auto corpus = load_data(ctx);
    const auto ae = load_ae(ctx);
    const auto ev = load_evaluator(ctx);
    ev.require_gate();
    require_artifact(ctx, ctx.layout.flow(), "train-flow");
    const std::string variant = variant_tag(ctx.cfg);
    std::vector<sink::SinkTrace> traces;
    const auto report = evaluate_checkpoint(ctx.cfg, corpus, ae, ev, ctx.layout.flow(), variant, &traces);
    const fs::path dir = ctx.layout.eval(variant);
    fs::create_directories(dir);
    eval::write_report_csv((dir / "metrics.csv").string(), {report});
    ctx.output(dir / "metrics.csv");
    if (!traces.empty()) {
        sink::emit_trace_csv(dir / "trace.csv", {{variant, traces.front()}});
        ctx.output(dir / "trace.csv");
    }
    summarize_report(ctx, report);
}

// ---- sink-report -----------------------------------------------------------

void cmd_sink_report(Context& ctx) {
    const fs::path root = ctx.layout.root / "samples";
    std::map<std::string, sink::SinkTrace> curves;
    std::map<std::string, bool> masked;
    if (fs::exists(root))
        for (const auto& d : fs::directory_iterator(root)) {
            const fs::path tp = d.path() / "trace.csv";
            if (!fs::exists(tp)) continue;
            ctx.inputs.push_back(tp);
            for (auto& [k, v] : sink::read_trace_csv(tp)) curves[k] = v;
            const fs::path gp = d.path() / "generated.tsr";
            if (fs::exists(gp)) masked[d.path().filename().string()] = io::TensorArchive::read(gp).meta().value("masked", false);
        }
    bool any = false;
    for (const auto& [k, v] : curves) any = any || !v.empty();
    if (!any) {
        ctx.result.warning = true;
        ctx.say("sink-report: warning: no sampling traces under " + root.string() + "; nothing emitted");
        return;
    }
    const fs::path out = ctx.layout.sink_report();
    fs::create_directories(out / "heatmaps");
    sink::emit_trace_csv(out / "curves.csv", curves);
    ctx.output(out / "curves.csv");

    const auto corpus = load_data(ctx);
    std::map<int, const synth::DatasetSample*> by_id;
    for (const auto& s : corpus.samples) by_id[s.sample_id] = &s;
    const int nh = ctx.cfg["sampler"]["heatmaps"].get<int>();

    std::ostringstream rep;
    rep << "variant,masked,final_step,final_mean_sinkratio,final_std_sinkratio\n";
    for (const auto& [variant, trace] : curves) {
        if (trace.empty()) continue;
        const bool m = masked.count(variant) ? masked[variant] : false;
        rep << variant << ',' << (m ? "yes" : "no") << ',' << trace.back().step << ',' << fmt(trace.back().mean, 6)
            << ',' << fmt(trace.back().std, 6) << '\n';
        const fs::path gp = root / variant / "generated.tsr";
        if (!fs::exists(gp)) continue;
        const auto ar = io::TensorArchive::read(gp);
        const auto ids = ar.meta()["sample_ids"];
        fs::create_directories(out / "heatmaps" / variant);
        for (int i = 0; i < std::min<int>(nh, static_cast<int>(ids.size())); ++i) {
            char key[32];
            std::snprintf(key, sizeof key, "align/%06d", i);
            if (!ar.contains(key)) break;
            const MatD A = ar.get<double>(key);
            const auto* s = by_id.at(ids[static_cast<std::size_t>(i)].get<int>());
            const fs::path hp = out / "heatmaps" / variant / ("sample_" + std::to_string(s->sample_id) + ".tsv");
            sink::emit_heatmap(hp, A, column_labels(*s, corpus.config.vocab, A.cols()));
            ctx.output(hp);
        }
    }
    // Footer: masked vs unmasked final-step gap.
    std::string mv, uv;
    for (const auto& [variant, trace] : curves) {
        if (trace.empty()) continue;
        const bool m = masked.count(variant) ? masked[variant] : false;
        if (m && mv.empty()) mv = variant;
        if (!m && uv.empty()) uv = variant;
    }
    std::string footer;
    if (curves.size() < 2 || mv.empty() || uv.empty()) {
        footer = "# notice: overlay needs a masked and an unmasked variant; single-curve report";
    } else {
        const double gap = curves[uv].back().mean - curves[mv].back().mean;
        footer = std::string("# masked-vs-unmasked final-step gap (") + uv + " - " + mv + ") = " + fmt(gap) +
                 " >= 0.1: " + (gap >= 0.1 ? "PASS" : "FAIL");
    }
    rep << footer << '\n';
    io::write_file(out / "report.csv", rep.str());
    ctx.output(out / "report.csv");
    ctx.say("sink-report: " + std::to_string(curves.size()) + " curve(s); " + footer.substr(2));
}

// ---- ablate ----------------------------------------------------------------

void cmd_ablate(Context& ctx) {
    const auto corpus = load_data(ctx);
    const auto ae = load_ae(ctx);
    const auto ev = load_evaluator(ctx);
    ev.require_gate();
    const std::string grid = ctx.cfg["ablate"]["grid"].get<std::string>();
    const int n_seeds = ctx.cfg["ablate"]["n_seeds"].get<int>();
    const auto cells = grid_cells(grid);
    const fs::path dir = ctx.layout.ablate(grid);
    fs::create_directories(dir / "flows");
    const auto root_seed = ctx.cfg["seed"].get<std::uint64_t>();

    std::map<std::string, fs::path> trained;  // flow section + seed -> checkpoint
    std::vector<eval::MetricReport> reports;
    std::ostringstream table;
    table << "grid,cell,seeds,fid_mean,fid_ci95,top1_mean,top1_ci95,top2_mean,top2_ci95,top3_mean,top3_ci95,"
             "alignment_mean,sinkratio_mean,status\n";
    for (const auto& cell : cells) {
        json cc = ctx.cfg;
        for (const auto& [path, value] : cell.overrides) set_path(cc, path, value);
        const std::string name = grid == "single" ? variant_tag(cc) : cell.name;
        eval::MetricReport merged;
        merged.variant = name;
        std::map<std::string, sink::SinkTrace> cell_traces;
        std::string status = "ok";
        try {
            validate_config(cc);
            for (int s = 0; s < n_seeds; ++s) {
                json sc = cc;
                sc["seed"] = root_seed + static_cast<std::uint64_t>(s);
                const std::string key = sc["flow"].dump() + "#" + std::to_string(root_seed + s);
                if (!trained.count(key)) {
                    const fs::path fp = dir / "flows" / (io::git_blob_hash(key).substr(0, 12) + ".tsr");
                    ctx.say("ablate: training flow for cell " + cell.name + " (seed " + std::to_string(root_seed + s) + ")");
                    train_flow_into(ctx, sc, corpus, ae, fp, fs::path(fp).replace_extension(".csv"));
                    trained[key] = fp;
                }
                std::vector<sink::SinkTrace> traces;
                auto r = evaluate_checkpoint(sc, corpus, ae, ev, trained[key], name, &traces);
                for (auto& row : r.repetitions) merged.repetitions.push_back(row);
                if (!traces.empty()) cell_traces[name + "-seed" + std::to_string(root_seed + s)] = traces.front();
            }
            fs::create_directories(dir / cell.name);
            eval::write_report_csv((dir / cell.name / "metrics.csv").string(), {merged});
            ctx.output(dir / cell.name / "metrics.csv");
            sink::emit_trace_csv(dir / cell.name / "trace.csv", cell_traces);
            ctx.output(dir / cell.name / "trace.csv");
            reports.push_back(merged);
            summarize_report(ctx, merged);
        } catch (const Error& e) {
            status = std::string("error: ") + e.what();
            for (auto& ch : status)
                if (ch == ',' || ch == '\n') ch = ';';
            ctx.say("ablate: cell " + cell.name + " failed: " + e.what());
        }
        table << grid << ',' << cell.name << ',' << n_seeds;
        if (status == "ok") {
            auto put = [&](const eval::MeanCI& m) { table << ',' << fmt(m.mean, 6) << ',' << fmt(m.ci95, 6); };
            put(merged.aggregate(&eval::MetricRow::fid));
            put(merged.aggregate_top(1));
            put(merged.aggregate_top(2));
            put(merged.aggregate_top(3));
            table << ',' << fmt(merged.aggregate(&eval::MetricRow::alignment_accuracy).mean, 6) << ','
                  << fmt(merged.aggregate(&eval::MetricRow::sinkratio).mean, 6);
        } else {
            table << ",,,,,,,,,,";
        }
        table << ',' << status << '\n';
    }
    io::write_file(dir / "table.csv", table.str());
    ctx.output(dir / "table.csv");
    if (!reports.empty()) {
        eval::write_report_csv((dir / "metrics.csv").string(), reports);
        ctx.output(dir / "metrics.csv");
    }
    ctx.say("ablate: table written to " + (dir / "table.csv").string());
}

}  // namespace

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = {"gen-data", "train-ae", "train-flow", "train-eval",
                                                   "sample",   "evaluate", "ablate",     "sink-report"};
    return names;
}

std::vector<GridCell> grid_cells(const std::string& grid) {
    if (grid == "single") return {{"base", {}}};
    if (grid == "memory_align")
        return {{"all_modules", {}},
                {"no_memory", {{"flow.use_memory", "false"}}},
                {"no_align", {{"flow.use_align", "false"}}},
                {"no_memory_no_align", {{"flow.use_memory", "false"}, {"flow.use_align", "false"}}}};
    if (grid == "sink_mask")
        return {{"strong_mask", {{"flow.mask.enabled", "true"}, {"flow.mask.t_thresh", "0.2"}}},
                {"weak_mask", {{"flow.mask.enabled", "true"}, {"flow.mask.t_thresh", "0.6"}}},
                {"no_mask", {{"flow.mask.enabled", "false"}}}};
    if (grid == "cond_uncond")
        return {{"cl_1.0", {{"sampler.cl_scale_uncond", "1.0"}}},
                {"cl_0.5", {{"sampler.cl_scale_uncond", "0.5"}}},
                {"cl_0", {{"sampler.cl_scale_uncond", "0"}}}};
    if (grid == "sink_ctrl") {
        std::vector<GridCell> out;
        for (const char* s : {"sink_ctrl", "fixed_ctrl", "vanilla"})
            for (const char* w : {"3.5", "4", "4.5"})
                out.push_back({std::string(s) + "_w" + w, {{"sampler.strategy", s}, {"sampler.w", w}}});
        return out;
    }
    throw ConfigError("config: field 'ablate.grid' has unknown grid '" + grid + "'");
}

CommandResult run_command(const std::string& name, const json& cfg, const Logger& log) {
    validate_config(cfg);
    Context ctx{name, cfg, RunLayout{run_directory(cfg)}, log, {}, {}};
    ctx.result.command = name;
    fs::create_directories(ctx.layout.root);
    const auto t0 = std::chrono::steady_clock::now();
    if (name == "gen-data")
        cmd_gen_data(ctx);
    else if (name == "train-ae")
        cmd_train_ae(ctx);
    else if (name == "train-flow")
        cmd_train_flow(ctx);
    else if (name == "train-eval")
        cmd_train_eval(ctx);
    else if (name == "sample")
        cmd_sample(ctx);
    else if (name == "evaluate")
        cmd_evaluate(ctx);
    else if (name == "ablate")
        cmd_ablate(ctx);
    else if (name == "sink-report")
        cmd_sink_report(ctx);
    else
        throw ConfigError("unknown command '" + name + "'");
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(ctx, wall);
    ctx.result.outputs.push_back(ctx.layout.manifest(name));
    return ctx.result;
}

}  // namespace mlagen::pipeline
